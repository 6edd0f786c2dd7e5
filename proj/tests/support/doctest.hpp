// SPDX-License-Identifier: Apache-2.0
#pragma once

// LibTorch's logging header defines its own CHECK macro; drop it so the
// doctest assertion of the same name is the one in effect.
#undef CHECK
#include <doctest.h>
