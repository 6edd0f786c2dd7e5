// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "objstyle/app.hpp"

int main(int argc, char** argv) { return objstyle::cli::run(argc, argv, std::cout, std::cerr); }
