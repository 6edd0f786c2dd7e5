// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic scenes and mock backends shared by the unit and acceptance tests.

#include <cstdint>
#include <random>
#include <string>

#include "objstyle/embedding.hpp"
#include "objstyle/image.hpp"
#include "objstyle/trainer.hpp"

namespace objstyle::testing {

inline constexpr float kGreen[3] = {0.1f, 0.6f, 0.2f};
inline constexpr float kRed[3] = {0.9f, 0.1f, 0.1f};

/// Green background with a centred red square of side `square`.
inline Image toy_scene(int side = 64, int square = 24) {
    auto img = Image::constant(side, side, kGreen[0], kGreen[1], kGreen[2]);
    auto px = img.mutable_data();
    const int lo = (side - square) / 2;
    const long plane = static_cast<long>(side) * side;
    for (int y = lo; y < lo + square; ++y) {
        for (int x = lo; x < lo + square; ++x) {
            for (int c = 0; c < 3; ++c) px[static_cast<size_t>(c * plane + y * side + x)] = kRed[c];
        }
    }
    return img;
}

inline BinaryMask toy_square_mask(int side = 64, int square = 24) {
    BinaryMask m(side, side);
    const int lo = (side - square) / 2;
    m.fill_rect({lo, lo, square});
    return m;
}

/// Mock whose "red square" points at the red patch color and "blue square"
/// at pure blue, so the target direction is a red-to-blue hue shift.
inline MockEmbedderOptions toy_mock_options() {
    MockEmbedderOptions o;
    o.text_overrides["red square"] = MockEmbedder::embedding_for_color(kRed[0], kRed[1], kRed[2]);
    o.text_overrides["blue square"] = MockEmbedder::embedding_for_color(0.1f, 0.1f, 0.9f);
    return o;
}

inline TrainConfig toy_train_config(int total_iters = 100, std::uint64_t seed = 0) {
    TrainConfig c;
    c.resolution = 64;
    c.net.input_resolution = 64;
    c.total_iters = total_iters;
    c.seed = seed;
    return c;
}

inline Image random_image(int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    auto img = Image::constant(h, w, 0, 0, 0);
    for (auto& v : img.mutable_data()) v = u(rng);
    return img;
}

}  // namespace objstyle::testing
