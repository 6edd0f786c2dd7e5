// SPDX-License-Identifier: Apache-2.0
#include "../support/doctest.hpp"

#include <random>

#include "objstyle/kernels.hpp"
#include "../support/scenes.hpp"

using namespace objstyle;
namespace k = objstyle::kernels;

TEST_SUITE("kernels") {

TEST_CASE("OpenMP kernels reproduce the serial reference") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const int h = 17 + trial * 9;
        const int w = 23 + trial * 5;
        const auto a = testing::random_image(h, w, rng);
        const auto b = testing::random_image(h, w, rng);
        std::vector<std::uint8_t> mask(static_cast<size_t>(h) * w);
        for (auto& m : mask) m = static_cast<std::uint8_t>(rng() % 2);
        const k::PlanarDims dims{3, h, w};
        CHECK(k::omp::masked_abs_diff_sum(a.data(), b.data(), mask, dims) ==
              doctest::Approx(k::serial::masked_abs_diff_sum(a.data(), b.data(), mask, dims)).epsilon(1e-12));
        CHECK(k::omp::masked_sq_diff_sum(a.data(), b.data(), mask, dims) ==
              doctest::Approx(k::serial::masked_sq_diff_sum(a.data(), b.data(), mask, dims)).epsilon(1e-12));
        CHECK(k::omp::ssim_mean(a.data(), b.data(), dims, {}) ==
              doctest::Approx(k::serial::ssim_mean(a.data(), b.data(), dims, {})).epsilon(1e-12));

        std::vector<Rect> rects;
        for (int i = 0; i < 20; ++i) {
            const int s = 1 + static_cast<int>(rng() % 9);
            rects.push_back({static_cast<int>(rng() % (h - s + 1)), static_cast<int>(rng() % (w - s + 1)), s});
        }
        std::vector<std::int32_t> v1(mask.size()), v2(mask.size());
        k::serial::accumulate_votes(rects, h, w, v1);
        k::omp::accumulate_votes(rects, h, w, v2);
        CHECK(v1 == v2);
        std::vector<std::uint8_t> u1(mask.size()), u2(mask.size());
        k::serial::rasterize_union(rects, h, w, u1);
        k::omp::rasterize_union(rects, h, w, u2);
        CHECK(u1 == u2);
        for (size_t i = 0; i < u1.size(); ++i) CHECK((u1[i] != 0) == (v1[i] > 0));
    }
}

TEST_CASE("masked sums on a hand fixture") {
    const std::vector<float> a{0, 1, 2, 3, 4, 5};  // 3 channels of 1x2
    const std::vector<float> b{1, 1, 0, 3, 4, 9};
    const std::vector<std::uint8_t> mask{1, 0};
    const k::PlanarDims dims{3, 1, 2};
    CHECK(k::serial::masked_abs_diff_sum(a, b, mask, dims) == 3.0);  // |0-1| + |2-0| + |4-4|
    CHECK(k::serial::masked_sq_diff_sum(a, b, mask, dims) == 5.0);
}

TEST_CASE("SSIM of identical images is one") {
    std::mt19937_64 rng(1);
    const auto a = testing::random_image(20, 20, rng);
    CHECK(k::ssim_mean(a.data(), a.data(), {3, 20, 20}, {}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Gaussian taps are normalized and symmetric") {
    const auto g = k::gaussian_taps(11, 1.5);
    REQUIRE(g.size() == 11);
    double s = 0;
    for (double v : g) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(g[0] == doctest::Approx(g[10]));
    CHECK(g[5] > g[4]);
}

}  // TEST_SUITE
