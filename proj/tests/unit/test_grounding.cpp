// SPDX-License-Identifier: Apache-2.0
#include "../support/doctest.hpp"

#include <random>
#include <set>

#include "objstyle/error.hpp"
#include "objstyle/grounding.hpp"
#include "../support/scenes.hpp"

using namespace objstyle;

namespace {

Image two_halves(int side) {
    auto img = Image::constant(side, side, testing::kGreen[0], testing::kGreen[1], testing::kGreen[2]);
    auto px = img.mutable_data();
    const long plane = static_cast<long>(side) * side;
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side / 2; ++x) {
            for (int c = 0; c < 3; ++c) px[static_cast<size_t>(c * plane + y * side + x)] = testing::kRed[c];
        }
    }
    return img;
}

}  // namespace

TEST_SUITE("region_grounding") {

TEST_CASE("TMPS on the four-patch mock fixture") {
    const float colors[4][3] = {{0.9f, 0.1f, 0.1f}, {0.7f, 0.1f, 0.15f}, {0.1f, 0.6f, 0.2f}, {0.1f, 0.1f, 0.9f}};
    std::vector<Embedding> feats;
    for (const auto& c : colors) feats.emplace_back(MockEmbedder::embedding_for_color(c[0], c[1], c[2]));
    const Embedding text(MockEmbedder::embedding_for_color(0.8f, 0.2f, 0.1f));
    TmpsParams p;
    p.top_m = 2;
    const auto r = tmps_select_embeddings(feats, text, p);
    // Step-by-step values from tests/oracles/fixtures.py.
    const double text_cos[4] = {0.992377, 0.992826, 0.587762, 0.424609};
    const double seed_cos[4] = {0.998365, 0.997692, 0.521347, 0.443465};
    for (int i = 0; i < 4; ++i) {
        CHECK(r.text_scores[static_cast<size_t>(i)] == doctest::Approx(text_cos[i]).epsilon(1e-5));
        CHECK(r.seed_scores[static_cast<size_t>(i)] == doctest::Approx(seed_cos[i]).epsilon(1e-5));
    }
    CHECK(r.seed_set == std::vector<int>{0, 1});
    CHECK(r.indices == std::vector<int>{0, 1});
}

TEST_CASE("TMPS M defaults and validation") {
    TmpsParams p;
    CHECK(p.resolve_m(3) == 3);
    CHECK(p.resolve_m(32) == 5);
    CHECK(p.resolve_m(64) == 6);
    CHECK(p.resolve_m(65) == 7);
    CHECK(p.resolve_m(243) == 24);
    CHECK(half_rank(243) == 122);
    CHECK(half_rank(4) == 2);
    p.top_m = 9;
    CHECK_THROWS_AS(p.validate(4), ConfigError);
    CHECK_THROWS_AS(TmpsParams{}.validate(0), DegenerateInputError);
}

TEST_CASE("TMPS is invariant to candidate order") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Embedding> f;
        for (int i = 0; i < 16; ++i) f.emplace_back(MockEmbedder::embedding_for_color(u(rng), u(rng), u(rng)));
        const Embedding t(MockEmbedder::embedding_for_color(u(rng), u(rng), u(rng)));
        const auto a = tmps_select_embeddings(f, t, {});
        std::vector<int> perm(16);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<Embedding> g;
        for (int i : perm) g.push_back(f[static_cast<size_t>(i)]);
        const auto b = tmps_select_embeddings(g, t, {});
        std::set<int> mapped;
        for (int j : b.indices) mapped.insert(perm[static_cast<size_t>(j)]);
        CHECK(mapped == std::set<int>(a.indices.begin(), a.indices.end()));
    }
}

TEST_CASE("PRS emits 243 candidates at the default grid") {
    const PrsParams p;
    const auto c512 = prs_candidates(512, 512, p);
    CHECK(c512.size() == 243);
    std::set<int> sizes;
    for (const auto& r : c512) {
        CHECK(r.inside(512, 512));
        sizes.insert(r.size);
    }
    CHECK(sizes == std::set<int>{64, 96, 128});
    CHECK(p.scaled_sizes(64, 64) == std::array<int, 3>{8, 12, 16});
    CHECK(p.scaled_sizes(16, 16) == std::array<int, 3>{8, 8, 8});
    // First cell centre of a 512 grid is at 28; the 128 patch is shifted to the border.
    CHECK(c512[0] == Rect{0, 0, 64});
    CHECK(c512[2] == Rect{0, 0, 128});
    CHECK(c512[4 * 27 + 4 * 3 + 1] == Rect{256 - 48, 256 - 48, 96});
}

TEST_CASE("PRS with tau 1 grounds exactly the union of the left-half patches") {
    const auto img = two_halves(64);
    MockEmbedder mock;
    PrsParams p;
    p.vote_threshold = 1;
    p.tmps.hard_floor = 0.999;
    const Embedding red(MockEmbedder::embedding_for_color(testing::kRed[0], testing::kRed[1], testing::kRed[2]));
    const auto r = prs_build_foreground(img, red, mock, p);
    BinaryMask expected(64, 64);
    for (int j : r.selection.indices) {
        const auto& rect = r.candidates[static_cast<size_t>(j)];
        CHECK(rect.right() <= 32);
        for (int y = rect.top; y < rect.bottom(); ++y) {
            for (int x = rect.left; x < rect.right(); ++x) expected.set(y, x, 1);
        }
    }
    int left_only = 0;
    for (const auto& rect : r.candidates) left_only += rect.right() <= 32 ? 1 : 0;
    CHECK(static_cast<int>(r.selection.indices.size()) == left_only);
    CHECK(r.foreground == expected);
}

TEST_CASE("raising tau shrinks the mask") {
    const auto img = testing::toy_scene(64, 24);
    MockEmbedder mock;
    const Embedding red(MockEmbedder::embedding_for_color(testing::kRed[0], testing::kRed[1], testing::kRed[2]));
    const auto r = prs_build_foreground(img, red, mock, {});
    for (int tau = 1; tau < 6; ++tau) {
        CHECK(threshold_votes(r.votes, tau + 1).subset_of(threshold_votes(r.votes, tau)));
    }
    CHECK(r.foreground.any());
}

TEST_CASE("crop_at keeps autograd and rejects rects outside the image") {
    auto t = torch::rand({3, 16, 16}).requires_grad_();
    const auto p = crop_at(t, Rect{2, 3, 8});
    CHECK(p.pixels.sizes() == torch::IntArrayRef({3, 8, 8}));
    p.pixels.sum().backward();
    CHECK(t.grad().sum().item<float>() == doctest::Approx(3 * 64));
    CHECK_THROWS_AS(crop_at(t, Rect{10, 10, 8}), ShapeError);
}

TEST_CASE("adaptive masks partition the image and the union area matches a pixel loop") {
    const std::vector<Rect> rects{{2, 2, 8}, {6, 6, 8}};
    const auto m = adaptive_masks(rects, 20, 20);
    CHECK(m.foreground.count() == 64 + 64 - 16);
    CHECK(m.foreground.count() < 128);
    CHECK((m.foreground & m.background).count() == 0);
    CHECK((m.foreground | m.background).count() == 400);
}

TEST_CASE("foreground sampling stays on the mask") {
    const auto fg = testing::toy_square_mask(64, 24);
    std::mt19937_64 rng(2);
    for (const auto& r : sample_foreground_rects(fg, 200, 16, rng)) {
        CHECK(r.inside(64, 64));
        CHECK(fg.at(r.top + 8, r.left + 8) == 1);
    }
    CHECK_THROWS_AS(sample_foreground_rects(BinaryMask(64, 64), 4, 16, rng), DegenerateInputError);
    CHECK(foreground_patch_budget(BinaryMask(64, 64, 1), 9, 64) == 64);
    CHECK(foreground_patch_budget(fg, 9, 64) >= 1);
}

TEST_CASE("a text with no positive patch similarity grounds nothing") {
    auto anti = MockEmbedder::embedding_for_color(0.5f, 0.5f, 0.5f);
    for (auto& v : anti) v = -v;
    MockEmbedder mock;
    const auto r = prs_build_foreground(testing::toy_scene(), Embedding(anti), mock, {});
    CHECK(r.selection.indices.empty());
    CHECK(r.votes.max() == 0);
    CHECK_FALSE(r.foreground.any());
}

}  // TEST_SUITE
