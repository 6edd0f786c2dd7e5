// SPDX-License-Identifier: Apache-2.0
#include "../support/doctest.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "objstyle/error.hpp"
#include "objstyle/losses.hpp"
#include "../support/scenes.hpp"

using namespace objstyle;

namespace {

Patch solid_patch(double r, double g, double b, int size = 4) {
    auto t = torch::empty({3, size, size}, torch::kFloat64);
    t[0].fill_(r);
    t[1].fill_(g);
    t[2].fill_(b);
    return {Rect{0, 0, size}, t};
}

// ΔP of the mock for a mean-colour shift d: A · (d, 0).
std::vector<double> mock_delta(double dr, double dg, double db) {
    std::vector<double> out;
    for (const auto& row : MockEmbedder::projection()) out.push_back(row[0] * dr + row[1] * dg + row[2] * db);
    return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

torch::Tensor as_tensor(const std::vector<double>& v) { return torch::tensor(v, torch::kFloat64); }

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("directional loss hits 0, 1 and 2 exactly") {
    MockEmbedder mock;
    PatchPairBatch batch;
    batch.n_aug = 0;
    batch.src = {solid_patch(0.5, 0.5, 0.5)};
    batch.out = {solid_patch(0.7, 0.5, 0.5)};
    const auto dp = mock_delta(0.2, 0, 0);
    std::vector<double> neg(dp), orth(8, 0.0);
    for (auto& v : neg) v = -v;
    orth[1] = 1.0;  // ΔP has no second component
    CHECK(patch_directional_loss(batch, as_tensor(dp), mock, 0).item<double>() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(patch_directional_loss(batch, as_tensor(orth), mock, 0).item<double>() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(patch_directional_loss(batch, as_tensor(neg), mock, 0).item<double>() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("directional loss averages the per-pair cosines") {
    MockEmbedder mock;
    PatchPairBatch batch;
    batch.n_aug = 0;
    batch.src = {solid_patch(0.5, 0.5, 0.5), solid_patch(0.2, 0.3, 0.4), solid_patch(0.6, 0.1, 0.1),
                 solid_patch(0.3, 0.3, 0.3)};
    batch.out = {solid_patch(0.7, 0.5, 0.5), solid_patch(0.2, 0.5, 0.4), solid_patch(0.6, 0.1, 0.4),
                 solid_patch(0.1, 0.3, 0.3)};
    // ΔT parallel to the first pair's shift and orthogonal to a second constructed one.
    std::vector<double> dt(8, 0.0);
    dt[0] = 1.0;
    const std::vector<std::vector<double>> shifts{{0.2, 0, 0}, {0, 0.2, 0}, {0, 0, 0.3}, {-0.2, 0, 0}};
    double expected = 0;
    for (const auto& s : shifts) expected += 1.0 - cosine(mock_delta(s[0], s[1], s[2]), dt);
    expected /= 4;
    const double got = patch_directional_loss(batch, as_tensor(dt), mock, 0).item<double>();
    CHECK(got == doctest::Approx(expected).epsilon(1e-12));
    CHECK(got >= 0.0);
    CHECK(got <= 2.0);
}

TEST_CASE("half parallel, half orthogonal pairs give 0.5") {
    MockEmbedder mock;
    PatchPairBatch batch;
    batch.n_aug = 0;
    // Colour shifts (d, d, d) and (d, -d, 0) map to orthogonal ΔP under the mock.
    batch.src = {solid_patch(0.4, 0.4, 0.4), solid_patch(0.4, 0.4, 0.4)};
    batch.out = {solid_patch(0.5, 0.5, 0.5), solid_patch(0.5, 0.3, 0.4)};
    const auto par = mock_delta(0.1, 0.1, 0.1);
    const auto ort = mock_delta(0.1, -0.1, 0);
    CHECK(std::abs(cosine(par, ort)) < 1e-12);
    CHECK(patch_directional_loss(batch, as_tensor(par), mock, 0).item<double>() == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("augmented views stay within [0, 2] and are deterministic per seed") {
    MockEmbedder mock;
    std::mt19937_64 rng(5);
    const auto src = testing::random_image(32, 32, rng);
    const auto out = testing::random_image(32, 32, rng);
    PatchPairBatch batch;
    for (int i = 0; i < 3; ++i) {
        const Rect r{i * 8, i * 4, 16};
        batch.src.push_back(crop_at(src, r));
        batch.out.push_back(crop_at(out, r));
    }
    const TextTriple texts{"red apple", "green", "green apple"};
    const double a = patch_directional_loss(batch, texts, mock, 42).item<double>();
    const double b = patch_directional_loss(batch, texts, mock, 42).item<double>();
    CHECK(a == b);
    CHECK(a >= 0.0);
    CHECK(a <= 2.0);
    CHECK_THROWS_AS(text_direction({"apple", "x", "apple"}, mock), DegenerateInputError);
}

TEST_CASE("perspective warp with identity corners is the identity") {
    std::mt19937_64 rng(6);
    const auto img = testing::random_image(12, 12, rng).tensor();
    const PerspectiveCorners id{{{0, 0}, {11, 0}, {11, 11}, {0, 11}}};
    CHECK(torch::allclose(warp_perspective(img, id), img, 1e-5, 1e-5));
    for (int i = 0; i < 50; ++i) {
        const auto c = sample_perspective(12, 12, 0.5, rng);
        const auto w = warp_perspective(img, c);
        CHECK(w.sizes() == img.sizes());
        CHECK(torch::isfinite(w).all().item<bool>());
    }
}

TEST_CASE("jsd fixtures") {
    const std::vector<double> p{1, 0}, q{0.5, 0.5}, r{0, 1};
    // Frozen from tests/oracles/fixtures.py.
    CHECK(jsd(p, q) == doctest::Approx(0.21576146272849506).epsilon(1e-12));
    CHECK(jsd(p, p) == 0.0);
    CHECK(jsd(p, r) == doctest::Approx(0.6931469863531418).epsilon(1e-12));
    CHECK(jsd(p, r) <= std::log(2.0) + 1e-9);
    const std::vector<double> a{0.75, 0.25}, b{0.25, 0.75};
    CHECK(jsd(a, b) == doctest::Approx(0.13081203044807574).epsilon(1e-12));
    CHECK(jsd(a, b) == doctest::Approx(jsd(b, a)).epsilon(1e-15));
    CHECK_THROWS_AS(jsd(std::vector<double>{0.5, 0.6}, q), RejectedInputError);
    CHECK_THROWS_AS(jsd(std::vector<double>{1.0}, q), ShapeError);
    const auto t = jsd(torch::tensor({0.75, 0.25}, torch::kFloat64), torch::tensor({0.25, 0.75}, torch::kFloat64));
    CHECK(t.item<double>() == doctest::Approx(0.13081203044807574).epsilon(1e-12));
}

TEST_CASE("similarity profiles become distributions") {
    const auto d = similarity_distribution(torch::tensor({0.9, 0.3}, torch::kFloat64));
    CHECK(d[0].item<double>() == doctest::Approx(0.75).epsilon(1e-7));
    const auto e = similarity_distribution(torch::tensor({0.3, 0.9}, torch::kFloat64));
    CHECK(jsd(d, e).item<double>() == doctest::Approx(0.13081203044807574).epsilon(1e-6));
    const auto neg = similarity_distribution(torch::tensor({-0.5, 0.5}, torch::kFloat64));
    CHECK(neg[0].item<double>() == doctest::Approx(0.0).epsilon(1e-7));
    CHECK_THROWS_AS(similarity_distribution(torch::tensor({-0.5, 0.0}, torch::kFloat64)), DegenerateInputError);
}

TEST_CASE("consistency loss vanishes for identical images") {
    MockEmbedder mock;
    std::mt19937_64 rng(8);
    const auto src = testing::random_image(32, 32, rng).tensor();
    PatchPairBatch batch;
    for (int i = 0; i < 4; ++i) {
        batch.src.push_back(crop_at(src, Rect{i * 4, i * 4, 16}));
        batch.out.push_back(crop_at(src, Rect{i * 4, i * 4, 16}));
    }
    CHECK(patch_distribution_consistency_loss(batch, src, src, mock).item<double>() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("MS-SSIM plan adapts to small inputs") {
    const auto p64 = plan_ms_ssim(64, 64);
    CHECK(p64.window == 11);
    CHECK(p64.levels == 3);
    double s = 0;
    for (double w : p64.weights) s += w;
    CHECK(s == doctest::Approx(1.0));
    const auto p8 = plan_ms_ssim(8, 8);
    CHECK(p8.window == 7);
    CHECK(p8.levels == 1);
    CHECK(plan_ms_ssim(512, 512).levels == 5);
}

TEST_CASE("MS-SSIM against the loop oracle") {
    auto x = torch::empty({3, 32, 32}, torch::kFloat64);
    auto y = torch::empty({3, 32, 32}, torch::kFloat64);
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < 32; ++i) {
            for (int j = 0; j < 32; ++j) {
                const double xv = 0.5 + 0.4 * std::sin(0.7 * i + 1.3 * j + 2.1 * c);
                x[c][i][j] = xv;
                y[c][i][j] = std::clamp(xv + 0.15 * std::cos(1.1 * i - 0.9 * j + c), 0.0, 1.0);
            }
        }
    }
    CHECK(ms_ssim(x, y).item<double>() == doctest::Approx(0.9338274663288512).epsilon(1e-9));
    CHECK(ms_ssim(x, x).item<double>() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("background preservation loss") {
    const auto src = torch::full({3, 64, 64}, 0.2, torch::kFloat64);
    const auto out = torch::full({3, 64, 64}, 0.8, torch::kFloat64);
    const BinaryMask all(64, 64, 1);
    // 1 - MS-SSIM from the loop oracle, plus the L1 term 0.6.
    CHECK(abp_loss(out, src, all).item<double>() == doctest::Approx(0.9014127038388355).epsilon(1e-4));
    CHECK(abp_loss(src, src, all).item<double>() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(abp_loss(out, src, BinaryMask(64, 64)).item<double>() == 0.0);
    // Only background pixels matter.
    BinaryMask bg(64, 64, 1);
    bg.fill_rect({10, 10, 20}, 0);
    auto out2 = src.clone();
    out2.index_put_({torch::indexing::Slice(), torch::indexing::Slice(10, 30), torch::indexing::Slice(10, 30)}, 1.0);
    CHECK(abp_loss(out2, src, bg).item<double>() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("total variation") {
    auto stripes = torch::zeros({3, 4, 4}, torch::kFloat64);
    stripes.index_put_({torch::indexing::Slice(), torch::indexing::Slice(), torch::indexing::Slice(1, 4, 2)}, 1.0);
    CHECK(tv_loss(stripes).item<double>() == doctest::Approx(1.0));
    CHECK(tv_loss(torch::full({3, 8, 8}, 0.3, torch::kFloat64)).item<double>() == 0.0);
    auto checker = torch::zeros({3, 8, 8}, torch::kFloat64);
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) checker.index_put_({torch::indexing::Slice(), i, j}, static_cast<double>((i + j) % 2));
    }
    // The oracle sweep over all 4x4 binary images peaks at 2, reached only by the two checkerboards.
    CHECK(tv_loss(checker).item<double>() == doctest::Approx(2.0));
    std::mt19937_64 rng(9);
    for (int t = 0; t < 200; ++t) {
        auto b = torch::zeros({1, 8, 8}, torch::kFloat64);
        for (int i = 0; i < 64; ++i) b.view(-1)[i] = static_cast<double>(rng() % 2);
        CHECK(tv_loss(b).item<double>() <= 2.0 + 1e-12);
    }
}

TEST_CASE("content loss with identity features is the pixel MSE") {
    IdentityFeatures id;
    const auto a = torch::full({3, 8, 8}, 0.25, torch::kFloat64);
    const auto b = torch::full({3, 8, 8}, 0.75, torch::kFloat64);
    CHECK(content_loss(a, b, id, {"identity"}).item<double>() == doctest::Approx(0.25));
    CHECK(content_loss(a, a, id, {"identity"}).item<double>() == 0.0);
}

TEST_CASE("weighted total") {
    const auto one = torch::ones({}, torch::kFloat64);
    const LossTerms terms{one, one, one, one, one};
    const auto w = total_loss(terms, LossWeights{});
    CHECK(w.total.item<double>() == doctest::Approx(75400.002).epsilon(1e-12));
    CHECK(w.terms.at("dir") == 1.0);
    const LossTerms bad{one, one * std::numeric_limits<double>::quiet_NaN(), one, one, one};
    CHECK_THROWS_AS(total_loss(bad, LossWeights{}), TrainingDivergence);
    LossWeights neg;
    neg.tv = -1;
    CHECK_THROWS_AS(neg.validate(), ConfigError);
}

}  // TEST_SUITE
