// SPDX-License-Identifier: Apache-2.0
#include "../support/doctest.hpp"

#include <cmath>

#include <json.hpp>

#include "objstyle/error.hpp"
#include "objstyle/metrics.hpp"
#include "../support/scenes.hpp"

using namespace objstyle;

namespace {

// The 4x4 hand fixture of tests/oracles/fixtures.py: left half background.
EvalTriple hand_fixture() {
    auto src = torch::empty({3, 4, 4});
    auto out = torch::empty({3, 4, 4});
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
                const double s = (c * 16 + i * 4 + j) / 64.0;
                src[c][i][j] = s;
                out[c][i][j] = s + (j < 2 ? 0.01 * (i + 1) * (c + 1) : 0.5);
            }
        }
    }
    BinaryMask fg(4, 4);
    for (int i = 0; i < 4; ++i) {
        fg.set(i, 2, 1);
        fg.set(i, 3, 1);
    }
    return {"hand", Image(src), Image(out.clamp(0, 1)), fg, "blue square"};
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("hand fixture values") {
    const auto t = hand_fixture();
    // Oracle values; the foreground offsets of 0.5 are clamped, which the background ignores.
    CHECK(l1_b(t) == doctest::Approx(0.05000000000000001).epsilon(1e-6));
    CHECK(psnr_b(t) == doctest::Approx(24.559319556497243).epsilon(1e-5));
    IdentityFeatures id;
    CHECK(sty_b(t, id) == doctest::Approx(0.0016376595051377063).epsilon(1e-5));
}

TEST_CASE("constant 16/255 offset on the background") {
    auto src = testing::toy_scene(32, 8);
    auto out = Image((src.tensor() * 0.5 + 16.0 / 255.0).clamp(0, 1));
    src = Image(src.tensor() * 0.5);
    const EvalTriple t{"off", src, out, testing::toy_square_mask(32, 8), "x"};
    CHECK(psnr_b(t) == doctest::Approx(20 * std::log10(255.0 / 16.0)).epsilon(1e-5));
    CHECK(l1_b(t) == doctest::Approx(16.0 / 255.0).epsilon(1e-6));
}

TEST_CASE("identity triple") {
    const auto img = testing::toy_scene(32, 8);
    const EvalTriple t{"id", img, img.clone(), testing::toy_square_mask(32, 8), "blue square"};
    MockEmbedder mock(testing::toy_mock_options());
    IdentityFeatures id;
    const auto r = evaluate(t, {&mock, &id, nullptr});
    CHECK(r.l1_b == 0.0);
    CHECK(r.psnr_b == kPsnrCapDb);
    CHECK(r.ssim_b == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.con_b == 0.0);
    CHECK(r.con_f == 0.0);
    CHECK(r.sty_b == 0.0);
    CHECK_FALSE(r.dists_b.has_value());
    CHECK(std::isfinite(r.sim_f));
}

TEST_CASE("sim_f against a direct cosine") {
    const auto img = testing::toy_scene(32, 8);
    const auto fg = testing::toy_square_mask(32, 8);
    MockEmbedder mock(testing::toy_mock_options());
    const EvalTriple t{"s", img, img, fg, "blue square"};
    const auto masked = apply_mask(img, fg);
    const double expected = cosine_similarity(mock.embed_text("blue square"), mock.embed_image(masked));
    CHECK(sim_f(t, mock) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("degenerate and mismatched inputs") {
    const auto img = testing::toy_scene(32, 8);
    EvalTriple t{"e", img, img, BinaryMask(32, 32), "x"};
    MockEmbedder mock;
    CHECK_THROWS_AS(sim_f(t, mock), DegenerateInputError);
    t.fg_gt = BinaryMask(32, 32, 1);
    CHECK_THROWS_AS(l1_b(t), DegenerateInputError);
    t.fg_gt = BinaryMask(16, 16);
    CHECK_THROWS_AS(t.validate(), ShapeError);
}

TEST_CASE("batch evaluation keeps failing rows out of the mean") {
    const auto img = testing::toy_scene(32, 8);
    MockEmbedder mock;
    IdentityFeatures id;
    std::vector<EvalTriple> rows;
    rows.push_back({"ok", img, img, testing::toy_square_mask(32, 8), "red square"});
    rows.push_back({"bad", img, img, BinaryMask(32, 32), "red square"});
    const auto b = evaluate_batch(rows, {&mock, &id, nullptr});
    CHECK(b.rows.size() == 2);
    CHECK(b.valid_rows == 1);
    CHECK(b.dists_rows == 0);
    CHECK(b.rows[1].error.find("degenerate mask") != std::string::npos);
    CHECK(b.mean.l1_b == 0.0);
    const auto j = nlohmann::json::parse(b.to_json());
    CHECK(j["mean"]["dists_b"] == "skipped");
    CHECK(b.to_csv().find("bad,") != std::string::npos);
    CHECK_THROWS_AS(evaluate_batch({}, {&mock, &id, nullptr}), RejectedInputError);
}

}  // TEST_SUITE
