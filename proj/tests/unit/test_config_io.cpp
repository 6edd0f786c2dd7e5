// SPDX-License-Identifier: Apache-2.0
#include "../support/doctest.hpp"

#include <filesystem>
#include <sstream>

#include "objstyle/config.hpp"
#include "objstyle/error.hpp"
#include "objstyle/io.hpp"
#include "../support/scenes.hpp"

using namespace objstyle;
namespace fs = std::filesystem;

TEST_SUITE("config_io") {

TEST_CASE("key-value parsing") {
    std::istringstream in(
        "# comment\n"
        "train.lr = 1e-3   # trailing\n"
        "\n"
        "mock.text[a = b] = 1,0,0\n"
        "backend.prompt_template = a photo of {}#1\n");
    const auto kv = parse_key_values(in);
    CHECK(kv.at("train.lr") == "1e-3");
    CHECK(kv.at("mock.text[a = b]") == "1,0,0");
    CHECK(kv.at("backend.prompt_template") == "a photo of {}#1");
    std::istringstream bad("just words\n");
    CHECK_THROWS_AS(parse_key_values(bad), ConfigError);
}

TEST_CASE("applying keys and round-tripping the echo") {
    AppConfig cfg;
    apply_key_values(cfg, {{"train.total_iters", "50"},
                           {"train.resolution", "64"},
                           {"loss.lambda_tv", "0.5"},
                           {"prs.patch_sizes", "32, 48, 80"},
                           {"train.independent_tmps", "true"},
                           {"train.content_layers", "conv4_2,conv5_2"},
                           {"mock.text[Red Square]", "0.9,0.1,0.1"}});
    CHECK(cfg.train.total_iters == 50);
    CHECK(cfg.train.net.input_resolution == 64);
    CHECK(cfg.train.weights.tv == 0.5);
    CHECK(cfg.train.prs.patch_sizes == std::array<int, 3>{32, 48, 80});
    CHECK(cfg.train.independent_tmps);
    CHECK(cfg.train.content_layers == std::vector<std::string>{"conv4_2", "conv5_2"});
    CHECK(cfg.backends.mock.text_overrides.at("red square") == MockEmbedder::embedding_for_color(0.9f, 0.1f, 0.1f));

    AppConfig again;
    apply_key_values(again, to_key_values(cfg));
    CHECK(to_key_values(again) == to_key_values(cfg));
    CHECK(config_hash(again) == config_hash(cfg));
    CHECK(config_hash(cfg) != config_hash(AppConfig{}));
    CHECK(config_hash(cfg).size() == 16);

    CHECK_THROWS_AS(apply_key_value(cfg, "train.nope", "1"), ConfigError);
    CHECK_THROWS_AS(apply_key_value(cfg, "train.total_iters", "ten"), ConfigError);
    CHECK_THROWS_AS(apply_key_value(cfg, "prs.patch_sizes", "1,2"), ConfigError);
}

TEST_CASE("defaults mirror the training defaults") {
    std::map<std::string, std::string> d;
    for (const auto& [k, v] : default_key_values()) d[k] = v;
    CHECK(d.at("train.total_iters") == "200");
    CHECK(d.at("train.early_iters") == "20");
    CHECK(d.at("train.lr_halve_at") == "100");
    CHECK(d.at("loss.lambda_dir") == "15000");
    CHECK(d.at("prs.tau") == "2");
}

TEST_CASE("image and mask files") {
    const auto dir = fs::temp_directory_path() / "objstyle_io_test";
    fs::create_directories(dir);
    const auto img = testing::toy_scene(32, 8);
    save_png(img, dir / "a.png");
    const auto back = load_image(dir / "a.png");
    CHECK(back.to_rgb8() == img.to_rgb8());
    const auto m = testing::toy_square_mask(32, 8);
    save_mask(m, dir / "m.png");
    CHECK(load_mask(dir / "m.png") == m);
    CHECK(resize_mask(m, 64, 64).count() == 4 * m.count());
    CHECK(resize_image(img, 16, 16).height() == 16);
    CHECK_THROWS_AS(load_image(dir / "missing.png"), RejectedInputError);
    const auto grid = make_grid({{img, "a"}, {img, "b"}, {resize_image(img, 16, 32), "c"}}, 32);
    CHECK(grid.width() == 2 * (32 + 8));
    CHECK(grid.height() == 2 * (32 + 28 + 8));
    fs::remove_all(dir);
}

}  // TEST_SUITE
