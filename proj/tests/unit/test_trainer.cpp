// SPDX-License-Identifier: Apache-2.0
#include "../support/doctest.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "objstyle/error.hpp"
#include "objstyle/trainer.hpp"
#include "../support/scenes.hpp"

using namespace objstyle;
namespace fs = std::filesystem;

TEST_SUITE("trainer") {

TEST_CASE("learning-rate schedule") {
    const TrainConfig c;
    CHECK(c.lr_at(1) == 5e-4);
    CHECK(c.lr_at(100) == 5e-4);
    CHECK(c.lr_at(101) == 2.5e-4);
    CHECK(c.lr_at(200) == 2.5e-4);
    CHECK(c.scaled_sample_size(512, 512) == 128);
    CHECK(c.scaled_sample_size(64, 64) == 16);
}

TEST_CASE("config validation") {
    TrainConfig c = testing::toy_train_config();
    CHECK_NOTHROW(c.validate());
    c.early_iters = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = testing::toy_train_config();
    c.optimizer = "sgd-with-magic";
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = testing::toy_train_config();
    c.total_iters = 10;
    CHECK_THROWS_AS(c.validate(), ConfigError);  // PRS would never run
}

TEST_CASE("scene validation") {
    SceneJob job{testing::toy_scene(), "red square", "blue", testing::toy_train_config()};
    CHECK_NOTHROW(job.validate());
    job.source_image = testing::toy_scene(32, 8);
    CHECK_THROWS_AS(job.validate(), ShapeError);
    job = {testing::toy_scene(), "  ", "blue", testing::toy_train_config()};
    CHECK_THROWS_AS(job.validate(), RejectedInputError);
}

TEST_CASE("short run: schedule, report, log and determinism") {
    const auto dir = fs::temp_directory_path() / "objstyle_trainer_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const MockEmbedder mock(testing::toy_mock_options());
    const IdentityFeatures id;
    SceneJob job{testing::toy_scene(), "red square", "blue", testing::toy_train_config(24, 3)};
    job.config.log_path = dir / "log.jsonl";
    job.config.checkpoint_path = dir / "net.ckpt";
    const auto a = train_scene(job, mock, id);
    REQUIRE(a.report.steps.size() == 24);
    CHECK(a.report.prs_step == 20);
    CHECK(a.report.texts.target == "blue square");
    CHECK(a.report.steps[0].early);
    CHECK_FALSE(a.report.steps[20].early);
    for (const auto& s : a.report.steps) {
        CHECK(std::isfinite(s.total));
        CHECK(s.terms.size() == 5);
    }
    REQUIRE(a.report.foreground.has_value());
    CHECK(a.report.foreground->any());
    CHECK(fs::exists(job.config.checkpoint_path));

    std::ifstream log(job.config.log_path);
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("step"));
        CHECK(j.contains("term"));
        CHECK(j.contains("value"));
        ++lines;
    }
    CHECK(lines >= 24 * 5);

    job.config.log_path.clear();
    job.config.checkpoint_path.clear();
    const auto b = train_scene(job, mock, id);
    CHECK(a.net.stylize(job.source_image).bit_equal(b.net.stylize(job.source_image)));
    const auto report = nlohmann::json::parse(a.report.to_json());
    CHECK(report["prs_step"] == 20);
    CHECK(report["steps"].size() == 24);
    fs::remove_all(dir);
}

TEST_CASE("grounding failure aborts the job") {
    auto opts = testing::toy_mock_options();
    auto anti = MockEmbedder::embedding_for_color(0.5f, 0.5f, 0.5f);
    for (auto& v : anti) v = -v;
    opts.text_overrides["zebra"] = anti;
    const MockEmbedder mock(opts);
    const IdentityFeatures id;
    const SceneJob job{testing::toy_scene(), "zebra", "blue", testing::toy_train_config(22)};
    CHECK_THROWS_AS(train_scene(job, mock, id), GroundingFailure);
}

}  // TEST_SUITE
