// SPDX-License-Identifier: Apache-2.0
#include "objstyle/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "objstyle/error.hpp"

namespace objstyle {

using Clock = std::chrono::steady_clock;

void TrainConfig::validate() const {
    if (total_iters < 1) throw ConfigError("total_iters must be >= 1");
    if (early_iters < 0 || early_iters > total_iters) throw ConfigError("early_iters must lie in [0, total_iters]");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
    if (lr_halve_at < 0) throw ConfigError("lr_halve_at must be >= 0");
    if (optimizer != "adam") throw ConfigError("unsupported optimizer '" + optimizer + "' (only adam)");
    if (resolution < 16 || resolution % 8 != 0) throw ConfigError("resolution must be a multiple of 8 and >= 16");
    if (base_patch_count < 1) throw ConfigError("base_patch_count must be >= 1");
    if (sample_patch_size < kMinPatchSize) throw ConfigError("sample_patch_size must be >= 8");
    if (n_aug < 0) throw ConfigError("n_aug must be >= 0");
    if (!(distortion_scale >= 0.0 && distortion_scale <= 1.0)) throw ConfigError("distortion_scale must lie in [0, 1]");
    weights.validate();
    prs.validate();
    net.validate();
}

int TrainConfig::scaled_sample_size(int height, int width) const {
    const double scale = static_cast<double>(std::min(height, width)) / prs.reference_resolution;
    const int s = std::max(kMinPatchSize, static_cast<int>(std::lround(sample_patch_size * scale)));
    return std::min({s, height, width});
}

void SceneJob::validate() const {
    config.validate();
    if (normalize_text(source_text).empty()) throw RejectedInputError("source text is empty");
    if (normalize_text(style_text).empty()) throw RejectedInputError("style text is empty");
    if (source_image.empty()) throw RejectedInputError("source image is empty");
    source_image.require_finite("source image");
    if (source_image.height() != config.resolution || source_image.width() != config.resolution) {
        throw ShapeError("source image is " + std::to_string(source_image.height()) + "x" +
                         std::to_string(source_image.width()) + " but the configured resolution is " +
                         std::to_string(config.resolution));
    }
}

std::string TrainReport::to_json() const {
    nlohmann::json j;
    j["texts"] = {{"source", texts.source}, {"style", texts.style}, {"target", texts.target}};
    j["prs_step"] = prs_step;
    j["wall_seconds"] = wall_seconds;
    j["checkpoint"] = checkpoint_path.string();
    j["optimizer"] = optimizer_settings;
    if (foreground) j["foreground_pixels"] = foreground->count();
    if (votes) j["max_votes"] = votes->max();
    auto& steps_j = j["steps"] = nlohmann::json::array();
    for (const auto& s : steps) {
        steps_j.push_back({{"step", s.step},
                           {"lr", s.lr},
                           {"phase", s.early ? "early" : "fixed"},
                           {"candidates", s.candidates},
                           {"selected", s.selected},
                           {"terms", s.terms},
                           {"total", s.total},
                           {"seconds", s.seconds}});
    }
    return j.dump(2);
}

namespace {

std::vector<Patch> crop_all(const torch::Tensor& chw, std::span<const Rect> rects) {
    std::vector<Patch> out;
    out.reserve(rects.size());
    for (const auto& r : rects) out.push_back(crop_at(chw, r));
    return out;
}

void write_log(std::ofstream& log, const StepRecord& rec) {
    if (!log.is_open()) return;
    auto line = [&](const std::string& term, double value) {
        log << nlohmann::json{{"step", rec.step}, {"term", term}, {"value", value}}.dump() << '\n';
    };
    for (const auto& [term, value] : rec.terms) line(term, value);
    line("total", rec.total);
    line("lr", rec.lr);
    line("selected", rec.selected);
    line("seconds", rec.seconds);
    log.flush();
}

}  // namespace

TrainResult train_scene(const SceneJob& job, const ImageTextEmbedder& embedder, const PerceptualExtractor& perceptual,
                        const HeadNounParser& parser) {
    job.validate();
    const auto& cfg = job.config;
    const auto t_start = Clock::now();

    const Image source = job.source_image.clone();
    const auto src = source.tensor();
    const int H = source.height();
    const int W = source.width();
    check_stylenet_input(H, W);

    TrainReport report;
    report.texts = compose_target(job.source_text, job.style_text, parser);
    const auto delta_text = text_direction(report.texts, embedder);
    const Embedding source_embedding = embedder.embed_text(report.texts.source);
    const auto content_layers = cfg.content_layers.empty() ? perceptual.content_layers() : cfg.content_layers;

    StyleNet net(cfg.net, cfg.seed);
    const auto adam = torch::optim::AdamOptions(cfg.lr);
    torch::optim::Adam optimizer(net.parameters(), adam);
    report.optimizer_settings = {{"lr", cfg.lr},
                                 {"beta1", std::get<0>(adam.betas())},
                                 {"beta2", std::get<1>(adam.betas())},
                                 {"eps", adam.eps()},
                                 {"weight_decay", adam.weight_decay()}};

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path);
        if (!log) throw ConfigError("cannot open training log " + cfg.log_path.string());
    }

    std::mt19937_64 rng(cfg.seed);
    const int sample_size = cfg.scaled_sample_size(H, W);
    BinaryMask sampling(H, W, 1);
    int per_step = cfg.base_patch_count;

    auto run_prs = [&](int after_step) {
        auto prs = prs_build_foreground(source, source_embedding, embedder, cfg.prs);
        if (!prs.foreground.any()) throw GroundingFailure(report.texts.source);
        sampling = prs.foreground;
        per_step = foreground_patch_budget(prs.foreground, cfg.prs.grid_side, cfg.base_patch_count);
        report.foreground = std::move(prs.foreground);
        report.votes = std::move(prs.votes);
        report.prs_step = after_step;
    };
    if (cfg.early_iters == 0) run_prs(0);

    std::optional<StyleNet> last_good;
    for (int step = 1; step <= cfg.total_iters; ++step) {
        const auto t_step = Clock::now();
        StepRecord rec;
        rec.step = step;
        rec.lr = cfg.lr_at(step);
        rec.early = step <= cfg.early_iters;
        for (auto& group : optimizer.param_groups()) group.options().set_lr(rec.lr);

        const auto rects = sample_foreground_rects(sampling, per_step, sample_size, rng);
        const auto aug_seed = rng();
        rec.candidates = static_cast<int>(rects.size());
        const auto src_candidates = crop_all(src, rects);
        const auto src_sel = tmps_select_embeddings(embed_patches(src_candidates, embedder), source_embedding, cfg.prs.tmps);

        optimizer.zero_grad();
        const auto out = net.forward(src);

        std::vector<int> chosen = src_sel.indices;
        if (cfg.independent_tmps && !chosen.empty()) {
            const auto out_candidates = crop_all(out.detach(), rects);
            const auto out_sel =
                tmps_select_embeddings(embed_patches(out_candidates, embedder), source_embedding, cfg.prs.tmps);
            std::vector<int> both;
            std::set_intersection(chosen.begin(), chosen.end(), out_sel.indices.begin(), out_sel.indices.end(),
                                  std::back_inserter(both));
            chosen = std::move(both);
        }
        rec.selected = static_cast<int>(chosen.size());

        std::vector<Rect> chosen_rects;
        for (int i : chosen) chosen_rects.push_back(rects[static_cast<size_t>(i)]);
        const auto masks = adaptive_masks(chosen_rects, H, W);

        LossTerms terms;
        if (chosen.empty()) {
            terms.dir = torch::zeros({}, out.options());
            terms.con = torch::zeros({}, out.options());
        } else {
            PatchPairBatch batch;
            batch.n_aug = cfg.n_aug;
            batch.src = crop_all(src, chosen_rects);
            batch.out = crop_all(out, chosen_rects);
            terms.dir = patch_directional_loss(batch, delta_text, embedder, aug_seed, cfg.distortion_scale);
            terms.con = patch_distribution_consistency_loss(batch, src, out, embedder);
        }
        terms.abp = abp_loss(out, src, masks.background);
        terms.content = content_loss(out, src, perceptual, content_layers);
        terms.tv = tv_loss(out);

        WeightedLoss loss;
        try {
            loss = total_loss(terms, cfg.weights);
        } catch (const TrainingDivergence& e) {
            std::string saved;
            if (!cfg.checkpoint_path.empty()) {
                auto path = cfg.checkpoint_path;
                path += ".last_good";
                save_checkpoint(last_good ? *last_good : net, path);
                saved = path.string();
            }
            throw TrainingDivergence(std::string(e.what()) + " at step " + std::to_string(step), saved);
        }
        last_good.emplace(net.clone());

        loss.total.backward();
        optimizer.step();
        net.set_step(step);

        rec.terms = std::move(loss.terms);
        rec.total = loss.total.item<double>();
        rec.seconds = std::chrono::duration<double>(Clock::now() - t_step).count();
        write_log(log, rec);
        report.steps.push_back(std::move(rec));

        if (step == cfg.early_iters) run_prs(step);
    }

    if (!source.bit_equal(job.source_image)) throw Error("internal: source image mutated during training");
    if (!cfg.checkpoint_path.empty()) {
        save_checkpoint(net, cfg.checkpoint_path);
        report.checkpoint_path = cfg.checkpoint_path;
    }
    report.wall_seconds = std::chrono::duration<double>(Clock::now() - t_start).count();
    return {std::move(net), std::move(report)};
}

Image stylize(const StyleNet& net, const Image& img) { return net.stylize(img); }

}  // namespace objstyle
