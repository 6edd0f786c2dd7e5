// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "objstyle/embedding.hpp"
#include "objstyle/grounding.hpp"
#include "objstyle/image.hpp"
#include "objstyle/losses.hpp"
#include "objstyle/stylenet.hpp"
#include "objstyle/text.hpp"

namespace objstyle {

struct TrainConfig {
    int total_iters = 200;
    int early_iters = 20;
    double lr = 5e-4;
    int lr_halve_at = 100;
    std::string optimizer = "adam";
    std::uint64_t seed = 0;
    int resolution = 512;

    LossWeights weights;
    PrsParams prs;  // prs.tmps is also used for the per-iteration selection
    StyleNetConfig net;

    int base_patch_count = 64;  // candidates per iteration before the foreground is fixed
    int sample_patch_size = 128;  // at prs.reference_resolution
    int n_aug = 4;
    double distortion_scale = 0.5;
    /// Select output patches with their own TMPS pass instead of cropping
    /// the output at the source-selected rects.
    bool independent_tmps = false;
    std::vector<std::string> content_layers;  // empty: the backend's defaults

    std::filesystem::path log_path;         // JSON-lines; empty disables
    std::filesystem::path checkpoint_path;  // final state; the divergence snapshot goes next to it

    void validate() const;
    /// Learning rate used by the given 1-based step.
    double lr_at(int step) const { return step <= lr_halve_at ? lr : lr * 0.5; }
    int scaled_sample_size(int height, int width) const;
};

struct SceneJob {
    Image source_image;
    std::string source_text;
    std::string style_text;
    TrainConfig config;

    void validate() const;
};

struct StepRecord {
    int step = 0;
    double lr = 0.0;
    bool early = false;
    int candidates = 0;
    int selected = 0;
    std::map<std::string, double> terms;  // unweighted components
    double total = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    TextTriple texts;
    std::vector<StepRecord> steps;
    int prs_step = -1;  // step after which the pre-fixed foreground was in effect
    std::optional<BinaryMask> foreground;
    std::optional<VotingMatrix> votes;
    double wall_seconds = 0.0;
    std::filesystem::path checkpoint_path;
    std::map<std::string, double> optimizer_settings;

    std::string to_json() const;
};

struct TrainResult {
    StyleNet net;
    TrainReport report;
};

/// Per-scene optimization. Steps 1..early_iters sample candidate patches over
/// the whole image; PRS runs once at the end of step early_iters and every
/// later step samples inside the pre-fixed foreground. Each step applies TMPS
/// to the source candidates, crops the output at the selected rects and
/// minimizes the weighted objective with Adam.
///
/// Throws GroundingFailure when PRS grounds nothing and TrainingDivergence when
/// a loss term turns non-finite (after saving the last good state, if a
/// checkpoint path is configured).
TrainResult train_scene(const SceneJob& job, const ImageTextEmbedder& embedder, const PerceptualExtractor& perceptual,
                        const HeadNounParser& parser = default_parser());

/// Single forward pass of a trained network.
Image stylize(const StyleNet& net, const Image& img);

}  // namespace objstyle
