// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <torch/script.h>
#include <torch/torch.h>

#include "objstyle/embedding.hpp"

namespace objstyle {

/// Byte-level BPE tokenizer compatible with the CLIP text encoder.
/// Loads the merges list (plain text or gzip) shipped with CLIP.
class ClipTokenizer {
public:
    static constexpr int kContextLength = 77;

    explicit ClipTokenizer(const std::filesystem::path& merges_file);
    /// Builds from in-memory merge pairs ("a b" lines, header excluded).
    explicit ClipTokenizer(const std::vector<std::string>& merges);

    std::vector<std::int64_t> encode(const std::string& text) const;
    /// [1, 77] int64 tensor: <sot> tokens <eot> 0-padding (truncated to fit).
    torch::Tensor tokenize(const std::string& text) const;

    std::int64_t sot_token() const { return sot_; }
    std::int64_t eot_token() const { return eot_; }
    size_t vocab_size() const { return encoder_.size(); }

private:
    void build(const std::vector<std::string>& merges);
    std::vector<std::string> bpe(const std::string& token) const;

    std::unordered_map<std::string, std::int64_t> encoder_;
    std::unordered_map<std::string, int> ranks_;
    std::vector<std::string> byte_encoder_;  // 256 entries, UTF-8 strings
    std::int64_t sot_ = 0;
    std::int64_t eot_ = 0;
};

/// CLIP ViT-B/32 loaded from a TorchScript archive exposing
/// `encode_image(Tensor[N,3,224,224])` and `encode_text(Tensor[N,77] int64)`.
/// Expects `clip-vit-b32.pt` and `bpe_simple_vocab_16e6.txt[.gz]` in the weights directory.
class ClipTorchScriptEmbedder final : public ImageTextEmbedder {
public:
    static constexpr int kInputSize = 224;

    ClipTorchScriptEmbedder(const std::filesystem::path& weights_dir, std::string prompt_template = {});

    BackendDescriptor descriptor() const override;
    torch::Tensor encode_images(const std::vector<torch::Tensor>& images) const override;

    /// Resize to 224² (bicubic) and apply CLIP channel normalization.
    static torch::Tensor preprocess(const torch::Tensor& chw);

protected:
    torch::Tensor encode_text_impl(const std::string& text) const override;

private:
    mutable torch::jit::Module module_;
    std::unique_ptr<ClipTokenizer> tokenizer_;
    int embed_dim_ = 512;
};

/// VGG-19 feature stack laid out like torchvision's `vgg19().features`,
/// with ImageNet normalization applied internally. Layer names follow the
/// usual convN_M / reluN_M / poolN scheme.
class Vgg19Features final : public PerceptualExtractor {
public:
    /// Randomly initialized network (shape checks, tests).
    Vgg19Features();
    /// Loads `vgg19.pt` (TorchScript of vgg19().features) from `weights_dir`.
    explicit Vgg19Features(const std::filesystem::path& weights_dir);

    std::string name() const override { return "vgg19"; }
    std::vector<std::string> layer_names() const override { return names_; }
    std::vector<std::string> content_layers() const override { return {"conv4_2", "conv5_2"}; }
    std::vector<std::string> style_layers() const override { return {"relu1_1", "relu2_1", "relu3_1", "relu4_1"}; }

    using PerceptualExtractor::features;
    PerceptualFeatures features(const torch::Tensor& batch, const std::vector<std::string>& layers) const override;

    /// Copies parameters named "<index>.weight" / "<index>.bias" from a TorchScript module.
    void load_from(const torch::jit::Module& module);
    torch::nn::Sequential& network() { return net_; }

private:
    mutable torch::nn::Sequential net_;
    std::vector<std::string> names_;
};

/// DISTS score from a TorchScript archive `dists.pt` whose forward(x, y)
/// takes two [N,3,H,W] images in [0,1] and returns the per-image distance.
class DistsMetric {
public:
    explicit DistsMetric(const std::filesystem::path& weights_dir);
    double operator()(const torch::Tensor& x, const torch::Tensor& y) const;

private:
    mutable torch::jit::Module module_;
};

struct BackendConfig {
    std::string image_backend = "mock";      // "mock" | "clip-vit-b32"
    std::string perceptual_backend = "mock";  // "mock" | "vgg19"
    std::string weights_dir;                  // empty: $OBJSTYLE_WEIGHTS or ~/.cache/objstyle
    std::string prompt_template;
    MockEmbedderOptions mock;
};

std::filesystem::path resolve_weights_dir(const std::string& configured);

/// Throw BackendLoadError when weights are missing or unreadable and
/// ConfigError for unknown backend names.
std::shared_ptr<const ImageTextEmbedder> make_embedder(const BackendConfig& config);
std::shared_ptr<const PerceptualExtractor> make_perceptual(const BackendConfig& config);
/// nullptr when the DISTS archive is not available.
std::shared_ptr<const DistsMetric> try_make_dists(const BackendConfig& config);

}  // namespace objstyle
