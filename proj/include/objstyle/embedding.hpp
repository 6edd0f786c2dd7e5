// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "objstyle/image.hpp"

namespace objstyle {

struct BackendDescriptor {
    std::string name;
    int embed_dim = 0;
    int image_input_size = 0;  // square side the backend resizes to
    bool differentiable = false;
};

/// Fixed-dimension embedding vector. Only ever compared by cosine similarity.
class Embedding {
public:
    Embedding() = default;
    explicit Embedding(std::vector<float> values);
    /// Copies a 1-D tensor (any float dtype).
    static Embedding from_tensor(const torch::Tensor& t);

    int dim() const noexcept { return static_cast<int>(values_.size()); }
    std::span<const float> values() const noexcept { return values_; }
    float operator[](int i) const { return values_[static_cast<size_t>(i)]; }
    double norm() const;

    friend bool operator==(const Embedding&, const Embedding&) = default;

private:
    std::vector<float> values_;
};

/// Cosine of the angle between two embeddings, computed in double precision.
/// Throws ShapeError on dimension mismatch and DegenerateInputError when either
/// vector has zero norm.
double cosine_similarity(const Embedding& a, const Embedding& b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Row-wise differentiable cosine between [N,D] and [D] (or [N,D]) tensors.
/// Denominators are floored at `eps`.
torch::Tensor cosine_rows(const torch::Tensor& a, const torch::Tensor& b, double eps = 1e-8);

/// Joint image–text embedder contract. Implementations own their image
/// preprocessing (resize + normalization) and are read-only after construction.
class ImageTextEmbedder {
public:
    explicit ImageTextEmbedder(std::string prompt_template = {});
    virtual ~ImageTextEmbedder() = default;

    virtual BackendDescriptor descriptor() const = 0;

    /// Encodes a batch of [3,h,w] tensors (sizes may differ) into an [N,D]
    /// tensor of the inputs' dtype. Differentiable when descriptor() says so.
    virtual torch::Tensor encode_images(const std::vector<torch::Tensor>& images) const = 0;

    /// [D] tensor for `text` after optional prompt templating. Rejects empty text.
    torch::Tensor encode_text(const std::string& text) const;

    /// Non-differentiable convenience wrappers with input validation.
    Embedding embed_image(const Image& img) const;
    Embedding embed_text(const std::string& text) const;

    const std::string& prompt_template() const noexcept { return template_; }

protected:
    virtual torch::Tensor encode_text_impl(const std::string& text) const = 0;

private:
    std::string template_;
};

using PerceptualFeatures = std::map<std::string, torch::Tensor>;

/// Perceptual feature extractor contract (content and style statistics).
class PerceptualExtractor {
public:
    virtual ~PerceptualExtractor() = default;

    virtual std::string name() const = 0;
    virtual std::vector<std::string> layer_names() const = 0;
    virtual std::vector<std::string> content_layers() const = 0;
    virtual std::vector<std::string> style_layers() const = 0;

    /// Features of an [N,3,H,W] batch for exactly the requested layers.
    /// Throws ConfigError on unknown layer names.
    virtual PerceptualFeatures features(const torch::Tensor& batch, const std::vector<std::string>& layers) const = 0;

    /// Convenience for a single [3,H,W] image.
    PerceptualFeatures features(const Image& img, const std::vector<std::string>& layers) const;

protected:
    void check_layers(const std::vector<std::string>& layers) const;
};

/// Deterministic mock embedder.
///
/// Image side: the embedding is A · (mean R, mean G, mean B, 1) with the fixed
/// 8×4 matrix returned by projection(). A constant gray image (0.5, 0.5, 0.5)
/// therefore maps to (0.7, 0.7, 0.7, 0, 0, 0, 0.35, 0.3).
///
/// Text side: the text is lowercased and split on whitespace; each token is
/// hashed with 64-bit FNV-1a, and component k of the token vector is
/// u(splitmix64(hash + (k+1)·0x9E3779B97F4A7C15)) mapped to [-1, 1), where
/// u(z) = (z >> 11) · 2^-53. The text vector is the sum of its token vectors.
/// Individual phrases can be pinned to explicit vectors via text_overrides
/// (keys are matched after the same normalization).
struct MockEmbedderOptions {
    std::map<std::string, std::vector<float>> text_overrides;
    std::string prompt_template;
};

class MockEmbedder final : public ImageTextEmbedder {
public:
    static constexpr int kDim = 8;
    static constexpr int kInputSize = 32;

    explicit MockEmbedder(MockEmbedderOptions options = {});

    static const std::array<std::array<float, 4>, kDim>& projection();
    /// A · (r, g, b, 1): the embedding of any image whose mean color is (r, g, b).
    static std::vector<float> embedding_for_color(float r, float g, float b);
    static std::vector<float> token_vector(std::string_view token);

    BackendDescriptor descriptor() const override;
    torch::Tensor encode_images(const std::vector<torch::Tensor>& images) const override;

protected:
    torch::Tensor encode_text_impl(const std::string& text) const override;

private:
    std::map<std::string, std::vector<float>> overrides_;
};

/// Mock perceptual backend: a single layer named "identity" returning the input.
class IdentityFeatures final : public PerceptualExtractor {
public:
    std::string name() const override { return "mock"; }
    std::vector<std::string> layer_names() const override { return {"identity"}; }
    std::vector<std::string> content_layers() const override { return {"identity"}; }
    std::vector<std::string> style_layers() const override { return {"identity"}; }
    using PerceptualExtractor::features;
    PerceptualFeatures features(const torch::Tensor& batch, const std::vector<std::string>& layers) const override;
};

/// Lowercases and collapses whitespace runs to single spaces, trimming both ends.
std::string normalize_text(std::string_view text);

}  // namespace objstyle
