// SPDX-License-Identifier: Apache-2.0
#include "objstyle/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "objstyle/error.hpp"

namespace objstyle {

// ---------------------------------------------------------------------------
// Embedding / cosine
// ---------------------------------------------------------------------------

Embedding::Embedding(std::vector<float> values) : values_(std::move(values)) {
    if (values_.empty()) throw ShapeError("embedding must have dimension >= 1");
    for (float v : values_) {
        if (!std::isfinite(v)) throw RejectedInputError("embedding contains non-finite entries");
    }
}

Embedding Embedding::from_tensor(const torch::Tensor& t) {
    auto flat = t.detach().to(torch::kCPU, torch::kFloat32).contiguous().reshape({-1});
    const float* p = flat.data_ptr<float>();
    return Embedding(std::vector<float>(p, p + flat.numel()));
}

double Embedding::norm() const {
    double s = 0.0;
    for (float v : values_) s += static_cast<double>(v) * v;
    return std::sqrt(s);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("cosine_similarity: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine_similarity: zero-norm vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
    std::vector<double> da(a.values().begin(), a.values().end());
    std::vector<double> db(b.values().begin(), b.values().end());
    return cosine_similarity(da, db);
}

torch::Tensor cosine_rows(const torch::Tensor& a, const torch::Tensor& b, double eps) {
    auto bb = b.dim() == 1 ? b.unsqueeze(0) : b;
    auto dot = (a * bb).sum(-1);
    auto denom = a.norm(2, -1) * bb.norm(2, -1);
    return dot / denom.clamp_min(eps);
}

std::string normalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// ImageTextEmbedder
// ---------------------------------------------------------------------------

ImageTextEmbedder::ImageTextEmbedder(std::string prompt_template) : template_(std::move(prompt_template)) {}

torch::Tensor ImageTextEmbedder::encode_text(const std::string& text) const {
    if (normalize_text(text).empty()) throw RejectedInputError("text must be non-empty");
    std::string prompt = text;
    if (!template_.empty()) {
        prompt = template_;
        auto pos = prompt.find("{}");
        if (pos == std::string::npos) {
            prompt += " " + text;
        } else {
            prompt.replace(pos, 2, text);
        }
    }
    return encode_text_impl(prompt);
}

Embedding ImageTextEmbedder::embed_image(const Image& img) const {
    if (img.empty()) throw RejectedInputError("embed_image: empty image");
    img.require_finite("embed_image");
    torch::NoGradGuard no_grad;
    auto out = encode_images({img.tensor()});
    return Embedding::from_tensor(out[0]);
}

Embedding ImageTextEmbedder::embed_text(const std::string& text) const {
    torch::NoGradGuard no_grad;
    return Embedding::from_tensor(encode_text(text));
}

// ---------------------------------------------------------------------------
// PerceptualExtractor
// ---------------------------------------------------------------------------

PerceptualFeatures PerceptualExtractor::features(const Image& img, const std::vector<std::string>& layers) const {
    return features(img.tensor().unsqueeze(0), layers);
}

void PerceptualExtractor::check_layers(const std::vector<std::string>& layers) const {
    const auto known = layer_names();
    for (const auto& l : layers) {
        if (std::find(known.begin(), known.end(), l) == known.end()) {
            throw ConfigError("perceptual backend '" + name() + "' has no layer '" + l + "'");
        }
    }
}

PerceptualFeatures IdentityFeatures::features(const torch::Tensor& batch, const std::vector<std::string>& layers) const {
    check_layers(layers);
    PerceptualFeatures out;
    for (const auto& l : layers) out.emplace(l, batch);
    return out;
}

// ---------------------------------------------------------------------------
// MockEmbedder
// ---------------------------------------------------------------------------

namespace {

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

MockEmbedder::MockEmbedder(MockEmbedderOptions options) : ImageTextEmbedder(std::move(options.prompt_template)) {
    for (auto& [key, vec] : options.text_overrides) {
        if (vec.size() != kDim) throw ConfigError("mock text override for '" + key + "' must have 8 entries");
        overrides_.emplace(normalize_text(key), std::move(vec));
    }
}

const std::array<std::array<float, 4>, MockEmbedder::kDim>& MockEmbedder::projection() {
    static const std::array<std::array<float, 4>, kDim> A = {{
        {1.0f, 0.0f, 0.0f, 0.2f},
        {0.0f, 1.0f, 0.0f, 0.2f},
        {0.0f, 0.0f, 1.0f, 0.2f},
        {0.5f, -0.5f, 0.0f, 0.0f},
        {0.0f, 0.5f, -0.5f, 0.0f},
        {-0.5f, 0.0f, 0.5f, 0.0f},
        {0.3f, 0.3f, 0.3f, -0.1f},
        {0.0f, 0.0f, 0.0f, 0.3f},
    }};
    return A;
}

std::vector<float> MockEmbedder::embedding_for_color(float r, float g, float b) {
    std::vector<float> out(kDim);
    const auto& A = projection();
    for (int k = 0; k < kDim; ++k) {
        const auto& row = A[static_cast<size_t>(k)];
        out[static_cast<size_t>(k)] = row[0] * r + row[1] * g + row[2] * b + row[3];
    }
    return out;
}

std::vector<float> MockEmbedder::token_vector(std::string_view token) {
    const std::uint64_t h = fnv1a64(token);
    std::vector<float> out(kDim);
    for (int k = 0; k < kDim; ++k) {
        const std::uint64_t z = splitmix64(h + static_cast<std::uint64_t>(k + 1) * 0x9e3779b97f4a7c15ULL);
        const double u = static_cast<double>(z >> 11) * 0x1.0p-53;
        out[static_cast<size_t>(k)] = static_cast<float>(2.0 * u - 1.0);
    }
    return out;
}

BackendDescriptor MockEmbedder::descriptor() const { return {"mock", kDim, kInputSize, true}; }

torch::Tensor MockEmbedder::encode_images(const std::vector<torch::Tensor>& images) const {
    if (images.empty()) throw RejectedInputError("encode_images: empty batch");
    std::vector<torch::Tensor> means;
    means.reserve(images.size());
    for (const auto& img : images) {
        if (img.dim() != 3 || img.size(0) != 3) throw ShapeError("encode_images: expected [3,h,w] tensors");
        means.push_back(img.mean({1, 2}));
    }
    auto colors = torch::stack(means);  // [N,3]
    const auto dtype = colors.scalar_type();
    auto homog = torch::cat({colors, torch::ones({colors.size(0), 1}, colors.options())}, 1);  // [N,4]

    const auto& A = projection();
    auto proj = torch::empty({kDim, 4}, torch::kFloat32);
    for (int k = 0; k < kDim; ++k) {
        for (int j = 0; j < 4; ++j) proj[k][j] = A[static_cast<size_t>(k)][static_cast<size_t>(j)];
    }
    return torch::matmul(homog, proj.to(dtype).t());
}

torch::Tensor MockEmbedder::encode_text_impl(const std::string& text) const {
    const auto norm = normalize_text(text);
    std::vector<float> acc(kDim, 0.0f);
    if (auto it = overrides_.find(norm); it != overrides_.end()) {
        acc = it->second;
    } else {
        std::istringstream ss(norm);
        std::string tok;
        while (ss >> tok) {
            auto v = token_vector(tok);
            for (int k = 0; k < kDim; ++k) acc[static_cast<size_t>(k)] += v[static_cast<size_t>(k)];
        }
    }
    return torch::tensor(acc, torch::kFloat32);
}

}  // namespace objstyle
