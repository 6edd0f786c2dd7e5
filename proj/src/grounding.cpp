// SPDX-License-Identifier: Apache-2.0
#include "objstyle/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "objstyle/error.hpp"
#include "objstyle/kernels.hpp"

namespace objstyle {

Patch crop_at(const torch::Tensor& chw, const Rect& rect) {
    if (chw.dim() != 3) throw ShapeError("crop_at expects a [C,H,W] tensor");
    const int H = static_cast<int>(chw.size(1));
    const int W = static_cast<int>(chw.size(2));
    if (!rect.inside(H, W)) {
        throw ShapeError("crop rect " + to_string(rect) + " outside " + std::to_string(H) + "x" + std::to_string(W));
    }
    using torch::indexing::Slice;
    return {rect, chw.index({Slice(), Slice(rect.top, rect.bottom()), Slice(rect.left, rect.right())})};
}

Patch crop_at(const Image& img, const Rect& rect) { return crop_at(img.tensor(), rect); }

// ---------------------------------------------------------------------------
// TMPS
// ---------------------------------------------------------------------------

int TmpsParams::resolve_m(int k) const {
    if (top_m > 0) return top_m;
    const int m = std::max(5, (k + 5) / 10);  // round(0.1k), halves up
    return std::min(m, k);
}

void TmpsParams::validate(int k) const {
    if (k < 1) throw DegenerateInputError("TMPS needs at least one candidate patch");
    const int m = resolve_m(k);
    if (m < 1 || m > k) {
        throw ConfigError("TMPS top_m must satisfy 1 <= M <= K (M=" + std::to_string(m) + ", K=" + std::to_string(k) + ")");
    }
    if (!(hard_floor > 0.0 && hard_floor < 1.0)) throw ConfigError("TMPS hard_floor must lie in (0, 1)");
}

namespace {

std::vector<double> to_double(const Embedding& e) { return {e.values().begin(), e.values().end()}; }

double nth_largest(std::vector<double> values, int n) {
    std::sort(values.begin(), values.end(), std::greater<>());
    return values[static_cast<size_t>(n - 1)];
}

}  // namespace

TmpsResult tmps_select_embeddings(std::span<const Embedding> features, const Embedding& text, const TmpsParams& params) {
    const int K = static_cast<int>(features.size());
    params.validate(K);
    const int M = params.resolve_m(K);

    const auto t = to_double(text);
    std::vector<std::vector<double>> f;
    f.reserve(features.size());
    for (const auto& e : features) {
        if (e.dim() != text.dim()) throw ShapeError("TMPS: patch/text embedding dimension mismatch");
        if (e.norm() == 0.0) throw DegenerateInputError("TMPS: zero-norm patch embedding");
        f.push_back(to_double(e));
    }
    if (text.norm() == 0.0) throw DegenerateInputError("TMPS: zero-norm text embedding");

    TmpsResult r;
    r.text_scores.resize(static_cast<size_t>(K));
    for (int i = 0; i < K; ++i) r.text_scores[static_cast<size_t>(i)] = cosine_similarity(f[static_cast<size_t>(i)], t);

    r.seed_scores.assign(static_cast<size_t>(K), 0.0);
    if (*std::max_element(r.text_scores.begin(), r.text_scores.end()) <= 0.0) return r;  // text matches no patch

    const double m_th = nth_largest(r.text_scores, M);
    std::vector<double> avg(t.size(), 0.0);
    for (int i = 0; i < K; ++i) {
        if (r.text_scores[static_cast<size_t>(i)] >= m_th) {
            r.seed_set.push_back(i);
            for (size_t d = 0; d < avg.size(); ++d) avg[d] += f[static_cast<size_t>(i)][d];
        }
    }
    for (auto& v : avg) v /= static_cast<double>(r.seed_set.size());
    if (std::all_of(avg.begin(), avg.end(), [](double v) { return v == 0.0; })) {
        throw DegenerateInputError("TMPS: averaged seed feature has zero norm");
    }

    for (int j = 0; j < K; ++j) r.seed_scores[static_cast<size_t>(j)] = cosine_similarity(f[static_cast<size_t>(j)], avg);

    const double k_th = nth_largest(r.seed_scores, half_rank(K));
    for (int j = 0; j < K; ++j) {
        const double s = r.seed_scores[static_cast<size_t>(j)];
        if (s >= k_th && s > params.hard_floor) {
            r.indices.push_back(j);
            r.selected_scores.push_back(s);
        }
    }
    return r;
}

std::vector<Embedding> embed_patches(const std::vector<Patch>& patches, const ImageTextEmbedder& backend) {
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> pix;
    pix.reserve(patches.size());
    for (const auto& p : patches) pix.push_back(p.pixels.detach().to(torch::kFloat32));
    auto feats = backend.encode_images(pix);
    std::vector<Embedding> out;
    out.reserve(patches.size());
    for (int64_t i = 0; i < feats.size(0); ++i) out.push_back(Embedding::from_tensor(feats[i]));
    return out;
}

PatchSelection tmps_select(const std::vector<Patch>& candidates, const Embedding& text_embedding,
                           const ImageTextEmbedder& backend, const TmpsParams& params) {
    if (candidates.empty()) throw DegenerateInputError("TMPS needs at least one candidate patch");
    const auto feats = embed_patches(candidates, backend);
    const auto r = tmps_select_embeddings(feats, text_embedding, params);
    PatchSelection sel;
    sel.indices = r.indices;
    sel.similarities = r.selected_scores;
    for (int j : r.indices) sel.patches.push_back(candidates[static_cast<size_t>(j)]);
    return sel;
}

PatchSelection tmps_select(const std::vector<Patch>& candidates, const std::string& source_text,
                           const ImageTextEmbedder& backend, const TmpsParams& params) {
    return tmps_select(candidates, backend.embed_text(source_text), backend, params);
}

// ---------------------------------------------------------------------------
// PRS
// ---------------------------------------------------------------------------

void PrsParams::validate() const {
    if (grid_side < 1) throw ConfigError("PRS grid_side must be >= 1");
    if (vote_threshold < 1) throw ConfigError("PRS vote threshold must be >= 1");
    if (reference_resolution < 1) throw ConfigError("PRS reference_resolution must be >= 1");
    const auto& s = patch_sizes;
    if (s[0] == s[1] || s[1] == s[2] || s[0] == s[2]) throw ConfigError("PRS needs three distinct patch sizes");
    for (int v : s) {
        if (v < kMinPatchSize) throw ConfigError("PRS patch sizes must be >= 8");
    }
}

std::array<int, 3> PrsParams::scaled_sizes(int height, int width) const {
    const double scale = static_cast<double>(std::min(height, width)) / reference_resolution;
    std::array<int, 3> out{};
    for (size_t k = 0; k < 3; ++k) {
        out[k] = std::max(kMinPatchSize, static_cast<int>(std::lround(patch_sizes[k] * scale)));
    }
    return out;
}

std::int32_t VotingMatrix::max() const {
    return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
}

std::vector<Rect> prs_candidates(int height, int width, const PrsParams& params) {
    params.validate();
    const auto sizes = params.scaled_sizes(height, width);
    const int largest = *std::max_element(sizes.begin(), sizes.end());
    if (largest > height || largest > width) {
        throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) +
                         " cannot host PRS patches of size " + std::to_string(largest));
    }
    std::vector<Rect> rects;
    rects.reserve(static_cast<size_t>(3 * params.grid_side * params.grid_side));
    for (int gi = 0; gi < params.grid_side; ++gi) {
        const int cy = static_cast<int>((gi + 0.5) * height / params.grid_side);
        for (int gj = 0; gj < params.grid_side; ++gj) {
            const int cx = static_cast<int>((gj + 0.5) * width / params.grid_side);
            for (int s : sizes) {
                const int top = std::clamp(cy - s / 2, 0, height - s);
                const int left = std::clamp(cx - s / 2, 0, width - s);
                rects.push_back({top, left, s});
            }
        }
    }
    return rects;
}

VotingMatrix vote(std::span<const Rect> selected, int height, int width) {
    VotingMatrix v{height, width, std::vector<std::int32_t>(static_cast<size_t>(height) * width, 0)};
    kernels::accumulate_votes(selected, height, width, v.counts);
    return v;
}

BinaryMask threshold_votes(const VotingMatrix& votes, int tau) {
    if (tau < 1) throw ConfigError("vote threshold must be >= 1");
    BinaryMask m(votes.height, votes.width);
    auto out = m.values();
    for (size_t i = 0; i < votes.counts.size(); ++i) out[i] = votes.counts[i] >= tau ? 1 : 0;
    return m;
}

PrsResult prs_build_foreground(const Image& img, const Embedding& text_embedding, const ImageTextEmbedder& backend,
                               const PrsParams& params) {
    img.require_finite("prs_build_foreground");
    PrsResult r;
    r.candidates = prs_candidates(img.height(), img.width(), params);
    std::vector<Patch> patches;
    patches.reserve(r.candidates.size());
    for (const auto& rect : r.candidates) patches.push_back(crop_at(img, rect));
    r.selection = tmps_select_embeddings(embed_patches(patches, backend), text_embedding, params.tmps);
    std::vector<Rect> chosen;
    for (int j : r.selection.indices) chosen.push_back(r.candidates[static_cast<size_t>(j)]);
    r.votes = vote(chosen, img.height(), img.width());
    r.foreground = threshold_votes(r.votes, params.vote_threshold);
    return r;
}

PrsResult prs_build_foreground(const Image& img, const std::string& source_text, const ImageTextEmbedder& backend,
                               const PrsParams& params) {
    return prs_build_foreground(img, backend.embed_text(source_text), backend, params);
}

// ---------------------------------------------------------------------------
// sampling and masks
// ---------------------------------------------------------------------------

std::vector<Rect> sample_foreground_rects(const BinaryMask& fg, int n, int size, std::mt19937_64& rng) {
    if (n < 1) throw RejectedInputError("patch count must be >= 1");
    const int H = fg.height();
    const int W = fg.width();
    if (size < kMinPatchSize || size > H || size > W) {
        throw ShapeError("patch size " + std::to_string(size) + " does not fit a " + std::to_string(H) + "x" +
                         std::to_string(W) + " image");
    }
    std::vector<int> hosting;
    std::vector<int> any;
    const int half = size / 2;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (!fg.at(y, x)) continue;
            const int idx = y * W + x;
            any.push_back(idx);
            if (y - half >= 0 && y - half + size <= H && x - half >= 0 && x - half + size <= W) hosting.push_back(idx);
        }
    }
    if (any.empty()) throw DegenerateInputError("foreground mask is empty");
    const auto& pool = hosting.empty() ? any : hosting;
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    std::vector<Rect> rects;
    rects.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int idx = pool[pick(rng)];
        const int y = idx / W;
        const int x = idx % W;
        rects.push_back({std::clamp(y - half, 0, H - size), std::clamp(x - half, 0, W - size), size});
    }
    return rects;
}

std::vector<Patch> sample_foreground_patches(const Image& img, const BinaryMask& fg, int n, int size,
                                             std::uint64_t rng_seed) {
    if (fg.height() != img.height() || fg.width() != img.width()) throw ShapeError("mask/image shape mismatch");
    std::mt19937_64 rng(rng_seed);
    std::vector<Patch> out;
    for (const auto& r : sample_foreground_rects(fg, n, size, rng)) out.push_back(crop_at(img, r));
    return out;
}

AdaptiveMasks adaptive_masks(std::span<const Rect> rects, int height, int width) {
    AdaptiveMasks m{BinaryMask(height, width), BinaryMask(height, width)};
    kernels::rasterize_union(rects, height, width, m.foreground.values());
    m.background = m.foreground.complement();
    return m;
}

AdaptiveMasks adaptive_masks(const std::vector<Patch>& patches, int height, int width) {
    std::vector<Rect> rects;
    rects.reserve(patches.size());
    for (const auto& p : patches) rects.push_back(p.rect);
    return adaptive_masks(rects, height, width);
}

int foreground_patch_budget(const BinaryMask& fg, int grid_side, int base_count) {
    const int H = fg.height();
    const int W = fg.width();
    int fg_cells = 0;
    for (int gi = 0; gi < grid_side; ++gi) {
        const int y0 = gi * H / grid_side;
        const int y1 = (gi + 1) * H / grid_side;
        for (int gj = 0; gj < grid_side; ++gj) {
            const int x0 = gj * W / grid_side;
            const int x1 = (gj + 1) * W / grid_side;
            long on = 0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) on += fg.at(y, x);
            }
            const long area = static_cast<long>(y1 - y0) * (x1 - x0);
            if (area > 0 && 2 * on >= area) ++fg_cells;
        }
    }
    const double ratio = static_cast<double>(fg_cells) / (grid_side * grid_side);
    return std::max(1, static_cast<int>(std::ceil(ratio * base_count - 1e-12)));
}

}  // namespace objstyle
