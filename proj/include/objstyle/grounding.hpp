// SPDX-License-Identifier: Apache-2.0
#pragma once

// Text-matched patch selection, grid-voting foreground estimation and the
// per-iteration adaptive masks.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "objstyle/embedding.hpp"
#include "objstyle/image.hpp"

namespace objstyle {

inline constexpr int kMinPatchSize = 8;

/// A square crop plus where it came from. `pixels` is [3,size,size] and keeps
/// the autograd history of the tensor it was cropped from.
struct Patch {
    Rect rect;
    torch::Tensor pixels;
};

/// Exact crop (a view when the source is contiguous). Throws ShapeError when
/// the rect is not fully inside the image.
Patch crop_at(const torch::Tensor& chw, const Rect& rect);
Patch crop_at(const Image& img, const Rect& rect);

struct TmpsParams {
    /// Number of patches most similar to the source text that seed the
    /// averaged feature. 0 selects max(5, round(0.1·K)) capped at K.
    int top_m = 0;
    double hard_floor = 0.8;

    int resolve_m(int k) const;
    void validate(int k) const;
};

/// round(x/2) with halves rounded up, i.e. ceil(k/2) for integers.
inline int half_rank(int k) { return (k + 1) / 2; }

struct TmpsResult {
    std::vector<int> indices;             // ascending candidate indices
    std::vector<double> selected_scores;  // ŝ_j for each selected j
    std::vector<double> text_scores;      // s_i for every candidate
    std::vector<double> seed_scores;      // ŝ_j for every candidate
    std::vector<int> seed_set;            // I: ascending indices with s_i >= M-th largest
};

/// Core selection over precomputed embeddings:
///   s_i = cos(f_i, t); I = {i : s_i >= M-th largest s}; f_avg = mean_{i∈I} f_i;
///   ŝ_j = cos(f_j, f_avg); keep j with ŝ_j >= round(K/2)-th largest ŝ and ŝ_j > floor.
/// Membership depends only on values, so it is invariant to candidate order.
/// When no candidate has a positive cosine with the text the selection is
/// empty and the seed scores are all zero.
TmpsResult tmps_select_embeddings(std::span<const Embedding> features, const Embedding& text, const TmpsParams& params);

struct PatchSelection {
    std::vector<int> indices;
    std::vector<Patch> patches;
    std::vector<double> similarities;  // ŝ_j of each selected patch
};

PatchSelection tmps_select(const std::vector<Patch>& candidates, const Embedding& text_embedding,
                           const ImageTextEmbedder& backend, const TmpsParams& params);
PatchSelection tmps_select(const std::vector<Patch>& candidates, const std::string& source_text,
                           const ImageTextEmbedder& backend, const TmpsParams& params);

/// Embeddings of patches without autograd (float32).
std::vector<Embedding> embed_patches(const std::vector<Patch>& patches, const ImageTextEmbedder& backend);

struct PrsParams {
    int grid_side = 9;
    std::array<int, 3> patch_sizes{64, 96, 128};  // at reference_resolution
    int reference_resolution = 512;
    int vote_threshold = 2;  // τ
    TmpsParams tmps;

    void validate() const;
    /// Patch sizes scaled by min(H,W)/reference_resolution, rounded, at least kMinPatchSize.
    std::array<int, 3> scaled_sizes(int height, int width) const;
};

struct VotingMatrix {
    int height = 0;
    int width = 0;
    std::vector<std::int32_t> counts;

    std::int32_t at(int y, int x) const { return counts[static_cast<size_t>(y) * width + x]; }
    std::int32_t max() const;
};

/// grid_side² cells, three squares per cell centred on the cell centre and
/// shifted inward where they would cross the border. Order: row, column, size.
std::vector<Rect> prs_candidates(int height, int width, const PrsParams& params);

BinaryMask threshold_votes(const VotingMatrix& votes, int tau);
VotingMatrix vote(std::span<const Rect> selected, int height, int width);

struct PrsResult {
    BinaryMask foreground;
    VotingMatrix votes;
    std::vector<Rect> candidates;
    TmpsResult selection;
};

PrsResult prs_build_foreground(const Image& img, const Embedding& text_embedding, const ImageTextEmbedder& backend,
                               const PrsParams& params);
PrsResult prs_build_foreground(const Image& img, const std::string& source_text, const ImageTextEmbedder& backend,
                               const PrsParams& params);

/// Rects of side `size` whose centre pixel (top + size/2, left + size/2) is a
/// uniformly drawn foreground pixel. Pixels that cannot host a full patch are
/// only used when no foreground pixel can; those patches are shifted inside.
/// Throws DegenerateInputError for an all-zero mask.
std::vector<Rect> sample_foreground_rects(const BinaryMask& fg, int n, int size, std::mt19937_64& rng);
std::vector<Patch> sample_foreground_patches(const Image& img, const BinaryMask& fg, int n, int size,
                                             std::uint64_t rng_seed);

struct AdaptiveMasks {
    BinaryMask foreground;  // union of rects
    BinaryMask background;  // complement
};

AdaptiveMasks adaptive_masks(std::span<const Rect> rects, int height, int width);
AdaptiveMasks adaptive_masks(const std::vector<Patch>& patches, int height, int width);

/// Per-iteration patch budget after the foreground is fixed:
/// ceil(fraction of grid cells that are mostly foreground × base_count), at least 1.
int foreground_patch_budget(const BinaryMask& fg, int grid_side, int base_count);

}  // namespace objstyle
