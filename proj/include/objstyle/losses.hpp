// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "objstyle/embedding.hpp"
#include "objstyle/grounding.hpp"
#include "objstyle/image.hpp"
#include "objstyle/text.hpp"

namespace objstyle {

struct LossWeights {
    double dir = 1.5e4;
    double con = 3e4;
    double abp = 3e4;
    double content = 4e2;
    double tv = 2e-3;

    void validate() const;
};

/// Source/output patches cropped at identical rects.
struct PatchPairBatch {
    std::vector<Patch> src;
    std::vector<Patch> out;
    int n_aug = 4;  // augmented views per pair; 0 uses the raw patches once

    void validate() const;
    size_t size() const noexcept { return src.size(); }
};

/// Four destination corners (x, y) for top-left, top-right, bottom-right, bottom-left.
using PerspectiveCorners = std::array<std::array<double, 2>, 4>;

/// Draws corner displacements the way torchvision's RandomPerspective does:
/// each corner moves inward by up to distortion_scale·(side/2) pixels.
PerspectiveCorners sample_perspective(int width, int height, double distortion_scale, std::mt19937_64& rng);

/// Warps a [3,h,w] tensor so that the image corners land on `corners`
/// (bilinear, zero fill). Differentiable w.r.t. the pixels.
torch::Tensor warp_perspective(const torch::Tensor& chw, const PerspectiveCorners& corners);

/// ΔT = E_T(target) − E_T(source). Throws DegenerateInputError when ΔT = 0.
torch::Tensor text_direction(const TextTriple& texts, const ImageTextEmbedder& backend);

/// mean over pairs and views of 1 − cos(ΔP, ΔT), with
/// ΔP = E_I(aug(P_out)) − E_I(aug(P_src)) and one shared warp per (pair, view).
torch::Tensor patch_directional_loss(const PatchPairBatch& batch, const torch::Tensor& delta_text,
                                     const ImageTextEmbedder& backend, std::uint64_t rng_seed,
                                     double distortion_scale = 0.5);
torch::Tensor patch_directional_loss(const PatchPairBatch& batch, const TextTriple& texts,
                                     const ImageTextEmbedder& backend, std::uint64_t rng_seed,
                                     double distortion_scale = 0.5);

inline constexpr double kProbabilityFloor = 1e-8;

/// Jensen–Shannon divergence in nats. Inputs are floored by 1e-8 and
/// renormalized before evaluation. Bounded by ln 2.
double jsd(std::span<const double> p, std::span<const double> q);
torch::Tensor jsd(const torch::Tensor& p, const torch::Tensor& q);

/// Shifts cosine profiles by max(0, ·), floors and normalizes them into a
/// distribution. Throws DegenerateInputError when every entry is <= 0.
torch::Tensor similarity_distribution(const torch::Tensor& cosines);

/// JSD between the patch-to-image cosine profiles of source and output.
torch::Tensor patch_distribution_consistency_loss(const PatchPairBatch& batch, const torch::Tensor& src_img,
                                                  const torch::Tensor& out_img, const ImageTextEmbedder& backend);

struct MsSsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    std::vector<double> level_weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
};

/// Window size and number of pyramid levels actually used for an input of
/// the given size: the window shrinks to the largest odd size that fits and
/// levels drop until the coarsest level still holds one window.
struct MsSsimPlan {
    int window = 0;
    int levels = 0;
    std::vector<double> weights;  // renormalized to sum to 1
};
MsSsimPlan plan_ms_ssim(int height, int width, const MsSsimParams& params = {});

/// Multi-scale SSIM of [3,H,W] or [N,3,H,W] tensors, data range 1.
torch::Tensor ms_ssim(const torch::Tensor& x, const torch::Tensor& y, const MsSsimParams& params = {});

/// (1 − MS-SSIM(out⊙bg, src⊙bg)) + mean|out⊙bg − src⊙bg|; 0 when bg is empty.
torch::Tensor abp_loss(const torch::Tensor& out_img, const torch::Tensor& src_img, const BinaryMask& bg);

/// Sum over layers of the feature MSE between output and source.
torch::Tensor content_loss(const torch::Tensor& out_img, const torch::Tensor& src_img,
                           const PerceptualExtractor& backend, const std::vector<std::string>& layers);

/// mean(Δx²) + mean(Δy²) over horizontal and vertical neighbour differences.
torch::Tensor tv_loss(const torch::Tensor& img);

struct LossTerms {
    torch::Tensor dir;
    torch::Tensor con;
    torch::Tensor abp;
    torch::Tensor content;
    torch::Tensor tv;
};

struct WeightedLoss {
    torch::Tensor total;
    std::map<std::string, double> terms;  // unweighted component values
};

/// λ_dir·L_dir + λ_con·L_con + λ_abp·L_abp + λ_c·L_c + λ_tv·L_tv.
/// Throws TrainingDivergence if any component is non-finite.
WeightedLoss total_loss(const LossTerms& terms, const LossWeights& weights);

}  // namespace objstyle
