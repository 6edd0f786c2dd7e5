// SPDX-License-Identifier: Apache-2.0
#pragma once

// Pixel-loop kernels behind the metric harness and the voting step of region
// grounding. Each kernel exists twice: `serial::` is the plain reference kept
// for testing, `omp::` is the OpenMP version used by default. Both operate on
// channel-major planar buffers ([C][H][W]) and 0/1 masks of size H*W.

#include <cstdint>
#include <span>

#include "objstyle/image.hpp"

namespace objstyle::kernels {

struct PlanarDims {
    int channels = 3;
    int height = 0;
    int width = 0;

    long plane() const noexcept { return static_cast<long>(height) * width; }
    long elements() const noexcept { return plane() * channels; }
};

/// Gaussian-window SSIM settings (data range 1.0).
struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

namespace serial {
double masked_abs_diff_sum(std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> mask,
                           PlanarDims dims);
double masked_sq_diff_sum(std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> mask,
                          PlanarDims dims);
double ssim_mean(std::span<const float> a, std::span<const float> b, PlanarDims dims, const SsimParams& params);
void accumulate_votes(std::span<const Rect> rects, int height, int width, std::span<std::int32_t> votes);
void rasterize_union(std::span<const Rect> rects, int height, int width, std::span<std::uint8_t> mask);
}  // namespace serial

namespace omp {
double masked_abs_diff_sum(std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> mask,
                           PlanarDims dims);
double masked_sq_diff_sum(std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> mask,
                          PlanarDims dims);
double ssim_mean(std::span<const float> a, std::span<const float> b, PlanarDims dims, const SsimParams& params);
void accumulate_votes(std::span<const Rect> rects, int height, int width, std::span<std::int32_t> votes);
void rasterize_union(std::span<const Rect> rects, int height, int width, std::span<std::uint8_t> mask);
}  // namespace omp

using omp::accumulate_votes;
using omp::masked_abs_diff_sum;
using omp::masked_sq_diff_sum;
using omp::rasterize_union;
using omp::ssim_mean;

/// Normalized 1-D Gaussian taps of the given (odd) length.
std::vector<double> gaussian_taps(int window, double sigma);

}  // namespace objstyle::kernels
