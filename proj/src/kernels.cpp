// SPDX-License-Identifier: Apache-2.0
#include "objstyle/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <omp.h>

#include "objstyle/error.hpp"

namespace objstyle::kernels {

namespace {

void check_planar(std::span<const float> a, std::span<const float> b, PlanarDims dims) {
    if (a.size() != static_cast<size_t>(dims.elements()) || b.size() != a.size()) {
        throw ShapeError("planar buffer size does not match dimensions");
    }
}

void check_masked(std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> mask,
                  PlanarDims dims) {
    check_planar(a, b, dims);
    if (mask.size() != static_cast<size_t>(dims.plane())) throw ShapeError("mask size does not match plane");
}

int effective_window(int window, int height, int width) {
    int w = std::min({window, height, width});
    if (w % 2 == 0) --w;
    if (w < 1) throw ShapeError("image too small for SSIM");
    return w;
}

struct SsimConstants {
    double c1;
    double c2;
};

inline double ssim_value(double mx, double my, double sxx, double syy, double sxy, SsimConstants c) {
    const double vx = sxx - mx * mx;
    const double vy = syy - my * my;
    const double cov = sxy - mx * my;
    return ((2.0 * mx * my + c.c1) * (2.0 * cov + c.c2)) / ((mx * mx + my * my + c.c1) * (vx + vy + c.c2));
}

void check_votes(std::span<const Rect> rects, int height, int width, size_t out_size) {
    if (out_size != static_cast<size_t>(height) * width) throw ShapeError("vote buffer size mismatch");
    for (const auto& r : rects) {
        if (!r.inside(height, width)) throw ShapeError("rect " + to_string(r) + " outside image");
    }
}

}  // namespace

std::vector<double> gaussian_taps(int window, double sigma) {
    std::vector<double> taps(static_cast<size_t>(window));
    const double centre = (window - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < window; ++i) {
        const double d = i - centre;
        taps[static_cast<size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        sum += taps[static_cast<size_t>(i)];
    }
    for (auto& t : taps) t /= sum;
    return taps;
}

// ---------------------------------------------------------------------------
// serial reference
// ---------------------------------------------------------------------------
namespace serial {

double masked_abs_diff_sum(std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> mask,
                           PlanarDims dims) {
    check_masked(a, b, mask, dims);
    double sum = 0.0;
    for (int c = 0; c < dims.channels; ++c) {
        for (long p = 0; p < dims.plane(); ++p) {
            const long i = c * dims.plane() + p;
            const double m = mask[static_cast<size_t>(p)];
            sum += std::abs(static_cast<double>(a[i]) * m - static_cast<double>(b[i]) * m);
        }
    }
    return sum;
}

double masked_sq_diff_sum(std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> mask,
                          PlanarDims dims) {
    check_masked(a, b, mask, dims);
    double sum = 0.0;
    for (int c = 0; c < dims.channels; ++c) {
        for (long p = 0; p < dims.plane(); ++p) {
            const long i = c * dims.plane() + p;
            const double m = mask[static_cast<size_t>(p)];
            const double d = static_cast<double>(a[i]) * m - static_cast<double>(b[i]) * m;
            sum += d * d;
        }
    }
    return sum;
}

double ssim_mean(std::span<const float> a, std::span<const float> b, PlanarDims dims, const SsimParams& params) {
    check_planar(a, b, dims);
    const int win = effective_window(params.window, dims.height, dims.width);
    const auto taps = gaussian_taps(win, params.sigma);
    const SsimConstants k{params.k1 * params.k1, params.k2 * params.k2};
    const int oh = dims.height - win + 1;
    const int ow = dims.width - win + 1;

    double total = 0.0;
    for (int c = 0; c < dims.channels; ++c) {
        const float* pa = a.data() + c * dims.plane();
        const float* pb = b.data() + c * dims.plane();
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int i = 0; i < win; ++i) {
                    for (int j = 0; j < win; ++j) {
                        const double w = taps[static_cast<size_t>(i)] * taps[static_cast<size_t>(j)];
                        const long idx = static_cast<long>(y + i) * dims.width + (x + j);
                        const double va = pa[idx];
                        const double vb = pb[idx];
                        mx += w * va;
                        my += w * vb;
                        sxx += w * va * va;
                        syy += w * vb * vb;
                        sxy += w * va * vb;
                    }
                }
                total += ssim_value(mx, my, sxx, syy, sxy, k);
            }
        }
    }
    return total / (static_cast<double>(oh) * ow * dims.channels);
}

void accumulate_votes(std::span<const Rect> rects, int height, int width, std::span<std::int32_t> votes) {
    check_votes(rects, height, width, votes.size());
    for (const auto& r : rects) {
        for (int y = r.top; y < r.bottom(); ++y) {
            for (int x = r.left; x < r.right(); ++x) {
                ++votes[static_cast<size_t>(y) * width + x];
            }
        }
    }
}

void rasterize_union(std::span<const Rect> rects, int height, int width, std::span<std::uint8_t> mask) {
    check_votes(rects, height, width, mask.size());
    std::fill(mask.begin(), mask.end(), 0);
    for (const auto& r : rects) {
        for (int y = r.top; y < r.bottom(); ++y) {
            for (int x = r.left; x < r.right(); ++x) {
                mask[static_cast<size_t>(y) * width + x] = 1;
            }
        }
    }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP
// ---------------------------------------------------------------------------
namespace omp {

double masked_abs_diff_sum(std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> mask,
                           PlanarDims dims) {
    check_masked(a, b, mask, dims);
    const long plane = dims.plane();
    const int W = dims.width;
    double sum = 0.0;
#pragma omp parallel for collapse(2) reduction(+ : sum) schedule(static)
    for (int c = 0; c < dims.channels; ++c) {
        for (int y = 0; y < dims.height; ++y) {
            const float* pa = a.data() + c * plane + static_cast<long>(y) * W;
            const float* pb = b.data() + c * plane + static_cast<long>(y) * W;
            const std::uint8_t* pm = mask.data() + static_cast<long>(y) * W;
            for (int x = 0; x < W; ++x) {
                const double m = pm[x];
                sum += std::abs(static_cast<double>(pa[x]) * m - static_cast<double>(pb[x]) * m);
            }
        }
    }
    return sum;
}

double masked_sq_diff_sum(std::span<const float> a, std::span<const float> b, std::span<const std::uint8_t> mask,
                          PlanarDims dims) {
    check_masked(a, b, mask, dims);
    const long plane = dims.plane();
    const int W = dims.width;
    double sum = 0.0;
#pragma omp parallel for collapse(2) reduction(+ : sum) schedule(static)
    for (int c = 0; c < dims.channels; ++c) {
        for (int y = 0; y < dims.height; ++y) {
            const float* pa = a.data() + c * plane + static_cast<long>(y) * W;
            const float* pb = b.data() + c * plane + static_cast<long>(y) * W;
            const std::uint8_t* pm = mask.data() + static_cast<long>(y) * W;
            for (int x = 0; x < W; ++x) {
                const double m = pm[x];
                const double d = static_cast<double>(pa[x]) * m - static_cast<double>(pb[x]) * m;
                sum += d * d;
            }
        }
    }
    return sum;
}

double ssim_mean(std::span<const float> a, std::span<const float> b, PlanarDims dims, const SsimParams& params) {
    check_planar(a, b, dims);
    const int win = effective_window(params.window, dims.height, dims.width);
    const auto taps = gaussian_taps(win, params.sigma);
    const SsimConstants k{params.k1 * params.k1, params.k2 * params.k2};
    const int H = dims.height;
    const int W = dims.width;
    const int oh = H - win + 1;
    const int ow = W - win + 1;

    // Separable filtering: horizontal pass into [5][H][ow], vertical pass fused with the SSIM map.
    std::vector<double> horiz(static_cast<size_t>(5) * H * ow);
    std::vector<double> row_sums(static_cast<size_t>(dims.channels) * oh, 0.0);
    const size_t hplane = static_cast<size_t>(H) * ow;

    for (int c = 0; c < dims.channels; ++c) {
        const float* pa = a.data() + c * dims.plane();
        const float* pb = b.data() + c * dims.plane();

#pragma omp parallel for schedule(static)
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < ow; ++x) {
                double s[5] = {0, 0, 0, 0, 0};
                for (int j = 0; j < win; ++j) {
                    const double w = taps[static_cast<size_t>(j)];
                    const long idx = static_cast<long>(y) * W + x + j;
                    const double va = pa[idx];
                    const double vb = pb[idx];
                    s[0] += w * va;
                    s[1] += w * vb;
                    s[2] += w * va * va;
                    s[3] += w * vb * vb;
                    s[4] += w * va * vb;
                }
                const size_t o = static_cast<size_t>(y) * ow + x;
                for (int q = 0; q < 5; ++q) horiz[q * hplane + o] = s[q];
            }
        }

#pragma omp parallel for schedule(static)
        for (int y = 0; y < oh; ++y) {
            double acc = 0.0;
            for (int x = 0; x < ow; ++x) {
                double s[5] = {0, 0, 0, 0, 0};
                for (int i = 0; i < win; ++i) {
                    const double w = taps[static_cast<size_t>(i)];
                    const size_t o = static_cast<size_t>(y + i) * ow + x;
                    for (int q = 0; q < 5; ++q) s[q] += w * horiz[q * hplane + o];
                }
                acc += ssim_value(s[0], s[1], s[2], s[3], s[4], k);
            }
            row_sums[static_cast<size_t>(c) * oh + y] = acc;
        }
    }
    double total = 0.0;
    for (double v : row_sums) total += v;
    return total / (static_cast<double>(oh) * ow * dims.channels);
}

void accumulate_votes(std::span<const Rect> rects, int height, int width, std::span<std::int32_t> votes) {
    check_votes(rects, height, width, votes.size());
    // Row-parallel: each thread owns whole rows, so no two threads touch the same cell.
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
        std::int32_t* row = votes.data() + static_cast<size_t>(y) * width;
        for (const auto& r : rects) {
            if (y < r.top || y >= r.bottom()) continue;
            for (int x = r.left; x < r.right(); ++x) ++row[x];
        }
    }
}

void rasterize_union(std::span<const Rect> rects, int height, int width, std::span<std::uint8_t> mask) {
    check_votes(rects, height, width, mask.size());
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
        std::uint8_t* row = mask.data() + static_cast<size_t>(y) * width;
        std::fill_n(row, width, std::uint8_t{0});
        for (const auto& r : rects) {
            if (y < r.top || y >= r.bottom()) continue;
            std::fill(row + r.left, row + r.right(), std::uint8_t{1});
        }
    }
}

}  // namespace omp

}  // namespace objstyle::kernels
