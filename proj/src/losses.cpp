// SPDX-License-Identifier: Apache-2.0
#include "objstyle/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "objstyle/error.hpp"
#include "objstyle/kernels.hpp"

namespace objstyle {

namespace F = torch::nn::functional;

void LossWeights::validate() const {
    for (double w : {dir, con, abp, content, tv}) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
    }
}

void PatchPairBatch::validate() const {
    if (src.empty()) throw RejectedInputError("patch batch is empty");
    if (src.size() != out.size()) throw ShapeError("source and output patch lists differ in length");
    for (size_t i = 0; i < src.size(); ++i) {
        if (src[i].rect != out[i].rect) {
            throw ShapeError("patch pair " + std::to_string(i) + " cropped at different rects");
        }
    }
    if (n_aug < 0) throw ConfigError("n_aug must be >= 0");
}

// ---------------------------------------------------------------------------
// perspective augmentation
// ---------------------------------------------------------------------------

PerspectiveCorners sample_perspective(int width, int height, double distortion_scale, std::mt19937_64& rng) {
    const int half_w = width / 2;
    const int half_h = height / 2;
    const int dx = static_cast<int>(distortion_scale * half_w);
    const int dy = static_cast<int>(distortion_scale * half_h);
    auto randint = [&rng](int lo, int hi_exclusive) {
        return static_cast<double>(std::uniform_int_distribution<int>(lo, hi_exclusive - 1)(rng));
    };
    PerspectiveCorners c{};
    c[0] = {randint(0, dx + 1), randint(0, dy + 1)};
    c[1] = {randint(width - dx - 1, width), randint(0, dy + 1)};
    c[2] = {randint(width - dx - 1, width), randint(height - dy - 1, height)};
    c[3] = {randint(0, dx + 1), randint(height - dy - 1, height)};
    return c;
}

namespace {

// Solves the 8×8 system for the projective map taking `from` onto `to`:
// x' = (a x + b y + c) / (g x + h y + 1), y' = (d x + e y + f) / (g x + h y + 1).
std::array<double, 8> homography(const PerspectiveCorners& from, const PerspectiveCorners& to) {
    std::array<std::array<double, 9>, 8> m{};
    for (size_t i = 0; i < 4; ++i) {
        const double x = from[i][0], y = from[i][1];
        const double u = to[i][0], v = to[i][1];
        m[2 * i] = {x, y, 1, 0, 0, 0, -u * x, -u * y, u};
        m[2 * i + 1] = {0, 0, 0, x, y, 1, -v * x, -v * y, v};
    }
    for (size_t col = 0; col < 8; ++col) {
        size_t pivot = col;
        for (size_t r = col + 1; r < 8; ++r) {
            if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
        }
        if (std::abs(m[pivot][col]) < 1e-12) throw DegenerateInputError("degenerate perspective corners");
        std::swap(m[col], m[pivot]);
        for (size_t r = 0; r < 8; ++r) {
            if (r == col) continue;
            const double f = m[r][col] / m[col][col];
            for (size_t k = col; k < 9; ++k) m[r][k] -= f * m[col][k];
        }
    }
    std::array<double, 8> h{};
    for (size_t i = 0; i < 8; ++i) h[i] = m[i][8] / m[i][i];
    return h;
}

}  // namespace

torch::Tensor warp_perspective(const torch::Tensor& chw, const PerspectiveCorners& corners) {
    if (chw.dim() != 3) throw ShapeError("warp_perspective expects [C,H,W]");
    const int h = static_cast<int>(chw.size(1));
    const int w = static_cast<int>(chw.size(2));
    // Coordinates are taken relative to the image centre, which lies inside
    // the warped quad; the origin can then never sit on the vanishing line.
    const double cx = (w - 1) / 2.0;
    const double cy = (h - 1) / 2.0;
    const PerspectiveCorners start{{{-cx, -cy}, {cx, -cy}, {cx, cy}, {-cx, cy}}};
    PerspectiveCorners dst = corners;
    for (auto& p : dst) p = {p[0] - cx, p[1] - cy};
    // Inverse map: for each output pixel find where it samples the input.
    const auto c = homography(dst, start);
    std::vector<float> grid(static_cast<size_t>(h) * w * 2);
    const double sx = w > 1 ? 2.0 / (w - 1) : 0.0;
    const double sy = h > 1 ? 2.0 / (h - 1) : 0.0;
    for (int yi = 0; yi < h; ++yi) {
        for (int xi = 0; xi < w; ++xi) {
            const double x = xi - cx;
            const double y = yi - cy;
            const double den = c[6] * x + c[7] * y + 1.0;
            const size_t o = (static_cast<size_t>(yi) * w + xi) * 2;
            // Pixels on the far side of the vanishing line sample nothing.
            if (den < 1e-9) {
                grid[o] = grid[o + 1] = -2.0f;
                continue;
            }
            const double u = (c[0] * x + c[1] * y + c[2]) / den + cx;
            const double v = (c[3] * x + c[4] * y + c[5]) / den + cy;
            grid[o] = static_cast<float>(std::clamp(u * sx - 1.0, -2.0, 2.0));
            grid[o + 1] = static_cast<float>(std::clamp(v * sy - 1.0, -2.0, 2.0));
        }
    }
    auto g = torch::from_blob(grid.data(), {1, h, w, 2}, torch::kFloat32).clone().to(chw.dtype());
    return F::grid_sample(chw.unsqueeze(0), g,
                          F::GridSampleFuncOptions().mode(torch::kBilinear).padding_mode(torch::kZeros).align_corners(true))
        .squeeze(0);
}

// ---------------------------------------------------------------------------
// directional loss
// ---------------------------------------------------------------------------

torch::Tensor text_direction(const TextTriple& texts, const ImageTextEmbedder& backend) {
    torch::NoGradGuard no_grad;
    auto d = backend.encode_text(texts.target).to(torch::kFloat64) - backend.encode_text(texts.source).to(torch::kFloat64);
    if (d.abs().max().item<double>() == 0.0) {
        throw DegenerateInputError("degenerate text direction: source and target texts embed identically");
    }
    return d;
}

torch::Tensor patch_directional_loss(const PatchPairBatch& batch, const torch::Tensor& delta_text,
                                     const ImageTextEmbedder& backend, std::uint64_t rng_seed,
                                     double distortion_scale) {
    batch.validate();
    if (delta_text.abs().max().item<double>() == 0.0) throw DegenerateInputError("degenerate text direction");
    std::mt19937_64 rng(rng_seed);
    const int views = std::max(1, batch.n_aug);
    std::vector<torch::Tensor> src_views;
    std::vector<torch::Tensor> out_views;
    for (size_t i = 0; i < batch.size(); ++i) {
        const auto& s = batch.src[i].pixels;
        const auto& o = batch.out[i].pixels;
        for (int v = 0; v < views; ++v) {
            if (batch.n_aug == 0) {
                src_views.push_back(s);
                out_views.push_back(o);
                continue;
            }
            const auto corners = sample_perspective(static_cast<int>(s.size(2)), static_cast<int>(s.size(1)),
                                                    distortion_scale, rng);
            src_views.push_back(warp_perspective(s, corners));
            out_views.push_back(warp_perspective(o, corners));
        }
    }
    torch::Tensor e_src;
    {
        torch::NoGradGuard no_grad;
        e_src = backend.encode_images(src_views);
    }
    const auto e_out = backend.encode_images(out_views);
    const auto dp = e_out - e_src.to(e_out.dtype());
    const auto cos = cosine_rows(dp, delta_text.to(dp.dtype()));
    return (1.0 - cos).mean();
}

torch::Tensor patch_directional_loss(const PatchPairBatch& batch, const TextTriple& texts,
                                     const ImageTextEmbedder& backend, std::uint64_t rng_seed,
                                     double distortion_scale) {
    return patch_directional_loss(batch, text_direction(texts, backend), backend, rng_seed, distortion_scale);
}

// ---------------------------------------------------------------------------
// JSD and distribution consistency
// ---------------------------------------------------------------------------

namespace {

void check_distribution(std::span<const double> p, const char* name) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw RejectedInputError(std::string("jsd: ") + name + " has a negative or non-finite entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw RejectedInputError(std::string("jsd: ") + name + " does not sum to 1");
}

std::vector<double> floored(std::span<const double> p) {
    std::vector<double> out(p.begin(), p.end());
    double sum = 0.0;
    for (auto& v : out) sum += (v += kProbabilityFloor);
    for (auto& v : out) v /= sum;
    return out;
}

}  // namespace

double jsd(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw ShapeError("jsd: distributions differ in length");
    if (p.empty()) throw ShapeError("jsd: empty distributions");
    check_distribution(p, "p");
    check_distribution(q, "q");
    const auto a = floored(p);
    const auto b = floored(q);
    double kl_a = 0.0;
    double kl_b = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double m = 0.5 * (a[i] + b[i]);
        kl_a += a[i] * std::log(a[i] / m);
        kl_b += b[i] * std::log(b[i] / m);
    }
    return std::max(0.0, 0.5 * kl_a + 0.5 * kl_b);
}

torch::Tensor jsd(const torch::Tensor& p, const torch::Tensor& q) {
    if (p.sizes() != q.sizes() || p.dim() != 1) throw ShapeError("jsd: expects equal-length 1-D tensors");
    auto norm = [](const torch::Tensor& t) {
        auto f = t + kProbabilityFloor;
        return f / f.sum();
    };
    const auto a = norm(p);
    const auto b = norm(q);
    const auto m = 0.5 * (a + b);
    return (0.5 * (a * (a / m).log()).sum() + 0.5 * (b * (b / m).log()).sum()).clamp_min(0.0);
}

torch::Tensor similarity_distribution(const torch::Tensor& cosines) {
    const auto shifted = cosines.clamp_min(0.0);
    if (shifted.sum().item<double>() <= 0.0) {
        throw DegenerateInputError("degenerate similarity profile: no patch is positively similar to its image");
    }
    const auto floored = shifted + kProbabilityFloor;
    return floored / floored.sum();
}

torch::Tensor patch_distribution_consistency_loss(const PatchPairBatch& batch, const torch::Tensor& src_img,
                                                  const torch::Tensor& out_img, const ImageTextEmbedder& backend) {
    batch.validate();
    std::vector<torch::Tensor> src_in;
    std::vector<torch::Tensor> out_in;
    for (size_t i = 0; i < batch.size(); ++i) {
        src_in.push_back(batch.src[i].pixels);
        out_in.push_back(batch.out[i].pixels);
    }
    src_in.push_back(src_img);
    out_in.push_back(out_img);
    torch::Tensor e_src;
    {
        torch::NoGradGuard no_grad;
        e_src = backend.encode_images(src_in);
    }
    const auto e_out = backend.encode_images(out_in);
    const auto n = static_cast<int64_t>(batch.size());
    using torch::indexing::Slice;
    const auto d_src = similarity_distribution(cosine_rows(e_src.index({Slice(0, n)}), e_src[n]).to(torch::kFloat64));
    const auto d_out = similarity_distribution(cosine_rows(e_out.index({Slice(0, n)}), e_out[n]).to(torch::kFloat64));
    return jsd(d_src, d_out).to(out_img.dtype());
}

// ---------------------------------------------------------------------------
// MS-SSIM and background preservation
// ---------------------------------------------------------------------------

MsSsimPlan plan_ms_ssim(int height, int width, const MsSsimParams& params) {
    const int side = std::min(height, width);
    if (side < 1) throw ShapeError("ms_ssim: empty image");
    if (params.level_weights.empty()) throw ConfigError("ms_ssim: no level weights");
    MsSsimPlan plan;
    plan.window = std::min(params.window, side % 2 == 1 ? side : side - 1);
    if (plan.window < 1) plan.window = 1;
    plan.levels = 1;
    const int max_levels = static_cast<int>(params.level_weights.size());
    int s = side;
    while (plan.levels < max_levels) {
        const int next = (s + 1) / 2;
        if (next < plan.window) break;
        s = next;
        ++plan.levels;
    }
    plan.weights.assign(params.level_weights.begin(), params.level_weights.begin() + plan.levels);
    const double total = std::accumulate(plan.weights.begin(), plan.weights.end(), 0.0);
    for (auto& w : plan.weights) w /= total;
    return plan;
}

namespace {

struct SsimTerms {
    torch::Tensor ssim;  // [N,C]
    torch::Tensor cs;    // [N,C]
};

SsimTerms ssim_terms(const torch::Tensor& x, const torch::Tensor& y, const torch::Tensor& win, const MsSsimParams& p) {
    const auto C = x.size(1);
    const auto k = win.size(0);
    const auto wh = win.view({1, 1, 1, k}).expand({C, 1, 1, k});
    const auto wv = win.view({1, 1, k, 1}).expand({C, 1, k, 1});
    auto filt = [&](const torch::Tensor& t) {
        return F::conv2d(F::conv2d(t, wh, F::Conv2dFuncOptions().groups(C)), wv, F::Conv2dFuncOptions().groups(C));
    };
    const double c1 = p.k1 * p.k1;
    const double c2 = p.k2 * p.k2;
    const auto mu1 = filt(x);
    const auto mu2 = filt(y);
    const auto s11 = filt(x * x) - mu1 * mu1;
    const auto s22 = filt(y * y) - mu2 * mu2;
    const auto s12 = filt(x * y) - mu1 * mu2;
    const auto cs_map = (2 * s12 + c2) / (s11 + s22 + c2);
    const auto ssim_map = ((2 * mu1 * mu2 + c1) / (mu1 * mu1 + mu2 * mu2 + c1)) * cs_map;
    return {ssim_map.flatten(2).mean(-1), cs_map.flatten(2).mean(-1)};
}

}  // namespace

torch::Tensor ms_ssim(const torch::Tensor& x_in, const torch::Tensor& y_in, const MsSsimParams& params) {
    if (x_in.sizes() != y_in.sizes()) throw ShapeError("ms_ssim: shape mismatch");
    auto x = x_in.dim() == 3 ? x_in.unsqueeze(0) : x_in;
    auto y = y_in.dim() == 3 ? y_in.unsqueeze(0) : y_in;
    if (x.dim() != 4) throw ShapeError("ms_ssim expects [C,H,W] or [N,C,H,W]");
    const auto plan = plan_ms_ssim(static_cast<int>(x.size(2)), static_cast<int>(x.size(3)), params);
    const auto taps = kernels::gaussian_taps(plan.window, params.sigma);
    const auto win = torch::tensor(std::vector<double>(taps.begin(), taps.end()), torch::kFloat64).to(x.dtype());

    torch::Tensor result;
    for (int level = 0; level < plan.levels; ++level) {
        const auto t = ssim_terms(x, y, win, params);
        const bool last = level == plan.levels - 1;
        const auto term = torch::relu(last ? t.ssim : t.cs).pow(plan.weights[static_cast<size_t>(level)]);
        result = result.defined() ? result * term : term;
        if (!last) {
            const auto pad = std::vector<int64_t>{x.size(2) % 2, x.size(3) % 2};
            x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2).padding(pad));
            y = F::avg_pool2d(y, F::AvgPool2dFuncOptions(2).padding(pad));
        }
    }
    return result.mean();
}

torch::Tensor abp_loss(const torch::Tensor& out_img, const torch::Tensor& src_img, const BinaryMask& bg) {
    if (out_img.sizes() != src_img.sizes() || out_img.dim() != 3) throw ShapeError("abp_loss: image shapes differ");
    if (bg.height() != out_img.size(1) || bg.width() != out_img.size(2)) throw ShapeError("abp_loss: mask shape mismatch");
    if (!bg.any()) return (out_img * 0.0).sum();
    const auto m = bg.to_tensor(out_img.scalar_type());
    const auto a = out_img * m;
    const auto b = src_img.detach() * m;
    return (1.0 - ms_ssim(a, b)) + (a - b).abs().mean();
}

// ---------------------------------------------------------------------------
// content, TV, combination
// ---------------------------------------------------------------------------

torch::Tensor content_loss(const torch::Tensor& out_img, const torch::Tensor& src_img,
                           const PerceptualExtractor& backend, const std::vector<std::string>& layers) {
    if (out_img.sizes() != src_img.sizes()) throw ShapeError("content_loss: image shapes differ");
    if (layers.empty()) throw ConfigError("content_loss: no layers");
    const auto out_b = out_img.dim() == 3 ? out_img.unsqueeze(0) : out_img;
    const auto src_b = src_img.dim() == 3 ? src_img.unsqueeze(0) : src_img;
    PerceptualFeatures src_f;
    {
        torch::NoGradGuard no_grad;
        src_f = backend.features(src_b, layers);
    }
    const auto out_f = backend.features(out_b, layers);
    torch::Tensor total = torch::zeros({}, out_img.options());
    for (const auto& name : layers) total = total + F::mse_loss(out_f.at(name), src_f.at(name).to(out_img.dtype()));
    return total;
}

torch::Tensor tv_loss(const torch::Tensor& img) {
    if (img.dim() < 2) throw ShapeError("tv_loss expects at least 2 dimensions");
    const auto H = img.size(-2);
    const auto W = img.size(-1);
    if (H < 2 || W < 2) throw ShapeError("tv_loss needs H, W >= 2");
    using torch::indexing::Ellipsis;
    using torch::indexing::None;
    using torch::indexing::Slice;
    const auto dh = img.index({Ellipsis, Slice(), Slice(1, None)}) - img.index({Ellipsis, Slice(), Slice(None, -1)});
    const auto dv = img.index({Ellipsis, Slice(1, None), Slice()}) - img.index({Ellipsis, Slice(None, -1), Slice()});
    return dh.pow(2).mean() + dv.pow(2).mean();
}

WeightedLoss total_loss(const LossTerms& terms, const LossWeights& weights) {
    weights.validate();
    const std::array<std::pair<const char*, const torch::Tensor*>, 5> parts{{
        {"dir", &terms.dir}, {"con", &terms.con}, {"abp", &terms.abp}, {"content", &terms.content}, {"tv", &terms.tv}}};
    const std::array<double, 5> lambdas{weights.dir, weights.con, weights.abp, weights.content, weights.tv};
    WeightedLoss out;
    for (size_t i = 0; i < parts.size(); ++i) {
        const auto& t = *parts[i].second;
        if (!t.defined()) throw RejectedInputError(std::string("loss term '") + parts[i].first + "' missing");
        const double v = t.detach().to(torch::kFloat64).item<double>();
        if (!std::isfinite(v)) {
            throw TrainingDivergence(std::string("non-finite ") + parts[i].first + " loss");
        }
        out.terms[parts[i].first] = v;
        const auto weighted = lambdas[i] * t;
        out.total = out.total.defined() ? out.total + weighted : weighted;
    }
    return out;
}

}  // namespace objstyle
