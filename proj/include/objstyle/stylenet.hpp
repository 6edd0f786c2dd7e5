// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "objstyle/image.hpp"

namespace objstyle {

/// Widths of the three downsample and three upsample stages.
struct StyleNetConfig {
    std::vector<int> down_channels{16, 32, 64};
    std::vector<int> up_channels{64, 32, 16};
    int input_resolution = 512;

    void validate() const;
    friend bool operator==(const StyleNetConfig&, const StyleNetConfig&) = default;
};

/// Conv3x3 -> InstanceNorm(affine) -> LeakyReLU(0.2), optionally strided.
class ConvBlockImpl : public torch::nn::Module {
public:
    ConvBlockImpl(int in_ch, int out_ch, int stride);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Conv2d conv_{nullptr};
    torch::nn::InstanceNorm2d norm_{nullptr};
};
TORCH_MODULE(ConvBlock);

/// Input pixels are clamped to [eps, 1 - eps] before taking their logit.
inline constexpr double kInputLogitEps = 1e-3;

/// Three-level U-Net. Downsampling uses stride-2 blocks; upsampling is
/// nearest ×2 followed by concatenation with the matching skip and a block.
/// The last skip is the input image itself. A 3×3 head adds a residual to
/// logit(input) and a sigmoid maps the sum back to [0, 1], so a network whose
/// head outputs zero reproduces its input.
class UNetImpl : public torch::nn::Module {
public:
    explicit UNetImpl(const StyleNetConfig& config);
    /// x: [N,3,H,W] with H, W divisible by 8 and >= 16.
    torch::Tensor forward(const torch::Tensor& x);

private:
    std::vector<ConvBlock> down_;
    std::vector<ConvBlock> up_;
    torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(UNet);

/// Trainable stylization network plus its optimizer step counter.
class StyleNet {
public:
    StyleNet(const StyleNetConfig& config, std::uint64_t seed);

    const StyleNetConfig& config() const noexcept { return config_; }
    UNet& module() noexcept { return net_; }
    const UNet& module() const noexcept { return net_; }

    std::int64_t step() const noexcept { return step_; }
    void set_step(std::int64_t s) noexcept { step_ = s; }

    std::vector<torch::Tensor> parameters() const { return net_->parameters(); }
    std::vector<std::pair<std::string, torch::Tensor>> named_parameters() const;
    std::int64_t parameter_count() const;

    /// Differentiable forward on a [3,H,W] tensor; returns [3,H,W].
    torch::Tensor forward(const torch::Tensor& chw) const;
    /// Inference without autograd.
    Image stylize(const Image& img) const;

    StyleNet clone() const;

private:
    StyleNetConfig config_;
    mutable UNet net_{nullptr};
    std::int64_t step_ = 0;
};

/// Throws ShapeError unless both sides are divisible by 8 and at least 16.
void check_stylenet_input(int height, int width);

/// Single-file checkpoint: magic + version, config echo, step, named float32
/// tensors, trailing FNV-1a checksum. Reloading reproduces outputs bit-exactly.
void save_checkpoint(const StyleNet& net, const std::filesystem::path& path);
StyleNet load_checkpoint(const std::filesystem::path& path);

}  // namespace objstyle
