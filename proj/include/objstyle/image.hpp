// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace objstyle {

/// Axis-aligned square in pixel coordinates: rows [top, top+size), cols [left, left+size).
struct Rect {
    int top = 0;
    int left = 0;
    int size = 0;

    int bottom() const noexcept { return top + size; }
    int right() const noexcept { return left + size; }
    bool contains(int y, int x) const noexcept { return y >= top && y < bottom() && x >= left && x < right(); }
    bool inside(int height, int width) const noexcept {
        return size > 0 && top >= 0 && left >= 0 && bottom() <= height && right() <= width;
    }
    long area() const noexcept { return static_cast<long>(size) * size; }

    friend bool operator==(const Rect&, const Rect&) = default;
    friend auto operator<=>(const Rect&, const Rect&) = default;
};

std::string to_string(const Rect& r);

/// RGB image, channel-major float tensor of shape [3, H, W] with values in [0, 1].
/// The tensor is always contiguous float32 on the CPU.
class Image {
public:
    Image() = default;
    /// Takes ownership of a [3,H,W] tensor; converts to contiguous float32.
    explicit Image(torch::Tensor chw);

    static Image constant(int height, int width, float r, float g, float b);
    /// Builds from interleaved 8-bit RGB rows (the usual decoder layout).
    static Image from_rgb8(int height, int width, std::span<const std::uint8_t> rgb);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    bool empty() const noexcept { return !chw_.defined(); }

    const torch::Tensor& tensor() const noexcept { return chw_; }
    std::span<const float> data() const;
    std::span<float> mutable_data();

    float at(int c, int y, int x) const { return data()[(static_cast<size_t>(c) * height_ + y) * width_ + x]; }

    std::vector<std::uint8_t> to_rgb8() const;
    Image clone() const { return Image(chw_.clone()); }

    bool all_finite() const;
    /// Throws RejectedInputError when any pixel is NaN or infinite.
    void require_finite(const char* what) const;

    bool bit_equal(const Image& other) const;

private:
    torch::Tensor chw_;
    int height_ = 0;
    int width_ = 0;
};

/// H×W mask with values in {0,1}.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int height, int width, std::uint8_t fill = 0);
    BinaryMask(int height, int width, std::vector<std::uint8_t> values);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }

    std::uint8_t at(int y, int x) const { return values_[static_cast<size_t>(y) * width_ + x]; }
    void set(int y, int x, std::uint8_t v) { values_[static_cast<size_t>(y) * width_ + x] = v ? 1 : 0; }

    std::span<const std::uint8_t> values() const noexcept { return values_; }
    std::span<std::uint8_t> values() noexcept { return values_; }

    long count() const;
    bool any() const { return count() > 0; }
    void fill_rect(const Rect& r, std::uint8_t v = 1);

    BinaryMask complement() const;
    BinaryMask operator|(const BinaryMask& o) const;
    BinaryMask operator&(const BinaryMask& o) const;
    bool subset_of(const BinaryMask& o) const;

    /// [1, H, W] float tensor with 0/1 entries (broadcasts against [3,H,W]).
    torch::Tensor to_tensor(torch::ScalarType dtype = torch::kFloat32) const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint8_t> values_;
};

/// Multiplies every channel by the mask (zero-fill outside it).
Image apply_mask(const Image& img, const BinaryMask& mask);

}  // namespace objstyle
