// SPDX-License-Identifier: Apache-2.0
#include "objstyle/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "objstyle/error.hpp"

namespace objstyle {

std::string to_string(const Rect& r) {
    return "(top=" + std::to_string(r.top) + ", left=" + std::to_string(r.left) + ", size=" + std::to_string(r.size) + ")";
}

Image::Image(torch::Tensor chw) {
    if (!chw.defined() || chw.dim() != 3 || chw.size(0) != 3) {
        throw ShapeError("image tensor must have shape [3,H,W]");
    }
    chw_ = chw.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    height_ = static_cast<int>(chw_.size(1));
    width_ = static_cast<int>(chw_.size(2));
}

Image Image::constant(int height, int width, float r, float g, float b) {
    auto t = torch::empty({3, height, width}, torch::kFloat32);
    t[0].fill_(r);
    t[1].fill_(g);
    t[2].fill_(b);
    return Image(std::move(t));
}

Image Image::from_rgb8(int height, int width, std::span<const std::uint8_t> rgb) {
    if (rgb.size() != static_cast<size_t>(height) * width * 3) {
        throw ShapeError("rgb buffer size does not match dimensions");
    }
    auto t = torch::empty({3, height, width}, torch::kFloat32);
    float* out = t.data_ptr<float>();
    const size_t plane = static_cast<size_t>(height) * width;
    for (size_t p = 0; p < plane; ++p) {
        for (size_t c = 0; c < 3; ++c) {
            out[c * plane + p] = static_cast<float>(rgb[p * 3 + c]) / 255.0f;
        }
    }
    return Image(std::move(t));
}

std::span<const float> Image::data() const {
    if (empty()) return {};
    return {chw_.data_ptr<float>(), static_cast<size_t>(chw_.numel())};
}

std::span<float> Image::mutable_data() {
    if (empty()) return {};
    return {chw_.data_ptr<float>(), static_cast<size_t>(chw_.numel())};
}

std::vector<std::uint8_t> Image::to_rgb8() const {
    const size_t plane = static_cast<size_t>(height_) * width_;
    std::vector<std::uint8_t> rgb(plane * 3);
    auto src = data();
    for (size_t p = 0; p < plane; ++p) {
        for (size_t c = 0; c < 3; ++c) {
            float v = std::clamp(src[c * plane + p], 0.0f, 1.0f);
            rgb[p * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
    }
    return rgb;
}

bool Image::all_finite() const {
    auto d = data();
    return std::all_of(d.begin(), d.end(), [](float v) { return std::isfinite(v); });
}

void Image::require_finite(const char* what) const {
    if (!all_finite()) {
        throw RejectedInputError(std::string(what) + ": image contains non-finite pixels");
    }
}

bool Image::bit_equal(const Image& other) const {
    if (height_ != other.height_ || width_ != other.width_) return false;
    auto a = data();
    auto b = other.data();
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
}

BinaryMask::BinaryMask(int height, int width, std::uint8_t fill)
    : height_(height), width_(width), values_(static_cast<size_t>(height) * width, fill ? 1 : 0) {
    if (height < 0 || width < 0) throw ShapeError("negative mask dimensions");
}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> values)
    : height_(height), width_(width), values_(std::move(values)) {
    if (values_.size() != static_cast<size_t>(height) * width) {
        throw ShapeError("mask buffer size does not match dimensions");
    }
    for (auto& v : values_) v = v ? 1 : 0;
}

long BinaryMask::count() const {
    long n = 0;
    for (auto v : values_) n += v;
    return n;
}

void BinaryMask::fill_rect(const Rect& r, std::uint8_t v) {
    if (!r.inside(height_, width_)) throw ShapeError("rect " + to_string(r) + " outside mask");
    for (int y = r.top; y < r.bottom(); ++y) {
        std::fill_n(values_.begin() + static_cast<long>(y) * width_ + r.left, r.size, v ? 1 : 0);
    }
}

BinaryMask BinaryMask::complement() const {
    BinaryMask out(height_, width_);
    for (size_t i = 0; i < values_.size(); ++i) out.values_[i] = 1 - values_[i];
    return out;
}

BinaryMask BinaryMask::operator|(const BinaryMask& o) const {
    if (o.height_ != height_ || o.width_ != width_) throw ShapeError("mask shape mismatch");
    BinaryMask out(height_, width_);
    for (size_t i = 0; i < values_.size(); ++i) out.values_[i] = values_[i] | o.values_[i];
    return out;
}

BinaryMask BinaryMask::operator&(const BinaryMask& o) const {
    if (o.height_ != height_ || o.width_ != width_) throw ShapeError("mask shape mismatch");
    BinaryMask out(height_, width_);
    for (size_t i = 0; i < values_.size(); ++i) out.values_[i] = values_[i] & o.values_[i];
    return out;
}

bool BinaryMask::subset_of(const BinaryMask& o) const {
    if (o.height_ != height_ || o.width_ != width_) return false;
    for (size_t i = 0; i < values_.size(); ++i) {
        if (values_[i] && !o.values_[i]) return false;
    }
    return true;
}

torch::Tensor BinaryMask::to_tensor(torch::ScalarType dtype) const {
    auto t = torch::empty({1, height_, width_}, torch::kFloat32);
    float* p = t.data_ptr<float>();
    for (size_t i = 0; i < values_.size(); ++i) p[i] = values_[i];
    return t.to(dtype);
}

Image apply_mask(const Image& img, const BinaryMask& mask) {
    if (img.height() != mask.height() || img.width() != mask.width()) {
        throw ShapeError("mask shape does not match image");
    }
    return Image(img.tensor() * mask.to_tensor());
}

}  // namespace objstyle
