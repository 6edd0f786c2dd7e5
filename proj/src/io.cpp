// SPDX-License-Identifier: Apache-2.0
#include "objstyle/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <opencv2/core/version.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "objstyle/error.hpp"

namespace objstyle {

namespace {

// Float32 HxWx3 RGB in [0,1] <-> Image.
cv::Mat to_mat(const Image& img) {
    const auto hwc = img.tensor().permute({1, 2, 0}).contiguous();
    cv::Mat m(img.height(), img.width(), CV_32FC3);
    std::memcpy(m.data, hwc.data_ptr<float>(), sizeof(float) * static_cast<size_t>(hwc.numel()));
    return m;
}

Image from_mat(const cv::Mat& rgb_f32) {
    const cv::Mat m = rgb_f32.isContinuous() ? rgb_f32 : rgb_f32.clone();
    auto t = torch::from_blob(m.data, {m.rows, m.cols, 3}, torch::kFloat32).permute({2, 0, 1}).clone();
    return Image(t.clamp(0.0, 1.0));
}

void write_or_throw(const std::filesystem::path& path, const cv::Mat& m) {
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), m);
    } catch (const cv::Exception& e) {
        throw Error("cannot write " + path.string() + ": " + e.what());
    }
    if (!ok) throw Error("cannot write " + path.string());
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
    cv::Mat raw;
    try {
        raw = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_COLOR);
    } catch (const cv::Exception& e) {
        throw RejectedInputError("cannot decode image " + path.string() + ": " + e.what());
    }
    if (raw.empty()) throw RejectedInputError("cannot read image " + path.string());
    const double scale = raw.depth() == CV_16U ? 1.0 / 65535.0 : raw.depth() == CV_8U ? 1.0 / 255.0 : 1.0;
    cv::Mat rgb;
    cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
    cv::Mat f;
    rgb.convertTo(f, CV_32FC3, scale);
    return from_mat(f);
}

void save_png(const Image& img, const std::filesystem::path& path) {
    const auto bytes = img.to_rgb8();
    cv::Mat rgb(img.height(), img.width(), CV_8UC3, const_cast<std::uint8_t*>(bytes.data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    write_or_throw(path, bgr);
}

BinaryMask load_mask(const std::filesystem::path& path) {
    cv::Mat raw;
    try {
        raw = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
    } catch (const cv::Exception& e) {
        throw RejectedInputError("cannot decode mask " + path.string() + ": " + e.what());
    }
    if (raw.empty()) throw RejectedInputError("cannot read mask " + path.string());
    BinaryMask m(raw.rows, raw.cols);
    cv::Mat nz = raw != 0;
    for (int y = 0; y < raw.rows; ++y) {
        const auto* row = nz.ptr<std::uint8_t>(y);
        for (int x = 0; x < raw.cols; ++x) m.set(y, x, row[x]);
    }
    return m;
}

void save_mask(const BinaryMask& mask, const std::filesystem::path& path) {
    cv::Mat m(mask.height(), mask.width(), CV_8UC1);
    const auto v = mask.values();
    for (size_t i = 0; i < v.size(); ++i) m.data[i] = v[i] ? 255 : 0;
    write_or_throw(path, m);
}

void save_votes(const VotingMatrix& votes, const std::filesystem::path& path) {
    cv::Mat m(votes.height, votes.width, CV_16UC1);
    for (int y = 0; y < votes.height; ++y) {
        auto* row = m.ptr<std::uint16_t>(y);
        for (int x = 0; x < votes.width; ++x) row[x] = static_cast<std::uint16_t>(std::clamp(votes.at(y, x), 0, 65535));
    }
    write_or_throw(path, m);
}

Image resize_image(const Image& img, int height, int width) {
    if (height < 1 || width < 1) throw ShapeError("resize target must be positive");
    if (height == img.height() && width == img.width()) return img.clone();
    const bool shrinking = height < img.height() && width < img.width();
    cv::Mat out;
    cv::resize(to_mat(img), out, cv::Size(width, height), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_CUBIC);
    return from_mat(out);
}

BinaryMask resize_mask(const BinaryMask& mask, int height, int width) {
    if (height == mask.height() && width == mask.width()) return mask;
    cv::Mat src(mask.height(), mask.width(), CV_8UC1, const_cast<std::uint8_t*>(mask.values().data()));
    cv::Mat out;
    cv::resize(src, out, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
    return BinaryMask(height, width, std::vector<std::uint8_t>(out.data, out.data + out.total()));
}

Image mask_overlay(const Image& img, const BinaryMask& mask, double alpha) {
    if (mask.height() != img.height() || mask.width() != img.width()) throw ShapeError("overlay mask size mismatch");
    const auto m = mask.to_tensor();
    const auto tint = torch::tensor({1.0f, 0.0f, 0.0f}).view({3, 1, 1});
    auto out = img.tensor() * (1 - alpha * m) + tint * (alpha * m);
    cv::Mat mat = to_mat(Image(out));
    cv::Mat bin(mask.height(), mask.width(), CV_8UC1, const_cast<std::uint8_t*>(mask.values().data()));
    std::vector<std::vector<cv::Point>> contours;
    cv::findContours(bin.clone(), contours, cv::RETR_EXTERNAL, cv::CHAIN_APPROX_SIMPLE);
    cv::drawContours(mat, contours, -1, cv::Scalar(1.0, 1.0, 0.0), 1);
    return from_mat(mat);
}

Image make_grid(const std::vector<GridItem>& items, int cell) {
    if (items.empty()) throw RejectedInputError("grid needs at least one image");
    if (cell < 16) throw ConfigError("grid cell size must be >= 16");
    const int n = static_cast<int>(items.size());
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    const int rows = (n + cols - 1) / cols;
    const int band = 28;
    const int pad = 4;
    const int tile_w = cell + 2 * pad;
    const int tile_h = cell + band + 2 * pad;
    cv::Mat canvas(rows * tile_h, cols * tile_w, CV_32FC3, cv::Scalar(1.0, 1.0, 1.0));
    for (int i = 0; i < n; ++i) {
        const auto& item = items[static_cast<size_t>(i)];
        const int r = i / cols;
        const int c = i % cols;
        const double s = std::min(static_cast<double>(cell) / item.image.width(),
                                  static_cast<double>(cell) / item.image.height());
        const int w = std::max(1, static_cast<int>(std::lround(item.image.width() * s)));
        const int h = std::max(1, static_cast<int>(std::lround(item.image.height() * s)));
        const cv::Mat fitted = to_mat(resize_image(item.image, h, w));
        const int x0 = c * tile_w + pad;
        const int y0 = r * tile_h + pad;
        canvas(cv::Rect(x0, y0, cell, cell)).setTo(cv::Scalar(0, 0, 0));
        fitted.copyTo(canvas(cv::Rect(x0 + (cell - w) / 2, y0 + (cell - h) / 2, w, h)));

        const double font_scale = 0.45;
        std::string text = item.caption;
        int baseline = 0;
        while (!text.empty() &&
               cv::getTextSize(text, cv::FONT_HERSHEY_SIMPLEX, font_scale, 1, &baseline).width > cell) {
            text.pop_back();
        }
        cv::putText(canvas, text, cv::Point(x0, y0 + cell + band - 9), cv::FONT_HERSHEY_SIMPLEX, font_scale,
                    cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    }
    return from_mat(canvas);
}

std::string codec_version() { return CV_VERSION; }

}  // namespace objstyle
