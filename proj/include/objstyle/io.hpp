// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "objstyle/grounding.hpp"
#include "objstyle/image.hpp"

namespace objstyle {

/// PNG or JPEG (8- or 16-bit, gray or color, alpha dropped) as RGB in [0,1].
/// Throws RejectedInputError when the file cannot be decoded.
Image load_image(const std::filesystem::path& path);
/// 8-bit RGB PNG.
void save_png(const Image& img, const std::filesystem::path& path);

/// Any non-zero pixel of the first channel counts as foreground.
BinaryMask load_mask(const std::filesystem::path& path);
/// 8-bit gray PNG with values 0 and 255.
void save_mask(const BinaryMask& mask, const std::filesystem::path& path);
/// 16-bit gray PNG of raw vote counts (saturating at 65535).
void save_votes(const VotingMatrix& votes, const std::filesystem::path& path);

/// Bicubic resize (area interpolation when shrinking), clamped to [0,1].
Image resize_image(const Image& img, int height, int width);
/// Nearest-neighbour resize of a mask.
BinaryMask resize_mask(const BinaryMask& mask, int height, int width);

/// Source image with the mask tinted red at the given opacity and its outline drawn.
Image mask_overlay(const Image& img, const BinaryMask& mask, double alpha = 0.45);

struct GridItem {
    Image image;
    std::string caption;
};

/// Tiles items row-major into ceil(sqrt(n)) columns. Each image is resized
/// into a cell×cell box preserving its aspect ratio (letterboxed on black)
/// and its caption is printed in a band underneath.
Image make_grid(const std::vector<GridItem>& items, int cell = 256);

/// Version of the image codec library, for run manifests.
std::string codec_version();

}  // namespace objstyle
