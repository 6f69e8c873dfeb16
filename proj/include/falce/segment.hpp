/**
 * @file segment.hpp
 * @brief Otsu thresholding, binary morphology and breast-region masking
 */
#pragma once

#include "falce/geometry.hpp"
#include "falce/image.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace falce::segment {

using image::GrayImage;

class BinaryMask {
public:
    BinaryMask(int width, int height, bool fill = false);
    BinaryMask(int width, int height, std::vector<std::uint8_t> bits);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }

    bool at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    void set(int x, int y, bool v) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
    const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

    std::size_t count() const;
    bool subset_of(const BinaryMask& other) const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    int width_;
    int height_;
    std::vector<std::uint8_t> bits_;
};

enum class ElementShape { Square, Disk };

/// Structuring element centred on the origin: |dx|,|dy| <= r (square) or dx^2+dy^2 <= r^2 (disk).
struct StructElem {
    ElementShape shape = ElementShape::Square;
    int radius = 2;

    std::vector<std::pair<int, int>> offsets() const;
};

/// Bin boundary k/256 maximizing between-class variance over a 256-bin histogram.
/// Ties go to the lowest k. Throws NumericalError for single-level images.
double otsu_threshold(const GrayImage& img);

/// Bit set iff pixel > t; t must lie in [0, 1).
BinaryMask binarize(const GrayImage& img, double t);

/// Morphology with out-of-bounds pixels treated as false.
BinaryMask erode(const BinaryMask& m, const StructElem& se);
BinaryMask dilate(const BinaryMask& m, const StructElem& se);
BinaryMask opening(const BinaryMask& m, const StructElem& se);

/// Largest 8-connected component; ties go to the component seen first in raster order.
BinaryMask largest_component(const BinaryMask& m);

/// Otsu binarization, opening, then the largest component.
BinaryMask breast_mask(const GrayImage& img, const StructElem& se = {});

/// Keeps pixels where the mask is set and zeroes the rest.
GrayImage apply_mask(const GrayImage& img, const BinaryMask& m);

/// Tight half-open bounding box of the set bits; an all-zero (invalid) box when empty.
BBox bounding_box(const BinaryMask& m);

struct RoiCrop {
    GrayImage image;
    BBox box;
};

/// Crops to the breast mask's bounding box grown by `margin` and clamped to the frame.
RoiCrop roi_crop(const GrayImage& img, int margin, const StructElem& se = {});

/// 0/1 mask rendered as a 0.0/1.0 image.
GrayImage mask_to_image(const BinaryMask& m);

}  // namespace falce::segment
