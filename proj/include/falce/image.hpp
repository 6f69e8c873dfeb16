/**
 * @file image.hpp
 * @brief Normalized grayscale raster, file I/O, resampling and histograms
 *
 * Pixels are stored as doubles in [0, 1] regardless of the bit depth of the
 * file they came from, so every downstream operation is bit-depth agnostic.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace falce::image {

/// Immutable single-channel image with row-major pixels in [0, 1].
class GrayImage {
public:
    /// Throws InvalidArgument when dimensions are < 1, the buffer length is not
    /// width*height, any value falls outside [0, 1], or bit depth is not 8/16.
    GrayImage(int width, int height, std::vector<double> data, int source_bit_depth = 16);

    static GrayImage filled(int width, int height, double value, int source_bit_depth = 16);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    int source_bit_depth() const noexcept { return bit_depth_; }

    double at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    std::span<const double> pixels() const noexcept { return data_; }

    double min_value() const;
    double max_value() const;

    friend bool operator==(const GrayImage& a, const GrayImage& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
    }

private:
    int width_;
    int height_;
    int bit_depth_;
    std::vector<double> data_;
};

struct Histogram {
    int bins = 0;
    std::vector<std::uint64_t> counts;

    std::uint64_t total() const;
};

/// Bin index of a normalized value: min(floor(v * bins), bins - 1).
inline int bin_of(double v, int bins) noexcept {
    const int b = static_cast<int>(v * bins);
    return b >= bins ? bins - 1 : (b < 0 ? 0 : b);
}

/// Reads an 8/16-bit single-channel PNG or binary PGM (P5).
GrayImage load_image(const std::filesystem::path& path);

/// Writes PNG or PGM depending on the extension, quantizing with round half up.
void save_image(const GrayImage& img, const std::filesystem::path& path, int bit_depth);

/// Integer level stored for value v at the given bit depth (round half up).
std::uint32_t quantize(double v, int bit_depth);

/// Center-aligned bilinear resampling with edge clamping.
GrayImage resize(const GrayImage& img, int new_width, int new_height);

/// Resizes preserving aspect ratio so that the shorter side equals `side`.
GrayImage fit_shorter_side(const GrayImage& img, int side);

/// Places the image at the center of a zero canvas of the given size (crops when smaller).
GrayImage center_pad(const GrayImage& img, int width, int height);

/// Crops the half-open pixel rectangle [x0, x1) x [y0, y1).
GrayImage crop(const GrayImage& img, int x0, int y0, int x1, int y1);

Histogram histogram(const GrayImage& img, int bins);

}  // namespace falce::image
