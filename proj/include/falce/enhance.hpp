/**
 * @file enhance.hpp
 * @brief Histogram equalization and contrast-limited adaptive histogram equalization
 */
#pragma once

#include "falce/image.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace falce::enhance {

using image::GrayImage;

struct ClaheParams {
    /// Clip limit as a multiple of the uniform bin height (tile pixels / bins).
    static constexpr double kUnlimited = std::numeric_limits<double>::infinity();

    double clip_limit = 2.0;
    int tiles_x = 8;
    int tiles_y = 8;
    int bins = 256;

    bool unlimited() const noexcept { return clip_limit == kUnlimited; }

    /// Throws InvalidArgument when any field is out of range.
    void validate() const;

    friend bool operator==(const ClaheParams&, const ClaheParams&) = default;
};

/// Global CDF remap over 256 bins, output spanning the input's [min, max].
/// Images with a single occupied bin are returned unchanged.
GrayImage equalize_hist(const GrayImage& img);

GrayImage clahe(const GrayImage& img, const ClaheParams& params);

/// Absolute per-bin count limit for a tile: ceil(clip_limit * tile_pixels / bins), at least 1.
std::uint64_t clip_count_limit(double clip_limit, std::uint64_t tile_pixels, int bins);

/// Clips every bin at `limit` and spreads the excess uniformly, repeating until
/// less than one count per bin remains; that remainder goes one count at a time to
/// the lowest-index bins still under the limit. The total count is preserved exactly.
std::vector<std::uint64_t> clip_histogram(std::span<const std::uint64_t> counts, std::uint64_t limit);

/// Raw and clipped histogram of one tile, for inspection.
struct TileHistogram {
    int tile_x = 0;
    int tile_y = 0;
    std::uint64_t pixels = 0;
    std::vector<std::uint64_t> raw;
    std::vector<std::uint64_t> clipped;
};

std::vector<TileHistogram> tile_histograms(const GrayImage& img, const ClaheParams& params);

}  // namespace falce::enhance
