/**
 * @file enhance.cpp
 * @brief Global and tiled (contrast-limited) histogram equalization
 */

#include "falce/enhance.hpp"
#include "falce/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace falce::enhance {

namespace {

constexpr int kGlobalBins = 256;

/// Remap value for a cumulative count; shared by the global and tiled paths so the
/// single-tile unlimited case reproduces equalize_hist bit for bit.
inline double cdf_level(double lo, double hi, std::uint64_t cumulative, std::uint64_t total) {
    return lo + (hi - lo) * (static_cast<double>(cumulative) / static_cast<double>(total));
}

int occupied_bins(std::span<const std::uint64_t> counts) {
    return static_cast<int>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c != 0; }));
}

/// Pixel boundaries of tile i out of n along an axis of length len.
inline int tile_edge(int i, int n, int len) {
    return static_cast<int>(static_cast<long long>(i) * len / n);
}

struct AxisTap {
    int lo;
    int hi;
    double w;  // weight of hi
};

/// Interpolation taps between neighbouring tile centers; pixels outside the
/// outermost centers use the nearest tile alone.
std::vector<AxisTap> axis_taps(int len, int tiles) {
    std::vector<double> centers(static_cast<std::size_t>(tiles));
    for (int i = 0; i < tiles; ++i) {
        centers[i] = (tile_edge(i, tiles, len) + tile_edge(i + 1, tiles, len) - 1) / 2.0;
    }
    std::vector<AxisTap> taps(static_cast<std::size_t>(len));
    int i = 0;
    for (int p = 0; p < len; ++p) {
        if (p <= centers.front()) {
            taps[p] = {0, 0, 0.0};
            continue;
        }
        if (p >= centers.back()) {
            taps[p] = {tiles - 1, tiles - 1, 0.0};
            continue;
        }
        while (centers[i + 1] <= p) ++i;
        taps[p] = {i, i + 1, (p - centers[i]) / (centers[i + 1] - centers[i])};
    }
    return taps;
}

struct TileMap {
    bool identity = false;
    std::vector<double> levels;

    double apply(double v, int bins) const { return identity ? v : levels[image::bin_of(v, bins)]; }
};

}  // namespace

void ClaheParams::validate() const {
    if (tiles_x < 1 || tiles_y < 1) throw InvalidArgument("CLAHE tile grid must be at least 1x1");
    if (bins < 2) throw InvalidArgument("CLAHE needs at least 2 bins");
    if (!unlimited() && !(clip_limit >= 1.0 && std::isfinite(clip_limit))) {
        throw InvalidArgument("CLAHE clip limit must be >= 1 or unlimited, got " + std::to_string(clip_limit));
    }
}

GrayImage equalize_hist(const GrayImage& img) {
    const auto hist = image::histogram(img, kGlobalBins);
    if (occupied_bins(hist.counts) <= 1) return img;

    const double lo = img.min_value();
    const double hi = img.max_value();
    const std::uint64_t total = img.size();
    std::vector<double> levels(kGlobalBins);
    std::uint64_t cumulative = 0;
    for (int b = 0; b < kGlobalBins; ++b) {
        cumulative += hist.counts[b];
        levels[b] = cdf_level(lo, hi, cumulative, total);
    }
    std::vector<double> out(img.size());
    const auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) out[i] = levels[image::bin_of(px[i], kGlobalBins)];
    return GrayImage(img.width(), img.height(), std::move(out), img.source_bit_depth());
}

std::uint64_t clip_count_limit(double clip_limit, std::uint64_t tile_pixels, int bins) {
    const double raw = std::ceil(clip_limit * static_cast<double>(tile_pixels) / bins);
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(raw));
}

std::vector<std::uint64_t> clip_histogram(std::span<const std::uint64_t> counts, std::uint64_t limit) {
    std::vector<std::uint64_t> h(counts.begin(), counts.end());
    const auto bins = static_cast<std::uint64_t>(h.size());
    if (bins == 0) return h;
    std::uint64_t excess = 0;
    for (auto& c : h) {
        if (c > limit) {
            excess += c - limit;
            c = limit;
        }
    }
    while (excess >= bins) {
        const std::uint64_t add = excess / bins;
        const std::uint64_t before = excess;
        excess -= add * bins;
        for (auto& c : h) {
            c += add;
            if (c > limit) {
                excess += c - limit;
                c = limit;
            }
        }
        if (excess >= before) {
            // Limit too small to hold the mass (limit * bins < total): spread without clipping.
            const std::uint64_t rest = excess / bins;
            for (auto& c : h) c += rest;
            excess -= rest * bins;
            break;
        }
    }
    // Residual counts go one at a time to bins still under the limit, lowest index first.
    while (excess > 0) {
        bool placed = false;
        for (auto& c : h) {
            if (excess == 0) break;
            if (c < limit) {
                ++c;
                --excess;
                placed = true;
            }
        }
        if (!placed) {
            for (std::uint64_t b = 0; b < excess; ++b) ++h[b];
            break;
        }
    }
    return h;
}

std::vector<TileHistogram> tile_histograms(const GrayImage& img, const ClaheParams& params) {
    params.validate();
    if (img.width() < params.tiles_x || img.height() < params.tiles_y) {
        throw InvalidArgument("image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                              " is smaller than the " + std::to_string(params.tiles_x) + "x" +
                              std::to_string(params.tiles_y) + " tile grid");
    }
    std::vector<TileHistogram> tiles;
    tiles.reserve(static_cast<std::size_t>(params.tiles_x) * params.tiles_y);
    for (int ty = 0; ty < params.tiles_y; ++ty) {
        const int y0 = tile_edge(ty, params.tiles_y, img.height());
        const int y1 = tile_edge(ty + 1, params.tiles_y, img.height());
        for (int tx = 0; tx < params.tiles_x; ++tx) {
            const int x0 = tile_edge(tx, params.tiles_x, img.width());
            const int x1 = tile_edge(tx + 1, params.tiles_x, img.width());
            TileHistogram t;
            t.tile_x = tx;
            t.tile_y = ty;
            t.pixels = static_cast<std::uint64_t>(x1 - x0) * static_cast<std::uint64_t>(y1 - y0);
            t.raw.assign(static_cast<std::size_t>(params.bins), 0);
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) ++t.raw[image::bin_of(img.at(x, y), params.bins)];
            }
            t.clipped = params.unlimited()
                            ? t.raw
                            : clip_histogram(t.raw, clip_count_limit(params.clip_limit, t.pixels, params.bins));
            tiles.push_back(std::move(t));
        }
    }
    return tiles;
}

GrayImage clahe(const GrayImage& img, const ClaheParams& params) {
    const auto tiles = tile_histograms(img, params);
    const double lo = img.min_value();
    const double hi = img.max_value();

    std::vector<TileMap> maps(tiles.size());
    for (std::size_t t = 0; t < tiles.size(); ++t) {
        if (occupied_bins(tiles[t].raw) <= 1) {
            maps[t].identity = true;
            continue;
        }
        maps[t].levels.resize(static_cast<std::size_t>(params.bins));
        std::uint64_t cumulative = 0;
        for (int b = 0; b < params.bins; ++b) {
            cumulative += tiles[t].clipped[b];
            maps[t].levels[b] = cdf_level(lo, hi, cumulative, tiles[t].pixels);
        }
    }

    const auto xs = axis_taps(img.width(), params.tiles_x);
    const auto ys = axis_taps(img.height(), params.tiles_y);
    const auto map_at = [&](int tx, int ty) -> const TileMap& {
        return maps[static_cast<std::size_t>(ty) * params.tiles_x + tx];
    };

    std::vector<double> out(img.size());
    for (int y = 0; y < img.height(); ++y) {
        const AxisTap& ry = ys[y];
        for (int x = 0; x < img.width(); ++x) {
            const AxisTap& rx = xs[x];
            const double v = img.at(x, y);
            // a + (b - a) * w reproduces a exactly when both taps agree.
            const auto mix = [](double a, double b, double w) { return a + (b - a) * w; };
            const double top = mix(map_at(rx.lo, ry.lo).apply(v, params.bins),
                                   map_at(rx.hi, ry.lo).apply(v, params.bins), rx.w);
            const double bot = mix(map_at(rx.lo, ry.hi).apply(v, params.bins),
                                   map_at(rx.hi, ry.hi).apply(v, params.bins), rx.w);
            out[static_cast<std::size_t>(y) * img.width() + x] = std::clamp(mix(top, bot, ry.w), 0.0, 1.0);
        }
    }
    return GrayImage(img.width(), img.height(), std::move(out), img.source_bit_depth());
}

}  // namespace falce::enhance
