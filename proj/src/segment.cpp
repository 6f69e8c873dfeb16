/**
 * @file segment.cpp
 * @brief Otsu threshold, set morphology, component labelling and ROI cropping
 */

#include "falce/segment.hpp"
#include "falce/error.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <numeric>
#include <string>

namespace falce::segment {

namespace {

constexpr int kOtsuBins = 256;

void require_same_shape(const GrayImage& img, const BinaryMask& m) {
    if (img.width() != m.width() || img.height() != m.height()) {
        throw DimensionMismatch("mask is " + std::to_string(m.width()) + "x" + std::to_string(m.height()) +
                                " but image is " + std::to_string(img.width()) + "x" +
                                std::to_string(img.height()));
    }
}

}  // namespace

// =============================================================================
// BinaryMask / StructElem
// =============================================================================

BinaryMask::BinaryMask(int width, int height, bool fill)
    : BinaryMask(width, height,
                 std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0),
                                           fill ? 1 : 0)) {}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
    if (width < 1 || height < 1) throw InvalidArgument("mask dimensions must be >= 1");
    if (bits_.size() != static_cast<std::size_t>(width) * height) {
        throw InvalidArgument("mask buffer length does not match its dimensions");
    }
    for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool BinaryMask::subset_of(const BinaryMask& other) const {
    if (width_ != other.width_ || height_ != other.height_) return false;
    for (std::size_t i = 0; i < bits_.size(); ++i) {
        if (bits_[i] && !other.bits_[i]) return false;
    }
    return true;
}

std::vector<std::pair<int, int>> StructElem::offsets() const {
    if (radius < 1) throw InvalidArgument("structuring element radius must be >= 1");
    std::vector<std::pair<int, int>> out;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            if (shape == ElementShape::Disk && dx * dx + dy * dy > radius * radius) continue;
            out.emplace_back(dx, dy);
        }
    }
    return out;
}

// =============================================================================
// Thresholding
// =============================================================================

double otsu_threshold(const GrayImage& img) {
    using boost::multiprecision::int256_t;

    const auto hist = image::histogram(img, kOtsuBins);
    const std::int64_t total = static_cast<std::int64_t>(img.size());
    std::int64_t level_sum = 0;
    for (int b = 0; b < kOtsuBins; ++b) level_sum += static_cast<std::int64_t>(b) * hist.counts[b];

    // Between-class variance at boundary k is proportional to
    //   (N * S0 - n0 * S)^2 / (n0 * n1)
    // with n0, S0 the count and level sum of bins below k. Candidates are compared
    // by exact cross-multiplication so ties resolve deterministically.
    int best_k = -1;
    int256_t best_num = 0;
    int256_t best_den = 1;
    std::int64_t n0 = 0;
    std::int64_t s0 = 0;
    for (int k = 1; k < kOtsuBins; ++k) {
        n0 += static_cast<std::int64_t>(hist.counts[k - 1]);
        s0 += static_cast<std::int64_t>(k - 1) * static_cast<std::int64_t>(hist.counts[k - 1]);
        const std::int64_t n1 = total - n0;
        if (n0 == 0 || n1 == 0) continue;
        const int256_t d = int256_t(total) * s0 - int256_t(n0) * level_sum;
        const int256_t num = d * d;
        const int256_t den = int256_t(n0) * n1;
        if (best_k < 0 || num * best_den > best_num * den) {
            best_k = k;
            best_num = num;
            best_den = den;
        }
    }
    if (best_k < 0) {
        throw NumericalError("Otsu threshold undefined: image occupies a single intensity level");
    }
    return static_cast<double>(best_k) / kOtsuBins;
}

BinaryMask binarize(const GrayImage& img, double t) {
    if (!(t >= 0.0 && t < 1.0)) throw InvalidArgument("threshold must lie in [0, 1), got " + std::to_string(t));
    std::vector<std::uint8_t> bits(img.size());
    const auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) bits[i] = px[i] > t ? 1 : 0;
    return BinaryMask(img.width(), img.height(), std::move(bits));
}

// =============================================================================
// Morphology
// =============================================================================

BinaryMask erode(const BinaryMask& m, const StructElem& se) {
    const auto offs = se.offsets();
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m.at(x, y)) continue;  // every element contains its origin
            bool keep = true;
            for (const auto& [dx, dy] : offs) {
                const int sx = x + dx;
                const int sy = y + dy;
                if (sx < 0 || sy < 0 || sx >= m.width() || sy >= m.height() || !m.at(sx, sy)) {
                    keep = false;
                    break;
                }
            }
            out.set(x, y, keep);
        }
    }
    return out;
}

BinaryMask dilate(const BinaryMask& m, const StructElem& se) {
    const auto offs = se.offsets();
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m.at(x, y)) continue;
            for (const auto& [dx, dy] : offs) {
                const int tx = x + dx;
                const int ty = y + dy;
                if (tx < 0 || ty < 0 || tx >= m.width() || ty >= m.height()) continue;
                out.set(tx, ty, true);
            }
        }
    }
    return out;
}

BinaryMask opening(const BinaryMask& m, const StructElem& se) { return dilate(erode(m, se), se); }

BinaryMask largest_component(const BinaryMask& m) {
    const int w = m.width();
    const int h = m.height();
    std::vector<int> label(static_cast<std::size_t>(w) * h, 0);
    std::vector<int> stack;
    int next = 0;
    int best = 0;
    std::size_t best_area = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t seed = static_cast<std::size_t>(y) * w + x;
            if (!m.at(x, y) || label[seed] != 0) continue;
            ++next;
            std::size_t area = 0;
            label[seed] = next;
            stack.assign(1, static_cast<int>(seed));
            while (!stack.empty()) {
                const int p = stack.back();
                stack.pop_back();
                ++area;
                const int px = p % w;
                const int py = p / w;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = px + dx;
                        const int ny = py + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h || !m.at(nx, ny)) continue;
                        const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
                        if (label[q] != 0) continue;
                        label[q] = next;
                        stack.push_back(static_cast<int>(q));
                    }
                }
            }
            if (area > best_area) {
                best_area = area;
                best = next;
            }
        }
    }
    std::vector<std::uint8_t> bits(label.size(), 0);
    if (best != 0) {
        for (std::size_t i = 0; i < label.size(); ++i) bits[i] = label[i] == best ? 1 : 0;
    }
    return BinaryMask(w, h, std::move(bits));
}

// =============================================================================
// Masking and cropping
// =============================================================================

BinaryMask breast_mask(const GrayImage& img, const StructElem& se) {
    const double t = otsu_threshold(img);
    return largest_component(opening(binarize(img, t), se));
}

GrayImage apply_mask(const GrayImage& img, const BinaryMask& m) {
    require_same_shape(img, m);
    std::vector<double> out(img.pixels().begin(), img.pixels().end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!m.bits()[i]) out[i] = 0.0;
    }
    return GrayImage(img.width(), img.height(), std::move(out), img.source_bit_depth());
}

BBox bounding_box(const BinaryMask& m) {
    int x0 = m.width(), y0 = m.height(), x1 = -1, y1 = -1;
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m.at(x, y)) continue;
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
        }
    }
    if (x1 < 0) return BBox{};
    return BBox{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 + 1),
                static_cast<double>(y1 + 1)};
}

RoiCrop roi_crop(const GrayImage& img, int margin, const StructElem& se) {
    if (margin < 0) throw InvalidArgument("ROI margin must be non-negative");
    const BBox tight = bounding_box(breast_mask(img, se));
    if (!tight.valid()) throw NumericalError("breast mask is empty; no region to crop");
    const auto clamp_to = [](double v, int hi) {
        return static_cast<int>(std::clamp(v, 0.0, static_cast<double>(hi)));
    };
    const int x0 = clamp_to(tight.x1 - margin, img.width());
    const int y0 = clamp_to(tight.y1 - margin, img.height());
    const int x1 = clamp_to(tight.x2 + margin, img.width());
    const int y1 = clamp_to(tight.y2 + margin, img.height());
    return RoiCrop{image::crop(img, x0, y0, x1, y1),
                   BBox{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1),
                        static_cast<double>(y1)}};
}

GrayImage mask_to_image(const BinaryMask& m) {
    std::vector<double> px(m.bits().begin(), m.bits().end());
    return GrayImage(m.width(), m.height(), std::move(px), 8);
}

}  // namespace falce::segment
