/**
 * @file image.cpp
 * @brief GrayImage, PNG/PGM codecs, bilinear resampling and histograms
 */

#include "falce/image.hpp"
#include "falce/error.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <string>

namespace falce::image {

namespace fs = std::filesystem;

// =============================================================================
// GrayImage
// =============================================================================

GrayImage::GrayImage(int width, int height, std::vector<double> data, int source_bit_depth)
    : width_(width), height_(height), bit_depth_(source_bit_depth), data_(std::move(data)) {
    if (width < 1 || height < 1) {
        throw InvalidArgument("image dimensions must be >= 1, got " + std::to_string(width) + "x" +
                              std::to_string(height));
    }
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw InvalidArgument("pixel buffer length " + std::to_string(data_.size()) +
                              " does not match " + std::to_string(width) + "x" +
                              std::to_string(height));
    }
    if (source_bit_depth != 8 && source_bit_depth != 16) {
        throw InvalidArgument("source bit depth must be 8 or 16");
    }
    for (double v : data_) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw InvalidArgument("pixel value " + std::to_string(v) + " outside [0, 1]");
        }
    }
}

GrayImage GrayImage::filled(int width, int height, double value, int source_bit_depth) {
    const auto n = static_cast<std::size_t>(std::max(width, 0)) * static_cast<std::size_t>(std::max(height, 0));
    return GrayImage(width, height, std::vector<double>(n, value), source_bit_depth);
}

double GrayImage::min_value() const { return *std::min_element(data_.begin(), data_.end()); }

double GrayImage::max_value() const { return *std::max_element(data_.begin(), data_.end()); }

std::uint64_t Histogram::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

// =============================================================================
// Quantization
// =============================================================================

namespace {

std::uint32_t max_level(int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16) {
        throw InvalidArgument("bit depth must be 8 or 16, got " + std::to_string(bit_depth));
    }
    return bit_depth == 8 ? 255u : 65535u;
}

std::vector<std::uint32_t> quantize_all(const GrayImage& img, int bit_depth) {
    std::vector<std::uint32_t> levels(img.size());
    const auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
        levels[i] = quantize(px[i], bit_depth);
    }
    return levels;
}

GrayImage from_levels(int w, int h, const std::vector<std::uint32_t>& levels, int bit_depth) {
    const double scale = static_cast<double>(max_level(bit_depth));
    std::vector<double> data(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i) {
        data[i] = static_cast<double>(levels[i]) / scale;
    }
    return GrayImage(w, h, std::move(data), bit_depth);
}

}  // namespace

std::uint32_t quantize(double v, int bit_depth) {
    const double maxv = static_cast<double>(max_level(bit_depth));
    const double q = std::floor(std::clamp(v, 0.0, 1.0) * maxv + 0.5);
    return static_cast<std::uint32_t>(std::min(q, maxv));
}

// =============================================================================
// PGM
// =============================================================================

namespace {

bool is_pgm_magic(const std::array<unsigned char, 8>& sig) { return sig[0] == 'P' && sig[1] == '5'; }

int read_pgm_token(std::istream& in, const fs::path& path) {
    int c = in.get();
    while (in) {
        if (c == '#') {
            while (in && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (!in || !std::isdigit(c)) {
        throw IoError(path.string() + ": malformed PGM header");
    }
    long value = 0;
    while (in && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        if (value > (1L << 30)) throw IoError(path.string() + ": PGM header value too large");
        c = in.get();
    }
    // Exactly one whitespace character separates the header from the raster.
    if (!in || !std::isspace(c)) {
        throw IoError(path.string() + ": malformed PGM header");
    }
    return static_cast<int>(value);
}

GrayImage load_pgm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open file");
    char p = 0, five = 0;
    in.get(p).get(five);
    if (p != 'P' || five != '5') throw IoError(path.string() + ": not a binary PGM (P5)");
    const int w = read_pgm_token(in, path);
    const int h = read_pgm_token(in, path);
    const int maxval = read_pgm_token(in, path);
    if (w < 1 || h < 1) throw IoError(path.string() + ": PGM dimensions must be >= 1");
    if (maxval != 255 && maxval != 65535) {
        throw IoError(path.string() + ": unsupported PGM maxval " + std::to_string(maxval) +
                      " (expected 255 or 65535)");
    }
    const int depth = maxval == 255 ? 8 : 16;
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    const std::size_t bytes = n * (depth / 8);
    std::vector<unsigned char> raw(bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes) {
        throw IoError(path.string() + ": truncated PGM raster");
    }
    std::vector<std::uint32_t> levels(n);
    for (std::size_t i = 0; i < n; ++i) {
        levels[i] = depth == 8 ? raw[i] : (static_cast<std::uint32_t>(raw[2 * i]) << 8) | raw[2 * i + 1];
    }
    return from_levels(w, h, levels, depth);
}

void save_pgm(const GrayImage& img, const fs::path& path, int bit_depth) {
    const auto levels = quantize_all(img, bit_depth);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << "P5\n" << img.width() << ' ' << img.height() << '\n' << max_level(bit_depth) << '\n';
    std::vector<unsigned char> raw;
    raw.reserve(levels.size() * (bit_depth / 8));
    for (auto l : levels) {
        if (bit_depth == 16) raw.push_back(static_cast<unsigned char>(l >> 8));
        raw.push_back(static_cast<unsigned char>(l & 0xFF));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError(path.string() + ": write failed");
}

// =============================================================================
// PNG
// =============================================================================

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp png, png_const_charp) { png_longjmp(png, 1); }
void png_warning_handler(png_structp, png_const_charp) {}

GrayImage load_png(const fs::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError(path.string() + ": cannot open file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                             png_warning_handler);
    if (!png) throw IoError(path.string() + ": libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError(path.string() + ": libpng initialization failed");
    }

    std::string failure;
    int w = 0, h = 0, depth = 0;
    std::vector<std::uint32_t> levels;
    std::vector<png_byte> row;
    // Nothing with a non-trivial destructor is created between setjmp and longjmp.
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path.string() + ": corrupt PNG data");
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    depth = png_get_bit_depth(png, info);
    w = static_cast<int>(png_get_image_width(png, info));
    h = static_cast<int>(png_get_image_height(png, info));
    const auto interlace = png_get_interlace_type(png, info);

    if (color != PNG_COLOR_TYPE_GRAY) {
        failure = color == PNG_COLOR_TYPE_PALETTE
                      ? "palette PNG is not supported (expected single-channel grayscale)"
                      : "multi-channel PNG is not supported (expected single-channel grayscale)";
    } else if (depth != 8 && depth != 16) {
        failure = "unsupported PNG bit depth " + std::to_string(depth) + " (expected 8 or 16)";
    } else if (interlace != PNG_INTERLACE_NONE) {
        failure = "interlaced PNG is not supported";
    }
    if (failure.empty()) {
        levels.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
        row.resize(png_get_rowbytes(png, info));
        for (int y = 0; y < h; ++y) {
            png_read_row(png, row.data(), nullptr);
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                levels[i] = depth == 8 ? row[x]
                                       : (static_cast<std::uint32_t>(row[2 * x]) << 8) | row[2 * x + 1];
            }
        }
        png_read_end(png, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    if (!failure.empty()) throw IoError(path.string() + ": " + failure);
    return from_levels(w, h, levels, depth);
}

void save_png(const GrayImage& img, const fs::path& path, int bit_depth) {
    const auto levels = quantize_all(img, bit_depth);
    const int w = img.width();
    const int h = img.height();
    std::vector<png_byte> raster(static_cast<std::size_t>(w) * h * (bit_depth / 8));
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (bit_depth == 8) {
            raster[i] = static_cast<png_byte>(levels[i]);
        } else {
            raster[2 * i] = static_cast<png_byte>(levels[i] >> 8);
            raster[2 * i + 1] = static_cast<png_byte>(levels[i] & 0xFF);
        }
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    const std::size_t stride = static_cast<std::size_t>(w) * (bit_depth / 8);
    for (int y = 0; y < h; ++y) rows[y] = raster.data() + y * stride;

    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError(path.string() + ": cannot open for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                              png_warning_handler);
    if (!png) throw IoError(path.string() + ": libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError(path.string() + ": libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path.string() + ": PNG encoding failed");
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fflush(file.get()) != 0) throw IoError(path.string() + ": write failed");
}

std::string lower_extension(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

}  // namespace

GrayImage load_image(const fs::path& path) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
        throw IoError(path.string() + ": file does not exist");
    }
    std::array<unsigned char, 8> sig{};
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError(path.string() + ": cannot open file");
        in.read(reinterpret_cast<char*>(sig.data()), sig.size());
        if (in.gcount() < 2) throw IoError(path.string() + ": file too short to be an image");
    }
    if (png_sig_cmp(sig.data(), 0, sig.size()) == 0) return load_png(path);
    if (is_pgm_magic(sig)) return load_pgm(path);
    throw IoError(path.string() + ": unsupported format (expected PNG or binary PGM)");
}

void save_image(const GrayImage& img, const fs::path& path, int bit_depth) {
    max_level(bit_depth);
    const auto parent = path.parent_path();
    std::error_code ec;
    if (!parent.empty() && !fs::is_directory(parent, ec)) {
        throw IoError(path.string() + ": parent directory does not exist");
    }
    const auto ext = lower_extension(path);
    if (ext == ".pgm") {
        save_pgm(img, path, bit_depth);
    } else if (ext == ".png") {
        save_png(img, path, bit_depth);
    } else {
        throw IoError(path.string() + ": unsupported output extension (expected .png or .pgm)");
    }
}

// =============================================================================
// Geometry
// =============================================================================

namespace {

struct Tap {
    int lo;
    int hi;
    double w;  // weight of hi
};

std::vector<Tap> bilinear_taps(int src, int dst) {
    std::vector<Tap> taps(static_cast<std::size_t>(dst));
    const double scale = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        double s = (i + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(src - 1));
        const int lo = static_cast<int>(std::floor(s));
        const int hi = std::min(lo + 1, src - 1);
        taps[i] = {lo, hi, hi == lo ? 0.0 : s - lo};
    }
    return taps;
}

}  // namespace

GrayImage resize(const GrayImage& img, int new_width, int new_height) {
    if (new_width < 1 || new_height < 1) {
        throw InvalidArgument("resize target must be >= 1x1");
    }
    if (new_width == img.width() && new_height == img.height()) return img;

    const auto tx = bilinear_taps(img.width(), new_width);
    const auto ty = bilinear_taps(img.height(), new_height);
    std::vector<double> out(static_cast<std::size_t>(new_width) * new_height);
    for (int y = 0; y < new_height; ++y) {
        const auto& r = ty[y];
        for (int x = 0; x < new_width; ++x) {
            const auto& c = tx[x];
            const double top = img.at(c.lo, r.lo) * (1.0 - c.w) + img.at(c.hi, r.lo) * c.w;
            const double bot = img.at(c.lo, r.hi) * (1.0 - c.w) + img.at(c.hi, r.hi) * c.w;
            out[static_cast<std::size_t>(y) * new_width + x] =
                std::clamp(top * (1.0 - r.w) + bot * r.w, 0.0, 1.0);
        }
    }
    return GrayImage(new_width, new_height, std::move(out), img.source_bit_depth());
}

GrayImage fit_shorter_side(const GrayImage& img, int side) {
    if (side < 1) throw InvalidArgument("shorter side must be >= 1");
    const int w = img.width();
    const int h = img.height();
    if (std::min(w, h) == side) return img;
    int nw = side;
    int nh = side;
    if (w < h) {
        nh = std::max(1, static_cast<int>(std::lround(static_cast<double>(h) * side / w)));
    } else if (h < w) {
        nw = std::max(1, static_cast<int>(std::lround(static_cast<double>(w) * side / h)));
    }
    return resize(img, nw, nh);
}

GrayImage center_pad(const GrayImage& img, int width, int height) {
    if (width < 1 || height < 1) throw InvalidArgument("pad target must be >= 1x1");
    if (width == img.width() && height == img.height()) return img;
    std::vector<double> out(static_cast<std::size_t>(width) * height, 0.0);
    const int ox = (width - img.width()) / 2;
    const int oy = (height - img.height()) / 2;
    for (int y = 0; y < height; ++y) {
        const int sy = y - oy;
        if (sy < 0 || sy >= img.height()) continue;
        for (int x = 0; x < width; ++x) {
            const int sx = x - ox;
            if (sx < 0 || sx >= img.width()) continue;
            out[static_cast<std::size_t>(y) * width + x] = img.at(sx, sy);
        }
    }
    return GrayImage(width, height, std::move(out), img.source_bit_depth());
}

GrayImage crop(const GrayImage& img, int x0, int y0, int x1, int y1) {
    if (x0 < 0 || y0 < 0 || x1 > img.width() || y1 > img.height() || x0 >= x1 || y0 >= y1) {
        throw InvalidArgument("crop rectangle outside image bounds");
    }
    const int w = x1 - x0;
    const int h = y1 - y0;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(w) * h);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) out.push_back(img.at(x, y));
    }
    return GrayImage(w, h, std::move(out), img.source_bit_depth());
}

Histogram histogram(const GrayImage& img, int bins) {
    if (bins < 2) throw InvalidArgument("histogram needs at least 2 bins");
    Histogram hist{bins, std::vector<std::uint64_t>(static_cast<std::size_t>(bins), 0)};
    for (double v : img.pixels()) ++hist.counts[bin_of(v, bins)];
    return hist;
}

}  // namespace falce::image
