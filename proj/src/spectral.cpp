/**
 * @file spectral.cpp
 * @brief FFTW-backed 2D transforms and the amplitude-swap operator
 */

#include "falce/spectral.hpp"
#include "falce/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

namespace falce::spectral {

namespace {

// FFTW's planner is not re-entrant; execution of distinct plans is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(fftw_complex* p) const noexcept { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

std::vector<Complex> transform(const std::vector<Complex>& in, int width, int height, int sign) {
    const std::size_t n = in.size();
    FftwBuffer buf(fftw_alloc_complex(n));
    if (!buf) throw std::bad_alloc();
    static_assert(sizeof(Complex) == sizeof(fftw_complex));
    std::memcpy(buf.get(), in.data(), n * sizeof(Complex));

    fftw_plan plan = nullptr;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_2d(height, width, buf.get(), buf.get(), sign, FFTW_ESTIMATE);
    }
    if (!plan) throw NumericalError("FFTW could not create a plan for " + std::to_string(width) +
                                    "x" + std::to_string(height));
    fftw_execute(plan);
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    std::vector<Complex> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = Complex(buf[i][0], buf[i][1]);
    return out;
}

void require_same_shape(const RealMatrix& a, const RealMatrix& b) {
    if (a.width != b.width || a.height != b.height) {
        throw DimensionMismatch("matrix shapes differ");
    }
}

/// Inclusive index range of the band along one axis of length n.
std::pair<int, int> band(int n, double beta) {
    const int c = n / 2;
    const int e = static_cast<int>(std::floor(beta * n / 2.0));
    int lo = c - e;
    int hi = (n % 2 == 0) ? c + e - 1 : c + e;
    hi = std::max(hi, c);
    return {std::max(lo, 0), std::min(hi, n - 1)};
}

}  // namespace

std::size_t BetaMask::count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

Spectrum fft2(const GrayImage& img) {
    std::vector<Complex> in(img.pixels().begin(), img.pixels().end());
    return Spectrum{img.width(), img.height(), transform(in, img.width(), img.height(), FFTW_FORWARD),
                    false};
}

RealMatrix ifft2_real(const Spectrum& spec, double* imag_max) {
    if (spec.width < 1 || spec.height < 1 ||
        spec.coeffs.size() != static_cast<std::size_t>(spec.width) * spec.height) {
        throw InvalidArgument("spectrum dimensions do not match its coefficient count");
    }
    const Spectrum base = spec.centered ? unshift_center(spec) : spec;
    const auto out = transform(base.coeffs, base.width, base.height, FFTW_BACKWARD);
    const double norm = 1.0 / (static_cast<double>(base.width) * base.height);
    RealMatrix m{base.width, base.height, std::vector<double>(out.size())};
    double worst = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        m.values[i] = out[i].real() * norm;
        worst = std::max(worst, std::abs(out[i].imag() * norm));
    }
    if (imag_max) *imag_max = worst;
    return m;
}

GrayImage ifft2(const Spectrum& spec) {
    auto m = ifft2_real(spec);
    for (auto& v : m.values) v = std::clamp(v, 0.0, 1.0);
    return GrayImage(m.width, m.height, std::move(m.values));
}

Spectrum shift_center(const Spectrum& spec) {
    Spectrum out{spec.width, spec.height, std::vector<Complex>(spec.coeffs.size()), true};
    const int oy = spec.height / 2;
    const int ox = spec.width / 2;
    for (int y = 0; y < spec.height; ++y) {
        const int ty = (y + oy) % spec.height;
        for (int x = 0; x < spec.width; ++x) {
            const int tx = (x + ox) % spec.width;
            out.coeffs[static_cast<std::size_t>(ty) * spec.width + tx] = spec.at(x, y);
        }
    }
    return out;
}

Spectrum unshift_center(const Spectrum& spec) {
    Spectrum out{spec.width, spec.height, std::vector<Complex>(spec.coeffs.size()), false};
    const int oy = spec.height / 2;
    const int ox = spec.width / 2;
    for (int y = 0; y < spec.height; ++y) {
        const int sy = (y + oy) % spec.height;
        for (int x = 0; x < spec.width; ++x) {
            const int sx = (x + ox) % spec.width;
            out.coeffs[static_cast<std::size_t>(y) * spec.width + x] = spec.at(sx, sy);
        }
    }
    return out;
}

RealMatrix amplitude(const Spectrum& spec) {
    RealMatrix m{spec.width, spec.height, std::vector<double>(spec.coeffs.size())};
    for (std::size_t i = 0; i < spec.coeffs.size(); ++i) m.values[i] = std::abs(spec.coeffs[i]);
    return m;
}

RealMatrix phase(const Spectrum& spec) {
    RealMatrix m{spec.width, spec.height, std::vector<double>(spec.coeffs.size())};
    for (std::size_t i = 0; i < spec.coeffs.size(); ++i) {
        const Complex c = spec.coeffs[i];
        if (c.real() == 0.0 && c.imag() == 0.0) {
            m.values[i] = 0.0;
            continue;
        }
        double p = std::atan2(c.imag(), c.real());
        // atan2 yields -pi for (-x, -0.0); fold onto the half-open interval.
        if (p <= -std::numbers::pi) p = std::numbers::pi;
        m.values[i] = p;
    }
    return m;
}

Spectrum from_polar(const RealMatrix& amp, const RealMatrix& ph, bool centered) {
    require_same_shape(amp, ph);
    Spectrum s{amp.width, amp.height, std::vector<Complex>(amp.values.size()), centered};
    for (std::size_t i = 0; i < amp.values.size(); ++i) s.coeffs[i] = std::polar(amp.values[i], ph.values[i]);
    return s;
}

BetaMask beta_mask(int height, int width, double beta) {
    if (!(beta > 0.0 && beta <= 1.0)) {
        throw InvalidArgument("beta must lie in (0, 1], got " + std::to_string(beta));
    }
    if (height < 1 || width < 1) throw InvalidArgument("mask dimensions must be >= 1");
    BetaMask mask{beta, width, height,
                  std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};
    const auto [r0, r1] = band(height, beta);
    const auto [c0, c1] = band(width, beta);
    for (int y = r0; y <= r1; ++y) {
        for (int x = c0; x <= c1; ++x) mask.bits[static_cast<std::size_t>(y) * width + x] = 1;
    }
    return mask;
}

Spectrum fda_spectrum(const GrayImage& src, const GrayImage& tgt, double beta) {
    if (src.width() != tgt.width() || src.height() != tgt.height()) {
        throw DimensionMismatch("source is " + std::to_string(src.width()) + "x" +
                                std::to_string(src.height()) + " but target is " +
                                std::to_string(tgt.width()) + "x" + std::to_string(tgt.height()));
    }
    const auto mask = beta_mask(src.height(), src.width(), beta);
    Spectrum s = shift_center(fft2(src));
    const Spectrum t = shift_center(fft2(tgt));
    for (std::size_t i = 0; i < s.coeffs.size(); ++i) {
        if (!mask.bits[i]) continue;
        // Rescaling keeps the source phase without a polar round trip.
        const double a_src = std::abs(s.coeffs[i]);
        const double a_tgt = std::abs(t.coeffs[i]);
        s.coeffs[i] = a_src > 0.0 ? s.coeffs[i] * (a_tgt / a_src) : Complex(a_tgt, 0.0);
    }
    return unshift_center(s);
}

RealMatrix fda_transfer_unclamped(const GrayImage& src, const GrayImage& tgt, double beta) {
    return ifft2_real(fda_spectrum(src, tgt, beta));
}

GrayImage fda_transfer(const GrayImage& src, const GrayImage& tgt, double beta) {
    return ifft2(fda_spectrum(src, tgt, beta));
}

}  // namespace falce::spectral
