/**
 * @file spectral.hpp
 * @brief 2D discrete Fourier analysis and low-frequency amplitude transfer
 *
 * Forward transform convention (unnormalized):
 *   F(x)(m, n) = sum_{h,w} x(h, w) exp(-i 2 pi (h m / H + w n / W))
 * The inverse carries the 1/(H W) factor.
 */
#pragma once

#include "falce/image.hpp"

#include <complex>
#include <cstdint>
#include <vector>

namespace falce::spectral {

using image::GrayImage;
using Complex = std::complex<double>;

struct Spectrum {
    int width = 0;
    int height = 0;
    std::vector<Complex> coeffs;  // row-major, height rows of width
    bool centered = false;        // zero frequency at (height/2, width/2)

    Complex at(int col, int row) const { return coeffs[static_cast<std::size_t>(row) * width + col]; }
};

/// Dense real-valued matrix with the same layout as Spectrum.
struct RealMatrix {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    double at(int col, int row) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

/// Low-frequency selector in the centered frame.
///
/// Along an axis of length n the band is centered on c = n/2 with half-extent
/// e = floor(beta * n / 2). Even axes cover the 2e frequencies [-e, e); odd
/// axes cover the 2e+1 frequencies [-e, e]. The zero frequency is always
/// selected, and beta = 1 selects every coefficient.
struct BetaMask {
    double beta = 0.0;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    bool at(int col, int row) const { return bits[static_cast<std::size_t>(row) * width + col] != 0; }
    std::size_t count() const;
};

Spectrum fft2(const GrayImage& img);

/// Inverse transform without clamping; `imag_max` receives max |Im| when non-null.
RealMatrix ifft2_real(const Spectrum& spec, double* imag_max = nullptr);

/// Inverse transform, real part clamped to [0, 1].
GrayImage ifft2(const Spectrum& spec);

Spectrum shift_center(const Spectrum& spec);
Spectrum unshift_center(const Spectrum& spec);

/// Per-coefficient modulus.
RealMatrix amplitude(const Spectrum& spec);

/// Per-coefficient argument in (-pi, pi]; zero-modulus coefficients have phase 0.
RealMatrix phase(const Spectrum& spec);

/// amplitude * exp(i phase), elementwise.
Spectrum from_polar(const RealMatrix& amp, const RealMatrix& ph, bool centered);

/// Throws InvalidArgument when beta is outside (0, 1] or dimensions are < 1.
BetaMask beta_mask(int height, int width, double beta);

/// Recomposed spectrum (uncentered): target amplitude inside the beta band,
/// source amplitude outside it, source phase everywhere.
Spectrum fda_spectrum(const GrayImage& src, const GrayImage& tgt, double beta);

/// Real part of the inverse of fda_spectrum, before clamping.
RealMatrix fda_transfer_unclamped(const GrayImage& src, const GrayImage& tgt, double beta);

/// Amplitude transfer from tgt into src; throws DimensionMismatch on unequal sizes.
GrayImage fda_transfer(const GrayImage& src, const GrayImage& tgt, double beta);

/// Default band size for the preprocessing pipeline.
inline constexpr double kDefaultBeta = 0.01;

}  // namespace falce::spectral
