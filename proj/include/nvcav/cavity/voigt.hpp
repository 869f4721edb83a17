#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>

#include "nvcav/errors.hpp"

namespace nvcav {

namespace detail {

/// Weideman's rational expansion of the Faddeeva function. Coefficients are
/// built once from a cosine transform of exp(-t^2)(L^2+t^2) sampled on the
/// tan-mapped grid.
template <int N>
struct Weideman {
  static constexpr int M = 2 * N;
  double L;
  std::array<double, N> a;

  Weideman() {
    L = std::sqrt(N / std::numbers::sqrt2);
    std::array<double, 2 * M> f{};
    for (int k = -M + 1; k <= M - 1; ++k) {
      const double t = L * std::tan(k * std::numbers::pi / (2.0 * M));
      f[static_cast<std::size_t>(k + M)] = std::exp(-t * t) * (L * L + t * t);
    }
    for (int j = 1; j <= N; ++j) {
      double s = 0;
      for (int k = -M + 1; k <= M - 1; ++k)
        s += f[static_cast<std::size_t>(k + M)] * std::cos(j * k * std::numbers::pi / M);
      a[static_cast<std::size_t>(j - 1)] = s / (2.0 * M);
    }
  }

  std::complex<double> operator()(std::complex<double> z) const {
    const std::complex<double> i(0, 1);
    const std::complex<double> lz = L - i * z;
    const std::complex<double> Z = (L + i * z) / lz;
    std::complex<double> p = a[N - 1];
    for (int j = N - 2; j >= 0; --j) p = p * Z + a[static_cast<std::size_t>(j)];
    return 2.0 * p / (lz * lz) + (1.0 / std::sqrt(std::numbers::pi)) / lz;
  }
};

inline const Weideman<40>& weideman() {
  static const Weideman<40> w;
  return w;
}

}  // namespace detail

/// Faddeeva function w(z) = exp(-z^2) erfc(-iz).
inline std::complex<double> faddeeva(std::complex<double> z) {
  if (z.imag() >= 0) return detail::weideman()(z);
  // Reflection into the upper half plane.
  return 2.0 * std::exp(-z * z) - detail::weideman()(-z);
}

/// Area-normalized Voigt profile with Gaussian standard deviation `sigma` and
/// Lorentzian half width `gamma`.
inline double voigt(double x, double sigma, double gamma) {
  if (sigma < 0 || gamma < 0) throw InvalidParameter("voigt widths must be non-negative");
  if (sigma == 0) {
    if (gamma == 0) throw InvalidParameter("voigt needs a nonzero width");
    return gamma / (std::numbers::pi * (x * x + gamma * gamma));
  }
  if (gamma == 0) return std::exp(-0.5 * x * x / (sigma * sigma)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
  const double s2 = sigma * std::numbers::sqrt2;
  const std::complex<double> z(x / s2, gamma / s2);
  return faddeeva(z).real() / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

inline constexpr double kFwhmToSigma = 0.42466090014400953;  // 1 / (2 sqrt(2 ln 2))

/// Voigt profile parametrized by full widths at half maximum.
inline double voigt_fwhm(double x, double gaussian_fwhm, double lorentzian_fwhm) {
  return voigt(x, gaussian_fwhm * kFwhmToSigma, 0.5 * lorentzian_fwhm);
}

/// Olivero-Longbothum estimate of the total Voigt FWHM.
inline double voigt_total_fwhm(double gaussian_fwhm, double lorentzian_fwhm) {
  return 0.5346 * lorentzian_fwhm +
         std::sqrt(0.2166 * lorentzian_fwhm * lorentzian_fwhm + gaussian_fwhm * gaussian_fwhm);
}

/// Gaussian FWHM that yields a requested total width with a given Lorentzian.
inline double voigt_gaussian_for_total(double total_fwhm, double lorentzian_fwhm) {
  const double r = total_fwhm - 0.5346 * lorentzian_fwhm;
  const double g2 = r * r - 0.2166 * lorentzian_fwhm * lorentzian_fwhm;
  if (!(g2 >= 0)) throw InvalidParameter("total width below the Lorentzian width");
  return std::sqrt(g2);
}

}  // namespace nvcav
