#pragma once

// Brute-force transfer-matrix transmission of a two-mirror hybrid cavity,
// used to cross-check the phase-condition resonance solver.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

using cd = std::complex<double>;

struct M2 {
  cd a, b, c, d;
  M2 operator*(const M2& o) const {
    return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
  }
};

inline M2 mirror(double R) {
  const cd r = -std::sqrt(R);
  const cd t = cd(0, std::sqrt(1 - R));
  return M2{1.0 / t, -r / t, r / t, (t * t - r * r) / t};
}

inline M2 interface(double n1, double n2) {
  const double r12 = (n1 - n2) / (n1 + n2), t12 = 2 * n1 / (n1 + n2);
  const double r21 = -r12, t21 = 2 * n2 / (n1 + n2);
  return M2{1.0 / t12, -r21 / t12, r12 / t12, (t12 * t21 - r12 * r21) / t12};
}

inline M2 propagate(double n, double k, double d) {
  const double phi = n * k * d;
  return M2{std::exp(cd(0, -phi)), 0.0, 0.0, std::exp(cd(0, phi))};
}

/// Intensity transmission at wavelength (nm): outside | mirror | diamond | air | mirror | outside.
inline double transmission(double lambda_nm, double air_um, double diamond_um, double n, double R) {
  const double k = 2 * std::numbers::pi / (lambda_nm * 1e-3);
  M2 t = mirror(R);
  if (diamond_um > 0) t = t * propagate(n, k, diamond_um) * interface(n, 1.0);
  else t = t * interface(n, 1.0);
  t = t * propagate(1.0, k, air_um) * mirror(R);
  return std::norm(1.0 / t.a);
}

/// Transmission peaks located by a dense scan followed by golden-section refinement.
inline std::vector<double> peaks(double lo, double hi, double step, double air, double d, double n, double R) {
  std::vector<double> out;
  auto f = [&](double l) { return transmission(l, air, d, n, R); };
  double prev2 = f(lo), prev1 = f(lo + step);
  for (double l = lo + 2 * step; l <= hi; l += step) {
    const double cur = f(l);
    if (prev1 > prev2 && prev1 >= cur && prev1 > 1e-3) {
      double a = l - 2 * step, b = l;
      const double g = (std::sqrt(5.0) - 1) / 2;
      for (int i = 0; i < 100; ++i) {
        const double x1 = b - g * (b - a), x2 = a + g * (b - a);
        if (f(x1) > f(x2)) b = x2;
        else a = x1;
      }
      out.push_back(0.5 * (a + b));
    }
    prev2 = prev1;
    prev1 = cur;
  }
  return out;
}

}  // namespace oracle
