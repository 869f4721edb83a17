#pragma once

#include <cmath>
#include <string>

#include "nvcav/errors.hpp"

namespace nvcav {

/// Every optical frequency in the library is a GHz offset from this anchor.
inline constexpr double kAnchorTHz = 470.4;

inline constexpr double absolute_thz(double offset_ghz) { return kAnchorTHz + offset_ghz * 1e-3; }

struct Constants {
  double speed_of_light = 299792458.0;  // m/s
  double n_diamond = 2.41;
  double debye_waller_beta0 = 0.03;
  double gamma_c13 = 1.0705;  // kHz/G

  void validate() const {
    if (!(speed_of_light > 0 && gamma_c13 > 0)) throw InvalidParameter("constants must be positive");
    if (!(n_diamond > 1)) throw InvalidParameter("n_diamond must exceed 1");
    if (!(debye_waller_beta0 > 0 && debye_waller_beta0 < 1))
      throw InvalidParameter("debye_waller_beta0 must lie in (0,1)");
  }
};

struct NVParams {
  double freq_Ey = -23.34;  // GHz offsets
  double freq_Ex = 10.0;
  double freq_E1 = -26.0;
  double freq_E2 = -24.5;
  double bulk_lifetime = 12.4;    // ns
  double b_field = 37.5;          // G
  double zeeman_split_pm1 = 210;  // MHz
  double qubit_mw_freq = 2.773;   // GHz
  double hyperfine_n14 = 2.16;    // MHz
  double extra_decay_rate = 2.0 / 110.0;  // 1/ns

  double strain_splitting() const { return freq_Ex - freq_Ey; }

  void validate() const {
    if (!(bulk_lifetime > 0)) throw InvalidParameter("bulk_lifetime must be positive");
    if (!(extra_decay_rate >= 0)) throw InvalidParameter("extra_decay_rate must be non-negative");
    if (!(b_field >= 0)) throw InvalidParameter("b_field must be non-negative");
  }
};

struct EfficiencyChain {
  double beta_zpl_mode = 0.18;
  double cavity_outcoupling = 0.39;
  double path_collection = 0.39;
  double detector_qe = 0.70;
  double window_fraction = 0.75;

  void validate() const {
    for (double v : {beta_zpl_mode, cavity_outcoupling, path_collection, detector_qe, window_fraction})
      if (!(v >= 0 && v <= 1)) throw InvalidParameter("efficiency components must lie in [0,1]");
  }

  /// Probability that a photon already in the cavity mode produces a click,
  /// ignoring the time window.
  double detection() const { return cavity_outcoupling * path_collection * detector_qe; }
};

/// A value with a one-sigma uncertainty.
struct Measured {
  double value = 0;
  double sigma = 0;
};

inline double purcell_factor(double tau_off, double tau_p, double beta0) {
  if (!(tau_off > 0) || !(tau_p > 0)) throw InvalidParameter("lifetimes must be positive");
  if (!(beta0 > 0 && beta0 < 1)) throw InvalidParameter("beta0 must lie in (0,1)");
  return (tau_off / tau_p - 1.0) / beta0;
}

/// Linearized propagation of independent lifetime uncertainties.
inline Measured purcell_factor(Measured tau_off, Measured tau_p, double beta0) {
  const double f = purcell_factor(tau_off.value, tau_p.value, beta0);
  const double d_off = 1.0 / (beta0 * tau_p.value);
  const double d_p = -tau_off.value / (beta0 * tau_p.value * tau_p.value);
  return {f, std::hypot(d_off * tau_off.sigma, d_p * tau_p.sigma)};
}

inline double zpl_branching(double f_p, double beta0) {
  if (!(f_p >= 0)) throw InvalidParameter("Purcell factor must be non-negative");
  if (std::isinf(f_p)) return 1.0;
  const double c = beta0 * f_p;
  return c / (c + 1.0);
}

struct ClickBudget {
  double outcoupled = 0;  // ZPL photons leaving through the sample mirror
  double total = 0;       // detector clicks per excitation inside the window
};

inline ClickBudget click_budget(const EfficiencyChain& chain) {
  chain.validate();
  const double out = chain.beta_zpl_mode * chain.cavity_outcoupling;
  return {out, out * chain.path_collection * chain.detector_qe * chain.window_fraction};
}

inline double predicted_offres_lifetime(double bulk_lifetime, double extra_rate) {
  if (!(bulk_lifetime > 0)) throw InvalidParameter("bulk_lifetime must be positive");
  if (!(extra_rate >= 0)) throw InvalidParameter("extra_rate must be non-negative");
  return 1.0 / (1.0 / bulk_lifetime + extra_rate);
}

/// Period in microseconds for a gyromagnetic ratio in kHz/G.
inline double larmor_period(double gamma, double b_field) {
  if (!(gamma > 0) || !(b_field > 0)) throw InvalidParameter("gamma and b_field must be positive");
  return 1e3 / (gamma * b_field);
}

}  // namespace nvcav
