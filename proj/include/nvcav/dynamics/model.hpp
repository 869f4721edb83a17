#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cmath>
#include <numbers>
#include <string>

#include "nvcav/core_model.hpp"
#include "nvcav/errors.hpp"

namespace nvcav {

enum class Level : std::uint8_t { G0 = 0, Gm1, Gp1, Ey, Ex, Singlet, NV0 };
inline constexpr std::size_t kLevelCount = 7;

inline const char* to_string(Level l) {
  switch (l) {
    case Level::G0: return "g0";
    case Level::Gm1: return "g-1";
    case Level::Gp1: return "g+1";
    case Level::Ey: return "Ey";
    case Level::Ex: return "Ex";
    case Level::Singlet: return "singlet";
    case Level::NV0: return "NV0";
  }
  return "?";
}

/// Probability vector over the levels.
struct LevelSet {
  std::array<double, kLevelCount> p{};

  double& operator[](Level l) { return p[static_cast<std::size_t>(l)]; }
  double operator[](Level l) const { return p[static_cast<std::size_t>(l)]; }
  double sum() const {
    double s = 0;
    for (double v : p) s += v;
    return s;
  }
  void validate(double tol = 1e-12) const {
    for (double v : p)
      if (!(v >= -tol && v <= 1 + tol)) throw InvalidParameter("level population outside [0, 1]");
    if (std::abs(sum() - 1) > tol) throw InvalidParameter("level populations do not sum to 1");
  }
};

/// Cavity configuration the emitter is coupled to during a measurement.
enum class CavitySetting { LF, HF, OffResonance };

inline const char* to_string(CavitySetting c) {
  switch (c) {
    case CavitySetting::LF: return "LF";
    case CavitySetting::HF: return "HF";
    case CavitySetting::OffResonance: return "off";
  }
  return "?";
}

struct RateModel {
  // Optical decay of the readout excited state
  double lifetime_ns = 7.8;
  double zpl_fraction = 0.17966;           // emission into the detected cavity mode
  double extra_rate = 2.0 / 110.0;         // 1/ns, excited state -> singlet
  double spin_flip_prob = 0.028893;         // direct excited state -> m_s = +-1 per cycle
  double singlet_lifetime_ns = 500.0;
  double singlet_to_g0 = 0.5;
  double emission_delay_ns = 1.0;          // inversion instant relative to the pulse center

  // Short-pulse excitation
  double p_pi_uW = 51.1494;                  // p_exc = 1 - exp(-P / p_pi)
  double cal_power_uW = 35.0;
  double pump_return_prob = 1e-4;          // m_s = +-1 -> 0 per pulse at cal power

  // Spin initialization on E1 (rates scale linearly with power)
  double init_ref_power_nW = 0.2;
  double init_rate_sum_per_us = 1.0 / 9.1;
  double init_steady_g0 = 0.923894;

  // Charge repump
  double repump_success = 0.744537;
  double repump_g0 = 0.7;

  // Continuous-wave response
  double p_sat_nW = 100.0;
  double ey_lorentz_mhz = 20.4;
  double ey_inhomogeneous_mhz = 32.74;     // Gaussian spectral-diffusion FWHM per repetition
  double ex_lorentz_mhz = 100.0;
  double e12_lorentz_mhz = 100.0;

  // Optical transition frequencies, GHz offsets from the anchor
  double freq_ey = -23.34;
  double freq_ex = 10.0;
  double freq_e1 = -26.0;
  double freq_e2 = -24.5;

  double rate() const { return 1.0 / lifetime_ns; }
  double singlet_prob() const { return extra_rate * lifetime_ns; }
  double rest_to_g0() const { return 1.0 - zpl_fraction - singlet_prob() - spin_flip_prob; }
  double p_exc(double peak_uW) const { return peak_uW <= 0 ? 0.0 : -std::expm1(-peak_uW / p_pi_uW); }
  double return_prob(double peak_uW) const {
    const double ref = p_exc(cal_power_uW);
    return ref > 0 ? std::min(1.0, pump_return_prob * p_exc(peak_uW) / ref) : 0.0;
  }
  double init_rate_per_ns(double power_nW) const { return init_rate_sum_per_us * 1e-3 * power_nW / init_ref_power_nW; }

  void validate() const {
    if (!(lifetime_ns > 0)) throw InvalidParameter("excited-state lifetime must be positive");
    if (!std::isfinite(lifetime_ns)) throw InvalidParameter("excited state has zero decay rate");
    if (!(singlet_lifetime_ns > 0)) throw InvalidParameter("singlet lifetime must be positive");
    if (!std::isfinite(singlet_lifetime_ns) && extra_rate > 0) throw InvalidParameter("singlet has zero decay rate");
    if (!(p_pi_uW > 0)) throw InvalidParameter("p_pi must be positive");
    if (!(p_sat_nW > 0)) throw InvalidParameter("saturation power must be positive");
    for (double v : {zpl_fraction, spin_flip_prob, singlet_to_g0, pump_return_prob, init_steady_g0, repump_success, repump_g0})
      if (!(v >= 0 && v <= 1)) throw InvalidParameter("branching probabilities must lie in [0, 1]");
    if (extra_rate < 0 || init_rate_sum_per_us < 0 || emission_delay_ns < 0) throw InvalidParameter("rates must be non-negative");
    if (rest_to_g0() < -1e-12) throw InvalidParameter("excited-state branching fractions exceed 1");
  }
};

struct BackgroundModel {
  double dark_rate_hz = 2936.70;           // flat rate while the detector is gated on
  double leakage_hz_per_nW = 200.0;        // laser leakage at the reference suppression
  double reference_suppression_db = 60.0;
  double suppression_db = 60.0;
  double prompt_sigma_ns = 1.94 / 2.3548200450309493;
  double echo_delay_ns = -5.0;
  double echo_ratio = 0.3;                 // backscatter echo relative to prompt leakage
  // Late-time contribution of other emitters, off by default.
  enum class Secondary { Off, WeakEmitter, SlowExponential } secondary = Secondary::Off;
  double secondary_prob = 0.0;             // per pulse at the calibration power
  double secondary_lifetime_ns = 40.0;

  double leakage_scale() const { return std::pow(10.0, -(suppression_db - reference_suppression_db) / 10.0); }
  /// Leakage click rate in 1/ns for a laser power in nW.
  double leakage_rate(double power_nW) const { return leakage_hz_per_nW * 1e-9 * power_nW * leakage_scale(); }
  double dark_rate() const { return dark_rate_hz * 1e-9; }

  void validate() const {
    for (double v : {dark_rate_hz, leakage_hz_per_nW, echo_ratio, secondary_prob, prompt_sigma_ns})
      if (v < 0) throw InvalidParameter("background rates must be non-negative");
    if (secondary_prob > 1) throw InvalidParameter("secondary emitter probability must be <= 1");
    if (secondary != Secondary::Off && !(secondary_lifetime_ns > 0)) throw InvalidParameter("secondary lifetime must be positive");
  }
};

/// Detection efficiency after the cavity mode (outcoupling x path x detector), window excluded.
inline double detection_efficiency(const EfficiencyChain& c) { return c.detection(); }

/// Fraction of an exponential emission starting at `start` that falls in [lo, hi).
inline double emission_window_fraction(double tau, double lo = 3.0, double hi = 30.0, double start = 1.0) {
  if (!(tau > 0)) throw InvalidParameter("lifetime must be positive");
  if (hi < lo) throw InvalidParameter("inverted emission window");
  if (lo < start) throw InvalidParameter("window must start after the emission onset");
  const double b = std::isinf(hi) ? 0.0 : std::exp(-(hi - start) / tau);
  return std::exp(-(lo - start) / tau) - b;
}

/// Cavity-mode branching of a detuned cavity, Lorentzian in the detuning.
inline double detuned_purcell(double f_peak, double detuning_ghz, double kappa_ghz) {
  if (!(kappa_ghz > 0)) throw InvalidParameter("cavity linewidth must be positive");
  const double x = 2 * detuning_ghz / kappa_ghz;
  return f_peak / (1 + x * x);
}

inline double lorentz(double detuning_mhz, double fwhm_mhz) {
  const double x = 2 * detuning_mhz / fwhm_mhz;
  return 1.0 / (1 + x * x);
}

/// Lifetime and mode branching of the emitter for the three measured cavity settings.
struct CavityCoupling {
  double lifetime_lf = 7.8;
  double lifetime_hf = 9.0;
  double lifetime_off = 9.5;
  double purcell_lf = 7.3;
  double off_detuning_ghz = -4.0;
  double kappa_ghz = 1.69;

  double lifetime(CavitySetting s) const {
    switch (s) {
      case CavitySetting::LF: return lifetime_lf;
      case CavitySetting::HF: return lifetime_hf;
      case CavitySetting::OffResonance: return lifetime_off;
    }
    return lifetime_lf;
  }
  double zpl_fraction(CavitySetting s, double beta0) const {
    switch (s) {
      case CavitySetting::LF: return zpl_branching(purcell_lf, beta0);
      case CavitySetting::HF: return zpl_branching(purcell_factor(lifetime_off, lifetime_hf, beta0), beta0);
      case CavitySetting::OffResonance: return zpl_branching(detuned_purcell(purcell_lf, off_detuning_ghz, kappa_ghz), beta0);
    }
    return 0;
  }
};

inline RateModel configure(RateModel m, const CavityCoupling& c, CavitySetting s, double beta0 = 0.03) {
  m.lifetime_ns = c.lifetime(s);
  m.zpl_fraction = c.zpl_fraction(s, beta0);
  return m;
}

}  // namespace nvcav
