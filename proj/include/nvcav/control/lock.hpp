#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "nvcav/cavity/cavity.hpp"
#include "nvcav/cavity/voigt.hpp"
#include "nvcav/errors.hpp"
#include "nvcav/rng.hpp"

namespace nvcav {

/// Side-of-fringe cavity lock. Displacements in pm, measured from the lock
/// laser resonance; the fringe is the Lorentzian cavity line averaged over the
/// fast Gaussian vibration.
struct LockPlant {
  double fwhm_pm = 1690.0 / 34.0;
  double vibration_rms_pm = 22.0;
  double dispersion_slope = 34.0;  // MHz/pm
  double peak_rate_hz = 700e3;     // on resonance, vibration included
  double probe_us = 100.0;
  unsigned probes_per_update = 100;
  double loop_period_s = 0.1;
  double drift_pm_per_s = 1.0;
  double gain = 0.3;
  double setpoint_counts = 0;      // per update; 0 selects half the peak counts
  double slope_calibration = 1.0;  // controller slope estimate relative to the true flank slope
  bool linearized = false;
  bool shot_noise = true;

  static LockPlant from_cavity(const CavityMode& mode, const VibrationSpec& v = {}) {
    LockPlant p;
    p.dispersion_slope = mode.dispersion_slope;
    p.fwhm_pm = 1e3 * mode.lorentzian_fwhm / mode.dispersion_slope;
    p.vibration_rms_pm = v.rms_displacement;
    return p;
  }

  void validate() const {
    if (!std::isfinite(gain)) throw InvalidParameter("lock gain must be finite");
    if (!(gain > 0)) throw InvalidParameter("lock gain must be positive");
    if (!(fwhm_pm > 0 && dispersion_slope > 0)) throw InvalidParameter("fringe width and dispersion slope must be positive");
    if (!(vibration_rms_pm >= 0)) throw InvalidParameter("vibration must be non-negative");
    if (!(peak_rate_hz > 0 && probe_us > 0 && probes_per_update > 0 && loop_period_s > 0))
      throw InvalidParameter("probe settings must be positive");
    if (!(slope_calibration > 0)) throw InvalidParameter("slope calibration must be positive");
    if (!(setpoint() > 0 && setpoint() < peak_counts())) throw InvalidParameter("setpoint must lie inside the fringe");
  }

  double peak_counts() const { return peak_rate_hz * 1e-6 * probe_us * probes_per_update; }
  double setpoint() const { return setpoint_counts > 0 ? setpoint_counts : 0.5 * peak_counts(); }

  /// Relative transmission at displacement `x_pm`, 1 on resonance.
  double transmission(double x_pm) const {
    if (vibration_rms_pm == 0) {
      const double u = 2 * x_pm / fwhm_pm;
      return 1 / (1 + u * u);
    }
    return voigt(x_pm, vibration_rms_pm, fwhm_pm / 2) / voigt(0.0, vibration_rms_pm, fwhm_pm / 2);
  }

  /// Lock point on the positive flank where the expected counts equal the setpoint.
  double lock_point() const {
    const double target = setpoint() / peak_counts();
    double lo = 0, hi = 20 * (fwhm_pm + vibration_rms_pm);
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (transmission(mid) > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  /// dN/dx at the lock point in counts per pm (negative on the positive flank).
  double flank_slope() const {
    const double x = lock_point(), h = 1e-4 * (fwhm_pm + vibration_rms_pm);
    return peak_counts() * (transmission(x + h) - transmission(x - h)) / (2 * h);
  }

  /// Expected counts per update at lock error `e_pm`.
  double expected_counts(double e_pm) const {
    if (linearized) return std::max(0.0, setpoint() + flank_slope() * e_pm);
    return peak_counts() * transmission(lock_point() + e_pm);
  }

  /// Loop factor kappa' of the linearized error map e -> (1 - g kappa') e + d.
  double loop_factor() const { return 1 / slope_calibration; }
  double drift_per_step() const { return drift_pm_per_s * loop_period_s; }
};

struct LockTrace {
  std::vector<double> t_s;
  std::vector<double> error_pm;  // before each correction
  std::vector<double> counts;
  double rms_pm = 0;             // over the second half of the trace
  double mean_pm = 0;
  double rms_mhz = 0;
  bool stable = true;
  bool lost_lock = false;
};

/// Discrete proportional lock; the controller steps the piezo by
/// gain * (N - N_set) / |slope estimate| once per update.
inline LockTrace run_lock(const LockPlant& p, double duration_s, std::uint64_t seed = 1, double initial_error_pm = 0) {
  p.validate();
  if (!(duration_s > 0)) throw InvalidParameter("lock duration must be positive");
  const auto steps = static_cast<std::size_t>(std::ceil(duration_s / p.loop_period_s));
  const double slope = std::abs(p.flank_slope()) * p.slope_calibration;
  const double set = p.setpoint(), d = p.drift_per_step();
  const double bound = p.lock_point() + 2 * p.fwhm_pm;
  Rng rng(seed, 0x10c4);
  LockTrace tr;
  double e = initial_error_pm;
  for (std::size_t k = 0; k < steps; ++k) {
    const double mean = p.expected_counts(e);
    const double n = p.shot_noise ? static_cast<double>(rng.poisson(mean)) : mean;
    tr.t_s.push_back(k * p.loop_period_s);
    tr.error_pm.push_back(e);
    tr.counts.push_back(n);
    e += p.gain * (n - set) / slope + d;
    if (!std::isfinite(e) || std::abs(e) > bound) {
      tr.lost_lock = true;
      break;
    }
  }
  if (tr.lost_lock || std::abs(1 - p.gain * p.loop_factor()) >= 1) tr.stable = false;
  const std::size_t from = tr.error_pm.size() / 2;
  double s = 0, s2 = 0;
  for (std::size_t i = from; i < tr.error_pm.size(); ++i) {
    s += tr.error_pm[i];
    s2 += tr.error_pm[i] * tr.error_pm[i];
  }
  const double n = static_cast<double>(tr.error_pm.size() - from);
  if (n > 0) {
    tr.mean_pm = s / n;
    tr.rms_pm = std::sqrt(s2 / n);
  }
  tr.rms_mhz = tr.rms_pm * p.dispersion_slope;
  return tr;
}

/// Steady-state offset of the linearized loop under constant drift.
inline double lock_steady_offset(const LockPlant& p) { return p.drift_per_step() / (p.gain * p.loop_factor()); }

}  // namespace nvcav
