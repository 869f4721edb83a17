#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "nvcav/errors.hpp"
#include "nvcav/rng.hpp"

namespace nvcav {

using Jones = Eigen::Matrix2cd;

inline Jones jones_rotation(double theta) {
  Jones r;
  r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return r;
}

/// Linear retarder with fast axis at `theta` and retardance `delta`.
inline Jones retarder(double theta, double delta) {
  Jones d = Jones::Zero();
  d(0, 0) = std::polar(1.0, -delta / 2);
  d(1, 1) = std::polar(1.0, delta / 2);
  return jones_rotation(theta) * d * jones_rotation(-theta);
}

inline Jones qwp(double theta) { return retarder(theta, std::numbers::pi / 2); }
inline Jones hwp(double theta) { return retarder(theta, std::numbers::pi); }

/// Projector onto linear polarization at `theta`.
inline Jones polarizer(double theta) {
  Eigen::Vector2cd v(std::cos(theta), std::sin(theta));
  return v * v.adjoint();
}

inline double jones_intensity(const Eigen::Vector2cd& e) { return e.squaredNorm(); }

inline constexpr double kMaxSuppressionDb = 120.0;

/// Excitation path polarizer -> QWP -> HWP -> PBS (reflected port) -> HWP ->
/// QWP -> birefringent cavity -> analyzer. `angles` = {QWP1, HWP1, HWP2, QWP2}.
struct PolarizationPlant {
  std::array<double, 4> angles{};
  double input_angle = std::numbers::pi / 2;
  double pbs_angle = std::numbers::pi / 2;
  double analyzer_angle = 0;
  double cavity_axis = 0.3;
  double cavity_retardance = 0.6;
  std::array<double, 4> drift_rad_per_s{};

  void validate() const {
    for (double a : angles)
      if (!std::isfinite(a)) throw InvalidParameter("waveplate angles must be finite");
    for (double v : {input_angle, pbs_angle, analyzer_angle, cavity_axis, cavity_retardance})
      if (!std::isfinite(v)) throw InvalidParameter("plant parameters must be finite");
  }

  /// Elements in propagation order.
  std::vector<Jones> chain() const {
    return {polarizer(input_angle), qwp(angles[0]),  hwp(angles[1]), polarizer(pbs_angle), hwp(angles[2]),
            qwp(angles[3]),         retarder(cavity_axis, cavity_retardance), polarizer(analyzer_angle)};
  }

  void drift(double dt_s) {
    for (int i = 0; i < 4; ++i) angles[i] += drift_rad_per_s[i] * dt_s;
  }
};

inline Jones compose(const std::vector<Jones>& chain) {
  Jones m = Jones::Identity();
  for (const auto& j : chain) m = j * m;
  return m;
}

/// Fraction of the field reaching the cavity that leaks through the analyzer.
inline double leakage(const PolarizationPlant& p) {
  p.validate();
  const auto c = p.chain();
  Eigen::Vector2cd e(1, 0);
  e = jones_rotation(p.input_angle) * e;  // unit field along the input polarizer
  for (int i = 0; i < 4; ++i) e = c[i] * e;
  const double at_cavity = jones_intensity(e);
  if (at_cavity < 1e-12) return 1.0;
  for (std::size_t i = 4; i < c.size(); ++i) e = c[i] * e;
  return jones_intensity(e) / at_cavity;
}

inline double suppression_db(double leak) {
  if (leak <= 0) return kMaxSuppressionDb;
  return std::min(kMaxSuppressionDb, -10 * std::log10(leak));
}

inline double suppression_db(const PolarizationPlant& p) { return suppression_db(leakage(p)); }

struct HillClimbOptions {
  unsigned iterations = 400;   // leakage evaluations
  double initial_step = 0.2;   // rad
  double shrink = 0.5;
  double floor = 1e-4;
  double iteration_period_s = 0.01;
};

struct HillClimbResult {
  std::vector<std::array<double, 4>> angles;  // after each iteration
  std::vector<double> best_db;                // best recorded suppression after each iteration
  double final_db = 0;
  PolarizationPlant plant;
};

/// Coordinate hill climb: try +step then -step on one plate at a time, keep
/// any improvement, halve the step after a full sweep without one.
inline HillClimbResult hill_climb(PolarizationPlant p, const HillClimbOptions& o = {}) {
  p.validate();
  if (!(o.shrink > 0 && o.shrink < 1)) throw InvalidParameter("step shrink factor must lie in (0, 1)");
  if (!(o.initial_step > 0 && o.floor > 0)) throw InvalidParameter("step sizes must be positive");
  HillClimbResult r;
  double current = leakage(p), best = current, step = o.initial_step;
  unsigned plate = 0, sign = 0, unimproved = 0;
  for (unsigned it = 0; it < o.iterations; ++it) {
    PolarizationPlant trial = p;
    trial.angles[plate] += sign == 0 ? step : -step;
    const double v = leakage(trial);
    p.drift(o.iteration_period_s);
    bool next_plate = true;
    if (v < current) {
      p.angles = trial.angles;
      current = v;
      unimproved = 0;
    } else if (sign == 0) {
      sign = 1;
      next_plate = false;
    } else {
      ++unimproved;
    }
    if (next_plate) {
      sign = 0;
      plate = (plate + 1) % 4;
      if (unimproved >= 4) {
        step = std::max(o.floor, step * o.shrink);
        unimproved = 0;
      }
    }
    if (p.drift_rad_per_s != std::array<double, 4>{}) current = leakage(p);
    best = std::min(best, current);
    r.angles.push_back(p.angles);
    r.best_db.push_back(suppression_db(best));
  }
  r.final_db = suppression_db(current);
  r.plant = p;
  return r;
}

inline PolarizationPlant random_start(PolarizationPlant p, std::uint64_t seed) {
  Rng rng(seed, 0x901a);
  for (auto& a : p.angles) a = std::numbers::pi * rng.uniform();
  return p;
}

}  // namespace nvcav
