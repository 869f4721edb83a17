#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>

#include "nvcav/core_model.hpp"
#include "nvcav/errors.hpp"

namespace nvcav {

using Cplx = std::complex<double>;
using Mat2c = Eigen::Matrix2cd;

/// Qubit over {|0> = m_s 0, |1> = m_s -1}; `leak` is the m_s = +1 population.
struct QubitState {
  Mat2c rho = (Mat2c() << 1, 0, 0, 0).finished();
  double leak = 0;

  static QubitState ground() { return {}; }
  static QubitState excited() {
    QubitState q;
    q.rho << 0, 0, 0, 1;
    return q;
  }

  double p0() const { return rho(0, 0).real(); }
  double p1() const { return rho(1, 1).real(); }
  double trace() const { return rho.trace().real() + leak; }

  void validate(double tol = 1e-10) const {
    if (std::abs(trace() - 1) > tol) throw InvalidParameter("qubit trace plus leakage must equal 1");
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > tol) throw InvalidParameter("density matrix is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Mat2c> es(rho);
    if (es.eigenvalues().minCoeff() < -tol) throw InvalidParameter("density matrix is not positive semidefinite");
    if (leak < -tol) throw InvalidParameter("negative leakage population");
  }
};

struct MWPulse {
  double rabi_mhz = 10.73;
  double duration_ns = 0;
  double phase = 0;         // rad, rotation axis in the xy plane
  double detuning_mhz = 0;

  /// Nominal rotation angle 2 pi Omega t.
  double angle() const { return 2 * std::numbers::pi * rabi_mhz * 1e-3 * duration_ns; }

  static MWPulse rotation(double angle, double phase = 0, double rabi_mhz = 10.73) {
    return {rabi_mhz, angle / (2 * std::numbers::pi * rabi_mhz * 1e-3), phase, 0};
  }
  static MWPulse pi(double phase = 0, double rabi_mhz = 10.73) { return rotation(std::numbers::pi, phase, rabi_mhz); }
  static MWPulse half_pi(double phase = 0, double rabi_mhz = 10.73) { return rotation(std::numbers::pi / 2, phase, rabi_mhz); }
};

struct NoiseModel {
  double t2_star_ns = 170.0;
  double decay_exponent = 2.0;               // 2: Gaussian quasi-static noise; (0, 2]: symmetric stable
  double hyperfine_mhz = 2.68;
  std::array<double, 3> nitrogen{1.0 / 3, 1.0 / 3, 1.0 / 3};  // P_k for m_I = -1, 0, +1
  double echo_decay_us = 180.0;              // Gaussian envelope in the total delay
  double revival_depth = 4.0;                // collapse strength between revivals
  double larmor_period_us = larmor_period(1.0705, 37.5);
  double pi_fidelity = 0.83;

  void validate() const {
    double s = 0;
    for (double p : nitrogen) {
      if (!(p >= 0)) throw InvalidParameter("nitrogen populations must be non-negative");
      s += p;
    }
    if (std::abs(s - 1) > 1e-9) throw InvalidParameter("nitrogen populations must sum to 1");
    if (!(t2_star_ns > 0 && echo_decay_us > 0 && larmor_period_us > 0)) throw InvalidParameter("noise times must be positive");
    if (!(decay_exponent > 0 && decay_exponent <= 2)) throw InvalidParameter("decay exponent must lie in (0, 2]");
    if (!(pi_fidelity >= 0 && pi_fidelity <= 1)) throw InvalidParameter("pi fidelity must lie in [0, 1]");
    if (!(revival_depth >= 0)) throw InvalidParameter("revival depth must be non-negative");
  }

  /// Depolarizing strength of a pulse with nominal angle `theta`: grows
  /// linearly up to a pi pulse, which transfers |0> -> |1> with probability
  /// pi_fidelity, and stays there for longer pulses.
  double depolarizing(double theta) const {
    const double p_pi = std::min(1.0, 2 * (1 - pi_fidelity));
    return p_pi * std::min(1.0, std::abs(theta) / std::numbers::pi);
  }

  /// Echo coherence after total free time `tau_us` (split in two halves).
  double echo_coherence(double tau_us) const {
    const double x = tau_us / echo_decay_us;
    const double s = std::sin(std::numbers::pi * (tau_us / 2) / larmor_period_us);
    return std::exp(-x * x) * std::exp(-revival_depth * s * s);
  }
};

inline NoiseModel ideal_noise() {
  NoiseModel n;
  n.pi_fidelity = 1;
  n.t2_star_ns = 1e300;
  n.hyperfine_mhz = 0;
  n.nitrogen = {0, 1, 0};
  n.echo_decay_us = 1e300;
  n.revival_depth = 0;
  return n;
}

/// Propagator of a pulse in the rotating frame, H = pi (Omega (cos phi X + sin phi Y) + delta Z) in rad/ns.
inline Mat2c mw_unitary(const MWPulse& p) {
  const double w = 2 * std::numbers::pi * 1e-3;
  const double ox = w * p.rabi_mhz * std::cos(p.phase), oy = w * p.rabi_mhz * std::sin(p.phase), oz = w * p.detuning_mhz;
  const double norm = std::sqrt(ox * ox + oy * oy + oz * oz);
  const double a = norm * p.duration_ns / 2;
  if (norm == 0) return Mat2c::Identity();
  const double nx = ox / norm, ny = oy / norm, nz = oz / norm;
  const Cplx i(0, 1);
  Mat2c u;
  u << std::cos(a) - i * nz * std::sin(a), -i * (nx - i * ny) * std::sin(a), -i * (nx + i * ny) * std::sin(a),
      std::cos(a) + i * nz * std::sin(a);
  return u;
}

/// Free precession for `t_ns` at detuning `delta_mhz`.
inline Mat2c free_unitary(double delta_mhz, double t_ns) {
  const double a = std::numbers::pi * 1e-3 * delta_mhz * t_ns;
  Mat2c u = Mat2c::Zero();
  u(0, 0) = std::polar(1.0, -a);
  u(1, 1) = std::polar(1.0, a);
  return u;
}

inline void depolarize(QubitState& q, double p) {
  const Cplx tr = q.rho.trace();
  q.rho = (1 - p) * q.rho + p * tr / 2.0 * Mat2c::Identity();
}

inline void dephase(QubitState& q, double coherence) {
  q.rho(0, 1) *= coherence;
  q.rho(1, 0) *= coherence;
}

inline QubitState apply_mw(QubitState q, const MWPulse& p, const NoiseModel& n) {
  if (!(p.duration_ns >= 0)) throw InvalidParameter("pulse duration must be non-negative");
  const Mat2c u = mw_unitary(p);
  q.rho = u * q.rho * u.adjoint();
  depolarize(q, n.depolarizing(p.angle()));
  return q;
}

inline QubitState evolve_free(QubitState q, double delta_mhz, double t_ns) {
  const Mat2c u = free_unitary(delta_mhz, t_ns);
  q.rho = u * q.rho * u.adjoint();
  return q;
}

}  // namespace nvcav
