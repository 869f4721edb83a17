#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <array>

#include "nvcav/dynamics/model.hpp"

namespace nvcav {

using Populations = std::array<double, kLevelCount>;  // indexed by Level

/// Rate matrix of the level scheme under a CW laser without spectral diffusion.
inline Eigen::Matrix<double, 7, 7> cw_rate_matrix(const RateModel& r, double laser_ghz, double power_nW) {
  r.validate();
  Eigen::Matrix<double, 7, 7> q = Eigen::Matrix<double, 7, 7>::Zero();
  auto flow = [&](Level a, Level b, double rate) {
    const auto i = static_cast<int>(a), j = static_cast<int>(b);
    q(j, i) += rate;
    q(i, i) -= rate;
  };
  const double gamma = r.rate();
  const double s = power_nW / (4 * r.p_sat_nW) * gamma;
  const double wy = s * lorentz(1e3 * (laser_ghz - r.freq_ey), r.ey_lorentz_mhz);
  const double wx = s * lorentz(1e3 * (laser_ghz - r.freq_ex), r.ex_lorentz_mhz);
  const double k = r.init_rate_per_ns(power_nW) *
                   (lorentz(1e3 * (laser_ghz - r.freq_e1), r.e12_lorentz_mhz) + lorentz(1e3 * (laser_ghz - r.freq_e2), r.e12_lorentz_mhz));
  flow(Level::G0, Level::Ey, wy);
  flow(Level::Ey, Level::G0, wy);
  flow(Level::G0, Level::Ex, wx);
  flow(Level::Ex, Level::G0, wx);
  for (Level m : {Level::Gm1, Level::Gp1}) {
    flow(Level::G0, m, 0.5 * k * (1 - r.init_steady_g0));
    flow(m, Level::G0, k * r.init_steady_g0);
  }
  for (Level e : {Level::Ey, Level::Ex}) {
    flow(e, Level::G0, gamma * (r.rest_to_g0() + r.zpl_fraction));
    flow(e, Level::Singlet, gamma * r.singlet_prob());
    flow(e, Level::Gm1, 0.5 * gamma * r.spin_flip_prob);
    flow(e, Level::Gp1, 0.5 * gamma * r.spin_flip_prob);
  }
  const double ks = 1 / r.singlet_lifetime_ns;
  flow(Level::Singlet, Level::G0, ks * r.singlet_to_g0);
  flow(Level::Singlet, Level::Gm1, 0.5 * ks * (1 - r.singlet_to_g0));
  flow(Level::Singlet, Level::Gp1, 0.5 * ks * (1 - r.singlet_to_g0));
  return q;
}

inline Populations repump_populations(const RateModel& r) {
  Populations p{};
  p[static_cast<std::size_t>(Level::G0)] = r.repump_success * r.repump_g0;
  p[static_cast<std::size_t>(Level::Gm1)] = p[static_cast<std::size_t>(Level::Gp1)] = 0.5 * r.repump_success * (1 - r.repump_g0);
  p[static_cast<std::size_t>(Level::NV0)] = 1 - r.repump_success;
  return p;
}

/// Populations after `t_ns` of CW drive from `start`, by matrix exponential.
inline Populations cw_populations(const RateModel& r, double laser_ghz, double power_nW, double t_ns, const Populations& start) {
  if (!(t_ns >= 0)) throw InvalidParameter("drive duration must be non-negative");
  Eigen::Matrix<double, 7, 1> p;
  for (std::size_t i = 0; i < kLevelCount; ++i) p[static_cast<Eigen::Index>(i)] = start[i];
  const Eigen::Matrix<double, 7, 1> out = (cw_rate_matrix(r, laser_ghz, power_nW) * t_ns).exp() * p;
  Populations res{};
  for (std::size_t i = 0; i < kLevelCount; ++i) res[i] = out[static_cast<Eigen::Index>(i)];
  return res;
}

}  // namespace nvcav
