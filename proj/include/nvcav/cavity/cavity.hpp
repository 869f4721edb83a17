#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "nvcav/analysis/nlls.hpp"
#include "nvcav/cavity/voigt.hpp"
#include "nvcav/core_model.hpp"
#include "nvcav/errors.hpp"

namespace nvcav {

struct CavityGeometry {
  double air_gap = 6.39;            // um
  double diamond_thickness = 6.20;  // um
  double bond_gap = 0.0;            // um, air layer between sample mirror and diamond
  double roc_fiber = 21.4;          // um
  int mode_number_q = 67;
  double mirror_fiber_T = 50;    // ppm
  double mirror_sample_T = 875;  // ppm
  double extra_losses = 1260;    // ppm
  double effective_length = 13.2;  // um

  void validate() const {
    if (!(air_gap > 0) || !(diamond_thickness >= 0) || !(roc_fiber > 0) || !(effective_length > 0))
      throw InvalidParameter("cavity lengths must be positive");
    if (!(bond_gap >= 0)) throw InvalidParameter("bond_gap must be non-negative");
    if (mode_number_q < 1) throw InvalidParameter("mode_number_q must be at least 1");
    if (!(mirror_fiber_T >= 0 && mirror_sample_T >= 0 && extra_losses >= 0))
      throw InvalidParameter("mirror transmissions and losses must be non-negative");
  }
};

enum class Polarization { LF, HF };
enum class Branch { AirLike, DiamondLike };

inline const char* to_string(Branch b) { return b == Branch::AirLike ? "air-like" : "diamond-like"; }

struct CavityMode {
  double center_freq = 0;      // THz
  double lorentzian_fwhm = 0;  // GHz
  Polarization polarization = Polarization::LF;
  double pol_splitting = 9.56;     // GHz
  double dispersion_slope = 34.0;  // MHz/pm
  double L_eff = 13.2;             // um
  double waist = 0;                // um
  double mode_volume = 0;          // lambda^3
};

struct VibrationSpec {
  double rms_displacement = 22.0;  // pm
};

namespace detail {

/// Continuous branch of atan(tan(x) / r) that coincides with x at multiples of pi/2.
inline double interface_map(double x, double r) {
  const double s = std::sin(x), c = std::cos(x);
  return x - std::atan((r - 1.0) * s * c / (r * c * c + s * s));
}

}  // namespace detail

/// Accumulated standing-wave phase from the sample mirror to the fiber mirror
/// for vacuum wavenumber k (1/um). Hard mirrors put a node at both ends, so
/// resonances sit at integer multiples of pi.
inline double round_trip_phase(double k, double air_gap, double diamond_thickness, double n,
                               double bond_gap = 0.0) {
  double psi = k * bond_gap;
  if (diamond_thickness > 0) {
    psi = detail::interface_map(psi, 1.0 / n) + n * k * diamond_thickness;
    psi = detail::interface_map(psi, n);
  }
  return psi + k * air_gap;
}

inline double mode_number(const CavityGeometry& g, double wavelength_nm, double n) {
  const double k = 2 * std::numbers::pi / (wavelength_nm * 1e-3);
  return round_trip_phase(k, g.air_gap, g.diamond_thickness, n, g.bond_gap) / std::numbers::pi;
}

struct Resonance {
  double air_gap = 0;        // um
  double wavelength = 0;     // nm
  double frequency = 0;      // THz
  int q = 0;
  Branch branch = Branch::AirLike;
  double slope = 0;          // dnu/dL_air in MHz/pm
};

namespace detail {

inline double resonance_k(int q, double air, double d, double n, double bond, double klo, double khi) {
  const double target = q * std::numbers::pi;
  for (int i = 0; i < 200 && khi - klo > 1e-15 * khi; ++i) {
    const double mid = 0.5 * (klo + khi);
    if (round_trip_phase(mid, air, d, n, bond) < target) klo = mid;
    else khi = mid;
  }
  return 0.5 * (klo + khi);
}

inline Resonance make_resonance(int q, double k, double air, double d, double n, double bond, double c) {
  const double h = 1e-7 * k;
  const double dtheta_dk =
      (round_trip_phase(k + h, air, d, n, bond) - round_trip_phase(k - h, air, d, n, bond)) / (2 * h);
  const double dk_dl = -k / dtheta_dk;
  Resonance r;
  r.air_gap = air;
  r.q = q;
  r.wavelength = 2 * std::numbers::pi / k * 1e3;
  r.frequency = c * k * 1e6 / (2 * std::numbers::pi) * 1e-12;
  r.slope = c * dk_dl * 1e6 / (2 * std::numbers::pi) * 1e-12;  // Hz/um -> MHz/pm
  const double nu_mhz = r.frequency * 1e6;
  const double threshold = nu_mhz / ((air + bond + n * d) * 1e6);
  r.branch = std::abs(r.slope) >= threshold * (1 - 1e-6) ? Branch::AirLike : Branch::DiamondLike;
  return r;
}

}  // namespace detail

/// Fundamental resonances between lambda_min and lambda_max (nm) for each air gap.
inline std::vector<Resonance> mode_spectrum(const CavityGeometry& g, const std::vector<double>& air_gaps,
                                            double lambda_min, double lambda_max, const Constants& cst = {}) {
  if (!(lambda_min > 0) || !(lambda_max > lambda_min)) throw InvalidParameter("invalid wavelength range");
  if (!(g.diamond_thickness >= 0) || !(g.bond_gap >= 0)) throw InvalidParameter("lengths must be non-negative");
  const double n = cst.n_diamond;
  const double kmin = 2 * std::numbers::pi / (lambda_max * 1e-3);
  const double kmax = 2 * std::numbers::pi / (lambda_min * 1e-3);
  std::vector<Resonance> out;
  for (double air : air_gaps) {
    if (!(air > 0)) throw InvalidParameter("air gap must be positive");
    const double tlo = round_trip_phase(kmin, air, g.diamond_thickness, n, g.bond_gap);
    const double thi = round_trip_phase(kmax, air, g.diamond_thickness, n, g.bond_gap);
    for (int q = static_cast<int>(std::ceil(tlo / std::numbers::pi)); q * std::numbers::pi <= thi; ++q) {
      if (q < 1) continue;
      const double k = detail::resonance_k(q, air, g.diamond_thickness, n, g.bond_gap, kmin, kmax);
      out.push_back(detail::make_resonance(q, k, air, g.diamond_thickness, n, g.bond_gap, cst.speed_of_light));
    }
  }
  return out;
}

/// The resonance of mode number q at the geometry's own air gap.
inline Resonance resonance_for_mode(const CavityGeometry& g, int q, const Constants& cst = {}) {
  const double n = cst.n_diamond;
  const double optical = g.air_gap + g.bond_gap + n * g.diamond_thickness;
  // theta/k lies between the bare and fully index-weighted optical lengths.
  double klo = q * std::numbers::pi / (optical * n) * 0.5;
  double khi = (q + 1) * std::numbers::pi / (g.air_gap + g.bond_gap + g.diamond_thickness) * 2.0;
  const double k = detail::resonance_k(q, g.air_gap, g.diamond_thickness, n, g.bond_gap, klo, khi);
  return detail::make_resonance(q, k, g.air_gap, g.diamond_thickness, n, g.bond_gap, cst.speed_of_light);
}

struct DispersionPoint {
  double air_gap = 0;     // um, as read from the positioner
  double wavelength = 0;  // nm
};

struct DispersionFit {
  FitResult fit;
  double air_gap_offset = 0;
  double diamond_thickness = 0;
  double sigma_offset = 0;
  double sigma_thickness = 0;
  int branches = 0;
  bool under_constrained = false;
};

namespace detail {

inline double nearest_resonance_nm(double air, double d, double n, double bond, double lambda_nm) {
  const double k0 = 2 * std::numbers::pi / (lambda_nm * 1e-3);
  const int q = static_cast<int>(std::lround(round_trip_phase(k0, air, d, n, bond) / std::numbers::pi));
  const double k = resonance_k(q, air, d, n, bond, 0.5 * k0, 1.5 * k0);
  return 2 * std::numbers::pi / k * 1e3;
}

}  // namespace detail

/// Least-squares estimate of (air gap offset, diamond thickness) from measured
/// fundamental mode positions. Each point is matched to the nearest resonance.
inline DispersionFit fit_dispersion(const std::vector<DispersionPoint>& data, double offset0, double thickness0,
                                    double sigma_nm = 0.05, const Constants& cst = {}, double bond_gap = 0.0,
                                    bool grid_search = true) {
  if (data.size() < 2) throw InvalidParameter("need at least two dispersion points");
  const double n = cst.n_diamond;
  DispersionFit out;

  auto residuals = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double air = data[i].air_gap + p[0];
      if (!(air > 0) || !(p[1] >= 0)) {
        r[static_cast<Eigen::Index>(i)] = 1e6;
        continue;
      }
      r[static_cast<Eigen::Index>(i)] =
          (data[i].wavelength - detail::nearest_resonance_nm(air, p[1], n, bond_gap, data[i].wavelength)) / sigma_nm;
    }
    return r;
  };

  Eigen::VectorXd p0(2);
  p0 << offset0, thickness0;
  if (grid_search) {
    double best = detail::sum_squares(residuals(p0));
    const Eigen::VectorXd c = p0;
    for (int i = -20; i <= 20; ++i)
      for (int j = -20; j <= 20; ++j) {
        Eigen::VectorXd t(2);
        t << c[0] + 0.015 * i, c[1] + 0.015 * j;
        const double s = detail::sum_squares(residuals(t));
        if (s < best) {
          best = s;
          p0 = t;
        }
      }
  }

  std::set<long> qs;
  for (const auto& d : data) {
    const double k0 = 2 * std::numbers::pi / (d.wavelength * 1e-3);
    qs.insert(std::lround(round_trip_phase(k0, d.air_gap + p0[0], p0[1], n, bond_gap) / std::numbers::pi));
  }
  out.branches = static_cast<int>(qs.size());
  if (out.branches < 2) {
    out.under_constrained = true;
    out.fit.names = {"air_gap_offset", "diamond_thickness"};
    out.fit.params = p0;
    out.fit.message = "under-constrained: a single mode branch cannot separate gap and thickness";
    return out;
  }

  NllsOptions opt;
  opt.absolute_sigma = false;
  opt.scale = Eigen::Vector2d(1.0, 1.0);
  out.fit = nlls_solve(residuals, p0, {"air_gap_offset", "diamond_thickness"}, opt);
  if (!out.fit.converged)
    throw FitFailure("dispersion fit did not converge: " + out.fit.message +
                     ", residual norm " + std::to_string(out.fit.residual_norm));
  out.air_gap_offset = out.fit.params[0];
  out.diamond_thickness = out.fit.params[1];
  out.sigma_offset = out.fit.std_errors[0];
  out.sigma_thickness = out.fit.std_errors[1];
  return out;
}

struct SpectralParams {
  double Q = 0;
  double fsr = 0;  // GHz
  double finesse = 0;
  double total_losses_ppm = 0;
  double extra_losses_ppm = 0;
  double outcoupling = 0;
};

/// Free spectral range (GHz) of the effective cavity, referenced to the
/// diamond index.
inline double effective_fsr_ghz(double effective_length_um, const Constants& cst = {}) {
  return cst.speed_of_light / (2.0 * cst.n_diamond * effective_length_um * 1e-6) * 1e-9;
}

/// Loss budget from a measured linewidth. Mirror transmissions are quoted
/// for their own terminating medium, so the air-side fiber mirror is scaled
/// by the diamond index when converted to the common reference.
inline SpectralParams spectral_params(double center_thz, double fwhm_ghz, const CavityGeometry& g,
                                      const Constants& cst = {}) {
  if (!(fwhm_ghz > 0)) throw InvalidParameter("fwhm must be positive");
  if (!(center_thz > 0)) throw InvalidParameter("center frequency must be positive");
  SpectralParams s;
  s.Q = center_thz * 1e3 / fwhm_ghz;
  s.fsr = effective_fsr_ghz(g.effective_length, cst);
  s.finesse = s.fsr / fwhm_ghz;
  s.total_losses_ppm = 2 * std::numbers::pi / s.finesse * 1e6;
  s.extra_losses_ppm = s.total_losses_ppm - g.mirror_sample_T - cst.n_diamond * g.mirror_fiber_T;
  s.outcoupling = g.mirror_sample_T / s.total_losses_ppm;
  return s;
}

inline double finesse_from_losses(double total_losses_ppm) { return 2 * std::numbers::pi / (total_losses_ppm * 1e-6); }

/// Inverse of spectral_params: linewidth and sample transmission from finesse and outcoupling.
inline std::pair<double, double> invert_spectral(double finesse, double outcoupling, const CavityGeometry& g,
                                                 const Constants& cst = {}) {
  const double fwhm = effective_fsr_ghz(g.effective_length, cst) / finesse;
  const double losses = 2 * std::numbers::pi / finesse * 1e6;
  return {fwhm, outcoupling * losses};
}

struct ModeGeometry {
  double waist = 0;        // um
  double mode_volume = 0;  // lambda^3
};

/// Plano-concave Gaussian mode. Lengths in um, wavelength in nm.
inline ModeGeometry mode_geometry(double L_eff, double roc, double wavelength_nm) {
  if (!(L_eff > 0) || !(roc > 0) || !(wavelength_nm > 0)) throw InvalidParameter("lengths must be positive");
  if (L_eff >= roc) throw UnstableCavity("effective length must be shorter than the mirror radius of curvature");
  const double lam = wavelength_nm * 1e-3;
  const double w2 = lam / std::numbers::pi * std::sqrt(L_eff * (roc - L_eff));
  ModeGeometry m;
  m.waist = std::sqrt(w2);
  m.mode_volume = std::numbers::pi / 4.0 * w2 * L_eff / (lam * lam * lam);
  return m;
}

/// Gaussian FWHM in GHz of the frequency jitter caused by length fluctuations.
inline double vibration_gaussian_fwhm(const VibrationSpec& spec, double slope_mhz_per_pm) {
  if (!(spec.rms_displacement >= 0) || !(slope_mhz_per_pm > 0)) throw InvalidParameter("inputs must be positive");
  return spec.rms_displacement * slope_mhz_per_pm * 2.0 * std::sqrt(2.0 * std::numbers::ln2) * 1e-3;
}

inline double max_purcell(double Q, double mode_volume_lambda3, double n) {
  if (!(Q > 0) || !(mode_volume_lambda3 > 0) || !(n > 0)) throw InvalidParameter("inputs must be positive");
  return 3.0 * Q / (4.0 * std::numbers::pi * std::numbers::pi * n * n * n * mode_volume_lambda3);
}

/// E[1 / (1 + (2 delta / kappa)^2)] for Gaussian delta with standard deviation
/// sigma; computed by quadrature.
inline double vibration_averaging_factor(double sigma_ghz, double kappa_ghz) {
  if (!(kappa_ghz > 0) || !(sigma_ghz >= 0)) throw InvalidParameter("invalid widths");
  if (sigma_ghz == 0) return 1.0;
  const double s = 2 * sigma_ghz / kappa_ghz;
  boost::math::quadrature::exp_sinh<double> integrator;
  auto f = [s](double x) { return std::exp(-0.5 * x * x) / (1.0 + s * s * x * x); };
  const double v = integrator.integrate(f, 0.0, std::numeric_limits<double>::infinity(), 1e-13);
  return 2.0 * v / std::sqrt(2.0 * std::numbers::pi);
}

inline double vibration_averaged_purcell(double f_max, double kappa_ghz, const VibrationSpec& spec,
                                         double slope_mhz_per_pm) {
  if (!(f_max > 0) || !(kappa_ghz > 0)) throw InvalidParameter("inputs must be positive");
  const double sigma = spec.rms_displacement * slope_mhz_per_pm * 1e-3;
  return f_max * vibration_averaging_factor(sigma, kappa_ghz);
}

struct VoigtFit {
  FitResult fit;
  double lorentzian_fwhm = 0;
  double sigma = 0;
};

/// Fits amplitude, center and Lorentzian FWHM with the Gaussian part held
/// fixed. Frequencies in GHz. Poisson weights.
inline VoigtFit voigt_fit(const std::vector<double>& freq, const std::vector<double>& counts,
                          double fixed_gaussian_fwhm, double lorentz0 = 1.5, bool fit_offset = false) {
  if (!(fixed_gaussian_fwhm >= 0)) throw InvalidParameter("gaussian fwhm must be non-negative");
  if (freq.size() != counts.size() || freq.size() < 4) throw InvalidParameter("scan too short");
  auto [mn, mx] = std::minmax_element(freq.begin(), freq.end());
  const auto imax = std::distance(counts.begin(), std::max_element(counts.begin(), counts.end()));
  const double total0 = voigt_total_fwhm(fixed_gaussian_fwhm, lorentz0);
  if (*mx - *mn < 3.0 * total0) throw InvalidParameter("scan must span at least three total linewidths");

  const double g = fixed_gaussian_fwhm;
  ModelFn model = [g, fit_offset](double x, const Eigen::VectorXd& p) {
    const double l = std::abs(p[2]);
    const double v = voigt_fwhm(x - p[1], g, l) / voigt_fwhm(0.0, g, l);
    return p[0] * v + (fit_offset ? p[3] : 0.0);
  };
  Eigen::VectorXd p0(fit_offset ? 4 : 3);
  p0[0] = counts[static_cast<std::size_t>(imax)];
  p0[1] = freq[static_cast<std::size_t>(imax)];
  p0[2] = lorentz0;
  std::vector<std::string> names{"amplitude", "center", "lorentzian_fwhm"};
  if (fit_offset) {
    p0[3] = std::max(0.0, *std::min_element(counts.begin(), counts.end()));
    names.push_back("offset");
  }
  NllsOptions opt;
  opt.lower = Eigen::VectorXd::Constant(p0.size(), -1e300);
  opt.lower[2] = 1e-6;
  VoigtFit out;
  out.fit = nlls_fit(model, freq, counts, poisson_sigma(counts), p0, names, opt);
  if (!out.fit.converged) throw FitFailure("voigt fit did not converge: " + out.fit.message);
  out.lorentzian_fwhm = out.fit["lorentzian_fwhm"];
  out.sigma = out.fit.error("lorentzian_fwhm");
  return out;
}

/// LF and HF modes for a measured LF linewidth; the HF mode sits higher in
/// frequency by the polarization splitting.
inline std::pair<CavityMode, CavityMode> make_modes(double lf_center_thz, double fwhm_ghz, double splitting_ghz,
                                                    double slope, const CavityGeometry& g,
                                                    double wavelength_nm = 637.0) {
  const auto geo = mode_geometry(g.effective_length, g.roc_fiber, wavelength_nm);
  CavityMode lf{lf_center_thz, fwhm_ghz, Polarization::LF, splitting_ghz, slope, g.effective_length, geo.waist,
                geo.mode_volume};
  CavityMode hf = lf;
  hf.polarization = Polarization::HF;
  hf.center_freq = lf_center_thz + splitting_ghz * 1e-3;
  return {lf, hf};
}

}  // namespace nvcav
