#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nvcav/analysis/histogram.hpp"
#include "nvcav/analysis/nlls.hpp"
#include "nvcav/analysis/stats.hpp"
#include "nvcav/clicks.hpp"
#include "nvcav/errors.hpp"
#include "nvcav/parallel.hpp"

namespace nvcav {

namespace detail {

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline void require_converged(const FitResult& f, const std::string& what) {
  if (!f.converged) throw FitFailure(what + ": " + f.message + " (residual norm " + std::to_string(f.residual_norm) + ")");
}

inline double tail_mean(const std::vector<double>& y, double fraction) {
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(fraction * static_cast<double>(y.size())));
  double s = 0;
  for (std::size_t i = y.size() - n; i < y.size(); ++i) s += y[i];
  return s / static_cast<double>(n);
}

/// Best of several starts; a converged fit always wins over a non-converged one.
inline FitResult best_of(const std::vector<FitResult>& fits) {
  if (fits.empty()) throw FitFailure("no fit attempts");
  const FitResult* best = &fits.front();
  for (const auto& f : fits) {
    if (f.converged != best->converged) {
      if (f.converged) best = &f;
      continue;
    }
    if (f.residual_norm < best->residual_norm) best = &f;
  }
  return *best;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Lifetime

enum class Background { None, FirstMinusLast, FitOffset };

struct LifetimeOptions {
  double window_lo = 5.0;
  double window_hi = 18.0;
  Background background = Background::FirstMinusLast;
  unsigned n_first = 5;
  unsigned n_last = 5;
  double bin_ns = 0.5;
  double hist_lo = -20.0;
  double hist_hi = 106.0;
  double tau_guess = 8.0;
};

struct LifetimeFit {
  FitResult fit;
  double tau = 0;
  double sigma = 0;
  Histogram first;
  Histogram last;
  Histogram net;
};

/// Monoexponential fit of a decay histogram on [window_lo, window_hi).
/// `variance` holds the per-bin count variance (empty means Poisson on the counts).
inline LifetimeFit fit_decay_histogram(const Histogram& net, std::vector<double> variance, const LifetimeOptions& o) {
  net.validate();
  if (variance.empty()) variance = net.counts;
  std::vector<double> x, y, s;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const double c = net.center(i);
    if (c >= o.window_lo && c < o.window_hi) {
      x.push_back(c - o.window_lo);
      y.push_back(net.counts[i]);
      s.push_back(std::sqrt(std::max(variance[i], 1.0)));
    }
  }
  const bool offset = o.background == Background::FitOffset;
  if (x.size() < (offset ? 4u : 3u)) throw InvalidParameter("lifetime window contains too few bins");
  double total = 0;
  for (double v : y) total += v;
  if (!(total > 0)) throw FitFailure("net counts in the lifetime window are not positive");

  ModelFn model = [offset](double t, const Eigen::VectorXd& p) {
    return p[0] * std::exp(-t / p[1]) + (offset ? p[2] : 0.0);
  };
  NllsOptions opt;
  Eigen::VectorXd p0 = offset ? detail::vec({std::max(y.front(), 1.0), o.tau_guess, 0.0})
                              : detail::vec({std::max(y.front(), 1.0), o.tau_guess});
  opt.lower = Eigen::VectorXd::Constant(p0.size(), -std::numeric_limits<double>::infinity());
  opt.lower[1] = 1e-3;
  std::vector<std::string> names = {"amplitude", "tau"};
  if (offset) names.push_back("offset");
  LifetimeFit out;
  out.fit = nlls_fit(model, x, y, s, p0, names, opt);
  detail::require_converged(out.fit, "lifetime fit");
  out.fit.window = {o.window_lo, std::min(o.window_hi, net.edges.back())};
  out.tau = out.fit["tau"];
  out.sigma = out.fit.error("tau");
  out.net = net;
  return out;
}

inline LifetimeFit fit_lifetime(const ClickStream& stream, const LifetimeOptions& o = {}) {
  const auto npulses = stream.header.pulses_per_rep;
  if (o.background == Background::FirstMinusLast && npulses < o.n_first + o.n_last)
    throw InvalidParameter("lifetime stream has fewer pulses than the background scheme needs");
  Histogram first = make_histogram(o.hist_lo, o.hist_hi, o.bin_ns);
  Histogram last = first;
  for (const auto& c : stream.clicks) {
    if (o.background == Background::FirstMinusLast) {
      if (c.pulse < o.n_first) first.fill(c.t_ns());
      else if (c.pulse >= npulses - o.n_last) last.fill(c.t_ns());
    } else if (c.pulse < o.n_first) {
      first.fill(c.t_ns());
    }
  }
  first.normalization = last.normalization = stream.header.repetitions;
  Histogram net = first;
  std::vector<double> var(first.size());
  for (std::size_t i = 0; i < net.size(); ++i) {
    net.counts[i] = first.counts[i] - last.counts[i];
    var[i] = first.counts[i] + last.counts[i];
  }
  // Counts below zero are allowed in the subtracted histogram; Histogram::counts >= 0
  // holds for the raw first/last histograms.
  LifetimeFit out = fit_decay_histogram(net, var, o);
  out.first = std::move(first);
  out.last = std::move(last);
  return out;
}

struct WindowScanPoint {
  double window_hi = 0;
  double tau = 0;
  double sigma = 0;
  bool ok = false;
};

/// Fitted lifetime as a function of the window end.
inline std::vector<WindowScanPoint> lifetime_window_scan(const Histogram& net, const std::vector<double>& variance,
                                                         LifetimeOptions o, const std::vector<double>& ends) {
  std::vector<WindowScanPoint> out;
  for (double e : ends) {
    o.window_hi = e;
    WindowScanPoint p{e};
    try {
      const auto f = fit_decay_histogram(net, variance, o);
      p.tau = f.tau;
      p.sigma = f.sigma;
      p.ok = true;
    } catch (const std::exception&) {
      p.ok = false;
    }
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Second-order correlation over a pulse train

struct G2Histogram {
  int train_length = 30;
  std::vector<double> counts;  // index dn + train_length - 1

  int max_dn() const { return train_length - 1; }
  double at(int dn) const {
    if (std::abs(dn) > max_dn()) return 0.0;
    return counts[static_cast<std::size_t>(dn + max_dn())];
  }
  double& at(int dn) { return counts[static_cast<std::size_t>(dn + max_dn())]; }
};

inline G2Histogram make_g2_histogram(int train_length) {
  if (train_length < 2) throw InvalidParameter("train length must be at least 2");
  G2Histogram h;
  h.train_length = train_length;
  h.counts.assign(static_cast<std::size_t>(2 * train_length - 1), 0.0);
  return h;
}

/// Cross-channel coincidences between ZPL_A and ZPL_B clicks within the
/// integration window, binned by pulse difference (pulse_B - pulse_A).
inline G2Histogram hbt_coincidences(const ClickStream& s, int train_length = 30, double lo = 3.0, double hi = 30.0) {
  G2Histogram h = make_g2_histogram(train_length);
  std::vector<int> a, b;
  auto flush = [&]() {
    for (int pa : a)
      for (int pb : b) {
        const int dn = pb - pa;
        if (std::abs(dn) <= h.max_dn()) h.at(dn) += 1.0;
      }
    a.clear();
    b.clear();
  };
  std::uint64_t rep = std::numeric_limits<std::uint64_t>::max();
  for (const auto& c : s.clicks) {
    if (c.rep != rep) {
      flush();
      rep = c.rep;
    }
    if (!in_window(c, lo, hi) || c.pulse >= static_cast<std::uint32_t>(train_length)) continue;
    (c.channel == Channel::ZPL_A ? a : b).push_back(static_cast<int>(c.pulse));
  }
  flush();
  return h;
}

struct G2Fit {
  FitResult fit;
  int train_length = 30;
  double amplitude = 0;
  double flip_rate = 0;  // per pulse
  double g2_zero = 0;
  double g2_sigma = 0;

  double n_flip() const { return flip_rate > 0 ? 1.0 / flip_rate : std::numeric_limits<double>::infinity(); }
  double envelope(int dn) const {
    const double tri = 1.0 - std::abs(dn) / static_cast<double>(train_length);
    if (tri <= 0) return 0.0;
    return amplitude * tri * std::exp(-std::abs(dn) * flip_rate);
  }
};

inline G2Fit fit_g2(const G2Histogram& h) {
  const int L = h.train_length;
  std::vector<double> x, y;
  for (int dn = -h.max_dn(); dn <= h.max_dn(); ++dn) {
    if (dn == 0) continue;
    x.push_back(dn);
    y.push_back(h.at(dn));
  }
  ModelFn model = [L](double dn, const Eigen::VectorXd& p) {
    const double tri = 1.0 - std::abs(dn) / L;
    return tri <= 0 ? 0.0 : p[0] * tri * std::exp(-std::abs(dn) * p[1]);
  };
  const double a0 = std::max(0.5 * (h.at(1) + h.at(-1)), 1.0);
  NllsOptions opt;
  opt.lower = detail::vec({-std::numeric_limits<double>::infinity(), 0.0});
  G2Fit out;
  out.train_length = L;
  std::vector<FitResult> tries;
  for (double r0 : {0.01, 0.1, 0.5}) tries.push_back(nlls_fit(model, x, y, poisson_sigma(y), detail::vec({a0, r0}), {"A", "flip_rate"}, opt));
  out.fit = detail::best_of(tries);
  detail::require_converged(out.fit, "g2 envelope fit");
  out.amplitude = out.fit["A"];
  if (!(out.amplitude > 0) || !(out.amplitude > out.fit.error("A")))
    throw FitFailure("g2 envelope amplitude is not positive");
  out.flip_rate = out.fit["flip_rate"];
  const double c0 = h.at(0), A = out.amplitude, sA = out.fit.error("A");
  out.g2_zero = c0 / A;
  out.g2_sigma = std::sqrt(std::max(c0, 1.0) / (A * A) + c0 * c0 * sA * sA / (A * A * A * A));
  return out;
}

// ---------------------------------------------------------------------------
// Exponential traces

struct ExpOffsetFit {
  FitResult fit;
  double amplitude = 0;
  double time_constant = 0;
  double offset = 0;
};

/// y = A exp(-t/T) + C.
inline ExpOffsetFit fit_exp_offset(const std::vector<double>& t, const std::vector<double>& y,
                                   const std::vector<double>& sigma = {}) {
  if (t.size() < 4) throw InvalidParameter("exponential fit needs at least 4 points");
  const double span = t.back() - t.front();
  const double c0 = detail::tail_mean(y, 0.1);
  const double a0 = y.front() - c0;
  ModelFn model = [](double x, const Eigen::VectorXd& p) { return p[0] * std::exp(-x / p[1]) + p[2]; };
  NllsOptions opt;
  opt.lower = detail::vec({-std::numeric_limits<double>::infinity(), 1e-9 * span, -std::numeric_limits<double>::infinity()});
  std::vector<FitResult> tries;
  for (double frac : {0.03, 0.1, 0.3})
    tries.push_back(nlls_fit(model, t, y, sigma, detail::vec({a0 == 0 ? 1.0 : a0, frac * span, c0}), {"A", "T", "offset"}, opt));
  ExpOffsetFit out;
  out.fit = detail::best_of(tries);
  detail::require_converged(out.fit, "exponential fit");
  out.amplitude = out.fit["A"];
  out.time_constant = out.fit["T"];
  out.offset = out.fit["offset"];
  return out;
}

struct DoubleExpFit {
  FitResult fit;
  double A_fast = 0, T_fast = 0, A_slow = 0, T_slow = 0, offset = 0;
  double sigma_T_fast = 0, sigma_T_slow = 0;
  bool single_exponential = false;  // fast component vanished; T_slow from a single-exponential refit
};

/// y = A_f exp(-t/T_f) + A_s exp(-t/(r T_f)) + C with r > 1.
inline DoubleExpFit fit_double_exp_offset(const std::vector<double>& t, const std::vector<double>& y,
                                          const std::vector<double>& sigma = {}, double min_ratio = 1.05) {
  if (t.size() < 6) throw InvalidParameter("double exponential fit needs at least 6 points");
  const double span = t.back() - t.front();
  const double c0 = detail::tail_mean(y, 0.1);
  const double a0 = y.front() - c0;
  ModelFn model = [](double x, const Eigen::VectorXd& p) {
    return p[0] * std::exp(-x / p[1]) + p[2] * std::exp(-x / (p[1] * p[3])) + p[4];
  };
  const double inf = std::numeric_limits<double>::infinity();
  NllsOptions opt;
  opt.lower = detail::vec({-inf, 1e-9 * span, -inf, min_ratio, -inf});
  std::vector<FitResult> tries;
  for (double tf : {0.01, 0.04, 0.15})
    for (double r : {4.0, 20.0})
      for (double split : {0.3, 0.7}) {
        const auto p0 = detail::vec({split * a0, tf * span, (1 - split) * a0, r, c0});
        tries.push_back(nlls_fit(model, t, y, sigma, p0, {"A_fast", "T_fast", "A_slow", "ratio", "offset"}, opt));
      }
  DoubleExpFit out;
  out.fit = detail::best_of(tries);
  std::optional<ExpOffsetFit> single;
  try {
    single = fit_exp_offset(t, y, sigma);
  } catch (const FitFailure&) {
  }
  bool second_component = out.fit.converged;
  if (out.fit.converged && single) {
    // Likelihood-ratio test for the two extra parameters (chi2, 2 dof, 99%).
    double threshold = 9.21;
    if (sigma.empty()) {
      double sy = 0;
      for (double v : y) sy += v * v;
      threshold = std::max(9.21 * out.fit.residual_norm / std::max(out.fit.dof, 1), 1e-12 * sy);
    }
    second_component = single->fit.residual_norm - out.fit.residual_norm > threshold;
  }
  if (second_component) {
    if (out.fit["ratio"] <= min_ratio * (1 + 1e-6))
      throw FitFailure("degenerate timescales (T_fast = T_slow); fit a single exponential instead");
    out.A_fast = out.fit["A_fast"];
    out.T_fast = out.fit["T_fast"];
    out.A_slow = out.fit["A_slow"];
    out.T_slow = out.T_fast * out.fit["ratio"];
    out.offset = out.fit["offset"];
    const auto& C = out.fit.covariance;
    const double r = out.fit["ratio"];
    out.sigma_T_fast = out.fit.error("T_fast");
    out.sigma_T_slow = std::sqrt(std::max(0.0, r * r * C(1, 1) + out.T_fast * out.T_fast * C(3, 3) + 2 * r * out.T_fast * C(1, 3)));
    return out;
  }
  if (!single) throw FitFailure("double exponential fit: " + out.fit.message);
  out.fit = single->fit;
  out.single_exponential = true;
  out.A_slow = single->amplitude;
  out.T_slow = single->time_constant;
  out.sigma_T_slow = single->fit.error("T");
  out.offset = single->offset;
  return out;
}

// ---------------------------------------------------------------------------
// Saturation

struct SaturationFit {
  FitResult fit;
  double amplitude = 0;
  double p_sat = 0;
  double sigma_p_sat = 0;
};

/// y = A P / (P + 2 P_sat).
inline SaturationFit fit_saturation(const std::vector<double>& power, const std::vector<double>& y,
                                    const std::vector<double>& sigma = {}) {
  if (power.size() < 3) throw InvalidParameter("saturation fit needs at least 3 powers");
  ModelFn model = [](double p, const Eigen::VectorXd& q) { return q[0] * p / (p + 2 * q[1]); };
  std::vector<double> ps = power;
  std::sort(ps.begin(), ps.end());
  const double ymax = *std::max_element(y.begin(), y.end());
  NllsOptions opt;
  opt.lower = detail::vec({-std::numeric_limits<double>::infinity(), 1e-12 * ps.back()});
  std::vector<FitResult> tries;
  for (double f : {0.1, 0.5, 2.0})
    tries.push_back(nlls_fit(model, power, y, sigma, detail::vec({1.5 * ymax, f * ps[ps.size() / 2]}), {"A", "P_sat"}, opt));
  SaturationFit out;
  out.fit = detail::best_of(tries);
  detail::require_converged(out.fit, "saturation fit");
  out.amplitude = out.fit["A"];
  out.p_sat = out.fit["P_sat"];
  out.sigma_p_sat = out.fit.error("P_sat");
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian line

struct GaussianFit {
  FitResult fit;
  double amplitude = 0, center = 0, sigma = 0, offset = 0;
  double fwhm() const { return 2 * std::sqrt(2 * std::numbers::ln2) * sigma; }
  double fwhm_error() const { return 2 * std::sqrt(2 * std::numbers::ln2) * fit.error("sigma"); }
};

/// y = A exp(-(x-x0)^2 / 2s^2) + C.
inline GaussianFit fit_gaussian(const std::vector<double>& x, const std::vector<double>& y,
                                const std::vector<double>& sigma = {}) {
  if (x.size() < 5) throw InvalidParameter("gaussian fit needs at least 5 points");
  const auto imax = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  const double c0 = *std::min_element(y.begin(), y.end());
  const double a0 = y[imax] - c0;
  double above = 0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    if (y[i] - c0 > 0.5 * a0) above += std::abs(x[i + 1] - x[i]);
  const double s0 = std::max(above / 2.3548, std::abs(x.back() - x.front()) / (4.0 * static_cast<double>(x.size())));
  ModelFn model = [](double v, const Eigen::VectorXd& p) {
    const double u = (v - p[1]) / p[2];
    return p[0] * std::exp(-0.5 * u * u) + p[3];
  };
  NllsOptions opt;
  GaussianFit out;
  out.fit = nlls_fit(model, x, y, sigma, detail::vec({a0, x[imax], s0, c0}), {"A", "center", "sigma", "offset"}, opt);
  detail::require_converged(out.fit, "gaussian fit");
  out.amplitude = out.fit["A"];
  out.center = out.fit["center"];
  out.sigma = std::abs(out.fit["sigma"]);
  out.offset = out.fit["offset"];
  return out;
}

// ---------------------------------------------------------------------------
// Ramsey

enum class RamseyModel { NitrogenTriplet, CarbonPair };

struct RamseyOptions {
  RamseyModel model = RamseyModel::NitrogenTriplet;
  double detuning_mhz = 50.0;   // artificial detuning, known
  double t2_guess_ns = 170.0;
  double n_guess = 1.0;
  double beat_guess_mhz = 2.16;  // hyperfine (nitrogen) or coupling (carbon) frequency
  double phase_guess = 0.0;
};

struct RamseyFit {
  FitResult fit;
  RamseyModel model = RamseyModel::NitrogenTriplet;
  double t2 = 0, t2_sigma = 0;
  double n = 0, n_sigma = 0;
  double beat_mhz = 0, beat_sigma = 0;
  bool beat_identifiable = true;
};

/// Angular frequency in rad/ns for a frequency in MHz.
inline double rad_per_ns(double mhz) { return 2 * std::numbers::pi * mhz * 1e-3; }

inline double ramsey_nitrogen(double tau, double detuning_mhz, const Eigen::VectorXd& p) {
  // p = {c, T2, n, f_hf, P-1, P0, P+1, phi}
  const double env = std::exp(-std::pow(std::abs(tau / p[1]), p[2]));
  double s = 0;
  for (int k = -1; k <= 1; ++k) s += p[5 + k] * std::cos(rad_per_ns(detuning_mhz + k * p[3]) * tau + p[7]);
  return p[0] - env * s;
}

inline double ramsey_carbon(double tau, double detuning_mhz, const Eigen::VectorXd& p) {
  // p = {c, A, T2, n, f_c, phi}
  const double env = std::exp(-std::pow(std::abs(tau / p[2]), p[3]));
  double s = 0;
  for (int k : {-1, 1}) s += std::cos(rad_per_ns(detuning_mhz + k * p[4] / 2) * tau + p[5]);
  return p[0] - p[1] * env * s;
}

/// Throws if the delay grid cannot resolve the highest fringe frequency.
inline void ramsey_nyquist_check(const std::vector<double>& tau_ns, double fmax_mhz) {
  std::vector<double> t = tau_ns;
  std::sort(t.begin(), t.end());
  double dt = 0;
  for (std::size_t i = 1; i < t.size(); ++i) dt = std::max(dt, t[i] - t[i - 1]);
  const double limit = 1e3 / (2 * std::abs(fmax_mhz));
  if (dt >= limit)
    throw InvalidParameter("Ramsey delay step " + std::to_string(dt) + " ns does not resolve " + std::to_string(fmax_mhz) +
                           " MHz (need < " + std::to_string(limit) + " ns)");
}

inline RamseyFit fit_ramsey(const std::vector<double>& tau_ns, const std::vector<double>& p0_data,
                            const std::vector<double>& sigma, const RamseyOptions& o = {}) {
  const bool nitrogen = o.model == RamseyModel::NitrogenTriplet;
  const double fmax = std::abs(o.detuning_mhz) + (nitrogen ? std::abs(o.beat_guess_mhz) : std::abs(o.beat_guess_mhz) / 2);
  ramsey_nyquist_check(tau_ns, fmax);
  const double c0 = mean(p0_data);
  double amp = 0;
  for (double v : p0_data) amp = std::max(amp, std::abs(v - c0));
  const double D = o.detuning_mhz;
  RamseyFit out;
  out.model = o.model;
  NllsOptions opt;
  const double inf = std::numeric_limits<double>::infinity();
  if (nitrogen) {
    ModelFn m = [D](double t, const Eigen::VectorXd& p) { return ramsey_nitrogen(t, D, p); };
    opt.lower = detail::vec({-inf, 1e-3, 0.1, -inf, -inf, -inf, -inf, -inf});
    opt.upper = detail::vec({inf, inf, 5.0, inf, inf, inf, inf, inf});
    const auto p0 = detail::vec({c0, o.t2_guess_ns, o.n_guess, o.beat_guess_mhz, amp / 3, amp / 3, amp / 3, o.phase_guess});
    out.fit = nlls_fit(m, tau_ns, p0_data, sigma, p0, {"c", "T2", "n", "f_hf", "P_m1", "P_0", "P_p1", "phi"}, opt);
    out.beat_identifiable = out.fit.converged;
    if (out.fit.converged) {
      const double side = std::hypot(out.fit["P_m1"], out.fit["P_p1"]);
      const double side_err = std::hypot(out.fit.error("P_m1"), out.fit.error("P_p1"));
      out.beat_identifiable = side > 2 * side_err;
    }
    if (out.fit.converged) {
      out.t2 = out.fit["T2"];
      out.t2_sigma = out.fit.error("T2");
      out.n = out.fit["n"];
      out.n_sigma = out.fit.error("n");
      out.beat_mhz = std::abs(out.fit["f_hf"]);
      out.beat_sigma = out.fit.error("f_hf");
    }
  } else {
    ModelFn m = [D](double t, const Eigen::VectorXd& p) { return ramsey_carbon(t, D, p); };
    opt.lower = detail::vec({-inf, -inf, 1e-3, 0.1, -inf, -inf});
    opt.upper = detail::vec({inf, inf, inf, 5.0, inf, inf});
    const auto p0 = detail::vec({c0, amp / 2, o.t2_guess_ns, o.n_guess, o.beat_guess_mhz, o.phase_guess});
    out.fit = nlls_fit(m, tau_ns, p0_data, sigma, p0, {"c", "A", "T2", "n", "f_c", "phi"}, opt);
    out.beat_identifiable = out.fit.converged;
    if (out.fit.converged) {
      out.t2 = out.fit["T2"];
      out.t2_sigma = out.fit.error("T2");
      out.n = out.fit["n"];
      out.n_sigma = out.fit.error("n");
      out.beat_mhz = std::abs(out.fit["f_c"]);
      out.beat_sigma = out.fit.error("f_c");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rabi and echo

struct RabiFit {
  FitResult fit;
  double frequency_mhz = 0;
  double sigma_mhz = 0;
};

/// y = c + A cos(2 pi f t + phi) exp(-t/T_d), t in ns, f in MHz.
inline RabiFit fit_rabi(const std::vector<double>& t_ns, const std::vector<double>& y, const std::vector<double>& sigma = {}) {
  if (t_ns.size() < 6) throw InvalidParameter("Rabi fit needs at least 6 points");
  const double c0 = mean(y);
  // Coarse periodogram for the starting frequency.
  const double span = *std::max_element(t_ns.begin(), t_ns.end()) - *std::min_element(t_ns.begin(), t_ns.end());
  double dtmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < t_ns.size(); ++i) dtmin = std::min(dtmin, std::abs(t_ns[i] - t_ns[i - 1]));
  const double fny = 1e3 / (2 * dtmin), df = 1e3 / (8 * span);
  double fbest = df, pbest = -1;
  for (double f = df; f < fny; f += df) {
    std::complex<double> s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - c0) * std::polar(1.0, -rad_per_ns(f) * t_ns[i]);
    if (std::norm(s) > pbest) {
      pbest = std::norm(s);
      fbest = f;
    }
  }
  double amp = 0;
  for (double v : y) amp = std::max(amp, std::abs(v - c0));
  ModelFn m = [](double t, const Eigen::VectorXd& p) {
    return p[0] + p[1] * std::cos(rad_per_ns(p[2]) * t + p[3]) * std::exp(-t * p[4]);
  };
  NllsOptions opt;
  opt.lower = detail::vec({-1e300, 0.0, 0.0, -1e300, 0.0});
  std::vector<FitResult> tries;
  for (double ph : {0.0, std::numbers::pi / 2, std::numbers::pi, -std::numbers::pi / 2})
    tries.push_back(nlls_fit(m, t_ns, y, sigma, detail::vec({c0, amp, fbest, ph, 1.0 / (10 * span)}),
                             {"c", "A", "f", "phi", "decay_rate"}, opt));
  RabiFit out;
  out.fit = detail::best_of(tries);
  detail::require_converged(out.fit, "Rabi fit");
  out.frequency_mhz = out.fit["f"];
  out.sigma_mhz = out.fit.error("f");
  return out;
}

struct EchoFit {
  FitResult fit;
  double amplitude = 0;
  double t_decay = 0;
  double revival_depth = 0;
  double larmor_period = 0;
  double sigma_larmor = 0;
};

/// Echo coherence with carbon-bath collapses:
/// y = A exp(-(tau/T)^2) exp(-a sin^2(pi tau_half / T_L)), with tau = 2 tau_half.
inline double echo_model(double tau_half, const Eigen::VectorXd& p) {
  const double tau = 2 * tau_half;
  const double s = std::sin(std::numbers::pi * tau_half / p[3]);
  return p[0] * std::exp(-(tau / p[1]) * (tau / p[1])) * std::exp(-p[2] * s * s);
}

inline EchoFit fit_echo(const std::vector<double>& tau_half, const std::vector<double>& y, const std::vector<double>& sigma,
                        double larmor_guess, double t_guess) {
  if (tau_half.size() < 6) throw InvalidParameter("echo fit needs at least 6 points");
  const double amax = *std::max_element(y.begin(), y.end());
  NllsOptions opt;
  opt.lower = detail::vec({0.0, 1e-9, 0.0, 1e-9});
  std::vector<FitResult> tries;
  for (double a : {1.0, 5.0})
    for (double tl : {0.98, 1.0, 1.02})
      tries.push_back(nlls_fit(echo_model, tau_half, y, sigma, detail::vec({amax, t_guess, a, tl * larmor_guess}),
                               {"A", "T", "depth", "T_L"}, opt));
  EchoFit out;
  out.fit = detail::best_of(tries);
  detail::require_converged(out.fit, "echo fit");
  out.amplitude = out.fit["A"];
  out.t_decay = out.fit["T"];
  out.revival_depth = out.fit["depth"];
  out.larmor_period = out.fit["T_L"];
  out.sigma_larmor = out.fit.error("T_L");
  return out;
}

// ---------------------------------------------------------------------------

/// Runs independent fits concurrently; results are in input order.
template <class R>
std::vector<R> fit_batch(const std::vector<std::function<R()>>& jobs, unsigned workers = 0) {
  std::vector<std::optional<R>> tmp(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t i) { tmp[i] = jobs[i](); });
  std::vector<R> out;
  out.reserve(jobs.size());
  for (auto& r : tmp) out.push_back(std::move(*r));
  return out;
}

}  // namespace nvcav
