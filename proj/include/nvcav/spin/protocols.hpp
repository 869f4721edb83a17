#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "nvcav/analysis/fits.hpp"
#include "nvcav/analysis/readout.hpp"
#include "nvcav/analysis/stats.hpp"
#include "nvcav/dynamics/calibration.hpp"
#include "nvcav/dynamics/engine.hpp"
#include "nvcav/dynamics/experiments.hpp"
#include "nvcav/spin/qubit.hpp"

namespace nvcav {

/// Readout response as an experimenter would calibrate it on this model.
inline ReadoutCalibration model_readout(const EngineModel& m) {
  const auto o = calibration_observables(m);
  return {o.F0, o.F1, o.prep_probability};
}

/// Readout response after a herald photon: preparation has succeeded, so the
/// m_s = 0 reference is the heralded first-readout click probability F0 / prep.
inline ReadoutCalibration heralded_readout(const ReadoutCalibration& c) { return {c.F0 / c.init_fidelity, c.F1, 1.0}; }

/// Sample of a symmetric stable law with characteristic function exp(-|t|^alpha).
/// `u` in (0, 1) drives the angle so that callers can stratify it.
inline double stable_sample(double alpha, double u, Rng& rng) {
  if (alpha == 2) return std::numbers::sqrt2 * boost::math::quantile(boost::math::normal(), u);
  if (alpha == 1) return std::tan(std::numbers::pi * (u - 0.5));
  const double v = std::numbers::pi * (u - 0.5);
  const double w = rng.exponential(1.0);
  return std::sin(alpha * v) / std::pow(std::cos(v), 1 / alpha) * std::pow(std::cos(v - alpha * v) / w, (1 - alpha) / alpha);
}

/// Quasi-static detuning in MHz whose dephasing is exp(-(tau / T2*)^n).
inline double quasi_static_detuning(const NoiseModel& n, double u, Rng& rng) {
  if (n.t2_star_ns > 1e200) return 0.0;
  // omega (rad/ns) = x / T2* with x stable of index n
  return stable_sample(n.decay_exponent, u, rng) / n.t2_star_ns / (2 * std::numbers::pi * 1e-3);
}

inline int sample_nitrogen(const NoiseModel& n, double u) {
  if (u < n.nitrogen[0]) return -1;
  if (u < n.nitrogen[0] + n.nitrogen[1]) return 0;
  return 1;
}

/// One repetition of an emitter whose qubit subspace is tracked coherently.
/// While `coherent` the emitter level is parked at g0 and `q` holds the state.
class SpinTrajectory {
 public:
  SpinTrajectory(const EngineModel& m, const NoiseModel& n, Rng& rng, std::uint64_t rep)
      : em(m, rng, rep, &clicks), m_(m), n_(n), rng_(rng) {
    nitrogen = sample_nitrogen(n, rng.uniform());
    noise_mhz = quasi_static_detuning(n, rng.uniform(), rng);
  }

  Emitter em;
  std::vector<ClickRecord> clicks;
  QubitState q;
  bool coherent = false;
  int nitrogen = 0;
  double noise_mhz = 0;

  double detuning() const { return noise_mhz + nitrogen * n_.hyperfine_mhz; }

  void prepare(double init_us = 100.0, double init_nW = 0.2) {
    em.gate = false;
    em.repump(Repump{});
    if (init_us > 0) em.spin_init(SpinInit{init_us, init_nW});
    em.gate = true;
    coherent = false;
  }

  /// Hands a classical qubit-subspace level over to the density matrix.
  void sync() {
    if (coherent) return;
    em.resolve(em.now);
    if (em.level == Level::G0 || em.level == Level::Gm1) {
      q = em.level == Level::G0 ? QubitState::ground() : QubitState::excited();
      em.level = Level::G0;
      coherent = true;
    }
  }

  void mw(MWPulse p) {
    sync();
    if (coherent) q = apply_mw(q, p, n_);
    em.now += p.duration_ns;
  }

  void free(double t_ns) {
    sync();
    if (coherent) q = evolve_free(q, detuning(), t_ns);
    em.now += t_ns;
  }

  void dephase_by(double c) {
    if (coherent) dephase(q, c);
  }

  /// Short optical pulse; returns the in-window clicks it produced.
  bool optical(double peak_uW = 35.0, double fwhm_ns = 1.94, double slot_ns = 126.0) {
    sync();
    const std::size_t before = clicks.size();
    if (coherent) {
      const double pe = m_.rates.p_exc(peak_uW);
      if (rng_.bernoulli(pe * q.p0())) {
        coherent = false;
        em.short_pulse(peak_uW, fwhm_ns, slot_ns, true);
      } else {
        // Not excited: Kraus diag(sqrt(1 - pe), 1), then incoherent return from m_s = -1.
        q.rho(0, 0) *= 1 - pe;
        q.rho(0, 1) *= std::sqrt(1 - pe);
        q.rho(1, 0) *= std::sqrt(1 - pe);
        q.rho /= q.rho.trace().real();
        const double r = m_.rates.return_prob(peak_uW);
        q.rho(0, 0) += r * q.rho(1, 1);
        q.rho(1, 1) *= 1 - r;
        q.rho(0, 1) *= std::sqrt(1 - r);
        q.rho(1, 0) *= std::sqrt(1 - r);
        em.short_pulse(peak_uW, fwhm_ns, slot_ns, false);
      }
    } else {
      em.short_pulse(peak_uW, fwhm_ns, slot_ns);
    }
    for (std::size_t i = before; i < clicks.size(); ++i)
      if (in_window(clicks[i], 3.0, 30.0)) return true;
    return false;
  }

  void collapse() {
    if (!coherent) return;
    em.level = rng_.bernoulli(std::clamp(q.p0(), 0.0, 1.0)) ? Level::G0 : Level::Gm1;
    coherent = false;
  }

  /// Any in-window click within `n` readout pulses.
  bool readout(unsigned n = 200) {
    collapse();
    for (unsigned i = 0; i < n; ++i)
      if (optical()) return true;
    return false;
  }

 private:
  const EngineModel& m_;
  const NoiseModel& n_;
  Rng& rng_;
};

struct SpinRunOptions {
  std::uint64_t seed = 1;
  std::uint64_t repetitions = 10000;  // per scan point
  unsigned workers = 0;
  unsigned readout = 200;
  double init_us = 100.0;
};

/// Clicked-repetition counts for every scan point; point k uses seed + 1000003 k.
inline std::vector<std::uint64_t> spin_scan(const EngineModel& m, const NoiseModel& n, std::size_t points, const SpinRunOptions& r,
                                            const std::function<bool(SpinTrajectory&, std::size_t)>& body) {
  m.validate();
  n.validate();
  if (r.repetitions == 0) throw InvalidParameter("repetitions must be at least 1");
  using Acc = std::vector<std::uint64_t>;
  return block_reduce<Acc>(
      points * r.repetitions, r.workers,
      [&](std::uint64_t b, std::uint64_t e) {
        Acc a(points, 0);
        for (std::uint64_t i = b; i < e; ++i) {
          const std::size_t k = i / r.repetitions;
          Rng rng(r.seed + 1000003ULL * k, i % r.repetitions);
          SpinTrajectory t(m, n, rng, i);
          if (body(t, k)) ++a[k];
        }
        return a;
      },
      [](Acc& a, Acc&& p) {
        if (a.empty()) a = std::move(p);
        else
          for (std::size_t i = 0; i < p.size(); ++i) a[i] += p[i];
      },
      Acc(points, 0));
}

struct SpinPoint {
  double x = 0;
  Proportion click;
  CorrectedPopulation p0;
  double expected_click = 0;  // exact expectation where available
};

inline std::vector<SpinPoint> to_points(const std::vector<double>& x, const std::vector<std::uint64_t>& k, std::uint64_t reps,
                                        const ReadoutCalibration& cal) {
  std::vector<SpinPoint> out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    SpinPoint p;
    p.x = x[i];
    p.click = binomial(k[i], reps);
    p.p0 = readout_correction(p.click.p, cal.F0, cal.F1, cal.init_fidelity, p.click.sigma);
    out.push_back(p);
  }
  return out;
}

/// Exact click probability of the readout for a prepared-then-rotated state
/// with m_s = 0 population `p0` inside the qubit subspace.
class ReadoutExpectation {
 public:
  explicit ReadoutExpectation(const EngineModel& m, unsigned readout = 200, double init_us = 100.0) : ch_(m) {
    prep_ = ch_.init(ch_.after_repump(), init_us, m.rates.init_ref_power_nW);
    c0_ = ch_.any_click(PulseChain::Vec(1, 0, 0, 0), readout);
    c1_ = ch_.any_click(PulseChain::Vec(0, 1, 0, 0), readout);
    cn_ = ch_.any_click(PulseChain::Vec(0, 0, 0, 1), readout);
  }
  /// `p0_given_0` / `p0_given_1`: final m_s = 0 population for an initial |0> / |1>.
  double click(double p0_given_0, double p0_given_1) const {
    // m_s = +1 (half of the prepared +-1 population) is never driven.
    const double g0 = prep_[0], mm = prep_[1] / 2, mp = prep_[1] / 2;
    const double p0 = g0 * p0_given_0 + mm * p0_given_1;
    const double p1 = g0 * (1 - p0_given_0) + mm * (1 - p0_given_1) + mp;
    return p0 * c0_ + p1 * c1_ + prep_[3] * cn_;
  }

 private:
  PulseChain ch_;
  PulseChain::Vec prep_;
  double c0_ = 0, c1_ = 0, cn_ = 0;
};

// Rabi -------------------------------------------------------------------------

struct RabiResult {
  std::vector<SpinPoint> points;
  std::optional<RabiFit> fit;
  double pi_fidelity_estimate = 0;
};

inline double rabi_population(double t_ns, double rabi_mhz, const NoiseModel& n, bool start_in_0 = true) {
  QubitState q = start_in_0 ? QubitState::ground() : QubitState::excited();
  q = apply_mw(q, MWPulse{rabi_mhz, t_ns}, n);
  return q.p0();
}

inline RabiResult rabi_experiment(const EngineModel& m, const NoiseModel& n, const std::vector<double>& durations_ns,
                                  const SpinRunOptions& r = {}, double rabi_mhz = 10.73) {
  for (double d : durations_ns)
    if (!(d >= 0)) throw InvalidParameter("Rabi durations must be non-negative");
  const auto k = spin_scan(m, n, durations_ns.size(), r, [&](SpinTrajectory& t, std::size_t i) {
    t.prepare(r.init_us);
    t.mw(MWPulse{rabi_mhz, durations_ns[i]});
    return t.readout(r.readout);
  });
  RabiResult out;
  const auto cal = model_readout(m);
  out.points = to_points(durations_ns, k, r.repetitions, cal);
  const ReadoutExpectation ex(m, r.readout, r.init_us);
  for (auto& p : out.points)
    p.expected_click = ex.click(rabi_population(p.x, rabi_mhz, n, true), rabi_population(p.x, rabi_mhz, n, false));
  std::vector<double> y, s;
  for (const auto& p : out.points) {
    y.push_back(p.p0.unclipped);
    s.push_back(std::max(p.p0.sigma, 1e-6));
  }
  if (durations_ns.size() < 6) return out;
  try {
    out.fit = fit_rabi(durations_ns, y, s);
    const auto& f = out.fit->fit;
    auto model = [&](double t) { return f["c"] + f["A"] * std::cos(rad_per_ns(f["f"]) * t + f["phi"]) * std::exp(-t * f["decay_rate"]); };
    // P0 after a pi pulse relative to the prepared m_s = 0 population.
    const double t_pi = 1e3 / (2 * out.fit->frequency_mhz);
    out.pi_fidelity_estimate = 1 - model(t_pi) / cal.init_fidelity;
  } catch (const FitFailure&) {
  }
  return out;
}

// Ramsey -----------------------------------------------------------------------

/// Closed-form m_s = 0 population: c - A e^{-(tau/T2*)^n} sum_k P_k cos(2 pi (Delta + k f_hf) tau).
inline double ramsey_closed_form(double tau_ns, const NoiseModel& n, double detuning_mhz) {
  const double a = 1 - n.depolarizing(std::numbers::pi / 2);
  const double env = n.t2_star_ns > 1e200 ? 1.0 : std::exp(-std::pow(tau_ns / n.t2_star_ns, n.decay_exponent));
  double s = 0;
  for (int k = -1; k <= 1; ++k) s += n.nitrogen[k + 1] * std::cos(rad_per_ns(detuning_mhz + k * n.hyperfine_mhz) * tau_ns);
  return 0.5 - 0.5 * a * a * env * s;
}

/// Ramsey on a coherent qubit with given total static detuning.
inline double ramsey_population(double tau_ns, double static_mhz, const NoiseModel& n, double detuning_mhz, bool start_in_0 = true) {
  QubitState q = start_in_0 ? QubitState::ground() : QubitState::excited();
  q = apply_mw(q, MWPulse::half_pi(0), n);
  q = evolve_free(q, static_mhz, tau_ns);
  q = apply_mw(q, MWPulse::half_pi(-rad_per_ns(detuning_mhz) * tau_ns), n);
  return q.p0();
}

/// Noise-averaged Ramsey population from `samples` stratified draws of the
/// nitrogen state and quasi-static detuning.
inline std::vector<double> ramsey_expectation(const std::vector<double>& delays_ns, const NoiseModel& n, double detuning_mhz,
                                              std::uint64_t samples, std::uint64_t seed = 1, unsigned workers = 0) {
  n.validate();
  if (samples == 0) throw InvalidParameter("samples must be at least 1");
  using Acc = std::vector<double>;
  Acc sum = block_reduce<Acc>(
      samples, workers,
      [&](std::uint64_t b, std::uint64_t e) {
        Acc a(delays_ns.size(), 0.0);
        for (std::uint64_t i = b; i < e; ++i) {
          Rng rng(seed, i);
          // Proportional strata: sample i covers [i, i+1) / samples of the joint (k, noise) quantile.
          const double u = (static_cast<double>(i) + rng.uniform()) / static_cast<double>(samples);
          double lo = 0;
          int k = -1;
          for (; k < 1; ++k) {
            if (u < lo + n.nitrogen[k + 1]) break;
            lo += n.nitrogen[k + 1];
          }
          const double w = n.nitrogen[k + 1];
          const double v = w > 0 ? std::clamp((u - lo) / w, 1e-300, 1 - 1e-16) : 0.5;
          const double d = quasi_static_detuning(n, v, rng) + k * n.hyperfine_mhz;
          for (std::size_t j = 0; j < delays_ns.size(); ++j) a[j] += ramsey_population(delays_ns[j], d, n, detuning_mhz);
        }
        return a;
      },
      [](Acc& a, Acc&& p) {
        for (std::size_t i = 0; i < p.size(); ++i) a[i] += p[i];
      },
      Acc(delays_ns.size(), 0.0));
  for (double& v : sum) v /= static_cast<double>(samples);
  return sum;
}

struct RamseyResult {
  std::vector<SpinPoint> points;
  std::optional<RamseyFit> fit;
};

inline RamseyResult ramsey_experiment(const EngineModel& m, const NoiseModel& n, const std::vector<double>& delays_ns,
                                      const SpinRunOptions& r = {}, double detuning_mhz = 50.0,
                                      RamseyModel model = RamseyModel::NitrogenTriplet) {
  for (double d : delays_ns)
    if (!(d >= 0)) throw InvalidParameter("Ramsey delays must be non-negative");
  const auto k = spin_scan(m, n, delays_ns.size(), r, [&](SpinTrajectory& t, std::size_t i) {
    t.prepare(r.init_us);
    t.mw(MWPulse::half_pi(0));
    t.free(delays_ns[i]);
    t.mw(MWPulse::half_pi(-rad_per_ns(detuning_mhz) * delays_ns[i]));
    return t.readout(r.readout);
  });
  RamseyResult out;
  const auto cal = model_readout(m);
  out.points = to_points(delays_ns, k, r.repetitions, cal);
  const ReadoutExpectation ex(m, r.readout, r.init_us);
  for (auto& p : out.points) {
    const double c = ramsey_closed_form(p.x, n, detuning_mhz);
    p.expected_click = ex.click(c, 1 - c);
  }
  std::vector<double> y, s;
  for (const auto& p : out.points) {
    y.push_back(p.p0.unclipped);
    s.push_back(std::max(p.p0.sigma, 1e-6));
  }
  RamseyOptions o;
  o.model = model;
  o.detuning_mhz = detuning_mhz;
  o.t2_guess_ns = n.t2_star_ns > 1e200 ? 1e4 : n.t2_star_ns;
  o.n_guess = n.decay_exponent;
  o.beat_guess_mhz = n.hyperfine_mhz > 0 ? n.hyperfine_mhz : 1.0;
  try {
    out.fit = fit_ramsey(delays_ns, y, s, o);
    if (!out.fit->fit.converged) out.fit.reset();
  } catch (const FitFailure&) {
  }
  return out;
}

// Hahn echo ----------------------------------------------------------------------

struct EchoResult {
  std::vector<SpinPoint> points;  // x = tau / 2 in us
  std::vector<double> coherence;  // 2 P0 / prep - 1
  std::vector<double> coherence_sigma;
  std::optional<EchoFit> fit;
  std::vector<double> revivals_us;
};

inline double echo_population(double tau_us, double static_mhz, const NoiseModel& n, bool start_in_0 = true) {
  QubitState q = start_in_0 ? QubitState::ground() : QubitState::excited();
  q = apply_mw(q, MWPulse::half_pi(0), n);
  q = evolve_free(q, static_mhz, 500 * tau_us);
  q = apply_mw(q, MWPulse::pi(0), n);
  q = evolve_free(q, static_mhz, 500 * tau_us);
  dephase(q, n.echo_coherence(tau_us));
  q = apply_mw(q, MWPulse::half_pi(0), n);
  return q.p0();
}

inline EchoResult hahn_echo_experiment(const EngineModel& m, const NoiseModel& n, const std::vector<double>& tau_half_us,
                                       const SpinRunOptions& r = {}) {
  for (double d : tau_half_us)
    if (!(d >= 0)) throw InvalidParameter("echo delays must be non-negative");
  const auto k = spin_scan(m, n, tau_half_us.size(), r, [&](SpinTrajectory& t, std::size_t i) {
    t.prepare(r.init_us);
    t.mw(MWPulse::half_pi(0));
    t.free(1e3 * tau_half_us[i]);
    t.mw(MWPulse::pi(0));
    t.free(1e3 * tau_half_us[i]);
    t.dephase_by(n.echo_coherence(2 * tau_half_us[i]));
    t.mw(MWPulse::half_pi(0));
    return t.readout(r.readout);
  });
  EchoResult out;
  const auto cal = model_readout(m);
  out.points = to_points(tau_half_us, k, r.repetitions, cal);
  const ReadoutExpectation ex(m, r.readout, r.init_us);
  for (auto& p : out.points) {
    const double c = echo_population(2 * p.x, 0.0, n);
    p.expected_click = ex.click(c, echo_population(2 * p.x, 0.0, n, false));
    out.coherence.push_back(2 * p.p0.unclipped / cal.init_fidelity - 1);
    out.coherence_sigma.push_back(std::max(2 * p.p0.sigma / cal.init_fidelity, 1e-6));
  }
  if (tau_half_us.size() < 6) return out;
  try {
    out.fit = fit_echo(tau_half_us, out.coherence, out.coherence_sigma, n.larmor_period_us, n.echo_decay_us);
    for (int j = 1; j <= 3; ++j) out.revivals_us.push_back(j * out.fit->larmor_period);
  } catch (const FitFailure&) {
  }
  return out;
}

// ESR ----------------------------------------------------------------------------

struct EsrSettings {
  double center_mhz = 0;       // m_I = 0 resonance, offsets are relative to it
  double hyperfine_mhz = 2.16;
  double rabi_mhz = 0.25;
  double duration_us = 10.0;
  unsigned readout = 50;
  double t2_star_ns = 3700.0;
  double decay_exponent = 2.0;
};

inline NoiseModel esr_noise(const NoiseModel& base, const EsrSettings& s) {
  NoiseModel n = base;
  n.hyperfine_mhz = s.hyperfine_mhz;
  n.t2_star_ns = s.t2_star_ns;
  n.decay_exponent = s.decay_exponent;
  return n;
}

/// Final m_s = 0 population of a detuned square MW pulse.
inline double esr_population(double detuning_mhz, const EsrSettings& s, const NoiseModel& n) {
  MWPulse p{s.rabi_mhz, 1e3 * s.duration_us, 0, detuning_mhz};
  return apply_mw(QubitState::ground(), p, n).p0();
}

struct EsrResult {
  std::vector<SpinPoint> points;  // x = MW frequency offset in MHz; click = any click in the readout
  std::vector<double> dips_mhz;
  double dip_width_mhz = 0;
};

inline EsrResult esr_experiment(const EngineModel& m, const NoiseModel& base, const std::vector<double>& freqs_mhz,
                                const SpinRunOptions& r = {}, const EsrSettings& s = {}) {
  const NoiseModel n = esr_noise(base, s);
  const auto k = spin_scan(m, n, freqs_mhz.size(), r, [&](SpinTrajectory& t, std::size_t i) {
    t.prepare(r.init_us);
    const double det = s.center_mhz + t.detuning() - freqs_mhz[i];
    t.mw(MWPulse{s.rabi_mhz, 1e3 * s.duration_us, 0, det});
    return t.readout(s.readout);
  });
  EsrResult out;
  const auto cal = model_readout(m);
  out.points = to_points(freqs_mhz, k, r.repetitions, cal);
  if (s.rabi_mhz > 0 && freqs_mhz.size() >= 8) {
    std::vector<double> y, sg;
    for (const auto& p : out.points) {
      y.push_back(p.click.p);
      sg.push_back(std::max(p.click.sigma, 1e-6));
    }
    const double c0 = *std::max_element(y.begin(), y.end());
    const double depth = c0 - *std::min_element(y.begin(), y.end());
    ModelFn model = [](double f, const Eigen::VectorXd& p) {
      double v = p[0];
      for (int j = 0; j < 3; ++j) v -= p[1 + j] * std::exp(-0.5 * std::pow((f - p[4 + j]) / p[7], 2));
      return v;
    };
    const auto p0 = detail::vec({c0, depth, depth, depth, s.center_mhz - s.hyperfine_mhz, s.center_mhz,
                                 s.center_mhz + s.hyperfine_mhz, std::max(0.1, s.hyperfine_mhz / 6)});
    const auto f = nlls_fit(model, freqs_mhz, y, sg, p0, {"c", "A_m", "A_0", "A_p", "f_m", "f_0", "f_p", "width"});
    if (f.converged) {
      out.dips_mhz = {f["f_m"], f["f_0"], f["f_p"]};
      std::sort(out.dips_mhz.begin(), out.dips_mhz.end());
      out.dip_width_mhz = std::abs(f["width"]);
    }
  }
  return out;
}

// Spin-photon protocols -------------------------------------------------------------

enum class Basis { Z, X };

struct ProtocolSettings {
  double tau_half_ns = 23568.0;
  double peak_uW = 35.0;
  unsigned rounds = 1;
  Basis basis = Basis::Z;
  std::optional<ReadoutCalibration> calibration;  // heralded model calibration when unset
};

struct ProtocolResult {
  std::uint64_t attempts = 0;
  Proportion herald_rate;               // Bell: click in E or L; GHZ: an (E, L) or (L, E) pair
  std::vector<Proportion> round_rate;   // per-round herald probability (marginal)
  ConditionalTable table;
  std::vector<HeraldRecord> records;
  bool empty = true;
  ReadoutCalibration calibration;
};

/// One attempt of the time-bin sequence; returns the per-round click pattern.
inline std::string time_bin_attempt(SpinTrajectory& t, const ProtocolSettings& s) {
  std::string pattern;
  t.mw(MWPulse::half_pi(0));
  for (unsigned round = 0; round < s.rounds; ++round) {
    t.em.round = static_cast<std::uint8_t>(round);
    const bool e = t.optical(s.peak_uW);
    t.free(std::max(0.0, s.tau_half_ns - 126.0));
    t.mw(MWPulse::pi(0));
    t.free(s.tau_half_ns);
    const bool l = t.optical(s.peak_uW);
    pattern += e && l ? "B" : e ? "E" : l ? "L" : "-";
  }
  return pattern;
}

inline ProtocolResult time_bin_protocol(const EngineModel& m, const NoiseModel& n, const RunOptions& r, const ProtocolSettings& s,
                                        unsigned readout = 200, double init_us = 100.0) {
  m.validate();
  n.validate();
  if (r.repetitions == 0) throw InvalidParameter("attempts must be at least 1");
  if (s.rounds == 0) throw InvalidParameter("protocol needs at least one round");
  struct Acc {
    std::vector<HeraldRecord> records;
    std::vector<std::uint64_t> round_heralds;
  };
  Acc acc = block_reduce<Acc>(
      r.repetitions, r.workers,
      [&](std::uint64_t b, std::uint64_t e) {
        Acc a;
        a.round_heralds.assign(s.rounds, 0);
        for (std::uint64_t rep = b; rep < e; ++rep) {
          Rng rng(r.seed, rep);
          SpinTrajectory t(m, n, rng, rep);
          t.prepare(init_us);
          const std::string pat = time_bin_attempt(t, s);
          bool all = true;
          for (unsigned i = 0; i < s.rounds; ++i) {
            const bool one = pat[i] == 'E' || pat[i] == 'L';
            if (one) ++a.round_heralds[i];
            if (s.rounds == 1 ? pat[i] == '-' : !one) all = false;
          }
          // Every double click pattern is recorded; the herald rate counts only the time-bin pairs.
          if (!all) continue;
          if (s.basis == Basis::X) t.mw(MWPulse::half_pi(0));
          HeraldRecord h;
          h.rep = rep;
          h.pattern = pat == "B" ? "EL" : pat;
          h.readout_click = t.readout(readout);
          a.records.push_back(h);
        }
        return a;
      },
      [](Acc& a, Acc&& p) {
        a.records.insert(a.records.end(), p.records.begin(), p.records.end());
        if (a.round_heralds.empty()) a.round_heralds = p.round_heralds;
        else
          for (std::size_t i = 0; i < p.round_heralds.size(); ++i) a.round_heralds[i] += p.round_heralds[i];
      });
  ProtocolResult out;
  out.attempts = r.repetitions;
  out.records = std::move(acc.records);
  std::uint64_t heralds = 0;
  for (const auto& h : out.records)
    if (s.rounds == 1 || h.pattern == "EL" || h.pattern == "LE") ++heralds;
  out.herald_rate = binomial(heralds, r.repetitions);
  for (auto k : acc.round_heralds) out.round_rate.push_back(binomial(k, r.repetitions));
  out.calibration = s.calibration ? *s.calibration : heralded_readout(model_readout(m));
  const std::vector<std::string> expected =
      s.rounds == 1 ? std::vector<std::string>{"E", "L"} : std::vector<std::string>{"EL", "LE"};
  out.table = conditional_table(out.records, r.repetitions, expected, out.calibration);
  out.empty = out.records.empty();
  return out;
}

inline ProtocolResult bell_protocol(const EngineModel& m, const NoiseModel& n, const RunOptions& r, Basis basis = Basis::Z,
                                    double tau_half_ns = 23568.0) {
  ProtocolSettings s;
  s.basis = basis;
  s.tau_half_ns = tau_half_ns;
  return time_bin_protocol(m, n, r, s);
}

inline ProtocolResult ghz_protocol(const EngineModel& m, const NoiseModel& n, const RunOptions& r, double tau_half_ns = 23568.0) {
  ProtocolSettings s;
  s.rounds = 2;
  s.tau_half_ns = tau_half_ns;
  return time_bin_protocol(m, n, r, s);
}

}  // namespace nvcav
