#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "nvcav/analysis/fits.hpp"
#include "nvcav/analysis/histogram.hpp"
#include "nvcav/analysis/nlls.hpp"
#include "nvcav/analysis/readout.hpp"
#include "nvcav/analysis/stats.hpp"
#include "nvcav/dynamics/chain.hpp"
#include "nvcav/dynamics/engine.hpp"

namespace nvcav {

struct RunOptions {
  std::uint64_t seed = 1;
  std::uint64_t repetitions = 10000;
  unsigned workers = 0;
};

inline SimOptions sim_options(const RunOptions& r, std::string experiment, bool split = false) {
  SimOptions o;
  o.workers = r.workers;
  o.split_channels = split;
  o.experiment = std::move(experiment);
  return o;
}

// Sequences ----------------------------------------------------------------

/// Repump and E1 initialization with the detector gated off.
inline PulseSequence prep_sequence(double init_us = 100.0, double init_nW = 0.2) {
  PulseSequence s;
  s.add(DetectorGate{false}).add(Repump{});
  if (init_us > 0) s.add(SpinInit{init_us, init_nW});
  s.add(DetectorGate{true});
  return s;
}

inline PulseSequence lifetime_sequence(double init_us = 100.0, unsigned n_pulses = 100, double peak_uW = 35.0) {
  PulseSequence s = prep_sequence(init_us);
  s.name = "lifetime";
  s.add(ReadoutBlock{n_pulses, 126.0, peak_uW});
  return s;
}

inline PulseSequence saturation_sequence(double peak_uW) {
  PulseSequence s = prep_sequence();
  s.name = "saturation";
  s.add(ShortExcite{peak_uW});
  return s;
}

inline PulseSequence hbt_sequence(unsigned n_pulses = 30) {
  PulseSequence s = prep_sequence();
  s.name = "hbt";
  s.add(ReadoutBlock{n_pulses});
  return s;
}

inline PulseSequence spin_pumping_sequence(unsigned n_pulses = 600, double init_us = 120.0) {
  PulseSequence s = prep_sequence(init_us);
  s.name = "spin_pumping";
  s.add(ReadoutBlock{n_pulses});
  return s;
}

/// Pump into +-1, re-initialize for `init_us`, read out.
inline PulseSequence spin_init_sequence(double init_us, double init_nW = 0.2, unsigned pump_pulses = 600, unsigned readout = 30) {
  PulseSequence s;
  s.name = "spin_init";
  s.add(DetectorGate{false}).add(Repump{}).add(ReadoutBlock{pump_pulses});
  if (init_us > 0) s.add(SpinInit{init_us, init_nW});
  s.add(DetectorGate{true}).add(ReadoutBlock{readout});
  return s;
}

/// m_s = +-1 preparation for the readout calibration.
inline PulseSequence prep_ms1_sequence(unsigned readout = 200, unsigned pump_pulses = 600, double init_us = 100.0) {
  PulseSequence s;
  s.name = "readout_ms1";
  s.add(DetectorGate{false}).add(Repump{}).add(SpinInit{init_us, 0.2}).add(ReadoutBlock{pump_pulses});
  s.add(DetectorGate{true}).add(ReadoutBlock{readout});
  return s;
}

inline PulseSequence prep_ms0_sequence(unsigned readout = 200, double init_us = 100.0) {
  PulseSequence s = prep_sequence(init_us);
  s.name = "readout_ms0";
  s.add(ReadoutBlock{readout});
  return s;
}

/// In-window click counts per pulse index.
inline std::vector<double> clicks_per_pulse(const ClickStream& s, unsigned n_pulses, unsigned first_pulse = 0, double lo = 3.0,
                                            double hi = 30.0) {
  std::vector<double> c(n_pulses, 0.0);
  for (const auto& k : s.clicks)
    if (k.pulse >= first_pulse && k.pulse < first_pulse + n_pulses && in_window(k, lo, hi)) c[k.pulse - first_pulse] += 1;
  return c;
}

/// Number of repetitions with at least one in-window click in pulses [first, first + n).
inline std::uint64_t reps_with_click(const ClickStream& s, unsigned first, unsigned n, double lo = 3.0, double hi = 30.0) {
  std::uint64_t k = 0, last = std::numeric_limits<std::uint64_t>::max();
  for (const auto& c : s.clicks)
    if (c.pulse >= first && c.pulse < first + n && in_window(c, lo, hi) && c.rep != last) {
      ++k;
      last = c.rep;
    }
  return k;
}

// Lifetime -------------------------------------------------------------------

struct LifetimeRun {
  SimResult sim;
  LifetimeFit fit;
};

inline LifetimeRun lifetime_experiment(const EngineModel& m, const RunOptions& r, const LifetimeOptions& lo = {}, double init_us = 100.0) {
  LifetimeRun out;
  out.sim = simulate_sequence(lifetime_sequence(init_us), m, r.seed, r.repetitions, sim_options(r, "lifetime"));
  out.fit = fit_lifetime(out.sim.stream, lo);
  return out;
}

// Saturation ----------------------------------------------------------------

struct SaturationPoint {
  double power_uW = 0;
  Proportion click;
  double expected = 0;
};

inline std::vector<SaturationPoint> saturation_experiment(const EngineModel& m, const std::vector<double>& powers, const RunOptions& r) {
  std::vector<SaturationPoint> out;
  std::uint64_t k = 0;
  for (double p : powers) {
    if (!(p >= 0)) throw InvalidParameter("powers must be non-negative");
    RunOptions rr = r;
    rr.seed = r.seed + 1000003ULL * k++;
    const auto sim = simulate_sequence(saturation_sequence(p), m, rr.seed, r.repetitions, sim_options(rr, "saturation"));
    SaturationPoint pt;
    pt.power_uW = p;
    pt.click = binomial(reps_with_click(sim.stream, 0, 1), r.repetitions);
    const PulseChain ch(m, p);
    pt.expected = ch.click_prob(ch.init(ch.after_repump(), 100.0, m.rates.init_ref_power_nW));
    out.push_back(pt);
  }
  return out;
}

/// Expected first-pulse click probability at each power.
inline std::vector<double> saturation_expectation(const EngineModel& m, const std::vector<double>& powers) {
  std::vector<double> y;
  for (double p : powers) {
    const PulseChain ch(m, p);
    y.push_back(ch.click_prob(ch.init(ch.after_repump(), 100.0, m.rates.init_ref_power_nW)));
  }
  return y;
}

/// Coefficient of determination of a straight-line fit.
inline double linear_r2(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 3) throw InvalidParameter("linear fit needs at least 3 matching points");
  const double mx = mean(x), my = mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw InvalidParameter("degenerate data for a linear fit");
  return sxy * sxy / (sxx * syy);
}

// HBT -----------------------------------------------------------------------

struct HbtRun {
  SimResult sim;
  G2Histogram histogram;
};

inline HbtRun hbt_experiment(const EngineModel& m, const RunOptions& r, unsigned n_pulses = 30) {
  HbtRun out;
  out.sim = simulate_sequence(hbt_sequence(n_pulses), m, r.seed, r.repetitions, sim_options(r, "hbt", true));
  out.histogram = hbt_coincidences(out.sim.stream, static_cast<int>(n_pulses));
  return out;
}

/// Expected A x B coincidences per repetition from the exact chain, both
/// channels behind a 50:50 split.
inline G2Histogram expected_hbt_histogram(const EngineModel& m, unsigned n_pulses = 30) {
  const PulseChain ch(m);
  const auto t = ch.transfer();
  const double mu = -std::log1p(-ch.background());
  std::vector<PulseChain::Vec> x(n_pulses);
  x[0] = ch.init(ch.after_repump(), 100.0, m.rates.init_ref_power_nW);
  for (unsigned i = 1; i < n_pulses; ++i) x[i] = t * x[i - 1];
  G2Histogram h = make_g2_histogram(static_cast<int>(n_pulses));
  for (unsigned a = 0; a < n_pulses; ++a) {
    const double sa = ch.signal_prob(x[a]);
    h.at(0) += 0.25 * (2 * sa * mu + mu * mu);
    PulseChain::Vec y = ch.signal() * x[a];
    for (unsigned b = a + 1; b < n_pulses; ++b) {
      const double sb = ch.signal_prob(x[b]);
      const double joint = (ch.signal() * y).sum() + sa * mu + sb * mu + mu * mu;
      const int dn = static_cast<int>(b - a);
      h.at(dn) += 0.25 * joint;
      h.at(-dn) += 0.25 * joint;
      y = t * y;
    }
  }
  return h;
}

// Spin pumping --------------------------------------------------------------

struct PumpingCurve {
  std::vector<double> pulse;
  std::vector<double> counts;     // in-window clicks per pulse index
  std::vector<double> expected;   // chain expectation x repetitions
  DoubleExpFit fit;
  double floor_fidelity = 0;      // 1 - floor / first-pulse level from the fit
};

inline double pumping_floor_fidelity(const DoubleExpFit& f) {
  const double start = f.A_fast + f.A_slow + f.offset;
  if (!(start > 0)) throw FitFailure("pumping curve has no positive initial level");
  return 1 - f.offset / start;
}

inline PumpingCurve spin_pumping_experiment(const EngineModel& m, const RunOptions& r, unsigned n_pulses = 600) {
  const auto sim = simulate_sequence(spin_pumping_sequence(n_pulses), m, r.seed, r.repetitions, sim_options(r, "spin_pumping"));
  PumpingCurve c;
  c.counts = clicks_per_pulse(sim.stream, n_pulses);
  const PulseChain ch(m);
  const auto e = ch.click_curve(ch.init(ch.after_repump(), 120.0, m.rates.init_ref_power_nW), n_pulses);
  for (unsigned i = 0; i < n_pulses; ++i) {
    c.pulse.push_back(i);
    c.expected.push_back(e[i] * static_cast<double>(r.repetitions));
  }
  c.fit = fit_double_exp_offset(c.pulse, c.counts, poisson_sigma(c.counts));
  c.floor_fidelity = pumping_floor_fidelity(c.fit);
  return c;
}

// Spin initialization -------------------------------------------------------

struct InitCurve {
  std::vector<double> duration_us;
  std::vector<double> counts;     // in-window readout clicks
  std::vector<double> expected;
  std::optional<ExpOffsetFit> fit;
};

inline InitCurve spin_init_experiment(const EngineModel& m, const std::vector<double>& durations_us, const RunOptions& r,
                                      double power_nW = 0.2, unsigned readout = 30) {
  InitCurve c;
  const PulseChain ch(m);
  std::uint64_t k = 0;
  for (double d : durations_us) {
    if (!(d >= 0)) throw InvalidParameter("init durations must be non-negative");
    const auto seq = spin_init_sequence(d, power_nW, 600, readout);
    const auto sim = simulate_sequence(seq, m, r.seed + 1000003ULL * k++, r.repetitions, sim_options(r, "spin_init"));
    const auto per = clicks_per_pulse(sim.stream, readout, 600);
    double tot = 0;
    for (double v : per) tot += v;
    c.duration_us.push_back(d);
    c.counts.push_back(tot);
    auto x = ch.pump(ch.after_repump(), 600);
    if (d > 0) x = ch.init(x, d, power_nW);
    double e = 0;
    for (double v : ch.click_curve(x, readout)) e += v;
    c.expected.push_back(e * static_cast<double>(r.repetitions));
  }
  if (c.counts.size() >= 4) c.fit = fit_exp_offset(c.duration_us, c.counts, poisson_sigma(c.counts));
  return c;
}

struct HeraldedInit {
  std::uint64_t heralds = 0;
  Proportion first;    // P(click in the first readout | herald)
  Proportion second;   // P(click in the second readout | herald)
  double ratio = 0;    // spin initialization fidelity of E1 pumping
  double prep_probability = 0;  // F0 / first: combined charge and spin preparation
  double expected_ratio = 0;
  double expected_first = 0;
};

/// Herald click -> readout -> pump to +-1 -> E1 init -> readout.
inline HeraldedInit heralded_init_fidelity(const EngineModel& m, const RunOptions& r, double F0 = 0.103, unsigned readout = 200,
                                           unsigned pump_pulses = 600, double init_us = 100.0) {
  m.validate();
  struct Tally {
    std::uint64_t heralds = 0, first = 0, second = 0;
  };
  const Tally t = block_reduce<Tally>(
      r.repetitions, r.workers,
      [&](std::uint64_t b, std::uint64_t e) {
        Tally p;
        std::vector<ClickRecord> buf;
        for (std::uint64_t rep = b; rep < e; ++rep) {
          Rng rng(r.seed, rep);
          buf.clear();
          Emitter em(m, rng, rep, &buf);
          em.gate = false;
          em.repump(Repump{});
          em.spin_init(SpinInit{init_us, 0.2});
          em.gate = true;
          em.short_pulse(35.0, 1.94, 126.0);
          auto any = [&] {
            for (const auto& c : buf)
              if (in_window(c, 3.0, 30.0)) return true;
            return false;
          };
          if (!any()) continue;
          ++p.heralds;
          buf.clear();
          for (unsigned i = 0; i < readout; ++i) em.short_pulse(35.0, 1.94, 126.0);
          if (any()) ++p.first;
          em.gate = false;
          for (unsigned i = 0; i < pump_pulses; ++i) em.short_pulse(35.0, 1.94, 126.0);
          em.spin_init(SpinInit{init_us, 0.2});
          em.gate = true;
          buf.clear();
          for (unsigned i = 0; i < readout; ++i) em.short_pulse(35.0, 1.94, 126.0);
          if (any()) ++p.second;
        }
        return p;
      },
      [](Tally& a, Tally&& p) {
        a.heralds += p.heralds;
        a.first += p.first;
        a.second += p.second;
      });
  HeraldedInit h;
  h.heralds = t.heralds;
  if (t.heralds == 0 || t.first == 0) throw FitFailure("no heralded repetitions with a first-readout click");
  h.first = binomial(t.first, t.heralds);
  h.second = binomial(t.second, t.heralds);
  h.ratio = h.second.p / h.first.p;
  h.prep_probability = F0 / h.first.p;
  const PulseChain ch(m);
  auto x = ch.click_branch(ch.init(ch.after_repump(), init_us, 0.2));
  x /= x.sum();
  h.expected_first = ch.any_click(x, readout);
  auto y = ch.init(ch.pump(x, readout + pump_pulses), init_us, 0.2);
  h.expected_ratio = ch.any_click(y, readout) / h.expected_first;
  return h;
}

// Readout calibration -------------------------------------------------------

inline ReadoutCurve readout_calibration(const EngineModel& m, const std::vector<unsigned>& grid, const RunOptions& r,
                                        unsigned readout = 200) {
  const auto s0 = simulate_sequence(prep_ms0_sequence(readout), m, r.seed, r.repetitions, sim_options(r, "readout_ms0"));
  const auto s1 = simulate_sequence(prep_ms1_sequence(readout), m, r.seed + 7919, r.repetitions, sim_options(r, "readout_ms1"));
  // Readout pulses are the last `readout` indices of each stream.
  auto shift = [&](ClickStream s, unsigned first) {
    std::vector<ClickRecord> kept;
    for (auto c : s.clicks)
      if (c.pulse >= first) {
        c.pulse -= first;
        kept.push_back(c);
      }
    s.clicks = std::move(kept);
    return s;
  };
  return readout_fidelity_curve(s0.stream, shift(s1.stream, 600), grid);
}

// PLE -----------------------------------------------------------------------

enum class PleVariant { EyDirect, E1E2PumpProbe, ExDepletion };

inline PleVariant parse_ple_variant(const std::string& s) {
  if (s == "Ey_direct" || s == "ey") return PleVariant::EyDirect;
  if (s == "E1_E2_pump_probe" || s == "e1e2") return PleVariant::E1E2PumpProbe;
  if (s == "Ex_depletion" || s == "ex") return PleVariant::ExDepletion;
  throw InvalidParameter("unknown PLE variant '" + s + "'");
}

struct PleSettings {
  double power_nW = -1;        // negative selects the variant default
  double duration_us = -1;
  unsigned readout = 30;
  double bin_us = 2.0;
};

inline PulseSequence ple_sequence(PleVariant v, double laser_ghz, const PleSettings& s = {}) {
  PulseSequence q;
  q.add(DetectorGate{false}).add(Repump{});
  switch (v) {
    case PleVariant::EyDirect: {
      q.name = "ple_ey";
      q.add(SpinInit{100.0, 0.2}).add(DetectorGate{true});
      q.add(CWExcite{s.duration_us > 0 ? s.duration_us : 200.0, s.power_nW >= 0 ? s.power_nW : 1.0, laser_ghz});
      break;
    }
    case PleVariant::E1E2PumpProbe: {
      q.name = "ple_e1e2";
      q.add(ReadoutBlock{300});
      q.add(CWExcite{s.duration_us > 0 ? s.duration_us : 100.0, s.power_nW >= 0 ? s.power_nW : 0.01, laser_ghz});
      q.add(DetectorGate{true}).add(ReadoutBlock{s.readout});
      break;
    }
    case PleVariant::ExDepletion: {
      q.name = "ple_ex";
      q.add(CWExcite{s.duration_us > 0 ? s.duration_us : 200.0, s.power_nW >= 0 ? s.power_nW : 50.0, laser_ghz});
      q.add(DetectorGate{true}).add(ReadoutBlock{s.readout});
      break;
    }
  }
  return q;
}

struct PlePoint {
  double laser_ghz = 0;
  double signal = 0;   // fit amplitude (Ey) or readout clicks per repetition
  double sigma = 0;
  double raw = 0;      // all gated clicks per repetition
  bool fitted = true;
};

struct PleResult {
  PleVariant variant = PleVariant::EyDirect;
  std::vector<PlePoint> points;
  std::optional<GaussianFit> gaussian;  // over detuning in MHz
};

inline PleResult ple_experiment(const EngineModel& m, PleVariant v, const std::vector<double>& laser_ghz, const RunOptions& r,
                                const PleSettings& s = {}) {
  PleResult out;
  out.variant = v;
  std::uint64_t k = 0;
  for (double f : laser_ghz) {
    const auto seq = ple_sequence(v, f, s);
    const auto sim = simulate_sequence(seq, m, r.seed + 1000003ULL * k++, r.repetitions, sim_options(r, seq.name));
    PlePoint p;
    p.laser_ghz = f;
    p.raw = static_cast<double>(sim.stream.clicks.size()) / static_cast<double>(r.repetitions);
    const double reps = static_cast<double>(r.repetitions);
    if (v == PleVariant::EyDirect) {
      const double dur = std::get<CWExcite>(seq.steps.back()).duration_us;
      Histogram h = make_histogram(0, dur * 1e3, s.bin_us * 1e3);
      for (const auto& c : sim.stream.clicks) h.fill(c.t_ns());
      std::vector<double> t, y;
      for (std::size_t i = 0; i < h.size(); ++i) {
        t.push_back(h.center(i) * 1e-3);
        y.push_back(h.counts[i]);
      }
      try {
        const auto fit = fit_exp_offset(t, y, poisson_sigma(y));
        // Initial count rate per repetition and bin.
        p.signal = fit.amplitude / reps;
        p.sigma = fit.fit.error("A") / reps;
      } catch (const FitFailure&) {
        p.fitted = false;
      }
    } else {
      const unsigned first = seq.pulse_count() - s.readout;
      double tot = 0;
      for (double c : clicks_per_pulse(sim.stream, s.readout, first)) tot += c;
      p.signal = tot / reps;
      p.sigma = std::sqrt(std::max(tot, 1.0)) / reps;
    }
    out.points.push_back(p);
  }
  if (v == PleVariant::EyDirect && out.points.size() >= 5) {
    std::vector<double> x, y, e;
    for (const auto& p : out.points)
      if (p.fitted && p.sigma > 0) {
        x.push_back(1e3 * (p.laser_ghz - m.rates.freq_ey));
        y.push_back(p.signal);
        e.push_back(p.sigma);
      }
    if (x.size() >= 5) out.gaussian = fit_gaussian(x, y, e);
  }
  return out;
}

// CW saturation -------------------------------------------------------------

struct CwTrace {
  double power_nW = 0;
  Histogram trace;
  std::optional<DoubleExpFit> fit;
  double amplitude_sum = 0;   // counts per bin per repetition at t = 0
  double amplitude_sigma = 0;
};

struct CwSaturation {
  std::vector<CwTrace> traces;
  std::optional<SaturationFit> saturation;
};

/// Resonant CW blocks after preparation; the per-repetition spectral offset is
/// disabled so that the configured P_sat is the saturation power of the line.
inline CwSaturation cw_saturation_experiment(const EngineModel& m0, const std::vector<double>& powers_nW, const RunOptions& r,
                                             double duration_us = 32.0, double bin_ns = 10.0, double fit_start_ns = 20.0) {
  EngineModel m = m0;
  m.rates.ey_inhomogeneous_mhz = 0.0;
  CwSaturation out;
  std::uint64_t k = 0;
  for (double p : powers_nW) {
    if (!(p > 0)) throw InvalidParameter("CW powers must be positive");
    PulseSequence seq = prep_sequence();
    seq.name = "cw_saturation";
    seq.add(CWExcite{duration_us, p, m.rates.freq_ey});
    const auto sim = simulate_sequence(seq, m, r.seed + 1000003ULL * k++, r.repetitions, sim_options(r, seq.name));
    CwTrace tr;
    tr.power_nW = p;
    tr.trace = make_histogram(0, duration_us * 1e3, bin_ns);
    for (const auto& c : sim.stream.clicks) tr.trace.fill(c.t_ns());
    tr.trace.normalization = r.repetitions;
    std::vector<double> t, y;
    for (std::size_t i = 0; i < tr.trace.size(); ++i)
      if (tr.trace.edges[i] >= fit_start_ns) {
        t.push_back(tr.trace.center(i));
        y.push_back(tr.trace.counts[i]);
      }
    try {
      tr.fit = fit_double_exp_offset(t, y, poisson_sigma(y));
      const double reps = static_cast<double>(r.repetitions);
      tr.amplitude_sum = (tr.fit->A_fast + tr.fit->A_slow) / reps;
      const auto& C = tr.fit->fit.covariance;
      tr.amplitude_sigma = tr.fit->single_exponential ? tr.fit->fit.error("A") / reps
                                                      : std::sqrt(std::max(0.0, C(0, 0) + C(2, 2) + 2 * C(0, 2))) / reps;
    } catch (const FitFailure&) {
    }
    out.traces.push_back(std::move(tr));
  }
  std::vector<double> x, y, e;
  for (const auto& t : out.traces)
    if (t.fit && t.amplitude_sigma > 0) {
      x.push_back(t.power_nW);
      y.push_back(t.amplitude_sum);
      e.push_back(t.amplitude_sigma);
    }
  if (x.size() >= 3) out.saturation = fit_saturation(x, y, e);
  return out;
}

}  // namespace nvcav
