#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "nvcav/analysis/fits.hpp"
#include "nvcav/dynamics/calibration.hpp"
#include "nvcav/dynamics/experiments.hpp"
#include "oracles/rate_equations.hpp"

using namespace nvcav;

namespace {

/// Window fraction with tags rounded to 0.1 ns, written out directly.
double tagged_window(double tau) { return std::exp(-1.95 / tau) - std::exp(-28.95 / tau); }

EngineModel quiet_model() {
  EngineModel m;
  m.background.dark_rate_hz = 0;
  m.background.leakage_hz_per_nW = 0;
  return m;
}

/// Ideal two-level emitter: every decay returns to g0 through the cavity mode.
EngineModel two_level() {
  EngineModel m = quiet_model();
  m.rates.extra_rate = 0;
  m.rates.spin_flip_prob = 0;
  m.rates.zpl_fraction = 1.0;
  m.rates.repump_success = 1;
  m.rates.repump_g0 = 1;
  m.rates.init_steady_g0 = 1;
  m.rates.pump_return_prob = 0;
  return m;
}

std::string to_csv(const ClickStream& s) {
  std::ostringstream os;
  write_csv(os, s);
  return os.str();
}

}  // namespace

// Basic model pieces ---------------------------------------------------------

TEST(EmissionWindow, QuarterOfEmissionFallsOutside) { EXPECT_NEAR(emission_window_fraction(7.8, 3, 30, 1), 0.75, 0.01); }

TEST(EmissionWindow, OpenWindowCapturesEverything) {
  EXPECT_DOUBLE_EQ(emission_window_fraction(7.8, 1, std::numeric_limits<double>::infinity(), 1), 1.0);
}

TEST(EmissionWindow, EmptyWindowIsZero) { EXPECT_DOUBLE_EQ(emission_window_fraction(7.8, 3, 3, 1), 0.0); }

TEST(EmissionWindow, InvertedWindowThrows) {
  EXPECT_THROW(emission_window_fraction(7.8, 30, 3, 1), InvalidParameter);
  EXPECT_THROW(emission_window_fraction(7.8, 0.5, 3, 1), InvalidParameter);
  EXPECT_THROW(emission_window_fraction(0, 3, 30, 1), InvalidParameter);
}

TEST(RateModel, BranchingSumsToOne) {
  const RateModel r;
  EXPECT_NEAR(r.zpl_fraction + r.singlet_prob() + r.spin_flip_prob + r.rest_to_g0(), 1.0, 1e-15);
  EXPECT_GE(r.rest_to_g0(), 0.0);
}

TEST(RateModel, RejectsInconsistentValues) {
  RateModel r;
  r.zpl_fraction = 0.9;
  EXPECT_THROW(r.validate(), InvalidParameter);
  r = RateModel{};
  r.lifetime_ns = std::numeric_limits<double>::infinity();
  EXPECT_THROW(r.validate(), InvalidParameter);
  r = RateModel{};
  r.singlet_lifetime_ns = std::numeric_limits<double>::infinity();
  EXPECT_THROW(r.validate(), InvalidParameter);
  BackgroundModel b;
  b.dark_rate_hz = -1;
  EXPECT_THROW(b.validate(), InvalidParameter);
}

TEST(LevelSet, ValidatesNormalization) {
  LevelSet s;
  s[Level::G0] = 0.25;
  s[Level::Singlet] = 0.75;
  EXPECT_NO_THROW(s.validate());
  s[Level::NV0] = 1e-9;
  EXPECT_THROW(s.validate(), InvalidParameter);
}

TEST(CavityCoupling, ModeBranchingPerSetting) {
  const CavityCoupling c;
  EXPECT_NEAR(c.zpl_fraction(CavitySetting::LF, 0.03), 0.2190 / 1.2190, 1e-4);
  EXPECT_NEAR(c.zpl_fraction(CavitySetting::HF, 0.03), 0.05263, 2e-4);
  // -4 GHz detuning over a 1.69 GHz wide mode: F = 7.3 / (1 + (8 / 1.69)^2)
  const double f = 7.3 / (1 + (8 / 1.69) * (8 / 1.69));
  EXPECT_NEAR(c.zpl_fraction(CavitySetting::OffResonance, 0.03), 0.03 * f / (1 + 0.03 * f), 1e-12);
}

TEST(Sequence, ValidationRejectsBadPrimitives) {
  PulseSequence s;
  EXPECT_THROW(s.validate(), SequenceError);
  s.add(ShortExcite{35.0, 0.0});
  EXPECT_THROW(s.validate(), SequenceError);
  PulseSequence w;
  w.add(Wait{-1.0});
  EXPECT_THROW(w.validate(), SequenceError);
  PulseSequence r;
  r.add(ReadoutBlock{0});
  EXPECT_THROW(r.validate(), SequenceError);
}

TEST(Sequence, DurationAndPulseCount) {
  PulseSequence s = prep_sequence(100.0);
  s.add(ReadoutBlock{30}).add(CWExcite{2.0, 1.0});
  EXPECT_DOUBLE_EQ(s.duration_ns(), 55e3 + 100e3 + 30 * 126.0 + 2e3);
  EXPECT_EQ(s.pulse_count(), 31u);
}

// Engine ---------------------------------------------------------------------

TEST(Engine, RejectsZeroRepetitionsAndLongSequences) {
  const EngineModel m;
  EXPECT_THROW(simulate_sequence(lifetime_sequence(), m, 1, 0), InvalidParameter);
  PulseSequence s;
  s.add(Wait{3e5});
  EXPECT_THROW(simulate_sequence(s, m, 1, 1), SequenceError);
  SimOptions o;
  o.max_duration_us = 4e5;
  EXPECT_NO_THROW(simulate_sequence(s, m, 1, 1, o));
}

TEST(Engine, ZeroDecayRateIsAnError) {
  EngineModel m;
  m.rates.lifetime_ns = std::numeric_limits<double>::infinity();
  EXPECT_THROW(simulate_sequence(lifetime_sequence(), m, 1, 1), InvalidParameter);
}

TEST(Engine, TwoLevelClickProbabilityMatchesClosedForm) {
  const EngineModel m = two_level();
  const std::uint64_t n = 1000000;
  PulseSequence s;
  s.add(ShortExcite{20.0});
  const auto r = simulate_sequence(s, m, 5, n);
  const double pe = 1 - std::exp(-20.0 / m.rates.p_pi_uW);
  const double p = pe * 0.39 * 0.39 * 0.70 * tagged_window(m.rates.lifetime_ns);
  const double got = static_cast<double>(reps_with_click(r.stream, 0, 1)) / n;
  EXPECT_NEAR(got, p, 3 * std::sqrt(p * (1 - p) / n));
}

TEST(Engine, ZeroEfficiencyChainLeavesOnlyBackground) {
  EngineModel m;
  m.chain = EfficiencyChain{0, 0, 0, 0, 0};
  const unsigned pulses = 30;
  const std::uint64_t n = 200000;
  const auto r = simulate_sequence(hbt_sequence(pulses), m, 9, n);
  EXPECT_EQ(r.mode_photons > 0, true);
  const double energy = 35e3 * 1.94 * 1.0644670194312262;
  const double leak = m.background.leakage_rate(1.0) * energy;
  const double per_pulse = m.background.dark_rate() * 126.0 + leak * (1 + m.background.echo_ratio);
  const double expected = per_pulse * pulses * n;
  EXPECT_NEAR(static_cast<double>(r.stream.clicks.size()), expected, 3 * std::sqrt(expected));
  // No click anywhere near the emission window beyond the flat dark rate.
  const auto in = clicks_per_pulse(r.stream, pulses);
  const double in_total = std::accumulate(in.begin(), in.end(), 0.0);
  const double dark_in = m.background.dark_rate() * 27.0 * pulses * n;
  EXPECT_NEAR(in_total, dark_in, 4 * std::sqrt(dark_in) + 10);
}

TEST(Engine, DeterministicAndWorkerInvariant) {
  const EngineModel m;
  SimOptions one, many;
  one.workers = 1;
  many.workers = 4;
  const auto a = simulate_sequence(hbt_sequence(), m, 77, 20000, one);
  const auto b = simulate_sequence(hbt_sequence(), m, 77, 20000, many);
  const auto c = simulate_sequence(hbt_sequence(), m, 77, 20000, many);
  EXPECT_EQ(to_csv(a.stream), to_csv(b.stream));
  EXPECT_EQ(to_csv(b.stream), to_csv(c.stream));
  EXPECT_EQ(a.final_levels, b.final_levels);
  const auto d = simulate_sequence(hbt_sequence(), m, 78, 20000, one);
  EXPECT_NE(to_csv(a.stream), to_csv(d.stream));
}

TEST(Engine, RepetitionDependsOnlyOnItsIndex) {
  const EngineModel m;
  const auto big = simulate_sequence(hbt_sequence(), m, 3, 9000);
  const auto small = simulate_sequence(hbt_sequence(), m, 3, 5000);
  std::vector<ClickRecord> head;
  for (const auto& c : big.stream.clicks)
    if (c.rep < 5000) head.push_back(c);
  EXPECT_EQ(head, small.stream.clicks);
}

TEST(Engine, ClicksAreSortedAndInsideTheGate) {
  const auto r = simulate_sequence(lifetime_sequence(), EngineModel{}, 4, 5000);
  EXPECT_TRUE(std::is_sorted(r.stream.clicks.begin(), r.stream.clicks.end()));
  for (const auto& c : r.stream.clicks) {
    ASSERT_GE(c.t_ns(), kGateLo - 0.05);
    ASSERT_LT(c.t_ns(), kGateHi + 0.05);
    ASSERT_LT(c.pulse, 100u);
  }
}

TEST(Engine, CwPopulationsMatchDenseMasterEquation) {
  EngineModel m;
  m.rates.ey_inhomogeneous_mhz = 0;
  const std::uint64_t n = 4000000;
  struct Case {
    double laser, power, us;
  };
  for (const Case c : {Case{m.rates.freq_ey, 20.0, 2.0}, Case{m.rates.freq_e1, 5.0, 3.0}}) {
    PulseSequence s;
    s.add(DetectorGate{false}).add(Repump{}).add(CWExcite{c.us, c.power, c.laser});
    const auto r = simulate_sequence(s, m, 2024, n);
    const auto ref = oracle::propagate(oracle::generator(m.rates, c.laser, c.power), oracle::after_repump(m.rates), 1e3 * c.us);
    const Level order[] = {Level::G0, Level::Gm1, Level::Gp1, Level::Ey, Level::Ex, Level::Singlet, Level::NV0};
    double linf = 0;
    for (int i = 0; i < 7; ++i) linf = std::max(linf, std::abs(r.final_fraction(order[i]) - ref[i]));
    EXPECT_LT(linf, 1e-3) << "laser " << c.laser;
    EXPECT_NEAR(ref.sum(), 1.0, 1e-12);
  }
}

// Exact chain ------------------------------------------------------------------

TEST(Chain, ColumnsConserveProbability) {
  const PulseChain ch(EngineModel{});
  const auto t = ch.transfer();
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(t.col(j).sum(), 1.0, 1e-12);
  auto x = ch.after_repump();
  for (int i = 0; i < 700; ++i) x = ch.step(x);
  EXPECT_NEAR(x.sum(), 1.0, 1e-12);
  EXPECT_GE(x.minCoeff(), 0.0);
}

TEST(Chain, PumpingCurveMatchesPulsedMasterEquation) {
  const EngineModel m;
  const PulseChain ch(m);
  const oracle::PulsedTrain train(m.rates, 35.0);
  const double per_exc = m.rates.zpl_fraction * m.chain.detection() * tagged_window(m.rates.lifetime_ns);
  auto x = ch.init(ch.after_repump(), 120.0, 0.2);
  oracle::Vec7 p = oracle::Vec7::Zero();
  p[oracle::G0] = x[0];
  p[oracle::GM] = p[oracle::GP] = x[1] / 2;
  p[oracle::NV0] = x[3];
  double worst = 0;
  for (int i = 0; i < 600; ++i) {
    double excited = 0;
    p = train.period(p, &excited);
    worst = std::max(worst, std::abs(ch.signal_prob(x) - excited * per_exc));
    x = ch.step(x);
  }
  EXPECT_LT(worst, 1e-9);
  // The floor is background plus the g0 share fed back by the +-1 return and singlet.
  const auto stat = ch.stationary(ch.after_repump());
  EXPECT_NEAR(ch.click_prob(stat), 1 - (1 - ch.background()) * (1 - stat[0] * ch.excitation() * per_exc), 1e-15);
  EXPECT_NEAR(ch.click_prob(x), ch.click_prob(stat), 1e-9);
}

TEST(Chain, SingletCarryOverIsTheConvolution) {
  const EngineModel m;
  const PulseChain ch(m);
  // P(T_excited + T_singlet > 125 ns) by direct quadrature.
  const double a = m.rates.lifetime_ns, b = m.rates.singlet_lifetime_ns;
  double s = 0;
  const int n = 200000;
  const double h = 125.0 / n;
  for (int i = 0; i < n; ++i) {
    const double t = (i + 0.5) * h;
    s += std::exp(-t / a) / a * std::exp(-(125.0 - t) / b) * h;
  }
  s += std::exp(-125.0 / a);
  EXPECT_NEAR(ch.singlet_carry(), s, 1e-7);
}

// Calibration --------------------------------------------------------------------

TEST(Calibration, DefaultsReproduceTargets) {
  const auto o = calibration_observables(EngineModel{});
  EXPECT_NEAR(o.first_pulse_click, 0.005, 1e-5);
  EXPECT_NEAR(o.F0, 0.103, 1e-4);
  EXPECT_NEAR(o.floor_fidelity, 0.9815, 1e-4);
  EXPECT_NEAR(o.heralded_ratio, 0.935, 1e-4);
  EXPECT_NEAR(o.prep_probability, 0.728, 1e-4);
  EXPECT_NEAR(o.F1, 0.984, 0.01);
}

TEST(Calibration, RecoversFromPerturbedStart) {
  EngineModel m;
  m.rates.p_pi_uW = 70;
  m.rates.spin_flip_prob = 0.04;
  m.rates.init_steady_g0 = 0.9;
  m.rates.repump_success = 0.8;
  m.background.dark_rate_hz = 5000;
  const auto r = calibrate(m);
  EXPECT_NEAR(r.predicted.F0, 0.103, 1e-5);
  EXPECT_NEAR(r.predicted.floor_fidelity, 0.9815, 1e-6);
  EXPECT_NEAR(r.model.rates.p_pi_uW, EngineModel{}.rates.p_pi_uW, 0.01);
  EXPECT_NEAR(r.model.rates.spin_flip_prob, EngineModel{}.rates.spin_flip_prob, 1e-5);
  EXPECT_NEAR(r.model.rates.repump_success, EngineModel{}.rates.repump_success, 1e-5);
}

TEST(Calibration, UnreachableTargetsThrow) {
  CalibrationTargets t;
  t.F0 = 0.9;
  EXPECT_THROW(calibrate(EngineModel{}, t), FitFailure);
}

// Experiments --------------------------------------------------------------------

TEST(Lifetime, LowFrequencyModeFit) {
  RunOptions r;
  r.repetitions = 100000;
  r.seed = 31;
  const auto run = lifetime_experiment(EngineModel{}, r);
  EXPECT_NEAR(run.fit.tau, 7.8, 3 * run.fit.sigma);
}

TEST(Lifetime, HighStatisticsRecoverConfiguredLifetime) {
  EngineModel m;
  m.rates.zpl_fraction = 0.9;  // bright emitter so that the fit error is small
  m.rates.spin_flip_prob = 0.0;
  m.rates.extra_rate = 0.0;
  m.rates.pump_return_prob = 0;
  RunOptions r;
  r.repetitions = 200000;
  LifetimeOptions o;
  o.background = Background::None;
  const auto run = lifetime_experiment(m, r, o);
  EXPECT_NEAR(run.fit.tau, 7.8, 3 * run.fit.sigma);
  EXPECT_LT(run.fit.sigma, 0.2);
}

TEST(Saturation, CalibratedPointGivesHalfPercent) {
  RunOptions r;
  r.repetitions = 1000000;
  const auto pts = saturation_experiment(EngineModel{}, {35.0}, r);
  EXPECT_NEAR(pts[0].click.p, 0.005, 3 * pts[0].click.sigma);
  EXPECT_NEAR(pts[0].expected, 0.005, 1e-6);
}

TEST(Saturation, ZeroPowerIsBackgroundOnly) {
  const EngineModel m;
  RunOptions r;
  r.repetitions = 200000;
  const auto pts = saturation_experiment(m, {0.0}, r);
  const double b = -std::expm1(-m.background.dark_rate() * 27.0);
  EXPECT_NEAR(pts[0].expected, b, 1e-12);
  EXPECT_NEAR(pts[0].click.p, b, 4 * std::sqrt(b / r.repetitions) + 1e-6);
}

TEST(Saturation, SaturatesAtTheClickBudget) {
  EngineModel m;
  m.rates.repump_success = 1;
  m.rates.repump_g0 = 1;
  m.rates.init_steady_g0 = 1;
  m.rates.zpl_fraction = 0.18;
  m.background.dark_rate_hz = 0;
  m.background.leakage_hz_per_nW = 0;
  EfficiencyChain c;
  c.window_fraction = tagged_window(m.rates.lifetime_ns);
  const double p = saturation_expectation(m, {1e5})[0];
  EXPECT_NEAR(p, click_budget(c).total, 1e-12);
  EXPECT_NEAR(p, 0.0143, 0.0015);
}

TEST(Saturation, LinearRegimeIsProportionalToPower) {
  std::vector<double> p;
  for (int i = 1; i <= 10; ++i) p.push_back(0.5 * i);
  EXPECT_GT(linear_r2(p, saturation_expectation(EngineModel{}, p)), 0.99);
}

TEST(Hbt, IdealEmitterHasNoZeroDelayCoincidence) {
  EngineModel m = quiet_model();
  m.background.echo_ratio = 0;
  RunOptions r;
  r.repetitions = 100000;
  const auto h = hbt_experiment(m, r);
  EXPECT_EQ(h.histogram.at(0), 0.0);
  EXPECT_GT(h.histogram.at(1), 0.0);
  EXPECT_EQ(h.histogram.at(30), 0.0);
}

TEST(Hbt, SimulationAgreesWithChainExpectation) {
  RunOptions r;
  r.repetitions = 300000;
  const EngineModel m;
  const auto h = hbt_experiment(m, r);
  const auto e = expected_hbt_histogram(m);
  for (int dn : {-2, -1, 1, 2, 5}) {
    const double ex = e.at(dn) * r.repetitions;
    EXPECT_NEAR(h.histogram.at(dn), ex, 4 * std::sqrt(ex)) << dn;
  }
}

TEST(Hbt, TwoEqualEmittersGiveOneHalf) {
  // Brute-force enumeration: each emitter clicks with probability p, each click
  // goes to A or B with probability 1/2.
  const double p = 0.3;
  double same = 0, cross = 0;
  for (int c1 = 0; c1 < 2; ++c1)
    for (int c2 = 0; c2 < 2; ++c2)
      for (int d1 = 0; d1 < 2; ++d1)
        for (int d2 = 0; d2 < 2; ++d2) {
          const double w = (c1 ? p : 1 - p) * (c2 ? p : 1 - p) * 0.25;
          const int na = (c1 && d1 == 0) + (c2 && d2 == 0);
          const int nb = (c1 && d1 == 1) + (c2 && d2 == 1);
          same += w * na * nb;
          cross += w * na;
        }
  const double oracle_g2 = same / (cross * cross);
  EXPECT_NEAR(oracle_g2, 0.5, 1e-12);

  EngineModel m = two_level();
  m.chain = EfficiencyChain{1, 1, 1, 1, 1};
  const std::uint64_t reps = 20000;
  SimOptions o;
  o.split_channels = true;
  auto a = simulate_sequence(hbt_sequence(), m, 101, reps, o);
  const auto b = simulate_sequence(hbt_sequence(), m, 202, reps, o);
  a.stream.clicks.insert(a.stream.clicks.end(), b.stream.clicks.begin(), b.stream.clicks.end());
  a.stream.sort();
  const auto fit = fit_g2(hbt_coincidences(a.stream));
  EXPECT_NEAR(fit.g2_zero, 0.5, 3 * fit.g2_sigma + 0.01);
}

TEST(SpinPumping, CalibratedFloorFidelity) {
  RunOptions r;
  r.repetitions = 100000;
  const auto c = spin_pumping_experiment(EngineModel{}, r);
  EXPECT_NEAR(c.floor_fidelity, 0.9815, 0.003);
  double chi2 = 0;
  for (std::size_t i = 0; i < c.counts.size(); ++i)
    chi2 += (c.counts[i] - c.expected[i]) * (c.counts[i] - c.expected[i]) / std::max(c.expected[i], 1.0);
  EXPECT_LT(chi2 / c.counts.size(), 1.3);
}

TEST(SpinPumping, NoSpinFlipsMeansFlatCurve) {
  EngineModel m;
  m.rates.spin_flip_prob = 0;
  m.rates.singlet_to_g0 = 1;
  const PulseChain ch(m);
  PulseChain::Vec end_state;
  const auto e = ch.click_curve(ch.init(ch.after_repump(), 120.0, 0.2), 600, &end_state);
  // Singlet shelving settles within a few microseconds; nothing is pumped into m_s = +-1.
  EXPECT_NEAR(e.back() / e[40], 1.0, 0.01);
  EXPECT_LE(end_state[PulseChain::M], ch.init(ch.after_repump(), 120.0, 0.2)[PulseChain::M]);
  RunOptions r;
  r.repetitions = 20000;
  const auto sim = simulate_sequence(spin_pumping_sequence(600), m, 5, r.repetitions);
  const auto counts = clicks_per_pulse(sim.stream, 600);
  const double first = std::accumulate(counts.begin() + 50, counts.begin() + 150, 0.0);
  const double last = std::accumulate(counts.end() - 100, counts.end(), 0.0);
  EXPECT_NEAR(first, last, 4 * std::sqrt(first + last));
}

TEST(SpinInit, SettlingTimeConstant) {
  std::vector<double> d;
  for (int i = 0; i <= 20; ++i) d.push_back(3.0 * i);
  RunOptions r;
  r.repetitions = 10000;
  const auto c = spin_init_experiment(EngineModel{}, d, r);
  ASSERT_TRUE(c.fit.has_value());
  EXPECT_NEAR(c.fit->time_constant, 9.1, 1.0);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(c.counts[i], c.expected[i], 4 * std::sqrt(c.expected[i]) + 2);
}

TEST(SpinInit, ZeroDurationSitsAtThePumpedFloor) {
  RunOptions r;
  r.repetitions = 10000;
  const EngineModel m;
  const auto c = spin_init_experiment(m, {0.0, 100.0}, r);
  EXPECT_LT(c.counts[0], 0.1 * c.counts[1]);
  const PulseChain ch(m);
  double floor = 0;
  for (double v : ch.click_curve(ch.stationary(ch.after_repump()), 30)) floor += v;
  EXPECT_NEAR(c.expected[0] / r.repetitions, floor, 0.05 * floor);
}

TEST(SpinInit, HeraldedProtocol) {
  RunOptions r;
  r.repetitions = 1000000;
  const auto h = heralded_init_fidelity(EngineModel{}, r);
  EXPECT_NEAR(h.expected_ratio, 0.935, 1e-3);
  EXPECT_NEAR(0.103 / h.expected_first, 0.728, 1e-3);
  const double s = h.ratio * std::sqrt(std::pow(h.first.sigma / h.first.p, 2) + std::pow(h.second.sigma / h.second.p, 2));
  EXPECT_NEAR(h.ratio, h.expected_ratio, 3 * s);
  EXPECT_NEAR(h.prep_probability, 0.728, 0.06);
}

TEST(Readout, CalibrationMatchesTargets) {
  RunOptions r;
  r.repetitions = 100000;
  const auto c = readout_calibration(EngineModel{}, {1, 50, 200}, r);
  EXPECT_NEAR(c.F0.back(), 0.103, 0.01);
  EXPECT_NEAR(c.F1.back(), 0.984, 0.01);
  EXPECT_NEAR(c.F_avg.back(), 0.544, 0.01);
}

TEST(Ple, EyLinewidth) {
  std::vector<double> f;
  for (int i = -12; i <= 12; ++i) f.push_back(-23.34 + 0.01 * i);
  RunOptions r;
  r.repetitions = 20000;
  const auto p = ple_experiment(EngineModel{}, PleVariant::EyDirect, f, r);
  ASSERT_TRUE(p.gaussian.has_value());
  EXPECT_NEAR(p.gaussian->fwhm(), 45.0, 3.0 + p.gaussian->fwhm_error());
  EXPECT_NEAR(p.gaussian->center, 0.0, 5.0);
}

TEST(Ple, ZeroPowerIsFlatBackground) {
  const EngineModel m;
  RunOptions r;
  r.repetitions = 5000;
  PleSettings s;
  s.power_nW = 0;
  const auto p = ple_experiment(m, PleVariant::EyDirect, {-23.34, -23.0}, r, s);
  const double bg = m.background.dark_rate() * 200e3;
  for (const auto& pt : p.points) {
    EXPECT_NEAR(pt.raw, bg, 4 * std::sqrt(bg / r.repetitions));
    if (pt.fitted) EXPECT_LT(std::abs(pt.signal), 4 * pt.sigma + 1e-6);
  }
}

TEST(Ple, PumpProbeFindsE1AndE2) {
  const EngineModel m;
  RunOptions r;
  r.repetitions = 4000;
  const auto p = ple_experiment(m, PleVariant::E1E2PumpProbe, {-27.0, -26.0, -25.25, -24.5, -23.8}, r);
  EXPECT_GT(p.points[1].signal, 3 * p.points[0].signal);
  EXPECT_GT(p.points[3].signal, 3 * p.points[2].signal);
  EXPECT_GT(p.points[1].signal, 3 * p.points[4].signal);
}

TEST(Ple, ExDepletionDeepensWithPowerAndSaturates) {
  const EngineModel m;
  const std::vector<double> powers = {0.0, 0.005, 0.02, 0.2, 2.0, 50.0};
  // Dense reference: population left in g0 after the pump, then the exact readout chain.
  const PulseChain ch(m);
  std::vector<double> expected;
  for (double p : powers) {
    const auto x = oracle::propagate(oracle::generator(m.rates, m.rates.freq_ex, p), oracle::after_repump(m.rates), 200e3);
    PulseChain::Vec v(x[oracle::G0] + x[oracle::EY] + x[oracle::EX], x[oracle::GM] + x[oracle::GP], x[oracle::S], x[oracle::NV0]);
    double e = 0;
    for (double c : ch.click_curve(v, 30)) e += c;
    expected.push_back(e);
  }
  // At the highest power the far-detuned E1/E2 tails return a little population.
  for (std::size_t i = 1; i + 1 < expected.size(); ++i) EXPECT_LT(expected[i], expected[i - 1]) << i;
  EXPECT_LT(std::abs(expected[4] - expected[5]), 0.05 * (expected[0] - expected[5]));

  RunOptions r;
  r.repetitions = 20000;
  for (std::size_t i : {0u, 2u, 5u}) {
    PleSettings s;
    s.power_nW = powers[i];
    const auto p = ple_experiment(m, PleVariant::ExDepletion, {m.rates.freq_ex}, r, s);
    EXPECT_NEAR(p.points[0].signal, expected[i], 4 * p.points[0].sigma) << powers[i];
  }
}

TEST(Ple, UnknownVariantThrows) { EXPECT_THROW(parse_ple_variant("Ez"), InvalidParameter); }

TEST(CwSaturation, RecoversSaturationPower) {
  RunOptions r;
  r.repetitions = 60000;
  const auto c = cw_saturation_experiment(EngineModel{}, {25, 50, 100, 200, 400, 800, 1600}, r);
  ASSERT_TRUE(c.saturation.has_value());
  EXPECT_NEAR(c.saturation->p_sat, 100.0, std::max(5.0, 2 * c.saturation->sigma_p_sat));
  const auto& hi = c.traces.back();
  ASSERT_TRUE(hi.fit.has_value());
  const double t_fast = hi.fit->single_exponential ? hi.fit->T_slow : hi.fit->T_fast;
  EXPECT_GT(t_fast, 50.0);
  EXPECT_LT(t_fast, 220.0);
}

TEST(CwSaturation, NoExtraDecayGivesSingleExponential) {
  EngineModel m;
  m.rates.extra_rate = 0;
  RunOptions r;
  r.repetitions = 20000;
  const auto c = cw_saturation_experiment(m, {400}, r);
  ASSERT_TRUE(c.traces[0].fit.has_value());
  EXPECT_TRUE(c.traces[0].fit->single_exponential);
}
