#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "nvcav/analysis/fits.hpp"
#include "nvcav/analysis/readout.hpp"
#include "nvcav/analysis/stats.hpp"
#include "nvcav/rng.hpp"

using namespace nvcav;

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
  return v;
}

Eigen::VectorXd vec(std::initializer_list<double> v) { return detail::vec(v); }

}  // namespace

// NLLS kernel ---------------------------------------------------------------

TEST(Nlls, ExactDataRecoversTruth) {
  const auto x = linspace(0, 50, 60);
  ModelFn m = [](double t, const Eigen::VectorXd& p) { return p[0] * std::exp(-t / p[1]) + p[2]; };
  const auto truth = vec({120.0, 7.8, 3.0});
  std::vector<double> y;
  for (double t : x) y.push_back(m(t, truth));
  const auto f = nlls_fit(m, x, y, {}, vec({80.0, 5.0, 1.0}));
  ASSERT_TRUE(f.converged);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(f.params[k] / truth[k], 1.0, 1e-8);
}

TEST(Nlls, LinearModelConvergesInOneStep) {
  const auto x = linspace(-2, 3, 25);
  ModelFn m = [](double t, const Eigen::VectorXd& p) { return p[0] + p[1] * t + p[2] * t * t; };
  std::vector<double> y;
  for (double t : x) y.push_back(1.5 - 0.3 * t + 0.7 * t * t + 0.01 * std::sin(7 * t));
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a.row(i) << 1, x[i], x[i] * x[i];
    b[i] = y[i];
  }
  const Eigen::VectorXd exact = a.colPivHouseholderQr().solve(b);
  ResidualFn res = [&](const Eigen::VectorXd& p) { return Eigen::VectorXd(b - a * p); };
  JacobianFn jac = [&](const Eigen::VectorXd&) { return Eigen::MatrixXd(-a); };
  NllsOptions one;
  one.max_iterations = 1;
  for (auto start : {vec({0, 0, 0}), vec({100, -50, 20}), vec({-1e3, 1e3, 1e2})}) {
    const auto f = nlls_solve(res, start, {}, one, jac);
    EXPECT_EQ(f.accepted_steps, 1);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(f.params[k], exact[k], 1e-12);
    // Finite-difference Jacobian: same single step up to differencing error.
    const auto g = nlls_fit(m, x, y, {}, start, {}, one);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(g.params[k], exact[k], 1e-7);
  }
}

TEST(Nlls, ReportsNonConvergence) {
  const auto x = linspace(0, 1, 10);
  ModelFn m = [](double t, const Eigen::VectorXd& p) { return p[0] * p[1] * t; };  // only the product is identifiable
  std::vector<double> y;
  for (double t : x) y.push_back(2 * t);
  const auto f = nlls_fit(m, x, y, {}, vec({1.0, 1.0}));
  EXPECT_FALSE(f.converged);
  EXPECT_EQ(f.std_errors.size(), 0);
  EXPECT_FALSE(f.message.empty());
}

TEST(Nlls, RejectsTooFewPoints) {
  ModelFn m = [](double t, const Eigen::VectorXd& p) { return p[0] + p[1] * t + p[2] * t * t; };
  EXPECT_THROW(nlls_fit(m, {0.0, 1.0}, {1.0, 2.0}, {}, vec({0, 0, 0})), InvalidParameter);
}

TEST(Nlls, CovarianceAgreesWithBootstrap) {
  const auto x = linspace(0, 40, 41);
  ModelFn m = [](double t, const Eigen::VectorXd& p) { return p[0] * std::exp(-t / p[1]) + p[2]; };
  const auto truth = vec({400.0, 8.0, 20.0});
  auto draw = [&](Rng& rng) {
    std::vector<double> y;
    for (double t : x) y.push_back(static_cast<double>(rng.poisson(m(t, truth))));
    return y;
  };
  Rng rng0(11);
  const auto y0 = draw(rng0);
  const auto ref = nlls_fit(m, x, y0, poisson_sigma(y0), truth);
  ASSERT_TRUE(ref.converged);
  std::vector<std::vector<double>> samples(3);
  for (int b = 0; b < 500; ++b) {
    Rng rng(12, static_cast<std::uint64_t>(b));
    const auto y = draw(rng);
    const auto f = nlls_fit(m, x, y, poisson_sigma(y), truth);
    ASSERT_TRUE(f.converged);
    for (int k = 0; k < 3; ++k) samples[k].push_back(f.params[k]);
  }
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(ref.std_errors[k] / stddev(samples[k]), 1.0, 0.15) << ref.names[k];
}

TEST(Nlls, ResidualNormSelfConsistent) {
  const auto x = linspace(0, 10, 30);
  ModelFn m = [](double t, const Eigen::VectorXd& p) { return p[0] * std::cos(p[1] * t); };
  Rng rng(3);
  std::vector<double> y, s(x.size(), 0.05);
  for (double t : x) y.push_back(std::cos(1.3 * t) + 0.05 * rng.normal());
  const auto f = nlls_fit(m, x, y, s, vec({1.0, 1.25}));
  ASSERT_TRUE(f.converged);
  EXPECT_DOUBLE_EQ(residual_norm(m, x, y, s, f.params), f.residual_norm);
}

// Histogram -----------------------------------------------------------------

TEST(Histogram, BinningAndValidation) {
  auto h = make_histogram(-20, 106, 0.5);
  EXPECT_EQ(h.size(), 252u);
  h.fill(-20.0);
  h.fill(105.99);
  h.fill(106.0);
  h.fill(0.25);
  EXPECT_EQ(h.counts.front(), 1.0);
  EXPECT_EQ(h.counts.back(), 1.0);
  EXPECT_EQ(h.counts[static_cast<std::size_t>(h.find(0.25))], 1.0);
  EXPECT_NO_THROW(h.validate());
  h.edges[3] = h.edges[2];
  EXPECT_THROW(h.validate(), InvalidParameter);
}

// Lifetime --------------------------------------------------------------------

namespace {

Histogram decay_histogram(double a, double tau, double a2 = 0, double tau2 = 1) {
  auto h = make_histogram(-20, 106, 0.5);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double t = h.center(i);
    h.counts[i] = t < 0 ? 0.0 : a * std::exp(-t / tau) + a2 * std::exp(-t / tau2);
  }
  return h;
}

}  // namespace

TEST(Lifetime, PureExponentialIsWindowIndependent) {
  const auto h = decay_histogram(1e4, 7.8);
  const auto scan = lifetime_window_scan(h, {}, LifetimeOptions{}, {12, 18, 25, 40, 60});
  for (const auto& p : scan) {
    ASSERT_TRUE(p.ok);
    EXPECT_NEAR(p.tau, 7.8, 1e-6) << p.window_hi;
  }
}

TEST(Lifetime, SecondaryEmitterDriftsUpwardWithWindow) {
  const auto h = decay_histogram(1e4, 7.8, 150, 40.0);
  const auto scan = lifetime_window_scan(h, {}, LifetimeOptions{}, {14, 18, 25, 35, 50, 70});
  for (std::size_t i = 1; i < scan.size(); ++i) {
    ASSERT_TRUE(scan[i].ok);
    EXPECT_GT(scan[i].tau, scan[i - 1].tau);
  }
  EXPECT_LT(scan.front().tau, 8.3);
  EXPECT_GT(scan.back().tau, 8.5);
}

namespace {

ClickStream synthetic_lifetime_stream(double tau, double p_signal, double p_bg, std::uint64_t reps, std::uint64_t seed) {
  ClickStream s;
  s.header.pulses_per_rep = 100;
  s.header.repetitions = reps;
  Rng rng(seed);
  for (std::uint64_t r = 0; r < reps; ++r)
    for (std::uint32_t p = 0; p < 100; ++p) {
      const double sig = p_signal * std::exp(-0.05 * p);  // pumped away over the train
      if (rng.bernoulli(sig)) s.clicks.push_back({r, p, Channel::ZPL_A, to_tag(1.0 + rng.exponential(1.0 / tau))});
      if (rng.bernoulli(p_bg)) s.clicks.push_back({r, p, Channel::ZPL_A, to_tag(-20 + 126 * rng.uniform())});
    }
  return s;
}

}  // namespace

TEST(Lifetime, FirstMinusLastRemovesFlatBackground) {
  const auto s = synthetic_lifetime_stream(7.8, 0.02, 0.01, 20000, 5);
  const auto f = fit_lifetime(s);
  EXPECT_NEAR(f.tau, 7.8, 3 * f.sigma);
  EXPECT_GT(f.sigma, 0);
  EXPECT_DOUBLE_EQ(f.fit.window.first, 5.0);
  EXPECT_DOUBLE_EQ(f.fit.window.second, 18.0);
}

TEST(Lifetime, BackgroundOnlyFails) {
  const auto s = synthetic_lifetime_stream(7.8, 0.0, 0.01, 2000, 6);
  LifetimeOptions o;
  // Make the subtraction negative everywhere by giving the late pulses extra background.
  auto t = s;
  for (const auto& c : s.clicks)
    if (c.pulse >= 95) t.clicks.push_back(c);
  EXPECT_THROW(fit_lifetime(t, o), FitFailure);
}

TEST(Lifetime, TooFewPulses) {
  ClickStream s;
  s.header.pulses_per_rep = 8;
  EXPECT_THROW(fit_lifetime(s), InvalidParameter);
}

// g2 ------------------------------------------------------------------------

namespace {

G2Histogram model_g2(double a, double n_flip, double g0, int L = 30) {
  auto h = make_g2_histogram(L);
  for (int dn = -(L - 1); dn < L; ++dn)
    h.at(dn) = dn == 0 ? g0 * a : a * (1.0 - std::abs(dn) / double(L)) * std::exp(-std::abs(dn) / n_flip);
  return h;
}

}  // namespace

TEST(G2, EnvelopeVanishesAtTrainLength) {
  G2Fit f;
  f.amplitude = 100;
  f.flip_rate = 0.1;
  f.train_length = 30;
  EXPECT_EQ(f.envelope(30), 0.0);
  EXPECT_EQ(f.envelope(-30), 0.0);
  EXPECT_GT(f.envelope(29), 0.0);
}

TEST(G2, RecoversModelParameters) {
  const auto f = fit_g2(model_g2(500, 12.0, 0.034));
  EXPECT_NEAR(f.amplitude, 500, 1e-6);
  EXPECT_NEAR(f.n_flip(), 12.0, 1e-6);
  EXPECT_NEAR(f.g2_zero, 0.034, 1e-9);
  EXPECT_GT(f.g2_sigma, 0);
}

TEST(G2, ZeroBinDoesNotLeakIntoEnvelope) {
  auto h = model_g2(500, 12.0, 0.034);
  const auto a = fit_g2(h);
  h.at(0) = 1e6;
  const auto b = fit_g2(h);
  EXPECT_DOUBLE_EQ(a.amplitude, b.amplitude);
  // Envelope at 0 continues the |dn| = 1, 2 trend.
  const double e1 = a.envelope(1), e2 = a.envelope(2);
  EXPECT_NEAR(a.envelope(0), e1 * e1 / e2, 0.02 * a.envelope(0));
}

TEST(G2, PoissonSourceGivesUnity) {
  ClickStream s;
  const int L = 30;
  s.header.pulses_per_rep = L;
  s.header.repetitions = 40000;
  Rng rng(99);
  for (std::uint64_t r = 0; r < s.header.repetitions; ++r)
    for (int p = 0; p < L; ++p)
      for (auto ch : {Channel::ZPL_A, Channel::ZPL_B})
        if (rng.bernoulli(0.02)) s.clicks.push_back({r, static_cast<std::uint32_t>(p), ch, to_tag(10.0)});
  const auto f = fit_g2(hbt_coincidences(s, L));
  EXPECT_NEAR(f.g2_zero, 1.0, 3 * f.g2_sigma);
  EXPECT_LT(f.flip_rate, 0.01);
}

TEST(G2, CoincidenceWindowAndChannels) {
  ClickStream s;
  s.header.repetitions = 1;
  s.clicks = {{0, 0, Channel::ZPL_A, to_tag(5)}, {0, 0, Channel::ZPL_B, to_tag(6)}, {0, 3, Channel::ZPL_B, to_tag(10)},
              {0, 4, Channel::ZPL_A, to_tag(40)}, {0, 5, Channel::ZPL_A, to_tag(2)}};
  const auto h = hbt_coincidences(s, 30);
  EXPECT_EQ(h.at(0), 1.0);
  EXPECT_EQ(h.at(3), 1.0);
  double total = 0;
  for (double c : h.counts) total += c;
  EXPECT_EQ(total, 2.0);
}

TEST(G2, NonPositiveAmplitudeFails) {
  auto h = make_g2_histogram(30);
  h.at(0) = 5;
  EXPECT_THROW(fit_g2(h), FitFailure);
}

// Exponential traces ----------------------------------------------------------

TEST(DoubleExp, RecoversBothTimescales) {
  const auto t = linspace(0, 10000, 400);
  std::vector<double> y, s;
  for (double x : t) {
    y.push_back(300 * std::exp(-x / 110) + 80 * std::exp(-x / 2500) + 40);
    s.push_back(std::sqrt(y.back()));
  }
  const auto f = fit_double_exp_offset(t, y, s);
  EXPECT_FALSE(f.single_exponential);
  EXPECT_NEAR(f.T_fast, 110, 1e-4);
  EXPECT_NEAR(f.T_slow, 2500, 1e-2);
  EXPECT_NEAR(f.offset, 40, 1e-4);
}

TEST(DoubleExp, VanishingFastComponentReducesToSingle) {
  const auto t = linspace(0, 10000, 200);
  std::vector<double> y;
  for (double x : t) y.push_back(80 * std::exp(-x / 2500) + 40);
  const auto f = fit_double_exp_offset(t, y);
  EXPECT_TRUE(f.single_exponential);
  EXPECT_NEAR(f.T_slow, 2500, 1e-3);
}

TEST(DoubleExp, DegenerateTimescalesFail) {
  const auto t = linspace(0, 5000, 200);
  std::vector<double> y;
  for (double x : t) y.push_back(100 * std::exp(-x / 500) + 100 * std::exp(-x / 510) + 10);
  EXPECT_THROW(fit_double_exp_offset(t, y), FitFailure);
}

TEST(DoubleExp, TooShortTrace) { EXPECT_THROW(fit_double_exp_offset({0, 1, 2, 3, 4}, {5, 4, 3, 2, 1}), InvalidParameter); }

TEST(Saturation, RecoversSaturationPower) {
  Rng rng(17);
  std::vector<double> P = {2, 5, 10, 20, 35, 50, 80, 120, 200}, y, s;
  for (double p : P) {
    const double m = 0.02 * p / (p + 2 * 55.0);
    s.push_back(0.02 * m);
    y.push_back(m + s.back() * rng.normal());
  }
  const auto f = fit_saturation(P, y, s);
  EXPECT_NEAR(f.p_sat / 55.0, 1.0, 0.02);
}

TEST(Gaussian, RecoversLine) {
  const auto x = linspace(-300, 300, 61);
  std::vector<double> y;
  const double sig = 45.0 / 2.3548200450309493;
  for (double v : x) y.push_back(900 * std::exp(-0.5 * std::pow((v - 12) / sig, 2)) + 20);
  const auto f = fit_gaussian(x, y);
  EXPECT_NEAR(f.fwhm(), 45.0, 1e-6);
  EXPECT_NEAR(f.center, 12.0, 1e-6);
}

// Ramsey ----------------------------------------------------------------------

namespace {

struct RamseyData {
  std::vector<double> t, y, s;
};

RamseyData nitrogen_data(const Eigen::VectorXd& truth, double noise, std::uint64_t seed) {
  RamseyData d;
  d.t = linspace(0, 600, 241);
  Rng rng(seed);
  for (double t : d.t) {
    d.y.push_back(ramsey_nitrogen(t, 50.0, truth) + noise * rng.normal());
    d.s.push_back(noise);
  }
  return d;
}

const Eigen::VectorXd kNitrogenTruth = detail::vec({0.5, 170.0, 1.0, 2.68, 0.12, 0.15, 0.13, 0.2});

}  // namespace

TEST(Ramsey, NitrogenTripletRecovered) {
  const auto d = nitrogen_data(kNitrogenTruth, 0.02, 1);
  RamseyOptions o;
  o.beat_guess_mhz = 2.5;
  o.t2_guess_ns = 150;
  const auto f = fit_ramsey(d.t, d.y, d.s, o);
  ASSERT_TRUE(f.fit.converged);
  EXPECT_TRUE(f.beat_identifiable);
  for (Eigen::Index k = 0; k < kNitrogenTruth.size(); ++k)
    EXPECT_LT(std::abs(f.fit.params[k] - kNitrogenTruth[k]), 2.0 * f.fit.std_errors[k]) << f.fit.names[k];
  const auto exact = nitrogen_data(kNitrogenTruth, 0.0, 1);
  auto e = fit_ramsey(exact.t, exact.y, std::vector<double>(exact.t.size(), 0.02), o);
  ASSERT_TRUE(e.fit.converged);
  for (Eigen::Index k = 0; k < kNitrogenTruth.size(); ++k)
    EXPECT_LT(std::abs(e.fit.params[k] - kNitrogenTruth[k]), 1e-3 * e.fit.std_errors[k]) << e.fit.names[k];
}

TEST(Ramsey, UnbiasedOverNoiseSeeds) {
  RamseyOptions o;
  o.beat_guess_mhz = 2.6;
  std::vector<std::vector<double>> z(3);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto d = nitrogen_data(kNitrogenTruth, 0.02, 1000 + seed);
    const auto f = fit_ramsey(d.t, d.y, d.s, o);
    ASSERT_TRUE(f.fit.converged);
    z[0].push_back((f.t2 - 170.0) / f.t2_sigma);
    z[1].push_back((f.n - 1.0) / f.n_sigma);
    z[2].push_back((f.beat_mhz - 2.68) / f.beat_sigma);
  }
  for (const auto& v : z) EXPECT_GT(ks_normal_pvalue(v), 0.01);
}

TEST(Ramsey, SingleCosineFlagsBeat) {
  auto truth = kNitrogenTruth;
  truth[4] = truth[6] = 0;
  const auto d = nitrogen_data(truth, 0.0, 1);
  const auto f = fit_ramsey(d.t, d.y, std::vector<double>(d.t.size(), 0.02), {});
  EXPECT_FALSE(f.beat_identifiable);
}

TEST(Ramsey, CarbonPairRecovered) {
  const auto truth = detail::vec({0.5, 0.2, 3700.0, 1.1, 0.218, 0.1});
  RamseyData d;
  d.t = linspace(0, 12000, 241);
  Rng rng(4);
  for (double t : d.t) {
    d.y.push_back(ramsey_carbon(t, 2.0, truth) + 0.01 * rng.normal());
    d.s.push_back(0.01);
  }
  RamseyOptions o;
  o.model = RamseyModel::CarbonPair;
  o.detuning_mhz = 2.0;
  o.beat_guess_mhz = 0.2;
  o.t2_guess_ns = 3000;
  const auto f = fit_ramsey(d.t, d.y, d.s, o);
  ASSERT_TRUE(f.fit.converged);
  EXPECT_LT(std::abs(f.t2 - 3700) , 2 * f.t2_sigma);
  EXPECT_LT(std::abs(f.beat_mhz - 0.218), 2 * f.beat_sigma);
  EXPECT_LT(std::abs(f.n - 1.1), 2 * f.n_sigma);
}

TEST(Ramsey, NyquistViolationRejected) {
  const auto t = linspace(0, 600, 40);  // 15.4 ns step vs 52.7 MHz
  std::vector<double> y(t.size(), 0.5), s(t.size(), 0.02);
  EXPECT_THROW(fit_ramsey(t, y, s, {}), InvalidParameter);
}

TEST(Rabi, RecoversFrequency) {
  const auto t = linspace(0, 400, 161);
  std::vector<double> y, s(t.size(), 0.01);
  Rng rng(8);
  for (double x : t) y.push_back(0.55 + 0.4 * std::cos(2 * std::numbers::pi * 10.73e-3 * x) + 0.01 * rng.normal());
  const auto f = fit_rabi(t, y, s);
  EXPECT_NEAR(f.frequency_mhz, 10.73, 3 * f.sigma_mhz);
  EXPECT_LT(f.sigma_mhz, 0.05);
}

TEST(Echo, RecoversLarmorPeriod) {
  const auto th = linspace(2, 120, 120);
  const auto truth = detail::vec({0.9, 180.0, 3.0, 24.9});
  std::vector<double> y, s(th.size(), 0.01);
  for (double x : th) y.push_back(echo_model(x, truth));
  const auto f = fit_echo(th, y, s, 25.5, 150);
  EXPECT_NEAR(f.larmor_period, 24.9, 1e-4);
  EXPECT_NEAR(f.t_decay, 180, 1e-2);
}

// Readout correction ----------------------------------------------------------

TEST(Readout, HalfPopulationExample) {
  const auto r = readout_correction(0.0595, 0.103, 0.984);
  EXPECT_NEAR(r.p0, 0.5, 1e-12);
  EXPECT_FALSE(r.clipped);
}

TEST(Readout, PureStates) {
  EXPECT_NEAR(readout_correction(0.103, 0.103, 0.984).p0, 1.0, 1e-12);
  EXPECT_NEAR(readout_correction(0.016, 0.103, 0.984).p0, 0.0, 1e-12);
}

TEST(Readout, RoundTripIsIdentity) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double F0 = 0.05 + 0.9 * rng.uniform(), F1 = 0.5 + 0.5 * rng.uniform(), init = 0.6 + 0.4 * rng.uniform();
    const double P0 = rng.uniform();
    const double p = forward_readout(P0, F0, F1, init);
    if (p < 0 || p > 1 || std::abs(fold_init_fidelity(F0, F1, init) + F1 - 1) < 1e-3) continue;
    const auto r = readout_correction(p, F0, F1, init);
    if (r.clipped) continue;
    EXPECT_NEAR(forward_readout(r.p0, F0, F1, init), p, 1e-12);
    EXPECT_NEAR(r.p0, P0, 1e-9);
  }
}

TEST(Readout, InitFoldIn) {
  // A perfectly initialized m_s = 0 state clicks more often than the calibration suggests.
  const double f0 = fold_init_fidelity(0.103, 0.984, 0.728);
  EXPECT_NEAR(f0, (0.103 - 0.272 * 0.016) / 0.728, 1e-15);
  EXPECT_NEAR(readout_correction(0.103, 0.103, 0.984, 0.728).p0, 0.728, 1e-12);
}

TEST(Readout, ClipsWithFlag) {
  const auto r = readout_correction(0.2, 0.103, 0.984);
  EXPECT_TRUE(r.clipped);
  EXPECT_EQ(r.p0, 1.0);
  EXPECT_GT(r.unclipped, 1.0);
}

TEST(Readout, SingularMatrix) {
  EXPECT_THROW(readout_correction(0.3, 0.4, 0.6), InvalidParameter);
  EXPECT_THROW(readout_correction(0.3, 1.2, 0.6), InvalidParameter);
}

TEST(Readout, ErrorPropagation) {
  const auto r = readout_correction(0.0595, 0.103, 0.984, 1.0, 0.001);
  EXPECT_NEAR(r.sigma, 0.001 / 0.087, 1e-12);
}

namespace {

ClickStream readout_stream(double p_per_pulse, std::uint64_t reps, unsigned pulses, std::uint64_t seed) {
  ClickStream s;
  s.header.repetitions = reps;
  s.header.pulses_per_rep = pulses;
  Rng rng(seed);
  for (std::uint64_t r = 0; r < reps; ++r)
    for (unsigned p = 0; p < pulses; ++p)
      if (rng.bernoulli(p_per_pulse)) s.clicks.push_back({r, p, Channel::ZPL_A, to_tag(8.0)});
  return s;
}

}  // namespace

TEST(ReadoutCurve, EndpointsAndMean) {
  const auto s0 = readout_stream(5e-4, 20000, 200, 1);
  const auto s1 = readout_stream(8e-5, 20000, 200, 2);
  const auto c = readout_fidelity_curve(s0, s1, {0, 10, 50, 100, 200});
  EXPECT_EQ(c.F0[0], 0.0);
  EXPECT_EQ(c.F1[0], 1.0);
  for (std::size_t i = 0; i < c.F0.size(); ++i) EXPECT_DOUBLE_EQ(c.F_avg[i], 0.5 * (c.F0[i] + c.F1[i]));
  EXPECT_NEAR(c.F0.back(), 1 - std::pow(1 - 5e-4, 200), 0.01);
  EXPECT_NEAR(c.F1.back(), std::pow(1 - 8e-5, 200), 0.003);
  EXPECT_EQ(c.best_n, 200u);
}

TEST(ReadoutCurve, OutOfWindowClicksIgnored) {
  ClickStream s;
  s.header.repetitions = 2;
  s.clicks = {{0, 3, Channel::ZPL_A, to_tag(1.0)}, {1, 2, Channel::ZPL_A, to_tag(29.9)}};
  const auto f = first_click_pulses(s);
  EXPECT_EQ(f[0], -1);
  EXPECT_EQ(f[1], 2);
}

// Conditional tables ----------------------------------------------------------

TEST(Conditional, HeraldRateAndMissingColumn) {
  std::vector<HeraldRecord> recs;
  for (std::uint64_t i = 0; i < 27143; ++i) recs.push_back({i, "E", i % 10 == 0});
  const auto tab = conditional_table(recs, 5000000, {"E", "L"}, {0.103, 0.984, 1.0});
  ASSERT_EQ(tab.rows.size(), 1u);
  ASSERT_EQ(tab.missing.size(), 1u);
  EXPECT_EQ(tab.missing[0], "L");
  EXPECT_EQ(tab.find("L"), nullptr);
  EXPECT_NEAR(tab.rows[0].herald_rate.p, 0.0054286, 1e-7);
  EXPECT_NEAR(tab.rows[0].herald_rate.p * 100, 0.54, 0.005);
}

TEST(Conditional, CorrectedColumnsSumToOne) {
  std::vector<HeraldRecord> recs;
  Rng rng(5);
  for (std::uint64_t i = 0; i < 5000; ++i) recs.push_back({i, i % 2 ? "E" : "L", rng.bernoulli(i % 2 ? 0.035 : 0.08)});
  const auto tab = conditional_table(recs, 1000000, {"E", "L"}, {0.103, 0.984, 0.728});
  ASSERT_EQ(tab.rows.size(), 2u);
  for (const auto& r : tab.rows) {
    EXPECT_NEAR(r.spin.p0 + r.spin.p1, 1.0, 1e-15);
    EXPECT_GT(r.spin.sigma, 0);
  }
}

TEST(Stats, ExactBinomialInterval) {
  const auto a = binomial(3, 40, true);
  EXPECT_LT(a.lo, a.p);
  EXPECT_GT(a.hi, a.p);
  const auto z = binomial(0, 40, true);
  EXPECT_EQ(z.lo, 0.0);
  EXPECT_GT(z.hi, 0.0);
  EXPECT_THROW(binomial(1, 0), InvalidParameter);
}

TEST(Stats, KsPvalueIsCalibrated) {
  int low = 0;
  const int trials = 1000;
  for (int s = 0; s < trials; ++s) {
    Rng rng(2, static_cast<std::uint64_t>(s));
    std::vector<double> a;
    for (int i = 0; i < 200; ++i) a.push_back(rng.normal());
    if (ks_normal_pvalue(a) < 0.05) ++low;
  }
  EXPECT_NEAR(low / double(trials), 0.05, 0.02);
}

TEST(Stats, KsDetectsShift) {
  Rng rng(3);
  std::vector<double> b;
  for (int i = 0; i < 400; ++i) b.push_back(rng.normal() + 0.5);
  EXPECT_LT(ks_normal_pvalue(b), 1e-4);
}

TEST(Batch, RunsInOrder) {
  std::vector<std::function<double()>> jobs;
  for (int i = 0; i < 16; ++i) jobs.push_back([i] { return i * 2.0; });
  const auto r = fit_batch(jobs, 4);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(r[i], i * 2.0);
}
