#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "nvcav/analysis/stats.hpp"
#include "nvcav/clicks.hpp"
#include "nvcav/dynamics/engine.hpp"

namespace nvcav {

/// Exact per-pulse expectation of the pulsed readout. State vector
/// (g0, m_s = +-1, singlet, NV0) evaluated at a pulse center.
class PulseChain {
 public:
  using Vec = Eigen::Vector4d;
  using Mat = Eigen::Matrix4d;
  enum : int { G0 = 0, M = 1, S = 2, NV0 = 3 };

  explicit PulseChain(const EngineModel& m, double peak_uW = 35.0, double lo = 3.0, double hi = 30.0, double fwhm_ns = 1.94,
                      double spacing_ns = 126.0)
      : m_(m) {
    m.validate();
    const RateModel& r = m.rates;
    // Tags are rounded to the nearest 0.1 ns before the window test.
    const double lo_e = lo - kTagResolution / 2, hi_e = hi - kTagResolution / 2;
    const double pe = r.p_exc(peak_uW);
    const double wf = emission_window_fraction(r.lifetime_ns, lo_e, hi_e, r.emission_delay_ns);
    const double pc = r.zpl_fraction * m.chain.detection() * wf;
    const double ps = r.singlet_prob();
    const double tau = r.lifetime_ns, ts = r.singlet_lifetime_ns;
    const double gap = spacing_ns - r.emission_delay_ns;
    s_fresh_ = (ts * std::exp(-gap / ts) - tau * std::exp(-gap / tau)) / (ts - tau);
    s_stay_ = std::exp(-spacing_ns / ts);
    const double bs = r.singlet_to_g0;
    const double q = r.return_prob(peak_uW);

    mc_.setZero();
    mn_.setZero();
    mc_(G0, G0) = pe * pc;
    mn_(G0, G0) = (1 - pe) + pe * (r.zpl_fraction - pc) + pe * r.rest_to_g0() + pe * ps * (1 - s_fresh_) * bs;
    mn_(M, G0) = pe * r.spin_flip_prob + pe * ps * (1 - s_fresh_) * (1 - bs);
    mn_(S, G0) = pe * ps * s_fresh_;
    mn_(G0, M) = q;
    mn_(M, M) = 1 - q;
    mn_(G0, S) = (1 - s_stay_) * bs;
    mn_(M, S) = (1 - s_stay_) * (1 - bs);
    mn_(S, S) = s_stay_;
    mn_(NV0, NV0) = 1;
    signal_prob_ = pc;
    pe_ = pe;

    const BackgroundModel& b = m.background;
    const double energy = 1e3 * peak_uW * fwhm_ns * 1.0644670194312262;
    const double p_leak = std::min(1.0, b.leakage_rate(1.0) * energy);
    const double sig = fwhm_ns / 2.3548200450309493;
    auto frac = [&](double mu) { return normal_cdf((hi_e - mu) / sig) - normal_cdf((lo_e - mu) / sig); };
    double none = std::exp(-b.dark_rate() * (hi - lo));
    none *= 1 - p_leak * frac(0.0);
    none *= 1 - std::min(1.0, p_leak * b.echo_ratio) * frac(b.echo_delay_ns);
    if (b.secondary != BackgroundModel::Secondary::Off) {
      const double scale = b.secondary == BackgroundModel::Secondary::WeakEmitter ? pe / r.p_exc(r.cal_power_uW) : peak_uW / r.cal_power_uW;
      none *= 1 - std::min(1.0, b.secondary_prob * scale) *
                      emission_window_fraction(b.secondary_lifetime_ns, lo_e, hi_e, r.emission_delay_ns);
    }
    b_ = 1 - none;
  }

  const Mat& no_signal() const { return mn_; }
  const Mat& signal() const { return mc_; }
  Mat transfer() const { return mn_ + mc_; }
  double background() const { return b_; }
  double excitation() const { return pe_; }
  /// Click probability per excitation from g0 inside the window.
  double click_per_excitation() const { return signal_prob_; }
  double singlet_carry() const { return s_fresh_; }

  Vec after_repump() const {
    const RateModel& r = m_.rates;
    return Vec(r.repump_success * r.repump_g0, r.repump_success * (1 - r.repump_g0), 0, 1 - r.repump_success);
  }

  /// E1 pumping: the singlet empties first, then g0 <-> m relax to the steady state.
  Vec init(Vec x, double duration_us, double power_nW) const {
    const RateModel& r = m_.rates;
    x[G0] += x[S] * r.singlet_to_g0;
    x[M] += x[S] * (1 - r.singlet_to_g0);
    x[S] = 0;
    const double k = r.init_rate_per_ns(power_nW) * 1e3 * duration_us;
    const double nvm = x[G0] + x[M];
    const double g = r.init_steady_g0 * nvm + (x[G0] - r.init_steady_g0 * nvm) * std::exp(-k);
    x[G0] = g;
    x[M] = nvm - g;
    return x;
  }

  double signal_prob(const Vec& x) const { return (mc_ * x).sum(); }
  double click_prob(const Vec& x) const { return 1 - (1 - signal_prob(x)) * (1 - b_); }
  Vec step(const Vec& x) const { return (mn_ + mc_) * x; }
  /// Unnormalized state after a pulse with at least one click.
  Vec click_branch(const Vec& x) const { return mc_ * x + b_ * (mn_ * x); }
  /// Unnormalized state after a pulse without any click.
  Vec dark_branch(const Vec& x) const { return (1 - b_) * (mn_ * x); }

  /// Probability of at least one click in `n` pulses.
  double any_click(Vec x, unsigned n) const {
    const double total = x.sum();
    for (unsigned i = 0; i < n; ++i) x = dark_branch(x);
    return total - x.sum();
  }

  /// Per-pulse click probability over `n` pulses.
  std::vector<double> click_curve(Vec x, unsigned n, Vec* final_state = nullptr) const {
    std::vector<double> c(n);
    for (unsigned i = 0; i < n; ++i) {
      c[i] = click_prob(x);
      x = step(x);
    }
    if (final_state) *final_state = x;
    return c;
  }

  Vec pump(Vec x, unsigned n) const {
    const Mat t = transfer();
    for (unsigned i = 0; i < n; ++i) x = t * x;
    return x;
  }

  /// Long-time limit of repeated pumping.
  Vec stationary(const Vec& x) const {
    const Mat t = transfer();
    Eigen::Matrix3d a = t.topLeftCorner<3, 3>() - Eigen::Matrix3d::Identity();
    const double nvm = x[G0] + x[M] + x[S];
    a.row(2).setOnes();
    Eigen::Vector3d rhs(0, 0, nvm);
    Eigen::Vector3d s = a.fullPivLu().solve(rhs);
    return Vec(s[0], s[1], s[2], x[NV0]);
  }

 private:
  EngineModel m_;
  Mat mn_, mc_;
  double b_ = 0, pe_ = 0, signal_prob_ = 0, s_fresh_ = 0, s_stay_ = 0;
};

}  // namespace nvcav
