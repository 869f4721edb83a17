#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nvcav/clicks.hpp"
#include "nvcav/core_model.hpp"
#include "nvcav/dynamics/model.hpp"
#include "nvcav/dynamics/sequence.hpp"
#include "nvcav/errors.hpp"
#include "nvcav/parallel.hpp"
#include "nvcav/rng.hpp"

namespace nvcav {

struct EngineModel {
  RateModel rates;
  EfficiencyChain chain;
  BackgroundModel background;

  void validate() const {
    rates.validate();
    chain.validate();
    background.validate();
  }
};

struct SimOptions {
  unsigned workers = 0;
  bool split_channels = false;     // 50:50 beamsplitter onto ZPL_A / ZPL_B
  double max_duration_us = 2e5;    // per repetition
  std::string experiment;
};

/// Per-repetition emitter state driven by the pulse primitives. Exposed so that
/// protocols with microwave control can interleave their own operations.
class Emitter {
 public:
  Emitter(const EngineModel& m, Rng& rng, std::uint64_t rep, std::vector<ClickRecord>* out, bool split = false)
      : m_(m), rng_(rng), rep_(rep), out_(out), split_(split), eta_(m.chain.detection()) {}

  Level level = Level::G0;
  double now = 0;            // ns since the start of the repetition
  double singlet_exit = 0;   // absolute time the singlet empties
  double excited_until = 0;  // spontaneous decay time after a drive ends while excited
  bool gate = true;
  std::uint32_t next_pulse = 0;
  std::uint8_t round = 0;
  std::uint64_t mode_photons = 0;

  Rng& rng() { return rng_; }

  /// Empties the singlet if its exit time has passed.
  /// Completes decays that happened before `t` without a laser present.
  void resolve(double t) {
    if ((level == Level::Ey || level == Level::Ex) && excited_until <= t) {
      const bool g = gate;
      gate = false;
      decay_at(level, excited_until, 0.0, 0, 0.0, 0.0);
      gate = g;
    }
    if (level != Level::Singlet || singlet_exit > t) return;
    if (rng_.bernoulli(m_.rates.singlet_to_g0)) level = Level::G0;
    else level = rng_.bernoulli(0.5) ? Level::Gm1 : Level::Gp1;
  }

  bool in_ms0() const { return level == Level::G0; }
  bool in_ms1() const { return level == Level::Gm1 || level == Level::Gp1; }

  void repump(const Repump& r) {
    if (rng_.bernoulli(m_.rates.repump_success)) {
      if (rng_.bernoulli(m_.rates.repump_g0)) level = Level::G0;
      else level = rng_.bernoulli(0.5) ? Level::Gm1 : Level::Gp1;
    } else {
      level = Level::NV0;
    }
    now += 1e3 * (r.duration_us + r.wait_us);
  }

  void wait(double us) { now += 1e3 * us; }

  void spin_init(const SpinInit& s) {
    const bool g = gate;
    gate = false;
    drive(1e3 * s.duration_us, s.power_nW, m_.rates.freq_e1, nullptr);
    gate = g;
    now += 1e3 * s.duration_us;
  }

  /// One short pulse slot. `forced` overrides the excitation draw for g0
  /// (used when the caller tracks a coherent spin state). Returns true if excited.
  bool short_pulse(double peak_uW, double fwhm_ns, double slot_ns, std::optional<bool> forced = std::nullopt) {
    const double center = now - kGateLo;
    const std::uint32_t pulse = next_pulse++;
    resolve(center);
    bool excited = false;
    if (level == Level::G0) {
      excited = forced ? *forced : rng_.bernoulli(m_.rates.p_exc(peak_uW));
      if (excited) decay(Level::Ey, center + m_.rates.emission_delay_ns, center, pulse);
    } else if (in_ms1()) {
      if (rng_.bernoulli(m_.rates.return_prob(peak_uW))) level = Level::G0;
    }
    if (gate) pulse_background(peak_uW, fwhm_ns, pulse);
    now += slot_ns;
    return excited;
  }

  void cw(const CWExcite& c) {
    const std::uint32_t pulse = next_pulse++;
    const double dur = 1e3 * c.duration_us;
    drive(dur, c.power_nW, c.laser_ghz, &pulse);
    if (gate) {
      const double rate = m_.background.dark_rate() + m_.background.leakage_rate(c.power_nW);
      const unsigned n = rng_.poisson(rate * dur);
      for (unsigned i = 0; i < n; ++i) record(pulse, rng_.uniform() * dur, 0.0, dur);
    }
    now += dur;
  }

  void run(const PulsePrimitive& p) {
    if (auto* r = std::get_if<Repump>(&p)) repump(*r);
    else if (auto* s = std::get_if<SpinInit>(&p)) spin_init(*s);
    else if (auto* e = std::get_if<ShortExcite>(&p)) short_pulse(e->peak_power_uW, e->fwhm_ns, e->slot_ns);
    else if (auto* c = std::get_if<CWExcite>(&p)) cw(*c);
    else if (auto* w = std::get_if<Wait>(&p)) wait(w->duration_us);
    else if (auto* g = std::get_if<DetectorGate>(&p)) gate = g->on;
    else if (auto* b = std::get_if<ReadoutBlock>(&p))
      for (unsigned i = 0; i < b->n_pulses; ++i) short_pulse(b->peak_power_uW, b->fwhm_ns, b->spacing_ns);
  }

  /// Spectral-diffusion offset of the Ey line for this repetition, MHz.
  double diffusion_offset() {
    if (!sd_) sd_ = rng_.normal() * m_.rates.ey_inhomogeneous_mhz / 2.3548200450309493;
    return *sd_;
  }

 private:
  void decay(Level excited, double t_exc, double origin, std::uint32_t pulse) {
    decay_at(excited, t_exc + rng_.exponential(m_.rates.rate()), origin, pulse, kGateLo, kGateHi);
  }

  void record(std::uint32_t pulse, double t, double lo, double hi) {
    if (!(t >= lo && t < hi) || !out_) return;
    ClickRecord c;
    c.rep = rep_;
    c.pulse = pulse;
    c.tag = to_tag(t);
    c.round = round;
    c.channel = split_ && rng_.bernoulli(0.5) ? Channel::ZPL_B : Channel::ZPL_A;
    out_->push_back(c);
  }

  void pulse_background(double peak_uW, double fwhm_ns, std::uint32_t pulse) {
    const BackgroundModel& b = m_.background;
    const double width = kGateHi - kGateLo;
    const unsigned n = rng_.poisson(b.dark_rate() * width);
    for (unsigned i = 0; i < n; ++i) record(pulse, kGateLo + rng_.uniform() * width, kGateLo, kGateHi);
    // Gaussian pulse energy in nW * ns
    const double energy = 1e3 * peak_uW * fwhm_ns * 1.0644670194312262;
    const double p_leak = std::min(1.0, b.leakage_rate(1.0) * energy);
    const double sigma = fwhm_ns / 2.3548200450309493;
    if (rng_.bernoulli(p_leak)) record(pulse, sigma * rng_.normal(), kGateLo, kGateHi);
    if (rng_.bernoulli(std::min(1.0, p_leak * b.echo_ratio))) record(pulse, b.echo_delay_ns + sigma * rng_.normal(), kGateLo, kGateHi);
    if (b.secondary != BackgroundModel::Secondary::Off) {
      const RateModel& r = m_.rates;
      const double scale = b.secondary == BackgroundModel::Secondary::WeakEmitter ? r.p_exc(peak_uW) / r.p_exc(r.cal_power_uW)
                                                                                   : peak_uW / r.cal_power_uW;
      if (rng_.bernoulli(std::min(1.0, b.secondary_prob * scale)))
        record(pulse, r.emission_delay_ns + rng_.exponential(1.0 / b.secondary_lifetime_ns), kGateLo, kGateHi);
    }
  }

  /// Continuous drive for `dur` ns starting at `now`; jump-sampled.
  void drive(double dur, double power_nW, double laser_ghz, const std::uint32_t* pulse) {
    const RateModel& r = m_.rates;
    const double t0 = now, t_end = now + dur;
    const double gamma = r.rate();
    const double s = power_nW / (4 * r.p_sat_nW) * gamma;
    const double wy = power_nW > 0 ? s * lorentz(1e3 * (laser_ghz - r.freq_ey) - diffusion_offset(), r.ey_lorentz_mhz) : 0.0;
    const double wx = s * lorentz(1e3 * (laser_ghz - r.freq_ex), r.ex_lorentz_mhz);
    const double e12 = lorentz(1e3 * (laser_ghz - r.freq_e1), r.e12_lorentz_mhz) +
                       lorentz(1e3 * (laser_ghz - r.freq_e2), r.e12_lorentz_mhz);
    const double k = r.init_rate_per_ns(power_nW) * e12;
    const double k_pump = k * r.init_steady_g0;
    const double k_rev = k * (1 - r.init_steady_g0);

    double t = t0;
    resolve(t);
    const bool g = gate;
    if (!pulse) gate = false;
    for (std::uint64_t jumps = 0;; ++jumps) {
      if (jumps > 100000000ULL) throw SequenceError("continuous drive exceeded the jump budget");
      if (level == Level::Singlet) {
        if (singlet_exit >= t_end) break;
        t = std::max(t, singlet_exit);
        resolve(t);
        continue;
      }
      if (level == Level::Ey || level == Level::Ex) {
        // Stimulated return competes with spontaneous decay.
        const double w = level == Level::Ey ? wy : wx;
        const double tt = t + rng_.exponential(gamma + w);
        if (tt >= t_end) {
          excited_until = t_end + rng_.exponential(gamma);
          break;
        }
        t = tt;
        if (rng_.bernoulli(w / (gamma + w))) level = Level::G0;
        else decay_at(level, t, t0, pulse ? *pulse : 0, 0.0, dur);
        continue;
      }
      double out = 0;
      switch (level) {
        case Level::G0: out = wy + wx + k_rev; break;
        case Level::Gm1:
        case Level::Gp1: out = k_pump; break;
        default: out = 0; break;
      }
      if (out <= 0) break;
      t += rng_.exponential(out);
      if (t >= t_end) break;
      if (level == Level::G0) {
        const double u = rng_.uniform() * out;
        if (u < k_rev) level = rng_.bernoulli(0.5) ? Level::Gm1 : Level::Gp1;
        else level = u < k_rev + wy ? Level::Ey : Level::Ex;
      } else {
        level = Level::G0;
      }
    }
    gate = g;
  }

  /// Decay of an excited level at `td`; clicks are recorded relative to
  /// `origin` for pulse `pulse` when the gate is on.
  void decay_at(Level excited, double td, double origin, std::uint32_t pulse, double lo, double hi) {
    const RateModel& r = m_.rates;
    const double beta = excited == Level::Ey ? r.zpl_fraction : 0.0;
    const double u = rng_.uniform();
    if (u < beta) {
      ++mode_photons;
      level = Level::G0;
      if (gate && out_ && rng_.bernoulli(eta_)) record(pulse, td - origin, lo, hi);
    } else if (u < beta + r.singlet_prob()) {
      level = Level::Singlet;
      singlet_exit = td + rng_.exponential(1.0 / r.singlet_lifetime_ns);
    } else if (u < beta + r.singlet_prob() + r.spin_flip_prob) {
      level = rng_.bernoulli(0.5) ? Level::Gm1 : Level::Gp1;
    } else {
      level = Level::G0;
    }
  }

  const EngineModel& m_;
  Rng& rng_;
  std::uint64_t rep_;
  std::vector<ClickRecord>* out_;
  bool split_;
  double eta_;
  std::optional<double> sd_;
};

struct SimResult {
  ClickStream stream;
  std::array<std::uint64_t, kLevelCount> final_levels{};
  std::uint64_t mode_photons = 0;

  double final_fraction(Level l) const {
    const auto n = stream.header.repetitions;
    return n ? static_cast<double>(final_levels[static_cast<std::size_t>(l)]) / static_cast<double>(n) : 0.0;
  }
};

inline void check_sequence(const PulseSequence& seq, const EngineModel& m, const SimOptions& o) {
  seq.validate();
  m.validate();
  if (seq.duration_ns() > 1e3 * o.max_duration_us) throw SequenceError("sequence exceeds the maximum repetition duration");
}

/// Monte-Carlo execution of `seq`; repetition `i` draws from Rng(seed, i).
inline SimResult simulate_sequence(const PulseSequence& seq, const EngineModel& m, std::uint64_t seed, std::uint64_t repetitions,
                                   const SimOptions& o = {}) {
  if (repetitions == 0) throw InvalidParameter("repetitions must be at least 1");
  check_sequence(seq, m, o);
  struct Part {
    std::vector<ClickRecord> clicks;
    std::array<std::uint64_t, kLevelCount> levels{};
    std::uint64_t photons = 0;
  };
  Part all = block_reduce<Part>(
      repetitions, o.workers,
      [&](std::uint64_t b, std::uint64_t e) {
        Part p;
        for (std::uint64_t rep = b; rep < e; ++rep) {
          Rng rng(seed, rep);
          Emitter em(m, rng, rep, &p.clicks, o.split_channels);
          for (const auto& step : seq.steps) em.run(step);
          em.resolve(em.now);
          ++p.levels[static_cast<std::size_t>(em.level)];
          p.photons += em.mode_photons;
        }
        return p;
      },
      [](Part& acc, Part&& p) {
        acc.clicks.insert(acc.clicks.end(), p.clicks.begin(), p.clicks.end());
        for (std::size_t i = 0; i < kLevelCount; ++i) acc.levels[i] += p.levels[i];
        acc.photons += p.photons;
      });
  SimResult r;
  r.stream.header.experiment = o.experiment.empty() ? seq.name : o.experiment;
  r.stream.header.seed = seed;
  r.stream.header.repetitions = repetitions;
  r.stream.header.pulses_per_rep = seq.pulse_count();
  r.stream.clicks = std::move(all.clicks);
  r.stream.sort();
  r.final_levels = all.levels;
  r.mode_photons = all.photons;
  return r;
}

}  // namespace nvcav
