#pragma once

#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "nvcav/errors.hpp"

namespace nvcav {

struct Repump {
  double duration_us = 50.0;
  double power_uW = 60.0;
  double wait_us = 5.0;
};

/// Optical pumping on E1 into m_s = 0.
struct SpinInit {
  double duration_us = 100.0;
  double power_nW = 0.2;
};

/// Short resonant pulse on Ey occupying one slot of the pulse train.
struct ShortExcite {
  double peak_power_uW = 35.0;
  double fwhm_ns = 1.94;
  double slot_ns = 126.0;
};

/// Continuous drive at an absolute laser frequency (GHz offset from the anchor).
struct CWExcite {
  double duration_us = 1.0;
  double power_nW = 1.0;
  double laser_ghz = -23.34;
};

struct Wait {
  double duration_us = 1.0;
};

struct DetectorGate {
  bool on = true;
};

struct ReadoutBlock {
  unsigned n_pulses = 1;
  double spacing_ns = 126.0;
  double peak_power_uW = 35.0;
  double fwhm_ns = 1.94;
};

using PulsePrimitive = std::variant<Repump, SpinInit, ShortExcite, CWExcite, Wait, DetectorGate, ReadoutBlock>;

/// Gate window of a short pulse relative to its center.
inline constexpr double kGateLo = -20.0;
inline constexpr double kGateHi = 106.0;

struct PulseSequence {
  std::string name;
  std::vector<PulsePrimitive> steps;

  template <class P>
  PulseSequence& add(P p) {
    steps.emplace_back(std::move(p));
    return *this;
  }
  PulseSequence& append(const PulseSequence& o) {
    steps.insert(steps.end(), o.steps.begin(), o.steps.end());
    return *this;
  }

  /// Total wall time in ns.
  double duration_ns() const {
    double t = 0;
    for (const auto& s : steps)
      std::visit(
          [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, Repump>) t += 1e3 * (p.duration_us + p.wait_us);
            else if constexpr (std::is_same_v<T, SpinInit>) t += 1e3 * p.duration_us;
            else if constexpr (std::is_same_v<T, ShortExcite>) t += p.slot_ns;
            else if constexpr (std::is_same_v<T, CWExcite>) t += 1e3 * p.duration_us;
            else if constexpr (std::is_same_v<T, Wait>) t += 1e3 * p.duration_us;
            else if constexpr (std::is_same_v<T, ReadoutBlock>) t += p.n_pulses * p.spacing_ns;
          },
          s);
    return t;
  }

  /// Number of pulse indices the sequence produces (short pulses and CW blocks).
  unsigned pulse_count() const {
    unsigned n = 0;
    for (const auto& s : steps) {
      if (std::holds_alternative<ShortExcite>(s) || std::holds_alternative<CWExcite>(s)) ++n;
      if (auto* r = std::get_if<ReadoutBlock>(&s)) n += r->n_pulses;
    }
    return n;
  }

  void validate() const {
    if (steps.empty()) throw SequenceError("empty pulse sequence");
    for (const auto& s : steps)
      std::visit(
          [](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, Repump>) {
              if (!(p.duration_us > 0) || !(p.wait_us >= 0) || !(p.power_uW >= 0)) throw SequenceError("invalid repump");
            } else if constexpr (std::is_same_v<T, SpinInit>) {
              if (!(p.duration_us >= 0) || !(p.power_nW >= 0)) throw SequenceError("invalid spin init");
            } else if constexpr (std::is_same_v<T, ShortExcite>) {
              if (!(p.fwhm_ns > 0)) throw SequenceError("short pulse FWHM must be positive");
              if (!(p.peak_power_uW >= 0)) throw SequenceError("pulse power must be non-negative");
              if (!(p.slot_ns >= kGateHi - kGateLo)) throw SequenceError("pulse slot shorter than the detector gate");
            } else if constexpr (std::is_same_v<T, CWExcite>) {
              if (!(p.duration_us > 0) || !(p.power_nW >= 0)) throw SequenceError("invalid CW block");
            } else if constexpr (std::is_same_v<T, Wait>) {
              if (!(p.duration_us > 0)) throw SequenceError("wait duration must be positive");
            } else if constexpr (std::is_same_v<T, ReadoutBlock>) {
              if (p.n_pulses == 0) throw SequenceError("readout block without pulses");
              if (!(p.fwhm_ns > 0) || !(p.peak_power_uW >= 0)) throw SequenceError("invalid readout pulse");
              if (!(p.spacing_ns >= kGateHi - kGateLo)) throw SequenceError("readout spacing shorter than the detector gate");
            }
          },
          s);
  }
};

}  // namespace nvcav
