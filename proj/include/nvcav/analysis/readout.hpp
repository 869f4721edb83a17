#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nvcav/analysis/stats.hpp"
#include "nvcav/clicks.hpp"
#include "nvcav/errors.hpp"

namespace nvcav {

// Readout outcome "click" reports m_s = 0. F0 = P(click | 0), F1 = P(no click | +-1).
// Measured F0 comes from a calibration whose preparation succeeds with probability
// `init_fidelity`; a failed preparation reads like +-1. The fold-in recovers the
// fidelity for a perfectly prepared state:
//   F0_meas = init * F0 + (1 - init) * (1 - F1).

inline double fold_init_fidelity(double F0_measured, double F1, double init_fidelity) {
  if (!(init_fidelity > 0 && init_fidelity <= 1)) throw InvalidParameter("init fidelity must be in (0, 1]");
  return (F0_measured - (1 - init_fidelity) * (1 - F1)) / init_fidelity;
}

/// Click probability for a state with m_s = 0 population P0.
inline double forward_readout(double P0, double F0, double F1, double init_fidelity = 1.0) {
  const double f0 = fold_init_fidelity(F0, F1, init_fidelity);
  return f0 * P0 + (1 - F1) * (1 - P0);
}

struct CorrectedPopulation {
  double p0 = 0;
  double p1 = 0;
  double sigma = 0;
  double unclipped = 0;
  bool clipped = false;
};

inline CorrectedPopulation readout_correction(double p_click, double F0, double F1, double init_fidelity = 1.0,
                                              double p_click_sigma = 0.0) {
  for (double v : {F0, F1})
    if (!(v >= 0 && v <= 1)) throw InvalidParameter("readout fidelities must lie in [0, 1]");
  if (!(p_click >= 0 && p_click <= 1)) throw InvalidParameter("click fraction must lie in [0, 1]");
  const double f0 = fold_init_fidelity(F0, F1, init_fidelity);
  const double det = f0 + F1 - 1;
  if (std::abs(det) < 1e-12) throw InvalidParameter("readout response matrix is singular (F0 + F1 = 1)");
  CorrectedPopulation r;
  r.unclipped = (p_click - (1 - F1)) / det;
  r.p0 = std::clamp(r.unclipped, 0.0, 1.0);
  r.clipped = r.p0 != r.unclipped;
  r.p1 = 1 - r.p0;
  r.sigma = std::abs(p_click_sigma / det);
  return r;
}

// ---------------------------------------------------------------------------

/// Index of the first pulse with an in-window click for every repetition, -1 for none.
inline std::vector<std::int64_t> first_click_pulses(const ClickStream& s, double lo = 3.0, double hi = 30.0) {
  std::vector<std::int64_t> first(s.header.repetitions, -1);
  for (const auto& c : s.clicks) {
    if (c.rep >= first.size()) throw FormatError("click repetition index exceeds the header repetition count");
    if (!in_window(c, lo, hi)) continue;
    auto& f = first[c.rep];
    if (f < 0 || c.pulse < f) f = c.pulse;
  }
  return first;
}

struct ReadoutCurve {
  std::vector<unsigned> n_pulses;
  std::vector<double> F0, F1, F_avg;
  unsigned best_n = 0;
  double best_avg = 0;
  double plateau_avg = 0;  // F_avg at the largest N
};

inline ReadoutCurve readout_fidelity_curve(const ClickStream& prep0, const ClickStream& prep1, const std::vector<unsigned>& grid,
                                           double lo = 3.0, double hi = 30.0) {
  if (prep0.header.repetitions == 0 || prep1.header.repetitions == 0)
    throw InvalidParameter("readout calibration needs repetitions for both preparations");
  const auto f0 = first_click_pulses(prep0, lo, hi);
  const auto f1 = first_click_pulses(prep1, lo, hi);
  auto frac_before = [](const std::vector<std::int64_t>& f, unsigned n) {
    std::uint64_t k = 0;
    for (auto v : f)
      if (v >= 0 && v < static_cast<std::int64_t>(n)) ++k;
    return static_cast<double>(k) / static_cast<double>(f.size());
  };
  ReadoutCurve c;
  for (unsigned n : grid) {
    c.n_pulses.push_back(n);
    c.F0.push_back(frac_before(f0, n));
    c.F1.push_back(1 - frac_before(f1, n));
    c.F_avg.push_back(0.5 * (c.F0.back() + c.F1.back()));
    if (c.F_avg.back() > c.best_avg) {
      c.best_avg = c.F_avg.back();
      c.best_n = n;
    }
  }
  if (!c.F_avg.empty()) c.plateau_avg = c.F_avg.back();
  return c;
}

// ---------------------------------------------------------------------------

struct HeraldRecord {
  std::uint64_t rep = 0;
  std::string pattern;  // e.g. "E", "L", "EL", "LE"
  bool readout_click = false;
};

struct ConditionalRow {
  std::string pattern;
  std::uint64_t heralds = 0;
  Proportion raw_click;
  CorrectedPopulation spin;  // p0 = P(m_s = 0), p1 = P(m_s = +-1)
  Proportion herald_rate;
};

struct ConditionalTable {
  std::vector<ConditionalRow> rows;
  std::vector<std::string> missing;  // expected patterns without any herald
  std::uint64_t attempts = 0;

  const ConditionalRow* find(const std::string& p) const {
    for (const auto& r : rows)
      if (r.pattern == p) return &r;
    return nullptr;
  }
};

struct ReadoutCalibration {
  double F0 = 0.103;
  double F1 = 0.984;
  double init_fidelity = 1.0;
};

inline ConditionalTable conditional_table(const std::vector<HeraldRecord>& records, std::uint64_t attempts,
                                          const std::vector<std::string>& expected, const ReadoutCalibration& cal,
                                          bool exact_intervals = false) {
  if (attempts == 0) throw InvalidParameter("conditional table needs a positive attempt count");
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> tally;  // heralds, clicks
  for (const auto& r : records) {
    auto& t = tally[r.pattern];
    ++t.first;
    if (r.readout_click) ++t.second;
  }
  ConditionalTable tab;
  tab.attempts = attempts;
  std::vector<std::string> order = expected;
  for (const auto& [p, _] : tally)
    if (std::find(order.begin(), order.end(), p) == order.end()) order.push_back(p);
  for (const auto& p : order) {
    auto it = tally.find(p);
    if (it == tally.end() || it->second.first == 0) {
      tab.missing.push_back(p);
      continue;
    }
    ConditionalRow row;
    row.pattern = p;
    row.heralds = it->second.first;
    row.raw_click = binomial(it->second.second, it->second.first, exact_intervals);
    row.spin = readout_correction(row.raw_click.p, cal.F0, cal.F1, cal.init_fidelity, row.raw_click.sigma);
    row.herald_rate = binomial(it->second.first, attempts, exact_intervals);
    tab.rows.push_back(row);
  }
  return tab;
}

}  // namespace nvcav
