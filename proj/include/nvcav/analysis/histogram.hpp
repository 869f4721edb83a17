#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nvcav/errors.hpp"

namespace nvcav {

struct Histogram {
  std::vector<double> edges;
  std::vector<double> counts;
  std::string unit = "ns";
  std::uint64_t normalization = 0;  // repetitions or pulses folded into the counts

  std::size_t size() const { return counts.size(); }
  double center(std::size_t i) const { return 0.5 * (edges[i] + edges[i + 1]); }
  double width(std::size_t i) const { return edges[i + 1] - edges[i]; }

  std::vector<double> centers() const {
    std::vector<double> c(size());
    for (std::size_t i = 0; i < size(); ++i) c[i] = center(i);
    return c;
  }

  /// Bin index of x, or -1 if outside [edges.front(), edges.back()).
  long find(double x) const {
    if (edges.size() < 2 || x < edges.front() || x >= edges.back()) return -1;
    // Uniform binning is the common case.
    const double w = (edges.back() - edges.front()) / static_cast<double>(size());
    long i = static_cast<long>((x - edges.front()) / w);
    if (i >= static_cast<long>(size())) i = static_cast<long>(size()) - 1;
    while (i > 0 && x < edges[i]) --i;
    while (i + 1 < static_cast<long>(size()) && x >= edges[i + 1]) ++i;
    return i;
  }

  void fill(double x, double weight = 1.0) {
    const long i = find(x);
    if (i >= 0) counts[static_cast<std::size_t>(i)] += weight;
  }

  void validate() const {
    if (edges.size() != counts.size() + 1) throw InvalidParameter("histogram edges/counts size mismatch");
    for (std::size_t i = 1; i < edges.size(); ++i)
      if (!(edges[i] > edges[i - 1])) throw InvalidParameter("histogram edges must be strictly increasing");
  }
};

inline Histogram make_histogram(double lo, double hi, double bin, std::string unit = "ns") {
  if (!(bin > 0) || !(hi > lo)) throw InvalidParameter("histogram range must be non-empty with positive bin");
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / bin));
  if (n == 0) throw InvalidParameter("histogram needs at least one bin");
  Histogram h;
  h.unit = std::move(unit);
  h.edges.resize(n + 1);
  for (std::size_t i = 0; i <= n; ++i) h.edges[i] = lo + static_cast<double>(i) * bin;
  h.counts.assign(n, 0.0);
  return h;
}

}  // namespace nvcav
