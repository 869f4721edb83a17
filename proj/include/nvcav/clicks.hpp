#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "nvcav/errors.hpp"
#include "nvcav/version.hpp"

namespace nvcav {

enum class Channel : std::uint8_t { ZPL_A = 0, ZPL_B = 1 };

/// Time tags are integers in units of 0.1 ns relative to the owning pulse center.
inline constexpr double kTagResolution = 0.1;

inline std::int32_t to_tag(double t_ns) { return static_cast<std::int32_t>(std::lround(t_ns / kTagResolution)); }

struct ClickRecord {
  std::uint64_t rep = 0;
  std::uint32_t pulse = 0;
  Channel channel = Channel::ZPL_A;
  std::int32_t tag = 0;
  std::uint8_t round = 0;  // protocol round, only meaningful for herald streams

  double t_ns() const { return tag * kTagResolution; }

  friend bool operator<(const ClickRecord& a, const ClickRecord& b) {
    return std::tie(a.rep, a.pulse, a.tag, a.channel, a.round) <
           std::tie(b.rep, b.pulse, b.tag, b.channel, b.round);
  }
  friend bool operator==(const ClickRecord&, const ClickRecord&) = default;
};

struct StreamHeader {
  std::string tool_version = kVersion;
  std::string experiment;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::uint64_t repetitions = 0;
  std::uint32_t pulses_per_rep = 0;
  bool with_round = false;
};

struct ClickStream {
  StreamHeader header;
  std::vector<ClickRecord> clicks;

  void sort() { std::stable_sort(clicks.begin(), clicks.end()); }
};

/// Sums clicks of `pulse` whose time falls in [lo, hi) ns.
inline bool in_window(const ClickRecord& c, double lo, double hi) {
  const double t = c.t_ns();
  return t >= lo && t < hi;
}

// CSV ----------------------------------------------------------------------

inline void write_csv(std::ostream& os, const ClickStream& s) {
  const auto& h = s.header;
  os << "# nvcav " << h.tool_version << "\n";
  os << "# experiment " << h.experiment << "\n";
  os << "# config_hash " << h.config_hash << "\n";
  os << "# seed " << h.seed << "\n";
  os << "# repetitions " << h.repetitions << "\n";
  os << "# pulses_per_rep " << h.pulses_per_rep << "\n";
  os << (h.with_round ? "rep,pulse,channel,t_ns,round\n" : "rep,pulse,channel,t_ns\n");
  for (const auto& c : s.clicks) {
    os << c.rep << ',' << c.pulse << ',' << static_cast<int>(c.channel) << ',';
    const std::int32_t a = c.tag < 0 ? -c.tag : c.tag;
    os << (c.tag < 0 ? "-" : "") << a / 10 << '.' << a % 10;
    if (h.with_round) os << ',' << static_cast<int>(c.round);
    os << '\n';
  }
}

namespace detail {

inline std::int32_t parse_tag(const std::string& f) {
  // Exact decimal parse with one fractional digit, avoiding float rounding.
  std::size_t pos = 0;
  bool neg = false;
  if (pos < f.size() && (f[pos] == '-' || f[pos] == '+')) neg = f[pos++] == '-';
  std::int64_t whole = 0;
  bool digits = false;
  while (pos < f.size() && std::isdigit(static_cast<unsigned char>(f[pos]))) {
    whole = whole * 10 + (f[pos++] - '0');
    digits = true;
    if (whole > 300000000) throw FormatError("time tag out of range: " + f);
  }
  int frac = 0;
  if (pos < f.size() && f[pos] == '.') {
    ++pos;
    if (pos < f.size() && std::isdigit(static_cast<unsigned char>(f[pos]))) {
      frac = f[pos++] - '0';
      digits = true;
      while (pos < f.size() && f[pos] == '0') ++pos;
    }
  }
  if (!digits || pos != f.size()) throw FormatError("bad time value: " + f);
  const std::int64_t v = whole * 10 + frac;
  return static_cast<std::int32_t>(neg ? -v : v);
}

inline std::uint64_t parse_u64(const std::string& f, const char* what) {
  if (f.empty() || f.find_first_not_of("0123456789") != std::string::npos)
    throw FormatError(std::string("bad ") + what + ": '" + f + "'");
  return std::stoull(f);
}

}  // namespace detail

inline ClickStream read_csv(std::istream& is) {
  ClickStream s;
  std::string line;
  bool have_columns = false;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string key, value;
      ls >> key;
      std::getline(ls >> std::ws, value);
      auto& h = s.header;
      if (key == "nvcav") h.tool_version = value;
      else if (key == "experiment") h.experiment = value;
      else if (key == "config_hash") h.config_hash = value;
      else if (key == "seed") h.seed = detail::parse_u64(value, "seed");
      else if (key == "repetitions") h.repetitions = detail::parse_u64(value, "repetitions");
      else if (key == "pulses_per_rep") h.pulses_per_rep = static_cast<std::uint32_t>(detail::parse_u64(value, "pulses"));
      continue;
    }
    if (!have_columns) {
      if (line == "rep,pulse,channel,t_ns") s.header.with_round = false;
      else if (line == "rep,pulse,channel,t_ns,round") s.header.with_round = true;
      else throw FormatError("missing or unknown column header on line " + std::to_string(lineno));
      have_columns = true;
      continue;
    }
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    const std::size_t expect = s.header.with_round ? 5 : 4;
    if (f.size() != expect) throw FormatError("wrong field count on line " + std::to_string(lineno));
    ClickRecord c;
    c.rep = detail::parse_u64(f[0], "rep");
    c.pulse = static_cast<std::uint32_t>(detail::parse_u64(f[1], "pulse"));
    const auto ch = detail::parse_u64(f[2], "channel");
    if (ch > 1) throw FormatError("channel must be 0 or 1 on line " + std::to_string(lineno));
    c.channel = static_cast<Channel>(ch);
    c.tag = detail::parse_tag(f[3]);
    if (s.header.with_round) c.round = static_cast<std::uint8_t>(detail::parse_u64(f[4], "round"));
    s.clicks.push_back(c);
  }
  if (!have_columns) throw FormatError("no click table found");
  return s;
}

// Binary -------------------------------------------------------------------

inline constexpr std::array<char, 6> kBinaryMagic{'N', 'V', 'C', 'L', 'K', '\0'};
inline constexpr std::uint8_t kBinaryVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw FormatError("truncated binary stream");
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<U>(b[i]) << (8 * i));
  return static_cast<T>(u);
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_le<std::uint16_t>(os, static_cast<std::uint16_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
  const auto n = get_le<std::uint16_t>(is);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw FormatError("truncated binary stream");
  return s;
}

}  // namespace detail

inline void write_binary(std::ostream& os, const ClickStream& s) {
  using namespace detail;
  os.write(kBinaryMagic.data(), kBinaryMagic.size());
  put_le<std::uint8_t>(os, kBinaryVersion);
  put_le<std::uint8_t>(os, s.header.with_round ? 1 : 0);
  put_string(os, s.header.tool_version);
  put_string(os, s.header.experiment);
  put_string(os, s.header.config_hash);
  put_le<std::uint64_t>(os, s.header.seed);
  put_le<std::uint64_t>(os, s.header.repetitions);
  put_le<std::uint32_t>(os, s.header.pulses_per_rep);
  put_le<std::uint64_t>(os, s.clicks.size());
  for (const auto& c : s.clicks) {
    put_le<std::uint64_t>(os, c.rep);
    put_le<std::uint32_t>(os, c.pulse);
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(c.channel));
    put_le<std::uint8_t>(os, c.round);
    put_le<std::int32_t>(os, c.tag);
  }
}

inline ClickStream read_binary(std::istream& is) {
  using namespace detail;
  std::array<char, 6> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kBinaryMagic) throw FormatError("not a click stream (bad magic)");
  const auto version = get_le<std::uint8_t>(is);
  if (version != kBinaryVersion) throw FormatError("unsupported binary version " + std::to_string(version));
  ClickStream s;
  s.header.with_round = get_le<std::uint8_t>(is) != 0;
  s.header.tool_version = get_string(is);
  s.header.experiment = get_string(is);
  s.header.config_hash = get_string(is);
  s.header.seed = get_le<std::uint64_t>(is);
  s.header.repetitions = get_le<std::uint64_t>(is);
  s.header.pulses_per_rep = get_le<std::uint32_t>(is);
  const auto n = get_le<std::uint64_t>(is);
  s.clicks.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 24)));
  for (std::uint64_t i = 0; i < n; ++i) {
    ClickRecord c;
    c.rep = get_le<std::uint64_t>(is);
    c.pulse = get_le<std::uint32_t>(is);
    const auto ch = get_le<std::uint8_t>(is);
    if (ch > 1) throw FormatError("invalid channel in binary stream");
    c.channel = static_cast<Channel>(ch);
    c.round = get_le<std::uint8_t>(is);
    c.tag = get_le<std::int32_t>(is);
    s.clicks.push_back(c);
  }
  return s;
}

inline ClickStream load_stream(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  char first = 0;
  if (!f.get(first)) throw FormatError("empty file " + path);
  f.unget();
  return first == 'N' ? read_binary(f) : read_csv(f);
}

}  // namespace nvcav
