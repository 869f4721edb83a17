#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nvcav/clicks.hpp"
#include "nvcav/config.hpp"
#include "nvcav/dynamics/dense.hpp"
#include "nvcav/repro.hpp"
#include "oracles/rate_equations.hpp"

using namespace nvcav;

namespace {

ClickStream sample_stream(bool rounds) {
  ClickStream s;
  s.header.experiment = "unit";
  s.header.config_hash = "0123456789abcdef";
  s.header.seed = 42;
  s.header.repetitions = 3;
  s.header.pulses_per_rep = 30;
  s.header.with_round = rounds;
  s.clicks = {{0, 0, Channel::ZPL_A, to_tag(7.25), 0},
              {0, 29, Channel::ZPL_B, to_tag(-1.3), rounds ? std::uint8_t{1} : std::uint8_t{0}},
              {2, 5, Channel::ZPL_A, to_tag(125.9), 0}};
  return s;
}

void expect_same(const ClickStream& a, const ClickStream& b) {
  EXPECT_EQ(a.header.tool_version, b.header.tool_version);
  EXPECT_EQ(a.header.experiment, b.header.experiment);
  EXPECT_EQ(a.header.config_hash, b.header.config_hash);
  EXPECT_EQ(a.header.seed, b.header.seed);
  EXPECT_EQ(a.header.repetitions, b.header.repetitions);
  EXPECT_EQ(a.header.pulses_per_rep, b.header.pulses_per_rep);
  EXPECT_EQ(a.header.with_round, b.header.with_round);
  EXPECT_EQ(a.clicks, b.clicks);
}

ClickStream csv_trip(const ClickStream& s) {
  std::stringstream ss;
  write_csv(ss, s);
  return read_csv(ss);
}

ClickStream csv_of(const std::string& text) {
  std::istringstream is(text);
  return read_csv(is);
}

}  // namespace

// Click streams -------------------------------------------------------------------

TEST(ClickCsv, RoundTrip) {
  for (bool r : {false, true}) expect_same(sample_stream(r), csv_trip(sample_stream(r)));
}

TEST(ClickCsv, HeaderAndTagText) {
  std::stringstream ss;
  write_csv(ss, sample_stream(false));
  const std::string t = ss.str();
  EXPECT_EQ(t.rfind("# nvcav " + std::string(kVersion) + "\n# experiment unit\n# config_hash 0123456789abcdef\n# seed 42\n", 0), 0u);
  EXPECT_NE(t.find("# pulses_per_rep 30\nrep,pulse,channel,t_ns\n0,0,0,7.3\n0,29,1,-1.3\n2,5,0,125.9\n"), std::string::npos);
}

TEST(ClickCsv, TagsAreExactTenthsOfNanoseconds) {
  EXPECT_EQ(to_tag(0.05), 1);
  EXPECT_EQ(to_tag(-0.05), -1);
  const auto s = csv_of("rep,pulse,channel,t_ns\n0,0,0,12.30\n0,0,0,-0.7\n0,0,0,4\n");
  EXPECT_EQ(s.clicks[0].tag, 123);
  EXPECT_EQ(s.clicks[1].tag, -7);
  EXPECT_EQ(s.clicks[2].tag, 40);
}

TEST(ClickCsv, MalformedInputsThrow) {
  EXPECT_THROW(csv_of("# nvcav 1\n"), FormatError);
  EXPECT_THROW(csv_of("rep,pulse,t_ns\n"), FormatError);
  EXPECT_THROW(csv_of("rep,pulse,channel,t_ns\n0,1,0\n"), FormatError);
  EXPECT_THROW(csv_of("rep,pulse,channel,t_ns\n0,1,2,3.0\n"), FormatError);
  EXPECT_THROW(csv_of("rep,pulse,channel,t_ns\n-1,1,0,3.0\n"), FormatError);
  EXPECT_THROW(csv_of("rep,pulse,channel,t_ns\n0,1,0,3.x\n"), FormatError);
  EXPECT_THROW(csv_of("rep,pulse,channel,t_ns\n0,1,0,3.12\n"), FormatError);
  EXPECT_THROW(csv_of("# seed abc\nrep,pulse,channel,t_ns\n"), FormatError);
}

TEST(ClickBinary, RoundTripAndMagic) {
  for (bool r : {false, true}) {
    std::stringstream ss;
    write_binary(ss, sample_stream(r));
    EXPECT_EQ(ss.str().substr(0, 5), "NVCLK");
    expect_same(sample_stream(r), read_binary(ss));
  }
}

TEST(ClickBinary, CorruptInputsThrow) {
  std::stringstream ss;
  write_binary(ss, sample_stream(false));
  const std::string good = ss.str();
  std::istringstream truncated(good.substr(0, good.size() - 3));
  EXPECT_THROW(read_binary(truncated), FormatError);
  std::string bad = good;
  bad[0] = 'X';
  std::istringstream magic(bad);
  EXPECT_THROW(read_binary(magic), FormatError);
  bad = good;
  bad[6] = 9;
  std::istringstream version(bad);
  EXPECT_THROW(read_binary(version), FormatError);
}

TEST(ClickStreamFile, LoadDetectsFormat) {
  const auto dir = std::filesystem::temp_directory_path() / "nvcav_formats";
  std::filesystem::create_directories(dir);
  const auto s = sample_stream(true);
  {
    std::ofstream f(dir / "s.csv");
    write_csv(f, s);
    std::ofstream g(dir / "s.nvclk", std::ios::binary);
    write_binary(g, s);
    std::ofstream e(dir / "empty.csv");
  }
  expect_same(s, load_stream((dir / "s.csv").string()));
  expect_same(s, load_stream((dir / "s.nvclk").string()));
  EXPECT_THROW(load_stream((dir / "empty.csv").string()), FormatError);
  EXPECT_THROW(load_stream((dir / "absent.csv").string()), FormatError);
  std::filesystem::remove_all(dir);
}

// Configuration ---------------------------------------------------------------------

TEST(Config, DefaultsAreValid) {
  const Config c;
  EXPECT_NO_THROW(validate(c));
  EXPECT_EQ(c.core.beta0, 0.03);
  EXPECT_EQ(c.run.seed, 1u);
}

TEST(Config, SetAndGetOptions) {
  Config c;
  set_option(c, "core.beta0", "0.05");
  set_option(c, "run.seed", " 17 ");
  set_option(c, "run.out_dir", "results/a");
  set_option(c, "background.secondary", "slow_exponential");
  set_option(c, "polarization.iterations", "800");
  EXPECT_EQ(c.core.beta0, 0.05);
  EXPECT_EQ(c.run.seed, 17u);
  EXPECT_EQ(c.run.out_dir, "results/a");
  EXPECT_EQ(c.engine.background.secondary, BackgroundModel::Secondary::SlowExponential);
  EXPECT_EQ(c.climb.iterations, 800u);
  EXPECT_EQ(get_option(c, "core.beta0"), "0.05");
  EXPECT_EQ(get_option(c, "background.secondary"), "slow_exponential");
}

TEST(Config, BadKeysAndValuesNameTheKey) {
  Config c;
  auto key_of = [&](const std::string& k, const std::string& v) {
    try {
      set_option(c, k, v);
    } catch (const ConfigError& e) {
      return e.key;
    }
    return std::string("no error");
  };
  EXPECT_EQ(key_of("rates.nope", "1"), "rates.nope");
  EXPECT_EQ(key_of("nosection", "1"), "nosection");
  EXPECT_EQ(key_of("core.beta0", "abc"), "core.beta0");
  EXPECT_EQ(key_of("core.beta0", "0.1x"), "core.beta0");
  EXPECT_EQ(key_of("run.seed", "-4"), "run.seed");
  EXPECT_EQ(key_of("run.reps", "0"), "run.reps");
  EXPECT_EQ(key_of("background.secondary", "loud"), "background.secondary");
  EXPECT_THROW(get_option(c, "core.nope"), ConfigError);
}

TEST(Config, ValidationRejectsPhysicalNonsense) {
  Config c;
  c.core.beta0 = 0;
  EXPECT_THROW(validate(c), ConfigError);
  c.core.beta0 = 1;
  EXPECT_THROW(validate(c), ConfigError);
  c = Config{};
  c.engine.rates.lifetime_ns = -1;
  EXPECT_THROW(validate(c), ConfigError);
  c = Config{};
  c.cavity.fwhm_ghz = 0;
  EXPECT_THROW(validate(c), ConfigError);
  c = Config{};
  c.run.out_dir.clear();
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(Config, LoadIni) {
  std::istringstream is("; comment\n[core]\nbeta0 = 0.04\n\n[spin]\nrabi_mhz=9.5\n[run]\nseed = 3\n");
  const Config c = load_config(is);
  EXPECT_EQ(c.core.beta0, 0.04);
  EXPECT_EQ(c.rabi_mhz, 9.5);
  EXPECT_EQ(c.run.seed, 3u);
  EXPECT_EQ(c.core.tau_off, 9.5);
}

TEST(Config, LoadIniErrors) {
  std::istringstream unknown("[core]\nbeta7 = 1\n");
  try {
    load_config(unknown);
    FAIL() << "unknown key accepted";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key, "core.beta7");
  }
  std::istringstream malformed("[core\nbeta0 = 1\n");
  EXPECT_THROW(load_config(malformed), ConfigError);
  std::istringstream orphan("beta0 = 1\n");
  EXPECT_THROW(load_config(orphan), ConfigError);
  std::istringstream invalid("[rates]\nzpl_fraction = 1.5\n");
  EXPECT_THROW(load_config(invalid), ConfigError);
  EXPECT_THROW(load_config_file("/nonexistent/nvcav.ini"), ConfigError);
}

TEST(Config, IniRoundTrip) {
  Config c;
  set_option(c, "core.beta0", "0.0312345678901");
  set_option(c, "rates.freq_ey", "-23.1");
  set_option(c, "background.secondary", "weak_emitter");
  const std::string text = to_ini(c);
  std::istringstream is(text);
  const Config d = load_config(is);
  EXPECT_EQ(to_ini(d), text);
  EXPECT_EQ(d.core.beta0, 0.0312345678901);
}

TEST(Config, HashIsStableAndTracksTheModel) {
  const Config a;
  const std::string h = config_hash(a);
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(h.find_first_not_of("0123456789abcdef"), std::string::npos);
  EXPECT_EQ(config_hash(Config{}), h);
  Config b;
  b.run.seed = 99;
  b.run.workers = 4;
  b.run.out_dir = "elsewhere";
  EXPECT_EQ(config_hash(b), h);
  Config d;
  d.engine.rates.spin_flip_prob *= 1 + 1e-12;
  EXPECT_NE(config_hash(d), h);
}

TEST(Config, HashIsFnv1aOfCanonicalText) {
  // Independent FNV-1a 64 over the canonical text with the run section at its defaults.
  Config c;
  c.run.seed = 5;
  Config k = c;
  k.run = RunSettings{};
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : to_ini(k)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  EXPECT_EQ(config_hash(c), buf);
}

// Reports ---------------------------------------------------------------------------

TEST(Report, TextAndKeyValue) {
  ReproReport r;
  r.config_hash = "00ff";
  r.seed = 7;
  r.rows = {{1, "alpha", "1.0", 1.01, 0.0, "+-0.05", true}, {2, "beta", "2.0", 3.0, 0.5, "+-0.1", false}};
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(r.criterion_ok(1));
  EXPECT_FALSE(r.criterion_ok(2));
  EXPECT_FALSE(r.criterion_ok(3));
  EXPECT_EQ(r.failing(), std::vector<std::string>{"beta"});
  EXPECT_EQ(r.criteria(), (std::vector<int>{1, 2}));
  ASSERT_NE(r.find("beta"), nullptr);
  std::ostringstream t, kv;
  write_report_text(t, r);
  write_report_kv(kv, r);
  EXPECT_NE(t.str().find("# config_hash 00ff\n# seed 7\n"), std::string::npos);
  EXPECT_NE(t.str().find("overall FAIL"), std::string::npos);
  EXPECT_NE(t.str().find("3 +- 0.5"), std::string::npos);
  EXPECT_NE(kv.str().find("beta.pass=0\n"), std::string::npos);
  EXPECT_NE(kv.str().find("alpha.value=1.01\n"), std::string::npos);
  EXPECT_NE(kv.str().find("overall.pass=0\n"), std::string::npos);
  EXPECT_FALSE(ReproReport{}.ok());
}

TEST(Report, ExactCriteriaPassOnDefaults) {
  ReproOptions o;
  o.criteria = {2, 3, 4};
  const auto r = reproduce(Config{}, o);
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.criteria(), (std::vector<int>{2, 3, 4}));
}

TEST(Report, BrokenInputFailsTheAffectedRow) {
  Config c;
  c.core.beta0 = 0.3;
  ReproOptions o;
  o.criteria = {1};
  const auto r = reproduce(c, o);
  ASSERT_NE(r.find("purcell_lf"), nullptr);
  EXPECT_FALSE(r.find("purcell_lf")->pass);
}

TEST(Report, ExceptionsBecomeFailingRows) {
  Config c;
  c.lock.gain = 0;  // rejected by the lock validation inside the criterion
  ReproOptions o;
  o.criteria = {12};
  EXPECT_THROW(reproduce(c, o), ConfigError);
  c = Config{};
  c.core.tau_lf = 20;  // longer than off resonance: negative Purcell factor
  o.criteria = {1};
  const auto r = reproduce(c, o);
  ASSERT_NE(r.find("criterion_1_error"), nullptr);
  EXPECT_FALSE(r.ok());
}

// Dense CW reference ------------------------------------------------------------------

TEST(Dense, MatchesIndependentGenerator) {
  const RateModel r;
  for (double laser : {r.freq_ey, r.freq_e1, -25.0})
    for (double power : {0.2, 5.0, 200.0})
      for (double t : {0.0, 50.0, 5000.0}) {
        const auto a = cw_populations(r, laser, power, t, repump_populations(r));
        const auto b = oracle::propagate(oracle::generator(r, laser, power), oracle::after_repump(r), t);
        double sum = 0;
        for (int i = 0; i < 7; ++i) {
          EXPECT_NEAR(a[static_cast<std::size_t>(i)], b[i], 1e-10) << laser << ' ' << power << ' ' << t << ' ' << i;
          sum += a[static_cast<std::size_t>(i)];
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
}

TEST(Dense, GeneratorColumnsSumToZero) {
  const auto q = cw_rate_matrix(RateModel{}, RateModel{}.freq_ey, 50.0);
  for (int j = 0; j < 7; ++j) EXPECT_NEAR(q.col(j).sum(), 0.0, 1e-12);
  EXPECT_THROW(cw_populations(RateModel{}, 0, 1, -1, repump_populations(RateModel{})), InvalidParameter);
}
