#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nvcav/cavity/cavity.hpp"
#include "nvcav/config.hpp"
#include "nvcav/control/lock.hpp"
#include "nvcav/control/polarization.hpp"
#include "nvcav/core_model.hpp"
#include "nvcav/dynamics/calibration.hpp"
#include "nvcav/dynamics/experiments.hpp"
#include "nvcav/repro.hpp"
#include "nvcav/spin/protocols.hpp"
#include "nvcav/version.hpp"

using namespace nvcav;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 2, kInput = 3, kFit = 4, kRepro = 5 };

struct Globals {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed, reps;
  std::optional<unsigned> workers;
  std::string out;
};

/// File, then environment, then --set, then the dedicated flags.
Config effective_config(const Globals& g) {
  Config c;
  if (!g.config.empty()) c = load_config_file(g.config);
  if (const char* e = std::getenv("NVCAV_OUT_DIR"); e && *e) set_option(c, "run.out_dir", e);
  if (const char* e = std::getenv("NVCAV_WORKERS"); e && *e) set_option(c, "run.workers", e);
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(s, "expected section.key=value");
    set_option(c, s.substr(0, eq), s.substr(eq + 1));
  }
  if (g.seed) c.run.seed = *g.seed;
  if (g.reps) {
    if (*g.reps == 0) throw ConfigError("run.reps", "must be at least 1");
    c.run.repetitions = *g.reps;
  }
  if (g.workers) c.run.workers = *g.workers;
  if (!g.out.empty()) c.run.out_dir = g.out;
  validate(c);
  return c;
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

/// Collects the files and key=value summary of one command.
class Output {
 public:
  Output(const Config& c, std::string name, std::uint64_t reps) : c_(c), name_(std::move(name)), reps_(reps) {}

  fs::path path(const std::string& file) const {
    fs::create_directories(c_.run.out_dir);
    return fs::path(c_.run.out_dir) / file;
  }

  void header(std::ostream& os) const {
    os << "# nvcav " << kVersion << "\n# experiment " << name_ << "\n# config_hash " << config_hash(c_) << "\n# seed " << c_.run.seed
       << "\n# repetitions " << reps_ << '\n';
  }

  void stream(ClickStream s, bool binary) {
    s.header.config_hash = config_hash(c_);
    const auto p = path(name_ + (binary ? ".nvclk" : ".csv"));
    std::ofstream f(p, std::ios::binary);
    if (binary) write_binary(f, s);
    else write_csv(f, s);
    files_.push_back(p.string());
  }

  void table(const std::string& file, const std::vector<std::string>& cols, const std::vector<std::vector<double>>& rows) {
    const auto p = path(file);
    std::ofstream f(p);
    header(f);
    for (std::size_t i = 0; i < cols.size(); ++i) f << (i ? "," : "") << cols[i];
    f << '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) f << (i ? "," : "") << num(r[i]);
      f << '\n';
    }
    files_.push_back(p.string());
  }

  void put(const std::string& k, double v) { kv_.emplace_back(k, num(v)); }
  void put(const std::string& k, const std::string& v) { kv_.emplace_back(k, v); }

  /// Writes <name>_summary.txt (header, results, effective configuration) and echoes the results.
  void finish() {
    const auto p = path(name_ + "_summary.txt");
    std::ofstream f(p);
    header(f);
    for (const auto& [k, v] : kv_) f << k << '=' << v << '\n';
    f << "# effective configuration\n";
    std::istringstream ini(to_ini(c_));
    for (std::string line; std::getline(ini, line);) f << "# " << line << '\n';
    std::cout << "nvcav " << kVersion << "  " << name_ << "  config " << config_hash(c_) << "  seed " << c_.run.seed << "  reps "
              << reps_ << '\n';
    for (const auto& [k, v] : kv_) std::cout << k << '=' << v << '\n';
    for (const auto& file : files_) std::cout << "wrote " << file << '\n';
    std::cout << "wrote " << p.string() << '\n';
  }

 private:
  const Config& c_;
  std::string name_;
  std::uint64_t reps_;
  std::vector<std::pair<std::string, std::string>> kv_;
  std::vector<std::string> files_;
};

std::vector<double> grid(double lo, double hi, double step) {
  std::vector<double> g;
  for (int i = 0; lo + i * step <= hi + 1e-9 * step; ++i) g.push_back(lo + i * step);
  return g;
}

CavitySetting parse_setting(const std::string& s) {
  if (s == "LF" || s == "lf") return CavitySetting::LF;
  if (s == "HF" || s == "hf") return CavitySetting::HF;
  if (s == "off") return CavitySetting::OffResonance;
  throw InvalidParameter("unknown cavity setting '" + s + "' (LF, HF or off)");
}

Basis parse_basis(const std::string& s) {
  if (s == "Z" || s == "z") return Basis::Z;
  if (s == "X" || s == "x") return Basis::X;
  throw InvalidParameter("unknown readout basis '" + s + "' (Z or X)");
}

struct SimulateArgs {
  std::string experiment;
  std::string setting = "LF";
  std::string variant = "ey";
  std::string basis = "Z";
  std::vector<double> powers;
  double duration_s = 3600.0;
  bool binary = false;
};

const std::map<std::string, std::uint64_t> kDefaultReps = {
    {"lifetime", 100000}, {"saturation", 100000}, {"hbt", 1000000}, {"ple", 20000},  {"spin_pump", 100000},
    {"spin_init", 10000}, {"cw_sat", 60000},      {"rabi", 10000},  {"ramsey", 20000}, {"echo", 5000},
    {"esr", 2000},        {"bell", 1000000},      {"ghz", 1000000}, {"lock", 1},      {"polarization", 100}};

void spin_table(Output& out, const std::string& file, const std::string& xname, const std::vector<SpinPoint>& pts) {
  std::vector<std::vector<double>> rows;
  for (const auto& p : pts) rows.push_back({p.x, p.click.p, p.click.sigma, p.p0.p0, p.p0.sigma, p.expected_click});
  out.table(file, {xname, "click_p", "click_sigma", "p0", "p0_sigma", "expected_click"}, rows);
}

int simulate(const Config& c, const SimulateArgs& a) {
  const auto it = kDefaultReps.find(a.experiment);
  if (it == kDefaultReps.end()) throw std::logic_error("unreachable");
  const std::uint64_t reps = c.run.repetitions ? c.run.repetitions : it->second;
  const RunOptions r{c.run.seed, reps, c.run.workers};
  SpinRunOptions sr;
  sr.seed = c.run.seed;
  sr.repetitions = reps;
  sr.workers = c.run.workers;
  Output out(c, a.experiment, reps);
  const std::string& e = a.experiment;

  if (e == "lifetime") {
    const auto s = parse_setting(a.setting);
    const auto run = lifetime_experiment(detail::setting_model(c, s), r, {}, s == CavitySetting::HF ? 20.0 : 100.0);
    out.stream(run.sim.stream, a.binary);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < run.fit.net.size(); ++i) rows.push_back({run.fit.net.center(i), run.fit.net.counts[i]});
    out.table("lifetime_hist.csv", {"t_ns", "net_counts"}, rows);
    out.put("setting", to_string(s));
    out.put("tau_ns", run.fit.tau);
    out.put("tau_sigma_ns", run.fit.sigma);
    out.put("reduced_chi2", run.fit.fit.reduced_chi2());
  } else if (e == "saturation") {
    const auto powers = a.powers.empty() ? std::vector<double>{5, 10, 20, 35, 50, 75, 100} : a.powers;
    const auto pts = saturation_experiment(c.engine, powers, r);
    std::vector<std::vector<double>> rows;
    for (const auto& p : pts) rows.push_back({p.power_uW, p.click.p, p.click.sigma, p.expected});
    out.table("saturation.csv", {"power_uW", "click_p", "click_sigma", "expected"}, rows);
    for (const auto& p : pts) out.put("click_p@" + num(p.power_uW) + "uW", p.click.p);
  } else if (e == "hbt") {
    const auto run = hbt_experiment(c.engine, r);
    out.stream(run.sim.stream, a.binary);
    const auto f = fit_g2(run.histogram);
    std::vector<std::vector<double>> rows;
    for (int dn = -run.histogram.max_dn(); dn <= run.histogram.max_dn(); ++dn)
      rows.push_back({static_cast<double>(dn), run.histogram.at(dn), f.envelope(dn)});
    out.table("hbt_g2.csv", {"dn", "coincidences", "envelope"}, rows);
    out.put("g2_zero", f.g2_zero);
    out.put("g2_sigma", f.g2_sigma);
    out.put("flip_rate_per_pulse", f.flip_rate);
  } else if (e == "ple") {
    const auto v = parse_ple_variant(a.variant);
    const auto& rt = c.engine.rates;
    std::vector<double> f;
    if (v == PleVariant::EyDirect) f = grid(rt.freq_ey - 0.12, rt.freq_ey + 0.12, 0.01);
    else if (v == PleVariant::E1E2PumpProbe) f = grid(std::min(rt.freq_e1, rt.freq_e2) - 1.0, std::max(rt.freq_e1, rt.freq_e2) + 1.0, 0.25);
    else f = grid(rt.freq_ex - 0.2, rt.freq_ex + 0.2, 0.02);
    const auto p = ple_experiment(c.engine, v, f, r);
    std::vector<std::vector<double>> rows;
    for (const auto& q : p.points) rows.push_back({q.laser_ghz, q.signal, q.sigma, q.raw, q.fitted ? 1.0 : 0.0});
    out.table("ple.csv", {"laser_ghz", "signal", "sigma", "raw", "fitted"}, rows);
    out.put("variant", a.variant);
    if (p.gaussian) {
      out.put("center_mhz", p.gaussian->center);
      out.put("fwhm_mhz", p.gaussian->fwhm());
      out.put("fwhm_sigma_mhz", p.gaussian->fwhm_error());
    }
  } else if (e == "spin_pump") {
    const auto p = spin_pumping_experiment(c.engine, r);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < p.pulse.size(); ++i) rows.push_back({p.pulse[i], p.counts[i], p.expected[i]});
    out.table("spin_pump.csv", {"pulse", "counts", "expected"}, rows);
    out.put("floor_fidelity", p.floor_fidelity);
    out.put("T_fast_pulses", p.fit.T_fast);
    out.put("T_slow_pulses", p.fit.T_slow);
  } else if (e == "spin_init") {
    const auto p = spin_init_experiment(c.engine, grid(0, 60, 3), r);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < p.duration_us.size(); ++i) rows.push_back({p.duration_us[i], p.counts[i], p.expected[i]});
    out.table("spin_init.csv", {"duration_us", "counts", "expected"}, rows);
    if (p.fit) out.put("time_constant_us", p.fit->time_constant);
  } else if (e == "cw_sat") {
    const auto powers = a.powers.empty() ? std::vector<double>{25, 50, 100, 200, 400, 800, 1600} : a.powers;
    const auto s = cw_saturation_experiment(c.engine, powers, r);
    std::vector<std::vector<double>> rows;
    for (const auto& t : s.traces) rows.push_back({t.power_nW, t.amplitude_sum, t.amplitude_sigma});
    out.table("cw_sat.csv", {"power_nW", "amplitude", "amplitude_sigma"}, rows);
    if (s.saturation) {
      out.put("p_sat_nW", s.saturation->p_sat);
      out.put("p_sat_sigma_nW", s.saturation->sigma_p_sat);
    }
  } else if (e == "rabi") {
    const auto res = rabi_experiment(c.engine, c.noise, grid(0, 300, 5), sr, c.rabi_mhz);
    spin_table(out, "rabi.csv", "duration_ns", res.points);
    if (res.fit) {
      out.put("rabi_mhz", res.fit->frequency_mhz);
      out.put("rabi_sigma_mhz", res.fit->sigma_mhz);
    }
    out.put("pi_fidelity_estimate", res.pi_fidelity_estimate);
  } else if (e == "ramsey") {
    const auto res = ramsey_experiment(c.engine, c.noise, grid(0, 400, 5), sr, c.ramsey_detuning_mhz);
    spin_table(out, "ramsey.csv", "delay_ns", res.points);
    if (res.fit) {
      out.put("t2_star_ns", res.fit->t2);
      out.put("t2_star_sigma_ns", res.fit->t2_sigma);
      out.put("decay_exponent", res.fit->n);
      out.put("beat_mhz", res.fit->beat_mhz);
    }
  } else if (e == "echo") {
    const auto res = hahn_echo_experiment(c.engine, c.noise, grid(0, 90, 1), sr);
    spin_table(out, "echo.csv", "tau_half_us", res.points);
    if (res.fit) {
      out.put("larmor_period_us", res.fit->larmor_period);
      out.put("larmor_sigma_us", res.fit->sigma_larmor);
      out.put("t_decay_us", res.fit->t_decay);
    }
    for (std::size_t j = 0; j < res.revivals_us.size(); ++j) out.put("revival_" + std::to_string(j + 1) + "_us", res.revivals_us[j]);
  } else if (e == "esr") {
    const auto res = esr_experiment(c.engine, c.noise, grid(-8, 8, 0.1), sr);
    spin_table(out, "esr.csv", "offset_mhz", res.points);
    for (std::size_t j = 0; j < res.dips_mhz.size(); ++j) out.put("dip_" + std::to_string(j + 1) + "_mhz", res.dips_mhz[j]);
    if (!res.dips_mhz.empty()) out.put("dip_width_mhz", res.dip_width_mhz);
  } else if (e == "bell" || e == "ghz") {
    const auto res = e == "bell" ? bell_protocol(c.engine, c.noise, r, parse_basis(a.basis)) : ghz_protocol(c.engine, c.noise, r);
    const auto p = out.path(e + "_heralds.csv");
    {
      std::ofstream f(p);
      out.header(f);
      f << "rep,pattern,readout_click\n";
      for (const auto& h : res.records) f << h.rep << ',' << h.pattern << ',' << (h.readout_click ? 1 : 0) << '\n';
    }
    std::cout << "wrote " << p.string() << '\n';
    if (e == "bell") out.put("basis", a.basis);
    out.put("herald_rate", res.herald_rate.p);
    out.put("herald_rate_sigma", res.herald_rate.sigma);
    for (const auto& row : res.table.rows) {
      out.put(row.pattern + ".heralds", static_cast<double>(row.heralds));
      out.put(row.pattern + ".P0", row.spin.p0);
      out.put(row.pattern + ".P1", row.spin.p1);
      out.put(row.pattern + ".sigma", row.spin.sigma);
    }
  } else if (e == "lock") {
    const auto t = run_lock(c.lock, a.duration_s, c.run.seed);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < t.t_s.size(); ++i) rows.push_back({t.t_s[i], t.error_pm[i], t.counts[i]});
    out.table("lock.csv", {"t_s", "error_pm", "counts"}, rows);
    out.put("rms_pm", t.rms_pm);
    out.put("rms_mhz", t.rms_mhz);
    out.put("mean_pm", t.mean_pm);
    out.put("fwhm_pm", c.lock.fwhm_pm);
    out.put("stable", t.stable ? "1" : "0");
    out.put("lost_lock", t.lost_lock ? "1" : "0");
  } else if (e == "polarization") {
    std::vector<HillClimbResult> res(reps);
    parallel_for(reps, c.run.workers, [&](std::size_t s) { res[s] = hill_climb(random_start(c.polarization, c.run.seed + s), c.climb); });
    std::vector<std::vector<double>> rows, trace;
    std::uint64_t ok = 0;
    for (std::size_t s = 0; s < res.size(); ++s) {
      rows.push_back({static_cast<double>(s), suppression_db(random_start(c.polarization, c.run.seed + s)), res[s].final_db});
      if (res[s].final_db >= 60) ++ok;
    }
    for (std::size_t i = 0; i < res[0].best_db.size(); ++i) {
      const auto& ang = res[0].angles[i];
      trace.push_back({static_cast<double>(i), ang[0], ang[1], ang[2], ang[3], res[0].best_db[i]});
    }
    out.table("polarization.csv", {"trial", "start_db", "final_db"}, rows);
    out.table("polarization_trace.csv", {"iteration", "qwp1", "hwp1", "hwp2", "qwp2", "best_db"}, trace);
    out.put("trials", static_cast<double>(reps));
    out.put("trials_above_60db", static_cast<double>(ok));
  }
  out.finish();
  return kOk;
}

// fit ----------------------------------------------------------------------------

struct FitArgs {
  std::string model, input;
  double window_lo = 5.0, window_hi = 18.0;
  std::string background = "first_minus_last";
  double tau_guess = 8.0;
  double detuning_mhz = 50.0, t2_guess = 170.0, n_guess = 1.0, beat_guess = 2.16;
  bool carbon = false;
  double larmor_guess = 25.0, t_guess = 100.0;
};

struct Table {
  std::vector<double> x, y, s;
};

/// Two or three numeric columns; `#` comments and one text header line are skipped.
Table read_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open " + path);
  Table t;
  bool header_seen = false;
  std::size_t lineno = 0;
  for (std::string line; std::getline(f, line);) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> v;
    std::stringstream ss(line);
    bool numeric = true;
    for (std::string cell; std::getline(ss, cell, ',');) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (header_seen || !t.x.empty()) throw FormatError(path + ":" + std::to_string(lineno) + ": non-numeric row");
      header_seen = true;
      continue;
    }
    if (v.size() < 2) throw FormatError(path + ":" + std::to_string(lineno) + ": expected at least x,y");
    t.x.push_back(v[0]);
    t.y.push_back(v[1]);
    if (v.size() >= 3) t.s.push_back(v[2]);
  }
  if (t.x.empty()) throw FormatError("no data rows in " + path);
  if (!t.s.empty() && t.s.size() != t.x.size()) throw FormatError("sigma column present on some rows only in " + path);
  return t;
}

void print_fit(Output& out, const FitResult& f) {
  if (!f.converged) throw FitFailure("fit did not converge: " + f.message);
  for (std::size_t i = 0; i < f.names.size(); ++i) {
    out.put(f.names[i], f.params[static_cast<Eigen::Index>(i)]);
    out.put(f.names[i] + "_sigma", f.error(f.names[i]));
  }
  out.put("reduced_chi2", f.reduced_chi2());
  out.put("iterations", static_cast<double>(f.iterations));
}

int fit(const Config& c, const FitArgs& a) {
  Output out(c, "fit_" + a.model, 0);
  out.put("input", a.input);
  const auto& m = a.model;
  if (m == "lifetime" || m == "monoexp") {
    LifetimeOptions o;
    o.window_lo = a.window_lo;
    o.window_hi = a.window_hi;
    o.tau_guess = a.tau_guess;
    if (a.background == "none") o.background = Background::None;
    else if (a.background == "first_minus_last") o.background = Background::FirstMinusLast;
    else if (a.background == "fit_offset") o.background = Background::FitOffset;
    else throw InvalidParameter("unknown background scheme '" + a.background + "'");
    const auto f = fit_lifetime(load_stream(a.input), o);
    print_fit(out, f.fit);
    out.put("tau_ns", f.tau);
    out.put("tau_sigma_ns", f.sigma);
  } else if (m == "g2") {
    const auto f = fit_g2(hbt_coincidences(load_stream(a.input)));
    print_fit(out, f.fit);
    out.put("g2_zero", f.g2_zero);
    out.put("g2_sigma", f.g2_sigma);
  } else {
    const auto t = read_table(a.input);
    if (m == "exp_offset") {
      print_fit(out, fit_exp_offset(t.x, t.y, t.s).fit);
    } else if (m == "double_exp") {
      const auto f = fit_double_exp_offset(t.x, t.y, t.s);
      print_fit(out, f.fit);
      out.put("floor_fidelity", pumping_floor_fidelity(f));
    } else if (m == "saturation") {
      print_fit(out, fit_saturation(t.x, t.y, t.s).fit);
    } else if (m == "gaussian") {
      const auto f = fit_gaussian(t.x, t.y, t.s);
      print_fit(out, f.fit);
      out.put("fwhm", f.fwhm());
    } else if (m == "rabi") {
      print_fit(out, fit_rabi(t.x, t.y, t.s).fit);
    } else if (m == "ramsey") {
      RamseyOptions o;
      o.model = a.carbon ? RamseyModel::CarbonPair : RamseyModel::NitrogenTriplet;
      o.detuning_mhz = a.detuning_mhz;
      o.t2_guess_ns = a.t2_guess;
      o.n_guess = a.n_guess;
      o.beat_guess_mhz = a.beat_guess;
      const auto f = fit_ramsey(t.x, t.y, t.s.empty() ? std::vector<double>(t.x.size(), 1.0) : t.s, o);
      print_fit(out, f.fit);
      out.put("beat_identifiable", f.beat_identifiable ? "1" : "0");
    } else if (m == "echo") {
      print_fit(out, fit_echo(t.x, t.y, t.s.empty() ? std::vector<double>(t.x.size(), 1.0) : t.s, a.larmor_guess, a.t_guess).fit);
    } else {
      throw std::logic_error("unreachable");
    }
  }
  out.finish();
  return kOk;
}

// budget, cavity, calibrate ---------------------------------------------------------

int budget(const Config& c) {
  const auto f = purcell_factor(Measured{c.core.tau_off, c.core.tau_off_sigma}, Measured{c.core.tau_lf, c.core.tau_lf_sigma}, c.core.beta0);
  EfficiencyChain ch = c.engine.chain;
  ch.beta_zpl_mode = zpl_branching(detail::round_to(f.value, 1), c.core.beta0);
  const auto b = click_budget(ch);
  Output out(c, "budget", 0);
  out.put("purcell_lf", f.value);
  out.put("purcell_lf_sigma", f.sigma);
  out.put("beta_zpl_mode", ch.beta_zpl_mode);
  out.put("cavity_outcoupling", ch.cavity_outcoupling);
  out.put("outcoupled_zpl", b.outcoupled);
  out.put("path_collection", ch.path_collection);
  out.put("detector_qe", ch.detector_qe);
  out.put("window_fraction", ch.window_fraction);
  out.put("click_probability", b.total);
  std::cout << std::fixed << std::setprecision(1) << "ZPL into mode " << 100 * ch.beta_zpl_mode << "% -> out of cavity "
            << 100 * b.outcoupled << "% -> click " << std::setprecision(2) << 100 * b.total << "%\n"
            << std::defaultfloat;
  out.finish();
  return kOk;
}

int cavity(const Config& c) {
  const Constants k;
  const auto& g = c.cavity.geometry;
  const auto s = spectral_params(c.cavity.center_thz, c.cavity.fwhm_ghz, g, k);
  const auto mg = mode_geometry(g.effective_length, g.roc_fiber, c.cavity.wavelength_nm);
  const double fwhm_g = vibration_gaussian_fwhm({c.cavity.vibration_rms_pm}, c.cavity.dispersion_slope);
  const double fmax = max_purcell(s.Q, mg.mode_volume, k.n_diamond);
  const double favg = vibration_averaged_purcell(fmax, c.cavity.fwhm_ghz, {c.cavity.vibration_rms_pm}, c.cavity.dispersion_slope);
  Output out(c, "cavity", 0);
  out.put("quality_factor", s.Q);
  out.put("finesse", s.finesse);
  out.put("total_losses_ppm", s.total_losses_ppm);
  out.put("extra_losses_ppm", s.extra_losses_ppm);
  out.put("outcoupling", s.outcoupling);
  out.put("waist_um", mg.waist);
  out.put("mode_volume_lambda3", mg.mode_volume);
  out.put("vibration_gaussian_fwhm_ghz", fwhm_g);
  out.put("max_purcell", fmax);
  out.put("vibration_averaged_purcell", favg);
  out.put("offres_lifetime_ns", predicted_offres_lifetime(c.core.bulk_lifetime, c.engine.rates.extra_rate));
  out.put("larmor_period_us", larmor_period(c.core.gyromagnetic, c.core.b_field));
  out.finish();
  return kOk;
}

int calibrate_cmd(const Config& c) {
  const auto res = calibrate(c.engine);
  Output out(c, "calibrate", 0);
  const auto& r = res.model.rates;
  out.put("p_exc", res.p_exc);
  out.put("rates.p_pi_uW", r.p_pi_uW);
  out.put("rates.spin_flip_prob", r.spin_flip_prob);
  out.put("rates.init_steady_g0", r.init_steady_g0);
  out.put("rates.repump_success", r.repump_success);
  out.put("background.dark_rate_hz", res.model.background.dark_rate_hz);
  out.put("window_background", res.window_background);
  const auto& p = res.predicted;
  out.put("predicted.first_pulse_click", p.first_pulse_click);
  out.put("predicted.F0", p.F0);
  out.put("predicted.F1", p.F1);
  out.put("predicted.floor_fidelity", p.floor_fidelity);
  out.put("predicted.heralded_ratio", p.heralded_ratio);
  out.put("predicted.prep_probability", p.prep_probability);
  out.finish();
  return kOk;
}

// reproduce ----------------------------------------------------------------------

std::set<int> parse_criteria(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ',');) {
    if (part.empty()) continue;
    try {
      const auto dash = part.find('-');
      std::size_t used = 0;
      const int a = std::stoi(part.substr(0, dash), &used);
      const int b = dash == std::string::npos ? a : std::stoi(part.substr(dash + 1));
      if (a < 1 || b > 12 || a > b) throw std::out_of_range("range");
      for (int k = a; k <= b; ++k) out.insert(k);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--criteria", "expected numbers 1-12 such as 1-4,11, got '" + part + "'");
    }
  }
  return out;
}

int reproduce_cmd(const Config& c, const std::string& criteria, const std::string& report) {
  ReproOptions o;
  o.criteria = parse_criteria(criteria);
  o.on_row = [](const ReproRow& r) {
    std::cerr << "  [" << std::setw(2) << r.criterion << "] " << std::left << std::setw(36) << r.name << std::right
              << (r.pass ? "ok" : "FAIL") << '\n';
  };
  const auto rep = reproduce(c, o);
  write_report_text(std::cout, rep);
  const fs::path p = report.empty() ? fs::path(c.run.out_dir) / "reproduce.txt" : fs::path(report);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  {
    std::ofstream f(p);
    write_report_text(f, rep);
  }
  {
    std::ofstream f(p.string() + ".kv");
    write_report_kv(f, rep);
  }
  std::cout << "wrote " << p.string() << '\n';
  if (rep.ok()) return kOk;
  std::cerr << "reproduction failed:";
  for (const auto& n : rep.failing()) std::cerr << ' ' << n;
  std::cerr << '\n';
  return kRepro;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nvcav: NV-centre microcavity twin"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "INI configuration file");
  app.add_option("--set", g.sets, "override section.key=value (repeatable)");
  app.add_option("--seed", g.seed, "base RNG seed");
  app.add_option("--reps", g.reps, "repetitions (per scan point for spin scans)");
  app.add_option("--workers", g.workers, "worker threads, 0 = hardware concurrency");
  app.add_option("--out", g.out, "output directory");

  std::vector<std::string> experiments;
  for (const auto& [k, v] : kDefaultReps) experiments.push_back(k);

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "run one experiment and write its data and summary");
  sim->add_option("experiment", sa.experiment, "experiment name")->required()->check(CLI::IsMember(experiments));
  sim->add_option("--setting", sa.setting, "lifetime cavity setting: LF, HF or off");
  sim->add_option("--variant", sa.variant, "PLE variant: ey, e1e2 or ex");
  sim->add_option("--basis", sa.basis, "bell readout basis: Z or X");
  sim->add_option("--powers", sa.powers, "power list (uW for saturation, nW for cw_sat)")->delimiter(',');
  sim->add_option("--duration", sa.duration_s, "lock duration in seconds");
  sim->add_flag("--binary", sa.binary, "write click streams in the binary format");

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "fit a model to a click stream or x,y[,sigma] table");
  fit_cmd
      ->add_option("model", fa.model, "lifetime, g2, exp_offset, double_exp, saturation, gaussian, rabi, ramsey, echo")
      ->required()
      ->check(CLI::IsMember({"lifetime", "monoexp", "g2", "exp_offset", "double_exp", "saturation", "gaussian", "rabi", "ramsey", "echo"}));
  fit_cmd->add_option("input", fa.input, "input file")->required();
  fit_cmd->add_option("--window-lo", fa.window_lo, "lifetime window start (ns)");
  fit_cmd->add_option("--window-hi", fa.window_hi, "lifetime window end (ns)");
  fit_cmd->add_option("--background", fa.background, "none, first_minus_last or fit_offset");
  fit_cmd->add_option("--tau-guess", fa.tau_guess, "initial lifetime (ns)");
  fit_cmd->add_option("--detuning", fa.detuning_mhz, "Ramsey artificial detuning (MHz)");
  fit_cmd->add_option("--t2-guess", fa.t2_guess, "initial T2* (ns)");
  fit_cmd->add_option("--n-guess", fa.n_guess, "initial decay exponent");
  fit_cmd->add_option("--beat-guess", fa.beat_guess, "initial beat frequency (MHz)");
  fit_cmd->add_flag("--carbon", fa.carbon, "Ramsey with a coupled carbon pair instead of the nitrogen triplet");
  fit_cmd->add_option("--larmor-guess", fa.larmor_guess, "initial echo revival period (us)");
  fit_cmd->add_option("--t-guess", fa.t_guess, "initial echo decay time (us)");

  auto* budget_cmd = app.add_subcommand("budget", "photon budget from the measured lifetimes");
  auto* cavity_cmd = app.add_subcommand("cavity", "cavity parameters from the configured geometry");
  auto* cal_cmd = app.add_subcommand("calibrate", "solve the rate model against the calibration observables");
  std::string criteria, report;
  auto* repro = app.add_subcommand("reproduce", "run the reproduction criteria");
  repro->add_option("--criteria", criteria, "criterion list such as 1-4,11 (default all)");
  repro->add_option("--report", report, "report path (default <out>/reproduce.txt)");
  auto* config_cmd = app.add_subcommand("config", "print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    const Config c = effective_config(g);
    if (*sim) return simulate(c, sa);
    if (*fit_cmd) return fit(c, fa);
    if (*budget_cmd) return budget(c);
    if (*cavity_cmd) return cavity(c);
    if (*cal_cmd) return calibrate_cmd(c);
    if (*repro) return reproduce_cmd(c, criteria, report);
    if (*config_cmd) {
      std::cout << "# config_hash " << config_hash(c) << '\n' << to_ini(c);
      return kOk;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "nvcav: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "nvcav: configuration error: " << e.what() << '\n';
    return kInput;
  } catch (const FormatError& e) {
    std::cerr << "nvcav: input error: " << e.what() << '\n';
    return kInput;
  } catch (const FitFailure& e) {
    std::cerr << "nvcav: fit failed: " << e.what() << '\n';
    return kFit;
  } catch (const InvalidParameter& e) {
    std::cerr << "nvcav: invalid parameter: " << e.what() << '\n';
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "nvcav: " << e.what() << '\n';
    return kInput;
  }
  return kUsage;
}
