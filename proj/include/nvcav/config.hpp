#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "nvcav/cavity/cavity.hpp"
#include "nvcav/control/lock.hpp"
#include "nvcav/control/polarization.hpp"
#include "nvcav/core_model.hpp"
#include "nvcav/dynamics/engine.hpp"
#include "nvcav/errors.hpp"
#include "nvcav/spin/qubit.hpp"

namespace nvcav {

/// Measured inputs of the emitter-cavity ledger.
struct CoreInputs {
  double beta0 = 0.03;
  double tau_off = 9.5, tau_off_sigma = 0.4;
  double tau_lf = 7.8, tau_lf_sigma = 0.2;
  double bulk_lifetime = 12.4;
  double gyromagnetic = 1.0705;  // kHz/G, carbon-13
  double b_field = 37.5;         // G
};

struct CavityInputs {
  CavityGeometry geometry;
  double center_thz = kAnchorTHz;
  double fwhm_ghz = 1.69;
  double wavelength_nm = 637.0;
  double vibration_rms_pm = 22.0;
  double dispersion_slope = 34.0;
};

struct RunSettings {
  std::uint64_t seed = 1;
  std::uint64_t repetitions = 0;  // 0 until set: the experiment default applies
  unsigned workers = 0;
  std::string out_dir = ".";
};

struct Config {
  RunSettings run;
  CoreInputs core;
  CavityInputs cavity;
  EngineModel engine;
  CavityCoupling coupling;
  NoiseModel noise;
  double rabi_mhz = 10.73;
  double ramsey_detuning_mhz = 50.0;
  LockPlant lock;
  PolarizationPlant polarization;
  HillClimbOptions climb;
};

namespace detail {

using FieldRef = std::variant<double*, unsigned*, int*, std::uint64_t*, std::string*, BackgroundModel::Secondary*>;

struct Field {
  std::string section, key;
  FieldRef ref;
  std::string name() const { return section + "." + key; }
};

inline std::vector<Field> fields(Config& c) {
  std::vector<Field> f;
  auto add = [&](const char* s, const char* k, FieldRef r) { f.push_back({s, k, r}); };
  add("run", "seed", &c.run.seed);
  add("run", "reps", &c.run.repetitions);
  add("run", "workers", &c.run.workers);
  add("run", "out_dir", &c.run.out_dir);

  auto& co = c.core;
  add("core", "beta0", &co.beta0);
  add("core", "tau_off", &co.tau_off);
  add("core", "tau_off_sigma", &co.tau_off_sigma);
  add("core", "tau_lf", &co.tau_lf);
  add("core", "tau_lf_sigma", &co.tau_lf_sigma);
  add("core", "bulk_lifetime", &co.bulk_lifetime);
  add("core", "gyromagnetic", &co.gyromagnetic);
  add("core", "b_field", &co.b_field);

  auto& cv = c.cavity;
  add("cavity", "center_thz", &cv.center_thz);
  add("cavity", "fwhm_ghz", &cv.fwhm_ghz);
  add("cavity", "wavelength_nm", &cv.wavelength_nm);
  add("cavity", "vibration_rms_pm", &cv.vibration_rms_pm);
  add("cavity", "dispersion_slope", &cv.dispersion_slope);
  add("cavity", "air_gap", &cv.geometry.air_gap);
  add("cavity", "diamond_thickness", &cv.geometry.diamond_thickness);
  add("cavity", "bond_gap", &cv.geometry.bond_gap);
  add("cavity", "roc_fiber", &cv.geometry.roc_fiber);
  add("cavity", "mode_number_q", &cv.geometry.mode_number_q);
  add("cavity", "mirror_fiber_T", &cv.geometry.mirror_fiber_T);
  add("cavity", "mirror_sample_T", &cv.geometry.mirror_sample_T);
  add("cavity", "extra_losses", &cv.geometry.extra_losses);
  add("cavity", "effective_length", &cv.geometry.effective_length);

  auto& r = c.engine.rates;
  add("rates", "lifetime_ns", &r.lifetime_ns);
  add("rates", "zpl_fraction", &r.zpl_fraction);
  add("rates", "extra_rate", &r.extra_rate);
  add("rates", "spin_flip_prob", &r.spin_flip_prob);
  add("rates", "singlet_lifetime_ns", &r.singlet_lifetime_ns);
  add("rates", "singlet_to_g0", &r.singlet_to_g0);
  add("rates", "emission_delay_ns", &r.emission_delay_ns);
  add("rates", "p_pi_uW", &r.p_pi_uW);
  add("rates", "cal_power_uW", &r.cal_power_uW);
  add("rates", "pump_return_prob", &r.pump_return_prob);
  add("rates", "init_ref_power_nW", &r.init_ref_power_nW);
  add("rates", "init_rate_sum_per_us", &r.init_rate_sum_per_us);
  add("rates", "init_steady_g0", &r.init_steady_g0);
  add("rates", "repump_success", &r.repump_success);
  add("rates", "repump_g0", &r.repump_g0);
  add("rates", "p_sat_nW", &r.p_sat_nW);
  add("rates", "ey_lorentz_mhz", &r.ey_lorentz_mhz);
  add("rates", "ey_inhomogeneous_mhz", &r.ey_inhomogeneous_mhz);
  add("rates", "ex_lorentz_mhz", &r.ex_lorentz_mhz);
  add("rates", "e12_lorentz_mhz", &r.e12_lorentz_mhz);
  add("rates", "freq_ey", &r.freq_ey);
  add("rates", "freq_ex", &r.freq_ex);
  add("rates", "freq_e1", &r.freq_e1);
  add("rates", "freq_e2", &r.freq_e2);

  auto& ch = c.engine.chain;
  add("efficiency", "beta_zpl_mode", &ch.beta_zpl_mode);
  add("efficiency", "cavity_outcoupling", &ch.cavity_outcoupling);
  add("efficiency", "path_collection", &ch.path_collection);
  add("efficiency", "detector_qe", &ch.detector_qe);
  add("efficiency", "window_fraction", &ch.window_fraction);

  auto& b = c.engine.background;
  add("background", "dark_rate_hz", &b.dark_rate_hz);
  add("background", "leakage_hz_per_nW", &b.leakage_hz_per_nW);
  add("background", "reference_suppression_db", &b.reference_suppression_db);
  add("background", "suppression_db", &b.suppression_db);
  add("background", "prompt_sigma_ns", &b.prompt_sigma_ns);
  add("background", "echo_delay_ns", &b.echo_delay_ns);
  add("background", "echo_ratio", &b.echo_ratio);
  add("background", "secondary", &b.secondary);
  add("background", "secondary_prob", &b.secondary_prob);
  add("background", "secondary_lifetime_ns", &b.secondary_lifetime_ns);

  auto& cp = c.coupling;
  add("coupling", "lifetime_lf", &cp.lifetime_lf);
  add("coupling", "lifetime_hf", &cp.lifetime_hf);
  add("coupling", "lifetime_off", &cp.lifetime_off);
  add("coupling", "purcell_lf", &cp.purcell_lf);
  add("coupling", "off_detuning_ghz", &cp.off_detuning_ghz);
  add("coupling", "kappa_ghz", &cp.kappa_ghz);

  auto& n = c.noise;
  add("spin", "t2_star_ns", &n.t2_star_ns);
  add("spin", "decay_exponent", &n.decay_exponent);
  add("spin", "hyperfine_mhz", &n.hyperfine_mhz);
  add("spin", "nitrogen_m1", &n.nitrogen[0]);
  add("spin", "nitrogen_0", &n.nitrogen[1]);
  add("spin", "nitrogen_p1", &n.nitrogen[2]);
  add("spin", "echo_decay_us", &n.echo_decay_us);
  add("spin", "revival_depth", &n.revival_depth);
  add("spin", "larmor_period_us", &n.larmor_period_us);
  add("spin", "pi_fidelity", &n.pi_fidelity);
  add("spin", "rabi_mhz", &c.rabi_mhz);
  add("spin", "ramsey_detuning_mhz", &c.ramsey_detuning_mhz);

  auto& l = c.lock;
  add("lock", "fwhm_pm", &l.fwhm_pm);
  add("lock", "vibration_rms_pm", &l.vibration_rms_pm);
  add("lock", "dispersion_slope", &l.dispersion_slope);
  add("lock", "peak_rate_hz", &l.peak_rate_hz);
  add("lock", "probe_us", &l.probe_us);
  add("lock", "probes_per_update", &l.probes_per_update);
  add("lock", "loop_period_s", &l.loop_period_s);
  add("lock", "drift_pm_per_s", &l.drift_pm_per_s);
  add("lock", "gain", &l.gain);
  add("lock", "setpoint_counts", &l.setpoint_counts);
  add("lock", "slope_calibration", &l.slope_calibration);

  auto& p = c.polarization;
  add("polarization", "input_angle", &p.input_angle);
  add("polarization", "pbs_angle", &p.pbs_angle);
  add("polarization", "analyzer_angle", &p.analyzer_angle);
  add("polarization", "cavity_axis", &p.cavity_axis);
  add("polarization", "cavity_retardance", &p.cavity_retardance);
  add("polarization", "iterations", &c.climb.iterations);
  add("polarization", "initial_step", &c.climb.initial_step);
  add("polarization", "shrink", &c.climb.shrink);
  add("polarization", "step_floor", &c.climb.floor);
  add("polarization", "iteration_period_s", &c.climb.iteration_period_s);
  return f;
}

inline const char* to_string(BackgroundModel::Secondary s) {
  switch (s) {
    case BackgroundModel::Secondary::Off: return "off";
    case BackgroundModel::Secondary::WeakEmitter: return "weak_emitter";
    case BackgroundModel::Secondary::SlowExponential: return "slow_exponential";
  }
  return "off";
}

inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  return std::string(buf, r.ptr);
}

template <class T>
T parse_integer(const std::string& key, const std::string& s) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) throw ConfigError(key, "expected a non-negative integer, got '" + s + "'");
  return v;
}

inline void assign(const Field& f, const std::string& raw) {
  const std::string key = f.name();
  std::string s = raw;
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, double>) {
          double v = 0;
          const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
          if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) throw ConfigError(key, "expected a number, got '" + s + "'");
          *p = v;
        } else if constexpr (std::is_same_v<T, std::string>) {
          *p = s;
        } else if constexpr (std::is_same_v<T, BackgroundModel::Secondary>) {
          if (s == "off") *p = BackgroundModel::Secondary::Off;
          else if (s == "weak_emitter") *p = BackgroundModel::Secondary::WeakEmitter;
          else if (s == "slow_exponential") *p = BackgroundModel::Secondary::SlowExponential;
          else throw ConfigError(key, "expected off, weak_emitter or slow_exponential");
        } else {
          *p = parse_integer<T>(key, s);
        }
      },
      f.ref);
}

inline std::string render(const Field& f) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, double>) return format_double(*p);
        else if constexpr (std::is_same_v<T, std::string>) return *p;
        else if constexpr (std::is_same_v<T, BackgroundModel::Secondary>) return to_string(*p);
        else return std::to_string(*p);
      },
      f.ref);
}

}  // namespace detail

/// Sets `section.key` from its text form.
inline void set_option(Config& c, const std::string& dotted, const std::string& value) {
  const auto dot = dotted.find('.');
  if (dot == std::string::npos) throw ConfigError(dotted, "expected section.key");
  for (const auto& f : detail::fields(c))
    if (f.name() == dotted) {
      detail::assign(f, value);
      if (dotted == "run.reps" && c.run.repetitions == 0) throw ConfigError(dotted, "must be at least 1");
      return;
    }
  throw ConfigError(dotted, "unknown configuration key");
}

inline std::string get_option(Config& c, const std::string& dotted) {
  for (const auto& f : detail::fields(c))
    if (f.name() == dotted) return detail::render(f);
  throw ConfigError(dotted, "unknown configuration key");
}

/// Checks the cross-field constraints that the model structs do not cover themselves.
inline void validate(const Config& c) {
  auto fail = [](const char* key, const std::string& what) { throw ConfigError(key, what); };
  try {
    c.engine.validate();
  } catch (const InvalidParameter& e) {
    fail("rates", e.what());
  }
  try {
    c.noise.validate();
  } catch (const InvalidParameter& e) {
    fail("spin", e.what());
  }
  try {
    c.cavity.geometry.validate();
  } catch (const InvalidParameter& e) {
    fail("cavity", e.what());
  }
  try {
    c.lock.validate();
  } catch (const InvalidParameter& e) {
    fail("lock", e.what());
  }
  try {
    c.polarization.validate();
  } catch (const InvalidParameter& e) {
    fail("polarization", e.what());
  }
  if (!(c.core.beta0 > 0 && c.core.beta0 < 1)) fail("core.beta0", "must lie in (0, 1)");
  if (!(c.core.tau_off > 0 && c.core.tau_lf > 0)) fail("core.tau_off", "lifetimes must be positive");
  if (!(c.cavity.fwhm_ghz > 0)) fail("cavity.fwhm_ghz", "must be positive");
  if (!(c.rabi_mhz > 0)) fail("spin.rabi_mhz", "must be positive");
  if (c.run.out_dir.empty()) fail("run.out_dir", "must not be empty");
}

/// Reads an INI file; every key must be known.
inline Config load_config(std::istream& is, Config c = {}) {
  boost::property_tree::ptree t;
  try {
    boost::property_tree::ini_parser::read_ini(is, t);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("", std::string("malformed configuration: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [section, body] : t) {
    if (body.empty() && !body.data().empty()) throw ConfigError(section, "key outside of any section");
    for (const auto& [key, v] : body) set_option(c, section + "." + key, v.data());
  }
  validate(c);
  return c;
}

inline Config load_config_file(const std::string& path, Config c = {}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("", "cannot open configuration file " + path);
  return load_config(f, std::move(c));
}

/// Canonical INI text of the effective configuration; sections and keys in a fixed order.
inline std::string to_ini(Config c) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : detail::fields(c)) {
    if (f.name() == "run.reps" && c.run.repetitions == 0) continue;  // unset
    if (f.section != section) {
      if (!section.empty()) os << '\n';
      section = f.section;
      os << '[' << section << "]\n";
    }
    os << f.key << " = " << detail::render(f) << '\n';
  }
  return os.str();
}

/// 64-bit FNV-1a of the canonical text, excluding the run section so that
/// seeds and output paths do not change the model identity.
inline std::string config_hash(const Config& c) {
  Config k = c;
  k.run = RunSettings{};
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_ini(k)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace nvcav
