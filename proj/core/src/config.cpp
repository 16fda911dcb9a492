#include "qpt/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include "qpt/physics.hpp"

namespace qpt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string where(const IniFile& ini, const std::string& section, const std::string& key, int line) {
  std::ostringstream os;
  os << ini.source;
  if (line > 0) os << ":" << line;
  os << ": [" << section << "] " << key;
  return os.str();
}

struct Context {
  const IniFile& ini;
  const std::string& section;
  const std::string& key;
  const IniEntry& entry;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(where(ini, section, key, entry.line) + ": " + what);
  }

  double number() const {
    double v = 0.0;
    const auto& s = entry.value;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) {
      fail("expected a number, got '" + s + "'");
    }
    return v;
  }

  std::uint64_t unsigned_integer() const {
    std::uint64_t v = 0;
    const auto& s = entry.value;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      fail("expected a non-negative integer, got '" + s + "'");
    }
    return v;
  }

  bool boolean() const {
    const auto& s = entry.value;
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    fail("expected true or false, got '" + s + "'");
  }
};

using Setter = std::function<void(RunConfig&, const Context&)>;
using KeyTable = std::map<std::string, Setter>;

Setter real(double SimConfig::*field) {
  return [field](RunConfig& c, const Context& x) { c.sim.*field = x.number(); };
}

KeyTable detector_keys(int d) {
  auto spec_hz = [d](double DetectorSpec::*field) -> Setter {
    return [d, field](RunConfig& c, const Context& x) { c.sim.detectors[d].spec.*field = kTwoPi * x.number(); };
  };
  auto param = [d](double DetectorSimParams::*field) -> Setter {
    return [d, field](RunConfig& c, const Context& x) { c.sim.detectors[d].*field = x.number(); };
  };
  return {
      {"mean_freq_hz", spec_hz(&DetectorSpec::mean_freq)},
      {"splitting_amp_hz",
       [d](RunConfig& c, const Context& x) { c.sim.detectors[d].spec.splitting_amp = x.number(); }},
      {"coupling_hz", spec_hz(&DetectorSpec::coupling)},
      {"nonradiative_hz", spec_hz(&DetectorSpec::nonradiative)},
      {"dephasing_hz", spec_hz(&DetectorSpec::dephasing)},
      {"rabi_hz", [d](RunConfig& c, const Context& x) { c.sim.detectors[d].rabi = kTwoPi * x.number(); }},
      {"rate_slow", param(&DetectorSimParams::rate_slow)},
      {"rate_fast", param(&DetectorSimParams::rate_fast)},
      {"mean_burst_duration", param(&DetectorSimParams::mean_burst_duration)},
      {"charge_jump_rate_per_h", param(&DetectorSimParams::charge_jump_rate)},
      {"jump_burst_fraction", param(&DetectorSimParams::jump_burst_fraction)},
      {"charge_drift_step", param(&DetectorSimParams::charge_drift_step)},
      {"noise_sigma", param(&DetectorSimParams::noise_sigma)},
      {"initial_ng", param(&DetectorSimParams::initial_ng)},
  };
}

const std::map<std::string, KeyTable>& key_tables() {
  static const std::map<std::string, KeyTable> tables = [] {
    std::map<std::string, KeyTable> t;
    t["run"] = {
        {"seed", [](RunConfig& c, const Context& x) { c.seed = x.unsigned_integer(); }},
        {"duration", real(&SimConfig::duration)},
        {"bin_width", real(&SimConfig::bin_width)},
        {"trace_length", real(&SimConfig::trace_length)},
        {"dead_time", real(&SimConfig::dead_time)},
    };
    t["sim"] = {
        // Handled before every other key; listed so it is accepted.
        {"preset", [](RunConfig&, const Context&) {}},
        {"burst_rate_per_min", [](RunConfig& c, const Context& x) { c.sim.burst_event_rate = x.number() / 60.0; }},
        {"p_both", real(&SimConfig::p_both)},
        {"p_only1", [](RunConfig& c, const Context& x) { c.sim.p_only[0] = x.number(); }},
        {"p_only2", [](RunConfig& c, const Context& x) { c.sim.p_only[1] = x.number(); }},
        {"shared_jump_rate_per_h", real(&SimConfig::shared_jump_rate)},
    };
    t["sim.detector1"] = detector_keys(0);
    t["sim.detector2"] = detector_keys(1);
    t["sim.spectroscopy"] = {
        {"points",
         [](RunConfig& c, const Context& x) { c.sim.spectroscopy.points = static_cast<std::size_t>(x.unsigned_integer()); }},
        {"half_span_hz", [](RunConfig& c, const Context& x) { c.sim.spectroscopy.half_span_hz = x.number(); }},
        {"noise_sigma", [](RunConfig& c, const Context& x) { c.sim.spectroscopy.noise_sigma = x.number(); }},
    };
    t["criteria"] = {
        {"kde_bandwidth", [](RunConfig& c, const Context& x) { c.analysis.criteria.kde_bandwidth = x.number(); }},
        {"segment_length", [](RunConfig& c, const Context& x) { c.analysis.criteria.segment_length = x.number(); }},
        {"center_window", [](RunConfig& c, const Context& x) { c.analysis.criteria.center_window = x.number(); }},
        {"max_gap", [](RunConfig& c, const Context& x) { c.analysis.criteria.max_gap = x.number(); }},
        {"min_events",
         [](RunConfig& c, const Context& x) {
           c.analysis.criteria.min_events = static_cast<std::size_t>(x.unsigned_integer());
         }},
        {"coincidence_pad", [](RunConfig& c, const Context& x) { c.analysis.criteria.coincidence_pad = x.number(); }},
        {"grid_step", [](RunConfig& c, const Context& x) { c.analysis.criteria.grid_step = x.number(); }},
    };
    t["analysis"] = {
        {"postselect_fidelity", [](RunConfig& c, const Context& x) { c.analysis.postselect_fidelity = x.number(); }},
        {"weighted_overlap",
         [](RunConfig& c, const Context& x) { c.analysis.discrimination.weighted_overlap = x.boolean(); }},
        {"step_threshold", [](RunConfig& c, const Context& x) { c.analysis.step_threshold = x.number(); }},
        {"correlation_bin", [](RunConfig& c, const Context& x) { c.analysis.correlation.bin_width = x.number(); }},
        {"correlation_max_lag", [](RunConfig& c, const Context& x) { c.analysis.correlation.max_lag = x.number(); }},
        {"surrogates",
         [](RunConfig& c, const Context& x) { c.analysis.surrogates = static_cast<std::size_t>(x.unsigned_integer()); }},
        {"surrogate_seed", [](RunConfig& c, const Context& x) { c.analysis.surrogate_seed = x.unsigned_integer(); }},
        {"shift_window", [](RunConfig& c, const Context& x) { c.analysis.charge_shift.window = x.number(); }},
        {"shift_sigmas",
         [](RunConfig& c, const Context& x) { c.analysis.charge_shift.displacement_sigmas = x.number(); }},
        {"shift_min_cluster",
         [](RunConfig& c, const Context& x) {
           c.analysis.charge_shift.min_cluster_size = static_cast<std::size_t>(x.unsigned_integer());
         }},
    };
    return t;
  }();
  return tables;
}

}  // namespace

void IniFile::set(const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.rfind('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == dotted_key.size()) {
    throw ConfigError("override '" + dotted_key + "' must look like section.key");
  }
  sections[dotted_key.substr(0, dot)][dotted_key.substr(dot + 1)] = {trim(value), 0};
}

IniFile parse_ini(std::istream& in, const std::string& source) {
  IniFile ini;
  ini.source = source;
  std::string current;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto cut = raw.find_first_of("#;");
    const std::string s = trim(cut == std::string::npos ? raw : raw.substr(0, cut));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) {
        throw ConfigError(source + ":" + std::to_string(line) + ": malformed section header");
      }
      current = trim(s.substr(1, s.size() - 2));
      ini.sections[current];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line) + ": expected key = value");
    }
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line) + ": empty key");
    auto& sec = ini.sections[current];
    if (sec.count(key)) {
      throw ConfigError(source + ":" + std::to_string(line) + ": duplicate key '" + key + "'");
    }
    sec[key] = {trim(s.substr(eq + 1)), line};
  }
  return ini;
}

IniFile read_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_ini(in, path);
}

RunConfig build_run_config(const IniFile& ini) {
  RunConfig cfg;
  if (auto sim = ini.sections.find("sim"); sim != ini.sections.end()) {
    if (auto p = sim->second.find("preset"); p != sim->second.end()) {
      if (p->second.value == "reference") {
        cfg.preset = SimPreset::kReference;
      } else if (p->second.value == "retention") {
        cfg.preset = SimPreset::kRetention;
      } else {
        throw ConfigError(where(ini, "sim", "preset", p->second.line) + ": unknown preset '" + p->second.value +
                          "' (reference, retention)");
      }
    }
  }
  cfg.sim = cfg.preset == SimPreset::kReference ? reference_sim_config() : retention_calibration_sim_config();

  const auto& tables = key_tables();
  for (const auto& [name, section] : ini.sections) {
    const auto table = tables.find(name);
    if (table == tables.end()) {
      if (section.empty()) continue;
      throw ConfigError(ini.source + ": unknown section [" + name + "]");
    }
    for (const auto& [key, entry] : section) {
      const auto setter = table->second.find(key);
      if (setter == table->second.end()) {
        throw ConfigError(where(ini, name, key, entry.line) + ": unknown key");
      }
      setter->second(cfg, Context{ini, name, key, entry});
    }
  }
  if (cfg.seed) cfg.sim.seed = *cfg.seed;
  cfg.analysis.priors = {cfg.sim.detectors[0].spec, cfg.sim.detectors[1].spec};

  try {
    cfg.sim.validate();
    cfg.analysis.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(ini.source + ": " + e.what());
  }
  return cfg;
}

}  // namespace qpt
