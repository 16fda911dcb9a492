#pragma once

// INI-style run configuration:
//
//   [run]               seed, duration, bin_width, trace_length, dead_time
//   [sim]               preset, burst_rate_per_min, p_both, p_only1, p_only2,
//                       shared_jump_rate_per_h
//   [sim.detector1|2]   physics (*_hz in ordinary frequency) and rates
//   [sim.spectroscopy]  points, half_span_hz, noise_sigma
//   [criteria]          burst identification
//   [analysis]          post-selection, correlation, charge tracking
//
// Unknown sections or keys are errors, so typos never pass silently.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpt/analysis.hpp"
#include "qpt/simulator.hpp"

namespace qpt {

/// Bad command line or configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing, truncated or inconsistent input data (exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IniEntry {
  std::string value;
  int line = 0;
};

using IniSection = std::map<std::string, IniEntry>;

struct IniFile {
  std::string source;  ///< file name, for messages
  std::map<std::string, IniSection> sections;

  /// "section.key = value" (the section part may itself contain dots; the
  /// key is everything after the last dot).
  void set(const std::string& dotted_key, const std::string& value);
};

/// '#' and ';' start comments, blank lines are skipped, keys before the first
/// section header land in section "". Throws ConfigError on malformed lines
/// and repeated keys.
IniFile parse_ini(std::istream& in, const std::string& source = "<config>");
IniFile read_ini(const std::string& path);

enum class SimPreset { kReference, kRetention };

struct RunConfig {
  SimPreset preset = SimPreset::kReference;
  SimConfig sim;
  std::optional<std::uint64_t> seed;  ///< mandatory for simulate
  AnalysisOptions analysis;
};

/// Applies the preset, then every key of the file. Analysis priors follow the
/// simulated detector physics. Throws ConfigError.
RunConfig build_run_config(const IniFile& ini);

}  // namespace qpt
