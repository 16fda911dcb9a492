#pragma once

// On-disk formats. Every file starts with a format version ("# format_version=1.0"
// for CSV, a "format_version" key for JSON); readers accept major version 1 only.
//
// Simulation directory:
//   manifest.json                      seed, counts, layout
//   truth.json                         ground truth and the generating config
//   traces/trace_d{1,2}_NNNNN.csv      t_s,i_plus,q_plus,i_minus,q_minus
//   spectroscopy/spectro_d{1,2}_NNNNN.csv
// Analysis directory:
//   events/events_d{1,2}_NNNNN.csv     t_s
//   bursts_d{1,2}.csv                  t_start_s,t_end_s,n_events,correlated,charge_shifting
//   report.json

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qpt/analysis.hpp"
#include "qpt/bursts.hpp"
#include "qpt/discrimination.hpp"
#include "qpt/simulator.hpp"

namespace qpt {

inline constexpr const char* kFormatVersion = "1.0";

/// Throws DataError unless `version` has major number 1.
void check_format_version(const std::string& version, const std::string& what);

namespace layout {
std::filesystem::path trace_file(const std::filesystem::path& dir, int detector_id, std::size_t index);
std::filesystem::path spectro_file(const std::filesystem::path& dir, int detector_id, std::size_t index);
std::filesystem::path events_file(const std::filesystem::path& dir, int detector_id, std::size_t index);
std::filesystem::path bursts_file(const std::filesystem::path& dir, int detector_id);
std::filesystem::path manifest_file(const std::filesystem::path& dir);
std::filesystem::path truth_file(const std::filesystem::path& dir);
std::filesystem::path report_file(const std::filesystem::path& dir);
/// Human-readable description of the simulation directory, for error messages.
std::string describe_simulation_dir();
}  // namespace layout

// IQ values carry 9 significant digits, times 12.
std::string format_trace_csv(const IQTrace& trace);
IQTrace parse_trace_csv(const std::string& text, const std::string& name);

std::string format_spectroscopy_csv(const SpectroscopyTrace& trace);
SpectroscopyTrace parse_spectroscopy_csv(const std::string& text, const std::string& name);

std::string format_events_csv(const EventRecord& record);
/// Rebuilds the record (binary record included) from the event file.
EventRecord parse_events_csv(const std::string& text, const std::string& name);

std::string format_bursts_csv(int detector_id, std::span<const BurstInterval> bursts);
std::vector<BurstInterval> parse_bursts_csv(const std::string& text, const std::string& name);

std::string format_truth_json(const GroundTruthLog& truth, const SimConfig& config);
struct TruthFile {
  GroundTruthLog truth;
  SimConfig config;
};
TruthFile parse_truth_json(const std::string& text, const std::string& name);

std::string format_manifest_json(const SimConfig& config, const GroundTruthLog& truth);

/// Whole-file helpers. read_text throws DataError naming the file; write_text
/// writes through a temporary and renames, throwing std::runtime_error.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Writes manifest, truth, traces and spectroscopy for the whole run. Traces
/// are rendered `threads` at a time and written in index order.
void write_simulation(const Simulator& sim, const std::filesystem::path& dir, unsigned threads);

/// Traces (and spectroscopy, when present) read back from a simulation directory.
class DirectorySource : public TraceSource {
 public:
  /// Throws ConfigError when the directory does not look like a simulation
  /// directory at all, DataError when it does but something is missing or bad.
  explicit DirectorySource(std::filesystem::path dir);

  std::size_t trace_count() const override { return count_; }
  std::array<IQTrace, 2> load_traces(std::size_t index) const override;
  std::optional<std::array<SpectroscopyTrace, 2>> load_spectroscopy(std::size_t index) const override;
  const GroundTruthLog* truth() const override { return truth_ ? &truth_->truth : nullptr; }
  const SimConfig* sim_config() const override { return truth_ ? &truth_->config : nullptr; }

 private:
  std::filesystem::path dir_;
  std::size_t count_ = 0;
  bool spectroscopy_ = false;
  std::optional<TruthFile> truth_;
};

}  // namespace qpt
