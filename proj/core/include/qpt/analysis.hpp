#pragma once

// Dataset-level pipeline: per-trace discrimination, event extraction, burst
// identification and charge-shift checks, reduced in trace order into an
// AnalysisReport.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "qpt/bursts.hpp"
#include "qpt/charge.hpp"
#include "qpt/correlation.hpp"
#include "qpt/discrimination.hpp"
#include "qpt/rates.hpp"
#include "qpt/simulator.hpp"
#include "qpt/spectro_fit.hpp"

namespace qpt {

struct AnalysisOptions {
  DiscriminationOptions discrimination;
  BurstCriteria criteria;
  ChargeShiftCriteria charge_shift;
  CorrelationOptions correlation;
  SpectroFitOptions spectro;
  double postselect_fidelity = 0.999;
  double step_threshold = 0.1;
  std::size_t surrogates = 100;
  std::uint64_t surrogate_seed = 1;
  /// Γnr and γφ are taken from here when fitting spectroscopy.
  std::array<DetectorSpec, 2> priors;

  AnalysisOptions();
  void validate() const;
};

struct TraceAnalysis {
  EventRecord record;
  std::vector<BurstInterval> bursts;
  std::vector<ShiftMeasurement> shifts;  ///< parallel to bursts
};

/// Discriminate, threshold, post-select, find bursts and check each burst for
/// a charge shift. Bursts are searched on every trace, retained or not.
TraceAnalysis analyze_trace(const IQTrace& trace, const AnalysisOptions& options);

/// Everything measured on one trace index, both detectors.
struct TraceResult {
  std::size_t index = 0;
  double t0 = 0.0;
  double length = 0.0;
  std::array<TraceAnalysis, 2> det;
  std::array<std::optional<SpectroFit>, 2> spectro;
};

/// Random-access provider of trace pairs. load_* must be safe to call
/// concurrently for distinct indices.
class TraceSource {
 public:
  virtual ~TraceSource() = default;
  virtual std::size_t trace_count() const = 0;
  virtual std::array<IQTrace, 2> load_traces(std::size_t index) const = 0;
  virtual std::optional<std::array<SpectroscopyTrace, 2>> load_spectroscopy(std::size_t index) const = 0;
  virtual const GroundTruthLog* truth() const { return nullptr; }
  virtual const SimConfig* sim_config() const { return nullptr; }
};

class SimulatorSource : public TraceSource {
 public:
  explicit SimulatorSource(const Simulator& sim) : sim_(sim) {}
  std::size_t trace_count() const override { return sim_.trace_count(); }
  std::array<IQTrace, 2> load_traces(std::size_t index) const override;
  std::optional<std::array<SpectroscopyTrace, 2>> load_spectroscopy(std::size_t index) const override;
  const GroundTruthLog* truth() const override { return &sim_.truth(); }
  const SimConfig* sim_config() const override { return &sim_.config(); }

 private:
  const Simulator& sim_;
};

TraceResult analyze_index(const TraceSource& source, std::size_t index, const AnalysisOptions& options);

struct DetectorReport {
  int detector_id = 1;
  std::size_t traces = 0;
  std::size_t retained = 0;
  std::size_t events_retained = 0;

  std::optional<RateEstimate> baseline;
  std::optional<RateEstimate> burst;

  std::size_t bursts_detected = 0;  ///< in retained traces
  std::size_t bursts_used = 0;      ///< of those, with an unchanged charge verdict
  double burst_exposure_s = 0.0;
  double burst_rate_per_min = 0.0;
  std::optional<DurationStats> durations;
  std::size_t correlated = 0;
  double coincidence_fraction = 0.0;

  ChargeSeries charge;
  std::size_t steps_with_shift_burst = 0;
  double step_burst_fraction = 0.0;
  double duty_cycle_bound = 0.0;

  // Charge-shift counts cover retained traces only.
  std::size_t charge_shifting = 0;
  std::size_t shift_classified = 0;
  std::size_t shift_unclassifiable = 0;
  double charge_shift_exposure_h = 0.0;
  double charge_shifting_rate_per_h = 0.0;

  std::vector<BurstInterval> bursts;  ///< every detected burst, all traces, time ordered
};

struct DetectorValidation {
  double configured_rate_slow = 0.0;
  double configured_rate_fast = 0.0;
  double baseline_rate_error = 0.0;  ///< relative
  double truth_fast_rate = 0.0;      ///< flips per second inside true burst windows
  double truth_fast_exposure_s = 0.0;
  std::size_t truth_fast_flips = 0;
  double fast_rate_ratio = 0.0;  ///< pipeline / truth
  std::size_t truth_bursts = 0;  ///< true windows with >= min_events binned transitions
  std::size_t recalled = 0;
  std::size_t detected = 0;
  std::size_t matched = 0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t truth_steps = 0;
  std::size_t flagged_truth_steps = 0;
  std::size_t false_steps = 0;
  std::size_t injected_shift_jumps = 0;  ///< jumps carrying a strike on this detector
};

struct ValidationReport {
  std::array<DetectorValidation, 2> detectors;
  std::size_t strikes = 0;
  std::size_t shared_jumps = 0;
};

struct AnalysisReport {
  AnalysisOptions options;
  std::size_t n_traces = 0;
  double trace_length = 0.0;
  double monitored_s = 0.0;
  double wall_s = 0.0;
  double duty_cycle = 1.0;
  std::size_t pairs_retained = 0;
  double retention_fraction = 0.0;  ///< retained traces over all traces, both detectors

  std::array<DetectorReport, 2> detectors;
  CoincidenceCounts coincidence;

  CorrelationCurve correlation_all;
  CorrelationCurve correlation_removed;
  SurrogateBaseline surrogate_all;
  SurrogateBaseline surrogate_removed;

  std::size_t coincident_charge_shifting = 0;
  double charge_shift_exposure_h = 0.0;  ///< both-retained pairs
  double coincident_charge_shifting_rate_per_h = 0.0;

  std::optional<ValidationReport> validation;
};

/// Streams TraceResults in index order and reduces them into a report.
class DatasetAccumulator {
 public:
  explicit DatasetAccumulator(AnalysisOptions options);

  void add(TraceResult result);
  std::size_t size() const { return count_; }

  /// Final reduction. Truth and its config, when given, add the validation section.
  AnalysisReport finish(const GroundTruthLog* truth = nullptr, const SimConfig* config = nullptr) const;

 private:
  struct TraceMeta {
    std::size_t index;
    double t0;
    double length;
    std::array<bool, 2> retained;
  };

  AnalysisOptions options_;
  std::size_t count_ = 0;
  std::vector<TraceMeta> traces_;
  std::array<std::vector<double>, 2> baseline_waits_;
  std::array<std::vector<double>, 2> burst_waits_;
  std::array<std::vector<BurstInterval>, 2> used_bursts_;  // retained traces, unchanged verdict
  std::array<std::vector<BurstInterval>, 2> all_bursts_;
  std::array<std::size_t, 2> bursts_in_retained_{0, 0};
  std::array<std::size_t, 2> events_retained_{0, 0};
  std::array<std::vector<ChargeEpoch>, 2> epochs_;
  // Both-retained pairs only.
  std::vector<Segment> pair_segments_;
  std::array<std::vector<double>, 2> burst_events_;
  std::array<std::vector<double>, 2> baseline_events_;
  CoincidenceCounts coincidence_;
  std::array<std::size_t, 2> shifted_{0, 0};
  std::array<std::size_t, 2> classified_{0, 0};
  std::array<std::size_t, 2> unclassifiable_{0, 0};
  std::size_t coincident_shifts_ = 0;
  std::array<std::vector<double>, 2> shift_starts_;
};

/// Worker threads from QPT_THREADS, else the hardware concurrency (min 1).
unsigned default_thread_count();

/// Analyses every trace of the source with up to `threads` workers and feeds
/// the results to the accumulator strictly in index order. `on_result` sees
/// each result first (still in index order), e.g. to write event files.
AnalysisReport run_analysis(const TraceSource& source, const AnalysisOptions& options, unsigned threads,
                            const std::function<void(const TraceResult&)>& on_result = {});

}  // namespace qpt
