#pragma once

// Offset-charge tracking from spectroscopy fits and detection of bursts that
// coincide with a displacement of the IQ parity clusters.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "qpt/bursts.hpp"
#include "qpt/discrimination.hpp"
#include "qpt/simulator.hpp"
#include "qpt/spectro_fit.hpp"

namespace qpt {

struct ChargeEpoch {
  double time = 0.0;  ///< s
  SpectroFit fit;
};

struct ChargeSeries {
  double amp = 0.0;  ///< Hz, splitting amplitude used for the inversion
  std::vector<std::size_t> epoch_index;  ///< position in the input list; gaps are skipped epochs
  std::vector<double> times;
  std::vector<double> ng_values;  ///< effective n_g in [0, 0.25]
  std::vector<unsigned char> clamped;
  std::vector<unsigned char> step_flags;  ///< |Δn_g| > threshold w.r.t. the directly preceding epoch
  std::size_t n_epochs = 0;
  std::size_t n_unresolvable = 0;  ///< includes fits rejected as unusable

  std::size_t step_count() const;
};

/// Largest fitted splitting among usable epochs (Hz); 0 when none.
double estimate_splitting_amp(std::span<const ChargeEpoch> epochs);

/// n_g per usable epoch. A step is only evaluated between neighbouring
/// epochs that were both usable.
ChargeSeries charge_tracking(std::span<const ChargeEpoch> epochs, double amp,
                             double step_threshold = 0.1);

struct ChargeShiftCriteria {
  double window = 0.5;           ///< s on each side of the burst
  double displacement_sigmas = 3.0;
  std::size_t min_cluster_size = 20;  ///< smaller clusters count as absent
  int max_iterations = 50;
};

enum class ShiftVerdict { kUnchanged, kShifted, kUnclassifiable };

struct ShiftMeasurement {
  ShiftVerdict verdict = ShiftVerdict::kUnclassifiable;
  double displacement = 0.0;  ///< largest centroid move, IQ units
  double pooled_sigma = 0.0;
};

/// Compares the two-cluster centroids of the 4-D IQ samples in the windows
/// before t_start and after t_end. The clustering starts from the trace-wide
/// centroids of the two record states.
ShiftMeasurement measure_charge_shift(const IQTrace& trace, const EventRecord& record,
                                      const BurstInterval& burst,
                                      const ChargeShiftCriteria& criteria = {});

/// Sets charge_shifting on each burst of this trace; returns the verdicts.
std::vector<ShiftMeasurement> classify_charge_shifting_bursts(const IQTrace& trace,
                                                              const EventRecord& record,
                                                              std::span<BurstInterval> bursts,
                                                              const ChargeShiftCriteria& criteria = {});

}  // namespace qpt
