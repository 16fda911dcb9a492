#pragma once

// Burst identification from parity-switch timestamps: Gaussian KDE of the
// switching activity, adaptive per-segment peak threshold, gap-chained event
// groups, and cross-detector coincidence flags.

#include <cstddef>
#include <span>
#include <vector>

namespace qpt {

struct BurstCriteria {
  double kde_bandwidth = 0.020;  ///< absolute kernel width, s
  double segment_length = 2.0;   ///< s
  double center_window = 0.020;  ///< half-width of the seed window, s
  double max_gap = 0.005;        ///< largest spacing inside a burst, s
  std::size_t min_events = 3;
  double coincidence_pad = 0.005;  ///< s
  double grid_step = 1e-3;         ///< KDE evaluation grid, s

  void validate() const;
};

struct BurstInterval {
  int detector_id = 1;
  std::size_t trace_index = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  std::size_t n_events = 0;
  bool correlated = false;
  bool charge_shifting = false;

  double duration() const { return t_end - t_start; }
};

/// Gaussian KDE with absolute bandwidth, normalised by the timestamp count.
/// Empty input gives an all-zero density.
std::vector<double> kde_activity(std::span<const double> timestamps, double bandwidth,
                                 std::span<const double> grid);

/// Local maxima of one segment's density, kept iff above median + 2 std of
/// the peak heights, each mapped to the nearest event index. Fewer than three
/// peaks leaves the threshold undefined and yields no candidates.
std::vector<std::size_t> find_candidate_centers(std::span<const double> density,
                                                std::span<const double> grid,
                                                std::span<const double> events);

struct CenterSearch {
  std::vector<std::size_t> centers;  ///< sorted, unique event indices
  std::size_t segments = 0;
  std::size_t skipped_segments = 0;  ///< fewer than three peaks
};

/// Runs kde_activity + find_candidate_centers over [t_begin, t_end) in
/// segments, each padded by two bandwidths of neighbouring activity.
CenterSearch find_burst_centers(std::span<const double> events, double t_begin, double t_end,
                                const BurstCriteria& criteria);

/// Chains events around each centre while spacings stay within max_gap,
/// drops groups below min_events and merges overlapping groups.
std::vector<BurstInterval> group_bursts(std::span<const double> events,
                                        std::span<const std::size_t> centers,
                                        const BurstCriteria& criteria);

/// find_burst_centers followed by group_bursts.
std::vector<BurstInterval> detect_bursts(std::span<const double> events, double t_begin,
                                         double t_end, const BurstCriteria& criteria,
                                         int detector_id = 1, std::size_t trace_index = 0);

struct CoincidenceCounts {
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  std::size_t correlated1 = 0;
  std::size_t correlated2 = 0;
  std::size_t coincident_pairs = 0;  ///< one-to-one matched overlapping pairs

  double fraction1() const { return n1 ? static_cast<double>(correlated1) / n1 : 0.0; }
  double fraction2() const { return n2 ? static_cast<double>(correlated2) / n2 : 0.0; }
};

/// A burst is correlated iff [t_start - pad, t_end + pad] meets any burst of
/// the other detector. Both lists must be sorted by t_start.
CoincidenceCounts classify_coincidence(std::span<BurstInterval> bursts1,
                                       std::span<BurstInterval> bursts2, double pad);

/// Events outside every burst interval (bounds inclusive).
std::vector<double> excise_bursts(std::span<const double> events,
                                  std::span<const BurstInterval> bursts);

/// Events inside some burst interval (bounds inclusive).
std::vector<double> burst_events(std::span<const double> events,
                                 std::span<const BurstInterval> bursts);

}  // namespace qpt
