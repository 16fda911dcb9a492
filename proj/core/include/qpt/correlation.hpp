#pragma once

// Normalised intensity cross-correlation of two event trains,
// R12(τ) = <I1(t) I2(t+τ)> / (<I1><I2>), averaged over segments.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace qpt {

struct CorrelationOptions {
  double bin_width = 1e-3;  ///< s
  double max_lag = 0.050;   ///< s
};

struct Segment {
  double t_begin = 0.0;
  double t_end = 0.0;
};

struct CorrelationCurve {
  std::vector<double> lags;    ///< s, symmetric about 0
  std::vector<double> values;  ///< segment average of R12
  std::size_t n_segments = 0;  ///< segments that entered the average
  std::size_t n_skipped = 0;   ///< segments with no events in either train
  std::vector<std::vector<double>> per_segment;  ///< R12 of each averaged segment
};

/// Event counts in [t_begin, t_end) on bins of bin_width.
std::vector<double> bin_counts(std::span<const double> events, double t_begin, double t_end,
                               double bin_width);

/// R12 of one segment for lags -max_lag_bins..max_lag_bins. Each lag averages
/// only over bins where both shifted series exist; the normalising means use
/// the whole segment. Empty when either mean is zero.
std::vector<double> correlate_intensities(std::span<const double> i1, std::span<const double> i2,
                                          std::size_t max_lag_bins);

/// Both event lists sorted; segments disjoint and ordered.
CorrelationCurve cross_correlation(std::span<const double> events1, std::span<const double> events2,
                                   std::span<const Segment> segments,
                                   const CorrelationOptions& options = {});

struct SurrogateBaseline {
  std::vector<double> mean;  ///< per lag
  std::vector<double> std;   ///< per lag
  std::vector<double> max_abs_deviation;  ///< per surrogate, max over lags of |R - 1|
};

/// Recomputes the curve with train 2 cyclically shifted inside every segment
/// by an independent random offset of at least 10% of the segment.
SurrogateBaseline surrogate_baseline(std::span<const double> events1,
                                     std::span<const double> events2,
                                     std::span<const Segment> segments, std::size_t n_surrogates,
                                     std::uint64_t seed, const CorrelationOptions& options = {});

}  // namespace qpt
