#pragma once

// Waiting-time statistics and rate estimates, Γ = 1 / <t_wait>.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qpt/bursts.hpp"

namespace qpt {

struct Histogram {
  std::vector<double> edges;  ///< size counts.size() + 1
  std::vector<std::size_t> counts;
};

/// Linear bins over [lo, hi]; values outside are dropped.
Histogram linear_histogram(std::span<const double> values, double lo, double hi, std::size_t bins);

/// Log-spaced bins over [lo, hi] (lo > 0); values outside are dropped.
Histogram log_histogram(std::span<const double> values, double lo, double hi, std::size_t bins);

enum class RateSubset { kBaseline, kBurst };

const char* to_string(RateSubset subset);

struct RateEstimate {
  RateSubset subset = RateSubset::kBaseline;
  double rate = 0.0;  ///< 1/s
  std::size_t n_waits = 0;
  double mean_wait = 0.0;  ///< s
  Histogram histogram;
  std::vector<double> expected;  ///< exponential overlay, counts per bin at the fitted rate
};

/// Consecutive differences of an ordered timestamp list. Fewer than two
/// events gives an empty list.
std::vector<double> waiting_times(std::span<const double> events);

/// Point estimate Γ = 1/mean(waits) plus a log-binned histogram with the
/// matching exponential overlay. Throws std::invalid_argument on empty input.
RateEstimate fit_rate(std::span<const double> waits, RateSubset subset);

/// Waits between consecutive events that fall inside the same burst.
std::vector<double> intra_burst_waits(std::span<const double> events,
                                      std::span<const BurstInterval> bursts);

struct DurationStats {
  std::size_t count = 0;
  double mean = 0.0;  ///< s
  Histogram histogram;
};

/// Mean and histogram (0-50 ms, 1 ms bins) of t_end - t_start. Throws
/// std::invalid_argument when there are no bursts.
DurationStats burst_duration_stats(std::span<const BurstInterval> bursts);

/// Observed share of charge steps carrying a burst, scaled up for the time
/// the detector was not monitoring: observed_fraction / duty_cycle.
double duty_cycle_upper_bound(double observed_fraction, double duty_cycle);

}  // namespace qpt
