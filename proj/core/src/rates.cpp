#include "qpt/rates.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qpt {
namespace {

Histogram fill(std::span<const double> values, std::vector<double> edges) {
  Histogram h;
  h.counts.assign(edges.size() - 1, 0);
  for (double v : values) {
    if (!(v >= edges.front() && v <= edges.back())) continue;
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    auto bin = static_cast<std::size_t>(it - edges.begin());
    bin = bin == 0 ? 0 : bin - 1;
    if (bin >= h.counts.size()) bin = h.counts.size() - 1;
    ++h.counts[bin];
  }
  h.edges = std::move(edges);
  return h;
}

}  // namespace

Histogram linear_histogram(std::span<const double> values, double lo, double hi, std::size_t bins) {
  if (!(hi > lo) || bins == 0) throw std::invalid_argument("bad histogram range");
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  }
  return fill(values, std::move(edges));
}

Histogram log_histogram(std::span<const double> values, double lo, double hi, std::size_t bins) {
  if (!(lo > 0.0 && hi > lo) || bins == 0) throw std::invalid_argument("bad histogram range");
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    edges[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(bins));
  }
  edges.back() = hi;
  return fill(values, std::move(edges));
}

const char* to_string(RateSubset subset) {
  return subset == RateSubset::kBaseline ? "baseline" : "burst";
}

std::vector<double> waiting_times(std::span<const double> events) {
  std::vector<double> waits;
  if (events.size() < 2) return waits;
  waits.reserve(events.size() - 1);
  for (std::size_t i = 1; i < events.size(); ++i) waits.push_back(events[i] - events[i - 1]);
  return waits;
}

RateEstimate fit_rate(std::span<const double> waits, RateSubset subset) {
  if (waits.empty()) throw std::invalid_argument("fit_rate needs at least one waiting time");
  RateEstimate r;
  r.subset = subset;
  double sum = 0.0;
  for (double w : waits) {
    if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("waiting times must be > 0");
    sum += w;
  }
  r.n_waits = waits.size();
  r.mean_wait = sum / static_cast<double>(waits.size());
  r.rate = 1.0 / r.mean_wait;

  // 1e-5 s .. 10 s covers both regimes at 100 us binning.
  r.histogram = log_histogram(waits, 1e-5, 10.0, 60);
  r.expected.resize(r.histogram.counts.size());
  const double n = static_cast<double>(r.n_waits);
  for (std::size_t i = 0; i < r.expected.size(); ++i) {
    r.expected[i] = n * (std::exp(-r.rate * r.histogram.edges[i]) -
                         std::exp(-r.rate * r.histogram.edges[i + 1]));
  }
  return r;
}

std::vector<double> intra_burst_waits(std::span<const double> events,
                                      std::span<const BurstInterval> bursts) {
  std::vector<double> waits;
  for (const auto& b : bursts) {
    auto lo = std::lower_bound(events.begin(), events.end(), b.t_start);
    auto hi = std::upper_bound(events.begin(), events.end(), b.t_end);
    for (auto it = lo; it != hi && std::next(it) != hi; ++it) waits.push_back(*std::next(it) - *it);
  }
  return waits;
}

DurationStats burst_duration_stats(std::span<const BurstInterval> bursts) {
  if (bursts.empty()) throw std::invalid_argument("burst_duration_stats needs at least one burst");
  DurationStats s;
  s.count = bursts.size();
  std::vector<double> d;
  d.reserve(bursts.size());
  double sum = 0.0;
  for (const auto& b : bursts) {
    d.push_back(b.duration());
    sum += b.duration();
  }
  s.mean = sum / static_cast<double>(s.count);
  s.histogram = linear_histogram(d, 0.0, 0.050, 50);
  return s;
}

double duty_cycle_upper_bound(double observed_fraction, double duty_cycle) {
  if (!(duty_cycle > 0.0 && duty_cycle <= 1.0)) throw std::invalid_argument("duty cycle must be in (0, 1]");
  return observed_fraction / duty_cycle;
}

}  // namespace qpt
