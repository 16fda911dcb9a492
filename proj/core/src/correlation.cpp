#include "qpt/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qpt/rng.hpp"

namespace qpt {
namespace {

std::size_t bin_count(const Segment& s, double bin_width) {
  return static_cast<std::size_t>(std::llround((s.t_end - s.t_begin) / bin_width));
}

std::size_t lag_bins(const CorrelationOptions& o) {
  if (!(o.bin_width > 0.0 && o.max_lag >= 0.0)) throw std::invalid_argument("bad correlation options");
  return static_cast<std::size_t>(std::llround(o.max_lag / o.bin_width));
}

std::span<const double> slice(std::span<const double> events, const Segment& s) {
  auto lo = std::lower_bound(events.begin(), events.end(), s.t_begin);
  auto hi = std::lower_bound(events.begin(), events.end(), s.t_end);
  return {lo, hi};
}

// Accumulates per-segment curves into an average.
struct Averager {
  std::vector<double> sum;
  std::size_t n = 0;
  std::size_t skipped = 0;
  std::vector<std::vector<double>>* keep = nullptr;

  void add(std::vector<double> r) {
    if (r.empty()) {
      ++skipped;
      return;
    }
    if (sum.empty()) sum.assign(r.size(), 0.0);
    for (std::size_t i = 0; i < r.size(); ++i) sum[i] += r[i];
    ++n;
    if (keep) keep->push_back(std::move(r));
  }
};

}  // namespace

std::vector<double> bin_counts(std::span<const double> events, double t_begin, double t_end,
                               double bin_width) {
  const std::size_t n = bin_count({t_begin, t_end}, bin_width);
  std::vector<double> counts(n, 0.0);
  if (n == 0) return counts;
  for (double t : events) {
    if (t < t_begin || t >= t_end) continue;
    auto k = static_cast<std::size_t>(std::floor((t - t_begin) / bin_width));
    if (k >= n) k = n - 1;
    counts[k] += 1.0;
  }
  return counts;
}

std::vector<double> correlate_intensities(std::span<const double> i1, std::span<const double> i2,
                                          std::size_t max_lag_bins) {
  if (i1.size() != i2.size()) throw std::invalid_argument("intensity series differ in length");
  const std::size_t n = i1.size();
  if (n <= max_lag_bins) throw std::invalid_argument("segment shorter than the lag range");
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    m1 += i1[t];
    m2 += i2[t];
  }
  m1 /= static_cast<double>(n);
  m2 /= static_cast<double>(n);
  if (!(m1 > 0.0 && m2 > 0.0)) return {};

  const auto m = static_cast<std::ptrdiff_t>(max_lag_bins);
  const auto nn = static_cast<std::ptrdiff_t>(n);
  std::vector<double> sums(2 * max_lag_bins + 1, 0.0);
  // Only nonzero bins of i1 contribute; event trains are sparse at 1 ms.
  for (std::ptrdiff_t t = 0; t < nn; ++t) {
    const double a = i1[static_cast<std::size_t>(t)];
    if (a == 0.0) continue;
    for (std::ptrdiff_t lag = -m; lag <= m; ++lag) {
      const std::ptrdiff_t u = t + lag;
      if (u < 0 || u >= nn) continue;
      sums[static_cast<std::size_t>(lag + m)] += a * i2[static_cast<std::size_t>(u)];
    }
  }
  std::vector<double> r(sums.size());
  for (std::ptrdiff_t lag = -m; lag <= m; ++lag) {
    const auto count = static_cast<double>(nn - (lag < 0 ? -lag : lag));
    r[static_cast<std::size_t>(lag + m)] = sums[static_cast<std::size_t>(lag + m)] / count / (m1 * m2);
  }
  return r;
}

CorrelationCurve cross_correlation(std::span<const double> events1, std::span<const double> events2,
                                   std::span<const Segment> segments,
                                   const CorrelationOptions& options) {
  const std::size_t m = lag_bins(options);
  CorrelationCurve curve;
  for (std::size_t i = 0; i <= 2 * m; ++i) {
    curve.lags.push_back((static_cast<double>(i) - static_cast<double>(m)) * options.bin_width);
  }
  Averager avg;
  avg.keep = &curve.per_segment;
  for (const auto& s : segments) {
    const auto e1 = slice(events1, s);
    const auto e2 = slice(events2, s);
    if (e1.empty() || e2.empty()) {
      ++avg.skipped;
      continue;
    }
    const auto i1 = bin_counts(e1, s.t_begin, s.t_end, options.bin_width);
    const auto i2 = bin_counts(e2, s.t_begin, s.t_end, options.bin_width);
    avg.add(correlate_intensities(i1, i2, m));
  }
  curve.n_segments = avg.n;
  curve.n_skipped = avg.skipped;
  curve.values.assign(2 * m + 1, 0.0);
  if (avg.n > 0) {
    for (std::size_t i = 0; i < curve.values.size(); ++i) {
      curve.values[i] = avg.sum[i] / static_cast<double>(avg.n);
    }
  }
  return curve;
}

SurrogateBaseline surrogate_baseline(std::span<const double> events1,
                                     std::span<const double> events2,
                                     std::span<const Segment> segments, std::size_t n_surrogates,
                                     std::uint64_t seed, const CorrelationOptions& options) {
  const std::size_t m = lag_bins(options);
  const std::size_t n_lags = 2 * m + 1;
  SurrogateBaseline out;
  std::vector<double> s1(n_lags, 0.0), s2(n_lags, 0.0);

  // Bin every segment once; surrogates only rotate the second series.
  std::vector<std::vector<double>> b1, b2;
  for (const auto& s : segments) {
    const auto e1 = slice(events1, s);
    const auto e2 = slice(events2, s);
    if (e1.empty() || e2.empty()) continue;
    b1.push_back(bin_counts(e1, s.t_begin, s.t_end, options.bin_width));
    b2.push_back(bin_counts(e2, s.t_begin, s.t_end, options.bin_width));
  }

  std::vector<double> rotated;
  for (std::size_t k = 0; k < n_surrogates; ++k) {
    Rng rng = Rng::for_stream(seed, 300, k);
    Averager avg;
    for (std::size_t j = 0; j < b1.size(); ++j) {
      const std::size_t n = b2[j].size();
      const std::size_t lo = std::max<std::size_t>(1, n / 10);
      const std::size_t span = n - 2 * lo + 1;
      const std::size_t shift = lo + static_cast<std::size_t>(rng.uniform() * static_cast<double>(span));
      rotated.resize(n);
      for (std::size_t t = 0; t < n; ++t) rotated[(t + shift) % n] = b2[j][t];
      avg.add(correlate_intensities(b1[j], rotated, m));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < n_lags; ++i) {
      const double v = avg.n ? avg.sum[i] / static_cast<double>(avg.n) : 0.0;
      s1[i] += v;
      s2[i] += v * v;
      worst = std::max(worst, std::abs(v - 1.0));
    }
    out.max_abs_deviation.push_back(worst);
  }
  out.mean.resize(n_lags);
  out.std.resize(n_lags);
  const auto kk = static_cast<double>(std::max<std::size_t>(n_surrogates, 1));
  for (std::size_t i = 0; i < n_lags; ++i) {
    out.mean[i] = s1[i] / kk;
    const double var = n_surrogates > 1 ? (s2[i] - kk * out.mean[i] * out.mean[i]) / (kk - 1.0) : 0.0;
    out.std[i] = std::sqrt(std::max(0.0, var));
  }
  return out;
}

}  // namespace qpt
