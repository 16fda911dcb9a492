#include "qpt/bursts.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qpt {
namespace {

bool inside_any(double t, std::span<const BurstInterval> bursts) {
  // bursts sorted by t_start and disjoint
  auto it = std::upper_bound(bursts.begin(), bursts.end(), t,
                             [](double v, const BurstInterval& b) { return v < b.t_start; });
  if (it == bursts.begin()) return false;
  return t <= std::prev(it)->t_end;
}

std::vector<BurstInterval> sorted_copy(std::span<const BurstInterval> bursts) {
  std::vector<BurstInterval> v(bursts.begin(), bursts.end());
  std::sort(v.begin(), v.end(),
            [](const BurstInterval& a, const BurstInterval& b) { return a.t_start < b.t_start; });
  return v;
}

}  // namespace

void BurstCriteria::validate() const {
  if (!(kde_bandwidth > 0.0 && segment_length > 0.0 && center_window > 0.0 && max_gap > 0.0 &&
        coincidence_pad > 0.0 && grid_step > 0.0 && min_events > 0)) {
    throw std::invalid_argument("burst criteria must all be positive");
  }
  if (!(max_gap < center_window)) {
    throw std::invalid_argument("max_gap must be smaller than center_window");
  }
}

std::vector<double> kde_activity(std::span<const double> timestamps, double bandwidth,
                                 std::span<const double> grid) {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be > 0");
  std::vector<double> density(grid.size(), 0.0);
  if (timestamps.empty()) return density;
  const double norm = 1.0 / (static_cast<double>(timestamps.size()) * bandwidth *
                             std::sqrt(2.0 * std::numbers::pi));
  const double reach = 8.0 * bandwidth;
  const double inv2b2 = 1.0 / (2.0 * bandwidth * bandwidth);
  std::size_t lo = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double x = grid[g];
    while (lo < timestamps.size() && timestamps[lo] < x - reach) ++lo;
    double sum = 0.0;
    for (std::size_t i = lo; i < timestamps.size() && timestamps[i] <= x + reach; ++i) {
      const double d = x - timestamps[i];
      sum += std::exp(-d * d * inv2b2);
    }
    density[g] = norm * sum;
  }
  return density;
}

std::vector<std::size_t> find_candidate_centers(std::span<const double> density,
                                                std::span<const double> grid,
                                                std::span<const double> events) {
  if (density.size() != grid.size()) throw std::invalid_argument("density/grid size mismatch");
  std::vector<std::size_t> peaks;
  for (std::size_t i = 1; i + 1 < density.size(); ++i) {
    if (density[i] > 0.0 && density[i] > density[i - 1] && density[i] >= density[i + 1]) {
      peaks.push_back(i);
    }
  }
  std::vector<std::size_t> out;
  if (peaks.size() < 3 || events.empty()) return out;

  std::vector<double> heights;
  heights.reserve(peaks.size());
  for (auto i : peaks) heights.push_back(density[i]);
  std::vector<double> sorted = heights;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  const double median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  double mean = 0.0;
  for (double h : heights) mean += h;
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (double h : heights) var += (h - mean) * (h - mean);
  const double threshold = median + 2.0 * std::sqrt(var / static_cast<double>(m));

  for (std::size_t k = 0; k < peaks.size(); ++k) {
    if (!(heights[k] > threshold)) continue;
    const double t = grid[peaks[k]];
    auto it = std::lower_bound(events.begin(), events.end(), t);
    std::size_t idx;
    if (it == events.end()) {
      idx = events.size() - 1;
    } else if (it == events.begin()) {
      idx = 0;
    } else {
      idx = static_cast<std::size_t>(it - events.begin());
      if (t - events[idx - 1] <= events[idx] - t) --idx;
    }
    out.push_back(idx);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

CenterSearch find_burst_centers(std::span<const double> events, double t_begin, double t_end,
                                const BurstCriteria& criteria) {
  criteria.validate();
  CenterSearch out;
  if (events.empty() || !(t_end > t_begin)) return out;
  const double pad = 2.0 * criteria.kde_bandwidth;
  const double step = criteria.grid_step;
  const auto n_seg = static_cast<std::size_t>(
      std::ceil((t_end - t_begin) / criteria.segment_length - 1e-9));
  std::vector<double> grid;
  for (std::size_t s = 0; s < n_seg; ++s) {
    const double core_lo = t_begin + static_cast<double>(s) * criteria.segment_length;
    const double core_hi = std::min(t_end, core_lo + criteria.segment_length);
    const double lo = core_lo - pad;
    const auto n_grid = static_cast<std::size_t>(std::floor((core_hi + pad - lo) / step)) + 1;
    grid.resize(n_grid);
    for (std::size_t g = 0; g < n_grid; ++g) grid[g] = lo + static_cast<double>(g) * step;
    const std::vector<double> density = kde_activity(events, criteria.kde_bandwidth, grid);

    // Keep only the peaks whose grid point lies in this segment's core.
    const auto first = static_cast<std::size_t>(std::lround(pad / step));
    std::size_t last = first;
    while (last < n_grid && grid[last] < core_hi) ++last;
    const std::size_t from = first > 0 ? first - 1 : 0;
    const std::size_t to = std::min(n_grid, last + 1);
    ++out.segments;
    std::span<const double> dens(density.data() + from, to - from);
    std::span<const double> grd(grid.data() + from, to - from);
    std::size_t peaks = 0;
    for (std::size_t i = 1; i + 1 < dens.size(); ++i) {
      if (dens[i] > 0.0 && dens[i] > dens[i - 1] && dens[i] >= dens[i + 1]) ++peaks;
    }
    if (peaks < 3) {
      ++out.skipped_segments;
      continue;
    }
    auto c = find_candidate_centers(dens, grd, events);
    out.centers.insert(out.centers.end(), c.begin(), c.end());
  }
  std::sort(out.centers.begin(), out.centers.end());
  out.centers.erase(std::unique(out.centers.begin(), out.centers.end()), out.centers.end());
  return out;
}

std::vector<BurstInterval> group_bursts(std::span<const double> events,
                                        std::span<const std::size_t> centers,
                                        const BurstCriteria& criteria) {
  struct Group {
    std::size_t lo, hi;
  };
  std::vector<Group> groups;
  const std::size_t n = events.size();
  for (std::size_t c : centers) {
    if (c >= n) throw std::out_of_range("burst centre index out of range");
    const double tc = events[c];
    const auto a = static_cast<std::size_t>(
        std::lower_bound(events.begin(), events.end(), tc - criteria.center_window) - events.begin());
    const auto b = static_cast<std::size_t>(
        std::upper_bound(events.begin(), events.end(), tc + criteria.center_window) - events.begin()) - 1;

    // Chains inside the seed window; prefer the one holding the centre.
    std::size_t best_lo = c, best_hi = c;
    {
      std::size_t lo = c, hi = c;
      while (lo > a && events[lo] - events[lo - 1] <= criteria.max_gap) --lo;
      while (hi < b && events[hi + 1] - events[hi] <= criteria.max_gap) ++hi;
      best_lo = lo;
      best_hi = hi;
    }
    if (best_lo == best_hi) {
      std::size_t start = a;
      double best_dist = 0.0;
      for (std::size_t i = a + 1; i <= b + 1; ++i) {
        if (i == b + 1 || events[i] - events[i - 1] > criteria.max_gap) {
          const std::size_t len = i - start;
          const double dist = std::min(std::abs(events[start] - tc), std::abs(events[i - 1] - tc));
          const std::size_t best_len = best_hi - best_lo + 1;
          if (len > best_len || (len == best_len && len > 1 && dist < best_dist)) {
            best_lo = start;
            best_hi = i - 1;
            best_dist = dist;
          }
          start = i;
        }
      }
    }
    // Gap-chaining may carry the group past the seed window.
    while (best_lo > 0 && events[best_lo] - events[best_lo - 1] <= criteria.max_gap) --best_lo;
    while (best_hi + 1 < n && events[best_hi + 1] - events[best_hi] <= criteria.max_gap) ++best_hi;
    if (best_hi - best_lo + 1 >= criteria.min_events) groups.push_back({best_lo, best_hi});
  }
  std::sort(groups.begin(), groups.end(),
            [](const Group& x, const Group& y) { return x.lo < y.lo || (x.lo == y.lo && x.hi < y.hi); });
  std::vector<Group> merged;
  for (const auto& g : groups) {
    if (!merged.empty() && g.lo <= merged.back().hi) {
      merged.back().hi = std::max(merged.back().hi, g.hi);
    } else {
      merged.push_back(g);
    }
  }
  std::vector<BurstInterval> out;
  out.reserve(merged.size());
  for (const auto& g : merged) {
    BurstInterval b;
    b.t_start = events[g.lo];
    b.t_end = events[g.hi];
    b.n_events = g.hi - g.lo + 1;
    out.push_back(b);
  }
  return out;
}

std::vector<BurstInterval> detect_bursts(std::span<const double> events, double t_begin,
                                         double t_end, const BurstCriteria& criteria,
                                         int detector_id, std::size_t trace_index) {
  const CenterSearch search = find_burst_centers(events, t_begin, t_end, criteria);
  auto bursts = group_bursts(events, search.centers, criteria);
  for (auto& b : bursts) {
    b.detector_id = detector_id;
    b.trace_index = trace_index;
  }
  return bursts;
}

CoincidenceCounts classify_coincidence(std::span<BurstInterval> bursts1,
                                       std::span<BurstInterval> bursts2, double pad) {
  CoincidenceCounts counts;
  counts.n1 = bursts1.size();
  counts.n2 = bursts2.size();
  auto overlaps = [pad](const BurstInterval& a, const BurstInterval& b) {
    return a.t_start - pad <= b.t_end && b.t_start <= a.t_end + pad;
  };
  auto mark = [&](std::span<BurstInterval> mine, std::span<const BurstInterval> other) {
    std::size_t hits = 0;
    std::size_t j0 = 0;
    for (auto& a : mine) {
      while (j0 < other.size() && other[j0].t_end < a.t_start - pad) ++j0;
      a.correlated = false;
      for (std::size_t j = j0; j < other.size() && other[j].t_start <= a.t_end + pad; ++j) {
        if (overlaps(a, other[j])) {
          a.correlated = true;
          break;
        }
      }
      if (a.correlated) ++hits;
    }
    return hits;
  };
  counts.correlated1 = mark(bursts1, bursts2);
  counts.correlated2 = mark(bursts2, bursts1);

  std::size_t j = 0;
  for (const auto& a : bursts1) {
    while (j < bursts2.size() && bursts2[j].t_end < a.t_start - pad) ++j;
    if (j < bursts2.size() && overlaps(a, bursts2[j])) {
      ++counts.coincident_pairs;
      ++j;
    }
  }
  return counts;
}

std::vector<double> excise_bursts(std::span<const double> events,
                                  std::span<const BurstInterval> bursts) {
  const auto sorted = sorted_copy(bursts);
  std::vector<double> out;
  out.reserve(events.size());
  for (double t : events) {
    if (!inside_any(t, sorted)) out.push_back(t);
  }
  return out;
}

std::vector<double> burst_events(std::span<const double> events,
                                 std::span<const BurstInterval> bursts) {
  const auto sorted = sorted_copy(bursts);
  std::vector<double> out;
  for (double t : events) {
    if (inside_any(t, sorted)) out.push_back(t);
  }
  return out;
}

}  // namespace qpt
