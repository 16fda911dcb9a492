#include "qpt/charge.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qpt/physics.hpp"

namespace qpt {
namespace {

using Vec4 = std::array<double, 4>;

Vec4 sample(const IQTrace& tr, std::size_t k) {
  return {tr.samples_plus[k].real(), tr.samples_plus[k].imag(), tr.samples_minus[k].real(),
          tr.samples_minus[k].imag()};
}

double dist2(const Vec4& a, const Vec4& b) {
  double s = 0.0;
  for (int j = 0; j < 4; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

struct Clusters {
  std::array<Vec4, 2> centroid{};
  std::array<std::size_t, 2> count{0, 0};
  std::array<double, 2> sq_spread{0.0, 0.0};  // sum of squared distances to the centroid
};

Clusters two_means(const IQTrace& tr, std::size_t lo, std::size_t hi, std::array<Vec4, 2> init,
                   int max_iterations) {
  Clusters c;
  c.centroid = init;
  std::vector<unsigned char> label(hi - lo, 0);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = it == 0;
    std::array<Vec4, 2> sum{};
    std::array<std::size_t, 2> cnt{0, 0};
    for (std::size_t k = lo; k < hi; ++k) {
      const Vec4 v = sample(tr, k);
      const unsigned char l = dist2(v, c.centroid[1]) < dist2(v, c.centroid[0]) ? 1 : 0;
      if (l != label[k - lo]) changed = true;
      label[k - lo] = l;
      for (int j = 0; j < 4; ++j) sum[l][j] += v[j];
      ++cnt[l];
    }
    for (int l = 0; l < 2; ++l) {
      if (cnt[l] == 0) continue;
      for (int j = 0; j < 4; ++j) c.centroid[l][j] = sum[l][j] / static_cast<double>(cnt[l]);
    }
    c.count = cnt;
    if (!changed) break;
  }
  c.sq_spread = {0.0, 0.0};
  for (std::size_t k = lo; k < hi; ++k) {
    const auto l = label[k - lo];
    c.sq_spread[l] += dist2(sample(tr, k), c.centroid[l]);
  }
  return c;
}

}  // namespace

std::size_t ChargeSeries::step_count() const {
  return static_cast<std::size_t>(std::count(step_flags.begin(), step_flags.end(), 1));
}

double estimate_splitting_amp(std::span<const ChargeEpoch> epochs) {
  double amp = 0.0;
  for (const auto& e : epochs) {
    if (e.fit.usable()) amp = std::max(amp, e.fit.splitting_hz());
  }
  return amp;
}

ChargeSeries charge_tracking(std::span<const ChargeEpoch> epochs, double amp, double step_threshold) {
  if (!(amp > 0.0)) throw std::invalid_argument("splitting amplitude must be > 0");
  ChargeSeries s;
  s.amp = amp;
  s.n_epochs = epochs.size();
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    if (i > 0 && !(epochs[i].time > epochs[i - 1].time)) {
      throw std::invalid_argument("charge epochs must be strictly time ordered");
    }
    if (!epochs[i].fit.usable()) {
      ++s.n_unresolvable;
      continue;
    }
    const auto est = invert_offset_charge(epochs[i].fit.splitting_hz(), amp);
    bool step = false;
    if (!s.epoch_index.empty() && s.epoch_index.back() + 1 == i) {
      step = std::abs(est.ng - s.ng_values.back()) > step_threshold;
    }
    s.epoch_index.push_back(i);
    s.times.push_back(epochs[i].time);
    s.ng_values.push_back(est.ng);
    s.clamped.push_back(est.clamped ? 1 : 0);
    s.step_flags.push_back(step ? 1 : 0);
  }
  return s;
}

ShiftMeasurement measure_charge_shift(const IQTrace& trace, const EventRecord& record,
                                      const BurstInterval& burst, const ChargeShiftCriteria& criteria) {
  ShiftMeasurement m;
  const std::size_t n = trace.size();
  if (record.binary_record.size() != n) throw std::invalid_argument("record and trace differ in length");
  const double bw = trace.bin_width;
  const double t_lo = burst.t_start - criteria.window;
  const double t_hi = burst.t_end + criteria.window;
  if (t_lo < trace.t0 || t_hi > trace.t0 + trace.duration()) return m;

  // Bin k covers the instant t0 + k*bw; event times sit on those instants.
  auto index_of = [&](double t) {
    return static_cast<std::size_t>(std::clamp(std::llround((t - trace.t0) / bw), 0LL,
                                                static_cast<long long>(n)));
  };
  const std::size_t b0 = index_of(t_lo), b1 = index_of(burst.t_start);
  const std::size_t a0 = index_of(burst.t_end) + 1, a1 = std::min(n, index_of(t_hi) + 1);
  if (b1 <= b0 || a1 <= a0) return m;

  std::array<Vec4, 2> init{};
  std::array<std::size_t, 2> cnt{0, 0};
  for (std::size_t k = 0; k < n; ++k) {
    const int l = record.binary_record[k] ? 1 : 0;
    const Vec4 v = sample(trace, k);
    for (int j = 0; j < 4; ++j) init[l][j] += v[j];
    ++cnt[l];
  }
  for (int l = 0; l < 2; ++l) {
    if (cnt[l] == 0) continue;
    for (int j = 0; j < 4; ++j) init[l][j] /= static_cast<double>(cnt[l]);
  }
  if (cnt[0] == 0) init[0] = init[1];
  if (cnt[1] == 0) init[1] = init[0];

  const Clusters before = two_means(trace, b0, b1, init, criteria.max_iterations);
  const Clusters after = two_means(trace, a0, a1, init, criteria.max_iterations);

  double spread = 0.0;
  std::size_t dof = 0;
  for (const Clusters* c : {&before, &after}) {
    for (int l = 0; l < 2; ++l) {
      if (c->count[l] < criteria.min_cluster_size) continue;
      spread += c->sq_spread[l];
      dof += 4 * (c->count[l] - 1);
    }
  }
  if (dof == 0) return m;
  m.pooled_sigma = std::sqrt(spread / static_cast<double>(dof));

  // Both windows start from the same labelled centroids, so cluster l is the
  // same parity state on each side. With all four clusters present the better
  // of the two pairings is used in case a shift swapped them.
  auto present = [&](const Clusters& c, int l) { return c.count[l] >= criteria.min_cluster_size; };
  auto dist = [](const Vec4& a, const Vec4& b) { return std::sqrt(dist2(a, b)); };
  if (present(before, 0) && present(before, 1) && present(after, 0) && present(after, 1)) {
    const double same = std::max(dist(before.centroid[0], after.centroid[0]),
                                 dist(before.centroid[1], after.centroid[1]));
    const double swapped = std::max(dist(before.centroid[0], after.centroid[1]),
                                    dist(before.centroid[1], after.centroid[0]));
    m.displacement = std::min(same, swapped);
  } else {
    bool any = false;
    for (int l = 0; l < 2; ++l) {
      if (!present(before, l) || !present(after, l)) continue;
      m.displacement = std::max(m.displacement, dist(before.centroid[l], after.centroid[l]));
      any = true;
    }
    if (!any) return m;
  }
  m.verdict = m.displacement > criteria.displacement_sigmas * m.pooled_sigma ? ShiftVerdict::kShifted
                                                                              : ShiftVerdict::kUnchanged;
  return m;
}

std::vector<ShiftMeasurement> classify_charge_shifting_bursts(const IQTrace& trace,
                                                              const EventRecord& record,
                                                              std::span<BurstInterval> bursts,
                                                              const ChargeShiftCriteria& criteria) {
  std::vector<ShiftMeasurement> out;
  out.reserve(bursts.size());
  for (auto& b : bursts) {
    out.push_back(measure_charge_shift(trace, record, b, criteria));
    b.charge_shifting = out.back().verdict == ShiftVerdict::kShifted;
  }
  return out;
}

}  // namespace qpt
