#include "qpt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>

namespace qpt {
namespace {

bool overlaps(const BurstInterval& b, double start, double end, double pad) {
  return b.t_start - pad <= end && start <= b.t_end + pad;
}

double classifiable_length(double length, const ChargeShiftCriteria& c) {
  return std::max(0.0, length - 2.0 * c.window);
}

// Number of bins whose end-of-bin parity differs from the previous bin's,
// counting only flips inside [start, end].
std::size_t binned_transitions(std::span<const double> flips, double start, double end, double t0,
                               double bin_width) {
  auto lo = std::lower_bound(flips.begin(), flips.end(), start);
  auto hi = std::upper_bound(flips.begin(), flips.end(), end);
  std::size_t transitions = 0;
  long long current = -1;
  std::size_t parity = 0;
  for (auto it = lo; it != hi; ++it) {
    const auto bin = static_cast<long long>(std::ceil((*it - t0) / bin_width));
    if (bin != current) {
      transitions += parity;
      parity = 0;
      current = bin;
    }
    parity ^= 1;
  }
  return transitions + parity;
}

}  // namespace

AnalysisOptions::AnalysisOptions() {
  const SimConfig defaults = reference_sim_config();
  priors = {defaults.detectors[0].spec, defaults.detectors[1].spec};
}

void AnalysisOptions::validate() const {
  criteria.validate();
  if (!(postselect_fidelity >= 0.0 && postselect_fidelity < 1.0)) {
    throw std::invalid_argument("postselect_fidelity must be in [0, 1)");
  }
  if (!(step_threshold > 0.0)) throw std::invalid_argument("step_threshold must be > 0");
  if (!(charge_shift.window > 0.0 && charge_shift.displacement_sigmas > 0.0)) {
    throw std::invalid_argument("charge-shift window and threshold must be > 0");
  }
  if (!(correlation.bin_width > 0.0 && correlation.max_lag > 0.0)) {
    throw std::invalid_argument("correlation bin and lag range must be > 0");
  }
  for (const auto& p : priors) p.validate();
}

TraceAnalysis analyze_trace(const IQTrace& trace, const AnalysisOptions& options) {
  TraceAnalysis out;
  out.record = extract_events(trace, options.discrimination);
  out.record.retained = out.record.discrimination.fidelity > options.postselect_fidelity;
  out.bursts = detect_bursts(out.record.event_times, trace.t0, trace.t0 + trace.duration(),
                             options.criteria, trace.detector_id, trace.index);
  out.shifts = classify_charge_shifting_bursts(trace, out.record, out.bursts, options.charge_shift);
  return out;
}

std::array<IQTrace, 2> SimulatorSource::load_traces(std::size_t index) const {
  return {sim_.render_trace(1, index), sim_.render_trace(2, index)};
}

std::optional<std::array<SpectroscopyTrace, 2>> SimulatorSource::load_spectroscopy(std::size_t index) const {
  return std::array<SpectroscopyTrace, 2>{sim_.render_spectroscopy(1, index),
                                          sim_.render_spectroscopy(2, index)};
}

TraceResult analyze_index(const TraceSource& source, std::size_t index, const AnalysisOptions& options) {
  TraceResult r;
  r.index = index;
  {
    const auto traces = source.load_traces(index);
    r.t0 = traces[0].t0;
    r.length = traces[0].duration();
    for (int d = 0; d < 2; ++d) r.det[d] = analyze_trace(traces[d], options);
  }
  if (auto spectro = source.load_spectroscopy(index)) {
    for (int d = 0; d < 2; ++d) r.spectro[d] = spectro_fit((*spectro)[d], options.priors[d], options.spectro);
  }
  return r;
}

DatasetAccumulator::DatasetAccumulator(AnalysisOptions options) : options_(std::move(options)) {
  options_.validate();
}

void DatasetAccumulator::add(TraceResult result) {
  auto& det = result.det;
  classify_coincidence(det[0].bursts, det[1].bursts, options_.criteria.coincidence_pad);
  const std::array<bool, 2> retained{det[0].record.retained, det[1].record.retained};
  const bool pair = retained[0] && retained[1];
  std::array<std::vector<BurstInterval>, 2> used;

  for (int d = 0; d < 2; ++d) {
    const auto& events = det[d].record.event_times;
    for (std::size_t b = 0; b < det[d].bursts.size(); ++b) {
      if (!retained[d]) continue;
      switch (det[d].shifts[b].verdict) {
        case ShiftVerdict::kShifted:
          ++shifted_[d];
          ++classified_[d];
          shift_starts_[d].push_back(det[d].bursts[b].t_start);
          break;
        case ShiftVerdict::kUnchanged:
          ++classified_[d];
          used[d].push_back(det[d].bursts[b]);
          break;
        case ShiftVerdict::kUnclassifiable:
          ++unclassifiable_[d];
          break;
      }
    }
    all_bursts_[d].insert(all_bursts_[d].end(), det[d].bursts.begin(), det[d].bursts.end());
    if (result.spectro[d]) epochs_[d].push_back({result.t0, *result.spectro[d]});
    if (!retained[d]) continue;

    events_retained_[d] += events.size();
    bursts_in_retained_[d] += det[d].bursts.size();
    const auto base = excise_bursts(events, det[d].bursts);
    const auto bw = waiting_times(base);
    baseline_waits_[d].insert(baseline_waits_[d].end(), bw.begin(), bw.end());
    const auto iw = intra_burst_waits(events, used[d]);
    burst_waits_[d].insert(burst_waits_[d].end(), iw.begin(), iw.end());
    used_bursts_[d].insert(used_bursts_[d].end(), used[d].begin(), used[d].end());
    if (pair) {
      const auto be = burst_events(events, used[d]);
      burst_events_[d].insert(burst_events_[d].end(), be.begin(), be.end());
      baseline_events_[d].insert(baseline_events_[d].end(), base.begin(), base.end());
    }
  }

  if (pair) {
    pair_segments_.push_back({result.t0, result.t0 + result.length});
    coincidence_.n1 += used[0].size();
    coincidence_.n2 += used[1].size();
    for (const auto& b : used[0]) coincidence_.correlated1 += b.correlated ? 1 : 0;
    for (const auto& b : used[1]) coincidence_.correlated2 += b.correlated ? 1 : 0;
    auto u0 = used[0];
    auto u1 = used[1];
    coincidence_.coincident_pairs +=
        classify_coincidence(u0, u1, options_.criteria.coincidence_pad).coincident_pairs;
  }

  if (pair) {
    std::array<std::vector<BurstInterval>, 2> shifted;
    for (int d = 0; d < 2; ++d) {
      for (const auto& b : det[d].bursts) {
        if (b.charge_shifting) shifted[d].push_back(b);
      }
    }
    coincident_shifts_ +=
        classify_coincidence(shifted[0], shifted[1], options_.criteria.coincidence_pad).coincident_pairs;
  }

  traces_.push_back({result.index, result.t0, result.length, retained});
  ++count_;
}

AnalysisReport DatasetAccumulator::finish(const GroundTruthLog* truth, const SimConfig* config) const {
  AnalysisReport rep;
  rep.options = options_;
  rep.n_traces = count_;
  if (count_ == 0) throw std::invalid_argument("no traces to report on");
  rep.trace_length = traces_.front().length;
  double first = traces_.front().t0, last = traces_.front().t0 + traces_.front().length;
  std::array<double, 2> retained_time{0.0, 0.0};
  rep.charge_shift_exposure_h = 0.0;
  for (const auto& t : traces_) {
    rep.monitored_s += t.length;
    first = std::min(first, t.t0);
    last = std::max(last, t.t0 + t.length);
    if (t.retained[0] && t.retained[1]) ++rep.pairs_retained;
    for (int d = 0; d < 2; ++d) {
      if (t.retained[d]) {
        ++rep.detectors[d].retained;
        retained_time[d] += classifiable_length(t.length, options_.charge_shift);
      }
    }
    if (t.retained[0] && t.retained[1]) {
      rep.charge_shift_exposure_h += classifiable_length(t.length, options_.charge_shift) / 3600.0;
    }
  }
  rep.wall_s = last - first;
  rep.duty_cycle = rep.wall_s > 0.0 ? rep.monitored_s / rep.wall_s : 1.0;
  rep.retention_fraction = static_cast<double>(rep.detectors[0].retained + rep.detectors[1].retained) /
                           (2.0 * static_cast<double>(count_));

  for (int d = 0; d < 2; ++d) {
    auto& dr = rep.detectors[d];
    dr.detector_id = d + 1;
    dr.traces = count_;
    dr.events_retained = events_retained_[d];
    if (!baseline_waits_[d].empty()) dr.baseline = fit_rate(baseline_waits_[d], RateSubset::kBaseline);
    if (!burst_waits_[d].empty()) dr.burst = fit_rate(burst_waits_[d], RateSubset::kBurst);
    dr.bursts_detected = bursts_in_retained_[d];
    dr.bursts_used = used_bursts_[d].size();
    dr.burst_exposure_s = retained_time[d];
    dr.burst_rate_per_min =
        retained_time[d] > 0.0 ? 60.0 * static_cast<double>(dr.bursts_used) / retained_time[d] : 0.0;
    if (!used_bursts_[d].empty()) dr.durations = burst_duration_stats(used_bursts_[d]);
    dr.correlated = d == 0 ? coincidence_.correlated1 : coincidence_.correlated2;
    dr.coincidence_fraction = d == 0 ? coincidence_.fraction1() : coincidence_.fraction2();

    const double amp = estimate_splitting_amp(epochs_[d]);
    if (amp > 0.0) {
      dr.charge = charge_tracking(epochs_[d], amp, options_.step_threshold);
      for (std::size_t j = 0; j < dr.charge.step_flags.size(); ++j) {
        if (!dr.charge.step_flags[j]) continue;
        const double t_prev = epochs_[d][dr.charge.epoch_index[j] - 1].time;
        const double t_this = dr.charge.times[j];
        const bool hit = std::any_of(shift_starts_[d].begin(), shift_starts_[d].end(),
                                     [&](double t) { return t >= t_prev && t < t_this; });
        dr.steps_with_shift_burst += hit ? 1 : 0;
      }
      const std::size_t steps = dr.charge.step_count();
      dr.step_burst_fraction = steps ? static_cast<double>(dr.steps_with_shift_burst) / steps : 0.0;
      dr.duty_cycle_bound = duty_cycle_upper_bound(dr.step_burst_fraction, rep.duty_cycle);
    } else {
      dr.charge.n_epochs = epochs_[d].size();
      dr.charge.n_unresolvable = epochs_[d].size();
    }

    dr.charge_shifting = shifted_[d];
    dr.shift_classified = classified_[d];
    dr.shift_unclassifiable = unclassifiable_[d];
    dr.charge_shift_exposure_h = retained_time[d] / 3600.0;
    dr.charge_shifting_rate_per_h =
        retained_time[d] > 0.0 ? static_cast<double>(shifted_[d]) / dr.charge_shift_exposure_h : 0.0;
    dr.bursts = all_bursts_[d];
  }
  rep.coincidence = coincidence_;
  rep.coincident_charge_shifting = coincident_shifts_;
  rep.coincident_charge_shifting_rate_per_h =
      rep.charge_shift_exposure_h > 0.0 ? static_cast<double>(coincident_shifts_) / rep.charge_shift_exposure_h
                                        : 0.0;

  rep.correlation_all = cross_correlation(burst_events_[0], burst_events_[1], pair_segments_, options_.correlation);
  rep.correlation_removed =
      cross_correlation(baseline_events_[0], baseline_events_[1], pair_segments_, options_.correlation);
  rep.surrogate_all = surrogate_baseline(burst_events_[0], burst_events_[1], pair_segments_, options_.surrogates,
                                         options_.surrogate_seed, options_.correlation);
  rep.surrogate_removed = surrogate_baseline(baseline_events_[0], baseline_events_[1], pair_segments_,
                                             options_.surrogates, options_.surrogate_seed, options_.correlation);

  if (truth && config) {
    ValidationReport v;
    v.strikes = truth->strikes.size();
    for (const auto& s : truth->strikes) {
      if (s.source == StrikeSource::kChargeJump && s.hits[0] && s.hits[1]) ++v.shared_jumps;
    }
    const double pad = options_.criteria.coincidence_pad;
    for (int d = 0; d < 2; ++d) {
      auto& dv = v.detectors[d];
      const auto& dt = truth->detectors[d];
      const auto& dr = rep.detectors[d];
      dv.configured_rate_slow = config->detectors[d].rate_slow;
      dv.configured_rate_fast = config->detectors[d].rate_fast;
      if (dr.baseline && dv.configured_rate_slow > 0.0) {
        dv.baseline_rate_error = (dr.baseline->rate - dv.configured_rate_slow) / dv.configured_rate_slow;
      }
      for (const auto& t : traces_) {
        const double t_end = t.t0 + t.length;
        for (const auto& j : dt.charge_jumps) {
          if (j.time >= t.t0 && j.time < t_end && (j.with_burst || j.shared)) ++dv.injected_shift_jumps;
        }
        if (!t.retained[d]) continue;
        auto w_lo = std::lower_bound(dt.burst_intervals.begin(), dt.burst_intervals.end(), t.t0,
                                     [](const Interval& w, double x) { return w.end < x; });
        auto b_lo = std::lower_bound(all_bursts_[d].begin(), all_bursts_[d].end(), t.t0,
                                     [](const BurstInterval& b, double x) { return b.t_start < x; });
        auto b_hi = std::lower_bound(b_lo, all_bursts_[d].end(), t_end,
                                     [](const BurstInterval& b, double x) { return b.t_start < x; });
        for (auto w = w_lo; w != dt.burst_intervals.end() && w->start < t_end; ++w) {
          const double s = std::max(w->start, t.t0), e = std::min(w->end, t_end);
          if (e > s) {
            dv.truth_fast_exposure_s += e - s;
            auto f_lo = std::upper_bound(dt.flip_times.begin(), dt.flip_times.end(), s);
            auto f_hi = std::upper_bound(dt.flip_times.begin(), dt.flip_times.end(), e);
            dv.truth_fast_flips += static_cast<std::size_t>(f_hi - f_lo);
          }
          if (w->start < t.t0 || w->end > t_end) continue;
          const double bw = config->bin_width;
          if (binned_transitions(dt.flip_times, w->start, w->end, t.t0, bw) < options_.criteria.min_events) continue;
          ++dv.truth_bursts;
          if (std::any_of(b_lo, b_hi, [&](const BurstInterval& b) { return overlaps(b, w->start, w->end, pad); })) {
            ++dv.recalled;
          }
        }
        for (auto b = b_lo; b != b_hi; ++b) {
          if (!b->charge_shifting && b->t_start - t.t0 >= options_.charge_shift.window &&
              t_end - b->t_end >= options_.charge_shift.window) {
            ++dv.detected;
            const bool hit = std::any_of(w_lo, dt.burst_intervals.end(), [&](const Interval& w) {
              return w.start < t_end && overlaps(*b, w.start, w.end, pad);
            });
            dv.matched += hit ? 1 : 0;
          }
        }
      }
      if (dv.truth_fast_exposure_s > 0.0) {
        dv.truth_fast_rate = static_cast<double>(dv.truth_fast_flips) / dv.truth_fast_exposure_s;
        if (dr.burst) dv.fast_rate_ratio = dr.burst->rate / dv.truth_fast_rate;
      }
      dv.precision = dv.detected ? static_cast<double>(dv.matched) / dv.detected : 0.0;
      dv.recall = dv.truth_bursts ? static_cast<double>(dv.recalled) / dv.truth_bursts : 0.0;

      const auto& cs = dr.charge;
      for (std::size_t j = 1; j < cs.epoch_index.size(); ++j) {
        if (cs.epoch_index[j] != cs.epoch_index[j - 1] + 1) continue;
        const double a = fold_offset_charge(truth->ng_at(d + 1, cs.times[j - 1]));
        const double b = fold_offset_charge(truth->ng_at(d + 1, cs.times[j]));
        const bool real = std::abs(b - a) > options_.step_threshold;
        dv.truth_steps += real ? 1 : 0;
        if (cs.step_flags[j]) {
          if (real) {
            ++dv.flagged_truth_steps;
          } else {
            ++dv.false_steps;
          }
        }
      }
    }
    rep.validation = v;
  }
  return rep;
}

unsigned default_thread_count() {
  if (const char* env = std::getenv("QPT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<unsigned>(v);
    throw std::invalid_argument("QPT_THREADS must be a positive integer");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

AnalysisReport run_analysis(const TraceSource& source, const AnalysisOptions& options, unsigned threads,
                            const std::function<void(const TraceResult&)>& on_result) {
  DatasetAccumulator acc(options);
  const std::size_t n = source.trace_count();
  threads = std::max(1u, threads);
  // Batches of `threads` indices; results are merged in index order.
  for (std::size_t base = 0; base < n; base += threads) {
    const std::size_t m = std::min<std::size_t>(threads, n - base);
    std::vector<std::optional<TraceResult>> batch(m);
    std::vector<std::exception_ptr> errors(m);
    auto work = [&](std::size_t i) {
      try {
        batch[i] = analyze_index(source, base + i, options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    };
    if (m == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      pool.reserve(m);
      for (std::size_t i = 0; i < m; ++i) pool.emplace_back(work, i);
      for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < m; ++i) {
      if (errors[i]) std::rethrow_exception(errors[i]);
      if (on_result) on_result(*batch[i]);
      acc.add(std::move(*batch[i]));
    }
  }
  return acc.finish(source.truth(), source.sim_config());
}

}  // namespace qpt
