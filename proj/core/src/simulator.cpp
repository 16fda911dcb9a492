#include "qpt/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "qpt/rng.hpp"

namespace qpt {
namespace {

constexpr double kSecondsPerHour = 3600.0;

// Random stream identifiers; changing them changes every simulated byte.
enum Stream : std::uint64_t {
  kStrikeStream = 1,
  kJumpStream = 2,       // + detector index
  kSharedJumpStream = 4,
  kDriftStream = 5,
  kFlipStream = 6,       // + detector index
  kParityStream = 8,
  kNoiseStream = 100,    // + detector index
  kSpectroStream = 200,  // + detector index
};

double wrap_unit(double x) {
  double w = x - std::floor(x);
  return w >= 1.0 ? 0.0 : w;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

int checked_detector(int detector_id) {
  if (detector_id != 1 && detector_id != 2) {
    throw std::invalid_argument("detector_id must be 1 or 2");
  }
  return detector_id - 1;
}

std::vector<double> poisson_times(Rng& rng, double rate, double t_begin, double t_end) {
  std::vector<double> out;
  if (rate <= 0.0) return out;
  double t = t_begin;
  for (;;) {
    t += rng.exponential(1.0 / rate);
    if (t >= t_end) break;
    out.push_back(t);
  }
  return out;
}

std::vector<Interval> merge_windows(std::vector<Interval> windows) {
  std::sort(windows.begin(), windows.end(),
            [](const Interval& a, const Interval& b) { return a.start < b.start; });
  std::vector<Interval> merged;
  for (const auto& w : windows) {
    if (!merged.empty() && w.start <= merged.back().end) {
      merged.back().end = std::max(merged.back().end, w.end);
    } else {
      merged.push_back(w);
    }
  }
  return merged;
}

}  // namespace

void DetectorSimParams::validate() const {
  spec.validate();
  require(std::isfinite(rate_slow) && rate_slow >= 0.0, "rate_slow must be >= 0");
  require(std::isfinite(rate_fast) && rate_fast >= 0.0, "rate_fast must be >= 0");
  require(rate_slow == 0.0 || rate_fast > rate_slow, "rate_fast must exceed rate_slow");
  require(std::isfinite(mean_burst_duration) && mean_burst_duration > 0.0,
          "mean_burst_duration must be > 0");
  require(std::isfinite(charge_jump_rate) && charge_jump_rate >= 0.0,
          "charge_jump_rate must be >= 0");
  require(jump_burst_fraction >= 0.0 && jump_burst_fraction <= 1.0,
          "jump_burst_fraction must be in [0, 1]");
  require(std::isfinite(charge_drift_step) && charge_drift_step >= 0.0,
          "charge_drift_step must be >= 0");
  require(std::isfinite(noise_sigma) && noise_sigma > 0.0, "noise_sigma must be > 0");
  require(std::isfinite(rabi) && rabi >= 0.0, "rabi must be >= 0");
  require(std::isfinite(initial_ng), "initial_ng must be finite");
}

void SimConfig::validate() const {
  for (const auto& d : detectors) d.validate();
  require(std::isfinite(burst_event_rate) && burst_event_rate >= 0.0,
          "burst_event_rate must be >= 0");
  const double probs[] = {p_both, p_only[0], p_only[1]};
  for (double p : probs) require(p >= 0.0 && p <= 1.0, "strike probabilities must be in [0, 1]");
  require(std::abs(p_both + p_only[0] + p_only[1] - 1.0) < 1e-9,
          "strike probabilities must sum to 1");
  require(std::isfinite(shared_jump_rate) && shared_jump_rate >= 0.0,
          "shared_jump_rate must be >= 0");
  require(std::isfinite(bin_width) && bin_width > 0.0, "bin_width must be > 0");
  require(std::isfinite(trace_length) && trace_length > 0.0, "trace_length must be > 0");
  const double bins = trace_length / bin_width;
  require(std::abs(bins - std::round(bins)) < 1e-6 && std::round(bins) >= 1.0,
          "bin_width must divide trace_length");
  require(std::isfinite(dead_time) && dead_time >= 0.0, "dead_time must be >= 0");
  require(std::isfinite(duration) && duration >= trace_length,
          "duration must cover at least one trace_length");
  require(spectroscopy.points >= 16, "spectroscopy.points must be >= 16");
  require(spectroscopy.noise_sigma >= 0.0, "spectroscopy.noise_sigma must be >= 0");
}

std::size_t SimConfig::trace_count() const {
  const double period = trace_length + dead_time;
  return static_cast<std::size_t>(std::floor((duration - trace_length) / period + 1e-9)) + 1;
}

std::size_t SimConfig::bins_per_trace() const {
  return static_cast<std::size_t>(std::llround(trace_length / bin_width));
}

double SimConfig::trace_start(std::size_t index) const {
  return static_cast<double>(index) * (trace_length + dead_time);
}

double GroundTruthLog::ng_at(int detector_id, double t) const {
  const auto& series = detectors[checked_detector(detector_id)].ng_series;
  auto it = std::upper_bound(series.begin(), series.end(), t,
                             [](double v, const NgPoint& p) { return v < p.time; });
  if (it == series.begin()) return series.front().ng;
  return std::prev(it)->ng;
}

Parity GroundTruthLog::parity_at(int detector_id, double t) const {
  const auto& d = detectors[checked_detector(detector_id)];
  auto n = std::upper_bound(d.flip_times.begin(), d.flip_times.end(), t) - d.flip_times.begin();
  return (n % 2 == 0) ? d.initial_parity : flipped(d.initial_parity);
}

std::size_t GroundTruthLog::flips_between(int detector_id, double t_begin, double t_end) const {
  const auto& f = detectors[checked_detector(detector_id)].flip_times;
  auto lo = std::lower_bound(f.begin(), f.end(), t_begin);
  auto hi = std::lower_bound(f.begin(), f.end(), t_end);
  return static_cast<std::size_t>(hi - lo);
}

void IQTrace::validate() const {
  require(detector_id == 1 || detector_id == 2, "detector_id must be 1 or 2");
  require(samples_plus.size() == samples_minus.size(), "sample streams differ in length");
  require(bin_width > 0.0 && std::isfinite(bin_width), "bin_width must be > 0");
  for (std::size_t i = 0; i < samples_plus.size(); ++i) {
    const auto& a = samples_plus[i];
    const auto& b = samples_minus[i];
    require(std::isfinite(a.real()) && std::isfinite(a.imag()) && std::isfinite(b.real()) &&
                std::isfinite(b.imag()),
            "non-finite IQ sample");
  }
}

void SpectroscopyTrace::validate() const {
  require(!freqs.empty(), "spectroscopy grid is empty");
  require(mag_plus.size() == freqs.size() && mag_minus.size() == freqs.size(),
          "spectroscopy columns differ in length");
  require(std::is_sorted(freqs.begin(), freqs.end()), "spectroscopy grid must be ascending");
}

Simulator::Simulator(SimConfig config) : config_(std::move(config)) {
  config_.validate();
  const double horizon = config_.duration;
  const std::size_t n_traces = config_.trace_count();
  truth_.trace_length = config_.trace_length;
  truth_.duration = horizon;
  for (std::size_t k = 0; k < n_traces; ++k) truth_.trace_starts.push_back(config_.trace_start(k));

  // Burst strikes from the background process.
  {
    Rng rng = Rng::for_stream(config_.seed, kStrikeStream);
    for (double t : poisson_times(rng, config_.burst_event_rate, 0.0, horizon)) {
      Strike s;
      s.time = t;
      const double u = rng.uniform();
      if (u < config_.p_both) {
        s.hits = {true, true};
      } else if (u < config_.p_both + config_.p_only[0]) {
        s.hits = {true, false};
      } else {
        s.hits = {false, true};
      }
      for (int d = 0; d < 2; ++d) {
        if (s.hits[d]) s.durations[d] = rng.exponential(config_.detectors[d].mean_burst_duration);
      }
      truth_.strikes.push_back(s);
    }
  }

  // Offset-charge jumps, some of which carry their own burst strike.
  for (int d = 0; d < 2; ++d) {
    const auto& p = config_.detectors[d];
    Rng rng = Rng::for_stream(config_.seed, kJumpStream + d);
    for (double t : poisson_times(rng, p.charge_jump_rate / kSecondsPerHour, 0.0, horizon)) {
      ChargeJump j;
      j.time = t;
      j.delta = rng.uniform(-0.25, 0.25);
      j.with_burst = rng.uniform() < p.jump_burst_fraction;
      const double dur = rng.exponential(p.mean_burst_duration);
      if (j.with_burst) {
        Strike s;
        s.time = t;
        s.hits[d] = true;
        s.durations[d] = dur;
        s.source = StrikeSource::kChargeJump;
        truth_.strikes.push_back(s);
      }
      truth_.detectors[d].charge_jumps.push_back(j);
    }
  }
  {
    Rng rng = Rng::for_stream(config_.seed, kSharedJumpStream);
    for (double t : poisson_times(rng, config_.shared_jump_rate / kSecondsPerHour, 0.0, horizon)) {
      Strike s;
      s.time = t;
      s.hits = {true, true};
      s.source = StrikeSource::kChargeJump;
      for (int d = 0; d < 2; ++d) {
        ChargeJump j;
        j.time = t;
        j.delta = rng.uniform(-0.25, 0.25);
        j.with_burst = true;
        j.shared = true;
        truth_.detectors[d].charge_jumps.push_back(j);
        s.durations[d] = rng.exponential(config_.detectors[d].mean_burst_duration);
      }
      truth_.strikes.push_back(s);
    }
  }
  std::stable_sort(truth_.strikes.begin(), truth_.strikes.end(),
                   [](const Strike& a, const Strike& b) { return a.time < b.time; });

  Rng drift_rng = Rng::for_stream(config_.seed, kDriftStream);
  Rng parity_rng = Rng::for_stream(config_.seed, kParityStream);
  for (int d = 0; d < 2; ++d) {
    const auto& p = config_.detectors[d];
    auto& truth = truth_.detectors[d];
    std::stable_sort(truth.charge_jumps.begin(), truth.charge_jumps.end(),
                     [](const ChargeJump& a, const ChargeJump& b) { return a.time < b.time; });

    // n_g: drift steps at each recalibration boundary plus the jumps.
    struct Step {
      double time;
      double delta;
    };
    std::vector<Step> steps;
    for (std::size_t k = 1; k < n_traces; ++k) {
      const double step = p.charge_drift_step * drift_rng.normal();
      if (p.charge_drift_step > 0.0) steps.push_back({truth_.trace_starts[k], step});
    }
    for (const auto& j : truth.charge_jumps) steps.push_back({j.time, j.delta});
    std::stable_sort(steps.begin(), steps.end(),
                     [](const Step& a, const Step& b) { return a.time < b.time; });
    double ng = wrap_unit(p.initial_ng);
    truth.ng_series.push_back({0.0, ng});
    for (const auto& s : steps) {
      ng = wrap_unit(ng + s.delta);
      truth.ng_series.push_back({s.time, ng});
    }

    std::vector<Interval> windows;
    for (const auto& s : truth_.strikes) {
      if (s.hits[d]) windows.push_back({s.time, std::min(horizon, s.time + s.durations[d])});
    }
    truth.burst_intervals = merge_windows(std::move(windows));

    // Piecewise-homogeneous flip process: fast inside the merged windows.
    Rng flip_rng = Rng::for_stream(config_.seed, kFlipStream + d);
    double cursor = 0.0;
    for (const auto& w : truth.burst_intervals) {
      auto slow = poisson_times(flip_rng, p.rate_slow, cursor, w.start);
      truth.flip_times.insert(truth.flip_times.end(), slow.begin(), slow.end());
      auto fast = poisson_times(flip_rng, p.rate_fast, w.start, w.end);
      truth.flip_times.insert(truth.flip_times.end(), fast.begin(), fast.end());
      cursor = w.end;
    }
    auto tail = poisson_times(flip_rng, p.rate_slow, cursor, horizon);
    truth.flip_times.insert(truth.flip_times.end(), tail.begin(), tail.end());
    truth.initial_parity = parity_rng.uniform() < 0.5 ? Parity::kEven : Parity::kOdd;
  }
}

IQTrace Simulator::render_trace(int detector_id, std::size_t index) const {
  const int d = checked_detector(detector_id);
  if (index >= trace_count()) throw std::out_of_range("trace index out of range");
  const auto& p = config_.detectors[d];
  const auto& truth = truth_.detectors[d];
  const std::size_t n = config_.bins_per_trace();
  const double t0 = truth_.trace_starts[index];
  const double bw = config_.bin_width;

  IQTrace trace;
  trace.detector_id = detector_id;
  trace.index = index;
  trace.t0 = t0;
  trace.bin_width = bw;
  const ParityFrequencies tones = parity_frequencies(truth_.ng_at(detector_id, t0), p.spec);
  trace.drive_freqs = {tones.plus, tones.minus};
  trace.samples_plus.resize(n);
  trace.samples_minus.resize(n);

  // Cached centroids for both parities at the current offset charge.
  double cached_ng = std::numeric_limits<double>::quiet_NaN();
  std::array<std::complex<double>, 2> c_plus{}, c_minus{};
  auto refresh = [&](double ng) {
    const ParityFrequencies q = parity_frequencies(ng, p.spec);
    const double qubit[2] = {q.plus, q.minus};
    for (int s = 0; s < 2; ++s) {
      c_plus[s] = transmission_full(tones.plus - qubit[s], p.spec, p.rabi);
      c_minus[s] = transmission_full(tones.minus - qubit[s], p.spec, p.rabi);
    }
    cached_ng = ng;
  };

  const auto& flips = truth.flip_times;
  auto flip_it = std::upper_bound(flips.begin(), flips.end(), t0);
  std::size_t flips_so_far = static_cast<std::size_t>(flip_it - flips.begin());
  const auto& series = truth.ng_series;
  auto ng_it = std::upper_bound(series.begin(), series.end(), t0,
                                [](double v, const NgPoint& q) { return v < q.time; });
  double ng = std::prev(ng_it)->ng;
  refresh(ng);

  Rng rng = Rng::for_stream(config_.seed, kNoiseStream + static_cast<std::uint64_t>(d), index);
  const double sigma = p.noise_sigma;
  for (std::size_t j = 0; j < n; ++j) {
    const double t = t0 + static_cast<double>(j + 1) * bw;  // state sampled at the bin end
    while (flip_it != flips.end() && *flip_it <= t) {
      ++flip_it;
      ++flips_so_far;
    }
    while (ng_it != series.end() && ng_it->time <= t) {
      ng = ng_it->ng;
      ++ng_it;
    }
    if (ng != cached_ng) refresh(ng);
    const bool even = (flips_so_far % 2 == 0) == (truth.initial_parity == Parity::kEven);
    const int s = even ? 0 : 1;
    const double n0 = rng.normal(), n1 = rng.normal(), n2 = rng.normal(), n3 = rng.normal();
    trace.samples_plus[j] = {c_plus[s].real() + sigma * n0, c_plus[s].imag() + sigma * n1};
    trace.samples_minus[j] = {c_minus[s].real() + sigma * n2, c_minus[s].imag() + sigma * n3};
  }
  return trace;
}

SpectroscopyTrace Simulator::render_spectroscopy(int detector_id, std::size_t index) const {
  const int d = checked_detector(detector_id);
  if (index >= trace_count()) throw std::out_of_range("trace index out of range");
  const auto& p = config_.detectors[d];
  const double t0 = truth_.trace_starts[index];
  const auto grid = spectroscopy_grid(p.spec, config_.spectroscopy);
  const std::uint64_t seed =
      Rng::for_stream(config_.seed, kSpectroStream + static_cast<std::uint64_t>(d), index).next_u64();
  SpectroscopyTrace out = synth_spectroscopy(p.spec, truth_.ng_at(detector_id, t0), p.rabi, grid,
                                             config_.spectroscopy.noise_sigma, seed);
  out.detector_id = detector_id;
  out.index = index;
  out.t0 = t0;
  return out;
}

SimulationRun simulate_run(const SimConfig& config) {
  Simulator sim(config);
  SimulationRun run;
  run.traces.reserve(sim.trace_count());
  for (std::size_t k = 0; k < sim.trace_count(); ++k) {
    run.traces.push_back({sim.render_trace(1, k), sim.render_trace(2, k)});
  }
  run.truth = sim.truth();
  return run;
}

std::vector<double> spectroscopy_grid(const DetectorSpec& spec, const SpectroscopySettings& settings) {
  spec.validate();
  if (settings.points < 2) throw std::invalid_argument("spectroscopy grid needs >= 2 points");
  double half = settings.half_span_hz;
  if (half <= 0.0) half = 0.5 * spec.splitting_amp + 6.0 * spec.gamma2() / kTwoPi;
  std::vector<double> grid(settings.points);
  const double lo = spec.mean_freq - kTwoPi * half;
  const double step = 2.0 * kTwoPi * half / static_cast<double>(settings.points - 1);
  for (std::size_t i = 0; i < settings.points; ++i) grid[i] = lo + static_cast<double>(i) * step;
  return grid;
}

SpectroscopyTrace synth_spectroscopy(const DetectorSpec& spec, double offset_charge, double rabi,
                                     std::span<const double> freq_grid, double noise_sigma,
                                     std::uint64_t seed) {
  if (freq_grid.empty()) throw std::invalid_argument("frequency grid is empty");
  if (!std::is_sorted(freq_grid.begin(), freq_grid.end())) {
    throw std::invalid_argument("frequency grid must be ascending");
  }
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
  const ParityFrequencies q = parity_frequencies(offset_charge, spec);
  Rng rng(seed);
  SpectroscopyTrace out;
  out.freqs.assign(freq_grid.begin(), freq_grid.end());
  out.mag_plus.resize(freq_grid.size());
  out.mag_minus.resize(freq_grid.size());
  for (std::size_t i = 0; i < freq_grid.size(); ++i) {
    const double w = freq_grid[i];
    out.mag_plus[i] = std::abs(transmission_full(w - q.plus, spec, rabi)) + noise_sigma * rng.normal();
    out.mag_minus[i] = std::abs(transmission_full(w - q.minus, spec, rabi)) + noise_sigma * rng.normal();
  }
  return out;
}

double parity_contrast(const DetectorSimParams& params, double offset_charge) {
  const double split = kTwoPi * params.spec.splitting_amp * std::cos(kTwoPi * offset_charge);
  return std::abs(transmission_full(0.0, params.spec, params.rabi) -
                  transmission_full(split, params.spec, params.rabi));
}

double expected_retention(const DetectorSimParams& params, double noise_sigma,
                          double min_fidelity) {
  if (!(noise_sigma > 0.0)) throw std::invalid_argument("noise_sigma must be > 0");
  // Combined discriminator: separation d, per-sample noise sigma/sqrt(2),
  // equal-variance overlap erfc(d / (2 sigma)).
  constexpr int kGrid = 20000;
  int kept = 0;
  for (int i = 0; i < kGrid; ++i) {
    const double ng = 0.25 * (static_cast<double>(i) + 0.5) / kGrid;
    const double overlap = std::erfc(parity_contrast(params, ng) / (2.0 * noise_sigma));
    if (1.0 - overlap > min_fidelity) ++kept;
  }
  return static_cast<double>(kept) / kGrid;
}

double calibrate_noise_for_retention(const DetectorSimParams& params, double target,
                                     double min_fidelity) {
  if (!(target > 0.0 && target < 1.0)) throw std::invalid_argument("target must be in (0, 1)");
  double lo = 1e-6;
  double hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (expected_retention(params, mid, min_fidelity) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::sqrt(lo * hi);
}

SimConfig reference_sim_config() {
  SimConfig c;
  auto& d1 = c.detectors[0];
  d1.spec.mean_freq = kTwoPi * 4.766e9;
  d1.spec.splitting_amp = 11e6;
  d1.spec.coupling = kTwoPi * 3.8e6;
  d1.spec.nonradiative = kTwoPi * 0.2e6;
  d1.spec.dephasing = kTwoPi * 3.0e6;
  d1.rate_slow = 5.28;
  d1.rate_fast = 3880.0;
  d1.mean_burst_duration = 7e-3;
  d1.charge_jump_rate = 2.24;
  d1.jump_burst_fraction = 0.0;
  d1.charge_drift_step = 0.004;
  d1.noise_sigma = 0.01;
  d1.rabi = 0.5 * d1.spec.coupling;
  d1.initial_ng = 0.0;

  auto& d2 = c.detectors[1];
  d2.spec.mean_freq = kTwoPi * 4.936e9;
  d2.spec.splitting_amp = 9e6;
  d2.spec.coupling = kTwoPi * 4.7e6;
  d2.spec.nonradiative = kTwoPi * 0.2e6;
  d2.spec.dephasing = kTwoPi * 3.0e6;
  d2.rate_slow = 3.61;
  d2.rate_fast = 4077.0;
  d2.mean_burst_duration = 7e-3;
  d2.charge_jump_rate = 1.6;
  d2.jump_burst_fraction = 0.35;
  d2.charge_drift_step = 0.004;
  d2.noise_sigma = 0.01;
  d2.rabi = 0.5 * d2.spec.coupling;
  d2.initial_ng = 0.0;

  // Strike mix calibrated so that the detected bursts come out near 1.6 and
  // 1.0 per minute with 47% / 76% of them coincident. Baseline triples that
  // pass as bursts and partners too short to detect both dilute the
  // coincident share, hence more shared strikes than in the target counts.
  c.burst_event_rate = 1.70 / 60.0;
  c.p_both = 0.529;
  c.p_only = {0.412, 0.059};
  // Only about 35% (detector 1) and 44% (detector 2) of jump-carrying bursts are
  // detected and classified: small jumps barely move the clusters, and a jump
  // to low splitting hides the burst itself. Injected rates are scaled up so
  // that the detected rates land near 1.4, 2.0 and 0.43 per hour.
  c.shared_jump_rate = 4.0;
  c.seed = 1;
  c.duration = 600.0;
  return c;
}

SimConfig retention_calibration_sim_config() {
  SimConfig c = reference_sim_config();
  c.burst_event_rate = 0.0;
  c.p_both = 0.0;
  c.p_only = {1.0, 0.0};
  c.shared_jump_rate = 0.0;
  for (auto& d : c.detectors) {
    d.charge_jump_rate = 0.0;
    d.charge_drift_step = 0.25;
    d.noise_sigma = calibrate_noise_for_retention(d, 0.37);
  }
  return c;
}

}  // namespace qpt
