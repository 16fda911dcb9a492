// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion plus
// indented detail lines; exits non-zero if any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "oracles/master_equation.hpp"
#include "qpt/analysis.hpp"
#include "qpt/charge.hpp"
#include "qpt/discrimination.hpp"
#include "qpt/io.hpp"
#include "qpt/physics.hpp"
#include "qpt/report.hpp"
#include "qpt/simulator.hpp"
#include "qpt/spectro_fit.hpp"

namespace fs = std::filesystem;
using namespace qpt;

namespace {

int failures = 0;

void verdict(int id, bool pass, const char* what) {
  std::printf("C%d %s %s\n", id, pass ? "PASS" : "FAIL", what);
  std::fflush(stdout);
  if (!pass) ++failures;
}

template <class... A>
void detail(const char* fmt, A... a) {
  std::printf("    ");
  std::printf(fmt, a...);
  std::printf("\n");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool within_rel(double got, double want, double tol) { return std::abs(got - want) <= tol * std::abs(want); }

// ---------------------------------------------------------------------------

void baseline_closure(unsigned threads) {
  SimConfig c = reference_sim_config();
  c.duration = 1800.0;
  c.seed = 2;
  const auto t0 = std::chrono::steady_clock::now();
  const Simulator sim(c);
  const AnalysisReport rep = run_analysis(SimulatorSource(sim), AnalysisOptions{}, threads);
  const double secs = seconds_since(t0);
  bool pass = secs < 60.0;
  for (int d = 0; d < 2; ++d) {
    const auto& b = rep.detectors[d].baseline;
    const double want = c.detectors[d].rate_slow;
    const bool ok = b && within_rel(b->rate, want, 0.10);
    pass = pass && ok;
    detail("detector %d: baseline %.3f /s vs configured %.2f /s (%+.1f%%)", d + 1, b ? b->rate : 0.0, want,
           b ? 100.0 * (b->rate / want - 1.0) : 0.0);
  }
  detail("30 min simulated and analysed in %.1f s with %u thread(s)", secs, threads);
  verdict(1, pass, "baseline-rate closure within 10% over 30 min, runtime < 60 s");
}

// ---------------------------------------------------------------------------

void fast_rate_bound(const AnalysisReport& rep, const SimConfig& c) {
  bool pass = rep.validation.has_value();
  for (int d = 0; pass && d < 2; ++d) {
    const auto& v = rep.validation->detectors[d];
    const auto& b = rep.detectors[d].burst;
    const double pipeline = b ? b->rate : 0.0;
    const bool ok = b && pipeline <= v.truth_fast_rate && pipeline >= 0.5 * v.truth_fast_rate &&
                    within_rel(v.truth_fast_rate, c.detectors[d].rate_fast, 0.05);
    pass = pass && ok;
    detail("detector %d: pipeline %.1f /s, truth %.1f /s (ratio %.3f), configured %.0f /s (%+.2f%%)", d + 1,
           pipeline, v.truth_fast_rate, pipeline / v.truth_fast_rate, c.detectors[d].rate_fast,
           100.0 * (v.truth_fast_rate / c.detectors[d].rate_fast - 1.0));
  }
  verdict(2, pass, "burst rate is a lower bound: 0.5 truth <= pipeline <= truth, truth within 5% of configured");
}

void burst_statistics(const AnalysisReport& rep, double hours) {
  const double want_rate[2] = {1.6, 1.0};
  bool pass = hours >= 2.0;
  for (int d = 0; d < 2; ++d) {
    const auto& r = rep.detectors[d];
    const double mean = r.durations ? r.durations->mean : 0.0;
    const bool ok = within_rel(r.burst_rate_per_min, want_rate[d], 0.25) && within_rel(mean, 7e-3, 0.20);
    pass = pass && ok;
    detail("detector %d: %.3f bursts/min (target %.1f), mean duration %.2f ms over %zu bursts", d + 1,
           r.burst_rate_per_min, want_rate[d], 1e3 * mean, r.bursts_used);
  }
  detail("simulated %.1f h", hours);
  verdict(3, pass, "burst rates within 25% of 1.6 / 1.0 per min, mean duration within 20% of 7 ms");
}

// Standard error of the segment-averaged R12 at one lag.
double lag_se(const CorrelationCurve& c, std::size_t lag) {
  const std::size_t n = c.per_segment.size();
  if (n < 2) return 0.0;
  double m = 0.0;
  for (const auto& s : c.per_segment) m += s[lag];
  m /= static_cast<double>(n);
  double v = 0.0;
  for (const auto& s : c.per_segment) v += (s[lag] - m) * (s[lag] - m);
  return std::sqrt(v / static_cast<double>(n - 1) / static_cast<double>(n));
}

void correlation_signature(const AnalysisReport& rep) {
  const auto& all = rep.correlation_all;
  const auto& sa = rep.surrogate_all;
  const auto& rm = rep.correlation_removed;
  const auto& sr = rep.surrogate_removed;
  const std::size_t n = all.values.size();
  if (n == 0 || rm.values.size() != n || sa.mean.size() != n || sr.mean.size() != n) {
    detail("%s", "correlation curves missing");
    verdict(4, false, "correlation signature");
    return;
  }
  const std::size_t mid = n / 2;
  const bool peak = all.values[mid] > 1.0;
  detail("all events: R(0) = %.1f over %zu segments", all.values[mid], all.n_segments);

  std::size_t asym = 0;
  double worst_asym = 0.0;
  for (std::size_t k = 1; k <= mid; ++k) {
    const double diff = std::abs(all.values[mid + k] - all.values[mid - k]);
    const double noise = std::hypot(lag_se(all, mid + k), lag_se(all, mid - k));
    worst_asym = std::max(worst_asym, noise > 0.0 ? diff / noise : (diff > 0.0 ? HUGE_VAL : 0.0));
    if (diff > 3.0 * noise) ++asym;
  }
  detail("symmetry: worst |R(t) - R(-t)| = %.2f counting-noise sigma, %zu of %zu lags above 3 sigma", worst_asym,
         asym, mid);

  bool tails = true;
  for (std::size_t k : {std::size_t{0}, n - 1}) {
    const double dev = std::abs(all.values[k] - 1.0);
    tails = tails && dev <= 3.0 * sa.std[k];
    detail("tail at %+.0f ms: R = %.3f, |R - 1| = %.3f vs 3 sigma_surrogate = %.3f", 1e3 * all.lags[k],
           all.values[k], dev, 3.0 * sa.std[k]);
  }

  std::size_t outside = 0;
  double worst = 0.0, max_dev = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double z = std::abs(rm.values[k] - sr.mean[k]) / sr.std[k];
    worst = std::max(worst, z);
    max_dev = std::max(max_dev, std::abs(rm.values[k] - 1.0));
    if (z > 3.0) ++outside;
  }
  detail("bursts removed: R(0) = %.3f, max |R - 1| = %.3f, worst lag %.2f sigma from surrogate, %zu lags outside 3 sigma",
         rm.values[mid], max_dev, worst, outside);
  verdict(4, peak && asym == 0 && tails && outside == 0,
          "R12(0) > 1, symmetric, back to 1 at +-50 ms; bursts-removed curve on the surrogate baseline");
}

void coincidence_fractions(const AnalysisReport& rep) {
  const double want[2] = {0.47, 0.76};
  bool pass = true;
  for (int d = 0; d < 2; ++d) {
    const auto& r = rep.detectors[d];
    const bool ok = std::abs(r.coincidence_fraction - want[d]) <= 0.10 && r.bursts_used >= 300;
    pass = pass && ok;
    detail("detector %d: %.1f%% correlated (target %.0f%%) of %zu bursts", d + 1, 100.0 * r.coincidence_fraction,
           100.0 * want[d], r.bursts_used);
  }
  verdict(5, pass, "coincidence fractions within 10 points of 47% / 76% over >= 300 bursts");
}

// Spectroscopy-only charge tracking on one config; counts observable truth
// steps, flagged ones and false flags.
struct StepTally {
  std::size_t truth = 0, flagged = 0, false_steps = 0;
};

StepTally spectroscopy_steps(const SimConfig& c, double step_threshold) {
  const Simulator sim(c);
  StepTally t;
  for (int d = 1; d <= 2; ++d) {
    std::vector<ChargeEpoch> ep;
    for (std::size_t k = 0; k < sim.trace_count(); ++k) {
      const auto sp = sim.render_spectroscopy(d, k);
      ep.push_back({sp.t0, spectro_fit(sp, c.detectors[d - 1].spec)});
    }
    const auto cs = charge_tracking(ep, estimate_splitting_amp(ep), step_threshold);
    for (std::size_t j = 1; j < cs.epoch_index.size(); ++j) {
      if (cs.epoch_index[j] != cs.epoch_index[j - 1] + 1) continue;
      const double a = fold_offset_charge(sim.truth().ng_at(d, cs.times[j - 1]));
      const double b = fold_offset_charge(sim.truth().ng_at(d, cs.times[j]));
      const bool real = std::abs(b - a) > step_threshold;
      t.truth += real;
      if (cs.step_flags[j]) (real ? t.flagged : t.false_steps)++;
    }
  }
  return t;
}

void charge_shifting(const AnalysisReport& rep, double hours, unsigned threads) {
  const double want[3] = {1.4, 2.0, 0.43};
  const double got[3] = {rep.detectors[0].charge_shifting_rate_per_h, rep.detectors[1].charge_shifting_rate_per_h,
                         rep.coincident_charge_shifting_rate_per_h};
  const char* names[3] = {"detector 1", "detector 2", "coincident"};
  bool rates = hours >= 10.0;
  for (int i = 0; i < 3; ++i) {
    rates = rates && within_rel(got[i], want[i], 0.5);
    detail("%s: %.2f charge-shifting bursts/h (target %.2f)", names[i], got[i], want[i]);
  }
  detail("simulated %.1f h", hours);

  bool steps = rep.validation.has_value();
  if (steps) {
    for (int d = 0; d < 2; ++d) {
      const auto& v = rep.validation->detectors[d];
      steps = steps && v.flagged_truth_steps == v.truth_steps && v.false_steps == 0;
      detail("detector %d: %zu observable |dn_g| > 0.1 steps, %zu flagged, %zu false", d + 1, v.truth_steps,
             v.flagged_truth_steps, v.false_steps);
    }
  }

  SimConfig drift = reference_sim_config();
  drift.duration = 4.0 * 3600.0;
  drift.seed = 3;
  drift.shared_jump_rate = 0.0;
  for (auto& d : drift.detectors) {
    d.charge_jump_rate = 0.0;
    d.charge_drift_step = 0.01;
  }
  const Simulator dsim(drift);
  const AnalysisReport drep = run_analysis(SimulatorSource(dsim), AnalysisOptions{}, threads);
  std::size_t drift_false = 0;
  for (const auto& v : drep.validation->detectors) drift_false += v.false_steps;
  for (const auto& d : drep.detectors) drift_false += d.charge.step_count();
  detail("drift-only run (4 h, step std 0.01 per epoch): %zu flagged steps", drift_false);
  steps = steps && drift_false == 0;

  SimConfig heavy = reference_sim_config();
  heavy.duration = 10.0 * 3600.0;
  heavy.seed = 1;
  heavy.shared_jump_rate = 0.0;
  for (auto& d : heavy.detectors) d.charge_jump_rate = 60.0;
  const StepTally h = spectroscopy_steps(heavy, AnalysisOptions{}.step_threshold);
  detail("info, jump-heavy spectroscopy (60 jumps/h, 10 h): %zu observable steps, %zu flagged, %zu false", h.truth,
         h.flagged, h.false_steps);

  verdict(6, rates && steps,
          "charge-shifting rates within 50% of 1.4 / 2.0 / 0.43 per h; injected steps flagged, none on drift");
}

// ---------------------------------------------------------------------------

void discrimination_oracle(unsigned threads) {
  double worst = 0.0;
  for (double d = 0.05; d <= 2.0; d += 0.05) {
    for (double s : {0.02, 0.05, 0.1, 0.2, 0.4, 0.8}) {
      Gmm1D g;
      g.mu0 = -0.5 * d;
      g.mu1 = 0.5 * d;
      g.sigma0 = g.sigma1 = s;
      const double want = std::erfc(d / (2.0 * std::sqrt(2.0) * s));
      worst = std::max(worst, std::abs(overlap_fidelity(g).overlap - want));
    }
  }
  detail("overlap vs erfc(d / (2 sqrt2 sigma)) over 240 (d, sigma) points: worst abs error %.2e", worst);

  SimConfig c = retention_calibration_sim_config();
  c.trace_length = 10.0;
  c.duration = 2400.0;
  c.seed = 4;
  const Simulator sim(c);
  const AnalysisReport rep = run_analysis(SimulatorSource(sim), AnalysisOptions{}, threads);
  detail("retention at calibrated noise: %.1f%% of %zu traces (%zu per detector)", 100.0 * rep.retention_fraction,
         2 * rep.n_traces, rep.n_traces);
  verdict(7, worst <= 1e-8 && rep.n_traces >= 200 && std::abs(rep.retention_fraction - 0.37) <= 0.05,
          "overlap matches erfc to 1e-8; retention within 5 points of 37%");
}

void physics_oracles() {
  const double mhz = kTwoPi * 1e6;
  DetectorSpec s;
  s.mean_freq = kTwoPi * 4.766e9;
  s.splitting_amp = 11e6;
  s.coupling = 3.8 * mhz;
  double worst = 0.0;
  for (double gnr : {0.0, 0.2, 1.0}) {
    for (double gphi : {0.0, 0.5, 3.0}) {
      s.nonradiative = gnr * mhz;
      s.dephasing = gphi * mhz;
      for (double w : {0.05, 0.5, 1.0, 3.0}) {
        for (double d = -30.0; d <= 30.0; d += 0.7) {
          const auto want = oracle::transmission(d * mhz, s, w * s.coupling);
          worst = std::max(worst, std::abs(transmission_full(d * mhz, s, w * s.coupling) - want) / std::abs(want));
        }
      }
    }
  }
  detail("transmission_full vs Liouvillian steady state: worst relative error %.2e", worst);

  s.nonradiative = s.dephasing = 0.0;
  double reduce = 0.0;
  for (double w : {0.0, 0.3, 0.7071067811865476, 2.0}) {
    for (double d = -20.0; d <= 20.0; d += 0.9) {
      const double a = std::abs(transmission_full(d * mhz, s, w * s.coupling));
      const double b = std::abs(transmission_simple(d * mhz, s.coupling, w * s.coupling));
      reduce = std::max(reduce, std::abs(a - b));
    }
  }
  detail("lossless |t| vs quoted closed form: worst abs difference %.2e", reduce);

  const double ext = std::abs(transmission_full(0.0, s, 0.0));
  const double far = std::abs(transmission_full(1e13 * s.coupling, s, 0.5 * s.coupling) - 1.0);
  const double far_simple = std::abs(transmission_simple(1e13 * s.coupling, s.coupling, 0.5 * s.coupling) - 1.0);
  detail("|t(0)| = %.1e, |t(inf) - 1| = %.1e (full), %.1e (closed form)", ext, far, far_simple);
  verdict(8, worst < 1e-10 && reduce < 1e-12 && ext <= 1e-12 && far <= 1e-12 && far_simple <= 1e-12,
          "transmission vs steady-state oracle < 1e-10, lossless reduction < 1e-12, limits to 1e-12");
}

void spectroscopy_closure() {
  struct Point {
    double gamma_mhz, amp_hz, fbar_ghz;
  };
  const Point points[2] = {{3.8, 11e6, 4.766}, {4.7, 9e6, 4.936}};
  bool pass = true;
  for (int i = 0; i < 2; ++i) {
    DetectorSpec s;
    s.mean_freq = kTwoPi * points[i].fbar_ghz * 1e9;
    s.splitting_amp = points[i].amp_hz;
    s.coupling = kTwoPi * points[i].gamma_mhz * 1e6;
    s.nonradiative = kTwoPi * 0.2e6;
    s.dephasing = 0.0;
    const double rabi = s.coupling;
    SpectroscopySettings set;
    set.points = 16001;
    const auto grid = spectroscopy_grid(s, set);
    const double depth = 1.0 - std::abs(transmission_full(0.0, s, rabi));
    const auto sp = synth_spectroscopy(s, 0.0, rabi, grid, depth / 20.0, 100 + i);
    const auto f = spectro_fit(sp, s);
    const auto q = parity_frequencies(0.0, s);
    const double half = 0.5 * std::abs(q.plus - q.minus);
    const double ep = std::abs(f.omega_plus - q.plus) / half;
    const double em = std::abs(f.omega_minus - q.minus) / half;
    const double eg = std::abs(f.coupling / s.coupling - 1.0);
    const double eo = std::abs(f.rabi / rabi - 1.0);
    const bool ok = f.usable() && ep < 0.01 && em < 0.01 && eg < 0.01 && eo < 0.01;
    pass = pass && ok;
    detail("Gamma/2pi %.1f MHz, A %.0f MHz, f %.3f GHz: errors w+ %.3f%% w- %.3f%% (of A/2), Gamma %.3f%%, Omega %.3f%%",
           points[i].gamma_mhz, 1e-6 * points[i].amp_hz, points[i].fbar_ghz, 100 * ep, 100 * em, 100 * eg, 100 * eo);
  }
  verdict(9, pass, "spectroscopy synth -> fit recovers w+-, Gamma, Omega to < 1% at SNR 20");
}

// ---------------------------------------------------------------------------

std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::vector<char> buf(1 << 16);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  while (in.read(buf.data(), static_cast<std::streamsize>(buf.size())) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char b[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(b, sizeof b, "%02x", md[i]);
    hex += b;
  }
  return hex;
}

std::map<std::string, std::string> hash_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = sha256_file(e.path());
  }
  return out;
}

void determinism() {
#ifdef QPT_CLI_PATH
  const fs::path work = fs::temp_directory_path() / "qpt_acceptance_determinism";
  fs::remove_all(work);
  fs::create_directories(work);
  {
    std::ofstream ini(work / "run.ini");
    ini << "[run]\nseed = 20240601\nduration = 180\n";
  }
  const std::string cli = QPT_CLI_PATH;
  std::vector<std::map<std::string, std::string>> hashes;
  bool ran = true;
  for (const char* threads : {"1", "4", "4"}) {
    const fs::path run = work / ("run" + std::to_string(hashes.size()));
    const std::string pre = "QPT_THREADS=" + std::string(threads) + " '" + cli + "' ";
    const std::string cfg = "-c '" + (work / "run.ini").string() + "' ";
    const std::string sim = pre + "simulate " + cfg + "-o '" + (run / "sim").string() + "' > /dev/null 2>&1";
    const std::string ana = pre + "analyze " + cfg + "-i '" + (run / "sim").string() + "' -o '" +
                            (run / "out").string() + "' > /dev/null 2>&1";
    ran = ran && std::system(sim.c_str()) == 0 && std::system(ana.c_str()) == 0;
    if (!ran) break;
    hashes.push_back(hash_tree(run));
  }
  bool same = ran && hashes.size() == 3;
  std::size_t traces = 0, events = 0;
  if (same) {
    for (const auto& [name, h] : hashes[0]) {
      traces += name.find("trace_") != std::string::npos;
      events += name.find("events") != std::string::npos;
    }
    same = hashes[0] == hashes[1] && hashes[1] == hashes[2] && hashes[0].count("out/report.json") == 1;
    detail("%zu files per run (%zu trace, %zu event); QPT_THREADS = 1, 4, 4: %s", hashes[0].size(), traces, events,
           same ? "all SHA-256 identical" : "hashes differ");
  } else {
    detail("%s", "qpt simulate/analyze did not complete");
  }
  fs::remove_all(work);
  verdict(10, same, "byte-identical trace, event, burst and report files across runs and thread counts");
#else
  detail("%s", "qpt CLI not built");
  verdict(10, false, "byte-identical trace, event, burst and report files across runs and thread counts");
#endif
}

}  // namespace

int main() {
  unsigned threads = 1;
  try {
    threads = default_thread_count();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }
  try {
    baseline_closure(threads);

    SimConfig c = reference_sim_config();
    c.duration = 10.0 * 3600.0;
    c.seed = 1;
    const auto t0 = std::chrono::steady_clock::now();
    const Simulator sim(c);
    const AnalysisReport rep = run_analysis(SimulatorSource(sim), AnalysisOptions{}, threads);
    detail("reference run: %zu trace pairs, %zu both retained, analysed in %.0f s", rep.n_traces, rep.pairs_retained,
           seconds_since(t0));
    const double hours = c.duration / 3600.0;
    fast_rate_bound(rep, c);
    burst_statistics(rep, hours);
    correlation_signature(rep);
    coincidence_fractions(rep);
    charge_shifting(rep, hours, threads);

    discrimination_oracle(threads);
    physics_oracles();
    spectroscopy_closure();
    determinism();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
