// qpt: simulate, analyze and report on two-detector parity-switching data.
//
//   qpt simulate -c CONFIG -o DIR --seed N
//   qpt analyze  -c CONFIG -i DIR -o DIR
//   qpt report   -i REPORT -o DIR
//   qpt spectrofit -c CONFIG -i SPECTRO_CSV
//
// Exit codes: 0 success, 2 usage or configuration error, 3 data error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qpt/analysis.hpp"
#include "qpt/config.hpp"
#include "qpt/io.hpp"
#include "qpt/report.hpp"
#include "qpt/spectro_fit.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
};

qpt::RunConfig load_config(const Common& c) {
  qpt::IniFile ini;
  if (!c.config.empty()) {
    ini = qpt::read_ini(c.config);
  } else {
    ini.source = "<defaults>";
  }
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw qpt::ConfigError("--set expects section.key=value, got '" + kv + "'");
    ini.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return qpt::build_run_config(ini);
}

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("-c,--config", c.config, "INI configuration file");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override a config value, e.g. --set sim.p_both=0.5 (repeatable)");
}

unsigned threads_or_exit() {
  try {
    return qpt::default_thread_count();
  } catch (const std::exception& e) {
    throw qpt::ConfigError(e.what());
  }
}

int run_simulate(const Common& common, const std::string& out, std::optional<std::uint64_t> seed,
                 std::optional<double> duration) {
  qpt::RunConfig cfg = load_config(common);
  if (seed) {
    cfg.seed = *seed;
    cfg.sim.seed = *seed;
  }
  if (!cfg.seed) throw qpt::ConfigError("simulate needs an explicit seed (--seed or [run] seed)");
  if (duration) cfg.sim.duration = *duration;
  try {
    cfg.sim.validate();
  } catch (const std::invalid_argument& e) {
    throw qpt::ConfigError(e.what());
  }
  const unsigned threads = threads_or_exit();
  const auto t0 = std::chrono::steady_clock::now();
  qpt::Simulator sim(cfg.sim);
  qpt::write_simulation(sim, out, threads);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << qpt::read_text(qpt::layout::manifest_file(out));
  std::fprintf(stderr, "simulated %zu trace pairs into %s in %.1f s\n", sim.trace_count(), out.c_str(), secs);
  return 0;
}

int run_analyze(const Common& common, const std::string& in, const std::string& out) {
  const qpt::RunConfig cfg = load_config(common);
  const unsigned threads = threads_or_exit();
  qpt::DirectorySource source(in);
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(fs::path(out) / "events");

  const auto report = qpt::run_analysis(source, cfg.analysis, threads, [&](const qpt::TraceResult& r) {
    for (int d = 1; d <= 2; ++d) {
      qpt::write_text(qpt::layout::events_file(out, d, r.index), qpt::format_events_csv(r.det[d - 1].record));
    }
  });
  for (int d = 1; d <= 2; ++d) {
    qpt::write_text(qpt::layout::bursts_file(out, d), qpt::format_bursts_csv(d, report.detectors[d - 1].bursts));
  }
  const std::string json = qpt::format_report_json(report);
  qpt::write_text(qpt::layout::report_file(out), json);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << qpt::summarize_report(json);
  std::fprintf(stderr, "analyzed %zu trace pairs with %u thread(s) in %.1f s\n", report.n_traces, threads, secs);
  return 0;
}

int run_report(const std::string& in, const std::string& out) {
  const std::string json = qpt::read_text(in);
  std::cout << qpt::write_report_products(json, out, in);
  return 0;
}

int run_spectrofit(const Common& common, const std::string& in) {
  const qpt::RunConfig cfg = load_config(common);
  const auto trace = qpt::parse_spectroscopy_csv(qpt::read_text(in), in);
  const auto fit = qpt::spectro_fit(trace, cfg.analysis.priors[trace.detector_id - 1], cfg.analysis.spectro);
  const double mhz = 1e-6 / qpt::kTwoPi;
  std::printf("resolvable %d converged %d iterations %d\n", fit.resolvable, fit.converged, fit.iterations);
  if (fit.resolvable) {
    std::printf("omega_plus/2pi %.6f GHz\nomega_minus/2pi %.6f GHz\nsplitting %.4f MHz\n",
                fit.omega_plus / qpt::kTwoPi * 1e-9, fit.omega_minus / qpt::kTwoPi * 1e-9, fit.splitting_hz() * 1e-6);
    std::printf("Gamma/2pi %.4f MHz\nOmega/2pi %.4f MHz\nresidual_rms %.3g\n", fit.coupling * mhz, fit.rabi * mhz,
                fit.residual_rms);
  }
  return fit.usable() ? 0 : kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasiparticle parity-switching simulator and analysis pipeline"};
  app.require_subcommand(1);

  Common sim_common, an_common, fit_common;
  std::string sim_out, an_in, an_out, rep_in, rep_out, fit_in;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;

  auto* simulate = app.add_subcommand("simulate", "generate trace, spectroscopy and ground-truth files");
  add_common(simulate, sim_common, true);
  simulate->add_option("-o,--output", sim_out, "output directory")->required();
  simulate->add_option("--seed", seed, "random seed (required unless set in [run])");
  simulate->add_option("--duration", duration, "simulated monitoring time, s");

  auto* analyze = app.add_subcommand("analyze", "run the full pipeline on a simulation directory");
  add_common(analyze, an_common, true);
  analyze->add_option("-i,--input", an_in, "simulation directory")->required();
  analyze->add_option("-o,--output", an_out, "output directory")->required();

  auto* report = app.add_subcommand("report", "write plot-ready CSVs and a summary from report.json");
  report->add_option("-i,--input", rep_in, "report.json")->required()->check(CLI::ExistingFile);
  report->add_option("-o,--output", rep_out, "output directory")->required();

  auto* spectrofit = app.add_subcommand("spectrofit", "fit one spectroscopy sweep");
  add_common(spectrofit, fit_common, false);
  spectrofit->add_option("-i,--input", fit_in, "spectroscopy CSV")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*simulate) return run_simulate(sim_common, sim_out, seed, duration);
    if (*analyze) return run_analyze(an_common, an_in, an_out);
    if (*report) return run_report(rep_in, rep_out);
    if (*spectrofit) return run_spectrofit(fit_common, fit_in);
  } catch (const qpt::ConfigError& e) {
    std::cerr << "qpt: " << e.what() << "\n";
    return kExitConfig;
  } catch (const qpt::DataError& e) {
    std::cerr << "qpt: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "qpt: " << e.what() << "\n";
    return 1;
  }
  return kExitConfig;
}
