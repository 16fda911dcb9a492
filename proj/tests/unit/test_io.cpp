#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "qpt/analysis.hpp"
#include "qpt/config.hpp"
#include "qpt/io.hpp"
#include "qpt/report.hpp"

using namespace qpt;
namespace fs = std::filesystem;

namespace {

IniFile ini_from(const std::string& text) {
  std::istringstream in(text);
  return parse_ini(in, "test.ini");
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qpt_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// One 60 s trace pair, analysed once and shared by the report tests.
const AnalysisReport& small_report(bool bursts) {
  static const AnalysisReport with = [] {
    SimConfig c = reference_sim_config();
    c.duration = 60.0;
    const Simulator sim(c);
    return run_analysis(SimulatorSource(sim), AnalysisOptions{}, 2);
  }();
  static const AnalysisReport without = [] {
    SimConfig c = reference_sim_config();
    c.duration = 60.0;
    c.burst_event_rate = 0.0;
    c.shared_jump_rate = 0.0;
    for (auto& d : c.detectors) d.charge_jump_rate = 0.0;
    const Simulator sim(c);
    return run_analysis(SimulatorSource(sim), AnalysisOptions{}, 2);
  }();
  return bursts ? with : without;
}

}  // namespace

TEST(Ini, SectionsCommentsAndErrors) {
  const auto ini = ini_from("# comment\n[run]\nseed = 7 ; trailing\n\n[sim.detector1]\nrate_slow=5.0\n");
  EXPECT_EQ(ini.sections.at("run").at("seed").value, "7");
  EXPECT_EQ(ini.sections.at("sim.detector1").at("rate_slow").line, 6);
  EXPECT_THROW(ini_from("[run]\nseed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(ini_from("[run\n"), ConfigError);
  EXPECT_THROW(ini_from("[run]\njust a line\n"), ConfigError);
}

TEST(RunConfig, AppliesKeysOverPreset) {
  auto ini = ini_from(
      "[run]\nseed = 9\nduration = 120\n[sim]\np_both = 0.5\np_only1 = 0.25\np_only2 = 0.25\n"
      "[sim.detector2]\nsplitting_amp_hz = 8e6\ncoupling_hz = 4e6\n[criteria]\nmin_events = 4\n"
      "[analysis]\nsurrogates = 10\n");
  ini.set("sim.detector1.rate_slow", "4.5");
  const RunConfig rc = build_run_config(ini);
  EXPECT_EQ(rc.seed, 9u);
  EXPECT_EQ(rc.sim.duration, 120.0);
  EXPECT_EQ(rc.sim.p_both, 0.5);
  EXPECT_EQ(rc.sim.detectors[0].rate_slow, 4.5);
  EXPECT_EQ(rc.sim.detectors[1].spec.splitting_amp, 8e6);
  EXPECT_NEAR(rc.sim.detectors[1].spec.coupling, kTwoPi * 4e6, 1e-6);
  EXPECT_EQ(rc.analysis.priors[1].coupling, rc.sim.detectors[1].spec.coupling);
  EXPECT_EQ(rc.analysis.criteria.min_events, 4u);
  EXPECT_EQ(rc.analysis.surrogates, 10u);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  try {
    build_run_config(ini_from("[sim]\nburst_rate = 2\n"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("test.ini:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(build_run_config(ini_from("[nosuch]\nx = 1\n")), ConfigError);
  EXPECT_THROW(build_run_config(ini_from("[run]\nduration = abc\n")), ConfigError);
  EXPECT_THROW(build_run_config(ini_from("[sim]\np_both = 0.9\n")), ConfigError);
  EXPECT_THROW(build_run_config(ini_from("[sim]\npreset = other\n")), ConfigError);
  EXPECT_EQ(build_run_config(ini_from("[sim]\npreset = retention\n")).preset, SimPreset::kRetention);
}

TEST(FormatVersion, MajorOneOnly) {
  EXPECT_NO_THROW(check_format_version("1.0", "x"));
  EXPECT_NO_THROW(check_format_version("1.7", "x"));
  EXPECT_THROW(check_format_version("2.0", "x"), DataError);
  EXPECT_THROW(check_format_version("banana", "x"), DataError);
}

TEST(TraceCsv, RoundTripAndHeader) {
  SimConfig c = reference_sim_config();
  c.trace_length = 0.5;
  c.duration = 0.5;
  const Simulator sim(c);
  const IQTrace t = sim.render_trace(2, 0);
  const std::string text = format_trace_csv(t);
  EXPECT_EQ(text.rfind("# format_version=1.0\n", 0), 0u);
  EXPECT_NE(text.find("\nt_s,i_plus,q_plus,i_minus,q_minus\n"), std::string::npos);
  const IQTrace back = parse_trace_csv(text, "t.csv");
  ASSERT_EQ(back.size(), t.size());
  EXPECT_EQ(back.detector_id, 2);
  EXPECT_EQ(back.drive_freqs, t.drive_freqs);
  for (std::size_t k = 0; k < t.size(); ++k) {
    EXPECT_NEAR(back.samples_plus[k].real(), t.samples_plus[k].real(), 1e-8);
    EXPECT_NEAR(back.samples_minus[k].imag(), t.samples_minus[k].imag(), 1e-8);
  }
  EXPECT_EQ(format_trace_csv(back), text);
}

TEST(TraceCsv, RejectsDamagedFiles) {
  SimConfig c = reference_sim_config();
  c.trace_length = 0.01;
  c.duration = 0.01;
  const std::string text = format_trace_csv(Simulator(c).render_trace(1, 0));
  std::string v2 = text;
  v2.replace(v2.find("1.0"), 3, "2.0");
  EXPECT_THROW(parse_trace_csv(v2, "t.csv"), DataError);
  EXPECT_THROW(parse_trace_csv(text.substr(0, text.size() / 2), "t.csv"), DataError);
  std::string bad = text;
  bad.insert(bad.rfind(',') + 1, "x");
  EXPECT_THROW(parse_trace_csv(bad, "t.csv"), DataError);
}

TEST(EventsCsv, RoundTripRebuildsRecord) {
  SimConfig c = reference_sim_config();
  c.trace_length = 2.0;
  c.duration = 4.0;
  const Simulator sim(c);
  EventRecord r = extract_events(sim.render_trace(1, 1));
  r.retained = true;
  const std::string text = format_events_csv(r);
  EXPECT_NE(text.find("\nt_s\n"), std::string::npos);
  const EventRecord back = parse_events_csv(text, "e.csv");
  EXPECT_EQ(back.binary_record, r.binary_record);
  EXPECT_EQ(back.retained, true);
  ASSERT_EQ(back.event_times.size(), r.event_times.size());
  for (std::size_t i = 0; i < r.event_times.size(); ++i) EXPECT_NEAR(back.event_times[i], r.event_times[i], 1e-9);
}

TEST(BurstsCsv, RoundTrip) {
  BurstInterval b;
  b.detector_id = 2;
  b.t_start = 61.0234;
  b.t_end = 61.0301;
  b.n_events = 12;
  b.correlated = true;
  const std::vector<BurstInterval> v{b};
  const std::string text = format_bursts_csv(2, v);
  EXPECT_NE(text.find("t_start_s,t_end_s,n_events,correlated,charge_shifting\n61.0234,61.0301,12,1,0\n"),
            std::string::npos);
  const auto back = parse_bursts_csv(text, "b.csv");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].n_events, 12u);
  EXPECT_TRUE(back[0].correlated);
  EXPECT_FALSE(back[0].charge_shifting);
}

TEST(TruthJson, RoundTrip) {
  SimConfig c = reference_sim_config();
  c.duration = 600.0;
  const Simulator sim(c);
  const auto f = parse_truth_json(format_truth_json(sim.truth(), c), "truth.json");
  EXPECT_EQ(f.truth.detectors[0].flip_times, sim.truth().detectors[0].flip_times);
  EXPECT_EQ(f.truth.strikes.size(), sim.truth().strikes.size());
  EXPECT_EQ(f.config.detectors[1].rate_fast, c.detectors[1].rate_fast);
  EXPECT_EQ(f.config.seed, c.seed);
  EXPECT_THROW(parse_truth_json("{\"format_version\": \"3.0\"}", "truth.json"), DataError);
  EXPECT_THROW(parse_truth_json("not json", "truth.json"), DataError);
}

TEST(SimulationDirectory, WriteAndReadBack) {
  const fs::path dir = scratch_dir("simdir");
  SimConfig c = reference_sim_config();
  c.trace_length = 1.0;
  c.duration = 2.0;
  const Simulator sim(c);
  write_simulation(sim, dir, 2);
  EXPECT_TRUE(fs::exists(layout::trace_file(dir, 1, 0)));
  EXPECT_TRUE(fs::exists(layout::trace_file(dir, 2, 1)));
  EXPECT_TRUE(fs::exists(layout::manifest_file(dir)));
  const DirectorySource src(dir);
  EXPECT_EQ(src.trace_count(), 2u);
  ASSERT_NE(src.truth(), nullptr);
  const auto pair = src.load_traces(1);
  EXPECT_EQ(pair[1].detector_id, 2);
  EXPECT_TRUE(src.load_spectroscopy(0).has_value());

  fs::remove(layout::trace_file(dir, 2, 1));
  EXPECT_THROW(DirectorySource{dir}, DataError);
  const fs::path empty = scratch_dir("empty");
  EXPECT_THROW(DirectorySource{empty}, ConfigError);
  fs::remove_all(dir);
  fs::remove_all(empty);
}

TEST(ReportJson, SortedDeterministicAndVersioned) {
  const std::string a = format_report_json(small_report(true));
  EXPECT_EQ(a, format_report_json(small_report(true)));
  const auto j = nlohmann::json::parse(a);
  EXPECT_EQ(j.at("format_version"), "1.0");
  // nlohmann keeps objects in std::map order, so a re-dump with the same
  // key order only matches if the text was already sorted.
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
  std::size_t pos = 0, prev = 0;
  for (const auto& k : keys) {
    pos = a.find("\n  \"" + k + "\":");
    ASSERT_NE(pos, std::string::npos) << k;
    EXPECT_GE(pos, prev);
    prev = pos;
  }
  EXPECT_EQ(j.at("correlation").at("lags_s").size(), 101u);
}

TEST(ReportProducts, FilesAndRowCounts) {
  const fs::path dir = scratch_dir("report");
  const std::string summary = write_report_products(format_report_json(small_report(true)), dir);
  const std::string corr = read_text(dir / "correlation.csv");
  // Version, metadata and header lines, then one row per lag.
  EXPECT_EQ(line_count(corr), 3u + 101u);
  EXPECT_TRUE(fs::exists(dir / "summary.txt"));
  EXPECT_TRUE(fs::exists(dir / "waiting_times_d1_baseline.csv"));
  EXPECT_TRUE(fs::exists(dir / "ng_series_d2.csv"));
  EXPECT_EQ(read_text(dir / "summary.txt"), summary);
  fs::remove_all(dir);
}

TEST(ReportProducts, ZeroBurstsGiveHeaderOnlyDurations) {
  const AnalysisReport& r = small_report(false);
  ASSERT_EQ(r.detectors[0].bursts_used, 0u);
  const fs::path dir = scratch_dir("report0");
  write_report_products(format_report_json(r), dir);
  const std::string d = read_text(dir / "burst_durations_d1.csv");
  EXPECT_EQ(line_count(d), 3u) << d;
  fs::remove_all(dir);
}

TEST(ReportProducts, SummaryEchoesRetention) {
  const AnalysisReport& r = small_report(true);
  const std::string s = summarize_report(format_report_json(r));
  const std::string tag = "retention fraction: ";
  const auto pos = s.find(tag);
  ASSERT_NE(pos, std::string::npos) << s;
  EXPECT_NEAR(std::stod(s.substr(pos + tag.size())), r.retention_fraction, 5e-4);
}

TEST(ReportProducts, RejectsUnknownMajor) {
  std::string j = format_report_json(small_report(false));
  j.replace(j.find("\"1.0\""), 5, "\"2.0\"");
  EXPECT_THROW(summarize_report(j), DataError);
}
