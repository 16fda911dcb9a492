#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "qpt/analysis.hpp"
#include "qpt/io.hpp"
#include "qpt/report.hpp"

using namespace qpt;

namespace {

SimConfig short_config() {
  SimConfig c = reference_sim_config();
  c.duration = 180.0;
  c.seed = 11;
  return c;
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    ::setenv(name, value, 1);
  }
  ~ScopedEnv() {
    if (old_.empty()) {
      ::unsetenv(name_);
    } else {
      ::setenv(name_, old_.c_str(), 1);
    }
  }

 private:
  const char* name_;
  std::string old_;
};

}  // namespace

TEST(RunAnalysis, ReportIndependentOfThreadCount) {
  const Simulator sim(short_config());
  const SimulatorSource src(sim);
  const auto one = format_report_json(run_analysis(src, AnalysisOptions{}, 1));
  EXPECT_EQ(one, format_report_json(run_analysis(src, AnalysisOptions{}, 3)));
  EXPECT_EQ(one, format_report_json(run_analysis(src, AnalysisOptions{}, 8)));
}

TEST(RunAnalysis, ResultsArriveInIndexOrder) {
  const Simulator sim(short_config());
  const SimulatorSource src(sim);
  std::vector<std::size_t> seen;
  const auto rep = run_analysis(src, AnalysisOptions{}, 4, [&](const TraceResult& r) { seen.push_back(r.index); });
  ASSERT_EQ(seen.size(), sim.trace_count());
  for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(seen[i], i);
  EXPECT_EQ(rep.n_traces, sim.trace_count());
  ASSERT_TRUE(rep.validation);
}

TEST(RunAnalysis, DirectorySourceMatchesSimulator) {
  const Simulator sim(short_config());
  const auto dir = std::filesystem::temp_directory_path() / "qpt_test_analysis_dir";
  std::filesystem::remove_all(dir);
  write_simulation(sim, dir, 2);
  const DirectorySource disk(dir);
  EXPECT_EQ(disk.trace_count(), sim.trace_count());
  const auto a = format_report_json(run_analysis(disk, AnalysisOptions{}, 2));
  EXPECT_EQ(a, format_report_json(run_analysis(disk, AnalysisOptions{}, 1)));
  const auto rep = run_analysis(disk, AnalysisOptions{}, 2);
  EXPECT_TRUE(rep.validation);
  std::filesystem::remove_all(dir);
}

TEST(DefaultThreadCount, ReadsEnvironment) {
  {
    ScopedEnv e("QPT_THREADS", "3");
    EXPECT_EQ(default_thread_count(), 3u);
  }
  {
    ScopedEnv e("QPT_THREADS", "0");
    EXPECT_THROW(default_thread_count(), std::invalid_argument);
  }
  {
    ScopedEnv e("QPT_THREADS", "4x");
    EXPECT_THROW(default_thread_count(), std::invalid_argument);
  }
}

TEST(AnalysisOptions, Validation) {
  AnalysisOptions o;
  EXPECT_NO_THROW(o.validate());
  o.postselect_fidelity = 1.0;
  EXPECT_THROW(o.validate(), std::invalid_argument);
  o = AnalysisOptions{};
  o.step_threshold = 0.0;
  EXPECT_THROW(DatasetAccumulator{o}, std::invalid_argument);
}

TEST(DatasetAccumulator, EmptyDatasetThrows) {
  const DatasetAccumulator acc(AnalysisOptions{});
  EXPECT_EQ(acc.size(), 0u);
  EXPECT_THROW(acc.finish(), std::invalid_argument);
}
