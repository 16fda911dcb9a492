#pragma once

// AnalysisReport as JSON (sorted keys, 12 significant digits) and the
// plot-ready CSV products derived from it.

#include <filesystem>
#include <string>
#include <vector>

#include "qpt/analysis.hpp"

namespace qpt {

std::string format_report_json(const AnalysisReport& report);

/// Reads report JSON text (checking format_version) and writes:
///   summary.txt
///   waiting_times_d{1,2}_{baseline,burst}.csv   bin_lo_s,bin_hi_s,count,expected
///   burst_durations_d{1,2}.csv                 bin_lo_s,bin_hi_s,count
///   correlation.csv                            one row per lag
///   ng_series_d{1,2}.csv                       t_s,ng,clamped,step
/// Returns the summary text. Throws DataError on a malformed report.
std::string write_report_products(const std::string& report_json, const std::filesystem::path& out_dir,
                                  const std::string& name = "report.json");

/// Short human-readable digest of a report JSON.
std::string summarize_report(const std::string& report_json, const std::string& name = "report.json");

}  // namespace qpt
