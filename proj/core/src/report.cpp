#include "qpt/report.hpp"

#include <cmath>
#include <sstream>

#include "json_util.hpp"
#include "qpt/config.hpp"
#include "qpt/io.hpp"

namespace qpt {

namespace fs = std::filesystem;
using detail::append_number;
using detail::Json;

namespace {

Json histogram_json(const Histogram& h) { return {{"edges", h.edges}, {"counts", h.counts}}; }

Json rate_json(const std::optional<RateEstimate>& r) {
  if (!r) return nullptr;
  Json j = {{"rate_per_s", r->rate},
            {"n_waits", r->n_waits},
            {"mean_wait_s", r->mean_wait},
            {"histogram", histogram_json(r->histogram)}};
  j["histogram"]["expected"] = r->expected;
  return j;
}

Json curve_json(const CorrelationCurve& c, const SurrogateBaseline& s) {
  // No averaged segment means no estimate at all, not R = 0.
  Json values = c.values;
  if (c.n_segments == 0) values = Json(std::vector<std::nullptr_t>(c.values.size(), nullptr));
  return {{"values", values},
          {"n_segments", c.n_segments},
          {"n_skipped", c.n_skipped},
          {"surrogate_mean", s.mean},
          {"surrogate_std", s.std},
          {"surrogate_max_abs_deviation", s.max_abs_deviation}};
}

Json options_json(const AnalysisOptions& o) {
  return {{"postselect_fidelity", o.postselect_fidelity},
          {"weighted_overlap", o.discrimination.weighted_overlap},
          {"criteria",
           {{"kde_bandwidth_s", o.criteria.kde_bandwidth},
            {"segment_length_s", o.criteria.segment_length},
            {"center_window_s", o.criteria.center_window},
            {"max_gap_s", o.criteria.max_gap},
            {"min_events", o.criteria.min_events},
            {"coincidence_pad_s", o.criteria.coincidence_pad},
            {"grid_step_s", o.criteria.grid_step}}},
          {"charge_shift",
           {{"window_s", o.charge_shift.window},
            {"displacement_sigmas", o.charge_shift.displacement_sigmas},
            {"min_cluster_size", o.charge_shift.min_cluster_size}}},
          {"correlation", {{"bin_width_s", o.correlation.bin_width}, {"max_lag_s", o.correlation.max_lag}}},
          {"step_threshold", o.step_threshold},
          {"surrogates", o.surrogates},
          {"surrogate_seed", o.surrogate_seed}};
}

Json detector_json(const DetectorReport& d) {
  Json charge_series = Json::array();
  Json steps = Json::array();
  for (std::size_t i = 0; i < d.charge.times.size(); ++i) {
    charge_series.push_back({{"t_s", d.charge.times[i]},
                             {"ng", d.charge.ng_values[i]},
                             {"clamped", d.charge.clamped[i] != 0},
                             {"step", d.charge.step_flags[i] != 0}});
    if (d.charge.step_flags[i]) {
      steps.push_back({{"t_s", d.charge.times[i]}, {"ng_after", d.charge.ng_values[i]}});
    }
  }
  Json durations = nullptr;
  if (d.durations) {
    durations = {{"count", d.durations->count},
                 {"mean_s", d.durations->mean},
                 {"histogram", histogram_json(d.durations->histogram)}};
  }
  return {{"detector_id", d.detector_id},
          {"traces", d.traces},
          {"retained", d.retained},
          {"events_retained", d.events_retained},
          {"baseline_rate", rate_json(d.baseline)},
          {"burst_rate", rate_json(d.burst)},
          {"bursts",
           {{"detected", d.bursts_detected},
            {"used", d.bursts_used},
            {"exposure_s", d.burst_exposure_s},
            {"rate_per_min", d.burst_rate_per_min},
            {"correlated", d.correlated},
            {"coincidence_fraction", d.coincidence_fraction},
            {"durations", durations}}},
          {"charge",
           {{"amp_hz", d.charge.amp},
            {"n_epochs", d.charge.n_epochs},
            {"n_unresolvable", d.charge.n_unresolvable},
            {"series", charge_series},
            {"steps", steps},
            {"step_count", d.charge.step_count()},
            {"steps_with_shift_burst", d.steps_with_shift_burst},
            {"step_burst_fraction", d.step_burst_fraction},
            {"duty_cycle_bound", d.duty_cycle_bound}}},
          {"charge_shifting",
           {{"count", d.charge_shifting},
            {"classified", d.shift_classified},
            {"unclassifiable", d.shift_unclassifiable},
            {"exposure_h", d.charge_shift_exposure_h},
            {"rate_per_h", d.charge_shifting_rate_per_h}}}};
}

Json validation_json(const ValidationReport& v) {
  Json dets = Json::array();
  for (const auto& d : v.detectors) {
    dets.push_back({{"configured_rate_slow", d.configured_rate_slow},
                    {"configured_rate_fast", d.configured_rate_fast},
                    {"baseline_rate_error", d.baseline_rate_error},
                    {"truth_fast_rate", d.truth_fast_rate},
                    {"truth_fast_exposure_s", d.truth_fast_exposure_s},
                    {"truth_fast_flips", d.truth_fast_flips},
                    {"fast_rate_ratio", d.fast_rate_ratio},
                    {"truth_bursts", d.truth_bursts},
                    {"recalled", d.recalled},
                    {"detected", d.detected},
                    {"matched", d.matched},
                    {"precision", d.precision},
                    {"recall", d.recall},
                    {"truth_steps", d.truth_steps},
                    {"flagged_truth_steps", d.flagged_truth_steps},
                    {"false_steps", d.false_steps},
                    {"injected_shift_jumps", d.injected_shift_jumps}});
  }
  return {{"detectors", dets}, {"strikes", v.strikes}, {"shared_jumps", v.shared_jumps}};
}

// ---- reading back --------------------------------------------------------------

std::string csv_head(const std::string& meta, const char* header) {
  std::string out = "# format_version=";
  out += kFormatVersion;
  out += "\n#" + meta + "\n" + header + "\n";
  return out;
}

void append_cell(std::string& out, const Json& v) {
  if (v.is_number()) {
    append_number(out, v.get<double>(), 12);
  } else {
    out += "nan";
  }
}

std::string histogram_csv(const std::string& meta, const Json& h, bool with_expected) {
  std::string out = csv_head(meta, with_expected ? "bin_lo_s,bin_hi_s,count,expected" : "bin_lo_s,bin_hi_s,count");
  if (h.is_null()) return out;
  const Json& edges = h.at("edges");
  const Json& counts = h.at("counts");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    append_cell(out, edges.at(i));
    out += ',';
    append_cell(out, edges.at(i + 1));
    out += ',' + std::to_string(counts.at(i).get<std::size_t>());
    if (with_expected) {
      out += ',';
      append_cell(out, h.at("expected").at(i));
    }
    out += '\n';
  }
  return out;
}

std::string fmt(const Json& v, int digits = 6) {
  if (!v.is_number()) return "n/a";
  std::string s;
  append_number(s, v.get<double>(), digits);
  return s;
}

std::string summary_text(const Json& r) {
  std::ostringstream os;
  const Json& ds = r.at("dataset");
  os << "traces: " << ds.at("n_traces") << " x " << fmt(ds.at("trace_length_s")) << " s, monitored "
     << fmt(ds.at("monitored_s")) << " s, duty cycle " << fmt(ds.at("duty_cycle"), 4) << "\n";
  os << "retention fraction: " << fmt(ds.at("retention_fraction"), 4) << " (pairs retained "
     << ds.at("pairs_retained") << ")\n";
  for (const auto& d : r.at("detectors")) {
    const int id = d.at("detector_id").get<int>();
    os << "\ndetector " << id << ": retained " << d.at("retained") << "/" << d.at("traces") << " traces\n";
    for (const char* key : {"baseline_rate", "burst_rate"}) {
      const Json& x = d.at(key);
      os << "  " << key << ": ";
      if (x.is_null()) {
        os << "n/a\n";
      } else {
        os << fmt(x.at("rate_per_s")) << " /s from " << x.at("n_waits") << " waits\n";
      }
    }
    const Json& b = d.at("bursts");
    os << "  bursts: " << b.at("used") << " used of " << b.at("detected") << " detected, "
       << fmt(b.at("rate_per_min"), 4) << " /min, coincident fraction " << fmt(b.at("coincidence_fraction"), 4)
       << " (" << b.at("correlated") << ")\n";
    if (!b.at("durations").is_null()) {
      os << "  mean burst duration: " << fmt(Json(1e3 * b.at("durations").at("mean_s").get<double>()), 4)
         << " ms over " << b.at("durations").at("count") << " bursts\n";
    }
    const Json& c = d.at("charge_shifting");
    os << "  charge-shifting bursts: " << c.at("count") << " (" << fmt(c.at("rate_per_h"), 4) << " /h over "
       << fmt(c.at("exposure_h"), 4) << " h), unclassifiable " << c.at("unclassifiable") << "\n";
    const Json& q = d.at("charge");
    os << "  offset charge: " << q.at("series").size() << " of " << q.at("n_epochs") << " epochs resolved, "
       << q.at("step_count") << " steps > threshold\n";
  }
  const Json& cc = r.at("coincident_charge_shifting");
  os << "\ncoincident charge-shifting bursts: " << cc.at("count") << " (" << fmt(cc.at("rate_per_h"), 4)
     << " /h)\n";
  const Json& corr = r.at("correlation");
  const Json& all = corr.at("all").at("values");
  if (!all.empty()) {
    os << "R12(0), burst events: " << fmt(all.at(all.size() / 2)) << "; bursts removed: "
       << fmt(corr.at("bursts_removed").at("values").at(all.size() / 2)) << "\n";
  }
  if (r.contains("validation")) {
    os << "\nvalidation against ground truth:\n";
    int id = 1;
    for (const auto& v : r.at("validation").at("detectors")) {
      os << "  detector " << id++ << ": baseline error " << fmt(v.at("baseline_rate_error"), 3)
         << ", fast-rate ratio " << fmt(v.at("fast_rate_ratio"), 3) << ", precision " << fmt(v.at("precision"), 3)
         << ", recall " << fmt(v.at("recall"), 3) << "\n";
    }
  }
  return os.str();
}

}  // namespace

std::string format_report_json(const AnalysisReport& r) {
  Json dets = Json::array();
  for (const auto& d : r.detectors) dets.push_back(detector_json(d));
  Json j = {{"format_version", kFormatVersion},
            {"options", options_json(r.options)},
            {"dataset",
             {{"n_traces", r.n_traces},
              {"trace_length_s", r.trace_length},
              {"monitored_s", r.monitored_s},
              {"wall_s", r.wall_s},
              {"duty_cycle", r.duty_cycle},
              {"pairs_retained", r.pairs_retained},
              {"retention_fraction", r.retention_fraction}}},
            {"detectors", dets},
            {"coincidence",
             {{"n1", r.coincidence.n1},
              {"n2", r.coincidence.n2},
              {"correlated1", r.coincidence.correlated1},
              {"correlated2", r.coincidence.correlated2},
              {"coincident_pairs", r.coincidence.coincident_pairs},
              {"fraction1", r.coincidence.fraction1()},
              {"fraction2", r.coincidence.fraction2()}}},
            {"correlation",
             {{"lags_s", r.correlation_all.lags},
              {"all", curve_json(r.correlation_all, r.surrogate_all)},
              {"bursts_removed", curve_json(r.correlation_removed, r.surrogate_removed)}}},
            {"coincident_charge_shifting",
             {{"count", r.coincident_charge_shifting},
              {"exposure_h", r.charge_shift_exposure_h},
              {"rate_per_h", r.coincident_charge_shifting_rate_per_h}}}};
  if (r.validation) j["validation"] = validation_json(*r.validation);
  return detail::dump_json(j);
}

std::string summarize_report(const std::string& report_json, const std::string& name) {
  const Json r = detail::parse_versioned_json(report_json, name);
  try {
    return summary_text(r);
  } catch (const Json::exception& e) {
    throw DataError(name + ": malformed report (" + e.what() + ")");
  }
}

std::string write_report_products(const std::string& report_json, const fs::path& out_dir, const std::string& name) {
  const Json r = detail::parse_versioned_json(report_json, name);
  try {
    const std::string summary = summary_text(r);
    write_text(out_dir / "summary.txt", summary);

    for (const auto& d : r.at("detectors")) {
      const std::string id = std::to_string(d.at("detector_id").get<int>());
      for (const auto& [key, subset] : {std::pair{"baseline_rate", "baseline"}, std::pair{"burst_rate", "burst"}}) {
        const Json& x = d.at(key);
        std::string meta = " detector_id=" + id + " subset=" + subset;
        if (!x.is_null()) meta += " rate_per_s=" + fmt(x.at("rate_per_s"), 12) + " n_waits=" + x.at("n_waits").dump();
        write_text(out_dir / ("waiting_times_d" + id + "_" + subset + ".csv"),
                   histogram_csv(meta, x.is_null() ? Json(nullptr) : x.at("histogram"), true));
      }
      const Json& dur = d.at("bursts").at("durations");
      std::string meta = " detector_id=" + id;
      meta += " n_bursts=" + (dur.is_null() ? std::string("0") : dur.at("count").dump());
      write_text(out_dir / ("burst_durations_d" + id + ".csv"),
                 histogram_csv(meta, dur.is_null() ? Json(nullptr) : dur.at("histogram"), false));

      const Json& q = d.at("charge");
      std::string ng = csv_head(" detector_id=" + id + " amp_hz=" + fmt(q.at("amp_hz"), 12), "t_s,ng,clamped,step");
      for (const auto& p : q.at("series")) {
        append_cell(ng, p.at("t_s"));
        ng += ',';
        append_cell(ng, p.at("ng"));
        ng += std::string(",") + (p.at("clamped").get<bool>() ? "1" : "0") + "," +
              (p.at("step").get<bool>() ? "1" : "0") + "\n";
      }
      write_text(out_dir / ("ng_series_d" + id + ".csv"), ng);
    }

    const Json& corr = r.at("correlation");
    const Json& lags = corr.at("lags_s");
    const Json& all = corr.at("all");
    const Json& removed = corr.at("bursts_removed");
    std::string c = csv_head(" n_segments=" + all.at("n_segments").dump(),
                             "lag_s,r12_all,r12_bursts_removed,surrogate_mean_all,surrogate_std_all,"
                             "surrogate_mean_removed,surrogate_std_removed");
    auto cell = [](const Json& arr, std::size_t i) { return i < arr.size() ? arr.at(i) : Json(nullptr); };
    for (std::size_t i = 0; i < lags.size(); ++i) {
      append_cell(c, lags.at(i));
      for (const Json* col : {&all.at("values"), &removed.at("values"), &all.at("surrogate_mean"),
                              &all.at("surrogate_std"), &removed.at("surrogate_mean"), &removed.at("surrogate_std")}) {
        c += ',';
        append_cell(c, cell(*col, i));
      }
      c += '\n';
    }
    write_text(out_dir / "correlation.csv", c);
    return summary;
  } catch (const Json::exception& e) {
    throw DataError(name + ": malformed report (" + e.what() + ")");
  }
}

}  // namespace qpt
