#include "qpt/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "json_util.hpp"
#include "qpt/config.hpp"

namespace qpt {

namespace fs = std::filesystem;
using detail::append_number;
using detail::Json;

void check_format_version(const std::string& version, const std::string& what) {
  const auto dot = version.find('.');
  const std::string major = version.substr(0, dot);
  const std::string expected = std::string(kFormatVersion).substr(0, std::string(kFormatVersion).find('.'));
  if (major != expected) {
    throw DataError(what + ": unsupported format_version " + version + " (expected " + expected + ".x)");
  }
}

namespace layout {

namespace {
std::string numbered(const char* stem, int detector_id, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_d%d_%05zu.csv", stem, detector_id, index);
  return buf;
}
}  // namespace

fs::path trace_file(const fs::path& dir, int detector_id, std::size_t index) {
  return dir / "traces" / numbered("trace", detector_id, index);
}
fs::path spectro_file(const fs::path& dir, int detector_id, std::size_t index) {
  return dir / "spectroscopy" / numbered("spectro", detector_id, index);
}
fs::path events_file(const fs::path& dir, int detector_id, std::size_t index) {
  return dir / "events" / numbered("events", detector_id, index);
}
fs::path bursts_file(const fs::path& dir, int detector_id) {
  return dir / ("bursts_d" + std::to_string(detector_id) + ".csv");
}
fs::path manifest_file(const fs::path& dir) { return dir / "manifest.json"; }
fs::path truth_file(const fs::path& dir) { return dir / "truth.json"; }
fs::path report_file(const fs::path& dir) { return dir / "report.json"; }

std::string describe_simulation_dir() {
  return "expected layout:\n"
         "  manifest.json\n"
         "  truth.json                          (optional, enables validation)\n"
         "  traces/trace_d1_00000.csv, trace_d2_00000.csv, ...\n"
         "  spectroscopy/spectro_d1_00000.csv, ...  (optional)";
}

}  // namespace layout

namespace {

// ---- small text helpers ----------------------------------------------------

void append_kv(std::string& out, const char* key, double v, int digits = 17) {
  out += ' ';
  out += key;
  out += '=';
  append_number(out, v, digits);
}

void append_kv(std::string& out, const char* key, std::size_t v) {
  out += ' ';
  out += key;
  out += '=';
  out += std::to_string(v);
}

void begin_csv(std::string& out) {
  out += "# format_version=";
  out += kFormatVersion;
  out += '\n';
  out += '#';
}

class CsvReader {
 public:
  CsvReader(const std::string& text, std::string name) : text_(text), name_(std::move(name)) {
    const std::string first = next_line();
    const std::string tag = "# format_version=";
    if (first.rfind(tag, 0) != 0) fail("missing format_version line");
    check_format_version(first.substr(tag.size()), name_);
    const std::string meta = next_line();
    if (meta.empty() || meta.front() != '#') fail("missing metadata line");
    std::istringstream is(meta.substr(1));
    std::string kv;
    while (is >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) fail("bad metadata entry '" + kv + "'");
      meta_[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    std::ostringstream os;
    os << name_;
    if (line_no_ > 0) os << ":" << line_no_;
    os << ": " << what;
    throw DataError(os.str());
  }

  void expect_header(const char* header) {
    if (next_line() != header) fail(std::string("expected header '") + header + "'");
  }

  bool done() const { return pos_ >= text_.size(); }

  std::string next_line() {
    if (done()) fail("unexpected end of file");
    const auto end = text_.find('\n', pos_);
    const auto stop = end == std::string::npos ? text_.size() : end;
    std::string line = text_.substr(pos_, stop - pos_);
    pos_ = stop + 1;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  // Parses the comma-separated numbers of the next row into `out`.
  void row(double* out, std::size_t n) {
    const auto end = text_.find('\n', pos_);
    const char* p = text_.data() + pos_;
    const char* stop = text_.data() + (end == std::string::npos ? text_.size() : end);
    ++line_no_;
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = std::from_chars(p, stop, out[i]);
      if (r.ec != std::errc() || !std::isfinite(out[i])) fail("bad number");
      p = r.ptr;
      if (i + 1 < n) {
        if (p == stop || *p != ',') fail("expected " + std::to_string(n) + " columns");
        ++p;
      }
    }
    if (p != stop && !(p + 1 == stop && *p == '\r')) fail("trailing characters");
    pos_ = (end == std::string::npos ? text_.size() : end + 1);
  }

  std::string meta(const std::string& key) const {
    const auto it = meta_.find(key);
    if (it == meta_.end()) fail("metadata lacks '" + key + "'");
    return it->second;
  }

  double meta_number(const std::string& key) const {
    const std::string s = meta(key);
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) {
      fail("metadata '" + key + "' is not a number");
    }
    return v;
  }

  std::size_t meta_count(const std::string& key) const {
    const std::string s = meta(key);
    std::size_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("metadata '" + key + "' is not a count");
    return v;
  }

 private:
  const std::string& text_;
  std::string name_;
  std::size_t pos_ = 0;
  int line_no_ = 0;
  std::map<std::string, std::string> meta_;
};

int checked_detector(const CsvReader& r, std::size_t id) {
  if (id != 1 && id != 2) r.fail("detector_id must be 1 or 2");
  return static_cast<int>(id);
}

// ---- JSON pieces of the truth file ------------------------------------------

Json spec_json(const DetectorSpec& s) {
  return {{"mean_freq", s.mean_freq},
          {"splitting_amp", s.splitting_amp},
          {"coupling", s.coupling},
          {"nonradiative", s.nonradiative},
          {"dephasing", s.dephasing}};
}

Json config_json(const SimConfig& c) {
  Json dets = Json::array();
  for (const auto& d : c.detectors) {
    dets.push_back({{"spec", spec_json(d.spec)},
                    {"rate_slow", d.rate_slow},
                    {"rate_fast", d.rate_fast},
                    {"mean_burst_duration", d.mean_burst_duration},
                    {"charge_jump_rate", d.charge_jump_rate},
                    {"jump_burst_fraction", d.jump_burst_fraction},
                    {"charge_drift_step", d.charge_drift_step},
                    {"noise_sigma", d.noise_sigma},
                    {"rabi", d.rabi},
                    {"initial_ng", d.initial_ng}});
  }
  return {{"detectors", dets},
          {"burst_event_rate", c.burst_event_rate},
          {"p_both", c.p_both},
          {"p_only", {c.p_only[0], c.p_only[1]}},
          {"shared_jump_rate", c.shared_jump_rate},
          {"seed", c.seed},
          {"duration", c.duration},
          {"bin_width", c.bin_width},
          {"trace_length", c.trace_length},
          {"dead_time", c.dead_time},
          {"spectroscopy",
           {{"points", c.spectroscopy.points},
            {"half_span_hz", c.spectroscopy.half_span_hz},
            {"noise_sigma", c.spectroscopy.noise_sigma}}}};
}

SimConfig config_from_json(const Json& j) {
  SimConfig c;
  for (std::size_t d = 0; d < 2; ++d) {
    const Json& x = j.at("detectors").at(d);
    auto& p = c.detectors[d];
    const Json& s = x.at("spec");
    p.spec.mean_freq = s.at("mean_freq").get<double>();
    p.spec.splitting_amp = s.at("splitting_amp").get<double>();
    p.spec.coupling = s.at("coupling").get<double>();
    p.spec.nonradiative = s.at("nonradiative").get<double>();
    p.spec.dephasing = s.at("dephasing").get<double>();
    p.rate_slow = x.at("rate_slow").get<double>();
    p.rate_fast = x.at("rate_fast").get<double>();
    p.mean_burst_duration = x.at("mean_burst_duration").get<double>();
    p.charge_jump_rate = x.at("charge_jump_rate").get<double>();
    p.jump_burst_fraction = x.at("jump_burst_fraction").get<double>();
    p.charge_drift_step = x.at("charge_drift_step").get<double>();
    p.noise_sigma = x.at("noise_sigma").get<double>();
    p.rabi = x.at("rabi").get<double>();
    p.initial_ng = x.at("initial_ng").get<double>();
  }
  c.burst_event_rate = j.at("burst_event_rate").get<double>();
  c.p_both = j.at("p_both").get<double>();
  c.p_only = {j.at("p_only").at(0).get<double>(), j.at("p_only").at(1).get<double>()};
  c.shared_jump_rate = j.at("shared_jump_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.duration = j.at("duration").get<double>();
  c.bin_width = j.at("bin_width").get<double>();
  c.trace_length = j.at("trace_length").get<double>();
  c.dead_time = j.at("dead_time").get<double>();
  const Json& sp = j.at("spectroscopy");
  c.spectroscopy.points = sp.at("points").get<std::size_t>();
  c.spectroscopy.half_span_hz = sp.at("half_span_hz").get<double>();
  c.spectroscopy.noise_sigma = sp.at("noise_sigma").get<double>();
  return c;
}

}  // namespace

// ---- traces ------------------------------------------------------------------

std::string format_trace_csv(const IQTrace& trace) {
  trace.validate();
  std::string out;
  out.reserve(trace.size() * 64 + 256);
  begin_csv(out);
  append_kv(out, "detector_id", static_cast<std::size_t>(trace.detector_id));
  append_kv(out, "trace_index", trace.index);
  append_kv(out, "t0_s", trace.t0);
  append_kv(out, "bin_width_s", trace.bin_width);
  append_kv(out, "n_bins", trace.size());
  append_kv(out, "drive_plus_rad_s", trace.drive_freqs[0]);
  append_kv(out, "drive_minus_rad_s", trace.drive_freqs[1]);
  out += "\nt_s,i_plus,q_plus,i_minus,q_minus\n";
  for (std::size_t k = 0; k < trace.size(); ++k) {
    append_number(out, trace.t0 + static_cast<double>(k) * trace.bin_width, 12);
    for (const double v : {trace.samples_plus[k].real(), trace.samples_plus[k].imag(),
                           trace.samples_minus[k].real(), trace.samples_minus[k].imag()}) {
      out += ',';
      append_number(out, v, 9);
    }
    out += '\n';
  }
  return out;
}

IQTrace parse_trace_csv(const std::string& text, const std::string& name) {
  CsvReader r(text, name);
  IQTrace t;
  t.detector_id = checked_detector(r, r.meta_count("detector_id"));
  t.index = r.meta_count("trace_index");
  t.t0 = r.meta_number("t0_s");
  t.bin_width = r.meta_number("bin_width_s");
  t.drive_freqs = {r.meta_number("drive_plus_rad_s"), r.meta_number("drive_minus_rad_s")};
  const std::size_t n = r.meta_count("n_bins");
  if (!(t.bin_width > 0.0)) r.fail("bin_width_s must be > 0");
  r.expect_header("t_s,i_plus,q_plus,i_minus,q_minus");
  t.samples_plus.resize(n);
  t.samples_minus.resize(n);
  double v[5];
  for (std::size_t k = 0; k < n; ++k) {
    if (r.done()) r.fail("expected " + std::to_string(n) + " rows, found " + std::to_string(k));
    r.row(v, 5);
    if (std::abs(v[0] - (t.t0 + static_cast<double>(k) * t.bin_width)) > 0.25 * t.bin_width) {
      r.fail("time column out of step with t0_s and bin_width_s");
    }
    t.samples_plus[k] = {v[1], v[2]};
    t.samples_minus[k] = {v[3], v[4]};
  }
  if (!r.done()) r.fail("more rows than n_bins");
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  return t;
}

// ---- spectroscopy ------------------------------------------------------------

std::string format_spectroscopy_csv(const SpectroscopyTrace& trace) {
  trace.validate();
  std::string out;
  begin_csv(out);
  append_kv(out, "detector_id", static_cast<std::size_t>(trace.detector_id));
  append_kv(out, "trace_index", trace.index);
  append_kv(out, "t0_s", trace.t0);
  append_kv(out, "n_points", trace.freqs.size());
  out += "\nf_hz,mag_plus,mag_minus\n";
  for (std::size_t k = 0; k < trace.freqs.size(); ++k) {
    append_number(out, trace.freqs[k] / kTwoPi, 12);
    out += ',';
    append_number(out, trace.mag_plus[k], 9);
    out += ',';
    append_number(out, trace.mag_minus[k], 9);
    out += '\n';
  }
  return out;
}

SpectroscopyTrace parse_spectroscopy_csv(const std::string& text, const std::string& name) {
  CsvReader r(text, name);
  SpectroscopyTrace t;
  t.detector_id = checked_detector(r, r.meta_count("detector_id"));
  t.index = r.meta_count("trace_index");
  t.t0 = r.meta_number("t0_s");
  const std::size_t n = r.meta_count("n_points");
  r.expect_header("f_hz,mag_plus,mag_minus");
  double v[3];
  for (std::size_t k = 0; k < n; ++k) {
    if (r.done()) r.fail("expected " + std::to_string(n) + " rows");
    r.row(v, 3);
    t.freqs.push_back(kTwoPi * v[0]);
    t.mag_plus.push_back(v[1]);
    t.mag_minus.push_back(v[2]);
  }
  if (!r.done()) r.fail("more rows than n_points");
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  return t;
}

// ---- events and bursts -------------------------------------------------------

std::string format_events_csv(const EventRecord& record) {
  const auto& d = record.discrimination;
  std::string out;
  begin_csv(out);
  append_kv(out, "detector_id", static_cast<std::size_t>(record.detector_id));
  append_kv(out, "trace_index", record.trace_index);
  append_kv(out, "t0_s", record.trace_t0, 12);
  append_kv(out, "bin_width_s", record.bin_width, 12);
  append_kv(out, "n_bins", record.binary_record.size());
  append_kv(out, "initial_state",
            static_cast<std::size_t>(record.binary_record.empty() ? 0 : record.binary_record.front()));
  append_kv(out, "retained", static_cast<std::size_t>(record.retained ? 1 : 0));
  append_kv(out, "fidelity", d.fidelity, 12);
  append_kv(out, "overlap", d.overlap, 12);
  append_kv(out, "threshold", d.threshold, 12);
  append_kv(out, "rotation_plus", d.rotation_plus, 12);
  append_kv(out, "rotation_minus", d.rotation_minus, 12);
  append_kv(out, "sign_flip", static_cast<std::size_t>(d.sign_flip ? 1 : 0));
  append_kv(out, "mu0", d.gmm.mu0, 12);
  append_kv(out, "mu1", d.gmm.mu1, 12);
  append_kv(out, "sigma0", d.gmm.sigma0, 12);
  append_kv(out, "sigma1", d.gmm.sigma1, 12);
  append_kv(out, "w0", d.gmm.w0, 12);
  append_kv(out, "w1", d.gmm.w1, 12);
  append_kv(out, "n_events", record.event_times.size());
  out += "\nt_s\n";
  for (const double t : record.event_times) {
    append_number(out, t, 12);
    out += '\n';
  }
  return out;
}

EventRecord parse_events_csv(const std::string& text, const std::string& name) {
  CsvReader r(text, name);
  EventRecord rec;
  rec.detector_id = checked_detector(r, r.meta_count("detector_id"));
  rec.trace_index = r.meta_count("trace_index");
  rec.trace_t0 = r.meta_number("t0_s");
  rec.bin_width = r.meta_number("bin_width_s");
  rec.retained = r.meta_count("retained") != 0;
  auto& d = rec.discrimination;
  d.fidelity = r.meta_number("fidelity");
  d.overlap = r.meta_number("overlap");
  d.threshold = r.meta_number("threshold");
  d.rotation_plus = r.meta_number("rotation_plus");
  d.rotation_minus = r.meta_number("rotation_minus");
  d.sign_flip = r.meta_count("sign_flip") != 0;
  d.gmm.mu0 = r.meta_number("mu0");
  d.gmm.mu1 = r.meta_number("mu1");
  d.gmm.sigma0 = r.meta_number("sigma0");
  d.gmm.sigma1 = r.meta_number("sigma1");
  d.gmm.w0 = r.meta_number("w0");
  d.gmm.w1 = r.meta_number("w1");
  const std::size_t n = r.meta_count("n_events");
  r.expect_header("t_s");
  rec.event_times.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (r.done()) r.fail("expected " + std::to_string(n) + " events");
    r.row(&rec.event_times[k], 1);
  }
  if (!r.done()) r.fail("more rows than n_events");
  rec.binary_record.assign(r.meta_count("n_bins"), 0);
  if (!rec.binary_record.empty()) rec.binary_record.front() = r.meta_count("initial_state") ? 1 : 0;
  rec.binary_record = reconstruct_record(rec);
  return rec;
}

std::string format_bursts_csv(int detector_id, std::span<const BurstInterval> bursts) {
  std::string out;
  begin_csv(out);
  append_kv(out, "detector_id", static_cast<std::size_t>(detector_id));
  append_kv(out, "n_bursts", bursts.size());
  out += "\nt_start_s,t_end_s,n_events,correlated,charge_shifting\n";
  for (const auto& b : bursts) {
    append_number(out, b.t_start, 12);
    out += ',';
    append_number(out, b.t_end, 12);
    out += ',' + std::to_string(b.n_events) + ',' + (b.correlated ? "1" : "0") + ',' +
           (b.charge_shifting ? "1" : "0") + '\n';
  }
  return out;
}

std::vector<BurstInterval> parse_bursts_csv(const std::string& text, const std::string& name) {
  CsvReader r(text, name);
  const int id = checked_detector(r, r.meta_count("detector_id"));
  const std::size_t n = r.meta_count("n_bursts");
  r.expect_header("t_start_s,t_end_s,n_events,correlated,charge_shifting");
  std::vector<BurstInterval> out(n);
  double v[5];
  for (auto& b : out) {
    if (r.done()) r.fail("expected " + std::to_string(n) + " bursts");
    r.row(v, 5);
    b.detector_id = id;
    b.t_start = v[0];
    b.t_end = v[1];
    if (!(v[2] >= 0.0) || v[2] != std::floor(v[2])) r.fail("n_events must be a count");
    b.n_events = static_cast<std::size_t>(v[2]);
    b.correlated = v[3] != 0.0;
    b.charge_shifting = v[4] != 0.0;
  }
  if (!r.done()) r.fail("more rows than n_bursts");
  return out;
}

// ---- truth and manifest ------------------------------------------------------

std::string format_truth_json(const GroundTruthLog& truth, const SimConfig& config) {
  Json dets = Json::array();
  for (const auto& d : truth.detectors) {
    Json windows = Json::array();
    for (const auto& w : d.burst_intervals) windows.push_back({w.start, w.end});
    Json jumps = Json::array();
    for (const auto& j : d.charge_jumps) {
      jumps.push_back({{"time", j.time}, {"delta", j.delta}, {"with_burst", j.with_burst}, {"shared", j.shared}});
    }
    Json ng = Json::array();
    for (const auto& p : d.ng_series) ng.push_back({p.time, p.ng});
    dets.push_back({{"initial_parity", static_cast<int>(d.initial_parity)},
                    {"flip_times", d.flip_times},
                    {"burst_intervals", windows},
                    {"charge_jumps", jumps},
                    {"ng_series", ng}});
  }
  Json strikes = Json::array();
  for (const auto& s : truth.strikes) {
    strikes.push_back({{"time", s.time},
                       {"hits", {s.hits[0], s.hits[1]}},
                       {"durations", {s.durations[0], s.durations[1]}},
                       {"source", s.source == StrikeSource::kChargeJump ? "charge_jump" : "background"}});
  }
  const Json j = {{"format_version", kFormatVersion},
                  {"config", config_json(config)},
                  {"detectors", dets},
                  {"strikes", strikes},
                  {"trace_starts", truth.trace_starts},
                  {"trace_length", truth.trace_length},
                  {"duration", truth.duration}};
  return detail::dump_json(j, 17);
}

TruthFile parse_truth_json(const std::string& text, const std::string& name) {
  const Json j = detail::parse_versioned_json(text, name);
  TruthFile f;
  try {
    f.config = config_from_json(j.at("config"));
    auto& t = f.truth;
    for (std::size_t d = 0; d < 2; ++d) {
      const Json& x = j.at("detectors").at(d);
      auto& dt = t.detectors[d];
      dt.initial_parity = x.at("initial_parity").get<int>() > 0 ? Parity::kEven : Parity::kOdd;
      dt.flip_times = x.at("flip_times").get<std::vector<double>>();
      for (const auto& w : x.at("burst_intervals")) dt.burst_intervals.push_back({w.at(0), w.at(1)});
      for (const auto& c : x.at("charge_jumps")) {
        dt.charge_jumps.push_back({c.at("time"), c.at("delta"), c.at("with_burst"), c.at("shared")});
      }
      for (const auto& p : x.at("ng_series")) dt.ng_series.push_back({p.at(0), p.at(1)});
    }
    for (const auto& s : j.at("strikes")) {
      Strike k;
      k.time = s.at("time");
      k.hits = {s.at("hits").at(0).get<bool>(), s.at("hits").at(1).get<bool>()};
      k.durations = {s.at("durations").at(0).get<double>(), s.at("durations").at(1).get<double>()};
      k.source = s.at("source") == "charge_jump" ? StrikeSource::kChargeJump : StrikeSource::kBackground;
      t.strikes.push_back(k);
    }
    t.trace_starts = j.at("trace_starts").get<std::vector<double>>();
    t.trace_length = j.at("trace_length");
    t.duration = j.at("duration");
    f.config.validate();
  } catch (const Json::exception& e) {
    throw DataError(name + ": malformed truth file (" + e.what() + ")");
  } catch (const std::invalid_argument& e) {
    throw DataError(name + ": " + e.what());
  }
  return f;
}

std::string format_manifest_json(const SimConfig& config, const GroundTruthLog& truth) {
  Json per = Json::array();
  for (const auto& d : truth.detectors) {
    std::size_t shared = 0;
    for (const auto& j : d.charge_jumps) shared += j.shared ? 1 : 0;
    per.push_back({{"flips", d.flip_times.size()},
                   {"burst_windows", d.burst_intervals.size()},
                   {"charge_jumps", d.charge_jumps.size()},
                   {"shared_charge_jumps", shared}});
  }
  std::size_t background = 0;
  std::array<std::size_t, 2> hits{0, 0};
  for (const auto& s : truth.strikes) {
    background += s.source == StrikeSource::kBackground ? 1 : 0;
    for (int d = 0; d < 2; ++d) hits[d] += s.hits[d] ? 1 : 0;
  }
  const Json j = {{"format_version", kFormatVersion},
                  {"seed", config.seed},
                  {"duration_s", config.duration},
                  {"trace_length_s", config.trace_length},
                  {"bin_width_s", config.bin_width},
                  {"dead_time_s", config.dead_time},
                  {"n_traces", truth.trace_starts.size()},
                  {"bins_per_trace", config.bins_per_trace()},
                  {"spectroscopy", true},
                  {"counts",
                   {{"strikes", truth.strikes.size()},
                    {"background_strikes", background},
                    {"expected_background_strikes", config.burst_event_rate * truth.duration},
                    {"strikes_per_detector", hits},
                    {"detectors", per}}}};
  return detail::dump_json(j);
}

// ---- files -------------------------------------------------------------------

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw DataError("error reading '" + path.string() + "'");
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("error writing '" + path.string() + "'");
  }
  fs::rename(tmp, path);
}

void write_simulation(const Simulator& sim, const fs::path& dir, unsigned threads) {
  fs::create_directories(dir / "traces");
  fs::create_directories(dir / "spectroscopy");
  const std::size_t n = sim.trace_count();
  const std::size_t batch = std::max(1u, threads);
  struct Rendered {
    std::array<std::string, 2> trace, spectro;
  };
  for (std::size_t first = 0; first < n; first += batch) {
    const std::size_t count = std::min(batch, n - first);
    std::vector<Rendered> out(count);
    auto work = [&](std::size_t k) {
      for (int d = 1; d <= 2; ++d) {
        out[k].trace[d - 1] = format_trace_csv(sim.render_trace(d, first + k));
        out[k].spectro[d - 1] = format_spectroscopy_csv(sim.render_spectroscopy(d, first + k));
      }
    };
    if (count == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(count);
      for (std::size_t k = 0; k < count; ++k) {
        pool.emplace_back([&, k] {
          try {
            work(k);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
    for (std::size_t k = 0; k < count; ++k) {
      for (int d = 1; d <= 2; ++d) {
        write_text(layout::trace_file(dir, d, first + k), out[k].trace[d - 1]);
        write_text(layout::spectro_file(dir, d, first + k), out[k].spectro[d - 1]);
      }
    }
  }
  write_text(layout::truth_file(dir), format_truth_json(sim.truth(), sim.config()));
  write_text(layout::manifest_file(dir), format_manifest_json(sim.config(), sim.truth()));
}

// ---- directory source --------------------------------------------------------

DirectorySource::DirectorySource(fs::path dir) : dir_(std::move(dir)) {
  if (!fs::is_directory(dir_)) {
    throw ConfigError("input '" + dir_.string() + "' is not a directory\n" + layout::describe_simulation_dir());
  }
  const fs::path manifest = layout::manifest_file(dir_);
  if (!fs::exists(manifest)) {
    throw ConfigError("no manifest.json in '" + dir_.string() + "'\n" + layout::describe_simulation_dir());
  }
  const Json m = detail::parse_versioned_json(read_text(manifest), manifest.string());
  try {
    count_ = m.at("n_traces").get<std::size_t>();
    spectroscopy_ = m.value("spectroscopy", false);
  } catch (const Json::exception& e) {
    throw DataError(manifest.string() + ": " + e.what());
  }
  if (count_ == 0) throw DataError(manifest.string() + ": n_traces is 0");
  for (std::size_t i = 0; i < count_; ++i) {
    for (int d = 1; d <= 2; ++d) {
      const fs::path p = layout::trace_file(dir_, d, i);
      if (!fs::exists(p)) throw DataError("missing trace file '" + p.string() + "'");
      if (spectroscopy_ && !fs::exists(layout::spectro_file(dir_, d, i))) {
        throw DataError("missing spectroscopy file '" + layout::spectro_file(dir_, d, i).string() + "'");
      }
    }
  }
  const fs::path truth = layout::truth_file(dir_);
  if (fs::exists(truth)) truth_ = parse_truth_json(read_text(truth), truth.string());
}

std::array<IQTrace, 2> DirectorySource::load_traces(std::size_t index) const {
  std::array<IQTrace, 2> out;
  for (int d = 1; d <= 2; ++d) {
    const fs::path p = layout::trace_file(dir_, d, index);
    out[d - 1] = parse_trace_csv(read_text(p), p.string());
    if (out[d - 1].detector_id != d || out[d - 1].index != index) {
      throw DataError(p.string() + ": detector_id/trace_index do not match the file name");
    }
  }
  if (out[0].size() != out[1].size() || out[0].t0 != out[1].t0) {
    throw DataError("trace pair " + std::to_string(index) + " differs in start or length between detectors");
  }
  return out;
}

std::optional<std::array<SpectroscopyTrace, 2>> DirectorySource::load_spectroscopy(std::size_t index) const {
  if (!spectroscopy_) return std::nullopt;
  std::array<SpectroscopyTrace, 2> out;
  for (int d = 1; d <= 2; ++d) {
    const fs::path p = layout::spectro_file(dir_, d, index);
    out[d - 1] = parse_spectroscopy_csv(read_text(p), p.string());
  }
  return out;
}

}  // namespace qpt
