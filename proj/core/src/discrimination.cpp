#include "qpt/discrimination.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace qpt {
namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

struct WeightedPoints {
  std::vector<double> x;
  std::vector<double> w;
  double total = 0.0;
};

WeightedPoints make_points(std::span<const double> x, double lo, double hi,
                           const GmmOptions& opt) {
  WeightedPoints pts;
  if (x.size() <= opt.histogram_threshold || hi <= lo) {
    pts.x.assign(x.begin(), x.end());
    pts.w.assign(x.size(), 1.0);
    pts.total = static_cast<double>(x.size());
    return pts;
  }
  const std::size_t bins = std::max<std::size_t>(opt.histogram_bins, 16);
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<double> counts(bins, 0.0);
  for (double v : x) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    counts[std::min(b, bins - 1)] += 1.0;
  }
  for (std::size_t b = 0; b < bins; ++b) {
    if (counts[b] > 0.0) {
      pts.x.push_back(lo + (static_cast<double>(b) + 0.5) * width);
      pts.w.push_back(counts[b]);
    }
  }
  pts.total = static_cast<double>(x.size());
  return pts;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  if (i + 1 >= sorted.size()) return sorted.back();
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

double log_normal_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - kLogSqrt2Pi;
}

// One EM run from a fixed start.
Gmm1D run_em(const WeightedPoints& pts, Gmm1D g, double sigma_floor, const GmmOptions& opt) {
  const std::size_t n = pts.x.size();
  std::vector<double> r1(n);
  double prev_ll = -std::numeric_limits<double>::infinity();
  g.converged = false;
  for (int it = 0; it <= opt.max_iterations; ++it) {
    // E-step, which also yields the log-likelihood of the current parameters.
    const double lw0 = g.w0 > 0.0 ? std::log(g.w0) : -std::numeric_limits<double>::infinity();
    const double lw1 = g.w1 > 0.0 ? std::log(g.w1) : -std::numeric_limits<double>::infinity();
    const double inv0 = 1.0 / g.sigma0, inv1 = 1.0 / g.sigma1;
    const double c0 = lw0 - std::log(g.sigma0) - kLogSqrt2Pi;
    const double c1 = lw1 - std::log(g.sigma1) - kLogSqrt2Pi;
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z0 = (pts.x[i] - g.mu0) * inv0;
      const double z1 = (pts.x[i] - g.mu1) * inv1;
      const double l0 = c0 - 0.5 * z0 * z0;
      const double l1 = c1 - 0.5 * z1 * z1;
      const double diff = l1 - l0;
      const double e = std::exp(-std::abs(diff));
      const double top = std::max(l0, l1);
      ll += pts.w[i] * (top + std::log1p(e));
      r1[i] = diff >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
    }
    g.log_likelihood = ll;
    g.iterations = it;
    if (it > 0 && (ll - prev_ll) < opt.tolerance * pts.total) {
      g.converged = true;
      break;
    }
    if (it == opt.max_iterations) break;
    prev_ll = ll;

    // M-step.
    double n1 = 0.0, s1 = 0.0, s0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = pts.w[i] * r1[i];
      n1 += a;
      s1 += a * pts.x[i];
      s0 += (pts.w[i] - a) * pts.x[i];
    }
    const double n0 = pts.total - n1;
    const double mu0 = n0 > 0.0 ? s0 / n0 : g.mu0;
    const double mu1 = n1 > 0.0 ? s1 / n1 : g.mu1;
    double v0 = 0.0, v1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = pts.w[i] * r1[i];
      const double d0 = pts.x[i] - mu0, d1 = pts.x[i] - mu1;
      v0 += (pts.w[i] - a) * d0 * d0;
      v1 += a * d1 * d1;
    }
    g.mu0 = mu0;
    g.mu1 = mu1;
    g.sigma0 = std::max(n0 > 0.0 ? std::sqrt(v0 / n0) : sigma_floor, sigma_floor);
    g.sigma1 = std::max(n1 > 0.0 ? std::sqrt(v1 / n1) : sigma_floor, sigma_floor);
    g.w0 = n0 / pts.total;
    g.w1 = n1 / pts.total;
  }
  return g;
}

double simpson(auto&& f, double a, double fa, double b, double fb, double m, double fm,
               double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         simpson(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

double integrate(auto&& f, double a, double b, double tol) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson(f, a, fa, b, fb, m, fm, whole, tol, 48);
}

}  // namespace

RotationResult rotate_to_real(std::span<const std::complex<double>> samples) {
  if (samples.size() < 2) throw std::invalid_argument("rotate_to_real needs >= 2 samples");
  double mx = 0.0, my = 0.0;
  for (const auto& z : samples) {
    mx += z.real();
    my += z.imag();
  }
  const double n = static_cast<double>(samples.size());
  mx /= n;
  my /= n;
  double cxx = 0.0, cyy = 0.0, cxy = 0.0;
  for (const auto& z : samples) {
    const double dx = z.real() - mx, dy = z.imag() - my;
    cxx += dx * dx;
    cyy += dy * dy;
    cxy += dx * dy;
  }
  cxx /= n;
  cyy /= n;
  cxy /= n;
  const double mid = 0.5 * (cxx + cyy);
  const double rad = std::hypot(0.5 * (cxx - cyy), cxy);
  const double lmax = mid + rad, lmin = mid - rad;

  RotationResult out;
  if (!(lmax > 0.0)) {
    out.angle = 0.0;
    out.degenerate = true;
  } else {
    out.angle = 0.5 * std::atan2(2.0 * cxy, cxx - cyy);
    out.degenerate = lmin > 0.0 && lmax / lmin < 1.05;
  }
  const double c = std::cos(out.angle), s = std::sin(out.angle);
  out.rotated.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.rotated[i] = samples[i].real() * c + samples[i].imag() * s;
  }
  return out;
}

CombinedStreams combine_streams(std::span<const double> s_plus, std::span<const double> s_minus) {
  if (s_plus.size() != s_minus.size()) {
    throw std::invalid_argument("combine_streams: length mismatch");
  }
  CombinedStreams out;
  const std::size_t n = s_plus.size();
  out.x.resize(n);
  if (n == 0) return out;
  double mp = 0.0, mm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mp += s_plus[i];
    mm += s_minus[i];
  }
  mp /= static_cast<double>(n);
  mm /= static_cast<double>(n);
  double cov = 0.0;
  for (std::size_t i = 0; i < n; ++i) cov += (s_plus[i] - mp) * (s_minus[i] - mm);
  out.sign_flip = cov < 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = out.sign_flip ? 2.0 * mm - s_minus[i] : s_minus[i];
    out.x[i] = 0.5 * (s_plus[i] + m);
  }
  return out;
}

Gmm1D fit_gmm(std::span<const double> x, const GmmOptions& options) {
  if (x.size() < options.min_samples || x.size() < 2) {
    throw std::invalid_argument("fit_gmm: not enough samples");
  }
  std::vector<double> sorted(x.begin(), x.end());
  for (double v : sorted) {
    if (!std::isfinite(v)) throw std::invalid_argument("fit_gmm: non-finite sample");
  }
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front(), hi = sorted.back();
  const double range = hi - lo;
  const double scale = std::max({1.0, std::abs(lo), std::abs(hi)});
  const double sigma_floor = range > 0.0 ? 1e-6 * range : 1e-12 * scale;

  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= static_cast<double>(sorted.size());
  double var = 0.0;
  for (double v : sorted) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(sorted.size()));

  const WeightedPoints pts = make_points(x, lo, hi, options);
  constexpr std::array<std::array<double, 2>, 3> kStarts{{{0.25, 0.75}, {0.10, 0.90}, {0.40, 0.60}}};
  Gmm1D best;
  bool have_best = false;
  for (const auto& q : kStarts) {
    Gmm1D g;
    g.mu0 = quantile_sorted(sorted, q[0]);
    g.mu1 = quantile_sorted(sorted, q[1]);
    g.sigma0 = g.sigma1 = std::max(0.5 * sd, sigma_floor);
    g.w0 = g.w1 = 0.5;
    g = run_em(pts, g, sigma_floor, options);
    if (!have_best || g.log_likelihood > best.log_likelihood) {
      best = g;
      have_best = true;
    }
  }
  if (best.mu0 > best.mu1) {
    std::swap(best.mu0, best.mu1);
    std::swap(best.sigma0, best.sigma1);
    std::swap(best.w0, best.w1);
  }
  return best;
}

double gmm_log_likelihood(const Gmm1D& g, std::span<const double> x) {
  double ll = 0.0;
  for (double v : x) {
    const double l0 = std::log(g.w0) + log_normal_pdf(v, g.mu0, g.sigma0);
    const double l1 = std::log(g.w1) + log_normal_pdf(v, g.mu1, g.sigma1);
    const double top = std::max(l0, l1);
    ll += top + std::log(std::exp(l0 - top) + std::exp(l1 - top));
  }
  return ll;
}

OverlapResult overlap_fidelity(const Gmm1D& gmm, bool weighted) {
  if (!(gmm.sigma0 > 0.0 && gmm.sigma1 > 0.0)) {
    throw std::invalid_argument("overlap_fidelity: sigmas must be > 0");
  }
  const double a0 = weighted ? gmm.w0 : 1.0;
  const double a1 = weighted ? gmm.w1 : 1.0;
  auto density = [](double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
  };
  auto f = [&](double x) {
    return std::min(a0 * density(x, gmm.mu0, gmm.sigma0), a1 * density(x, gmm.mu1, gmm.sigma1));
  };

  const double smax = std::max(gmm.sigma0, gmm.sigma1);
  const double lo = std::min(gmm.mu0, gmm.mu1) - 8.0 * smax;
  const double hi = std::max(gmm.mu0, gmm.mu1) + 8.0 * smax;

  // Breakpoints: the density crossings (kinks of the integrand) and the
  // component centres, so each panel holds a smooth piece.
  std::vector<double> cuts{lo, hi};
  for (const auto& [mu, s] : {std::pair{gmm.mu0, gmm.sigma0}, std::pair{gmm.mu1, gmm.sigma1}}) {
    for (double k : {-3.0, -1.0, 0.0, 1.0, 3.0}) cuts.push_back(mu + k * s);
  }
  {
    const double i0 = 1.0 / (gmm.sigma0 * gmm.sigma0), i1 = 1.0 / (gmm.sigma1 * gmm.sigma1);
    const double qa = 0.5 * (i1 - i0);
    const double qb = gmm.mu0 * i0 - gmm.mu1 * i1;
    const double qc = 0.5 * (gmm.mu1 * gmm.mu1 * i1 - gmm.mu0 * gmm.mu0 * i0) +
                      std::log(gmm.sigma1 / gmm.sigma0) +
                      ((weighted && a0 > 0.0 && a1 > 0.0) ? std::log(a0 / a1) : 0.0);
    if (std::abs(qa) < 1e-300) {
      if (std::abs(qb) > 0.0) cuts.push_back(-qc / qb);
    } else {
      const double disc = qb * qb - 4.0 * qa * qc;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        cuts.push_back((-qb + sq) / (2.0 * qa));
        cuts.push_back((-qb - sq) / (2.0 * qa));
      }
    }
  }
  std::erase_if(cuts, [&](double c) { return !std::isfinite(c) || c < lo || c > hi; });
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  double total = 0.0;
  const double tol = 1e-13;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i], b = cuts[i + 1];
    if (b <= a) continue;
    constexpr int kPanels = 8;
    for (int p = 0; p < kPanels; ++p) {
      const double pa = a + (b - a) * p / kPanels;
      const double pb = (p + 1 == kPanels) ? b : a + (b - a) * (p + 1) / kPanels;
      total += integrate(f, pa, pb, tol);
    }
  }
  OverlapResult out;
  out.overlap = std::clamp(total, 0.0, 1.0);
  out.fidelity = 1.0 - out.overlap;
  return out;
}

EventRecord threshold_events(std::span<const double> x, const DiscriminationResult& disc,
                             double bin_width, double t0) {
  if (!(bin_width > 0.0)) throw std::invalid_argument("bin_width must be > 0");
  EventRecord rec;
  rec.trace_t0 = t0;
  rec.bin_width = bin_width;
  rec.discrimination = disc;
  rec.binary_record.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    rec.binary_record[k] = x[k] >= disc.threshold ? 1 : 0;
    if (k > 0 && rec.binary_record[k] != rec.binary_record[k - 1]) {
      rec.event_times.push_back(t0 + static_cast<double>(k) * bin_width);
    }
  }
  return rec;
}

std::size_t postselect(std::span<EventRecord> records, double min_fidelity) {
  std::size_t kept = 0;
  for (auto& r : records) {
    r.retained = r.discrimination.fidelity > min_fidelity;
    if (r.retained) ++kept;
  }
  return kept;
}

TraceDiscrimination discriminate(const IQTrace& trace, const DiscriminationOptions& options) {
  if (trace.samples_plus.size() != trace.samples_minus.size()) {
    throw std::invalid_argument("trace streams differ in length");
  }
  const RotationResult rp = rotate_to_real(trace.samples_plus);
  const RotationResult rm = rotate_to_real(trace.samples_minus);
  CombinedStreams combined = combine_streams(rp.rotated, rm.rotated);

  TraceDiscrimination out;
  auto& d = out.result;
  d.rotation_plus = rp.angle;
  d.rotation_minus = rm.angle;
  d.sign_flip = combined.sign_flip;
  d.degenerate = rp.degenerate || rm.degenerate;
  d.gmm = fit_gmm(combined.x, options.gmm);
  const OverlapResult ov = overlap_fidelity(d.gmm, options.weighted_overlap);
  d.overlap = ov.overlap;
  d.fidelity = d.gmm.converged ? ov.fidelity : 0.0;
  d.threshold = 0.5 * (d.gmm.mu0 + d.gmm.mu1);
  out.x = std::move(combined.x);
  return out;
}

EventRecord extract_events(const IQTrace& trace, const DiscriminationOptions& options) {
  TraceDiscrimination td = discriminate(trace, options);
  EventRecord rec = threshold_events(td.x, td.result, trace.bin_width, trace.t0);
  rec.detector_id = trace.detector_id;
  rec.trace_index = trace.index;
  return rec;
}

std::vector<unsigned char> reconstruct_record(const EventRecord& record) {
  std::vector<unsigned char> out(record.binary_record.size());
  if (out.empty()) return out;
  unsigned char state = record.binary_record.front();
  std::size_t next = 0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double t = record.trace_t0 + static_cast<double>(k) * record.bin_width;
    while (next < record.event_times.size() &&
           std::abs(record.event_times[next] - t) < 0.5 * record.bin_width) {
      state ^= 1;
      ++next;
    }
    out[k] = state;
  }
  return out;
}

}  // namespace qpt
