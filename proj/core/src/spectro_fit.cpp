#include "qpt/spectro_fit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace qpt {
namespace {

constexpr double kScale = kTwoPi * 1e6;  // fit in units of 2π·MHz

struct Problem {
  const SpectroscopyTrace* trace;
  DetectorSpec spec;
  double center;

  // p = (ω+, ω-, Γ, Ω), scaled and shifted by `center`.
  void residuals(const Eigen::Vector4d& p, Eigen::VectorXd& r) const {
    const std::size_t n = trace->freqs.size();
    DetectorSpec s = spec;
    s.coupling = std::abs(p[2]) * kScale;
    const double rabi = std::abs(p[3]) * kScale;
    const double wp = center + p[0] * kScale;
    const double wm = center + p[1] * kScale;
    r.resize(static_cast<Eigen::Index>(2 * n));
    for (std::size_t i = 0; i < n; ++i) {
      const double w = trace->freqs[i];
      r[static_cast<Eigen::Index>(i)] = std::abs(transmission_full(w - wp, s, rabi)) - trace->mag_plus[i];
      r[static_cast<Eigen::Index>(n + i)] = std::abs(transmission_full(w - wm, s, rabi)) - trace->mag_minus[i];
    }
  }
};

std::vector<double> smooth(const std::vector<double>& v, std::size_t half) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(v.size() - 1, i + half);
    double s = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) s += v[j];
    out[i] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

// Noise from second differences: var(x[i+1] - 2x[i] + x[i-1]) = 6 σ² for white noise.
double noise_estimate(const std::vector<double>& v) {
  if (v.size() < 3) return 0.0;
  std::vector<double> d;
  d.reserve(v.size() - 2);
  for (std::size_t i = 1; i + 1 < v.size(); ++i) d.push_back(std::abs(v[i + 1] - 2.0 * v[i] + v[i - 1]));
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid / 0.6745 / std::sqrt(6.0);
}

double prominence(const std::vector<double>& v, std::size_t i) {
  double left = v[i];
  for (std::size_t j = i; j-- > 0;) {
    if (v[j] < v[i]) break;
    left = std::max(left, v[j]);
  }
  double right = v[i];
  for (std::size_t j = i + 1; j < v.size(); ++j) {
    if (v[j] < v[i]) break;
    right = std::max(right, v[j]);
  }
  return std::min(left, right) - v[i];
}

// Full width at half depth of the dip at index k, in rad/s.
double half_depth_width(const std::vector<double>& v, const std::vector<double>& f, std::size_t k) {
  const double base = std::max(v.front(), v.back());
  const double level = 0.5 * (base + v[k]);
  std::size_t lo = k, hi = k;
  while (lo > 0 && v[lo] < level) --lo;
  while (hi + 1 < v.size() && v[hi] < level) ++hi;
  return f[hi] - f[lo];
}

}  // namespace

double SpectroFit::splitting_hz() const { return std::abs(omega_plus - omega_minus) / kTwoPi; }

SpectroFit spectro_fit(const SpectroscopyTrace& trace, const DetectorSpec& prior,
                       const SpectroFitOptions& options) {
  trace.validate();
  prior.validate();
  const std::size_t n = trace.freqs.size();
  if (n < 16) throw std::invalid_argument("spectroscopy sweep too short to fit");
  SpectroFit out;

  std::vector<double> avg(n);
  for (std::size_t i = 0; i < n; ++i) avg[i] = 0.5 * (trace.mag_plus[i] + trace.mag_minus[i]);
  const double sigma = noise_estimate(avg);
  // Smooth over a quarter of the prior half-linewidth.
  const double spacing = (trace.freqs.back() - trace.freqs.front()) / static_cast<double>(n - 1);
  const auto half = static_cast<std::size_t>(
      std::clamp(std::round(0.25 * prior.gamma2() / spacing), 1.0, static_cast<double>(n / 8)));
  const auto sm = smooth(avg, half);
  const double sigma_sm = sigma / std::sqrt(static_cast<double>(2 * half + 1));
  const double min_prom = std::max(options.min_prominence_sigmas * sigma_sm, 1e-9);

  std::vector<std::size_t> dips;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (sm[i] < sm[i - 1] && sm[i] <= sm[i + 1] && prominence(sm, i) > min_prom) dips.push_back(i);
  }
  if (dips.size() < 2) return out;
  std::sort(dips.begin(), dips.end(), [&](std::size_t a, std::size_t b) { return sm[a] < sm[b]; });
  std::size_t ka = dips[0], kb = dips[1];
  // The + branch is the deeper of the two at its own dip.
  if (trace.mag_plus[kb] + trace.mag_minus[ka] < trace.mag_plus[ka] + trace.mag_minus[kb]) std::swap(ka, kb);
  out.resolvable = true;

  const auto sp = smooth(trace.mag_plus, half);
  std::size_t kp = 0;
  for (std::size_t i = 0; i < n; ++i) kp = sp[i] < sp[kp] ? i : kp;
  const double width = half_depth_width(sp, trace.freqs, kp);
  const double g2 = 0.5 * width;
  double gamma = std::max(2.0 * (g2 - prior.dephasing) - prior.nonradiative, 0.1 * g2);
  const double g1 = gamma + prior.nonradiative;
  const double g2m = 0.5 * g1 + prior.dephasing;
  const double depth = std::clamp(1.0 - sp[kp], 1e-3, 0.999);
  const double rabi2 = gamma * g1 / (2.0 * depth) - g1 * g2m;
  const double rabi = rabi2 > 0.0 ? std::sqrt(rabi2) : 0.3 * gamma;

  Problem prob{&trace, prior, 0.5 * (trace.freqs.front() + trace.freqs.back())};
  Eigen::Vector4d p((trace.freqs[ka] - prob.center) / kScale, (trace.freqs[kb] - prob.center) / kScale,
                    gamma / kScale, rabi / kScale);

  Eigen::VectorXd r, rt;
  prob.residuals(p, r);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(2 * n), 4);
  for (int it = 0; it < options.max_iterations; ++it) {
    out.iterations = it + 1;
    for (int j = 0; j < 4; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(p[j]));
      Eigen::Vector4d pp = p, pm = p;
      pp[j] += h;
      pm[j] -= h;
      Eigen::VectorXd rp, rm;
      prob.residuals(pp, rp);
      prob.residuals(pm, rm);
      jac.col(j) = (rp - rm) / (2.0 * h);
    }
    const Eigen::Matrix4d jtj = jac.transpose() * jac;
    const Eigen::Vector4d g = jac.transpose() * r;
    bool improved = false;
    double new_cost = cost;
    Eigen::Vector4d step = Eigen::Vector4d::Zero();
    for (int tries = 0; tries < 30; ++tries) {
      Eigen::Matrix4d a = jtj;
      for (int j = 0; j < 4; ++j) a(j, j) += lambda * std::max(jtj(j, j), 1e-12);
      step = a.ldlt().solve(-g);
      prob.residuals(p + step, rt);
      new_cost = rt.squaredNorm();
      if (new_cost < cost) {
        improved = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) {
      out.converged = true;  // no descent direction left at working precision
      break;
    }
    const double gain = cost - new_cost;
    p += step;
    r.swap(rt);
    cost = new_cost;
    lambda = std::max(lambda / 10.0, 1e-12);
    if (gain <= 1e-15 * std::max(cost, 1e-300) || step.norm() <= 1e-14 * (1.0 + p.norm())) {
      out.converged = true;
      break;
    }
  }
  out.omega_plus = prob.center + p[0] * kScale;
  out.omega_minus = prob.center + p[1] * kScale;
  out.coupling = std::abs(p[2]) * kScale;
  out.rabi = std::abs(p[3]) * kScale;
  out.residual_rms = std::sqrt(cost / static_cast<double>(2 * n));
  // A fit that leaves structure well above the noise floor is not trusted.
  const double noise = std::max(noise_estimate(trace.mag_plus), noise_estimate(trace.mag_minus));
  if (out.residual_rms > 2.0 * noise + 1e-9) out.converged = false;
  const double lo = trace.freqs.front(), hi = trace.freqs.back();
  if (out.omega_plus < lo || out.omega_plus > hi || out.omega_minus < lo || out.omega_minus > hi) {
    out.converged = false;
  }
  return out;
}

}  // namespace qpt
