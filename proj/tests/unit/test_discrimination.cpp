#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "qpt/discrimination.hpp"
#include "qpt/rng.hpp"
#include "qpt/simulator.hpp"

using namespace qpt;

namespace {

std::vector<double> mixture(std::size_t n, double w0, double mu0, double s0, double mu1, double s1,
                            std::uint64_t seed) {
  Rng r(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = r.uniform() < w0 ? mu0 + s0 * r.normal() : mu1 + s1 * r.normal();
  return x;
}

double direct_log_likelihood(const Gmm1D& g, const std::vector<double>& x) {
  const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  double ll = 0.0;
  for (double v : x) {
    const double z0 = (v - g.mu0) / g.sigma0, z1 = (v - g.mu1) / g.sigma1;
    ll += std::log(g.w0 * c / g.sigma0 * std::exp(-0.5 * z0 * z0) + g.w1 * c / g.sigma1 * std::exp(-0.5 * z1 * z1));
  }
  return ll;
}

SimConfig short_trace_config(double seconds) {
  SimConfig c = reference_sim_config();
  c.burst_event_rate = 0.0;
  c.shared_jump_rate = 0.0;
  for (auto& d : c.detectors) d.charge_jump_rate = 0.0;
  c.trace_length = seconds;
  c.duration = seconds;
  return c;
}

}  // namespace

TEST(RotateToReal, ImaginaryAxisCloud) {
  std::vector<std::complex<double>> z;
  Rng r(1);
  for (int i = 0; i < 2000; ++i) z.emplace_back(0.01 * r.normal(), (i % 2 ? 1.0 : -1.0) + 0.01 * r.normal());
  const auto rot = rotate_to_real(z);
  EXPECT_NEAR(std::abs(rot.angle), std::numbers::pi / 2, 1e-3);
  EXPECT_FALSE(rot.degenerate);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(std::abs(rot.rotated[i]), 1.0, 0.05);
}

TEST(RotateToReal, IsotropicCloudIsDegenerate) {
  std::vector<std::complex<double>> z;
  Rng r(2);
  for (int i = 0; i < 200000; ++i) z.emplace_back(r.normal(), r.normal());
  EXPECT_TRUE(rotate_to_real(z).degenerate);
}

TEST(RotateToReal, SimulatedTraceAxisFollowsCentroids) {
  SimConfig c = short_trace_config(5.0);
  c.detectors[0].initial_ng = 0.05;
  const Simulator sim(c);
  const IQTrace t = sim.render_trace(1, 0);
  std::complex<double> m[2]{};
  std::size_t n[2]{};
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double tk = t.t0 + static_cast<double>(k + 1) * t.bin_width;
    const int s = sim.truth().parity_at(1, tk) == Parity::kEven ? 0 : 1;
    m[s] += t.samples_plus[k];
    ++n[s];
  }
  ASSERT_GT(n[0], 100u);
  ASSERT_GT(n[1], 100u);
  const std::complex<double> diff = m[1] / double(n[1]) - m[0] / double(n[0]);
  const double truth_angle = std::arg(diff);
  const double got = rotate_to_real(t.samples_plus).angle;
  // Axes are undirected: compare modulo π.
  double delta = std::remainder(got - truth_angle, std::numbers::pi);
  EXPECT_LT(std::abs(delta), std::numbers::pi / 180.0);
}

TEST(CombineStreams, IdenticalConstants) {
  const std::vector<double> a(50, 0.3);
  const auto x = combine_streams(a, a);
  for (double v : x.x) EXPECT_DOUBLE_EQ(v, 0.3);
}

TEST(CombineStreams, AnticorrelatedGainsRootTwo) {
  Rng r(5);
  constexpr std::size_t n = 200000;
  std::vector<double> p(n), m(n);
  std::vector<int> s(n);
  const double sigma = 0.2;
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = (i / 100) % 2;
    p[i] = s[i] + sigma * r.normal();
    m[i] = -s[i] + sigma * r.normal();
  }
  const auto c = combine_streams(p, m);
  EXPECT_TRUE(c.sign_flip);
  double m0 = 0, m1 = 0, v0 = 0;
  std::size_t n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < n; ++i) (s[i] ? m1 : m0) += c.x[i], ++(s[i] ? n1 : n0);
  m0 /= n0;
  m1 /= n1;
  for (std::size_t i = 0; i < n; ++i)
    if (!s[i]) v0 += (c.x[i] - m0) * (c.x[i] - m0);
  const double snr = (m1 - m0) / std::sqrt(v0 / n0);
  EXPECT_NEAR(snr / (1.0 / sigma), std::sqrt(2.0), 0.02);
}

TEST(CombineStreams, CombinedFidelityBeatsSingleTone) {
  SimConfig c = short_trace_config(10.0);
  for (auto& d : c.detectors) {
    d.noise_sigma = 0.05;
    d.initial_ng = 0.08;
  }
  const Simulator sim(c);
  const IQTrace t = sim.render_trace(2, 0);
  const auto td = discriminate(t);
  const auto single = rotate_to_real(t.samples_plus);
  const double f_single = overlap_fidelity(fit_gmm(single.rotated)).fidelity;
  EXPECT_GE(td.result.fidelity, f_single);
}

TEST(FitGmm, TwoDeltaClusters) {
  std::vector<double> x(200, 0.0);
  for (std::size_t i = 100; i < 200; ++i) x[i] = 1.0;
  const auto g = fit_gmm(x);
  EXPECT_NEAR(g.w0, 0.5, 1e-6);
  EXPECT_NEAR(g.mu0, 0.0, 1e-6);
  EXPECT_NEAR(g.mu1, 1.0, 1e-6);
}

TEST(FitGmm, SingleGaussianIsIndistinguishable) {
  const auto x = mixture(20000, 1.0, 0.0, 1.0, 0.0, 1.0, 11);
  const auto g = fit_gmm(x);
  const auto ov = overlap_fidelity(g);
  EXPECT_GT(ov.overlap, 0.3);
  EXPECT_LT(ov.fidelity, 0.7);
}

TEST(FitGmm, RecoversGeneratingParameters) {
  const auto x = mixture(100000, 0.45, 0.0, 0.1, 1.0, 0.12, 17);
  const auto g = fit_gmm(x);
  EXPECT_NEAR(g.w0, 0.45, 0.02 * 0.45);
  EXPECT_NEAR(g.w1, 0.55, 0.02 * 0.55);
  EXPECT_NEAR(g.mu0, 0.0, 0.02 * 0.1);
  EXPECT_NEAR(g.mu1, 1.0, 0.02);
  EXPECT_NEAR(g.sigma0, 0.1, 0.02 * 0.1);
  EXPECT_NEAR(g.sigma1, 0.12, 0.02 * 0.12);
  EXPECT_TRUE(g.converged);
}

TEST(FitGmm, LikelihoodMatchesDirectSumAndIsLocalMaximum) {
  const auto x = mixture(5000, 0.3, -0.2, 0.15, 0.4, 0.1, 23);
  const auto g = fit_gmm(x);
  const double ll = direct_log_likelihood(g, x);
  EXPECT_NEAR(gmm_log_likelihood(g, x), ll, 1e-8 * std::abs(ll));
  EXPECT_NEAR(g.log_likelihood, ll, 1e-6 * std::abs(ll));
  for (int p = 0; p < 5; ++p) {
    for (double h : {-1e-3, 1e-3}) {
      Gmm1D q = g;
      double* field[] = {&q.w0, &q.mu0, &q.mu1, &q.sigma0, &q.sigma1};
      *field[p] += h;
      if (p == 0) q.w1 = 1.0 - q.w0;
      EXPECT_LT(direct_log_likelihood(q, x), ll) << "parameter " << p << " step " << h;
    }
  }
}

TEST(FitGmm, TooFewSamples) {
  const std::vector<double> x(10, 1.0);
  EXPECT_THROW(fit_gmm(x), std::invalid_argument);
}

TEST(OverlapFidelity, IdenticalComponents) {
  Gmm1D g;
  g.mu0 = g.mu1 = 0.3;
  g.sigma0 = g.sigma1 = 0.2;
  const auto ov = overlap_fidelity(g);
  EXPECT_NEAR(ov.overlap, 1.0, 1e-10);
  EXPECT_NEAR(ov.fidelity, 0.0, 1e-10);
}

TEST(OverlapFidelity, EqualVarianceClosedForm) {
  for (double d : {0.01, 0.1, 0.3, 1.0, 2.0}) {
    for (double s : {0.02, 0.1, 0.25, 1.0}) {
      Gmm1D g;
      g.mu0 = 0.7;
      g.mu1 = 0.7 + d;
      g.sigma0 = g.sigma1 = s;
      EXPECT_NEAR(overlap_fidelity(g).overlap, std::erfc(d / (2.0 * std::sqrt(2.0) * s)), 1e-8) << d << " " << s;
    }
  }
  Gmm1D g;
  g.mu1 = 1.0;
  g.sigma0 = g.sigma1 = 0.1;
  EXPECT_NEAR(overlap_fidelity(g).overlap, 5.733e-7, 1e-9);
}

TEST(OverlapFidelity, UnequalVarianceAgainstQuadrature) {
  Gmm1D g;
  g.mu0 = 0.0;
  g.mu1 = 0.5;
  g.sigma0 = 0.1;
  g.sigma1 = 0.3;
  g.w0 = 0.3;
  g.w1 = 0.7;
  for (bool weighted : {false, true}) {
    const double a0 = weighted ? g.w0 : 1.0, a1 = weighted ? g.w1 : 1.0;
    // Midpoint rule on a fine grid.
    const double lo = -4.0, hi = 4.0;
    const int n = 800000;
    const double h = (hi - lo) / n, c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = lo + (i + 0.5) * h;
      const double z0 = (x - g.mu0) / g.sigma0, z1 = (x - g.mu1) / g.sigma1;
      sum += std::min(a0 * c / g.sigma0 * std::exp(-0.5 * z0 * z0), a1 * c / g.sigma1 * std::exp(-0.5 * z1 * z1));
    }
    EXPECT_NEAR(overlap_fidelity(g, weighted).overlap, sum * h, 1e-8);
  }
}

TEST(ThresholdEvents, TransitionTimes) {
  const std::vector<double> x{0, 0, 1, 1, 0};
  DiscriminationResult d;
  d.threshold = 0.5;
  const auto r = threshold_events(x, d, 100e-6, 0.0);
  ASSERT_EQ(r.event_times.size(), 2u);
  EXPECT_NEAR(r.event_times[0], 200e-6, 1e-15);
  EXPECT_NEAR(r.event_times[1], 400e-6, 1e-15);
  EXPECT_EQ(reconstruct_record(r), r.binary_record);
}

TEST(ThresholdEvents, ConstantInputHasNoEvents) {
  const std::vector<double> x(100, 0.7);
  DiscriminationResult d;
  d.threshold = 0.5;
  EXPECT_TRUE(threshold_events(x, d, 100e-6, 3.0).event_times.empty());
}

TEST(Postselect, FidelityGate) {
  std::vector<EventRecord> r(4);
  for (auto& e : r) e.discrimination.fidelity = 1.0;
  EXPECT_EQ(postselect(r), 4u);
  for (auto& e : r) e.discrimination.fidelity = 0.99;
  EXPECT_EQ(postselect(r), 0u);
  r[2].discrimination.fidelity = 0.9991;
  r[3].discrimination.fidelity = 0.999;
  EXPECT_EQ(postselect(r), 1u);
  EXPECT_TRUE(r[2].retained);
  EXPECT_FALSE(r[3].retained);
}

TEST(ExtractEvents, CountMatchesTruthOnQuietTrace) {
  SimConfig c = short_trace_config(60.0);
  const Simulator sim(c);
  const IQTrace t = sim.render_trace(1, 0);
  const EventRecord r = extract_events(t);
  EXPECT_GT(r.discrimination.fidelity, 0.999);
  const double truth = static_cast<double>(sim.truth().flips_between(1, t.t0, t.t0 + t.duration()));
  EXPECT_NEAR(static_cast<double>(r.event_times.size()), truth, 3.0 * std::sqrt(truth));
  EXPECT_EQ(reconstruct_record(r), r.binary_record);
}
