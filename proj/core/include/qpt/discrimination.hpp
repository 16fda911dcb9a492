#pragma once

// Parity discrimination: two demodulated complex streams -> one real
// discriminator -> two-component Gaussian mixture -> thresholded parity record.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "qpt/simulator.hpp"

namespace qpt {

struct RotationResult {
  std::vector<double> rotated;
  double angle = 0.0;       ///< radians; the principal axis is mapped onto +real
  bool degenerate = false;  ///< eigenvalue ratio below 1.05 (no dominant axis)
};

/// Rotates the IQ cloud so its first principal axis lies on the real axis.
RotationResult rotate_to_real(std::span<const std::complex<double>> samples);

struct CombinedStreams {
  std::vector<double> x;
  bool sign_flip = false;  ///< s_minus was reflected about its mean before averaging
};

/// x = (s_plus + s_minus') / 2, where s_minus' is s_minus reflected about its
/// mean whenever the two streams are anticorrelated.
CombinedStreams combine_streams(std::span<const double> s_plus, std::span<const double> s_minus);

struct Gmm1D {
  double w0 = 0.5, w1 = 0.5;
  double mu0 = 0.0, mu1 = 0.0;
  double sigma0 = 1.0, sigma1 = 1.0;
  double log_likelihood = 0.0;  ///< total over the fitted samples
  int iterations = 0;
  bool converged = false;
};

struct GmmOptions {
  std::size_t min_samples = 100;
  int max_iterations = 500;
  double tolerance = 1e-8;  ///< log-likelihood gain per sample
  // Above this sample count EM runs on a fixed-width histogram of the data.
  // With the default bin count the bin width is far below any fitted sigma.
  std::size_t histogram_threshold = 65536;
  std::size_t histogram_bins = 16384;
};

/// EM fit with restarts from the (25,75), (10,90) and (40,60) percentile pairs;
/// the restart with the highest likelihood wins. Components come back ordered
/// mu0 <= mu1. Throws std::invalid_argument below min_samples.
Gmm1D fit_gmm(std::span<const double> x, const GmmOptions& options = {});

/// Mixture log-likelihood of x under g (used by the brute-force oracle tests).
double gmm_log_likelihood(const Gmm1D& g, std::span<const double> x);

struct OverlapResult {
  double overlap = 0.0;
  double fidelity = 1.0;
};

/// Integral of min(N0, N1) over the real line. Weights are left out unless
/// `weighted` is set, in which case the integrand is min(w0 N0, w1 N1).
OverlapResult overlap_fidelity(const Gmm1D& gmm, bool weighted = false);

struct DiscriminationResult {
  double rotation_plus = 0.0;
  double rotation_minus = 0.0;
  bool sign_flip = false;
  bool degenerate = false;
  Gmm1D gmm;
  double overlap = 1.0;
  double fidelity = 0.0;
  double threshold = 0.0;
};

struct EventRecord {
  int detector_id = 1;
  std::size_t trace_index = 0;
  double trace_t0 = 0.0;
  double bin_width = 100e-6;
  std::vector<double> event_times;
  std::vector<unsigned char> binary_record;
  DiscriminationResult discrimination;
  bool retained = false;

  double duration() const { return static_cast<double>(binary_record.size()) * bin_width; }
};

/// P(k) = x[k] >= threshold; an event at t0 + k*bin_width wherever P(k) != P(k-1).
EventRecord threshold_events(std::span<const double> x, const DiscriminationResult& disc,
                             double bin_width, double t0);

/// Marks each record retained iff its fidelity is strictly above min_fidelity.
/// Returns the number retained.
std::size_t postselect(std::span<EventRecord> records, double min_fidelity = 0.999);

struct DiscriminationOptions {
  GmmOptions gmm;
  bool weighted_overlap = false;
};

struct TraceDiscrimination {
  DiscriminationResult result;
  std::vector<double> x;
};

/// Full per-trace chain: rotate both tones, combine, fit, overlap, threshold.
TraceDiscrimination discriminate(const IQTrace& trace, const DiscriminationOptions& options = {});

/// discriminate() followed by threshold_events().
EventRecord extract_events(const IQTrace& trace, const DiscriminationOptions& options = {});

/// Rebuilds the binary record from its first state and the event times.
std::vector<unsigned char> reconstruct_record(const EventRecord& record);

}  // namespace qpt
