#pragma once

// Joint least-squares fit of |t(ω - ω±)| to the two branch sweeps of one
// spectroscopy calibration.

#include "qpt/physics.hpp"
#include "qpt/simulator.hpp"

namespace qpt {

struct SpectroFit {
  double omega_plus = 0.0;   ///< rad/s
  double omega_minus = 0.0;  ///< rad/s
  double coupling = 0.0;     ///< Γ, rad/s
  double rabi = 0.0;         ///< Ω, rad/s
  double residual_rms = 0.0;
  bool resolvable = false;  ///< false: fewer than two dips, no fit attempted
  bool converged = false;  ///< also false when the residual sits well above the noise
  int iterations = 0;

  bool usable() const { return resolvable && converged; }

  double splitting_hz() const;
};

struct SpectroFitOptions {
  int max_iterations = 200;
  double min_prominence_sigmas = 5.0;  ///< dip prominence in units of the noise estimate
};

/// Fits ω+, ω-, Γ and Ω with Γnr and γφ held at the prior's values. Dips are
/// located on the branch-averaged profile; fewer than two clear local minima
/// marks the sweep unresolvable.
SpectroFit spectro_fit(const SpectroscopyTrace& trace, const DetectorSpec& prior,
                       const SpectroFitOptions& options = {});

}  // namespace qpt
