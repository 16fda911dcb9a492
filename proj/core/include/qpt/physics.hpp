#pragma once

// Closed-form scattering and charge-dispersion relations for a charge-sensitive
// transmon coupled to an open waveguide. Frequencies and rates are angular
// (rad/s) unless a field says Hz.

#include <complex>
#include <numbers>

namespace qpt {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Static parameters of one parity detector.
struct DetectorSpec {
  double mean_freq = 0.0;      ///< average transition frequency, rad/s
  double splitting_amp = 0.0;  ///< maximum parity splitting A, Hz
  double coupling = 0.0;       ///< waveguide coupling rate, rad/s
  double nonradiative = 0.0;   ///< extra decay channels, rad/s
  double dephasing = 0.0;      ///< pure dephasing rate, rad/s

  double gamma1() const { return coupling + nonradiative; }
  double gamma2() const { return 0.5 * gamma1() + dephasing; }

  /// Throws std::invalid_argument when a field is non-finite or out of range.
  void validate() const;
};

struct DriveSpec {
  double rabi = 0.0;        ///< Rabi frequency, rad/s
  double drive_freq = 0.0;  ///< drive tone, rad/s

  void validate() const;
};

enum class Parity : int { kEven = +1, kOdd = -1 };

inline Parity flipped(Parity p) { return p == Parity::kEven ? Parity::kOdd : Parity::kEven; }

// Lossless two-level transmission in the quoted main-text convention:
// t = 2(iΓΔ + 2Δ² + Ω²) / (Γ² + 4Δ² + 2Ω²). Detuning is drive minus qubit.
std::complex<double> transmission_simple(double detuning, double coupling, double rabi);

// Steady-state transmission including non-radiative decay and dephasing.
// This is the canonical complex convention; with nonradiative = dephasing = 0
// it is the complex conjugate of transmission_simple.
std::complex<double> transmission_full(double detuning, const DetectorSpec& spec, double rabi);

/// Parity splitting A|cos(2π n_g)| in Hz.
double parity_splitting(double offset_charge, double amp);

struct OffsetChargeEstimate {
  double ng = 0.0;       ///< effective offset charge in [0, 0.25]
  bool clamped = false;  ///< splitting exceeded amp and was clamped
};

OffsetChargeEstimate invert_offset_charge(double splitting, double amp);

/// Maps any offset charge onto the effective coordinate in [0, 0.25].
double fold_offset_charge(double offset_charge);

struct ParityFrequencies {
  double plus = 0.0;   ///< rad/s
  double minus = 0.0;  ///< rad/s

  double of(Parity p) const { return p == Parity::kEven ? plus : minus; }
};

// ω± = ω̄ ± πA·cos(2π n_g). The sign of the cosine is kept, so the branches
// exchange order across n_g = 0.25.
ParityFrequencies parity_frequencies(double offset_charge, const DetectorSpec& spec);

}  // namespace qpt
