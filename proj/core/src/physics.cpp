#include "qpt/physics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qpt {
namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument(std::string(what) + " must be finite");
  }
}

}  // namespace

void DetectorSpec::validate() const {
  require_finite(mean_freq, "mean_freq");
  require_finite(splitting_amp, "splitting_amp");
  require_finite(coupling, "coupling");
  require_finite(nonradiative, "nonradiative");
  require_finite(dephasing, "dephasing");
  if (coupling <= 0.0) throw std::invalid_argument("coupling must be > 0");
  if (nonradiative < 0.0) throw std::invalid_argument("nonradiative must be >= 0");
  if (dephasing < 0.0) throw std::invalid_argument("dephasing must be >= 0");
  if (splitting_amp <= 0.0) throw std::invalid_argument("splitting_amp must be > 0");
}

void DriveSpec::validate() const {
  require_finite(rabi, "rabi");
  require_finite(drive_freq, "drive_freq");
  if (rabi < 0.0) throw std::invalid_argument("rabi must be >= 0");
}

std::complex<double> transmission_simple(double detuning, double coupling, double rabi) {
  require_finite(detuning, "detuning");
  require_finite(coupling, "coupling");
  require_finite(rabi, "rabi");
  if (coupling <= 0.0) throw std::invalid_argument("coupling must be > 0");
  if (std::isinf(detuning * detuning)) return {1.0, 0.0};
  const double d2 = detuning * detuning;
  const double w2 = rabi * rabi;
  const double den = coupling * coupling + 4.0 * d2 + 2.0 * w2;
  return {2.0 * (2.0 * d2 + w2) / den, 2.0 * coupling * detuning / den};
}

std::complex<double> transmission_full(double detuning, const DetectorSpec& spec, double rabi) {
  require_finite(detuning, "detuning");
  require_finite(rabi, "rabi");
  spec.validate();
  const double g = spec.coupling;
  const double g1 = spec.gamma1();
  const double g2 = spec.gamma2();
  if (std::isinf(detuning * detuning)) return {1.0, 0.0};
  // 1 - iΓΓ1(Δ - iΓ2) / D  =  1 - ΓΓ1(Γ2 + iΔ) / D
  const double den = 2.0 * rabi * rabi * g2 + 2.0 * g1 * (detuning * detuning + g2 * g2);
  const double k = g * g1 / den;
  return {1.0 - k * g2, -k * detuning};
}

double parity_splitting(double offset_charge, double amp) {
  if (!(amp > 0.0)) throw std::invalid_argument("amp must be > 0");
  return amp * std::abs(std::cos(kTwoPi * offset_charge));
}

OffsetChargeEstimate invert_offset_charge(double splitting, double amp) {
  if (!(amp > 0.0)) throw std::invalid_argument("amp must be > 0");
  if (!std::isfinite(splitting) || splitting < 0.0) {
    throw std::invalid_argument("splitting must be finite and >= 0");
  }
  const double ratio = splitting / amp;
  OffsetChargeEstimate out;
  out.clamped = ratio > 1.0;
  out.ng = std::acos(std::clamp(ratio, 0.0, 1.0)) / kTwoPi;
  return out;
}

double fold_offset_charge(double offset_charge) {
  return std::acos(std::min(1.0, std::abs(std::cos(kTwoPi * offset_charge)))) / kTwoPi;
}

ParityFrequencies parity_frequencies(double offset_charge, const DetectorSpec& spec) {
  spec.validate();
  const double half = std::numbers::pi * spec.splitting_amp * std::cos(kTwoPi * offset_charge);
  return {spec.mean_freq + half, spec.mean_freq - half};
}

}  // namespace qpt
