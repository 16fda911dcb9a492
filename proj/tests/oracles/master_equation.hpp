#pragma once

// Independent steady state of the driven, damped two-level system: build the
// 4x4 Liouvillian numerically and solve L vec(ρ) = 0 with Tr ρ = 1.
// Basis |g> = 0, |e> = 1; vec stacks columns, vec(AρB) = (Bᵀ ⊗ A) vec(ρ).

#include <complex>

#include <Eigen/Dense>

#include "qpt/physics.hpp"

namespace qpt::oracle {

using C = std::complex<double>;
using M2 = Eigen::Matrix2cd;
using M4 = Eigen::Matrix4cd;

inline M4 kron(const M2& a, const M2& b) {
  M4 k;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) k.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return k;
}

// vec(AρB)
inline M4 sandwich(const M2& a, const M2& b) { return kron(b.transpose(), a); }

inline M4 dissipator(const M2& l) {
  const M2 id = M2::Identity();
  const M2 ldl = l.adjoint() * l;
  return sandwich(l, l.adjoint()) - 0.5 * sandwich(ldl, id) - 0.5 * sandwich(id, ldl);
}

/// Steady-state density matrix. `detuning_sign` multiplies the Δ|e><e| term:
/// -1 is the convention of the library, +1 the conjugate one.
inline M2 steady_state(double detuning, const DetectorSpec& spec, double rabi, double detuning_sign = -1.0) {
  const M2 id = M2::Identity();
  M2 sm = M2::Zero();
  sm(0, 1) = 1.0;  // |g><e|
  M2 sz = M2::Zero();
  sz(1, 1) = 1.0;
  sz(0, 0) = -1.0;
  M2 ee = M2::Zero();
  ee(1, 1) = 1.0;
  const M2 h = detuning_sign * detuning * ee + 0.5 * rabi * (sm + sm.adjoint());

  const C i(0.0, 1.0);
  M4 L = -i * (sandwich(h, id) - sandwich(id, h));
  L += dissipator(std::sqrt(spec.gamma1()) * sm);
  L += dissipator(std::sqrt(0.5 * spec.dephasing) * sz);

  // Replace the first row by the trace condition ρgg + ρee = 1.
  Eigen::Vector4cd rhs = Eigen::Vector4cd::Zero();
  L.row(0).setZero();
  L(0, 0) = 1.0;
  L(0, 3) = 1.0;
  rhs(0) = 1.0;
  const Eigen::Vector4cd v = L.fullPivLu().solve(rhs);
  M2 rho;
  rho << v(0), v(2), v(1), v(3);
  return rho;
}

/// t = 1 - i(Γ/Ω)<σ->, <σ-> = Tr(σ- ρ) = ρ_eg.
inline C transmission(double detuning, const DetectorSpec& spec, double rabi, double detuning_sign = -1.0) {
  const M2 rho = steady_state(detuning, spec, rabi, detuning_sign);
  return 1.0 - C(0.0, 1.0) * (spec.coupling / rabi) * rho(1, 0);
}

}  // namespace qpt::oracle
