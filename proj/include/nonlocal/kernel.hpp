#pragma once

// Kernel families K(y) = (1-s) * a(y/|y|) * m(|y|) * |y|^{-(d+2s)} with
// two-sided comparability bounds, the truncation switch chi^(s), the
// first-angular-moment cancellation check, and the continuation family K_tau.
//
// The angular profile a and radial modulation m are restricted to separable,
// explicitly parameterized variants so that admission checks and the symbol
// quadrature stay certifiable.

#include <cstdint>
#include <vector>

#include "nonlocal/common.hpp"
#include "nonlocal/quadrature.hpp"

namespace nonlocal {

// 0 for s < 1/2, indicator of the unit ball at s = 1/2, 1 for s > 1/2.
int chi_s(real s, const VecR& y);

struct ProfileSpec {
  enum class Kind { constant, harmonic2d, zonal, cone };
  Kind kind = Kind::constant;

  // constant
  real value = 1.0;

  // harmonic2d: a(theta) = c0 + sum_k ck[k-1] cos(k(theta-rot)) + sk[k-1] sin(k(theta-rot))
  real c0 = 0.0;
  std::vector<real> ck, sk;
  real rot = 0.0;

  // zonal (d=1 or d=3): polynomial in t = omega . axis
  std::vector<real> zc;

  // cone: floor + height on { omega . axis >= cos_half } (and the mirror cone
  // when double_sided)
  real floor = 1.0, height = 0.0, cos_half = 0.5;
  bool double_sided = true;

  VecR axis;  // zonal + cone
};

struct RadialSpec {
  enum class Kind { constant, logosc };
  Kind kind = Kind::constant;
  // logosc: m(r) = exp(eps * (1 + sin(omega0 * ln r))), range [1, e^{2 eps}]
  real eps = 0.0;
  real omega0 = 1.0;
};

struct KernelSpec {
  int d = 2;
  real s = 0.5;
  real alpha1 = 1.0, alpha2 = 1.0;
  ProfileSpec profile;
  RadialSpec radial;

  // derived at admission
  TrigPoly mu;          // surrogate of u -> m(e^u); exact constant when m == 1
  real mu_fit_err = 0;  // measured sup deviation of the surrogate
  real m_min = 1.0, m_max = 1.0;
  bool even_profile = true;
  real max_abs_even = 1.0;  // sup |a_even| over the sphere
  real max_abs_odd = 0.0;   // sup |a_odd|
  real profile_min = 1.0, profile_max = 1.0;

  real profile_raw(const VecR& omega) const;  // before clipping
  real profile_at(const VecR& omega) const;   // clipped to [alpha1, alpha2]
  real profile_even(const VecR& omega) const;
  real profile_odd(const VecR& omega) const;
  real radial_at(real r) const;  // m(r)
  real eval(const VecR& y) const;
};

// Validates order/bounds, samples the profile against [alpha1, alpha2],
// verifies the two-sided comparability of the full product, builds the
// radial surrogate, and enforces the s = 1/2 cancellation gate.
KernelSpec make_kernel(int d, real s, real alpha1, real alpha2,
                       const ProfileSpec& profile, const RadialSpec& radial);

// max over radii of |int_{dB_r} y K dS| / int_{dB_r} K dS; zero (to
// quadrature roundoff) for even profiles. level controls the sphere rule.
real check_cancellation(const KernelSpec& spec, const std::vector<real>& radii,
                        int level = 0);

// K_tau(y) = alpha1 (1-tau) |y|^{-(d+2s)} + tau K(y), as printed; note the
// base term carries no (1-s) factor, so in (1-s)-normalized units the family
// spans the widened band [alpha1, max(alpha2, alpha1/(1-s))].
struct HomotopyKernel {
  real tau = 0.0;
  KernelSpec base;
  real eval(const VecR& y) const;
  real band_lo() const { return base.alpha1; }
  real band_hi() const;
};

HomotopyKernel homotopy_kernel(const KernelSpec& base, real tau);

// Uniform sphere rule used by admission and the cancellation diagnostic:
// node set symmetric under omega -> -omega so odd integrands cancel exactly.
struct SphereRule {
  std::vector<VecR> nodes;
  std::vector<real> weights;  // sum = surface measure of S^{d-1}
};
SphereRule sphere_rule(int d, int level = 0);

real sphere_area(int d);  // |S^{d-1}|: 2, 2*pi, 4*pi

// Built-in kernels used across the test batteries. Band edges are attained
// exactly by construction.
KernelSpec kernel_fractional(int d, real s);             // (1,1) constant
KernelSpec kernel_band2(int d, real s);                  // (1,2) smooth even
KernelSpec kernel_band4(int d, real s);                  // (1,4) even + logosc
KernelSpec kernel_cone(int d, real s);                   // (1,2) double cone
KernelSpec kernel_odd_harmonic(int d, real s);           // odd part, gate-passing
std::vector<KernelSpec> builtin_kernels(int d, real s);  // the admissible set

}  // namespace nonlocal
