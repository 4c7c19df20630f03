#pragma once

// Application of the nonlocal operator and its constant-coefficient
// companions: spectrally on grids, and by direct singular quadrature of the
// bond integral at points (the route that never touches Fourier space, used
// to cross-validate the symbol pipeline).
//
// The real-space quadrature splits the radial range three ways:
//   inner ball   (0, r_in]   certified second-order Taylor bound on the
//                            bond-projected integrand w^T delta_s,
//   annulus      (r_in, R]   product quadrature, graded radially, angular
//                            resolution tied to r * freq_scale, accepted by
//                            two-level agreement,
//   exterior     (R, inf)    the non-decaying moment pieces (the -u(x) term
//                            and the compensator term) computed against the
//                            kernel's certified radial log-tail, and the
//                            oscillatory u(x+y) piece bounded per probe.

#include <vector>

#include "nonlocal/grid.hpp"
#include "nonlocal/kernel.hpp"
#include "nonlocal/symbol.hpp"

namespace nonlocal {

// Closed-form vector fields with exact value, Jacobian, and symmetric
// gradient. Everything the singular quadrature certifies against (sup norms,
// second-derivative bounds, tail decay) is analytically available.
struct SmoothProbe {
  enum class Kind { trig, gaussian, affine };
  Kind kind = Kind::trig;
  int d = 2;

  // trig: u(x) = sum_t amp_cos[t] cos(2 pi kvec[t].x) + amp_sin[t] sin(...)
  std::vector<VecR> kvec;
  std::vector<VecR> amp_cos, amp_sin;

  // gaussian: u(x) = w exp(-|x - x0|^2 / (2 sigma^2))
  VecR w, x0;
  real sigma = 0.1;

  // affine: u(x) = A x + b
  MatR A;
  VecR b;

  VecR value(const VecR& x) const;
  MatR jacobian(const VecR& x) const;  // J_ij = d u_i / d x_j
  MatR sym_grad(const VecR& x) const;  // D[u] = (J + J^T)/2, symmetric exactly
  real sup_norm() const;               // sup_x |u(x)|; infinite for affine
  real hess_sup() const;   // bound on |(e.grad)^2 u| over unit directions e
  real freq_scale() const; // oscillation rate, sizes the quadrature meshes
};

SmoothProbe probe_trig(int d, std::vector<VecR> kvec,
                       std::vector<VecR> amp_cos, std::vector<VecR> amp_sin);
SmoothProbe probe_gaussian(const VecR& w, const VecR& x0, real sigma);
SmoothProbe probe_affine(const MatR& A, const VecR& b);

// u(x+y) - u(x) - D[u](x) y chi^(s)(y). Throws std::domain_error at y = 0.
VecR delta_s(const SmoothProbe& u, const VecR& x, const VecR& y, real s);

struct RealspaceConfig {
  real tol = 1e-6;      // certified remainder budget, absolute
  real rel_tol = 1e-7;  // two-level agreement target for the annulus
  int max_level = 4;    // refinement cap before convergence_error
  int base_level = 0;
};

struct RealspaceResult {
  VecR value;           // L u(x); the raw bond integral equals -L u(x)
  real certified = 0;   // inner + exterior remainder bound, absolute
  real refine_diff = 0; // agreement achieved between the last two levels
  int level = 0;        // accepted refinement level
  real r_inner = 0, r_outer = 0;
};

// Direct quadrature of L u at one point. The returned sign matches the
// spectral route (positive-semidefinite even symbol part). Affine probes
// with a nonzero symmetric part are rejected for s <= 1/2 (the bond
// integral does not converge absolutely); skew-affine probes are admissible
// at every s. Throws convergence_error carrying the bound when the
// certified remainder cannot be brought under cfg.tol.
RealspaceResult apply_realspace(const SmoothProbe& u, const VecR& x,
                                const KernelSpec& k,
                                const RealspaceConfig& cfg = {});

// Same results as calling apply_realspace point by point. Trigonometric
// probes share a single quadrature build across all points (the expensive
// part is point-independent for them), so large point sets are cheap.
std::vector<RealspaceResult> apply_realspace_many(
    const SmoothProbe& u, const std::vector<VecR>& xs, const KernelSpec& k,
    const RealspaceConfig& cfg = {});

// Evaluate the probe at the grid points (components = d of the probe).
VectorField sample_probe(const SmoothProbe& u, const GridSpec& g);

// Trigonometric interpolant of a gridded field as a probe; coefficients
// below rel_cut * peak are dropped. Cost of the real-space application is
// proportional to the number of retained modes.
SmoothProbe probe_from_field(const VectorField& f, real rel_cut = 1e-13);

// F^-1[(M(xi) + lambda I) u^(xi)]; exact linear operator on the grid.
VectorField apply_spectral(const VectorField& u, const SymbolField& table,
                           real lambda = 0.0);

// Componentwise multiplier (2 pi |xi|)^{2s}; the zero mode maps to zero.
VectorField apply_fraclap(const VectorField& u, real s);

// Multiplier (2 pi |xi|)^{2s} (ell1 I + ell2 xihat xihat^T). In one
// dimension the split is not identifiable and c.ell1 already carries the
// full trace, so the operator reduces to that scalar multiple of the
// fractional Laplacian.
VectorField apply_lame_riesz(const VectorField& u, const LameConstants& c);

struct CommutationConfig {
  bool realspace = false;  // route for L in the composition test
  real filter_k0 = 0.0;    // smoothing-filter width; 0 means all-pass
  RealspaceConfig rs{1e-4, 1e-5, 4, 0};
  QuadConfig quad;
};

struct CommutationResult {
  real fraclap = 0;      // |L (-Dl)^s u - (-Dl)^s L u| / scale, relative L2
  real convolution = 0;  // |L(u * v) - (L u) * v| / scale, relative L2
};

// Composition diagnostics. With realspace = false both routes are spectral
// and the residual is pure multiplier algebra (roundoff); with realspace =
// true the operator is applied by singular quadrature at every grid point,
// which turns the identity into a fidelity measurement of the quadrature.
// The field must be band-limited: modes above a third of the axis
// resolution are rejected (aliasing would contaminate the comparison).
CommutationResult commutation_residual(const VectorField& u,
                                       const KernelSpec& k,
                                       const CommutationConfig& cfg = {});

}  // namespace nonlocal
