#pragma once

#include <optional>
#include <vector>

#include "nonlocal/grid.hpp"
#include "nonlocal/kernel.hpp"
#include "nonlocal/quadrature.hpp"

namespace nonlocal {

// Quadrature policy for the symbol integrals. Radial transforms are reduced
// to periodic functions of ln|beta| and fitted once per kernel; angular
// integrals use graded panels around the |w.xi|^{2s} kinks with Gauss-Legendre
// 16 per panel and panel-count doubling until two levels agree.
struct QuadConfig {
  real rel_tol = 1e-8;     // two-level agreement target
  int max_doublings = 4;   // cap before convergence_error
  int base_level = 0;      // starting refinement level
  int gc_samples = 64;     // samples per period for the radial fits
  real head_a = 0.1;       // series head cutoff in t = |beta| r
  real tail_T = 40.0 * pi; // start of the integration-by-parts tail
  int ibp_pairs = 5;       // tail integration-by-parts depth (pairs)
  real grade_rel = 1e-6;   // first graded panel width / segment length
  int phi_base = 32;       // azimuthal nodes at level 0 (d = 3)
  real radial_tol = 1e-9;  // certified radial truncation budget
};

// M(xi) = Me + i Mo with Me, Mo real symmetric. Me is the Hermitian part
// (positive semidefinite); the full matrix is complex symmetric. With the
// forward transform e^{-2 pi i x.xi}, M is the multiplier sending u-hat to
// (L u)-hat: M = int (yhat yhat^T)(1 - e^{2 pi i xi.y} + 2 pi i xi.y chi) K,
// i.e. Me integrates (1 - cos) against K even and Mo integrates
// (2 pi xi.y chi - sin) against K odd.
struct SymbolMatrix {
  VecR xi;
  MatR me;
  MatR mo;
  MatC full() const {
    return me.cast<cplx>() + cplx(0.0, 1.0) * mo.cast<cplx>();
  }
};

struct LameConstants {
  int d = 0;
  real s = 0;
  real ell1 = 0;
  std::optional<real> ell2;  // identifiable only for d >= 2
  real total() const { return ell2 ? ell1 + *ell2 : ell1; }
};

struct CoercivityResult {
  real C = 0;
  VecR argmin_nu;
  VecR argmin_mu;
  real min_quotient = 0;  // min over angles of mu^T Me mu / (2 pi)^{2s}
  real min_psi_raw = 0;   // the un-normalized angular minimum
  int scan_points = 0;
};

struct SymbolField {
  GridSpec grid;
  real s = 0;
  std::vector<MatC> table;  // indexed by flat lattice index
  const MatC& at(long flat) const { return table[flat]; }
};

// Constant-profile constants, read off the general symbol at xi = e1 and
// cached per (d, s). ell2 is reported undefined in one dimension.
LameConstants derive_lame_constants(int d, real s, const QuadConfig& q = {});

// alpha (2 pi |xi|)^{2s} (ell1 I + ell2 xihat xihat^T); zero matrix at xi = 0
MatR symbol_lame(const VecR& xi, const LameConstants& c, real alpha = 1.0);

SymbolMatrix symbol_general(const VecR& xi, const KernelSpec& k,
                            const QuadConfig& q = {});
MatR symbol_even_part(const VecR& xi, const KernelSpec& k,
                      const QuadConfig& q = {});

// scalar companion operator: int (1 - cos(2 pi y.xi)) K^e(y) dy
real scalar_symbol(const VecR& xi, const KernelSpec& k,
                   const QuadConfig& q = {});

// C = alpha1 * min over unit (nu, mu) of mu^T Me_unit(nu) mu / (2 pi)^{2s};
// by rotational symmetry the minimization is a 1-d scan over the angle
// between nu and mu. C satisfies lambda_min(M^e(xi)) >= C (2 pi |xi|)^{2s}.
CoercivityResult coercivity_constant(int d, real s, real alpha1,
                                     const QuadConfig& q = {});

// B with ||M(xi)||_2 <= B (2 pi |xi|)^{2s}:
//   B = alpha2 (ell1 + ell2)                      [even part]
//     + (1-s) max|a^o| m_max sigma(S^{d-1}) Jbar  [odd part, s != 1/2]
// Jbar = int |sin t| t^{-1-2s} (s < 1/2, certified partial + tail majorant)
//      = I0(s - 1/2) / (2s)   (s > 1/2, since |sin t - t| = t - sin t)
// Refused for odd profiles at exactly s = 1/2 (no scale-uniform bound).
real upper_bound_constant(const KernelSpec& k, const QuadConfig& q = {});

SymbolField tabulate_symbol(const GridSpec& grid, const KernelSpec& k,
                            const QuadConfig& q = {});

}  // namespace nonlocal
