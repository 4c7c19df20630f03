#pragma once

// Solvers for the shifted elliptic system (L + lambda) u = f on the
// periodic grid, lambda > 0.
//   solve_direct    exact per-mode inversion of the tabulated matrix symbol
//   solve_homotopy  continuation along the kernel family
//                   K_tau = (1-tau) alpha1 |y|^{-(d+2s)} + tau K, each stage
//                   solved by damped Richardson iteration preconditioned
//                   with the closed-form inverse of the tau = 0 operator
//   estimate_ratio_elliptic  empirical constant in the a priori bound
//                   ||(-Delta)^s u||_p + lambda ||u||_p <= N ||f||_p

#include <string>
#include <vector>

#include "nonlocal/grid.hpp"
#include "nonlocal/kernel.hpp"
#include "nonlocal/norms.hpp"
#include "nonlocal/symbol.hpp"

namespace nonlocal {

// u^(xi) = (M(xi) + lambda I)^{-1} f^(xi) mode by mode via a d x d SVD
// solve. Rejects lambda <= 0, grid/table mismatch, fields that are not
// d-vector valued, and any mode whose shifted symbol has 2-norm condition
// above 1e12 (reported by flat index).
VectorField solve_direct(const VectorField& f, const SymbolField& table,
                         real lambda);

struct ContinuationStage {
  real tau = 0.0;
  real omega = 1.0;     // relaxation factor used at this stage
  int iterations = 0;   // Richardson updates performed
  real residual = 0.0;  // relative l2 residual on stage exit
};

struct ContinuationTrace {
  std::vector<ContinuationStage> stages;
  int total_iterations() const;
  std::string to_string() const;
};

struct HomotopyResult {
  VectorField u;
  ContinuationTrace trace;
};

struct HomotopyConfig {
  int max_iter = 400;  // Richardson cap per continuation stage
  real omega = 0.0;    // fixed relaxation factor; 0 selects it per stage
                       // from the kernel band (midpoint-optimal for the
                       // real part of the per-mode generalized spectrum)
  QuadConfig quad;     // accuracy of the symbol tabulation
};

// Marches Upsilon_tau = L_{K_tau} + lambda over tau = j/tau_steps,
// j = 1..tau_steps, running at each stage the preconditioned iteration
//   u <- u + omega Upsilon_0^{-1} (f - Upsilon_tau u),
// warm-started from the previous stage. The initial guess is the exact
// tau = 0 solution: the floor symbol is alpha1/(1-s) times the
// constant-coefficient Lame multiplier, so Upsilon_0^{-1} is a closed-form
// per-mode inverse. A stage is converged once the relative l2 residual
// reaches tol; at tau = 1 the converged answer solves the target system, so
// it matches solve_direct on the same table to iteration accuracy.
// Residual growth over five consecutive updates, or exhausting max_iter,
// raises convergence_error carrying the trace collected so far.
HomotopyResult solve_homotopy(const VectorField& f, const KernelSpec& base,
                              real lambda, int tau_steps, real tol,
                              const HomotopyConfig& cfg = {});

// Ratios (||(-Delta)^s u||_p + lambda ||u||_p) / ||f||_p over a random
// band-limited ensemble with u = solve_direct(f); one ratio_samples entry
// per sample. aux_ratio_max tracks the lambda ||u||_p / ||f||_p summand
// alone. For p = 2 the per-sample bound lambda ||u||_2 <= ||f||_2 is
// enforced (exact consequence of the positive-semidefinite Hermitian part
// of the symbol). The ensemble is doubled internally to fill the
// doubling-stability fields.
EstimateReport estimate_ratio_elliptic(const KernelSpec& k, real lambda,
                                       real p, const EnsembleConfig& ens,
                                       const QuadConfig& q = {});

}  // namespace nonlocal
