#pragma once

// Discrete norms on periodic vector fields: plain L^p, the Bessel-potential
// norm of order 2s, its homogeneous seminorm, and a psi-weighted L^1
// diagnostic. Also the empirical estimate-report machinery (random
// band-limited ensembles, max ratios, doubling stability) shared by the
// elliptic and parabolic solvers.

#include <cstdint>
#include <string>
#include <vector>

#include "nonlocal/grid.hpp"
#include "nonlocal/kernel.hpp"
#include "nonlocal/symbol.hpp"

namespace nonlocal {

enum class NormVariant {
  lp,              // (sum |u(x)|^p cellvol)^{1/p}, |.| Euclidean over components
  hs_bessel,       // L^p norm of F^{-1}[(1 + 4 pi^2 |xi|^2)^s u^]
  hs_seminorm,     // L^p norm of F^{-1}[(4 pi^2 |xi|^2)^s u^]
  weighted_l1psi,  // sum |u(x)| psi(x) cellvol, psi = 1/(1 + |x - center|^{d+2s})
};

struct NormConfig {
  real p = 2.0;  // exponent, must exceed 1
  real s = 0.5;  // order for the spectral variants and the weight; >= 0
  NormVariant variant = NormVariant::lp;
};

// Deterministic (pairwise-summed, thread-count independent). The largest
// pointwise length is factored out before the power sum, so scaling the
// field by a power of two scales the result exactly.
real norm(const VectorField& field, const NormConfig& cfg);

// Ensemble of mean-free random band-limited fields drawn per-sample from
// sub-streams of `seed`; every report doubles the ensemble internally for
// the stability check.
struct EnsembleConfig {
  GridSpec grid;
  int count = 8;  // samples before doubling
  int kmax = 4;   // band limit max_k |m_k| <= kmax
  std::uint64_t seed = 0x6b9d3a41c205f17bull;
};

inline std::uint64_t ensemble_seed(std::uint64_t master, int sample) {
  Rng r = sub_rng(master, std::uint64_t(sample));
  return r.next_u64();
}

struct EstimateReport {
  std::string estimate;  // which inequality family the ratios instantiate
  std::string kernel;    // kernel label
  int d = 0;
  real s = 0.0;
  real alpha1 = 0.0, alpha2 = 0.0;
  GridSpec grid;
  real p = 2.0;
  real lambda = 0.0;
  real ratio_max = 0.0;  // always the max of ratio_samples
  std::vector<real> ratio_samples;
  std::vector<std::string> sample_labels;  // parallel to ratio_samples
  std::uint64_t seed = 0;                  // ensemble master seed
  std::uint64_t argmax_seed = 0;           // sample seed attaining ratio_max
  real aux_ratio_max = 0.0;                // secondary ratio family, if any
  bool doubling_stable = false;  // max moved < 20% when the ensemble doubled
  real doubling_change = 0.0;    // relative growth of the max under doubling
};

// "d<d> s<s> <profile>/<radial> band[a1,a2]" for report headers.
std::string kernel_label(const KernelSpec& k);

// Empirical equivalence constants among the four norms
//   lame   = || Lame multiplier  u ||_p   (ell1 I + ell2 xihat xihat^T weight)
//   op     = || full-symbol      u ||_p   (M(xi) of the given kernel)
//   riesz  = || (2 pi |xi|)^{2s} u ||_p   (componentwise)
//   scalar = || tr M(xi)         u ||_p   (componentwise)
// over the ensemble. ratio_samples holds 12 directed ratios per sample,
// sample-major, in the fixed order
//   lame/op, op/lame, lame/riesz, riesz/lame, lame/scalar, scalar/lame,
//   op/riesz, riesz/op, op/scalar, scalar/op, riesz/scalar, scalar/riesz
// with matching sample_labels. Throws if any sample norm degenerates.
EstimateReport norm_equivalence_report(const KernelSpec& k, real p,
                                       const EnsembleConfig& ens,
                                       const QuadConfig& q = {});

}  // namespace nonlocal
