#pragma once

// Quadrature toolbox: Gauss-Legendre rules generated at runtime, panel
// integration with geometric grading, a convergence-doubling driver,
// trigonometric polynomials with closed-form exponential moments (the
// workhorse for certified kernel tails), and a Brent minimizer.

#include <functional>
#include <string>
#include <vector>

#include "nonlocal/common.hpp"

namespace nonlocal {

struct GLRule {
  std::vector<real> x;  // nodes on (-1, 1)
  std::vector<real> w;
};

// Nodes by Newton iteration on Legendre polynomials; cached per size.
const GLRule& gl_rule(int n);

template <class F>
real integrate_gl(F&& f, real a, real b, const GLRule& rule) {
  const real mid = 0.5 * (a + b);
  const real hal = 0.5 * (b - a);
  real s = 0.0;
  for (std::size_t i = 0; i < rule.x.size(); ++i)
    s += rule.w[i] * f(mid + hal * rule.x[i]);
  return s * hal;
}

template <class F>
real integrate_panels(F&& f, const std::vector<real>& edges, const GLRule& rule) {
  std::vector<real> parts(edges.size() >= 1 ? edges.size() - 1 : 0);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    parts[i] = integrate_gl(f, edges[i], edges[i + 1], rule);
  return pairwise_sum(parts);
}

// Edges a = e0 < e1 < ... < em = b with panel widths growing geometrically
// away from `a` (ratio > 1); resolves boundary layers / endpoint kinks.
std::vector<real> edges_geometric_from(real a, real b, real first_width, real ratio);

// Same but grading toward `b`.
std::vector<real> edges_geometric_to(real a, real b, real last_width, real ratio);

// Uniform edges, width at most `max_width`.
std::vector<real> edges_uniform(real a, real b, real max_width);

// Evaluate eval(level) for level = 0, 1, ... until two consecutive values
// agree to rel_tol (relative to scale, or absolutely if the scale is tiny).
// Throws convergence_error naming `what` after max_level refinements.
real refine_until(const std::function<real(int)>& eval, real rel_tol,
                  int max_level, const std::string& what);

// c0 + sum_j [ a_j cos(w_j u) + b_j sin(w_j u) ].  Closed under d/du and
// under the recursion h -> h' - c h used by the integration-by-parts tails,
// and has closed-form exponential moments: that is what makes the kernel
// tail remainders certifiable instead of merely estimated.
struct TrigPoly {
  struct Term {
    real a;      // cos amplitude
    real b;      // sin amplitude
    real omega;  // frequency > 0
  };
  real c0 = 0.0;
  std::vector<Term> terms;

  real eval(real u) const;
  TrigPoly derivative() const;
  TrigPoly scaled(real c) const;
  TrigPoly plus(const TrigPoly& o) const;
  TrigPoly shifted(real delta) const;  // u -> f(u + delta)
  real sup_bound() const;              // |c0| + sum_j hypot(a_j, b_j)

  // integral_U^inf e^{-p u} f(u) du, p > 0
  real exp_tail(real p, real U) const;
  // integral_-inf^V e^{+q u} f(u) du, q > 0
  real exp_head(real q, real V) const;
  // integral_a^b f(u) du
  real integral(real a, real b) const;
};

// Trigonometric interpolant of a periodic function from n uniform samples
// over one period [0, period); returns frequencies k * 2*pi/period,
// k = 0..n/2. Spectrally accurate for analytic periodic data.
TrigPoly fit_periodic(const std::function<real(real)>& f, real period, int n);
TrigPoly fit_periodic_samples(const std::vector<real>& values, real period);

struct BrentResult {
  real x;
  real fx;
};

// Scalar minimization on [a, b] (golden section with parabolic steps).
BrentResult brent_min(const std::function<real(real)>& f, real a, real b,
                      real xtol);

}  // namespace nonlocal
