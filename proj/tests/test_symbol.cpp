#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "nonlocal/symbol.hpp"

using namespace nonlocal;

namespace {

VecR vec1(real x) {
  VecR v(1);
  v << x;
  return v;
}

VecR vec2(real x, real y) {
  VecR v(2);
  v << x, y;
  return v;
}

VecR vec3(real x, real y, real z) {
  VecR v(3);
  v << x, y, z;
  return v;
}

// closed-form constants for the constant-profile kernel, derived through the
// one-dimensional cosine transform and the surface moments of |w1|^p:
//   I0(s)   = pi / (2 Gamma(1+2s) sin(pi s))   [int_0^inf (1-cos t) t^{-1-2s}]
//   Sp(p,d) = 2 pi^{(d-1)/2} Gamma((p+1)/2) / Gamma((p+d)/2)
//   ell1    = (1-s) I0 (Sp(2s) - Sp(2s+2)) / (d-1),   d >= 2
//   ell2    = (1-s) I0 Sp(2s+2) - ell1
// and in one dimension the total constant is 2 (1-s) I0.
real i0_exact(real s) {
  return pi / (2.0 * std::exp(std::lgamma(1.0 + 2.0 * s)) * std::sin(pi * s));
}

real sp_exact(real p, int d) {
  return 2.0 * std::pow(pi, 0.5 * (d - 1)) *
         std::exp(std::lgamma(0.5 * (p + 1)) - std::lgamma(0.5 * (p + d)));
}

real ell1_exact(int d, real s) {
  if (d == 1) return 2.0 * (1.0 - s) * i0_exact(s);
  const real a1 = (sp_exact(2.0 * s, d) - sp_exact(2.0 * s + 2.0, d)) / (d - 1);
  return (1.0 - s) * i0_exact(s) * a1;
}

real ell2_exact(int d, real s) {
  return (1.0 - s) * i0_exact(s) * sp_exact(2.0 * s + 2.0, d) -
         ell1_exact(d, s);
}

bool close_rel(real a, real b, real rtol) {
  return std::abs(a - b) <= rtol * std::max({std::abs(a), std::abs(b), 1.0});
}

bool mat_close(const MatR& a, const MatR& b, real tol) {
  const real scale = std::max({a.cwiseAbs().maxCoeff(),
                               b.cwiseAbs().maxCoeff(), 1.0});
  return (a - b).cwiseAbs().maxCoeff() <= tol * scale;
}

// even kernel isolating the radial transform: a == 1, m log-oscillating
KernelSpec kernel_radial_probe(int d, real s, real eps, real omega0) {
  ProfileSpec p;
  p.kind = ProfileSpec::Kind::constant;
  p.value = 1.0;
  RadialSpec r;
  r.kind = RadialSpec::Kind::logosc;
  r.eps = eps;
  r.omega0 = omega0;
  return make_kernel(d, s, 1.0, std::exp(2.0 * eps), p, r);
}

// odd kernel isolating the sine transform in one dimension
KernelSpec kernel_odd_probe_1d(real s) {
  ProfileSpec p;
  p.kind = ProfileSpec::Kind::zonal;
  p.zc = {1.5, 0.3};
  p.axis = vec1(1.0);
  RadialSpec r;
  r.kind = RadialSpec::Kind::logosc;
  r.eps = 0.15;
  r.omega0 = 2.0;
  return make_kernel(1, s, 1.2, 1.8 * std::exp(0.3), p, r);
}

}  // namespace

TEST_CASE("derived constants match the closed forms") {
  for (int d = 1; d <= 3; ++d) {
    for (real s : {0.25, 0.5, 0.75}) {
      const LameConstants c = derive_lame_constants(d, s);
      CHECK(c.d == d);
      CHECK(c.s == s);
      CHECK(close_rel(c.ell1, ell1_exact(d, s), 1e-7));
      if (d == 1) {
        CHECK(!c.ell2.has_value());
      } else {
        REQUIRE(c.ell2.has_value());
        CHECK(close_rel(*c.ell2, ell2_exact(d, s), 1e-7));
        CHECK(close_rel(c.total(), c.ell1 + *c.ell2, 1e-15));
      }
    }
  }

  // frozen decimals guard the in-test oracle itself
  CHECK(close_rel(ell1_exact(1, 0.25), 3.7599424119465008, 1e-15));
  CHECK(close_rel(ell1_exact(1, 0.5), 1.5707963267948966, 1e-15));
  CHECK(close_rel(ell1_exact(1, 0.75), 0.83554275821033350, 1e-15));
  CHECK(close_rel(ell1_exact(2, 0.25), 3.6039506272335113, 1e-15));
  CHECK(close_rel(ell2_exact(2, 0.25), 1.8019753136167557, 1e-15));
  CHECK(close_rel(ell1_exact(2, 0.75), 0.41730308592371030, 1e-15));
  CHECK(close_rel(ell2_exact(2, 0.75), 0.62595462888556545, 1e-15));
  CHECK(close_rel(ell1_exact(3, 0.25), 4.4998885559206914, 1e-15));
  CHECK(close_rel(ell2_exact(3, 0.25), 2.2499442779603457, 1e-15));
  CHECK(close_rel(ell1_exact(3, 0.5), 1.2337005501361698, 1e-15));
  CHECK(close_rel(ell1_exact(3, 0.75), 0.46665510950288651, 1e-15));
  CHECK(close_rel(ell2_exact(3, 0.75), 0.69998266425432977, 1e-15));
}

TEST_CASE("the two constants coincide exactly at s = 1/2") {
  for (int d : {2, 3}) {
    const LameConstants c = derive_lame_constants(d, 0.5);
    REQUIRE(c.ell2.has_value());
    CHECK(close_rel(c.ell1, *c.ell2, 1e-9));
    CHECK(close_rel(ell1_exact(d, 0.5), ell2_exact(d, 0.5), 1e-14));
    // and are genuinely distinct away from it
    const LameConstants c2 = derive_lame_constants(d, 0.25);
    CHECK(std::abs(c2.ell1 - *c2.ell2) > 0.1);
  }
}

TEST_CASE("derivation is cached and repeatable") {
  const LameConstants a = derive_lame_constants(2, 0.25);
  const LameConstants b = derive_lame_constants(2, 0.25);
  CHECK(std::memcmp(&a.ell1, &b.ell1, sizeof(real)) == 0);
  CHECK(*a.ell2 == *b.ell2);
}

TEST_CASE("closed-form multiplier has the documented eigenstructure") {
  const LameConstants c = derive_lame_constants(2, 0.25);
  CHECK(symbol_lame(vec2(0.0, 0.0), c).cwiseAbs().maxCoeff() == 0.0);

  const VecR xi = vec2(0.3, -0.7);
  const MatR m = symbol_lame(xi, c);
  const real scale = std::pow(two_pi * xi.norm(), 2.0 * c.s);
  Eigen::SelfAdjointEigenSolver<MatR> es(m);
  CHECK(close_rel(es.eigenvalues()(0), scale * c.ell1, 1e-13));
  CHECK(close_rel(es.eigenvalues()(1), scale * (c.ell1 + *c.ell2), 1e-13));
  // the large eigenvector is the direction of xi
  const VecR xh = xi / xi.norm();
  CHECK(std::abs(std::abs(es.eigenvectors().col(1).dot(xh)) - 1.0) < 1e-12);

  // exact 2s-homogeneity and linear alpha scaling
  const MatR m4 = symbol_lame(4.0 * xi, c);
  CHECK(mat_close(m4, std::pow(4.0, 2.0 * c.s) * m, 1e-14));
  CHECK(mat_close(symbol_lame(xi, c, 2.5), 2.5 * m, 1e-14));

  const LameConstants c1 = derive_lame_constants(1, 0.75);
  CHECK(close_rel(symbol_lame(vec1(2.0), c1)(0, 0),
                  std::pow(4.0 * pi, 1.5) * c1.ell1, 1e-13));
}

TEST_CASE("log-oscillating radial transform matches the series oracle") {
  // one-dimensional even kernel reduces the symbol to the cosine transform:
  //   Me(xi) = 2 (1-s) (2 pi xi)^{2s} Gc(ln(2 pi xi))
  // frozen values computed from the complex-Gamma Fourier series of Gc
  auto gc_of = [](const KernelSpec& k, real v) {
    const real xi = std::exp(v) / two_pi;
    const MatR me = symbol_even_part(vec1(xi), k);
    return me(0, 0) / (2.0 * (1.0 - k.s) * std::exp(2.0 * k.s * v));
  };

  const real tol = 5e-7;
  {
    const KernelSpec k = kernel_radial_probe(1, 0.25, 0.15, 2.0);
    CHECK(close_rel(gc_of(k, 0.0), 3.0363871686430267, tol));
    CHECK(close_rel(gc_of(k, 1.1), 2.8599399010646760, tol));
    CHECK(close_rel(gc_of(k, -0.4), 3.0054478396061186, tol));
  }
  {
    const KernelSpec k = kernel_radial_probe(1, 0.5, 0.15, 2.0);
    CHECK(close_rel(gc_of(k, 0.0), 1.9014685359606821, tol));
    CHECK(close_rel(gc_of(k, 1.1), 1.7777997708244986, tol));
    CHECK(close_rel(gc_of(k, -0.4), 1.8965509697006632, tol));
  }
  {
    const KernelSpec k = kernel_radial_probe(1, 0.75, 0.15, 2.0);
    CHECK(close_rel(gc_of(k, 0.0), 1.9855908750156181, tol));
    CHECK(close_rel(gc_of(k, 1.1), 1.9109902115029769, tol));
    CHECK(close_rel(gc_of(k, -0.4), 1.9945709357217911, tol));
  }
  {
    const KernelSpec k = kernel_radial_probe(1, 0.25, 0.5 * std::log(2.0), 2.0);
    CHECK(close_rel(gc_of(k, 0.7), 3.6799158237211868, tol));
  }
  {
    const KernelSpec k = kernel_radial_probe(1, 0.75, 0.5 * std::log(2.0), 2.0);
    CHECK(close_rel(gc_of(k, 0.7), 2.3717773764815237, tol));
  }
}

TEST_CASE("sine transform matches the series oracle on both sides of 1/2") {
  // odd zonal profile in one dimension: Mo(xi) = -0.6 (1-s) S(2 pi xi) with
  // S(b) = b^{2s} Gs(ln b); Gs integrates sin for s < 1/2 and sin - t above
  // (Mo carries the negated sine transform: it multiplies e^{+2 pi i xi x})
  auto gs_of = [](const KernelSpec& k, real v) {
    const real xi = std::exp(v) / two_pi;
    const SymbolMatrix m = symbol_general(vec1(xi), k);
    return m.mo(0, 0) / (-0.6 * (1.0 - k.s) * std::exp(2.0 * k.s * v));
  };

  const real tol = 5e-7;
  {
    const KernelSpec k = kernel_odd_probe_1d(0.25);
    CHECK(close_rel(gs_of(k, 0.0), 2.9246042981059869, tol));
    CHECK(close_rel(gs_of(k, 1.1), 2.8472407537523718, tol));
  }
  {
    const KernelSpec k = kernel_odd_probe_1d(0.75);
    CHECK(close_rel(gs_of(k, 0.0), -1.9796181046765296, tol));
    CHECK(close_rel(gs_of(k, 1.1), -1.9623335596972163, tol));
  }

  // oddness in xi
  const KernelSpec k = kernel_odd_probe_1d(0.25);
  const SymbolMatrix p = symbol_general(vec1(0.8), k);
  const SymbolMatrix n = symbol_general(vec1(-0.8), k);
  CHECK(close_rel(p.me(0, 0), n.me(0, 0), 1e-12));
  CHECK(close_rel(p.mo(0, 0), -n.mo(0, 0), 1e-12));
}

TEST_CASE("planar symbols match the quadrature-independent oracle") {
  const real tol = 2e-5;  // frozen values carry ~2e-7 relative uncertainty
  {
    const SymbolMatrix m = symbol_general(vec2(1.0, 0.5), kernel_band2(2, 0.25));
    MatR ref(2, 2);
    ref << 23.591668408736648, 4.3619434373581036,  //
        4.3619434373581036, 14.48973698257198;
    CHECK(mat_close(m.me, ref, tol));
    CHECK(m.mo.cwiseAbs().maxCoeff() == 0.0);
  }
  {
    const SymbolMatrix m = symbol_general(vec2(1.0, 0.5), kernel_band2(2, 0.5));
    MatR ref(2, 2);
    ref << 23.823273849212934, 5.7966742363413555,  //
        5.7966742363413555, 12.763314930881435;
    CHECK(mat_close(m.me, ref, tol));
  }
  {
    const SymbolMatrix m =
        symbol_general(vec2(0.6, 0.8), kernel_band4(2, 0.75));
    MatR ref(2, 2);
    ref << 30.48955460854932, 14.537942764987186,  //
        14.537942764987186, 25.608531884067227;
    CHECK(mat_close(m.me, ref, tol));
  }
  {
    const SymbolMatrix m =
        symbol_general(vec2(0.8, -0.6), kernel_odd_harmonic(2, 0.25));
    MatR re(2, 2), im(2, 2);
    re << 20.316390206193605, -2.7493651440260715,  //
        -2.7493651440260715, 13.71144497216596;
    im << 0.69196395753885388, -0.79988546689879462,  //
        -0.79988546689879462, -1.2498774343147474;
    CHECK(mat_close(m.me, re, tol));
    CHECK(mat_close(m.mo, im, tol));
  }
  {
    // s = 1/2 with the radius-one truncation: exercises the non-homogeneous
    // beta H(ln beta) path
    const SymbolMatrix m =
        symbol_general(vec2(0.8, -0.6), kernel_odd_harmonic(2, 0.5));
    MatR re(2, 2), im(2, 2);
    re << 18.353668504695421, -4.2979619268094912,  //
        -4.2979619268094912, 11.47542396291744;
    im << -1.0474033218564715, 0.47353017521594635,  //
        0.47353017521594635, 0.4625020608333618;
    CHECK(mat_close(m.me, re, tol));
    CHECK(mat_close(m.mo, im, tol));
  }
}

TEST_CASE("scalar companion symbol equals the trace of the even part") {
  const KernelSpec k = kernel_band2(2, 0.25);
  const VecR xi = vec2(1.0, 0.5);
  const real sc = scalar_symbol(xi, k);
  CHECK(close_rel(sc, 38.081405391308627, 2e-6));
  CHECK(close_rel(sc, symbol_even_part(xi, k).trace(), 1e-12));
  CHECK(scalar_symbol(vec2(0.0, 0.0), k) == 0.0);
}

TEST_CASE("general quadrature agrees with the closed form on constant kernels") {
  Rng rng(0x1234abcdULL);
  for (int d = 1; d <= 3; ++d) {
    for (real s : {0.25, 0.5, 0.75}) {
      const KernelSpec k = kernel_fractional(d, s);
      const LameConstants c = derive_lame_constants(d, s);
      const int trials = d == 3 ? 4 : 10;
      for (int t = 0; t < trials; ++t) {
        VecR xi(d);
        for (int j = 0; j < d; ++j) xi[j] = 8.0 * (rng.uniform01() - 0.5);
        if (xi.norm() < 0.05) xi[0] += 1.0;
        const SymbolMatrix m = symbol_general(xi, k);
        CHECK(mat_close(m.me, symbol_lame(xi, c), 1e-5));
        CHECK(m.mo.cwiseAbs().maxCoeff() == 0.0);
      }
    }
  }
}

TEST_CASE("symbol vanishes identically at the zero frequency") {
  const SymbolMatrix m = symbol_general(vec2(0.0, 0.0), kernel_band2(2, 0.25));
  CHECK(m.me.cwiseAbs().maxCoeff() == 0.0);
  CHECK(m.mo.cwiseAbs().maxCoeff() == 0.0);
  CHECK(symbol_even_part(vec3(0.0, 0.0, 0.0), kernel_band2(3, 0.5))
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("homogeneity of order 2s for scale-invariant kernels") {
  // constant radial modulation: M(c xi) = c^{2s} M(xi) exactly
  for (real s : {0.25, 0.5, 0.75}) {
    const KernelSpec k = kernel_band2(2, s);
    const VecR xi = vec2(0.35, -0.2);
    const SymbolMatrix m1 = symbol_general(xi, k);
    for (real c : {2.0, 4.0}) {
      const SymbolMatrix mc = symbol_general(c * xi, k);
      CHECK(mat_close(mc.me, std::pow(c, 2.0 * s) * m1.me, 1e-7));
    }
  }
  {
    const KernelSpec k = kernel_odd_harmonic(2, 0.25);
    const VecR xi = vec2(0.5, 0.4);
    const SymbolMatrix m1 = symbol_general(xi, k);
    const SymbolMatrix m2 = symbol_general(2.0 * xi, k);
    CHECK(mat_close(m2.me, std::pow(2.0, 0.5) * m1.me, 1e-7));
    CHECK(mat_close(m2.mo, std::pow(2.0, 0.5) * m1.mo, 1e-7));
  }
}

TEST_CASE("log-periodic modulation scales exactly at the kernel period") {
  // m(r) repeats under r -> e^{pi} r (omega0 = 2), so the symbol obeys the
  // discrete scaling M(e^{pi} xi) = e^{2 s pi} M(xi) even though continuous
  // homogeneity is genuinely broken
  const KernelSpec k = kernel_band4(2, 0.75);
  const real c = std::exp(pi);
  const VecR xi = vec2(0.22, 0.31);
  const SymbolMatrix m1 = symbol_general(xi, k);
  const SymbolMatrix mc = symbol_general(c * xi, k);
  CHECK(mat_close(mc.me, std::pow(c, 1.5) * m1.me, 1e-6));

  // and a generic scale must break it, beyond quadrature noise
  const SymbolMatrix mg = symbol_general(2.0 * xi, k);
  CHECK((mg.me - std::pow(2.0, 1.5) * m1.me).cwiseAbs().maxCoeff() >
        1e-3 * m1.me.cwiseAbs().maxCoeff());
}

TEST_CASE("conjugate parity in the frequency") {
  for (real s : {0.25, 0.5}) {
    const KernelSpec k = kernel_odd_harmonic(2, s);
    const VecR xi = vec2(0.9, 0.45);
    const SymbolMatrix p = symbol_general(xi, k);
    const SymbolMatrix n = symbol_general(VecR(-xi), k);
    CHECK(mat_close(p.me, n.me, 1e-11));
    CHECK(mat_close(p.mo, MatR(-n.mo), 1e-11));
  }
  {
    const KernelSpec k = kernel_odd_harmonic(3, 0.75);
    const VecR xi = vec3(0.4, -0.3, 0.6);
    const SymbolMatrix p = symbol_general(xi, k);
    const SymbolMatrix n = symbol_general(VecR(-xi), k);
    CHECK(mat_close(p.me, n.me, 1e-9));
    CHECK(mat_close(p.mo, MatR(-n.mo), 1e-9));
  }
}

TEST_CASE("even part is positive semidefinite and coercive on the band") {
  Rng rng(0x77aa11ULL);
  for (real s : {0.25, 0.5, 0.75}) {
    const CoercivityResult cc = coercivity_constant(2, s, 1.0);
    std::vector<KernelSpec> ks = {kernel_fractional(2, s), kernel_band2(2, s),
                                  kernel_band4(2, s), kernel_cone(2, s),
                                  kernel_odd_harmonic(2, s)};
    for (const KernelSpec& k : ks) {
      const CoercivityResult ck = coercivity_constant(2, s, k.alpha1);
      for (int t = 0; t < 10; ++t) {
        VecR xi = vec2(6.0 * (rng.uniform01() - 0.5),
                       6.0 * (rng.uniform01() - 0.5));
        if (xi.norm() < 0.05) xi[0] += 1.0;
        const MatR me = symbol_even_part(xi, k);
        Eigen::SelfAdjointEigenSolver<MatR> es(me);
        const real lmin = es.eigenvalues().minCoeff();
        const real lmax = es.eigenvalues().maxCoeff();
        CHECK(lmin >= -1e-12 * lmax);
        const real floor = ck.C * std::pow(two_pi * xi.norm(), 2.0 * s);
        CHECK(lmin >= floor * (1.0 - 1e-6));
      }
    }
  }
}

TEST_CASE("growth bound caps the symbol norm across the band") {
  Rng rng(0x5511ffULL);
  for (real s : {0.25, 0.5, 0.75}) {
    for (const KernelSpec& k : builtin_kernels(2, s)) {
      if (!k.even_profile && s == 0.5) {
        CHECK_THROWS_AS((void)upper_bound_constant(k), const config_error&);
        continue;
      }
      const real B = upper_bound_constant(k);
      CHECK(B > 0.0);
      for (real r : {1.0, 2.0, 4.0, 8.0}) {
        const real th = two_pi * rng.uniform01();
        const VecR xi = vec2(r * std::cos(th), r * std::sin(th));
        const SymbolMatrix m = symbol_general(xi, k);  // internal check too
        Eigen::JacobiSVD<MatC> svd(m.full());
        CHECK(svd.singularValues()(0) <=
              B * std::pow(two_pi * r, 2.0 * s) * (1.0 + 1e-9));
      }
    }
  }
}

TEST_CASE("coercivity minimization is consistent and correctly normalized") {
  for (int d : {2, 3}) {
    for (real s : {0.25, 0.5, 0.75}) {
      const CoercivityResult cc = coercivity_constant(d, s, 1.0);
      const LameConstants c = derive_lame_constants(d, s);
      CHECK(cc.C > 0.0);
      // for the constant kernel the minimum is the small eigenvalue ell1,
      // attained with mu perpendicular to nu
      CHECK(close_rel(cc.C, c.ell1, 1e-8));
      CHECK(close_rel(cc.min_quotient, c.ell1, 1e-8));
      CHECK(std::abs(cc.argmin_nu.dot(cc.argmin_mu)) < 1e-5);
      CHECK(close_rel(cc.min_psi_raw,
                      cc.min_quotient * std::pow(two_pi, 2.0 * s), 1e-14));
      CHECK(cc.scan_points >= 256);

      const CoercivityResult c3 = coercivity_constant(d, s, 3.0);
      CHECK(close_rel(c3.C, 3.0 * cc.C, 1e-13));
    }
  }
  CHECK_THROWS_AS((void)coercivity_constant(2, 0.25, 0.0), const config_error&);
  CHECK_THROWS_AS((void)coercivity_constant(2, 0.25, -1.0),
                  const config_error&);

  // one dimension: single direction, quotient equals the total constant
  const CoercivityResult c1 = coercivity_constant(1, 0.75, 2.0);
  CHECK(close_rel(c1.C, 2.0 * derive_lame_constants(1, 0.75).ell1, 1e-10));
}

TEST_CASE("angle scan is validated against a product grid") {
  const int d = 2;
  const real s = 0.25;
  const CoercivityResult cc = coercivity_constant(d, s, 1.0);
  const KernelSpec k = kernel_fractional(d, s);
  const real p2s = std::pow(two_pi, 2.0 * s);

  real grid_min = 1e300;
  for (int i = 0; i < 24; ++i) {
    const real a = pi * i / 24.0;
    const MatR me = symbol_even_part(vec2(std::cos(a), std::sin(a)), k);
    for (int j = 0; j < 96; ++j) {
      const real b = two_pi * j / 96.0;
      const VecR mu = vec2(std::cos(b), std::sin(b));
      grid_min = std::min(grid_min, mu.dot(me * mu) / p2s);
    }
  }
  // the scan result is a true lower bound for the grid, and the grid cannot
  // sit far above it
  CHECK(grid_min >= cc.min_quotient * (1.0 - 1e-6));
  CHECK(grid_min <= cc.min_quotient * (1.0 + 1e-2));

  // rotational covariance underpinning the one-angle reduction
  const MatR m0 = symbol_even_part(vec2(1.0, 0.0), k);
  const real ang = 0.7;
  MatR rot(2, 2);
  rot << std::cos(ang), -std::sin(ang), std::sin(ang), std::cos(ang);
  const MatR mr = symbol_even_part(vec2(std::cos(ang), std::sin(ang)), k);
  CHECK(mat_close(mr, MatR(rot * m0 * rot.transpose()), 1e-7));
}

TEST_CASE("tabulated multiplier respects lattice symmetry and the closed form") {
  GridSpec g = make_grid(2, {16, 16}, {1.0, 0.5});

  const KernelSpec kf = kernel_fractional(2, 0.25);
  const SymbolField sf = tabulate_symbol(g, kf);
  CHECK(sf.s == 0.25);
  CHECK(long(sf.table.size()) == g.total());
  CHECK(sf.at(0).cwiseAbs().maxCoeff() == 0.0);

  // closed-form reference, averaged over aliased Nyquist representatives the
  // same way a conjugate-symmetric table must be
  const LameConstants c = derive_lame_constants(2, 0.25);
  auto lame_ref = [&](long f) {
    const VecR xi0 = g.frequency(f);
    const auto idx = g.multi(f);
    std::vector<int> nyq;
    for (int a = 0; a < g.d; ++a)
      if (2 * idx[a] == g.n[a]) nyq.push_back(a);
    MatR acc = MatR::Zero(2, 2);
    const int combos = 1 << nyq.size();
    for (int mask = 0; mask < combos; ++mask) {
      VecR xi = xi0;
      for (std::size_t b = 0; b < nyq.size(); ++b)
        if (mask & (1 << b)) xi[nyq[b]] = -xi[nyq[b]];
      acc += symbol_lame(xi, c);
    }
    return MatR(acc / combos);
  };
  int nyquist_modes = 0;
  for (long f = 0; f < g.total(); ++f) {
    const long cf = conjugate_flat(g, f);
    CHECK((sf.at(f) - sf.at(cf).conjugate()).cwiseAbs().maxCoeff() == 0.0);
    if (f == 0) continue;
    const MatC ref = lame_ref(f).cast<cplx>();
    if (lame_ref(f) != symbol_lame(g.frequency(f), c)) ++nyquist_modes;
    CHECK((sf.at(f) - ref).cwiseAbs().maxCoeff() <=
          1e-5 * std::max(1.0, ref.cwiseAbs().maxCoeff()));
    CHECK((sf.at(f) - sf.at(f).transpose()).cwiseAbs().maxCoeff() <=
          1e-12 * std::max(1.0, sf.at(f).cwiseAbs().maxCoeff()));
  }
  CHECK(nyquist_modes > 0);  // the aliased rows are actually exercised

  // deterministic across repeated runs, bit for bit
  const SymbolField sf2 = tabulate_symbol(g, kf);
  for (long f = 0; f < g.total(); ++f)
    CHECK(std::memcmp(sf.at(f).data(), sf2.at(f).data(),
                      sizeof(cplx) * 4) == 0);

  // an odd kernel keeps the conjugate pairing, including self-paired modes
  const SymbolField so = tabulate_symbol(g, kernel_odd_harmonic(2, 0.25));
  for (long f = 0; f < g.total(); ++f) {
    const long cf = conjugate_flat(g, f);
    CHECK((so.at(f) - so.at(cf).conjugate()).cwiseAbs().maxCoeff() <= 1e-12);
  }

  CHECK_THROWS_AS((void)tabulate_symbol(g, kernel_band2(3, 0.25)),
                  const config_error&);
}

TEST_CASE("impossible tolerances are reported, not absorbed") {
  QuadConfig q;
  q.radial_tol = 1e-30;  // certified remainder cannot reach this
  CHECK_THROWS_AS((void)symbol_general(vec2(1.0, 0.5), kernel_band4(2, 0.25), q),
                  const convergence_error&);

  QuadConfig q2;
  q2.max_doublings = 0;
  CHECK_THROWS_AS((void)symbol_general(vec2(1.0, 0.5), kernel_band2(2, 0.25), q2),
                  const convergence_error&);

  CHECK_THROWS_AS((void)symbol_general(vec3(1.0, 0.0, 0.0), kernel_band2(2, 0.5)),
                  const config_error&);
  VecR bad = vec2(1.0, 0.0);
  bad[0] = std::nan("");
  CHECK_THROWS_AS((void)symbol_general(bad, kernel_band2(2, 0.5)),
                  const config_error&);
}

TEST_CASE("aligned double cone in three dimensions has a closed form") {
  // with xi parallel to the cone axis the angular integral separates:
  //   M = Mperp I + (Mpar - Mperp) a a^T
  //   Mpar  = (1-s) I0 (2pi|xi|)^{2s} 2pi int a(u) |u|^{2s} u^2 du
  //   Mperp = (1-s) I0 (2pi|xi|)^{2s} pi  int a(u) |u|^{2s} (1-u^2) du
  // and with a(u) = 1 + [|u| >= cos 0.6] both integrals are elementary
  for (real s : {0.25, 0.5, 0.75}) {
    const KernelSpec k = kernel_cone(3, s);
    VecR ax = vec3(0.36, 0.48, 0.8);
    const real r = 1.7;
    const VecR xi = r * ax;
    const real c = std::cos(0.6);
    const real ju2 = 2.0 * (2.0 - std::pow(c, 2.0 * s + 3.0)) / (2.0 * s + 3.0);
    const real j1 = 2.0 * (2.0 - std::pow(c, 2.0 * s + 1.0)) / (2.0 * s + 1.0);
    const real pre =
        (1.0 - s) * i0_exact(s) * std::pow(two_pi * r, 2.0 * s) * pi;
    const real mpar = pre * 2.0 * ju2;
    const real mperp = pre * (j1 - ju2);
    const MatR ref = mperp * MatR::Identity(3, 3) +
                     (mpar - mperp) * (ax * ax.transpose());
    const SymbolMatrix m = symbol_general(xi, k);
    CHECK(mat_close(m.me, ref, 1e-6));
    CHECK(m.mo.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("s = 1/2 odd symbols are reproducible despite broken scaling") {
  // the truncation at radius one fixes the absolute scale; doubling the
  // frequency must NOT scale the odd part by 2^{2s} = 2
  const KernelSpec k = kernel_odd_harmonic(2, 0.5);
  const VecR xi = vec2(0.8, -0.6);
  const SymbolMatrix m1 = symbol_general(xi, k);
  const SymbolMatrix m2 = symbol_general(2.0 * xi, k);
  CHECK(mat_close(m2.me, MatR(2.0 * m1.me), 1e-7));  // even part still scales
  CHECK((m2.mo - 2.0 * m1.mo).cwiseAbs().maxCoeff() >
        0.05 * m1.mo.cwiseAbs().maxCoeff());
}
