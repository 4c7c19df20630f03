#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <stdexcept>

#include "nonlocal/operators.hpp"
#include "nonlocal/quadrature.hpp"

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

bool vec_close(const VecR& a, const VecR& b, real tol) {
  const real scale =
      std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1.0});
  return (a - b).cwiseAbs().maxCoeff() <= tol * scale;
}

bool field_close(const VectorField& a, const VectorField& b, real tol) {
  real num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    num = std::max(num, std::abs(a.data[i] - b.data[i]));
    den = std::max({den, std::abs(a.data[i]), std::abs(b.data[i])});
  }
  return num <= tol * std::max(den, 1.0);
}

real rel_l2(const VectorField& a, const VectorField& b) {
  real num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const real t = a.data[i] - b.data[i];
    num += t * t;
    den += a.data[i] * a.data[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

SmoothProbe one_mode(int d, const VecR& k, const VecR& ac, const VecR& as) {
  return probe_trig(d, {k}, {ac}, {as});
}

// expected single-mode action: for u = ac cos(2 pi k.x) + as sin(2 pi k.x),
// L u = (Me ac + Mo as) cos + (Me as - Mo ac) sin
VecR mode_oracle(const SymbolMatrix& m, const VecR& ac, const VecR& as,
                 const VecR& k, const VecR& x) {
  const real ph = two_pi * k.dot(x);
  const VecR cc = VecR(m.me * ac + m.mo * as);
  const VecR ss = VecR(m.me * as - m.mo * ac);
  return VecR(std::cos(ph) * cc + std::sin(ph) * ss);
}

// free-space fractional Lame action on a gaussian bump via the closed-form
// symbol and a dense polar Fourier integral; independent of the singular
// bond quadrature machinery
VecR gaussian_lame_oracle(const VecR& w, const VecR& x0, real sigma, real s,
                          const LameConstants& lc, const VecR& x) {
  const VecR dx = VecR(x - x0);
  const real amp = two_pi * sigma * sigma;  // (2 pi sigma^2)^{d/2}, d = 2
  const GLRule& g = gl_rule(16);
  VecR acc = VecR::Zero(2);
  const real rho_max = 3.5 / sigma;
  const int nr = 96, na = 48;
  for (int i = 0; i < nr; ++i) {
    const real r0 = rho_max * i / nr, r1 = rho_max * (i + 1) / nr;
    for (std::size_t qi = 0; qi < g.x.size(); ++qi) {
      const real rho = 0.5 * (r0 + r1) + 0.5 * (r1 - r0) * g.x[qi];
      const real wr = 0.5 * (r1 - r0) * g.w[qi];
      const real rad = std::pow(two_pi * rho, 2.0 * s) *
                       std::exp(-2.0 * pi * pi * sigma * sigma * rho * rho) *
                       amp * rho;
      for (int j = 0; j < na; ++j) {
        const real a0 = two_pi * j / na, a1 = two_pi * (j + 1) / na;
        for (std::size_t qj = 0; qj < g.x.size(); ++qj) {
          const real th = 0.5 * (a0 + a1) + 0.5 * (a1 - a0) * g.x[qj];
          const real wa = 0.5 * (a1 - a0) * g.w[qj];
          const VecR xh = vec2(std::cos(th), std::sin(th));
          const real cosph = std::cos(two_pi * rho * xh.dot(dx));
          const VecR mw = VecR(lc.ell1 * w + (*lc.ell2) * xh.dot(w) * xh);
          acc += (wr * wa * rad * cosph) * mw;
        }
      }
    }
  }
  return acc;
}

}  // namespace

TEST_CASE("probe calculus agrees with finite differences") {
  Rng rng(0x5151aaULL);
  auto fd_check = [&](const SmoothProbe& p, const VecR& x) {
    const real h = 1e-6;
    MatR jfd(p.d, p.d);
    for (int a = 0; a < p.d; ++a) {
      VecR xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      jfd.col(a) = (p.value(xp) - p.value(xm)) / (2.0 * h);
    }
    const MatR j = p.jacobian(x);
    CHECK((j - jfd).cwiseAbs().maxCoeff() <= 2e-7 * (1.0 + j.norm()));
    const MatR d = p.sym_grad(x);
    CHECK((d - d.transpose()).norm() == 0.0);  // bit-exact symmetry
  };

  const SmoothProbe tp =
      probe_trig(2, {vec2(1.0, 0.0), vec2(2.0, -1.0)},
                 {vec2(0.3, -0.2), vec2(0.1, 0.8)},
                 {vec2(0.0, 0.5), vec2(-0.4, 0.2)});
  const SmoothProbe gp = probe_gaussian(vec2(1.0, -0.5), vec2(0.4, 0.6), 0.2);
  MatR A(2, 2);
  A << 0.3, -1.1, 0.7, 0.2;
  const SmoothProbe ap = probe_affine(A, vec2(0.1, -0.3));
  for (int t = 0; t < 5; ++t) {
    const VecR x = vec2(rng.uniform01(), rng.uniform01());
    fd_check(tp, x);
    fd_check(gp, x);
    fd_check(ap, x);
  }

  // cancellation-free difference agrees with direct evaluation at moderate y
  const VecR x = vec2(0.31, 0.77);
  for (const SmoothProbe* p : {&tp, &gp, &ap}) {
    for (real rr : {0.5, 0.01}) {
      const VecR y = vec2(rr * 0.6, -rr * 0.8);
      const VecR direct = VecR(p->value(VecR(x + y)) - p->value(x));
      const VecR via = VecR(delta_s(*p, x, y, 0.25));  // chi = 0 below 1/2
      CHECK(vec_close(via, direct, 1e-12));
    }
  }

  // sup / hessian envelopes actually dominate samples
  CHECK(tp.sup_norm() >= tp.value(x).norm());
  CHECK(gp.sup_norm() == doctest::Approx(std::sqrt(1.25)));
  CHECK(tp.freq_scale() == doctest::Approx(two_pi * std::sqrt(5.0)));
}

TEST_CASE("bond difference handles the compensator exactly") {
  // symmetric affine map above s = 1/2: difference is canceled exactly
  MatR S(2, 2);
  S << 1.2, -0.4, -0.4, 0.8;
  const SmoothProbe sym = probe_affine(S, vec2(0.0, 0.2));
  const VecR x = vec2(0.3, 0.9);
  const VecR y = vec2(0.02, -0.05);
  CHECK(delta_s(sym, x, y, 0.75).cwiseAbs().maxCoeff() == 0.0);

  // skew map: compensator vanishes, difference is A y for every s
  MatR W(2, 2);
  W << 0.0, 0.9, -0.9, 0.0;
  const SmoothProbe skew = probe_affine(W, vec2(0.0, 0.0));
  for (real s : {0.25, 0.5, 0.75})
    CHECK(vec_close(delta_s(skew, x, y, s), VecR(W * y), 1e-15));

  // constant field: zero regardless of chi
  const SmoothProbe cst = one_mode(2, vec2(0.0, 0.0), vec2(0.7, -0.3),
                                   vec2(0.0, 0.0));
  CHECK(delta_s(cst, x, y, 0.25).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(delta_s(sym, x, vec2(0.0, 0.0), 0.75), std::domain_error);
  CHECK_THROWS_AS(delta_s(sym, vec3(0.0, 0.0, 0.0), y, 0.75), config_error);
}

TEST_CASE("skew fields annihilate under every admissible kernel") {
  for (int d : {2, 3}) {
    MatR W = MatR::Zero(d, d);
    W(0, 1) = 0.8;
    W(1, 0) = -0.8;
    if (d == 3) {
      W(0, 2) = -0.35;
      W(2, 0) = 0.35;
    }
    const SmoothProbe skew = probe_affine(W, VecR::Zero(d));
    const VecR x = d == 2 ? vec2(0.37, -0.21) : vec3(0.37, -0.21, 0.55);
    for (real s : {0.25, 0.5, 0.75}) {
      for (const KernelSpec& k : builtin_kernels(d, s)) {
        const RealspaceResult r = apply_realspace(skew, x, k);
        CHECK(r.value.cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(r.certified <= 1e-12);
      }
    }
  }
}

TEST_CASE("trig probes match the symbol route on even and odd kernels") {
  Rng rng(0xbead77ULL);

  // Oscillating probes force a genuine far-field truncation: the certified
  // exterior bound decays like R^{-1-2s} log R, so the affordable budget is
  // s-dependent. Below s = 1/2 the check is coarse but still pins the parity
  // and sign structure (an odd-part sign error shows up at order one); the
  // tight quantitative checks live at s >= 1/2 and in the gaussian case.
  auto run = [&](const KernelSpec& k, const VecR& kv, real tol, real check,
                 int npts) {
    VecR ac(k.d), as(k.d);
    for (int c = 0; c < k.d; ++c) {
      ac[c] = 2.0 * rng.uniform01() - 1.0;
      as[c] = 2.0 * rng.uniform01() - 1.0;
    }
    RealspaceConfig cfg;
    cfg.tol = tol;
    cfg.rel_tol = std::max(1e-7, 0.01 * check);
    const SmoothProbe u = one_mode(k.d, kv, ac, as);
    const SymbolMatrix m = symbol_general(kv, k);
    const real scale =
        std::max(m.me.norm() * std::hypot(ac.norm(), as.norm()), 1.0);
    const std::clock_t t0 = std::clock();
    real worst = 0.0, cert = 0.0, rout = 0.0;
    for (int t = 0; t < npts; ++t) {
      VecR x(k.d);
      for (int c = 0; c < k.d; ++c) x[c] = rng.uniform01();
      const RealspaceResult r = apply_realspace(u, x, k, cfg);
      const VecR want = mode_oracle(m, ac, as, kv, x);
      const real err = (r.value - want).cwiseAbs().maxCoeff();
      CHECK(err <= check * scale);
      CHECK(err <= r.certified + check * scale);  // bound soundness
      worst = std::max(worst, err / scale);
      cert = std::max(cert, r.certified);
      rout = r.r_outer;
    }
    std::printf("  [trig d=%d s=%.2f] rel err %.2e certified %.2e R %.0f"
                " (%.2f s)\n",
                k.d, k.s, worst, cert, rout,
                double(std::clock() - t0) / CLOCKS_PER_SEC);
    std::fflush(stdout);
  };

  // one dimension: the two angular nodes make large cutoffs cheap, so both
  // sides of s = 1/2 are tight
  run(kernel_fractional(1, 0.25), vec1(0.8), 1e-5, 1e-5, 3);
  run(kernel_band2(1, 0.75), vec1(1.3), 1e-5, 1e-5, 3);

  // planar even kernels: tight above 1/2, coarse below (the far-field
  // meshes scale like R^2, so the coarse cases get a single point)
  run(kernel_band2(2, 0.25), vec2(0.9, 0.4), 1e-1, 3e-2, 1);
  run(kernel_band2(2, 0.5), vec2(0.9, 0.4), 6e-3, 2e-3, 1);
  run(kernel_band4(2, 0.75), vec2(-0.6, 1.1), 3e-4, 1e-4, 2);

  // planar odd kernels: exercises the odd-moment compensator tail and the
  // sine response against the independently computed odd symbol part
  run(kernel_odd_harmonic(2, 0.25), vec2(0.8, -0.6), 1e-1, 3e-2, 1);
  run(kernel_odd_harmonic(2, 0.5), vec2(0.8, -0.6), 6e-3, 2e-3, 1);
  run(kernel_odd_harmonic(2, 0.75), vec2(0.8, -0.6), 1e-3, 3e-4, 2);

  // three dimensions: cone profile with an angular kink; the volume of the
  // far-field mesh caps the affordable budget well below the planar cases
  run(kernel_cone(3, 0.75), vec3(0.5, -0.3, 0.7), 6e-2, 2e-2, 1);
}

TEST_CASE("gaussian probes match the closed-form fractional symbol") {
  // free-space check, no periodization: oracle integrates the closed-form
  // symbol against the exact gaussian Fourier transform
  const VecR w = vec2(1.0, -0.6);
  const VecR x0 = vec2(0.4, 0.55);
  const real sigma = 0.1;
  RealspaceConfig cfg;
  cfg.tol = 1e-5;
  cfg.rel_tol = 1e-7;
  for (real s : {0.25, 0.7}) {
    const KernelSpec k = kernel_fractional(2, s);
    const LameConstants lc = derive_lame_constants(2, s);
    const SmoothProbe u = probe_gaussian(w, x0, sigma);
    const std::clock_t t0 = std::clock();
    real worst = 0.0;
    for (const VecR& off :
         {vec2(0.0, 0.0), vec2(0.07, -0.04), vec2(-0.12, 0.09)}) {
      const VecR x = VecR(x0 + off);
      const RealspaceResult r = apply_realspace(u, x, k, cfg);
      const VecR want = gaussian_lame_oracle(w, x0, sigma, s, lc, x);
      const real err = (r.value - want).cwiseAbs().maxCoeff() /
                       std::max(want.norm(), 1.0);
      worst = std::max(worst, err);
      CHECK(err <= 2e-4);
    }
    std::printf("  [gaussian s=%.2f] rel err %.2e (%.2f s)\n", s, worst,
                double(std::clock() - t0) / CLOCKS_PER_SEC);
    std::fflush(stdout);
  }
}

TEST_CASE("refinement tightens the quadrature monotonically") {
  const KernelSpec k = kernel_band2(2, 0.75);
  const SmoothProbe u =
      one_mode(2, vec2(1.0, 0.5), vec2(0.8, -0.3), vec2(0.2, 0.6));
  const VecR x = vec2(0.3, 0.7);
  const SymbolMatrix m = symbol_general(vec2(1.0, 0.5), k);
  const VecR want = mode_oracle(m, vec2(0.8, -0.3), vec2(0.2, 0.6),
                                vec2(1.0, 0.5), x);

  // panel-level marching drives the two-level annulus agreement down; the
  // total error is dominated by the certified far-field cutoff, so it is
  // checked against the certificate, not against the level
  real prev_diff = 0.0;
  for (int base = 0; base <= 2; ++base) {
    RealspaceConfig cfg;
    cfg.tol = 2e-3;
    cfg.rel_tol = 1e9;  // accept the first two-level comparison
    cfg.base_level = base;
    const RealspaceResult r = apply_realspace(u, x, k, cfg);
    CHECK(r.level == base + 1);
    const real err = (r.value - want).cwiseAbs().maxCoeff();
    CHECK(err <= r.certified);
    std::printf("  [refine base=%d] diff %.3e err %.3e cert %.3e\n", base,
                r.refine_diff, err, r.certified);
    std::fflush(stdout);
    if (base > 0) CHECK(r.refine_diff < prev_diff);
    prev_diff = r.refine_diff;
  }

  // budget marching is the refinement that moves the true error: tighter
  // certificates push the cutoff out and the measured error follows down
  real prev_err = 1e300;
  for (real tol : {1e-2, 1e-3, 1e-4}) {
    RealspaceConfig cfg;
    cfg.tol = tol;
    cfg.rel_tol = 1e-6;
    const RealspaceResult r = apply_realspace(u, x, k, cfg);
    const real err = (r.value - want).cwiseAbs().maxCoeff();
    std::printf("  [refine tol=%.0e] err %.3e cert %.3e R %.0f\n", tol, err,
                r.certified, r.r_outer);
    std::fflush(stdout);
    CHECK(err <= r.certified);
    CHECK(err < prev_err);
    prev_err = err;
  }
}

TEST_CASE("spectral application diagonalizes over lattice modes") {
  const GridSpec g = make_grid(2, {16, 16}, {1.0, 1.0});
  const KernelSpec k = kernel_band2(2, 0.5);
  const SymbolField table = tabulate_symbol(g, k);

  const VecR kv = vec2(3.0, 1.0);
  const VecR ac = vec2(0.7, -0.4), as = vec2(0.1, 0.9);
  const SmoothProbe u = one_mode(2, kv, ac, as);
  const VectorField uf = sample_probe(u, g);

  const SymbolMatrix m = symbol_general(kv, k);
  VectorField lu = apply_spectral(uf, table, 0.0);
  for (long f = 0; f < g.total(); ++f) {
    const std::array<int, 3> idx = g.multi(f);
    const VecR x = vec2(idx[0] / 16.0, idx[1] / 16.0);
    const VecR want = mode_oracle(m, ac, as, kv, x);
    for (int c = 0; c < 2; ++c)
      CHECK(std::abs(lu.at(c, f) - want[c]) <= 1e-6 * (1.0 + want.norm()));
  }

  // shift: output gains lambda u exactly
  const VectorField lu2 = apply_spectral(uf, table, 0.7);
  for (long f = 0; f < g.total(); ++f)
    for (int c = 0; c < 2; ++c)
      CHECK(std::abs(lu2.at(c, f) - lu.at(c, f) - 0.7 * uf.at(c, f)) <= 1e-10);

  // linearity and translation equivariance on random band-limited data
  const VectorField a = random_band_limited(g, 2, 4, 11);
  const VectorField b = random_band_limited(g, 2, 4, 12);
  VectorField combo = make_field(g, 2);
  for (std::size_t i = 0; i < combo.data.size(); ++i)
    combo.data[i] = 2.0 * a.data[i] - 0.5 * b.data[i];
  const VectorField lc = apply_spectral(combo, table, 0.3);
  const VectorField la = apply_spectral(a, table, 0.3);
  const VectorField lb = apply_spectral(b, table, 0.3);
  for (std::size_t i = 0; i < lc.data.size(); ++i)
    CHECK(std::abs(lc.data[i] - 2.0 * la.data[i] + 0.5 * lb.data[i]) <= 1e-10);

  VectorField shifted = make_field(g, 2);
  for (long f = 0; f < g.total(); ++f) {
    const std::array<int, 3> idx = g.multi(f);
    const long src = g.flat({(idx[0] + 5) % 16, (idx[1] + 9) % 16, 0});
    for (int c = 0; c < 2; ++c) shifted.at(c, f) = a.at(c, src);
  }
  const VectorField ls = apply_spectral(shifted, table, 0.3);
  for (long f = 0; f < g.total(); ++f) {
    const std::array<int, 3> idx = g.multi(f);
    const long src = g.flat({(idx[0] + 5) % 16, (idx[1] + 9) % 16, 0});
    for (int c = 0; c < 2; ++c)
      CHECK(std::abs(ls.at(c, f) - la.at(c, src)) <= 1e-10);
  }

  // rejections
  const GridSpec g2 = make_grid(2, {8, 8}, {1.0, 1.0});
  CHECK_THROWS_AS(apply_spectral(random_band_limited(g2, 2, 2, 1), table, 0.0),
                  config_error);
  CHECK_THROWS_AS(apply_spectral(uf, table, -1.0), config_error);
}

TEST_CASE("fractional laplacian composes and scales modes") {
  const GridSpec g = make_grid(2, {16, 16}, {1.0, 1.0});
  const VectorField u = random_band_limited(g, 2, 5, 99);

  const VectorField once = apply_fraclap(u, 0.6);
  const VectorField twice = apply_fraclap(apply_fraclap(u, 0.3), 0.3);
  CHECK(field_close(once, twice, 1e-12));

  const SmoothProbe p = one_mode(2, vec2(2.0, -3.0), vec2(0.5, 0.1),
                                 vec2(-0.2, 0.7));
  const VectorField pf = sample_probe(p, g);
  const VectorField lp = apply_fraclap(pf, 0.4);
  const real fac = std::pow(two_pi * std::sqrt(13.0), 0.8);
  for (std::size_t i = 0; i < pf.data.size(); ++i)
    CHECK(std::abs(lp.data[i] - fac * pf.data[i]) <= 1e-10 * fac);

  // constant fields sit in the kernel of the operator
  VectorField cst = make_field(g, 2);
  for (long f = 0; f < g.total(); ++f) cst.at(0, f) = 3.5;
  const VectorField lc = apply_fraclap(cst, 0.6);
  for (real v : lc.data) CHECK(std::abs(v) <= 1e-12);

  CHECK_THROWS_AS(apply_fraclap(u, 0.0), config_error);
  CHECK_THROWS_AS(apply_fraclap(u, 1.0), config_error);
}

TEST_CASE("fractional lame eigenactions split along the frequency") {
  const GridSpec g = make_grid(2, {16, 16}, {1.0, 1.0});
  const real s = 0.5;
  const LameConstants lc = derive_lame_constants(2, s);

  // gradient mode: u parallel to khat
  const VecR kv = vec2(3.0, 4.0);
  const VecR kh = VecR(kv / kv.norm());
  const SmoothProbe grad = one_mode(2, kv, kh, VecR(0.3 * kh));
  const VectorField gf = sample_probe(grad, g);
  const VectorField lg = apply_lame_riesz(gf, lc);
  const real fg = std::pow(two_pi * 5.0, 2.0 * s) * (lc.ell1 + *lc.ell2);
  for (std::size_t i = 0; i < gf.data.size(); ++i)
    CHECK(std::abs(lg.data[i] - fg * gf.data[i]) <= 1e-9 * fg);

  // divergence-free mode: u perpendicular to khat
  const VecR kp = vec2(-kh[1], kh[0]);
  const SmoothProbe div0 = one_mode(2, kv, kp, VecR(-0.6 * kp));
  const VectorField df = sample_probe(div0, g);
  const VectorField ld = apply_lame_riesz(df, lc);
  const real fd = std::pow(two_pi * 5.0, 2.0 * s) * lc.ell1;
  for (std::size_t i = 0; i < df.data.size(); ++i)
    CHECK(std::abs(ld.data[i] - fd * df.data[i]) <= 1e-9 * fd);

  // agreement with the tabulated constant-profile kernel
  const KernelSpec k = kernel_fractional(2, s);
  const SymbolField table = tabulate_symbol(g, k);
  const VectorField u = random_band_limited(g, 2, 5, 321);
  CHECK(rel_l2(apply_lame_riesz(u, lc), apply_spectral(u, table, 0.0)) <=
        1e-5);

  // one dimension reduces to the scalar fractional laplacian times ell1
  const GridSpec g1 = make_grid(1, {32}, {1.0});
  const LameConstants lc1 = derive_lame_constants(1, 0.3);
  const VectorField u1 = random_band_limited(g1, 1, 9, 7);
  const VectorField a1 = apply_lame_riesz(u1, lc1);
  VectorField b1 = apply_fraclap(u1, 0.3);
  for (real& v : b1.data) v *= lc1.ell1;
  CHECK(field_close(a1, b1, 1e-12));

  CHECK_THROWS_AS(apply_lame_riesz(u1, lc), config_error);
}

TEST_CASE("even kernels give a symmetric operator") {
  // real-space route: a pure cosine mode must produce no sine response
  // (equivalently the symbol is real, hence the operator self-adjoint)
  const KernelSpec k = kernel_band2(2, 0.75);
  const VecR kv = vec2(1.0, 1.0);
  const SmoothProbe u = one_mode(2, kv, vec2(1.0, 0.4), vec2(0.0, 0.0));
  RealspaceConfig cfg;
  cfg.tol = 1e-4;
  cfg.rel_tol = 1e-6;
  // phase zero and phase pi/2 points
  const RealspaceResult at0 = apply_realspace(u, vec2(0.0, 0.0), k, cfg);
  const RealspaceResult atq = apply_realspace(u, vec2(0.125, 0.125), k, cfg);
  CHECK(atq.value.norm() <= 1e-4 * at0.value.norm());

  // spectral route: dot-product symmetry on random band-limited fields
  const GridSpec g = make_grid(2, {16, 16}, {1.0, 1.0});
  const SymbolField table = tabulate_symbol(g, k);
  const VectorField a = random_band_limited(g, 2, 5, 41);
  const VectorField b = random_band_limited(g, 2, 5, 42);
  const VectorField la = apply_spectral(a, table, 0.0);
  const VectorField lb = apply_spectral(b, table, 0.0);
  real lab = 0.0, alb = 0.0, nrm = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    lab += la.data[i] * b.data[i];
    alb += a.data[i] * lb.data[i];
    nrm += la.data[i] * la.data[i];
  }
  CHECK(std::abs(lab - alb) <= 1e-10 * std::max(std::sqrt(nrm), 1.0));
}

TEST_CASE("commutation residuals isolate quadrature error") {
  const GridSpec g = make_grid(2, {64, 64}, {1.0, 1.0});
  const KernelSpec k = kernel_band2(2, 0.75);

  // purely spectral: both compositions are diagonal, residual at roundoff
  {
    const VectorField u = random_band_limited(g, 2, 10, 2024);
    CommutationConfig cfg;
    const CommutationResult r = commutation_residual(u, k, cfg);
    CHECK(r.fraclap <= 1e-12);
    CHECK(r.convolution <= 1e-12);
  }

  // all-pass filter: convolution branch still does a full transform cycle
  {
    const VectorField u = random_band_limited(g, 2, 8, 77);
    CommutationConfig cfg;
    cfg.filter_k0 = 0.0;
    CHECK(commutation_residual(u, k, cfg).convolution <= 1e-12);
    cfg.filter_k0 = 3.0;
    CHECK(commutation_residual(u, k, cfg).convolution <= 1e-12);
  }

  // real-space route on a single-mode probe: the two quadrature builds see
  // amplitudes scaled by the fractional-laplacian factor, so their adaptive
  // meshes differ slightly and the residual measures that sensitivity
  {
    const SmoothProbe p =
        one_mode(2, vec2(1.0, 1.0), vec2(0.9, -0.2), vec2(0.3, 0.5));
    const VectorField u = sample_probe(p, g);
    CommutationConfig cfg;
    cfg.realspace = true;
    cfg.rs = RealspaceConfig{3e-3, 1e-6, 4, 0};
    const std::clock_t t0 = std::clock();
    const CommutationResult r = commutation_residual(u, k, cfg);
    std::printf("  [commutation realspace] fraclap %.2e (%.2f s)\n", r.fraclap,
                double(std::clock() - t0) / CLOCKS_PER_SEC);
    std::fflush(stdout);
    CHECK(r.fraclap <= 1e-3);
    CHECK(r.convolution <= 1e-12);
  }

  // aliased fields are rejected before they can contaminate the test
  {
    const VectorField u = random_band_limited(g, 2, 28, 5);
    CHECK_THROWS_AS(commutation_residual(u, k, {}), config_error);
  }
}

TEST_CASE("fields convert to probes and back exactly") {
  const GridSpec g = make_grid(2, {16, 16}, {1.0, 1.0});
  const VectorField u = random_band_limited(g, 2, 5, 1234);
  const SmoothProbe p = probe_from_field(u);
  const VectorField back = sample_probe(p, g);
  CHECK(field_close(u, back, 1e-12));

  // hand-built probe round-trips through its own samples
  const SmoothProbe hand = probe_trig(
      2, {vec2(0.0, 0.0), vec2(1.0, 2.0), vec2(8.0, 0.0)},
      {vec2(0.5, -0.1), vec2(0.3, 0.9), vec2(0.2, 0.0)},
      {vec2(0.0, 0.0), vec2(-0.7, 0.4), vec2(0.0, 0.1)});
  const VectorField hf = sample_probe(hand, g);
  const SmoothProbe rec = probe_from_field(hf);
  const VectorField rf = sample_probe(rec, g);
  CHECK(field_close(hf, rf, 1e-12));

  // three dimensions with an anisotropic box
  const GridSpec g3 = make_grid(3, {8, 8, 8}, {1.0, 2.0, 0.5});
  const VectorField u3 = random_band_limited(g3, 3, 3, 55);
  CHECK(field_close(u3, sample_probe(probe_from_field(u3), g3), 1e-12));

  // component mismatch is rejected
  VectorField scal = make_field(g, 1);
  CHECK_THROWS_AS(probe_from_field(scal), config_error);
}

TEST_CASE("invalid inputs are rejected with configuration errors") {
  MatR A(2, 2);
  A << 1.0, 0.2, 0.2, 0.5;  // symmetric part present
  const SmoothProbe sym = probe_affine(A, vec2(0.0, 0.0));
  const KernelSpec k = kernel_band2(2, 0.25);
  CHECK_THROWS_AS(apply_realspace(sym, vec2(0.1, 0.1), k), config_error);

  // the same probe is admissible above s = 1/2
  const KernelSpec k2 = kernel_band2(2, 0.75);
  const RealspaceResult r = apply_realspace(sym, vec2(0.1, 0.1), k2);
  CHECK(r.value.cwiseAbs().maxCoeff() <= 1e-10);  // linear fields annihilate

  // an s = 1/2 kernel whose first moment does not cancel is rejected by the
  // gate even if the struct is assembled by hand (a dipole profile has a
  // nonvanishing first angular moment; admissible below 1/2 only)
  ProfileSpec dipole;
  dipole.kind = ProfileSpec::Kind::harmonic2d;
  dipole.c0 = 1.5;
  dipole.ck = {0.5};
  KernelSpec bad = make_kernel(2, 0.25, 1.0, 2.0, dipole, RadialSpec{});
  bad.s = 0.5;
  const SmoothProbe u = one_mode(2, vec2(1.0, 0.0), vec2(1.0, 0.0),
                                 vec2(0.0, 0.0));
  CHECK_THROWS_AS(apply_realspace(u, vec2(0.1, 0.1), bad), config_error);

  CHECK_THROWS_AS(probe_gaussian(vec2(1.0, 0.0), vec2(0.0, 0.0), 0.0),
                  config_error);
  CHECK_THROWS_AS(probe_gaussian(vec2(1.0, 0.0), vec3(0.0, 0.0, 0.0), 0.1),
                  config_error);
  CHECK_THROWS_AS(probe_trig(2, {vec2(1.0, 0.0)}, {}, {}), config_error);
  CHECK_THROWS_AS(probe_affine(MatR::Zero(2, 3), vec2(0.0, 0.0)),
                  config_error);

  // probe/kernel dimension mismatch
  CHECK_THROWS_AS(apply_realspace(u, vec2(0.1, 0.1), kernel_band2(3, 0.25)),
                  config_error);

  // commutation on a mismatched grid dimension
  const GridSpec g1 = make_grid(1, {16}, {1.0});
  const VectorField u1 = random_band_limited(g1, 1, 4, 9);
  CHECK_THROWS_AS(commutation_residual(u1, k, {}), config_error);
}
