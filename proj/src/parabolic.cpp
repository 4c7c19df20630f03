#include "nonlocal/parabolic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "nonlocal/operators.hpp"
#include "nonlocal/quadrature.hpp"

namespace nonlocal {

namespace {

bool same_grid(const GridSpec& a, const GridSpec& b) {
  if (a.d != b.d) return false;
  for (int k = 0; k < a.d; ++k)
    if (a.n[k] != b.n[k] || a.box[k] != b.box[k]) return false;
  return true;
}

std::string fmt_short(real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fmt_vec(const VecR& v) {
  std::string s = "(";
  for (int a = 0; a < v.size(); ++a) {
    if (a) s += ", ";
    s += fmt_short(v(a));
  }
  return s + ")";
}

// E = exp(-h A) and Phi = A^{-1} (I - E) for A = symbol + lambda I.  Phi is
// evaluated by the phi_1 series when h A is small (covers the singular
// lambda = 0 zero mode, where Phi = h I exactly) and by a direct solve
// otherwise.
struct Propagator {
  MatC E;
  MatC Phi;
};

Propagator make_propagator(const MatC& symbol, real lambda, real h) {
  const int d = int(symbol.rows());
  MatC a = symbol;
  for (int c = 0; c < d; ++c) a(c, c) += lambda;
  Propagator p;
  p.E = heat_kernel_matrix(h, symbol, lambda);
  const real na = h * a.cwiseAbs().maxCoeff() * d;
  if (na <= 1e-4) {
    MatC term = MatC::Identity(d, d);
    MatC acc = MatC::Identity(d, d);
    real fact = 1.0;
    for (int k = 1; k <= 6; ++k) {
      term = MatC(term * a) * (-h);
      fact *= real(k + 1);
      acc += term / fact;
    }
    p.Phi = acc * h;
  } else {
    const MatC rhs = MatC::Identity(d, d) - p.E;
    p.Phi = a.partialPivLu().solve(rhs);
  }
  return p;
}

// Adaptive bisection on Gauss-Legendre panels; the integrands here are
// smooth except for one kink, so convergence is quick.
real adapt_integral(const std::function<real(real)>& f, real a, real b,
                    real tol, int depth) {
  const GLRule& rule = gl_rule(16);
  const real whole = integrate_gl(f, a, b, rule);
  const real mid = 0.5 * (a + b);
  const real split =
      integrate_gl(f, a, mid, rule) + integrate_gl(f, mid, b, rule);
  if (std::abs(whole - split) <= tol || depth >= 24) return split;
  return adapt_integral(f, a, mid, 0.5 * tol, depth + 1) +
         adapt_integral(f, mid, b, 0.5 * tol, depth + 1);
}

void check_time_grid(const TimeGrid& tg, const char* who) {
  if (!(tg.T > 0.0) || !std::isfinite(tg.T))
    throw config_error(std::string(who) + ": horizon T must be positive");
  if (tg.steps < 1)
    throw config_error(std::string(who) + ": need at least one time step");
}

}  // namespace

MatC heat_kernel_matrix(real t, const MatC& symbol, real lambda) {
  if (!(t >= 0.0) || !std::isfinite(t))
    throw config_error("heat_kernel_matrix: time must be nonnegative");
  if (lambda < 0.0)
    throw config_error("heat_kernel_matrix: negative zeroth-order shift");
  const int d = int(symbol.rows());
  if (d < 1 || d > 3 || symbol.cols() != d)
    throw config_error("heat_kernel_matrix: symbol block must be d x d");

  MatC a = symbol;
  for (int c = 0; c < d; ++c) a(c, c) += lambda;
  const real scale = std::max(a.cwiseAbs().maxCoeff(), 1.0);

  MatC w;
  bool done = false;
  if (d == 1) {
    w = MatC(1, 1);
    w(0, 0) = std::exp(-t * a(0, 0));
    done = true;
  } else if (a.imag().cwiseAbs().maxCoeff() <= 1e-13 * scale) {
    // even-kernel block: real symmetric, spectral path is exact to roundoff
    Eigen::SelfAdjointEigenSolver<MatR> es(MatR(a.real()));
    MatR wr = es.eigenvectors() *
              (-t * es.eigenvalues().array()).exp().matrix().asDiagonal() *
              es.eigenvectors().transpose();
    w = wr.cast<cplx>();
    done = true;
  } else {
    Eigen::ComplexEigenSolver<MatC> es(a);
    if (es.info() == Eigen::Success) {
      const MatC v = es.eigenvectors();
      Eigen::JacobiSVD<MatC> sv(v);
      const real smin = sv.singularValues()(d - 1);
      const real smax = sv.singularValues()(0);
      if (smin > 0.0 && smax / smin < 1e4) {
        const MatC vinv = v.inverse();
        const MatC recon = v * es.eigenvalues().asDiagonal() * vinv;
        if ((recon - a).cwiseAbs().maxCoeff() <= 1e-10 * scale) {
          VecC ev(d);
          for (int k = 0; k < d; ++k)
            ev(k) = std::exp(-t * es.eigenvalues()(k));
          w = v * ev.asDiagonal() * vinv;
          done = w.allFinite();
        }
      }
    }
    if (!done) {
      // defective or ill-conditioned eigenbasis: scaling and squaring
      w = MatC(a * (-t)).exp();
      done = w.allFinite();
    }
    if (!done)
      throw solver_error("heat_kernel_matrix: matrix exponential failed");
  }

  Eigen::JacobiSVD<MatC> svw(w);
  const real bound = std::exp(-t * lambda);
  if (svw.singularValues()(0) > bound * (1.0 + 1e-10) + 1e-12)
    throw solver_error(
        "heat_kernel_matrix: propagator norm " +
        fmt_short(svw.singularValues()(0)) + " exceeds the contraction bound " +
        fmt_short(bound) + "; the block is not dissipative");
  return w;
}

HeatKernelEval heat_kernel_lame(real t, const VecR& xi, real s,
                                const LameConstants& c, real alpha1) {
  if (!(t >= 0.0) || !std::isfinite(t))
    throw config_error("heat_kernel_lame: time must be nonnegative");
  if (!(s > 0.0 && s < 1.0))
    throw config_error("heat_kernel_lame: order s must lie in (0, 1)");
  if (!(alpha1 > 0.0))
    throw config_error("heat_kernel_lame: amplitude must be positive");
  const int d = int(xi.size());
  if (d != c.d)
    throw config_error("heat_kernel_lame: frequency dimension mismatch");

  HeatKernelEval out;
  out.t = t;
  out.xi = xi;
  const real rho = xi.norm();
  if (rho == 0.0) {
    out.matrix = MatC::Identity(d, d);
    return out;
  }
  const real ell2 = c.ell2 ? *c.ell2 : 0.0;
  const real wgt = std::pow(two_pi * rho, 2.0 * s);
  const real ea = std::exp(-alpha1 * c.ell1 * wgt * t);
  const real eb = std::exp(-alpha1 * (c.ell1 + ell2) * wgt * t);
  const VecR hat = xi / rho;
  MatR m = ea * MatR::Identity(d, d);
  m += (eb - ea) * (hat * hat.transpose());
  out.matrix = m.cast<cplx>();
  return out;
}

HeatKernelEval heat_kernel_general(real t, const VecR& xi,
                                   const SymbolField& table, real lambda) {
  const GridSpec& g = table.grid;
  if (int(xi.size()) != g.d)
    throw config_error("heat_kernel_general: frequency dimension mismatch");
  std::array<int, 3> idx{0, 0, 0};
  for (int a = 0; a < g.d; ++a) {
    const real mreal = xi(a) * g.box[a];
    const long m = std::lround(mreal);
    if (std::abs(mreal - real(m)) > 1e-9)
      throw config_error("heat_kernel_general: frequency " + fmt_vec(xi) +
                         " is off the lattice");
    if (2 * m > g.n[a] || 2 * m <= -g.n[a])
      throw config_error("heat_kernel_general: frequency " + fmt_vec(xi) +
                         " lies outside the resolved band");
    idx[a] = int(m >= 0 ? m : m + g.n[a]);
  }
  HeatKernelEval out;
  out.t = t;
  out.xi = xi;
  out.matrix = heat_kernel_matrix(t, table.at(g.flat(idx)), lambda);
  return out;
}

HeatBoundReport heat_kernel_time_integral_check(
    const std::vector<VecR>& xi_samples, real T, real s,
    const LameConstants& c, real alpha1) {
  if (!(T > 0.0) || !std::isfinite(T))
    throw config_error("heat_kernel_time_integral_check: T must be positive");
  if (!(s > 0.0 && s < 1.0))
    throw config_error("heat_kernel_time_integral_check: s must lie in (0, 1)");
  if (!(alpha1 > 0.0))
    throw config_error(
        "heat_kernel_time_integral_check: amplitude must be positive");
  if (xi_samples.empty())
    throw config_error("heat_kernel_time_integral_check: no sample frequencies");

  HeatBoundReport rep;
  rep.T = T;
  rep.s = s;
  rep.alpha1 = alpha1;
  const real ell2 = c.ell2 ? *c.ell2 : 0.0;
  const real slack = 1e-6;

  for (const VecR& xi : xi_samples) {
    if (int(xi.size()) != c.d)
      throw config_error(
          "heat_kernel_time_integral_check: frequency dimension mismatch");
    const real rho = xi.norm();
    const real wgt = rho > 0.0 ? std::pow(two_pi * rho, 2.0 * s) : 0.0;
    const real a = alpha1 * c.ell1 * wgt;
    const real b = alpha1 * (c.ell1 + ell2) * wgt;

    // ||W(t)||_2 = exp(-a t): a <= b, the transverse rate is the slower one
    HeatBoundRow rw;
    rw.xi = xi;
    rw.rho = rho;
    rw.bound = "kernel";
    rw.lhs = adapt_integral([a](real t) { return std::exp(-a * t); }, 0.0, T,
                            1e-10, 0);
    rw.rhs = rho <= 1.0 ? 3.0 : 3.0 / (alpha1 * c.ell1) / wgt;
    rw.pass = rw.lhs <= rw.rhs + slack;
    rep.rows.push_back(rw);

    // ||d_t W(t)||_2 = max(a exp(-a t), b exp(-b t))
    HeatBoundRow rd;
    rd.xi = xi;
    rd.rho = rho;
    rd.bound = "kernel-dt";
    rd.lhs = adapt_integral(
        [a, b](real t) {
          return std::max(a * std::exp(-a * t), b * std::exp(-b * t));
        },
        0.0, T, 1e-10, 0);
    rd.rhs = 3.0;
    rd.pass = rd.lhs <= rd.rhs + slack;
    rep.rows.push_back(rd);
  }

  for (const HeatBoundRow& row : rep.rows) {
    if (!row.pass) {
      rep.pass = false;
      if (rep.first_failure.empty())
        rep.first_failure = "xi=" + fmt_vec(row.xi) + " bound=" + row.bound +
                            " lhs=" + fmt_short(row.lhs) +
                            " rhs=" + fmt_short(row.rhs);
    }
  }
  return rep;
}

std::vector<VectorField> solve_duhamel(const std::vector<VectorField>& g,
                                       const SymbolField& table, real lambda,
                                       const TimeGrid& tg) {
  if (lambda < 0.0)
    throw config_error("solve_duhamel: lambda must be nonnegative");
  check_time_grid(tg, "solve_duhamel");
  const GridSpec& grid = table.grid;
  const bool stepping = tg.scheme == TimeGrid::Scheme::exponential_euler;
  const std::size_t expected = stepping ? std::size_t(tg.steps) : 1;
  if (g.size() != expected)
    throw config_error(
        "solve_duhamel: forcing snapshots mismatch the time grid: got " +
        std::to_string(g.size()) + ", scheme needs " +
        std::to_string(expected));
  for (const VectorField& snap : g)
    if (!same_grid(snap.grid, grid) || snap.components != grid.d)
      throw config_error("solve_duhamel: forcing is off the symbol grid");

  const long n = grid.total();
  const int d = grid.d;
  const real h = tg.h();

  std::vector<SpectralField> gh;
  gh.reserve(g.size());
  for (const VectorField& snap : g) gh.push_back(forward_transform(snap));

  std::vector<SpectralField> uh(std::size_t(tg.steps) + 1);
  for (SpectralField& sf : uh) {
    sf.grid = grid;
    sf.components = d;
    sf.coeffs.assign(std::size_t(d) * n, cplx(0.0, 0.0));
  }

  if (stepping) {
#pragma omp parallel for schedule(static)
    for (long m = 0; m < n; ++m) {
      const Propagator pr = make_propagator(table.at(m), lambda, h);
      VecC u = VecC::Zero(d);
      VecC gv(d);
      for (int j = 0; j < tg.steps; ++j) {
        for (int c = 0; c < d; ++c) gv(c) = gh[std::size_t(j)].at(c, m);
        u = pr.E * u + pr.Phi * gv;
        for (int c = 0; c < d; ++c) uh[std::size_t(j) + 1].at(c, m) = u(c);
      }
    }
  } else {
#pragma omp parallel for schedule(static)
    for (long m = 0; m < n; ++m) {
      VecC gv(d);
      for (int c = 0; c < d; ++c) gv(c) = gh[0].at(c, m);
      for (int j = 1; j <= tg.steps; ++j) {
        const Propagator pr = make_propagator(table.at(m), lambda, j * h);
        const VecC u = pr.Phi * gv;
        for (int c = 0; c < d; ++c) uh[std::size_t(j)].at(c, m) = u(c);
      }
    }
  }

  std::vector<VectorField> out;
  out.reserve(uh.size());
  for (const SpectralField& sf : uh) out.push_back(inverse_transform(sf));
  return out;
}

TrajectoryNorms parabolic_trajectory_norms(const std::vector<VectorField>& g,
                                           const SymbolField& table,
                                           real lambda, real p,
                                           const TimeGrid& tg) {
  if (!(p > 1.0) || !std::isfinite(p))
    throw config_error(
        "parabolic_trajectory_norms: exponent p must lie in (1, inf)");
  if (tg.scheme != TimeGrid::Scheme::exponential_euler)
    throw config_error(
        "parabolic_trajectory_norms: norms are defined over the stepping "
        "scheme");
  const std::vector<VectorField> u = solve_duhamel(g, table, lambda, tg);

  const GridSpec& grid = table.grid;
  const long n = grid.total();
  const int d = grid.d;
  const real h = tg.h();
  const NormConfig ncfg{p, table.s, NormVariant::lp};

  real sdt = 0.0, sri = 0.0, sop = 0.0, sid = 0.0, sdat = 0.0;
  for (int j = 0; j < tg.steps; ++j) {
    const SpectralField uj = forward_transform(u[std::size_t(j)]);
    const SpectralField gj = forward_transform(g[std::size_t(j)]);
    SpectralField ri = uj, op = uj, dt = gj;
#pragma omp parallel for schedule(static)
    for (long m = 0; m < n; ++m) {
      const VecR xi = grid.frequency(m);
      const real rho = xi.norm();
      const real r = rho > 0.0 ? std::pow(two_pi * rho, 2.0 * table.s) : 0.0;
      const MatC& sym = table.at(m);
      VecC uv(d), gv(d);
      for (int c = 0; c < d; ++c) {
        uv(c) = uj.at(c, m);
        gv(c) = gj.at(c, m);
      }
      const VecC mv = sym * uv;
      for (int c = 0; c < d; ++c) {
        ri.at(c, m) = r * uv(c);
        op.at(c, m) = mv(c);
        dt.at(c, m) = gv(c) - mv(c) - lambda * uv(c);
      }
    }
    sdt += h * std::pow(norm(inverse_transform(dt), ncfg), p);
    sri += h * std::pow(norm(inverse_transform(ri), ncfg), p);
    sop += h * std::pow(norm(inverse_transform(op), ncfg), p);
    sid += h * std::pow(norm(u[std::size_t(j)], ncfg), p);
    sdat += h * std::pow(norm(g[std::size_t(j)], ncfg), p);
  }

  TrajectoryNorms out;
  out.dt = std::pow(sdt, 1.0 / p);
  out.riesz = std::pow(sri, 1.0 / p);
  out.op = std::pow(sop, 1.0 / p);
  out.id = std::pow(sid, 1.0 / p);
  out.data = std::pow(sdat, 1.0 / p);
  return out;
}

EstimateReport estimate_ratio_parabolic(const KernelSpec& k, real lambda,
                                        real p, real T,
                                        const EnsembleConfig& ens,
                                        const QuadConfig& q) {
  if (!(p > 1.0) || !std::isfinite(p))
    throw config_error(
        "estimate_ratio_parabolic: exponent p must lie in (1, inf)");
  if (lambda < 0.0)
    throw config_error("estimate_ratio_parabolic: lambda must be nonnegative");
  if (!(T > 0.0) || !std::isfinite(T))
    throw config_error("estimate_ratio_parabolic: horizon T must be positive");
  if (ens.count < 1)
    throw config_error("ensemble must contain at least one sample");
  if (ens.grid.d != k.d)
    throw config_error("ensemble grid and kernel dimensions disagree");

  const SymbolField tab = tabulate_symbol(ens.grid, k, q);
  const int steps = 48;
  const TimeGrid tg{T, steps, TimeGrid::Scheme::exponential_euler};
  const real h = tg.h();

  EstimateReport rep;
  rep.estimate = "parabolic-apriori";
  rep.kernel = kernel_label(k);
  rep.d = k.d;
  rep.s = k.s;
  rep.alpha1 = k.alpha1;
  rep.alpha2 = k.alpha2;
  rep.grid = ens.grid;
  rep.p = p;
  rep.lambda = lambda;
  rep.seed = ens.seed;

  real base_max = 0.0;
  real full_max = 0.0;
  for (int i = 0; i < 2 * ens.count; ++i) {
    const std::uint64_t sseed = ensemble_seed(ens.seed, i);
    // a constant-in-time part plus two time harmonics, each with its own
    // random band-limited spatial amplitude
    std::array<VectorField, 5> amp;
    for (int a = 0; a < 5; ++a)
      amp[std::size_t(a)] = random_band_limited(ens.grid, k.d, ens.kmax,
                                                ensemble_seed(sseed, a));
    const std::size_t sz = amp[0].data.size();
    std::vector<VectorField> g(static_cast<std::size_t>(steps));
    for (int j = 0; j < steps; ++j) {
      const real t = j * h;
      const real c1 = std::cos(two_pi * t / T), s1 = std::sin(two_pi * t / T);
      const real c2 = std::cos(2.0 * two_pi * t / T),
                 s2 = std::sin(2.0 * two_pi * t / T);
      VectorField& gj = g[std::size_t(j)];
      gj = amp[0];
      for (std::size_t w = 0; w < sz; ++w)
        gj.data[w] += c1 * amp[1].data[w] + s1 * amp[2].data[w] +
                      c2 * amp[3].data[w] + s2 * amp[4].data[w];
    }

    const TrajectoryNorms tn = parabolic_trajectory_norms(g, tab, lambda, p, tg);
    if (!(tn.data > 0.0))
      throw config_error("degenerate ensemble sample: zero forcing");
    const real ratio = (tn.dt + tn.riesz + lambda * tn.id) / tn.data;
    const real aux = (tn.dt + tn.op + lambda * tn.id) / tn.data;
    if (!std::isfinite(ratio) || !std::isfinite(aux))
      throw solver_error(
          "estimate_ratio_parabolic: ensemble produced a non-finite ratio");
    rep.ratio_samples.push_back(ratio);
    rep.sample_labels.push_back("(dt + riesz + lambda id)/data");
    if (ratio > rep.ratio_max) {
      rep.ratio_max = ratio;
      rep.argmax_seed = sseed;
    }
    rep.aux_ratio_max = std::max(rep.aux_ratio_max, aux);
    if (i < ens.count) base_max = std::max(base_max, ratio);
    full_max = std::max(full_max, ratio);
  }
  rep.doubling_change = (full_max - base_max) / base_max;
  rep.doubling_stable = rep.doubling_change < 0.2;
  return rep;
}

}  // namespace nonlocal
