#include "nonlocal/elliptic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "nonlocal/operators.hpp"

namespace nonlocal {

namespace {

bool same_grid(const GridSpec& a, const GridSpec& b) {
  if (a.d != b.d) return false;
  for (int i = 0; i < a.d; ++i)
    if (a.n[i] != b.n[i] || a.box[i] != b.box[i]) return false;
  return true;
}

// squared Euclidean length of mode m across components
real mode_energy(const SpectralField& sp, long m) {
  real acc = 0.0;
  for (int c = 0; c < sp.components; ++c) acc += std::norm(sp.at(c, m));
  return acc;
}

std::string fmt_short(real x) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << x;
  return os.str();
}

}  // namespace

VectorField solve_direct(const VectorField& f, const SymbolField& table,
                         real lambda) {
  if (!(lambda > 0.0))
    throw config_error("solve_direct: lambda must be positive");
  if (!same_grid(f.grid, table.grid))
    throw config_error("solve_direct: field grid and symbol table disagree");
  const int d = f.grid.d;
  if (f.components != d)
    throw config_error(
        "solve_direct: field must carry one component per axis");

  const long n = f.grid.total();
  const SpectralField fh = forward_transform(f);
  SpectralField uh = make_spectral(f.grid, d);

  long bad_flat = -1;
  real bad_cond = 0.0;
#pragma omp parallel for schedule(static)
  for (long m = 0; m < n; ++m) {
    MatC a = table.at(m);
    for (int c = 0; c < d; ++c) a(c, c) += lambda;
    Eigen::JacobiSVD<MatC> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const real smax = svd.singularValues()(0);
    const real smin = svd.singularValues()(d - 1);
    const real cond =
        smin > 0.0 ? smax / smin : std::numeric_limits<real>::infinity();
    if (!(cond <= 1e12)) {
#pragma omp critical
      if (bad_flat < 0 || m < bad_flat) {
        bad_flat = m;
        bad_cond = cond;
      }
      continue;
    }
    VecC rhs(d);
    for (int c = 0; c < d; ++c) rhs(c) = fh.at(c, m);
    const VecC sol = svd.solve(rhs);
    for (int c = 0; c < d; ++c) uh.at(c, m) = sol(c);
  }
  if (bad_flat >= 0)
    throw solver_error("solve_direct: shifted symbol at mode " +
                       std::to_string(bad_flat) + " has condition " +
                       fmt_short(bad_cond) + " (limit 1e12)");
  return inverse_transform(uh);
}

int ContinuationTrace::total_iterations() const {
  int acc = 0;
  for (const ContinuationStage& st : stages) acc += st.iterations;
  return acc;
}

std::string ContinuationTrace::to_string() const {
  std::ostringstream os;
  os << "trace[";
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i) os << "; ";
    os << "tau=" << stages[i].tau << " omega=" << stages[i].omega
       << " iters=" << stages[i].iterations
       << " res=" << fmt_short(stages[i].residual);
  }
  os << "]";
  return os.str();
}

HomotopyResult solve_homotopy(const VectorField& f, const KernelSpec& base,
                              real lambda, int tau_steps, real tol,
                              const HomotopyConfig& cfg) {
  if (!(lambda > 0.0))
    throw config_error("solve_homotopy: lambda must be positive");
  if (tau_steps < 1)
    throw config_error("solve_homotopy: tau_steps must be at least 1");
  if (!(tol > 0.0) || !(tol < 1.0))
    throw config_error("solve_homotopy: tol must lie in (0, 1)");
  if (f.grid.d != base.d)
    throw config_error("solve_homotopy: field and kernel dimensions disagree");
  if (f.components != base.d)
    throw config_error(
        "solve_homotopy: field must carry one component per axis");
  if (cfg.max_iter < 1)
    throw config_error("solve_homotopy: max_iter must be at least 1");

  const GridSpec& g = f.grid;
  const int d = g.d;
  const long n = g.total();

  const LameConstants lc = derive_lame_constants(d, base.s, cfg.quad);
  const SymbolField tab = tabulate_symbol(g, base, cfg.quad);

  // The continuation base term alpha1 (1-tau) |y|^{-(d+2s)} carries no
  // (1-s) factor, so its multiplier is alpha1/(1-s) times the unit Lame one.
  const real floor_amp = base.alpha1 / (1.0 - base.s);

  std::vector<MatR> floor_b(static_cast<std::size_t>(n));
  std::vector<MatC> prec(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (long m = 0; m < n; ++m) {
    const MatR b = symbol_lame(g.frequency(m), lc, floor_amp);
    MatR shifted = b;
    for (int c = 0; c < d; ++c) shifted(c, c) += lambda;
    floor_b[m] = b;
    prec[m] = shifted.inverse().cast<cplx>();
  }

  const SpectralField fh = forward_transform(f);
  std::vector<real> rbuf(static_cast<std::size_t>(n));
  for (long m = 0; m < n; ++m) rbuf[m] = mode_energy(fh, m);
  const real fnorm = std::sqrt(pairwise_sum(rbuf));

  HomotopyResult out;
  if (fnorm == 0.0) {
    out.u = make_field(g, d);
    for (int j = 1; j <= tau_steps; ++j)
      out.trace.stages.push_back(
          {real(j) / real(tau_steps), 1.0, 0, 0.0});
    return out;
  }

  // normalized amplitude range of K against the base term; the per-mode
  // generalized spectrum of Upsilon_tau relative to Upsilon_0 lies between
  // the two stage bounds below (lambda only pulls it toward 1)
  const real r_lo =
      (1.0 - base.s) * base.profile_min * base.m_min / base.alpha1;
  const real r_hi =
      (1.0 - base.s) * base.profile_max * base.m_max / base.alpha1;

  // warm start: the exact tau = 0 solution
  SpectralField uh = make_spectral(g, d);
#pragma omp parallel for schedule(static)
  for (long m = 0; m < n; ++m) {
    VecC w(d);
    for (int c = 0; c < d; ++c) w(c) = fh.at(c, m);
    const VecC sol = prec[m] * w;
    for (int c = 0; c < d; ++c) uh.at(c, m) = sol(c);
  }

  SpectralField rh = make_spectral(g, d);
  std::vector<MatC> stage(static_cast<std::size_t>(n));

  for (int j = 1; j <= tau_steps; ++j) {
    const real tau = real(j) / real(tau_steps);
    const real q_lo = std::min(1.0, 1.0 - tau + tau * r_lo);
    const real q_hi = std::max(1.0, 1.0 - tau + tau * r_hi);
    const real omega = cfg.omega > 0.0 ? cfg.omega : 2.0 / (q_lo + q_hi);

#pragma omp parallel for schedule(static)
    for (long m = 0; m < n; ++m) {
      MatC a = tau * tab.at(m);
      a += ((1.0 - tau) * floor_b[m]).cast<cplx>();
      for (int c = 0; c < d; ++c) a(c, c) += lambda;
      stage[m] = a;
    }

    int iters = 0;
    int grew = 0;
    real rel = 0.0;
    real prev = std::numeric_limits<real>::infinity();
    while (true) {
#pragma omp parallel for schedule(static)
      for (long m = 0; m < n; ++m) {
        VecC w(d);
        for (int c = 0; c < d; ++c) w(c) = uh.at(c, m);
        VecC r(d);
        r = -(stage[m] * w);
        for (int c = 0; c < d; ++c) r(c) += fh.at(c, m);
        real acc = 0.0;
        for (int c = 0; c < d; ++c) {
          rh.at(c, m) = r(c);
          acc += std::norm(r(c));
        }
        rbuf[m] = acc;
      }
      rel = std::sqrt(pairwise_sum(rbuf)) / fnorm;
      if (rel <= tol) break;

      ContinuationStage cur{tau, omega, iters, rel};
      if (rel > prev) {
        if (++grew >= 5) {
          ContinuationTrace t = out.trace;
          t.stages.push_back(cur);
          throw convergence_error(
              "solve_homotopy: residual grew over five consecutive updates "
              "at tau=" + std::to_string(tau) + "; " + t.to_string());
        }
      } else {
        grew = 0;
      }
      if (iters >= cfg.max_iter) {
        ContinuationTrace t = out.trace;
        t.stages.push_back(cur);
        throw convergence_error(
            "solve_homotopy: stage tau=" + std::to_string(tau) +
            " missed tol=" + fmt_short(tol) + " within " +
            std::to_string(cfg.max_iter) + " iterations; " + t.to_string());
      }
      prev = rel;

#pragma omp parallel for schedule(static)
      for (long m = 0; m < n; ++m) {
        VecC r(d);
        for (int c = 0; c < d; ++c) r(c) = rh.at(c, m);
        const VecC delta = prec[m] * r;
        for (int c = 0; c < d; ++c) uh.at(c, m) += omega * delta(c);
      }
      ++iters;
    }
    out.trace.stages.push_back({tau, omega, iters, rel});
  }

  out.u = inverse_transform(uh);
  return out;
}

EstimateReport estimate_ratio_elliptic(const KernelSpec& k, real lambda,
                                       real p, const EnsembleConfig& ens,
                                       const QuadConfig& q) {
  if (!(p > 1.0) || !std::isfinite(p))
    throw config_error(
        "estimate_ratio_elliptic: exponent p must lie in (1, inf)");
  if (!(lambda > 0.0))
    throw config_error("estimate_ratio_elliptic: lambda must be positive");
  if (ens.count < 1)
    throw config_error("ensemble must contain at least one sample");
  if (ens.grid.d != k.d)
    throw config_error("ensemble grid and kernel dimensions disagree");

  const SymbolField tab = tabulate_symbol(ens.grid, k, q);
  const NormConfig ncfg{p, k.s, NormVariant::lp};

  EstimateReport rep;
  rep.estimate = "elliptic-apriori";
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
    const VectorField f = random_band_limited(ens.grid, k.d, ens.kmax, sseed);
    const real nf = norm(f, ncfg);
    if (!(nf > 0.0))
      throw config_error("degenerate ensemble sample: zero field");
    const VectorField u = solve_direct(f, tab, lambda);
    const real nu = norm(u, ncfg);
    const real nr = norm(apply_fraclap(u, k.s), ncfg);
    const real ratio = (nr + lambda * nu) / nf;
    const real aux = lambda * nu / nf;
    if (!std::isfinite(ratio))
      throw solver_error(
          "estimate_ratio_elliptic: ensemble produced a non-finite ratio");
    if (p == 2.0 && aux > 1.0 + 1e-12)
      throw solver_error(
          "estimate_ratio_elliptic: lambda ||u||_2 exceeded ||f||_2 on the "
          "sample seeded " + std::to_string(sseed));
    rep.ratio_samples.push_back(ratio);
    rep.sample_labels.push_back("(riesz + lambda id)/data");
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
