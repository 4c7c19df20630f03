#include "nonlocal/norms.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace nonlocal {

namespace {

void check_field(const VectorField& f) {
  if (f.grid.d < 1 || f.grid.d > 3 || f.components < 1)
    throw config_error("norm needs a populated field on a 1-, 2- or 3-d grid");
  if (f.data.size() != std::size_t(f.components) * f.grid.total())
    throw config_error("field storage does not match its grid");
  for (std::size_t i = 0; i < f.data.size(); ++i)
    if (!std::isfinite(f.data[i]))
      throw config_error("field has a non-finite entry at flat index " +
                         std::to_string(i));
}

// Pointwise Euclidean lengths across components.
std::vector<real> lengths(const VectorField& f) {
  const long tot = f.grid.total();
  std::vector<real> len(tot);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < tot; ++i) {
    real s2 = 0.0;
    for (int c = 0; c < f.components; ++c) {
      const real v = f.at(c, i);
      s2 += v * v;
    }
    len[i] = std::sqrt(s2);
  }
  return len;
}

real lp_of_lengths(const std::vector<real>& len, real p, real cellvol) {
  real peak = 0.0;
  for (real v : len) peak = std::max(peak, v);
  if (peak == 0.0) return 0.0;
  std::vector<real> terms(len.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < long(len.size()); ++i)
    terms[i] = std::pow(len[i] / peak, p);
  return peak * std::pow(pairwise_sum(terms) * cellvol, 1.0 / p);
}

// F^{-1}[ (c0 + 4 pi^2 |xi|^2)^s u^ ] with c0 = 1 or 0.
VectorField bessel_filter(const VectorField& f, real s, real c0) {
  SpectralField sp = forward_transform(f);
  const long tot = f.grid.total();
  std::vector<real> mult(tot);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < tot; ++i) {
    const VecR xi = f.grid.frequency(i);
    mult[i] = std::pow(c0 + (two_pi * xi).squaredNorm(), s);
  }
  for (int c = 0; c < sp.components; ++c)
    for (long i = 0; i < tot; ++i) sp.at(c, i) *= mult[i];
  return inverse_transform(sp);
}

real weighted_l1(const VectorField& f, real s) {
  const GridSpec& g = f.grid;
  const long tot = g.total();
  const std::vector<real> len = lengths(f);
  std::vector<real> terms(tot);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < tot; ++i) {
    const auto idx = g.multi(i);
    real dist2 = 0.0;
    for (int a = 0; a < g.d; ++a) {
      const real x = idx[a] * (g.box[a] / g.n[a]) - 0.5 * g.box[a];
      dist2 += x * x;
    }
    const real psi = 1.0 / (1.0 + std::pow(std::sqrt(dist2), g.d + 2.0 * s));
    terms[i] = len[i] * psi;
  }
  return pairwise_sum(terms) * g.cell_volume();
}

}  // namespace

real norm(const VectorField& field, const NormConfig& cfg) {
  if (!(cfg.p > 1.0)) throw config_error("norm exponent p must exceed 1");
  check_field(field);
  switch (cfg.variant) {
    case NormVariant::lp:
      return lp_of_lengths(lengths(field), cfg.p, field.grid.cell_volume());
    case NormVariant::hs_bessel:
    case NormVariant::hs_seminorm: {
      if (!(cfg.s >= 0.0))
        throw config_error("spectral norms need a nonnegative order s");
      const real c0 = cfg.variant == NormVariant::hs_bessel ? 1.0 : 0.0;
      const VectorField w = bessel_filter(field, cfg.s, c0);
      return lp_of_lengths(lengths(w), cfg.p, field.grid.cell_volume());
    }
    case NormVariant::weighted_l1psi:
      if (!(cfg.s >= 0.0))
        throw config_error("the psi weight needs a nonnegative order s");
      return weighted_l1(field, cfg.s);
  }
  throw config_error("unknown norm variant");
}

std::string kernel_label(const KernelSpec& k) {
  const char* prof = "constant";
  switch (k.profile.kind) {
    case ProfileSpec::Kind::constant: prof = "constant"; break;
    case ProfileSpec::Kind::harmonic2d: prof = "harmonic"; break;
    case ProfileSpec::Kind::zonal: prof = "zonal"; break;
    case ProfileSpec::Kind::cone: prof = "cone"; break;
  }
  const char* rad =
      k.radial.kind == RadialSpec::Kind::logosc ? "logosc" : "plain";
  char buf[160];
  std::snprintf(buf, sizeof buf, "d%d s%.6g %s/%s band[%.6g,%.6g]", k.d, k.s,
                prof, rad, k.alpha1, k.alpha2);
  return buf;
}

namespace {

// Per-mode multipliers of the four compared operators.
struct ModeOps {
  std::vector<MatR> lame;
  std::vector<MatC> full;
  std::vector<real> riesz;
  std::vector<cplx> scalar;
};

ModeOps build_mode_ops(const GridSpec& g, const KernelSpec& k,
                       const QuadConfig& q) {
  const LameConstants consts = derive_lame_constants(k.d, k.s, q);
  const SymbolField table = tabulate_symbol(g, k, q);
  const long tot = g.total();
  ModeOps ops;
  ops.lame.resize(tot);
  ops.full.resize(tot);
  ops.riesz.resize(tot);
  ops.scalar.resize(tot);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < tot; ++i) {
    const VecR xi = g.frequency(i);
    ops.lame[i] = symbol_lame(xi, consts);
    ops.full[i] = table.at(i);
    ops.riesz[i] = std::pow(two_pi * xi.norm(), 2.0 * k.s);
    ops.scalar[i] = table.at(i).trace();
  }
  return ops;
}

// u^ -> multiplier(u^) -> real field, for one sample and one operator.
template <class Apply>
VectorField apply_multiplier(const SpectralField& sp, int d, Apply&& app) {
  SpectralField out = make_spectral(sp.grid, d);
  const long tot = sp.grid.total();
  VecC w(d);
  for (long i = 0; i < tot; ++i) {
    for (int c = 0; c < d; ++c) w[c] = sp.at(c, i);
    const VecC v = app(i, w);
    for (int c = 0; c < d; ++c) out.at(c, i) = v[c];
  }
  return inverse_transform(out);
}

}  // namespace

EstimateReport norm_equivalence_report(const KernelSpec& k, real p,
                                       const EnsembleConfig& ens,
                                       const QuadConfig& q) {
  if (!(p > 1.0)) throw config_error("norm exponent p must exceed 1");
  if (ens.count < 1)
    throw config_error("ensemble must contain at least one sample");
  if (ens.grid.d != k.d)
    throw config_error("ensemble grid and kernel dimensions disagree");
  const GridSpec& g = ens.grid;
  const int d = k.d;
  const ModeOps ops = build_mode_ops(g, k, q);

  static const char* names[4] = {"lame", "op", "riesz", "scalar"};
  static const int px[6] = {0, 0, 0, 1, 1, 2};
  static const int py[6] = {1, 2, 3, 2, 3, 3};

  EstimateReport rep;
  rep.estimate = "norm-equivalence";
  rep.kernel = kernel_label(k);
  rep.d = d;
  rep.s = k.s;
  rep.alpha1 = k.alpha1;
  rep.alpha2 = k.alpha2;
  rep.grid = g;
  rep.p = p;
  rep.lambda = 0.0;
  rep.seed = ens.seed;

  const NormConfig ncfg{p, k.s, NormVariant::lp};
  real base_max[12];
  real full_max[12];
  std::fill(std::begin(base_max), std::end(base_max), 0.0);
  std::fill(std::begin(full_max), std::end(full_max), 0.0);

  for (int i = 0; i < 2 * ens.count; ++i) {
    const std::uint64_t sseed = ensemble_seed(ens.seed, i);
    const VectorField u = random_band_limited(g, d, ens.kmax, sseed);
    const SpectralField sp = forward_transform(u);

    real nrm[4];
    nrm[0] = norm(apply_multiplier(sp, d,
                                   [&](long f, const VecC& w) -> VecC {
                                     return ops.lame[f].cast<cplx>() * w;
                                   }),
                  ncfg);
    nrm[1] = norm(apply_multiplier(
                      sp, d,
                      [&](long f, const VecC& w) -> VecC {
                        return ops.full[f] * w;
                      }),
                  ncfg);
    nrm[2] = norm(apply_multiplier(sp, d,
                                   [&](long f, const VecC& w) -> VecC {
                                     return ops.riesz[f] * w;
                                   }),
                  ncfg);
    nrm[3] = norm(apply_multiplier(sp, d,
                                   [&](long f, const VecC& w) -> VecC {
                                     return ops.scalar[f] * w;
                                   }),
                  ncfg);
    for (int a = 0; a < 4; ++a) {
      if (!std::isfinite(nrm[a]))
        throw solver_error("equivalence ensemble produced a non-finite norm");
      if (!(nrm[a] > 0.0))
        throw config_error("degenerate ensemble sample: zero field");
    }

    for (int pr = 0; pr < 6; ++pr) {
      const real fwd = nrm[px[pr]] / nrm[py[pr]];
      const real rev = nrm[py[pr]] / nrm[px[pr]];
      const real vals[2] = {fwd, rev};
      const std::string labs[2] = {
          std::string(names[px[pr]]) + "/" + names[py[pr]],
          std::string(names[py[pr]]) + "/" + names[px[pr]]};
      for (int dir = 0; dir < 2; ++dir) {
        const int slot = 2 * pr + dir;
        rep.ratio_samples.push_back(vals[dir]);
        rep.sample_labels.push_back(labs[dir]);
        if (vals[dir] > rep.ratio_max) {
          rep.ratio_max = vals[dir];
          rep.argmax_seed = sseed;
        }
        if (i < ens.count) base_max[slot] = std::max(base_max[slot], vals[dir]);
        full_max[slot] = std::max(full_max[slot], vals[dir]);
      }
    }
  }

  rep.doubling_change = 0.0;
  for (int slot = 0; slot < 12; ++slot) {
    const real change = (full_max[slot] - base_max[slot]) / base_max[slot];
    rep.doubling_change = std::max(rep.doubling_change, change);
  }
  rep.doubling_stable = rep.doubling_change < 0.2;
  return rep;
}

}  // namespace nonlocal
