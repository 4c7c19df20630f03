#include "nonlocal/operators.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "nonlocal/quadrature.hpp"

namespace nonlocal {

namespace {

void check_probe_dim(int d, const char* who) {
  if (d < 1 || d > 3)
    throw config_error(std::string(who) + ": dimension must be 1, 2, or 3");
}

void check_finite(const VecR& v, const char* who) {
  for (int i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      throw config_error(std::string(who) + ": non-finite entry");
}

// u(x+y) - u(x) evaluated cancellation-free (difference identities /
// expm1), so the inner panels of the singular quadrature do not lose the
// O(|y|) difference to roundoff against the O(1) field values.
VecR probe_diff(const SmoothProbe& u, const VecR& x, const VecR& y) {
  switch (u.kind) {
    case SmoothProbe::Kind::trig: {
      VecR v = VecR::Zero(u.d);
      for (std::size_t t = 0; t < u.kvec.size(); ++t) {
        const real ph = two_pi * u.kvec[t].dot(x);
        const real c = two_pi * u.kvec[t].dot(y);
        const real sh = std::sin(0.5 * c);
        const real base = ph + 0.5 * c;
        v += (-2.0 * sh) *
             (std::sin(base) * u.amp_cos[t] - std::cos(base) * u.amp_sin[t]);
      }
      return v;
    }
    case SmoothProbe::Kind::gaussian: {
      const VecR z = x - u.x0;
      const real s2 = u.sigma * u.sigma;
      const real p = -0.5 * z.squaredNorm() / s2;
      const real q = -(2.0 * z.dot(y) + y.squaredNorm()) / (2.0 * s2);
      return VecR(std::exp(p) * std::expm1(q) * u.w);
    }
    case SmoothProbe::Kind::affine:
      return VecR(u.A * y);
  }
  throw config_error("unknown probe kind");
}

// Angular discretization attached to a kernel: profile kink locations and,
// in three dimensions, the frame aligned with the profile axis.
struct AngularScheme {
  std::vector<real> arc_edges;    // d = 2: closed chain of angles
  std::vector<real> theta_edges;  // d = 3: polar segment edges in [0, pi]
  VecR a1, a2, a3;                // d = 3 frame, a3 = profile axis
};

AngularScheme make_scheme(const KernelSpec& k) {
  AngularScheme s;
  if (k.d == 2) {
    std::vector<real> bp;
    if (k.profile.kind == ProfileSpec::Kind::cone) {
      const real t0 = std::atan2(k.profile.axis[1], k.profile.axis[0]);
      const real eta = std::acos(std::clamp(k.profile.cos_half, -1.0, 1.0));
      auto push = [&](real t) {
        real w = std::fmod(t, two_pi);
        if (w < 0.0) w += two_pi;
        bp.push_back(w);
      };
      push(t0 - eta);
      push(t0 + eta);
      if (k.profile.double_sided) {
        push(t0 + pi - eta);
        push(t0 + pi + eta);
      }
      std::sort(bp.begin(), bp.end());
      bp.erase(std::unique(bp.begin(), bp.end(),
                           [](real a, real b) { return std::abs(a - b) < 1e-12; }),
               bp.end());
    }
    if (bp.empty()) {
      s.arc_edges = {0.0, two_pi};
    } else {
      s.arc_edges = bp;
      s.arc_edges.push_back(bp.front() + two_pi);
    }
    return s;
  }
  if (k.d == 3) {
    VecR ax(3);
    ax << 0.0, 0.0, 1.0;
    const bool has_axis = k.profile.kind == ProfileSpec::Kind::zonal ||
                          k.profile.kind == ProfileSpec::Kind::cone;
    if (has_axis && k.profile.axis.size() == 3 && k.profile.axis.norm() > 0.0)
      ax = VecR(k.profile.axis / k.profile.axis.norm());
    s.a3 = ax;
    VecR e(3);
    if (std::abs(ax[0]) > 0.9)
      e << 0.0, 1.0, 0.0;
    else
      e << 1.0, 0.0, 0.0;
    VecR p = VecR(e - ax.dot(e) * ax);
    s.a1 = VecR(p / p.norm());
    VecR c(3);
    c << ax[1] * s.a1[2] - ax[2] * s.a1[1], ax[2] * s.a1[0] - ax[0] * s.a1[2],
        ax[0] * s.a1[1] - ax[1] * s.a1[0];
    s.a2 = c;
    std::vector<real> bp;
    if (k.profile.kind == ProfileSpec::Kind::cone) {
      const real th = std::acos(std::clamp(k.profile.cos_half, -1.0, 1.0));
      bp.push_back(th);
      if (k.profile.double_sided) bp.push_back(pi - th);
    }
    std::sort(bp.begin(), bp.end());
    s.theta_edges.push_back(0.0);
    for (real t : bp)
      if (t > 1e-12 && t < pi - 1e-12 &&
          t - s.theta_edges.back() > 1e-12)
        s.theta_edges.push_back(t);
    s.theta_edges.push_back(pi);
    return s;
  }
  return s;  // d = 1 carries no geometry
}

// Visit sphere nodes with weights summing to the surface measure. rfs is
// the angular oscillation rate r * freq_scale of the integrand at the
// current radius; panel counts grow linearly with it and double per level.
template <class Fn>
void for_each_angular(int d, const AngularScheme& sch, real rfs, int level,
                      Fn&& fn) {
  const GLRule& g16 = gl_rule(16);
  if (d == 1) {
    VecR w(1);
    w[0] = 1.0;
    fn(w, 1.0);
    w[0] = -1.0;
    fn(w, 1.0);
    return;
  }
  if (d == 2) {
    VecR w(2);
    for (std::size_t a = 0; a + 1 < sch.arc_edges.size(); ++a) {
      const real lo = sch.arc_edges[a], hi = sch.arc_edges[a + 1];
      const real len = hi - lo;
      if (!(len > 0.0)) continue;
      const long nsub = (2L + long(len * rfs / 15.7)) << level;
      const real h = len / real(nsub);
      for (long j = 0; j < nsub; ++j) {
        const real mid = lo + (real(j) + 0.5) * h;
        const real hal = 0.5 * h;
        for (int q = 0; q < 16; ++q) {
          const real th = mid + hal * g16.x[q];
          w[0] = std::cos(th);
          w[1] = std::sin(th);
          fn(w, g16.w[q] * hal);
        }
      }
    }
    return;
  }
  VecR w(3);
  for (std::size_t a = 0; a + 1 < sch.theta_edges.size(); ++a) {
    const real lo = sch.theta_edges[a], hi = sch.theta_edges[a + 1];
    const real len = hi - lo;
    if (!(len > 0.0)) continue;
    const long nsub = (1L + long(len * rfs / 15.7)) << level;
    const real h = len / real(nsub);
    for (long j = 0; j < nsub; ++j) {
      const real mid = lo + (real(j) + 0.5) * h;
      const real hal = 0.5 * h;
      for (int q = 0; q < 16; ++q) {
        const real th = mid + hal * g16.x[q];
        const real st = std::sin(th), ct = std::cos(th);
        const long nphi = (16L + 2L * long(rfs * st)) << level;
        const real dphi = two_pi / real(nphi);
        const real wth = g16.w[q] * hal * st * dphi;
        for (long pj = 0; pj < nphi; ++pj) {
          const real phv = (real(pj) + 0.5) * dphi;
          const real cp = std::cos(phv), sp = std::sin(phv);
          for (int i = 0; i < 3; ++i)
            w[i] = ct * sch.a3[i] + st * (cp * sch.a1[i] + sp * sch.a2[i]);
          fn(w, wth);
        }
      }
    }
  }
}

// int over the sphere of w w^T a_even(w) dS
MatR even_moment(const KernelSpec& k, const AngularScheme& sch) {
  MatR m = MatR::Zero(k.d, k.d);
  for_each_angular(k.d, sch, 8.0, 3, [&](const VecR& w, real wa) {
    m += (wa * k.profile_even(w)) * (w * w.transpose());
  });
  return m;
}

// int over the sphere of w (w^T D w) a_odd(w) dS
VecR odd_moment_apply(const KernelSpec& k, const AngularScheme& sch,
                      const MatR& D) {
  VecR v = VecR::Zero(k.d);
  for_each_angular(k.d, sch, 8.0, 3, [&](const VecR& w, real wa) {
    v += (wa * k.profile_odd(w) * w.dot(D * w)) * w;
  });
  return v;
}

// int over the sphere of min(capA, q / |khat.w|) dS; the envelope of the
// per-direction radial tail bounds (plain sup vs one integration by parts).
real min_envelope(int d, real capA, real q) {
  if (!(q < capA)) return capA * sphere_area(d);
  if (d == 1) return 2.0 * q;
  if (d == 2) {
    const real c = std::clamp(q / capA, 0.0, 1.0);
    const real t0 = std::acos(c);
    const real sec = 1.0 / std::max(c, 1e-300);
    const real tn = std::sqrt(std::max(sec * sec - 1.0, 0.0));
    return 4.0 * (q * std::log(sec + tn) + (0.5 * pi - t0) * capA);
  }
  const real t0 = q / capA;
  return 4.0 * pi * (capA * t0 + q * std::log(1.0 / t0));
}

std::vector<real> radial_base_edges(real r_in, real R, real w0,
                                    bool chi_break) {
  std::vector<real> e;
  e.push_back(r_in);
  real cur = r_in;
  real width = std::max(r_in, 1e-280);
  while (cur < R) {
    width = std::min(width * 2.0, w0);
    real next = std::min(cur + width, R);
    if (chi_break && cur < 1.0 && next > 1.0) next = 1.0;
    e.push_back(next);
    cur = next;
  }
  return e;
}

// One real-space operator build: certified truncation radii, the exterior
// moment pieces, and the annulus quadrature refined until two levels agree.
// For trig probes the x dependence factors through (cos, sin) of the mode
// phases, so the quadrature is accumulated once into per-mode coefficient
// vectors and evaluating L u at a point costs O(#modes).
struct RSBuild {
  bool trig = false;
  std::vector<VecR> pc, ps;  // per-mode coefficients of the bond integral
  VecR direct;               // non-trig path: the bond integral at x
  real certified = 0.0, refine_diff = 0.0;
  int level = 0;
  real r_in = 0.0, r_out = 0.0;
};

RSBuild build_realspace(const SmoothProbe& u, const VecR& x,
                        const KernelSpec& k, const RealspaceConfig& cfg) {
  const int d = k.d;
  const real s = k.s;
  if (u.d != d) throw config_error("probe and kernel dimensions do not match");
  if (!(cfg.tol > 0.0) || !(cfg.rel_tol > 0.0))
    throw config_error("real-space quadrature tolerances must be positive");
  if (cfg.max_level < 1 || cfg.base_level < 0)
    throw config_error("real-space refinement limits are invalid");
  if (s == 0.5 && check_cancellation(k, {1.0}, 1) > 1e-10)
    throw config_error(
        "s = 1/2 kernel fails the first-moment cancellation gate");

  const bool trig = u.kind == SmoothProbe::Kind::trig;
  const bool affine = u.kind == SmoothProbe::Kind::affine;
  if (affine && s <= 0.5) {
    const MatR sym = 0.5 * (u.A + u.A.transpose());
    if (sym.norm() > 1e-13 * std::max(1.0, u.A.norm()))
      throw config_error(
          "affine probe with a symmetric part is not integrable for s <= 1/2");
  }

  VecR ux = VecR::Zero(d);
  MatR Dx = MatR::Zero(d, d);
  if (!trig) {
    if (x.size() != d) throw config_error("probe point dimension mismatch");
    ux = u.value(x);
    Dx = u.sym_grad(x);
  }

  // per-mode data for the factorized path
  struct Mode {
    VecR kv, ac, as;
    real kn = 0.0, ht = 0.0;
    MatR sym_ac, sym_as;
  };
  std::vector<Mode> modes;
  real ht_sum = 0.0;
  if (trig) {
    modes.resize(u.kvec.size());
    for (std::size_t t = 0; t < u.kvec.size(); ++t) {
      Mode& m = modes[t];
      m.kv = u.kvec[t];
      m.kn = m.kv.norm();
      m.ac = u.amp_cos[t];
      m.as = u.amp_sin[t];
      m.ht = std::sqrt(m.ac.squaredNorm() + m.as.squaredNorm());
      const VecR tk = VecR(two_pi * m.kv);
      m.sym_ac = 0.5 * (m.ac * tk.transpose() + tk * m.ac.transpose());
      m.sym_as = 0.5 * (m.as * tk.transpose() + tk * m.as.transpose());
      ht_sum += m.ht;
    }
  }

  const real surf = sphere_area(d);
  const real pre = (1.0 - s) * k.alpha2 * k.m_max * surf;
  const real hess = u.hess_sup();
  real dsup = 0.0;  // uniform bound on ||D[u]||, the inner Taylor constant
  if (trig) {
    for (const Mode& m : modes) dsup += two_pi * m.kn * m.ht;
  } else {
    dsup = Dx.norm();
  }

  // inner truncation: |w^T delta_s| <= dsup r [chi absent] + hess/2 r^2,
  // the first-order term surviving only for s < 1/2 (the compensator, or
  // at s = 1/2 the unit-ball indicator, removes w^T (grad u) w exactly)
  const real share = cfg.tol / 3.0;
  const real c1 = (s < 0.5) ? pre * dsup : 0.0;
  const real c2 = 0.5 * pre * hess;
  real r_in = 0.05;
  if (c1 > 0.0)
    r_in = std::min(r_in, std::pow(0.5 * share * (1.0 - 2.0 * s) / c1,
                                   1.0 / (1.0 - 2.0 * s)));
  if (c2 > 0.0)
    r_in = std::min(r_in, std::pow(0.5 * share * (2.0 - 2.0 * s) / c2,
                                   1.0 / (2.0 - 2.0 * s)));
  if (!(r_in > 1e-270))
    throw convergence_error(
        "inner truncation radius underflows at this tolerance (s too close "
        "to 1/2 from below)");
  const real inner_bd =
      (c1 > 0.0 ? c1 * std::pow(r_in, 1.0 - 2.0 * s) / (1.0 - 2.0 * s) : 0.0) +
      (c2 > 0.0 ? c2 * std::pow(r_in, 2.0 - 2.0 * s) / (2.0 - 2.0 * s) : 0.0);

  // exterior cutoff: the u(x+y) piece is only bounded, so R grows until
  // its certified envelope fits in a third of the budget
  const real cG = 2.0 + k.radial.eps * k.radial.omega0 / (1.0 + 2.0 * s);
  auto osc_bound = [&](real R) -> real {
    const real pref = (1.0 - s) * k.alpha2 * k.m_max * std::pow(R, -2.0 * s);
    switch (u.kind) {
      case SmoothProbe::Kind::affine:
        return 0.0;  // w^T (A - D chi) w vanishes pointwise beyond R
      case SmoothProbe::Kind::gaussian: {
        const real rho = (x - u.x0).norm();
        const real t = std::max(R - rho, 0.0);
        const real amp =
            u.w.norm() * std::exp(-0.5 * t * t / (u.sigma * u.sigma));
        return pref * surf * amp / (2.0 * s);
      }
      case SmoothProbe::Kind::trig: {
        real b = 0.0;
        for (const Mode& m : modes) {
          if (m.kn == 0.0) continue;  // constants cancel inside delta_s
          b += m.ht * pref *
               min_envelope(d, 1.0 / (2.0 * s), cG / (R * two_pi * m.kn));
        }
        return b;
      }
    }
    return 0.0;
  };
  real R = 4.0;
  while (osc_bound(R) > share && R < 4096.0) R *= 2.0;
  const real osc_bd = osc_bound(R);
  if (osc_bd > share)
    throw convergence_error("certified exterior remainder " + fmt17(osc_bd) +
                            " exceeds the budget " + fmt17(share) +
                            " at cutoff radius " + fmt17(R));

  // exterior moment pieces, computed (not bounded) against the certified
  // radial log-tail of the kernel surrogate
  const AngularScheme sch = make_scheme(k);
  const real lnR = std::log(R);
  const real rho0 = (1.0 - s) * k.mu.exp_tail(2.0 * s, lnR);
  const real slack0 =
      (1.0 - s) * k.mu_fit_err * std::pow(R, -2.0 * s) / (2.0 * s);
  real rho1 = 0.0, slack1 = 0.0;
  const bool comp_tail = s > 0.5;  // at s = 1/2 chi vanishes beyond R >= 1
  if (comp_tail) {
    rho1 = (1.0 - s) * k.mu.exp_tail(2.0 * s - 1.0, lnR);
    slack1 = (1.0 - s) * k.mu_fit_err * std::pow(R, 1.0 - 2.0 * s) /
             (2.0 * s - 1.0);
  }
  const bool want_odd = comp_tail && !k.even_profile;

  MatR Ae = MatR::Zero(d, d);
  std::vector<VecR> fold_c, fold_s;
  VecR ext_direct = VecR::Zero(d);
  real usup_fold = 0.0;
  if (!affine) {
    Ae = even_moment(k, sch);
    if (trig) {
      fold_c.assign(modes.size(), VecR::Zero(d));
      fold_s.assign(modes.size(), VecR::Zero(d));
      for (std::size_t t = 0; t < modes.size(); ++t) {
        const Mode& m = modes[t];
        if (m.kn == 0.0) continue;
        fold_c[t] = VecR(-rho0 * (Ae * m.ac));
        fold_s[t] = VecR(-rho0 * (Ae * m.as));
        if (want_odd) {
          fold_c[t] -= VecR(rho1 * odd_moment_apply(k, sch, m.sym_as));
          fold_s[t] += VecR(rho1 * odd_moment_apply(k, sch, m.sym_ac));
        }
        usup_fold += m.ht;
      }
    } else {
      ext_direct = VecR(-rho0 * (Ae * ux));
      if (want_odd) ext_direct -= VecR(rho1 * odd_moment_apply(k, sch, Dx));
      usup_fold = ux.norm();
    }
  }

  real certified = inner_bd + osc_bd + slack0 * Ae.norm() * usup_fold;
  if (comp_tail)
    certified += (slack1 + 1e-13 * rho1) * surf * k.max_abs_odd * dsup;

  // annulus quadrature with two-level agreement
  const real fs = u.freq_scale();
  const real w0 = std::min(0.5, 4.5 / std::max(fs, 1.0));
  const std::vector<real> edges = radial_base_edges(r_in, R, w0, s == 0.5);
  const GLRule& g16 = gl_rule(16);

  RSBuild b;
  b.trig = trig;
  b.r_in = r_in;
  b.r_out = R;
  b.direct = VecR::Zero(d);

  std::vector<VecR> pc_prev, ps_prev;
  VecR direct_prev = VecR::Zero(d);
  bool have_prev = false;
  real diff = std::numeric_limits<real>::infinity();
  const real abs_floor =
      1e-14 * (1.0 + ht_sum + usup_fold + dsup + hess +
               (affine ? u.A.norm() + ux.norm() : 0.0));

  for (int lvl = cfg.base_level; lvl <= cfg.base_level + cfg.max_level;
       ++lvl) {
    if (trig) {
      b.pc.assign(modes.size(), VecR::Zero(d));
      b.ps.assign(modes.size(), VecR::Zero(d));
    } else {
      b.direct.setZero();
    }
    const long nsplit = 1L << lvl;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
      const real ha = (edges[i + 1] - edges[i]) / real(nsplit);
      for (long j = 0; j < nsplit; ++j) {
        const real mid = edges[i] + (real(j) + 0.5) * ha;
        const real hal = 0.5 * ha;
        for (int q = 0; q < 16; ++q) {
          const real r = mid + hal * g16.x[q];
          const real wr = g16.w[q] * hal;
          const real fr =
              (1.0 - s) * k.radial_at(r) * std::pow(r, -1.0 - 2.0 * s);
          const int cs =
              (s > 0.5) ? 1 : (s == 0.5 ? (r < 1.0 ? 1 : 0) : 0);
          for_each_angular(d, sch, r * fs, lvl, [&](const VecR& om, real wa) {
            const real g = k.profile_at(om) * fr * (wr * wa);
            if (trig) {
              for (std::size_t t = 0; t < modes.size(); ++t) {
                const Mode& m = modes[t];
                const real c = two_pi * m.kv.dot(om) * r;
                const real sh = std::sin(0.5 * c);
                const real cm1 = -2.0 * sh * sh;
                const real sn = std::sin(c);
                VecR Ct = VecR(cm1 * m.ac + sn * m.as);
                VecR St = VecR(cm1 * m.as - sn * m.ac);
                if (cs) {
                  Ct -= VecR(r * (m.sym_as * om));
                  St += VecR(r * (m.sym_ac * om));
                }
                b.pc[t] += (g * om.dot(Ct)) * om;
                b.ps[t] += (g * om.dot(St)) * om;
              }
            } else {
              const VecR y = VecR(r * om);
              VecR dv = probe_diff(u, x, y);
              if (cs) dv -= VecR(Dx * y);
              b.direct += (g * om.dot(dv)) * om;
            }
          });
        }
      }
    }
    if (have_prev) {
      real dmax = 0.0, vmax = 0.0;
      if (trig) {
        for (std::size_t t = 0; t < modes.size(); ++t) {
          dmax = std::max(dmax, (b.pc[t] - pc_prev[t]).cwiseAbs().maxCoeff());
          dmax = std::max(dmax, (b.ps[t] - ps_prev[t]).cwiseAbs().maxCoeff());
          vmax = std::max(vmax, b.pc[t].cwiseAbs().maxCoeff());
          vmax = std::max(vmax, b.ps[t].cwiseAbs().maxCoeff());
        }
      } else {
        dmax = (b.direct - direct_prev).cwiseAbs().maxCoeff();
        vmax = b.direct.cwiseAbs().maxCoeff();
      }
      diff = dmax;
      const real scale = std::max(vmax, certified);
      if (dmax <= std::max(cfg.rel_tol * scale, abs_floor)) {
        b.level = lvl;
        b.refine_diff = diff;
        if (trig) {
          for (std::size_t t = 0; t < modes.size(); ++t) {
            if (!fold_c.empty()) b.pc[t] += fold_c[t];
            if (!fold_s.empty()) b.ps[t] += fold_s[t];
          }
        } else {
          b.direct += ext_direct;
        }
        b.certified = certified;
        return b;
      }
    }
    pc_prev = b.pc;
    ps_prev = b.ps;
    direct_prev = b.direct;
    have_prev = true;
  }
  throw convergence_error(
      "bond quadrature did not converge: last two refinement levels differ "
      "by " +
      fmt17(diff));
}

VectorField sweep_trig(const RSBuild& b, const SmoothProbe& p,
                       const GridSpec& g) {
  VectorField out = make_field(g, g.d);
  const long total = g.total();
#pragma omp parallel for schedule(static)
  for (long f = 0; f < total; ++f) {
    const std::array<int, 3> idx = g.multi(f);
    VecR x(g.d);
    for (int a = 0; a < g.d; ++a) x[a] = idx[a] * g.box[a] / g.n[a];
    VecR v = VecR::Zero(g.d);
    for (std::size_t t = 0; t < p.kvec.size(); ++t) {
      const real ph = two_pi * p.kvec[t].dot(x);
      v += std::cos(ph) * b.pc[t] + std::sin(ph) * b.ps[t];
    }
    for (int c = 0; c < g.d; ++c) out.at(c, f) = -v[c];
  }
  return out;
}

bool same_grid(const GridSpec& a, const GridSpec& b) {
  return a.d == b.d && a.n == b.n && a.box == b.box;
}

real field_l2(const VectorField& f) {
  std::vector<real> sq(f.data.size());
  for (std::size_t i = 0; i < f.data.size(); ++i) sq[i] = f.data[i] * f.data[i];
  return std::sqrt(pairwise_sum(sq) * f.grid.cell_volume());
}

real rel_l2_diff(const VectorField& a, const VectorField& b) {
  std::vector<real> sq(a.data.size());
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const real t = a.data[i] - b.data[i];
    sq[i] = t * t;
  }
  const real num = std::sqrt(pairwise_sum(sq) * a.grid.cell_volume());
  const real den = std::max({field_l2(a), field_l2(b), 1e-300});
  return num / den;
}

VectorField filter_field(const VectorField& u, real k0) {
  if (k0 <= 0.0) {
    // all-pass: still round-trip the transform so the filter is the same
    // linear map in both operand orders
    SpectralField sp = forward_transform(u);
    return inverse_transform(sp);
  }
  SpectralField sp = forward_transform(u);
  const long total = u.grid.total();
  for (long f = 0; f < total; ++f) {
    const real h = std::exp(-0.5 * u.grid.frequency(f).squaredNorm() /
                            (k0 * k0));
    for (int c = 0; c < u.components; ++c) sp.at(c, f) *= h;
  }
  return inverse_transform(sp);
}

}  // namespace

VecR SmoothProbe::value(const VecR& x) const {
  switch (kind) {
    case Kind::trig: {
      VecR v = VecR::Zero(d);
      for (std::size_t t = 0; t < kvec.size(); ++t) {
        const real ph = two_pi * kvec[t].dot(x);
        v += std::cos(ph) * amp_cos[t] + std::sin(ph) * amp_sin[t];
      }
      return v;
    }
    case Kind::gaussian: {
      const VecR z = x - x0;
      return VecR(std::exp(-0.5 * z.squaredNorm() / (sigma * sigma)) * w);
    }
    case Kind::affine:
      return VecR(A * x + b);
  }
  throw config_error("unknown probe kind");
}

MatR SmoothProbe::jacobian(const VecR& x) const {
  switch (kind) {
    case Kind::trig: {
      MatR j = MatR::Zero(d, d);
      for (std::size_t t = 0; t < kvec.size(); ++t) {
        const real ph = two_pi * kvec[t].dot(x);
        const VecR v =
            VecR(-std::sin(ph) * amp_cos[t] + std::cos(ph) * amp_sin[t]);
        j += v * (two_pi * kvec[t]).transpose();
      }
      return j;
    }
    case Kind::gaussian: {
      const VecR z = x - x0;
      const real s2 = sigma * sigma;
      return MatR(std::exp(-0.5 * z.squaredNorm() / s2) * w *
                  (-z / s2).transpose());
    }
    case Kind::affine:
      return A;
  }
  throw config_error("unknown probe kind");
}

MatR SmoothProbe::sym_grad(const VecR& x) const {
  const MatR j = jacobian(x);
  return MatR(0.5 * (j + j.transpose()));
}

real SmoothProbe::sup_norm() const {
  switch (kind) {
    case Kind::trig: {
      VecR per = VecR::Zero(d);
      for (std::size_t t = 0; t < kvec.size(); ++t)
        for (int c = 0; c < d; ++c)
          per[c] += std::hypot(amp_cos[t][c], amp_sin[t][c]);
      return per.norm();
    }
    case Kind::gaussian:
      return w.norm();
    case Kind::affine:
      return std::numeric_limits<real>::infinity();
  }
  throw config_error("unknown probe kind");
}

real SmoothProbe::hess_sup() const {
  switch (kind) {
    case Kind::trig: {
      real h = 0.0;
      for (std::size_t t = 0; t < kvec.size(); ++t) {
        const real kn = two_pi * kvec[t].norm();
        h += kn * kn *
             std::sqrt(amp_cos[t].squaredNorm() + amp_sin[t].squaredNorm());
      }
      return h;
    }
    case Kind::gaussian:
      // |(z z^T / s^2 - I) e^{-|z|^2/2s^2}| <= 1 + 2/e in units of 1/s^2
      return w.norm() * (1.0 + 2.0 * std::exp(-1.0)) / (sigma * sigma);
    case Kind::affine:
      return 0.0;
  }
  throw config_error("unknown probe kind");
}

real SmoothProbe::freq_scale() const {
  switch (kind) {
    case Kind::trig: {
      real f = 0.0;
      for (const VecR& kv : kvec) f = std::max(f, two_pi * kv.norm());
      return f;
    }
    case Kind::gaussian:
      return 3.0 / sigma;
    case Kind::affine:
      return 0.0;
  }
  throw config_error("unknown probe kind");
}

SmoothProbe probe_trig(int d, std::vector<VecR> kvec,
                       std::vector<VecR> amp_cos, std::vector<VecR> amp_sin) {
  check_probe_dim(d, "probe_trig");
  if (kvec.size() != amp_cos.size() || kvec.size() != amp_sin.size())
    throw config_error("probe_trig: mode arrays must have equal length");
  for (std::size_t t = 0; t < kvec.size(); ++t) {
    if (kvec[t].size() != d || amp_cos[t].size() != d ||
        amp_sin[t].size() != d)
      throw config_error("probe_trig: mode entries must have length d");
    check_finite(kvec[t], "probe_trig");
    check_finite(amp_cos[t], "probe_trig");
    check_finite(amp_sin[t], "probe_trig");
  }
  SmoothProbe p;
  p.kind = SmoothProbe::Kind::trig;
  p.d = d;
  p.kvec = std::move(kvec);
  p.amp_cos = std::move(amp_cos);
  p.amp_sin = std::move(amp_sin);
  return p;
}

SmoothProbe probe_gaussian(const VecR& w, const VecR& x0, real sigma) {
  const int d = int(x0.size());
  check_probe_dim(d, "probe_gaussian");
  if (w.size() != d)
    throw config_error("probe_gaussian: weight and center sizes differ");
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw config_error("probe_gaussian: sigma must be positive");
  check_finite(w, "probe_gaussian");
  check_finite(x0, "probe_gaussian");
  SmoothProbe p;
  p.kind = SmoothProbe::Kind::gaussian;
  p.d = d;
  p.w = w;
  p.x0 = x0;
  p.sigma = sigma;
  return p;
}

SmoothProbe probe_affine(const MatR& A, const VecR& b) {
  const int d = int(b.size());
  check_probe_dim(d, "probe_affine");
  if (A.rows() != d || A.cols() != d)
    throw config_error("probe_affine: matrix must be d x d");
  check_finite(b, "probe_affine");
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (!std::isfinite(A(i, j)))
        throw config_error("probe_affine: non-finite entry");
  SmoothProbe p;
  p.kind = SmoothProbe::Kind::affine;
  p.d = d;
  p.A = A;
  p.b = b;
  return p;
}

VecR delta_s(const SmoothProbe& u, const VecR& x, const VecR& y, real s) {
  if (x.size() != u.d || y.size() != u.d)
    throw config_error("delta_s: point dimension mismatch");
  if (y.norm() == 0.0)
    throw std::domain_error("bond difference evaluated at y = 0");
  VecR v = probe_diff(u, x, y);
  if (chi_s(s, y)) v -= VecR(u.sym_grad(x) * y);
  return v;
}

namespace {

RealspaceResult result_from_build(const RSBuild& b, const SmoothProbe& u,
                                  const VecR& x) {
  RealspaceResult res;
  res.certified = b.certified;
  res.refine_diff = b.refine_diff;
  res.level = b.level;
  res.r_inner = b.r_in;
  res.r_outer = b.r_out;
  if (b.trig) {
    VecR v = VecR::Zero(u.d);
    for (std::size_t t = 0; t < u.kvec.size(); ++t) {
      const real ph = two_pi * u.kvec[t].dot(x);
      v += std::cos(ph) * b.pc[t] + std::sin(ph) * b.ps[t];
    }
    res.value = VecR(-v);
  } else {
    res.value = VecR(-b.direct);
  }
  return res;
}

}  // namespace

RealspaceResult apply_realspace(const SmoothProbe& u, const VecR& x,
                                const KernelSpec& k,
                                const RealspaceConfig& cfg) {
  if (x.size() != k.d)
    throw config_error("apply_realspace: point dimension mismatch");
  const RSBuild b = build_realspace(u, x, k, cfg);
  return result_from_build(b, u, x);
}

std::vector<RealspaceResult> apply_realspace_many(
    const SmoothProbe& u, const std::vector<VecR>& xs, const KernelSpec& k,
    const RealspaceConfig& cfg) {
  std::vector<RealspaceResult> out;
  out.reserve(xs.size());
  for (const VecR& x : xs)
    if (x.size() != k.d)
      throw config_error("apply_realspace: point dimension mismatch");
  if (u.kind == SmoothProbe::Kind::trig && !xs.empty()) {
    // the quadrature accumulation is phase-factored and the exterior folds
    // act on the mode amplitudes, so the build is shared across points
    const RSBuild b = build_realspace(u, xs.front(), k, cfg);
    for (const VecR& x : xs) out.push_back(result_from_build(b, u, x));
  } else {
    for (const VecR& x : xs) out.push_back(apply_realspace(u, x, k, cfg));
  }
  return out;
}

VectorField sample_probe(const SmoothProbe& u, const GridSpec& g) {
  if (g.d != u.d) throw config_error("sample_probe: dimension mismatch");
  VectorField out = make_field(g, u.d);
  const long total = g.total();
#pragma omp parallel for schedule(static)
  for (long f = 0; f < total; ++f) {
    const std::array<int, 3> idx = g.multi(f);
    VecR x(g.d);
    for (int a = 0; a < g.d; ++a) x[a] = idx[a] * g.box[a] / g.n[a];
    const VecR v = u.value(x);
    for (int c = 0; c < g.d; ++c) out.at(c, f) = v[c];
  }
  return out;
}

SmoothProbe probe_from_field(const VectorField& f, real rel_cut) {
  const GridSpec& g = f.grid;
  if (f.components != g.d)
    throw config_error("probe_from_field: needs a d-component field");
  if (!(rel_cut >= 0.0))
    throw config_error("probe_from_field: cut must be nonnegative");
  SpectralField sp = forward_transform(f);
  const long total = g.total();
  const real N = real(total);
  std::vector<real> mag(total, 0.0);
  real peak = 0.0;
  for (long i = 0; i < total; ++i) {
    real m2 = 0.0;
    for (int c = 0; c < g.d; ++c) m2 += std::norm(sp.at(c, i));
    mag[i] = std::sqrt(m2) / N;
    peak = std::max(peak, mag[i]);
  }
  std::vector<char> used(total, 0);
  std::vector<VecR> kvs, acs, ass;
  for (long i = 0; i < total; ++i) {
    if (used[i]) continue;
    const long j = conjugate_flat(g, i);
    used[i] = 1;
    used[j] = 1;
    if (std::max(mag[i], mag[j]) <= rel_cut * peak) continue;
    VecR ac(g.d), as(g.d);
    if (j == i) {
      for (int c = 0; c < g.d; ++c) {
        ac[c] = std::real(sp.at(c, i)) / N;
        as[c] = -std::imag(sp.at(c, i)) / N;
      }
    } else {
      for (int c = 0; c < g.d; ++c) {
        const cplx cc = sp.at(c, i) / N;
        ac[c] = 2.0 * std::real(cc);
        as[c] = -2.0 * std::imag(cc);
      }
    }
    kvs.push_back(g.frequency(i));
    acs.push_back(ac);
    ass.push_back(as);
  }
  return probe_trig(g.d, std::move(kvs), std::move(acs), std::move(ass));
}

VectorField apply_spectral(const VectorField& u, const SymbolField& table,
                           real lambda) {
  const GridSpec& g = u.grid;
  if (!same_grid(g, table.grid))
    throw config_error("apply_spectral: field and symbol table grids differ");
  if (u.components != g.d)
    throw config_error("apply_spectral: needs a d-component field");
  if (!(lambda >= 0.0))
    throw config_error("apply_spectral: shift must be nonnegative");
  SpectralField sp = forward_transform(u);
  const long total = g.total();
  const int d = g.d;
#pragma omp parallel for schedule(static)
  for (long f = 0; f < total; ++f) {
    VecC v(d);
    for (int c = 0; c < d; ++c) v[c] = sp.at(c, f);
    const VecC out = VecC(table.at(f) * v + lambda * v);
    for (int c = 0; c < d; ++c) sp.at(c, f) = out[c];
  }
  return inverse_transform(sp);
}

VectorField apply_fraclap(const VectorField& u, real s) {
  if (!(s > 0.0 && s < 1.0))
    throw config_error("apply_fraclap: order must lie in (0, 1)");
  SpectralField sp = forward_transform(u);
  const GridSpec& g = u.grid;
  const long total = g.total();
#pragma omp parallel for schedule(static)
  for (long f = 0; f < total; ++f) {
    const real m = std::pow(two_pi * g.frequency(f).norm(), 2.0 * s);
    for (int c = 0; c < u.components; ++c) sp.at(c, f) *= m;
  }
  return inverse_transform(sp);
}

VectorField apply_lame_riesz(const VectorField& u, const LameConstants& c) {
  const GridSpec& g = u.grid;
  if (g.d != c.d)
    throw config_error("apply_lame_riesz: constants are for dimension " +
                       std::to_string(c.d));
  if (u.components != g.d)
    throw config_error("apply_lame_riesz: needs a d-component field");
  SpectralField sp = forward_transform(u);
  const long total = g.total();
  const int d = g.d;
#pragma omp parallel for schedule(static)
  for (long f = 0; f < total; ++f) {
    const MatR m = symbol_lame(g.frequency(f), c);
    VecR re(d), im(d);
    for (int cc = 0; cc < d; ++cc) {
      re[cc] = std::real(sp.at(cc, f));
      im[cc] = std::imag(sp.at(cc, f));
    }
    const VecR ore = VecR(m * re);
    const VecR oim = VecR(m * im);
    for (int cc = 0; cc < d; ++cc) sp.at(cc, f) = cplx(ore[cc], oim[cc]);
  }
  return inverse_transform(sp);
}

CommutationResult commutation_residual(const VectorField& u,
                                       const KernelSpec& k,
                                       const CommutationConfig& cfg) {
  const GridSpec& g = u.grid;
  if (g.d != k.d || u.components != k.d)
    throw config_error("commutation_residual: dimension mismatch");
  {
    SpectralField sp = forward_transform(u);
    const long total = g.total();
    real peak = 0.0;
    std::vector<real> mag(total, 0.0);
    for (long f = 0; f < total; ++f) {
      real m2 = 0.0;
      for (int c = 0; c < g.d; ++c) m2 += std::norm(sp.at(c, f));
      mag[f] = std::sqrt(m2);
      peak = std::max(peak, mag[f]);
    }
    for (long f = 0; f < total; ++f) {
      const std::array<int, 3> idx = g.multi(f);
      bool high = false;
      for (int a = 0; a < g.d; ++a)
        if (3 * std::abs(g.signed_m(a, idx[a])) > g.n[a]) high = true;
      if (high && mag[f] > 1e-12 * peak)
        throw config_error(
            "commutation_residual: field not band-limited (modes above a "
            "third of the axis resolution)");
    }
  }
  const SymbolField table = tabulate_symbol(g, k, cfg.quad);

  VectorField A, B;
  if (!cfg.realspace) {
    A = apply_spectral(apply_fraclap(u, k.s), table, 0.0);
    B = apply_fraclap(apply_spectral(u, table, 0.0), k.s);
  } else {
    const SmoothProbe p = probe_from_field(u);
    SmoothProbe pl = p;  // (-Delta)^s acts mode by mode on the interpolant
    for (std::size_t t = 0; t < pl.kvec.size(); ++t) {
      const real fac = std::pow(two_pi * pl.kvec[t].norm(), 2.0 * k.s);
      pl.amp_cos[t] *= fac;
      pl.amp_sin[t] *= fac;
    }
    VecR xz = VecR::Zero(g.d);
    const RSBuild bl = build_realspace(pl, xz, k, cfg.rs);
    const RSBuild b0 = build_realspace(p, xz, k, cfg.rs);
    A = sweep_trig(bl, pl, g);
    B = apply_fraclap(sweep_trig(b0, p, g), k.s);
  }
  const real ra = rel_l2_diff(A, B);

  const VectorField uf = filter_field(u, cfg.filter_k0);
  const VectorField c1 = apply_spectral(uf, table, 0.0);
  const VectorField c2 = filter_field(apply_spectral(u, table, 0.0),
                                      cfg.filter_k0);
  const real rb = rel_l2_diff(c1, c2);
  return {ra, rb};
}

}  // namespace nonlocal
