#include "nonlocal/symbol.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace nonlocal {

namespace {

// ---------------------------------------------------------------------------
// radial transforms
//
// With K = (1-s) a(w) m(r) r^{-(d+2s)} and beta = 2 pi w.xi, the radial
// factor of the even part is
//   Fc(b) = int_0^inf (1 - cos(b r)) m(r) r^{-1-2s} dr = b^{2s} Gc(ln b),
// where Gc(v) = int_0^inf (1 - cos t) mu(ln t - v) t^{-1-2s} dt is exactly
// periodic in v because mu(u) = m(e^u) is periodic. The odd factor reduces
// the same way to Gs, except at s = 1/2 where the truncation radius breaks
// scaling and instead
//   S(beta) = beta H(ln|beta|),  H(v) = P(v) - mean(mu) v,  P periodic.
// Each radial sample is head (Taylor series against exp_head, certified
// remainder) + Gauss-Legendre mid panels with level doubling + repeated
// integration by parts for the oscillatory tail (certified remainder).
// ---------------------------------------------------------------------------

enum class RadialKind { one_minus_cos, sin_plain, sin_minus_t };

// integral_T^inf phase(t) g(ln t) t^{-1-2s} dt by repeated integration by
// parts; differentiating h_j(t) = g_j(ln t) t^{-1-2s-j} maps
// g -> g' - (1+2s+j) g, which TrigPoly is closed under.
real osc_tail(const TrigPoly& g0, real s, real T, bool cos_phase, int pairs,
              real& bound) {
  TrigPoly g = g0;
  const real lnT = std::log(T);
  real val = 0.0;
  real sigma = 1.0;
  bool cosp = cos_phase;
  int j = 0;
  for (int step = 0; step < 2 * pairs; ++step) {
    const real hj = g.eval(lnT) * std::pow(T, -1.0 - 2.0 * s - j);
    if (cosp) {
      val += sigma * (-std::sin(T) * hj);
      sigma = -sigma;
    } else {
      val += sigma * (std::cos(T) * hj);
    }
    cosp = !cosp;
    g = g.derivative().plus(g.scaled(-(1.0 + 2.0 * s + j)));
    ++j;
  }
  bound += g.sup_bound() * std::pow(T, -2.0 * s - j) / (2.0 * s + j);
  return val;
}

std::vector<real> split_panels(const std::vector<real>& base, int factor) {
  if (factor <= 1) return base;
  std::vector<real> out;
  out.reserve((base.size() - 1) * factor + 1);
  for (std::size_t i = 0; i + 1 < base.size(); ++i)
    for (int k = 0; k < factor; ++k)
      out.push_back(base[i] + (base[i + 1] - base[i]) * k / factor);
  out.push_back(base.back());
  return out;
}

// geometric growth from `a` until the oscillation scale pi, then pi-wide
std::vector<real> mid_edges(real a, real b, int level) {
  std::vector<real> base;
  real x = a;
  base.push_back(x);
  while (x < pi && 2.0 * x < b) {
    x = std::min(2.0 * x, b);
    base.push_back(x);
  }
  while (base.back() < b - 1e-12) base.push_back(std::min(base.back() + pi, b));
  return split_panels(base, 1 << level);
}

// one radial sample against the shifted surrogate mu_v(u) = mu(u - v)
real radial_sample(const TrigPoly& mu_v, real s, RadialKind kind,
                   const QuadConfig& q, real m_max, real& bound) {
  const real a = q.head_a;
  real head = 0.0;
  if (kind == RadialKind::one_minus_cos) {
    real fact = 2.0;  // (2k)!
    real sign = 1.0;
    for (int k = 1; k <= 5; ++k) {
      head += sign / fact * mu_v.exp_head(2.0 * k - 2.0 * s, std::log(a));
      sign = -sign;
      fact *= (2.0 * k + 1.0) * (2.0 * k + 2.0);
    }
    bound += m_max * std::pow(a, 12.0 - 2.0 * s) /
             (479001600.0 * (12.0 - 2.0 * s));
  } else {
    real fact = 1.0;  // (2k+1)!
    real sign = 1.0;
    for (int k = 0; k <= 5; ++k) {
      if (!(kind == RadialKind::sin_minus_t && k == 0))
        head += sign / fact * mu_v.exp_head(2.0 * k + 1.0 - 2.0 * s, std::log(a));
      sign = -sign;
      fact *= (2.0 * k + 2.0) * (2.0 * k + 3.0);
    }
    bound += m_max * std::pow(a, 13.0 - 2.0 * s) /
             (6227020800.0 * (13.0 - 2.0 * s));
  }

  const real T = q.tail_T;
  auto mid_at = [&](int level) {
    const std::vector<real> edges = mid_edges(a, T, level);
    const GLRule& rule = gl_rule(16);
    auto f = [&](real t) {
      real osc = 0.0;
      switch (kind) {
        case RadialKind::one_minus_cos: osc = 1.0 - std::cos(t); break;
        case RadialKind::sin_plain: osc = std::sin(t); break;
        case RadialKind::sin_minus_t: osc = std::sin(t) - t; break;
      }
      return osc * mu_v.eval(std::log(t)) * std::pow(t, -1.0 - 2.0 * s);
    };
    return integrate_panels(f, edges, rule);
  };
  real mid = mid_at(q.base_level);
  bool ok = false;
  for (int l = q.base_level + 1; l <= q.base_level + q.max_doublings; ++l) {
    const real next = mid_at(l);
    const bool agree =
        std::abs(next - mid) <= q.rel_tol * std::max(std::abs(next), 1e-6);
    mid = next;
    if (agree) {
      ok = true;
      break;
    }
  }
  if (!ok)
    throw convergence_error("radial quadrature stalled after doubling cap");

  real tail = 0.0;
  switch (kind) {
    case RadialKind::one_minus_cos:
      tail = mu_v.exp_tail(2.0 * s, std::log(T)) -
             osc_tail(mu_v, s, T, true, q.ibp_pairs, bound);
      break;
    case RadialKind::sin_plain:
      tail = osc_tail(mu_v, s, T, false, q.ibp_pairs, bound);
      break;
    case RadialKind::sin_minus_t:
      tail = osc_tail(mu_v, s, T, false, q.ibp_pairs, bound) -
             mu_v.exp_tail(2.0 * s - 1.0, std::log(T));
      break;
  }
  return head + mid + tail;
}

// s = 1/2 odd transform with the radius-one truncation ball:
// H(v) = int_0^inf (sin t - t [t < e^v]) mu_v(ln t) t^{-2} dt
real half_H(const TrigPoly& mu_v, real v, const QuadConfig& q, real m_max,
            real& bound) {
  const real s = 0.5;
  const real a = q.head_a;
  const real w = std::exp(v);
  real head = 0.0;
  {
    real fact = 6.0;  // (2k+1)! from k = 1
    real sign = -1.0;
    for (int k = 1; k <= 5; ++k) {
      head += sign / fact * mu_v.exp_head(2.0 * k, std::log(a));
      sign = -sign;
      fact *= (2.0 * k + 2.0) * (2.0 * k + 3.0);
    }
    bound += m_max * std::pow(a, 12.0) / (6227020800.0 * 12.0);
  }
  const real T = std::max(q.tail_T, 2.0 * w);
  const GLRule& rule = gl_rule(16);
  auto mid_at = [&](int level) {
    auto f1 = [&](real t) {
      return (std::sin(t) - t) * mu_v.eval(std::log(t)) / (t * t);
    };
    auto f2 = [&](real t) {
      return std::sin(t) * mu_v.eval(std::log(t)) / (t * t);
    };
    return integrate_panels(f1, mid_edges(a, w, level), rule) +
           integrate_panels(f2, mid_edges(w, T, level), rule);
  };
  real mid = mid_at(q.base_level);
  bool ok = false;
  for (int l = q.base_level + 1; l <= q.base_level + q.max_doublings; ++l) {
    const real next = mid_at(l);
    const bool agree =
        std::abs(next - mid) <= q.rel_tol * std::max(std::abs(next), 1e-6);
    mid = next;
    if (agree) {
      ok = true;
      break;
    }
  }
  if (!ok)
    throw convergence_error("radial quadrature stalled after doubling cap");
  const real tail = osc_tail(mu_v, s, T, false, q.ibp_pairs, bound);
  return head + mid + tail;
}

struct RadialParts {
  TrigPoly gc;
  TrigPoly gs;
  TrigPoly ph;  // periodic part of H at s = 1/2
  bool has_odd = false;
  bool half = false;
  real s = 0;
  real mu_mean = 1.0;
  real bound = 0.0;  // certified truncation total across all samples
};

RadialParts build_radial(const KernelSpec& k, const QuadConfig& q) {
  RadialParts rp;
  rp.s = k.s;
  rp.mu_mean = k.mu.c0;
  rp.has_odd = !k.even_profile;
  rp.half = (k.s == 0.5);
  const bool constant_radial = k.radial.kind == RadialSpec::Kind::constant;
  const real period = constant_radial ? two_pi : two_pi / k.radial.omega0;
  const int n = constant_radial ? 1 : q.gc_samples;

  std::vector<real> vc(n);
  for (int j = 0; j < n; ++j) {
    const real v = period * j / n;
    const TrigPoly mu_v = k.mu.shifted(-v);
    vc[j] = radial_sample(mu_v, k.s, RadialKind::one_minus_cos, q, k.m_max,
                          rp.bound);
  }
  rp.gc = n == 1 ? TrigPoly{vc[0], {}} : fit_periodic_samples(vc, period);

  if (rp.has_odd) {
    std::vector<real> vo(n);
    if (rp.half) {
      for (int j = 0; j < n; ++j) {
        const real v = period * j / n;
        const TrigPoly mu_v = k.mu.shifted(-v);
        vo[j] = half_H(mu_v, v, q, k.m_max, rp.bound) + rp.mu_mean * v;
      }
      rp.ph = n == 1 ? TrigPoly{vo[0], {}} : fit_periodic_samples(vo, period);
    } else {
      const RadialKind kind =
          k.s < 0.5 ? RadialKind::sin_plain : RadialKind::sin_minus_t;
      for (int j = 0; j < n; ++j) {
        const real v = period * j / n;
        const TrigPoly mu_v = k.mu.shifted(-v);
        vo[j] = radial_sample(mu_v, k.s, kind, q, k.m_max, rp.bound);
      }
      rp.gs = n == 1 ? TrigPoly{vo[0], {}} : fit_periodic_samples(vo, period);
    }
  }
  if (rp.bound > q.radial_tol)
    throw convergence_error("radial truncation bound " + fmt17(rp.bound) +
                            " exceeds budget " + fmt17(q.radial_tol));
  return rp;
}

std::string kernel_fingerprint(const KernelSpec& k, const QuadConfig& q) {
  std::ostringstream os;
  os << k.d << '|' << fmt17(k.s) << '|' << fmt17(k.alpha1) << '|'
     << fmt17(k.alpha2) << '|' << int(k.profile.kind) << '|'
     << fmt17(k.profile.value) << '|' << fmt17(k.profile.c0) << '|';
  for (real c : k.profile.ck) os << fmt17(c) << ',';
  os << '|';
  for (real c : k.profile.sk) os << fmt17(c) << ',';
  os << '|';
  for (real c : k.profile.zc) os << fmt17(c) << ',';
  os << '|' << fmt17(k.profile.rot) << '|' << fmt17(k.profile.floor) << '|'
     << fmt17(k.profile.height) << '|' << fmt17(k.profile.cos_half) << '|'
     << k.profile.double_sided << '|';
  for (int i = 0; i < k.profile.axis.size(); ++i)
    os << fmt17(k.profile.axis[i]) << ',';
  os << '|' << int(k.radial.kind) << '|' << fmt17(k.radial.eps) << '|'
     << fmt17(k.radial.omega0) << '|' << fmt17(q.rel_tol) << '|'
     << q.gc_samples << '|' << fmt17(q.head_a) << '|' << fmt17(q.tail_T) << '|'
     << q.ibp_pairs << '|' << q.max_doublings << '|' << q.base_level << '|'
     << fmt17(q.radial_tol);
  return os.str();
}

const RadialParts& radial_parts(const KernelSpec& k, const QuadConfig& q) {
  static std::map<std::string, RadialParts> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  const std::string key = kernel_fingerprint(k, q);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, build_radial(k, q)).first;
  return it->second;
}

real eval_fc(const RadialParts& rp, real b) {
  if (b < 1e-280) return 0.0;
  return std::pow(b, 2.0 * rp.s) * rp.gc.eval(std::log(b));
}

real eval_fo(const RadialParts& rp, real beta) {
  if (std::abs(beta) < 1e-280) return 0.0;
  const real b = std::abs(beta);
  const real sgn = beta > 0 ? 1.0 : -1.0;
  if (rp.half) {
    const real lb = std::log(b);
    return beta * (rp.ph.eval(lb) - rp.mu_mean * lb);
  }
  return sgn * std::pow(b, 2.0 * rp.s) * rp.gs.eval(std::log(b));
}

// ---------------------------------------------------------------------------
// angular assembly
// ---------------------------------------------------------------------------

struct AngularAccum {
  MatR me;
  MatR mo;
  real scalar = 0.0;
};

// panel edges on [a, b] with widths growing geometrically from both ends;
// resolves kinks sitting exactly at a and b
std::vector<real> graded_segment(real a, real b, real grade_rel) {
  std::vector<real> edges;
  const real len = b - a;
  const real mid = 0.5 * (a + b);
  real w = len * grade_rel;
  edges.push_back(a);
  real x = a;
  while (x + w < mid) {
    x += w;
    edges.push_back(x);
    w *= 2.0;
  }
  edges.push_back(mid);
  std::vector<real> backw;
  w = len * grade_rel;
  x = b;
  while (x - w > mid) {
    x -= w;
    backw.push_back(x);
    w *= 2.0;
  }
  for (auto it = backw.rbegin(); it != backw.rend(); ++it) edges.push_back(*it);
  edges.push_back(b);
  return edges;
}

std::vector<real> cone_breakpoints_2d(const KernelSpec& k) {
  std::vector<real> out;
  if (k.profile.kind == ProfileSpec::Kind::cone) {
    const real chi0 = std::atan2(k.profile.axis[1], k.profile.axis[0]);
    const real g = std::acos(std::clamp(k.profile.cos_half, -1.0, 1.0));
    out.push_back(chi0 - g);
    out.push_back(chi0 + g);
    if (k.profile.double_sided) {
      out.push_back(chi0 + pi - g);
      out.push_back(chi0 + pi + g);
    }
  }
  return out;
}

AngularAccum angular_pass(const VecR& xi, const KernelSpec& k,
                          const RadialParts& rp, int level,
                          const QuadConfig& q) {
  const int d = k.d;
  AngularAccum acc;
  acc.me = MatR::Zero(d, d);
  acc.mo = MatR::Zero(d, d);
  const real w = two_pi * xi.norm();
  const VecR xh = xi / xi.norm();

  auto add_node = [&](const VecR& omega, real weight) {
    const real t = omega.dot(xh);
    const real beta = w * t;
    const real fc = eval_fc(rp, std::abs(beta));
    const real ae = k.profile_even(omega);
    const MatR oo = omega * omega.transpose();
    acc.me += (weight * ae * fc) * oo;
    acc.scalar += weight * ae * fc;
    if (rp.has_odd) {
      const real ao = k.profile_odd(omega);
      acc.mo += (weight * ao * eval_fo(rp, beta)) * oo;
    }
  };

  const GLRule& rule = gl_rule(16);

  if (d == 1) {
    VecR e(1);
    e << 1.0;
    add_node(e, 1.0);
    add_node(VecR(-e), 1.0);
  } else if (d == 2) {
    // kinks of Fc(|cos|) at phi0 +- pi/2, plus cone edges when present
    const real phi0 = std::atan2(xh[1], xh[0]);
    std::vector<real> brk = {phi0 + 0.5 * pi, phi0 + 1.5 * pi};
    for (real a : cone_breakpoints_2d(k)) brk.push_back(a);
    for (real& a : brk) {
      a = std::fmod(a, two_pi);
      if (a < 0) a += two_pi;
    }
    std::sort(brk.begin(), brk.end());
    brk.erase(
        std::unique(brk.begin(), brk.end(),
                    [](real a, real b) { return std::abs(a - b) < 1e-13; }),
        brk.end());
    const std::size_t nb = brk.size();
    for (std::size_t i = 0; i < nb; ++i) {
      const real a = brk[i];
      const real b = i + 1 < nb ? brk[i + 1] : brk[0] + two_pi;
      if (b - a < 1e-13) continue;
      const std::vector<real> edges =
          split_panels(graded_segment(a, b, q.grade_rel), 1 << level);
      for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
        const real h = 0.5 * (edges[p + 1] - edges[p]);
        const real c = 0.5 * (edges[p + 1] + edges[p]);
        for (std::size_t g = 0; g < rule.x.size(); ++g) {
          const real th = c + h * rule.x[g];
          VecR omega(2);
          omega << std::cos(th), std::sin(th);
          add_node(omega, h * rule.w[g]);
        }
      }
    }
  } else {
    // polar frame aligned with xi, so beta = w cos(theta) is independent of
    // the azimuth and the Fc kink is the single ring theta = pi/2
    VecR e1(3), e2(3);
    {
      int jmin = 0;
      for (int c = 1; c < 3; ++c)
        if (std::abs(xh[c]) < std::abs(xh[jmin])) jmin = c;
      VecR u = VecR::Zero(3);
      u[jmin] = 1.0;
      e1 = (u - u.dot(xh) * xh).normalized();
      e2 = VecR(3);
      e2[0] = xh[1] * e1[2] - xh[2] * e1[1];
      e2[1] = xh[2] * e1[0] - xh[0] * e1[2];
      e2[2] = xh[0] * e1[1] - xh[1] * e1[0];
    }
    const bool cone = k.profile.kind == ProfileSpec::Kind::cone;
    real psi = 0.0, phic = 0.0, gam = 0.0;
    if (cone) {
      const VecR& ax = k.profile.axis;
      psi = std::acos(std::clamp(xh.dot(ax), -1.0, 1.0));
      phic = std::atan2(ax.dot(e2), ax.dot(e1));
      gam = std::acos(std::clamp(k.profile.cos_half, -1.0, 1.0));
    }

    std::vector<real> tbrk = {0.0, 0.5 * pi, pi};
    if (cone) {
      // polar angles where a cone edge circle is tangent to a theta ring;
      // the azimuthal section changes character there
      auto push = [&](real t) {
        if (t > 1e-12 && t < pi - 1e-12) tbrk.push_back(t);
      };
      push(std::abs(psi - gam));
      push(std::min(psi + gam, pi));
      if (k.profile.double_sided) {
        push(std::abs(pi - psi - gam));
        push(std::min(pi - psi + gam, pi));
      }
    }
    std::sort(tbrk.begin(), tbrk.end());
    tbrk.erase(
        std::unique(tbrk.begin(), tbrk.end(),
                    [](real a, real b) { return std::abs(a - b) < 1e-13; }),
        tbrk.end());

    const int nphi = q.phi_base << level;
    for (std::size_t seg = 0; seg + 1 < tbrk.size(); ++seg) {
      const std::vector<real> edges = split_panels(
          graded_segment(tbrk[seg], tbrk[seg + 1], q.grade_rel), 1 << level);
      for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
        const real h = 0.5 * (edges[p + 1] - edges[p]);
        const real c = 0.5 * (edges[p + 1] + edges[p]);
        for (std::size_t g = 0; g < rule.x.size(); ++g) {
          const real th = c + h * rule.x[g];
          const real st = std::sin(th), ct = std::cos(th);
          const real wt = h * rule.w[g] * st;
          auto node_at = [&](real phv, real pw) {
            const VecR omega =
                ct * xh + st * (std::cos(phv) * e1 + std::sin(phv) * e2);
            add_node(omega, wt * pw);
          };
          if (!cone) {
            for (int j = 0; j < nphi; ++j)
              node_at(two_pi * (j + 0.5) / nphi, two_pi / nphi);
          } else {
            // between edge crossings the profile is constant and the
            // integrand a degree-2 trig polynomial in phi, so GL16 panels
            // of width <= pi/2 are exact
            std::vector<real> pb;
            auto crossing = [&](real ch) {
              const real den = std::sin(th) * std::sin(psi);
              if (std::abs(den) < 1e-300) return;
              const real cv = (ch - ct * std::cos(psi)) / den;
              if (cv > -1.0 && cv < 1.0) {
                const real dphi = std::acos(cv);
                pb.push_back(phic - dphi);
                pb.push_back(phic + dphi);
              }
            };
            crossing(k.profile.cos_half);
            if (k.profile.double_sided) crossing(-k.profile.cos_half);
            for (real& a : pb) {
              a = std::fmod(a, two_pi);
              if (a < 0) a += two_pi;
            }
            std::sort(pb.begin(), pb.end());
            if (pb.empty()) pb.push_back(0.0);
            const std::size_t na = pb.size();
            for (std::size_t i = 0; i < na; ++i) {
              const real a = pb[i];
              const real b = i + 1 < na ? pb[i + 1] : pb[0] + two_pi;
              if (b - a < 1e-14) continue;
              const int parts = std::max(1, int(std::ceil((b - a) / (0.5 * pi))));
              for (int u = 0; u < parts; ++u) {
                const real pa = a + (b - a) * u / parts;
                const real pbnd = a + (b - a) * (u + 1) / parts;
                const real hh = 0.5 * (pbnd - pa);
                const real cc = 0.5 * (pbnd + pa);
                for (std::size_t gg = 0; gg < rule.x.size(); ++gg)
                  node_at(cc + hh * rule.x[gg], hh * rule.w[gg]);
              }
            }
          }
        }
      }
    }
  }
  const real pref = 1.0 - k.s;
  acc.me *= pref;
  // the multiplier sending u-hat to (L u)-hat is
  //   M = int (yhat yhat^T) (1 - e^{i b} + i b chi) K dy,  b = 2 pi xi . y,
  // so the odd part carries (b chi - sin b): the negative of the plain sine
  // transform accumulated above
  acc.mo *= -pref;
  acc.scalar *= pref;
  return acc;
}

AngularAccum angular_converged(const VecR& xi, const KernelSpec& k,
                               const QuadConfig& q) {
  const RadialParts& rp = radial_parts(k, q);
  if (k.d == 1) return angular_pass(xi, k, rp, q.base_level, q);
  AngularAccum cur = angular_pass(xi, k, rp, q.base_level, q);
  for (int l = q.base_level + 1; l <= q.base_level + q.max_doublings; ++l) {
    AngularAccum next = angular_pass(xi, k, rp, l, q);
    const real scale = next.me.norm() + next.mo.norm() + 1e-12;
    const real diff = (next.me - cur.me).norm() + (next.mo - cur.mo).norm();
    cur = next;
    if (diff <= q.rel_tol * scale) return cur;
  }
  throw convergence_error(
      "angular quadrature stalled after doubling cap at |xi| = " +
      fmt17(xi.norm()));
}

real jbar_constant(real s) {
  static std::map<long long, real> cache;
  static std::mutex mtx;
  long long sbits;
  std::memcpy(&sbits, &s, sizeof(s));
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(sbits);
  if (it != cache.end()) return it->second;
  real total;
  if (s > 0.5) {
    // int_0^inf (t - sin t) t^{-1-2s} dt = I0(s - 1/2) / (2s)
    const real sp = s - 0.5;
    const real i0 =
        pi / (2.0 * std::exp(std::lgamma(1.0 + 2.0 * sp)) * std::sin(pi * sp));
    total = i0 / (2.0 * s);
  } else {
    // partial sum of int |sin t| t^{-1-2s} over pi panels plus a tail
    // majorant, so the result is still a genuine upper bound
    const GLRule& rule = gl_rule(8);
    const int K = 2000;
    total = 0.0;
    for (int k = 0; k < K; ++k) {
      auto f = [&](real t) {
        return std::abs(std::sin(t)) * std::pow(t, -1.0 - 2.0 * s);
      };
      total += integrate_gl(f, k == 0 ? 0.0 : k * pi, (k + 1) * pi, rule);
    }
    total += std::pow(K * pi, -2.0 * s) / (2.0 * s);
  }
  cache.emplace(sbits, total);
  return total;
}

}  // namespace

LameConstants derive_lame_constants(int d, real s, const QuadConfig& q) {
  static std::map<std::pair<int, long long>, LameConstants> cache;
  static std::mutex mtx;
  long long sbits;
  static_assert(sizeof(sbits) == sizeof(s));
  std::memcpy(&sbits, &s, sizeof(s));
  {
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find({d, sbits});
    if (it != cache.end()) return it->second;
  }
  const KernelSpec k = kernel_fractional(d, s);
  VecR xi = VecR::Zero(d);
  xi[0] = 1.0;
  QuadConfig q2 = q;
  q2.base_level = q.base_level + 1;
  const AngularAccum a1 = angular_converged(xi, k, q);
  const AngularAccum a2 = angular_converged(xi, k, q2);
  const real p2s = std::pow(two_pi, 2.0 * s);
  LameConstants c;
  c.d = d;
  c.s = s;
  if (d == 1) {
    const real t1 = a1.me(0, 0) / p2s, t2 = a2.me(0, 0) / p2s;
    if (std::abs(t1 - t2) > 1e-6 * std::abs(t2))
      throw convergence_error("constant derivation levels disagree: " +
                              fmt17(t1) + " vs " + fmt17(t2));
    c.ell1 = t2;
    if (!(c.ell1 > 0.0))
      throw solver_error("derived constant must be positive");
  } else {
    const real l1a = a1.me(1, 1) / p2s, l1b = a2.me(1, 1) / p2s;
    const real ta = a1.me(0, 0) / p2s, tb = a2.me(0, 0) / p2s;
    if (std::abs(l1a - l1b) > 1e-6 * std::abs(l1b) ||
        std::abs(ta - tb) > 1e-6 * std::abs(tb))
      throw convergence_error("constant derivation levels disagree: " +
                              fmt17(l1a) + " vs " + fmt17(l1b) + ", " +
                              fmt17(ta) + " vs " + fmt17(tb));
    c.ell1 = l1b;
    c.ell2 = tb - l1b;
    if (!(c.ell1 > 0.0) || !(*c.ell2 > 0.0))
      throw solver_error("derived constants must be positive");
    // the two constants coincide exactly at s = 1/2 and are distinct
    // elsewhere; flag a derivation that collapses them away from 1/2
    if (s != 0.5 && std::abs(c.ell1 - *c.ell2) <= 1e-9 * c.ell1)
      throw solver_error("derived constants unexpectedly equal at s = " +
                         fmt17(s));
  }
  std::lock_guard<std::mutex> lock(mtx);
  cache.emplace(std::make_pair(d, sbits), c);
  return c;
}

MatR symbol_lame(const VecR& xi, const LameConstants& c, real alpha) {
  const int d = c.d;
  MatR m = MatR::Zero(d, d);
  const real nx = xi.norm();
  if (nx == 0.0) return m;
  const real scale = alpha * std::pow(two_pi * nx, 2.0 * c.s);
  if (d == 1) {
    m(0, 0) = scale * c.ell1;
    return m;
  }
  const VecR xh = xi / nx;
  m = scale *
      (c.ell1 * MatR::Identity(d, d) + *c.ell2 * (xh * xh.transpose()));
  return m;
}

SymbolMatrix symbol_general(const VecR& xi, const KernelSpec& k,
                            const QuadConfig& q) {
  SymbolMatrix out;
  out.xi = xi;
  if (!xi.allFinite()) throw config_error("frequency must be finite");
  if (int(xi.size()) != k.d)
    throw config_error("frequency dimension does not match the kernel");
  if (xi.norm() == 0.0) {
    out.me = MatR::Zero(k.d, k.d);
    out.mo = MatR::Zero(k.d, k.d);
    return out;
  }
  const AngularAccum acc = angular_converged(xi, k, q);
  out.me = acc.me;
  out.mo = acc.mo;

  // positive semidefiniteness of the Hermitian part
  Eigen::SelfAdjointEigenSolver<MatR> es(out.me);
  const real lmax = es.eigenvalues().maxCoeff();
  if (es.eigenvalues().minCoeff() < -1e-10 * std::max(lmax, 1e-30))
    throw solver_error("even part lost positive semidefiniteness at |xi| = " +
                       fmt17(xi.norm()));

  // growth bound ||M(xi)||_2 <= B (2 pi |xi|)^{2s}; no scale-uniform bound
  // exists for odd profiles at s = 1/2, so that case is not checked
  if (k.even_profile || k.s != 0.5) {
    const real B = upper_bound_constant(k, q);
    Eigen::JacobiSVD<MatC> svd(out.full());
    const real nm = svd.singularValues()(0);
    const real cap = B * std::pow(two_pi * xi.norm(), 2.0 * k.s);
    if (nm > cap * (1.0 + 1e-6))
      throw solver_error("symbol exceeded its growth bound: " + fmt17(nm) +
                         " > " + fmt17(cap));
  }
  return out;
}

MatR symbol_even_part(const VecR& xi, const KernelSpec& k,
                      const QuadConfig& q) {
  if (xi.norm() == 0.0) return MatR::Zero(k.d, k.d);
  return angular_converged(xi, k, q).me;
}

real scalar_symbol(const VecR& xi, const KernelSpec& k, const QuadConfig& q) {
  if (xi.norm() == 0.0) return 0.0;
  return angular_converged(xi, k, q).scalar;
}

CoercivityResult coercivity_constant(int d, real s, real alpha1,
                                     const QuadConfig& q) {
  if (!(alpha1 > 0.0)) throw config_error("alpha1 must be positive");
  const KernelSpec k = kernel_fractional(d, s);
  VecR nu = VecR::Zero(d);
  nu[0] = 1.0;
  const MatR me = symbol_even_part(nu, k, q);
  const real p2s = std::pow(two_pi, 2.0 * s);
  CoercivityResult res;
  res.argmin_nu = nu;
  if (d == 1) {
    res.min_quotient = me(0, 0) / p2s;
    res.argmin_mu = nu;
    res.scan_points = 1;
  } else {
    // by rotational symmetry only the angle between mu and nu matters, and
    // the minimum over the sphere is attained in a plane containing nu
    auto f = [&](real gamma) {
      VecR mu = VecR::Zero(d);
      mu[0] = std::cos(gamma);
      mu[1] = std::sin(gamma);
      return mu.dot(me * mu) / p2s;
    };
    const int n = 256;
    res.scan_points = n;
    real best = f(0.0), bestg = 0.0;
    for (int j = 1; j < n; ++j) {
      const real g = pi * j / n;
      const real v = f(g);
      if (v < best) {
        best = v;
        bestg = g;
      }
    }
    const BrentResult br = brent_min(f, bestg - pi / n, bestg + pi / n, 1e-12);
    if (br.fx < best) {
      best = br.fx;
      bestg = br.x;
    }
    res.min_quotient = best;
    VecR mu = VecR::Zero(d);
    mu[0] = std::cos(bestg);
    mu[1] = std::sin(bestg);
    res.argmin_mu = mu;
  }
  res.min_psi_raw = res.min_quotient * p2s;
  res.C = alpha1 * res.min_quotient;
  if (!(res.C > 0.0))
    throw solver_error("coercivity constant must be positive");
  return res;
}

real upper_bound_constant(const KernelSpec& k, const QuadConfig& q) {
  const LameConstants c = derive_lame_constants(k.d, k.s, q);
  real B = k.alpha2 * c.total();
  if (!k.even_profile) {
    if (k.s == 0.5)
      throw config_error(
          "no scale-uniform growth bound for odd profiles at s = 1/2");
    B += (1.0 - k.s) * k.max_abs_odd * k.m_max * sphere_area(k.d) *
         jbar_constant(k.s);
  }
  return B;
}

SymbolField tabulate_symbol(const GridSpec& grid, const KernelSpec& k,
                            const QuadConfig& q) {
  if (grid.d != k.d) throw config_error("grid and kernel dimensions disagree");
  SymbolField sf;
  sf.grid = grid;
  sf.s = k.s;
  const long tot = grid.total();
  sf.table.assign(tot, MatC::Zero(k.d, k.d));
  radial_parts(k, q);  // build the fits before entering the parallel region

  long bad_index = -1;
  std::string bad_msg;
#pragma omp parallel for schedule(dynamic, 16)
  for (long f = 0; f < tot; ++f) {
    const long cf = conjugate_flat(grid, f);
    if (cf < f) continue;  // filled from its conjugate partner
    try {
      const VecR xi0 = grid.frequency(f);
      if (xi0.norm() == 0.0) continue;
      // a lattice mode with a Nyquist component aliases both signs of that
      // continuum frequency; averaging the symbol over the aliased
      // representatives keeps the table conjugate-symmetric, so real fields
      // stay real under the multiplier
      std::vector<int> nyq;
      const auto idx0 = grid.multi(f);
      for (int a = 0; a < grid.d; ++a)
        if (2 * idx0[a] == grid.n[a]) nyq.push_back(a);
      MatR me = MatR::Zero(k.d, k.d);
      MatR mo = MatR::Zero(k.d, k.d);
      const int combos = 1 << nyq.size();
      for (int mask = 0; mask < combos; ++mask) {
        VecR xi = xi0;
        for (std::size_t b = 0; b < nyq.size(); ++b)
          if (mask & (1 << b)) xi[nyq[b]] = -xi[nyq[b]];
        const AngularAccum acc = angular_converged(xi, k, q);
        me += acc.me;
        mo += acc.mo;
      }
      me /= combos;
      mo /= combos;
      MatC m = me.cast<cplx>() + cplx(0.0, 1.0) * mo.cast<cplx>();
      if (cf == f) m = me.cast<cplx>();  // self-paired modes are pure cosines
      sf.table[f] = m;
      if (cf != f) sf.table[cf] = m.conjugate();
    } catch (const std::exception& e) {
#pragma omp critical
      {
        if (bad_index < 0 || f < bad_index) {
          bad_index = f;
          bad_msg = e.what();
        }
      }
    }
  }
  if (bad_index >= 0) {
    const auto idx = grid.multi(bad_index);
    throw convergence_error("symbol tabulation failed at lattice index (" +
                            std::to_string(idx[0]) + "," +
                            std::to_string(idx[1]) + "," +
                            std::to_string(idx[2]) + "): " + bad_msg);
  }
  return sf;
}

}  // namespace nonlocal
