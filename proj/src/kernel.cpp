#include "nonlocal/kernel.hpp"

#include <algorithm>
#include <cmath>

namespace nonlocal {

int chi_s(real s, const VecR& y) {
  if (s < 0.5) return 0;
  if (s > 0.5) return 1;
  return y.norm() < 1.0 ? 1 : 0;
}

real sphere_area(int d) {
  switch (d) {
    case 1: return 2.0;
    case 2: return two_pi;
    default: return 2.0 * two_pi;
  }
}

SphereRule sphere_rule(int d, int level) {
  SphereRule r;
  if (d == 1) {
    VecR p(1), m(1);
    p << 1.0;
    m << -1.0;
    r.nodes = {p, m};
    r.weights = {1.0, 1.0};
    return r;
  }
  if (d == 2) {
    const int n = 256 << level;
    r.nodes.reserve(n);
    r.weights.assign(n, two_pi / n);
    for (int j = 0; j < n; ++j) {
      const real th = two_pi * (j + 0.5) / n;
      VecR w(2);
      w << std::cos(th), std::sin(th);
      r.nodes.push_back(w);
    }
    return r;
  }
  // d == 3: Gauss-Legendre in the polar cosine, uniform in azimuth; the node
  // set is symmetric under omega -> -omega so odd integrands cancel exactly.
  const int nt = 32 << level;
  const int nphi = 64 << level;
  const GLRule& g = gl_rule(nt);
  r.nodes.reserve(static_cast<std::size_t>(nt) * nphi);
  r.weights.reserve(static_cast<std::size_t>(nt) * nphi);
  for (int i = 0; i < nt; ++i) {
    const real t = g.x[i];
    const real rho = std::sqrt(std::max(0.0, 1.0 - t * t));
    for (int j = 0; j < nphi; ++j) {
      const real ph = two_pi * (j + 0.5) / nphi;
      VecR w(3);
      w << rho * std::cos(ph), rho * std::sin(ph), t;
      r.nodes.push_back(w);
      r.weights.push_back(g.w[i] * two_pi / nphi);
    }
  }
  return r;
}

real KernelSpec::profile_raw(const VecR& omega) const {
  real raw = 0.0;
  switch (profile.kind) {
    case ProfileSpec::Kind::constant:
      raw = profile.value;
      break;
    case ProfileSpec::Kind::harmonic2d: {
      const real th = std::atan2(omega[1], omega[0]) - profile.rot;
      raw = profile.c0;
      for (std::size_t k = 0; k < profile.ck.size(); ++k)
        raw += profile.ck[k] * std::cos((k + 1) * th);
      for (std::size_t k = 0; k < profile.sk.size(); ++k)
        raw += profile.sk[k] * std::sin((k + 1) * th);
      break;
    }
    case ProfileSpec::Kind::zonal: {
      const real t = omega.dot(profile.axis);
      real tp = 1.0;
      for (real c : profile.zc) {
        raw += c * tp;
        tp *= t;
      }
      break;
    }
    case ProfileSpec::Kind::cone: {
      const real t = omega.dot(profile.axis);
      const bool inside =
          profile.double_sided ? std::abs(t) >= profile.cos_half : t >= profile.cos_half;
      raw = profile.floor + (inside ? profile.height : 0.0);
      break;
    }
  }
  return raw;
}

real KernelSpec::profile_at(const VecR& omega) const {
  return std::clamp(profile_raw(omega), alpha1, alpha2);
}

real KernelSpec::profile_even(const VecR& omega) const {
  return 0.5 * (profile_at(omega) + profile_at(VecR(-omega)));
}

real KernelSpec::profile_odd(const VecR& omega) const {
  return 0.5 * (profile_at(omega) - profile_at(VecR(-omega)));
}

real KernelSpec::radial_at(real r) const {
  if (radial.kind == RadialSpec::Kind::constant) return 1.0;
  return std::exp(radial.eps * (1.0 + std::sin(radial.omega0 * std::log(r))));
}

real KernelSpec::eval(const VecR& y) const {
  const real r = y.norm();
  if (r == 0.0) throw std::domain_error("kernel evaluated at y = 0");
  return (1.0 - s) * profile_at(VecR(y / r)) * radial_at(r) *
         std::pow(r, -(d + 2.0 * s));
}

namespace {

// normalized first angular moment at unit radius: |int a(w) w dS| / int a dS
real unit_first_moment(const KernelSpec& spec, int level) {
  const SphereRule rule = sphere_rule(spec.d, level);
  VecR num = VecR::Zero(spec.d);
  real den = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const real a = spec.profile_at(rule.nodes[i]);
    num += rule.weights[i] * a * rule.nodes[i];
    den += rule.weights[i] * a;
  }
  return num.norm() / den;
}

// coarse scan over [a, b] followed by a local Brent polish
real scan_extreme(const std::function<real(real)>& f, real a, real b,
                  bool maximize) {
  const int n = 4096;
  int best_j = 0;
  real best = f(a);
  for (int j = 1; j <= n; ++j) {
    const real v = f(a + (b - a) * j / n);
    if (maximize ? v > best : v < best) {
      best = v;
      best_j = j;
    }
  }
  const real h = (b - a) / n;
  const real x0 = a + (b - a) * best_j / n;
  auto g = [&](real x) { return maximize ? -f(x) : f(x); };
  const BrentResult r =
      brent_min(g, std::max(a, x0 - h), std::min(b, x0 + h), 1e-13);
  const real polished = maximize ? -r.fx : r.fx;
  return maximize ? std::max(best, polished) : std::min(best, polished);
}

}  // namespace

KernelSpec make_kernel(int d, real s, real alpha1, real alpha2,
                       const ProfileSpec& profile, const RadialSpec& radial) {
  if (d < 1 || d > 3) throw config_error("dimension must be 1, 2, or 3");
  if (!(s > 0.0 && s < 1.0)) throw config_error("order s must lie in (0,1)");
  if (!(alpha1 > 0.0) || !(alpha2 >= alpha1))
    throw config_error("ellipticity bounds require 0 < alpha1 <= alpha2");

  KernelSpec k;
  k.d = d;
  k.s = s;
  k.alpha1 = alpha1;
  k.alpha2 = alpha2;
  k.profile = profile;
  k.radial = radial;

  switch (profile.kind) {
    case ProfileSpec::Kind::harmonic2d:
      if (d != 2) throw config_error("harmonic2d profile requires d = 2");
      break;
    case ProfileSpec::Kind::zonal:
      if (d == 2) throw config_error("zonal profile is for d = 1 or d = 3");
      [[fallthrough]];
    case ProfileSpec::Kind::cone:
      if (k.profile.axis.size() != d || k.profile.axis.norm() == 0.0) {
        k.profile.axis = VecR::Zero(d);
        k.profile.axis[d - 1] = 1.0;
      } else {
        k.profile.axis.normalize();
      }
      break;
    default:
      break;
  }

  if (radial.kind == RadialSpec::Kind::constant) {
    k.mu.c0 = 1.0;
    k.mu_fit_err = 0.0;
    k.m_min = k.m_max = 1.0;
  } else {
    if (!(radial.eps >= 0.0) || !(radial.omega0 > 0.0))
      throw config_error("logosc radial modulation requires eps >= 0, omega0 > 0");
    const real eps = radial.eps, om = radial.omega0;
    auto mu_exact = [eps, om](real u) {
      return std::exp(eps * (1.0 + std::sin(om * u)));
    };
    k.mu = fit_periodic(mu_exact, two_pi / om, 64);
    real err = 0.0;
    for (int j = 0; j < 4096; ++j) {
      const real u = two_pi / om * j / 4096.0;
      err = std::max(err, std::abs(k.mu.eval(u) - mu_exact(u)));
    }
    k.mu_fit_err = err;
    k.m_min = 1.0;
    k.m_max = std::exp(2.0 * eps);
  }

  // every supported profile reduces to one parameter: the plane angle in
  // d = 2, t = omega . axis in d = 3, and the two endpoints in d = 1
  real rmin = 0.0, rmax = 0.0, max_odd = 0.0, max_even = 0.0;
  if (profile.kind == ProfileSpec::Kind::constant) {
    rmin = rmax = profile.value;
    max_even = std::clamp(profile.value, alpha1, alpha2);
  } else if (d == 1) {
    VecR e(1);
    e << 1.0;
    const real ap = k.profile_raw(e), am = k.profile_raw(VecR(-e));
    rmin = std::min(ap, am);
    rmax = std::max(ap, am);
    const real cp = std::clamp(ap, alpha1, alpha2);
    const real cm = std::clamp(am, alpha1, alpha2);
    max_even = 0.5 * std::abs(cp + cm);
    max_odd = 0.5 * std::abs(cp - cm);
  } else {
    VecR perp;
    if (d == 3) {
      const VecR& ax = k.profile.axis;
      int j = 0;
      for (int c = 1; c < 3; ++c)
        if (std::abs(ax[c]) < std::abs(ax[j])) j = c;
      perp = VecR::Zero(3);
      perp[j] = 1.0;
      perp = (perp - perp.dot(ax) * ax).normalized();
    }
    auto omega_of = [&](real p) {
      VecR w(d);
      if (d == 2) {
        w << std::cos(p), std::sin(p);
      } else {
        const real t = std::clamp(p, -1.0, 1.0);
        w = t * k.profile.axis +
            std::sqrt(std::max(0.0, 1.0 - t * t)) * perp;
      }
      return w;
    };
    const real plo = d == 2 ? 0.0 : -1.0;
    const real phi = d == 2 ? two_pi : 1.0;
    rmin = scan_extreme([&](real p) { return k.profile_raw(omega_of(p)); },
                        plo, phi, false);
    rmax = scan_extreme([&](real p) { return k.profile_raw(omega_of(p)); },
                        plo, phi, true);
    max_odd = scan_extreme(
        [&](real p) { return std::abs(k.profile_odd(omega_of(p))); }, plo, phi,
        true);
    max_even = scan_extreme(
        [&](real p) { return std::abs(k.profile_even(omega_of(p))); }, plo,
        phi, true);
  }
  k.profile_min = std::clamp(rmin, alpha1, alpha2);
  k.profile_max = std::clamp(rmax, alpha1, alpha2);
  k.max_abs_even = max_even;
  k.max_abs_odd = max_odd;
  k.even_profile = max_odd <= 1e-13 * std::max(1.0, k.profile_max);

  const real lo = k.profile_min * k.m_min, hi = k.profile_max * k.m_max;
  if (lo < alpha1 * (1.0 - 1e-9) || hi > alpha2 * (1.0 + 1e-9))
    throw config_error("kernel leaves the declared comparability band: product range [" +
                       fmt17(lo) + ", " + fmt17(hi) + "] vs [" + fmt17(alpha1) + ", " +
                       fmt17(alpha2) + "]");

  if (s == 0.5) {
    const real moment = unit_first_moment(k, 2);
    if (moment > 1e-12)
      throw config_error(
          "s = 1/2 requires the vanishing first angular moment; measured " +
          fmt17(moment));
  }
  return k;
}

real check_cancellation(const KernelSpec& spec, const std::vector<real>& radii,
                        int level) {
  if (radii.empty()) throw config_error("cancellation check needs at least one radius");
  const real unit = unit_first_moment(spec, level);
  real worst = 0.0;
  for (real r : radii) {
    if (!(r > 0.0)) throw config_error("cancellation radii must be positive");
    worst = std::max(worst, r * unit);
  }
  return worst;
}

real HomotopyKernel::eval(const VecR& y) const {
  const real r = y.norm();
  if (r == 0.0) throw std::domain_error("kernel evaluated at y = 0");
  return base.alpha1 * (1.0 - tau) * std::pow(r, -(base.d + 2.0 * base.s)) +
         tau * base.eval(y);
}

real HomotopyKernel::band_hi() const {
  return std::max(base.alpha2, base.alpha1 / (1.0 - base.s));
}

HomotopyKernel homotopy_kernel(const KernelSpec& base, real tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw config_error("tau must lie in [0,1]");
  return HomotopyKernel{tau, base};
}

namespace {

VecR default_axis(int d) {
  VecR e(d);
  if (d == 1)
    e << 1.0;
  else if (d == 2)
    e << 0.6, 0.8;
  else
    e << 0.36, 0.48, 0.8;
  return e;
}

}  // namespace

KernelSpec kernel_fractional(int d, real s) {
  ProfileSpec p;
  p.kind = ProfileSpec::Kind::constant;
  p.value = 1.0;
  return make_kernel(d, s, 1.0, 1.0, p, RadialSpec{});
}

KernelSpec kernel_band2(int d, real s) {
  if (d == 1) {
    ProfileSpec p;
    p.kind = ProfileSpec::Kind::constant;
    p.value = 1.0;
    RadialSpec r;
    r.kind = RadialSpec::Kind::logosc;
    r.eps = 0.5 * std::log(2.0);
    r.omega0 = 2.0;
    return make_kernel(1, s, 1.0, 2.0, p, r);
  }
  ProfileSpec p;
  if (d == 2) {
    p.kind = ProfileSpec::Kind::harmonic2d;
    p.c0 = 1.5;
    p.ck = {0.0, 0.5};
    p.rot = 0.3;
  } else {
    p.kind = ProfileSpec::Kind::zonal;
    p.zc = {1.0, 0.0, 1.0};
    p.axis = default_axis(3);
  }
  return make_kernel(d, s, 1.0, 2.0, p, RadialSpec{});
}

KernelSpec kernel_band4(int d, real s) {
  RadialSpec r;
  r.kind = RadialSpec::Kind::logosc;
  r.eps = 0.15;
  r.omega0 = 2.0;
  if (d == 1) {
    ProfileSpec p;
    p.kind = ProfileSpec::Kind::constant;
    p.value = 1.0;
    r.eps = 0.5 * std::log(4.0);
    return make_kernel(1, s, 1.0, 4.0, p, r);
  }
  const real top = 4.0 / std::exp(2.0 * r.eps);  // profile peak so a*m tops at 4
  ProfileSpec p;
  if (d == 2) {
    p.kind = ProfileSpec::Kind::harmonic2d;
    p.c0 = 0.5 * (1.0 + top);
    p.ck = {0.0, 0.5 * (top - 1.0)};
    p.rot = 0.3;
  } else {
    p.kind = ProfileSpec::Kind::zonal;
    p.zc = {1.0, 0.0, top - 1.0};
    p.axis = default_axis(3);
  }
  return make_kernel(d, s, 1.0, 4.0, p, r);
}

KernelSpec kernel_cone(int d, real s) {
  ProfileSpec p;
  p.kind = ProfileSpec::Kind::cone;
  p.floor = 1.0;
  p.height = 1.0;
  p.cos_half = std::cos(0.6);
  p.double_sided = true;
  p.axis = default_axis(d);
  return make_kernel(d, s, 1.0, 2.0, p, RadialSpec{});
}

KernelSpec kernel_odd_harmonic(int d, real s) {
  ProfileSpec p;
  if (d == 2) {
    // third harmonic: odd under omega -> -omega yet orthogonal to the first
    // harmonic, so the spherical first moment vanishes and the s = 1/2 gate
    // admits it
    p.kind = ProfileSpec::Kind::harmonic2d;
    p.c0 = 1.5;
    p.ck = {0.0, 0.4};
    p.sk = {0.0, 0.0, 0.3};
    p.rot = 0.1;
    return make_kernel(2, s, 0.75, 2.25, p, RadialSpec{});
  }
  if (d == 3) {
    // odd part proportional to the third Legendre polynomial in t
    p.kind = ProfileSpec::Kind::zonal;
    p.zc = {1.5, -0.45, 0.5, 0.75};
    p.axis = default_axis(3);
    return make_kernel(3, s, 0.75, 2.35, p, RadialSpec{});
  }
  // d = 1: odd means a(+1) != a(-1), whose first moment never vanishes; only
  // admissible away from s = 1/2
  p.kind = ProfileSpec::Kind::zonal;
  p.zc = {1.5, 0.3};
  p.axis = default_axis(1);
  return make_kernel(1, s, 1.2, 1.8, p, RadialSpec{});
}

std::vector<KernelSpec> builtin_kernels(int d, real s) {
  std::vector<KernelSpec> v;
  v.push_back(kernel_fractional(d, s));
  v.push_back(kernel_band2(d, s));
  v.push_back(kernel_band4(d, s));
  v.push_back(kernel_cone(d, s));
  if (!(d == 1 && s == 0.5)) v.push_back(kernel_odd_harmonic(d, s));
  return v;
}

}  // namespace nonlocal
