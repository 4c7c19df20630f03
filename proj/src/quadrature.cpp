#include "nonlocal/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

namespace nonlocal {

namespace {

GLRule make_gl(int n) {
  GLRule r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < n; ++i) {
    // root of P_n, decreasing order; Newton on the three-term recurrence
    real x = std::cos(pi * (i + 0.75) / (n + 0.5));
    real dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      real p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const real pk = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const real dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) {
        // settle one more step for full precision
        p0 = 1.0;
        p1 = x;
        for (int k = 2; k <= n; ++k) {
          const real pk = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
          p0 = p1;
          p1 = pk;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        x -= p1 / dp;
        break;
      }
    }
    r.x[i] = x;
    r.w[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return r;
}

}  // namespace

const GLRule& gl_rule(int n) {
  static std::map<int, GLRule> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make_gl(n)).first;
  return it->second;
}

std::vector<real> edges_geometric_from(real a, real b, real first_width, real ratio) {
  std::vector<real> e{a};
  real pos = a, w = first_width;
  while (pos + w < b) {
    pos += w;
    e.push_back(pos);
    w *= ratio;
  }
  if (b - e.back() < 0.25 * (e.size() > 1 ? e.back() - e[e.size() - 2] : first_width) &&
      e.size() > 1) {
    e.back() = b;  // merge a sliver of a final panel into its neighbor
  } else {
    e.push_back(b);
  }
  return e;
}

std::vector<real> edges_geometric_to(real a, real b, real last_width, real ratio) {
  std::vector<real> rev = edges_geometric_from(0.0, b - a, last_width, ratio);
  std::vector<real> e(rev.size());
  for (std::size_t i = 0; i < rev.size(); ++i) e[i] = b - rev[rev.size() - 1 - i];
  e.front() = a;
  e.back() = b;
  return e;
}

std::vector<real> edges_uniform(real a, real b, real max_width) {
  const int m = std::max(1, static_cast<int>(std::ceil((b - a) / max_width)));
  std::vector<real> e(m + 1);
  for (int i = 0; i <= m; ++i) e[i] = a + (b - a) * static_cast<real>(i) / m;
  return e;
}

real refine_until(const std::function<real(int)>& eval, real rel_tol,
                  int max_level, const std::string& what) {
  real prev = eval(0);
  for (int level = 1; level <= max_level; ++level) {
    const real cur = eval(level);
    const real scale = std::max({std::abs(cur), std::abs(prev), 1e-300});
    if (std::abs(cur - prev) <= rel_tol * scale) return cur;
    prev = cur;
  }
  throw convergence_error("refinement did not converge: " + what);
}

real TrigPoly::eval(real u) const {
  real s = c0;
  for (const Term& t : terms)
    s += t.a * std::cos(t.omega * u) + t.b * std::sin(t.omega * u);
  return s;
}

TrigPoly TrigPoly::derivative() const {
  TrigPoly d;
  d.c0 = 0.0;
  d.terms.reserve(terms.size());
  for (const Term& t : terms)
    d.terms.push_back({t.b * t.omega, -t.a * t.omega, t.omega});
  return d;
}

TrigPoly TrigPoly::scaled(real c) const {
  TrigPoly r = *this;
  r.c0 *= c;
  for (Term& t : r.terms) {
    t.a *= c;
    t.b *= c;
  }
  return r;
}

TrigPoly TrigPoly::plus(const TrigPoly& o) const {
  TrigPoly r = *this;
  r.c0 += o.c0;
  for (const Term& to : o.terms) {
    bool merged = false;
    for (Term& t : r.terms) {
      if (t.omega == to.omega) {
        t.a += to.a;
        t.b += to.b;
        merged = true;
        break;
      }
    }
    if (!merged) r.terms.push_back(to);
  }
  return r;
}

TrigPoly TrigPoly::shifted(real delta) const {
  TrigPoly r;
  r.c0 = c0;
  r.terms.reserve(terms.size());
  for (const Term& t : terms) {
    const real c = std::cos(t.omega * delta), s = std::sin(t.omega * delta);
    r.terms.push_back({t.a * c + t.b * s, -t.a * s + t.b * c, t.omega});
  }
  return r;
}

real TrigPoly::sup_bound() const {
  real s = std::abs(c0);
  for (const Term& t : terms) s += std::hypot(t.a, t.b);
  return s;
}

real TrigPoly::exp_tail(real p, real U) const {
  real s = c0 * std::exp(-p * U) / p;
  for (const Term& t : terms) {
    const real den = p * p + t.omega * t.omega;
    const real c = std::cos(t.omega * U), sn = std::sin(t.omega * U);
    s += std::exp(-p * U) *
         (t.a * (p * c - t.omega * sn) + t.b * (p * sn + t.omega * c)) / den;
  }
  return s;
}

real TrigPoly::exp_head(real q, real V) const {
  real s = c0 * std::exp(q * V) / q;
  for (const Term& t : terms) {
    const real den = q * q + t.omega * t.omega;
    const real c = std::cos(t.omega * V), sn = std::sin(t.omega * V);
    s += std::exp(q * V) *
         (t.a * (q * c + t.omega * sn) + t.b * (q * sn - t.omega * c)) / den;
  }
  return s;
}

real TrigPoly::integral(real a, real b) const {
  real s = c0 * (b - a);
  for (const Term& t : terms) {
    s += t.a * (std::sin(t.omega * b) - std::sin(t.omega * a)) / t.omega;
    s -= t.b * (std::cos(t.omega * b) - std::cos(t.omega * a)) / t.omega;
  }
  return s;
}

TrigPoly fit_periodic_samples(const std::vector<real>& fv, real period) {
  const int n = int(fv.size());
  real fmax = 0.0;
  for (real v : fv) fmax = std::max(fmax, std::abs(v));
  TrigPoly p;
  real c0 = 0.0;
  for (int j = 0; j < n; ++j) c0 += fv[j];
  p.c0 = c0 / n;
  const real cut = 1e-15 * std::max(fmax, 1e-300);
  for (int k = 1; k <= n / 2; ++k) {
    real A = 0.0, B = 0.0;
    for (int j = 0; j < n; ++j) {
      const real ph = two_pi * k * j / static_cast<real>(n);
      A += fv[j] * std::cos(ph);
      B += fv[j] * std::sin(ph);
    }
    const bool nyquist = (2 * k == n);
    A *= (nyquist ? 1.0 : 2.0) / n;
    B *= (nyquist ? 1.0 : 2.0) / n;
    if (std::hypot(A, B) > cut)
      p.terms.push_back({A, B, two_pi * k / period});
  }
  return p;
}

TrigPoly fit_periodic(const std::function<real(real)>& f, real period, int n) {
  std::vector<real> fv(n);
  for (int j = 0; j < n; ++j) fv[j] = f(period * static_cast<real>(j) / n);
  return fit_periodic_samples(fv, period);
}

BrentResult brent_min(const std::function<real(real)>& f, real a, real b,
                      real xtol) {
  const real gold = 0.5 * (3.0 - std::sqrt(5.0));
  real x = a + gold * (b - a), w = x, v = x;
  real fx = f(x), fw = fx, fv = fx;
  real d = 0.0, e = 0.0;
  for (int it = 0; it < 200; ++it) {
    const real m = 0.5 * (a + b);
    const real tol = xtol + 1e-12 * std::abs(x);
    if (std::abs(x - m) <= 2.0 * tol - 0.5 * (b - a)) break;
    real p = 0.0, q = 0.0, r = 0.0;
    bool parabolic = false;
    if (std::abs(e) > tol) {
      r = (x - w) * (fx - fv);
      q = (x - v) * (fx - fw);
      p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const real e_old = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * e_old) && p > q * (a - x) &&
          p < q * (b - x)) {
        parabolic = true;
        d = p / q;
        const real u = x + d;
        if (u - a < 2.0 * tol || b - u < 2.0 * tol)
          d = (x < m) ? tol : -tol;
      }
    }
    if (!parabolic) {
      e = (x < m) ? (b - x) : (a - x);
      d = gold * e;
    }
    const real u = (std::abs(d) >= tol) ? (x + d) : (x + (d > 0 ? tol : -tol));
    const real fu = f(u);
    if (fu <= fx) {
      if (u < x) b = x; else a = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  return {x, fx};
}

}  // namespace nonlocal
