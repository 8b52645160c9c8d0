#ifndef POISSON_MALLIAVIN_MODELS_HPP
#define POISSON_MALLIAVIN_MODELS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "error.hpp"
#include "malliavin.hpp"
#include "point_process.hpp"
#include "stats.hpp"

namespace pm::models {

// ---------------------------------------------------------------------------
// Pareto-optimal points
// ---------------------------------------------------------------------------

/// G_x(mu) = f(x) H_x(mu) on [0,1]^d with intensity t, where H_x(mu) = 1 iff
/// no point of mu strictly dominates x. An empty f means f == 1.
struct ParetoModel {
  std::size_t d = 1;
  double t = 1.0;
  std::function<double(std::span<const double>)> f;

  [[nodiscard]] Window window() const { return Window::unit_cube(d, t); }
};

/// y < x: y <= x coordinatewise and y != x.
inline bool strictly_dominates(std::span<const double> y, std::span<const double> x) {
  bool equal = true;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y[i] > x[i]) {
      return false;
    }
    equal = equal && (y[i] == x[i]);
  }
  return !equal;
}

/// H_x(mu) in {0, 1}.
inline double pareto_h(const Configuration& mu, std::span<const double> x) {
  const auto v = mu.view();
  const std::size_t d = v.dim;
  const std::size_t n = v.base.size() / d;
  std::size_t r = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto y = v.base.subspan(j * d, d);
    if (v.base_sorted_by_first && y[0] > x[0]) {
      break; // no later base point can sit below x
    }
    if (r < v.removed.size() && v.removed[r] == j) {
      ++r;
      continue;
    }
    if (strictly_dominates(y, x)) {
      return 0.0;
    }
  }
  for (std::size_t k = 0; k < v.extra.size(); k += d) {
    if (strictly_dominates(v.extra.subspan(k, d), x)) {
      return 0.0;
    }
  }
  return 1.0;
}

namespace detail {

inline void check_unit_cube(std::span<const double> x) {
  for (double c : x) {
    if (!(c >= 0.0 && c <= 1.0)) {
      throw domain_error("Pareto integrand evaluated outside [0,1]^d");
    }
  }
}

// Points of mu in lexicographic order; reuses the base when it is already
// strictly increasing in coordinate 0 and unperturbed.
inline std::vector<double> lex_sorted(const Configuration& mu) {
  const auto v = mu.view();
  const std::size_t d = v.dim;
  if (v.removed.empty() && v.extra.empty() && v.base_sorted_by_first) {
    bool strict = true;
    for (std::size_t j = 1; j < v.base.size() / d; ++j) {
      if (!(v.base[j * d] > v.base[(j - 1) * d])) {
        strict = false;
        break;
      }
    }
    if (strict) {
      return {v.base.begin(), v.base.end()};
    }
  }
  auto pts = mu.points();
  std::sort(pts.begin(), pts.end());
  std::vector<double> flat;
  flat.reserve(pts.size() * d);
  for (const auto& p : pts) {
    flat.insert(flat.end(), p.coords().begin(), p.coords().end());
  }
  return flat;
}

// Flags of the points (in lex order) not strictly dominated by any other.
inline std::vector<char> minimal_flags(std::span<const double> flat, std::size_t d) {
  const std::size_t n = flat.size() / d;
  std::vector<char> minimal(n, 1);
  auto pt = [&](std::size_t i) { return flat.subspan(i * d, d); };
  auto same = [&](std::size_t a, std::size_t b) {
    return std::equal(pt(a).begin(), pt(a).end(), pt(b).begin());
  };
  if (d == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      minimal[i] = flat[i] == flat[0] ? 1 : 0;
    }
    return minimal;
  }
  if (d == 2) {
    // Dominated iff an earlier distinct group has second coordinate <= ours.
    double run_min = std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j < n && same(i, j)) {
        ++j;
      }
      const char flag = run_min <= flat[i * d + 1] ? 0 : 1;
      for (std::size_t k = i; k < j; ++k) {
        minimal[k] = flag;
      }
      run_min = std::min(run_min, flat[i * d + 1]);
      i = j;
    }
    return minimal;
  }
  // Only lexicographically smaller points can dominate.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (strictly_dominates(pt(k), pt(i))) {
        minimal[i] = 0;
        break;
      }
    }
  }
  return minimal;
}

} // namespace detail

/// Lebesgue volume of {x in [0,1]^d : H_x(mu) = 1}; d in {1, 2}.
inline double pareto_free_volume(const Configuration& mu) {
  const std::size_t d = mu.dim();
  if (d == 1) {
    double m = 1.0;
    mu.for_each([&](std::span<const double> y) { m = std::min(m, y[0]); });
    return m;
  }
  if (d == 2) {
    const auto flat = detail::lex_sorted(mu);
    KahanSum area;
    double prev = 0.0;
    double level = 1.0;
    for (std::size_t i = 0; i < flat.size(); i += 2) {
      area.add((flat[i] - prev) * level);
      level = std::min(level, flat[i + 1]);
      prev = flat[i];
    }
    area.add((1.0 - prev) * level);
    return area.value();
  }
  throw std::invalid_argument("pareto_free_volume: only d <= 2 has an exact sweep");
}

inline Integrand pareto_integrand(const ParetoModel& model) {
  if (model.d == 0 || model.d > max_dim || !(model.t > 0.0)) {
    throw invalid_window("Pareto model needs 1 <= d <= 8 and t > 0");
  }
  auto f = model.f;
  auto fval = [f](std::span<const double> x) { return f ? f(x) : 1.0; };
  Integrand g;
  g.eval = [fval](const Configuration& mu, const Point& x) {
    detail::check_unit_cube(x.coords());
    const double h = pareto_h(mu, x.coords());
    return h == 0.0 ? 0.0 : fval(x.coords());
  };
  g.closed_diff = [fval](int m, std::span<const Point> z, const Configuration& mu,
                         const Point& x) {
    detail::check_unit_cube(x.coords());
    for (const auto& zi : z) {
      if (!strictly_dominates(zi.coords(), x.coords())) {
        return 0.0;
      }
    }
    if (pareto_h(mu, x.coords()) == 0.0) {
      return 0.0;
    }
    return (m % 2 == 0 ? 1.0 : -1.0) * fval(x.coords());
  };
  if (!f) {
    g.bound_hint = 1.0;
  }
  g.point_sum = [fval](const Configuration& mu) {
    const std::size_t d = mu.dim();
    const auto flat = detail::lex_sorted(mu);
    const auto minimal = detail::minimal_flags(flat, d);
    KahanSum acc;
    for (std::size_t i = 0; i < minimal.size(); ++i) {
      if (minimal[i]) {
        const auto x = std::span<const double>(flat).subspan(i * d, d);
        detail::check_unit_cube(x);
        acc.add(fval(x));
      }
    }
    return acc.value();
  };
  if (!f && model.d <= 2) {
    g.compensator = [t = model.t](const Configuration& mu) { return t * pareto_free_volume(mu); };
  }
  return g;
}

/// h_0, h_1, h_2 and h~ of the product-form bounds.
struct HFunctions {
  std::function<double(std::span<const double>)> h0, h1, h2, htilde;
};

/// For f == 1 on [0,1]^d with intensity t: every h_i(y) = t * prod(y).
inline HFunctions pareto_h_functions(const ParetoModel& model) {
  if (model.f) {
    throw std::invalid_argument("closed-form h functions exist only for f == 1");
  }
  auto h = [t = model.t](std::span<const double> y) {
    double p = t;
    for (double c : y) {
      p *= c;
    }
    return p;
  };
  return {h, h, h, h};
}

// ---------------------------------------------------------------------------
// Quadrature for J_k(t) = int_{[0,1]^d} |y|^k exp(-t |y|) dy, |y| = prod y_i.
// ---------------------------------------------------------------------------

namespace detail {

// phi_k(x) = int_0^1 y^k e^{-x y} dy.
inline double phi_k(int k, double x) {
  if (x < static_cast<double>(k) + 2.0) {
    // Alternating series sum_j (-x)^j / (j! (k + j + 1)); x is small here.
    double term = 1.0;
    double acc = 0.0;
    for (int j = 0; j < 200; ++j) {
      const double add = term / static_cast<double>(k + j + 1);
      acc += add;
      if (std::abs(add) < 1e-18 * std::abs(acc)) {
        break;
      }
      term *= -x / static_cast<double>(j + 1);
    }
    return acc;
  }
  // Upward recursion phi_k = (k phi_{k-1} - e^{-x}) / x, stable for x > k.
  double p = -std::expm1(-x) / x;
  for (int j = 1; j <= k; ++j) {
    p = (static_cast<double>(j) * p - std::exp(-x)) / x;
  }
  return p;
}

inline double integrate_axis(const std::function<double(double)>& f, double tol) {
  using boost::math::quadrature::gauss_kronrod;
  double err = 0.0;
  return gauss_kronrod<double, 21>::integrate(f, 0.0, 1.0, 20, tol, &err);
}

// int over [0,1]^levels of p^k phi_k(t p), p = prefix * prod of the axes.
inline double iterated(int k, double t, std::size_t levels, double prefix, double tol) {
  if (levels == 0) {
    return std::pow(prefix, k) * phi_k(k, t * prefix);
  }
  return integrate_axis(
      [=](double y) { return iterated(k, t, levels - 1, prefix * y, tol); }, tol);
}

} // namespace detail

/// J_k(t) = int_{[0,1]^d} |y|^k e^{-t|y|} dy by iterated adaptive
/// Gauss-Kronrod over d - 1 axes with the last axis done analytically.
inline double pareto_moment_integral(std::size_t d, double t, int k) {
  if (d == 0) {
    throw std::invalid_argument("dimension must be >= 1");
  }
  if (d > 4) {
    throw feasibility_error("quadrature for d > 4 is not supported; use Monte Carlo");
  }
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw invalid_window("intensity must be finite and non-negative");
  }
  return detail::iterated(k, t, d - 1, 1.0, 1e-9);
}

/// sigma_t^2 = t int_{[0,1]^d} e^{-t|z|} dz, the variance of delta(G) for f == 1.
inline double pareto_sigma2(std::size_t d, double t) {
  if (d == 1) {
    return -std::expm1(-t);
  }
  return t * pareto_moment_integral(d, t, 0);
}

/// Closed forms for f == 1 (un-normalized): exact T3, T6, T7, T9 and the
/// integral and sigma-based upper bounds for T4, T5.
struct ParetoClosedForms {
  double sigma2 = 0.0;
  double t3 = 0.0;
  double t4_integral = 0.0; // 5 t^2 J_1
  double t4_bound = 0.0;    // 20 sigma^2_{t/2}
  double t5_integral = 0.0; // 8 t^3 J_2
  double t5_bound = 0.0;    // 216 sigma^2_{t/3}
  double t6 = 0.0;          // (t^3 J_2 + t^4 J_3)^{1/2}
  double t6_bound = 0.0;    // (27 sigma^2_{t/3} + 256 sigma^2_{t/4})^{1/2}
  double t7 = 0.0;          // 2 sigma_t
  double t9 = 0.0;          // 2 (3 t^2 J_1 + 3 t^3 J_2 + 2 t^4 J_3)^{1/2}
  double t9_bound = 0.0;    // 2 (12 s_{t/2} + 81 s_{t/3} + 512 s_{t/4})^{1/2}
};

inline ParetoClosedForms pareto_bound_closed(std::size_t d, double t) {
  ParetoClosedForms c;
  c.sigma2 = pareto_sigma2(d, t);
  const double s2 = pareto_sigma2(d, t / 2.0);
  const double s3 = pareto_sigma2(d, t / 3.0);
  const double s4 = pareto_sigma2(d, t / 4.0);
  const double j1 = pareto_moment_integral(d, t, 1);
  const double j2 = pareto_moment_integral(d, t, 2);
  const double j3 = pareto_moment_integral(d, t, 3);
  c.t3 = c.sigma2;
  c.t4_integral = 5.0 * t * t * j1;
  c.t4_bound = 20.0 * s2;
  c.t5_integral = 8.0 * t * t * t * j2;
  c.t5_bound = 216.0 * s3;
  c.t6 = std::sqrt(t * t * t * j2 + t * t * t * t * j3);
  c.t6_bound = std::sqrt(27.0 * s3 + 256.0 * s4);
  c.t7 = 2.0 * std::sqrt(c.sigma2);
  c.t9 = 2.0 * std::sqrt(3.0 * t * t * j1 + 3.0 * t * t * t * j2 + 2.0 * t * t * t * t * j3);
  c.t9_bound = 2.0 * std::sqrt(12.0 * s2 + 81.0 * s3 + 512.0 * s4);
  return c;
}

/// G_x(mu) = c on a window: delta(G) = c (eta(window) - total_mass), the
/// first Wiener-Ito integral of the constant c.
inline Integrand constant_integrand(double c, const Window& window) {
  Integrand g;
  g.eval = [c, window](const Configuration&, const Point& x) {
    if (!window.contains(x.coords())) {
      throw domain_error("constant integrand evaluated outside its window");
    }
    return c;
  };
  g.closed_diff = [](int, std::span<const Point>, const Configuration&, const Point&) {
    return 0.0;
  };
  g.bound_hint = std::abs(c);
  g.point_sum = [c](const Configuration& mu) { return c * static_cast<double>(mu.count()); };
  g.compensator = [c, mass = window.total_mass()](const Configuration&) { return c * mass; };
  return g;
}

// ---------------------------------------------------------------------------
// Poisson embedding
// ---------------------------------------------------------------------------

/// Points (s, x) in R^d x R_+ are stored with s first and the height x last.
/// G_{(s,x)}(mu) = u_B(s) 1{x <= phi(s, mu)} with phi bounded by y_cap and
/// depending on mu only through its restriction to Z_s.
struct EmbeddingModel {
  std::size_t d = 1;
  Window base;  // B (its intensity scale is ignored)
  std::function<double(std::span<const double>)> u;
  double u_bound = 1.0;
  std::function<double(std::span<const double>, const Configuration&)> phi;
  double y_cap = 1.0;
  Window sim_window; // (B + support of h) x [0, height], intensity 1

  // Set by cylinder_model: Z = box(offset_lo, offset_hi) x [0, h_height]
  // and phi(s, mu) = g(mu(Z + s)). Enables the exact compensator sweep.
  struct Cylinder {
    std::vector<double> offset_lo, offset_hi;
    double h_height = 1.0;
    std::function<double(std::size_t)> g;
    std::optional<double> u_constant;
  };
  std::optional<Cylinder> cylinder;
};

/// g(n) = min(a + b n, cap), monotone in n for b >= 0.
inline std::function<double(std::size_t)> affine_capped(double a, double b, double cap) {
  return [=](std::size_t n) { return std::clamp(a + b * static_cast<double>(n), 0.0, cap); };
}

/// Number of points (r, x) of mu with r - s in the offset box and x <= height.
inline std::size_t cylinder_count(const Configuration& mu, std::span<const double> s,
                                  std::span<const double> lo, std::span<const double> hi,
                                  double height) {
  const auto v = mu.view();
  const std::size_t dim = v.dim;
  const std::size_t d = dim - 1;
  auto inside = [&](std::span<const double> p) {
    if (p[d] > height) {
      return false;
    }
    for (std::size_t i = 0; i < d; ++i) {
      const double off = p[i] - s[i];
      if (off < lo[i] || off > hi[i]) {
        return false;
      }
    }
    return true;
  };
  std::size_t c = 0;
  const std::size_t n = v.base.size() / dim;
  std::size_t r = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto p = v.base.subspan(j * dim, dim);
    if (v.base_sorted_by_first && p[0] - s[0] > hi[0]) {
      break;
    }
    if (r < v.removed.size() && v.removed[r] == j) {
      ++r;
      continue;
    }
    c += inside(p) ? 1 : 0;
  }
  for (std::size_t k = 0; k < v.extra.size(); k += dim) {
    c += inside(v.extra.subspan(k, dim)) ? 1 : 0;
  }
  return c;
}

struct CylinderSpec {
  std::vector<double> b_lo, b_hi;          // B
  std::vector<double> offset_lo, offset_hi; // support of h relative to s
  double h_height = 1.0;
  std::function<double(std::size_t)> g;
  double y_cap = 1.0;
  std::optional<double> u_constant = 1.0;
  std::function<double(std::span<const double>)> u; // used when u_constant is empty
  double u_bound = 1.0;
};

inline EmbeddingModel cylinder_model(const CylinderSpec& spec) {
  const std::size_t d = spec.b_lo.size();
  if (d == 0 || d + 1 > max_dim || spec.b_hi.size() != d || spec.offset_lo.size() != d ||
      spec.offset_hi.size() != d) {
    throw invalid_window("cylinder model: inconsistent dimensions");
  }
  if (!(spec.y_cap > 0.0) || !(spec.h_height > 0.0) || !spec.g) {
    throw invalid_window("cylinder model needs y_cap > 0, h_height > 0 and g");
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (!(spec.offset_lo[i] <= spec.offset_hi[i])) {
      throw invalid_window("cylinder offsets need lo <= hi");
    }
  }
  EmbeddingModel m{d, Window(spec.b_lo, spec.b_hi, 1.0), {}, spec.u_bound, {}, spec.y_cap,
                   Window({0.0}, {1.0}, 1.0), std::nullopt};
  std::vector<double> lo(d + 1), hi(d + 1);
  for (std::size_t i = 0; i < d; ++i) {
    // s in B and r - s in [off_lo, off_hi] reach r in [B_lo + off_lo, B_hi + off_hi].
    lo[i] = std::min(spec.b_lo[i], spec.b_lo[i] + spec.offset_lo[i]);
    hi[i] = std::max(spec.b_hi[i], spec.b_hi[i] + spec.offset_hi[i]);
  }
  lo[d] = 0.0;
  hi[d] = std::max(spec.y_cap, spec.h_height);
  m.sim_window = Window(lo, hi, 1.0);
  if (spec.u_constant) {
    const double c = *spec.u_constant;
    m.u = [c](std::span<const double>) { return c; };
    m.u_bound = std::abs(c);
  } else {
    m.u = spec.u;
  }
  m.phi = [lo_off = spec.offset_lo, hi_off = spec.offset_hi, hh = spec.h_height, g = spec.g,
           cap = spec.y_cap](std::span<const double> s, const Configuration& mu) {
    return std::min(g(cylinder_count(mu, s, lo_off, hi_off, hh)), cap);
  };
  m.cylinder = EmbeddingModel::Cylinder{spec.offset_lo, spec.offset_hi, spec.h_height, spec.g,
                                        spec.u_constant};
  return m;
}

/// u_B(s) = u(s) 1{s in B}.
inline double u_b(const EmbeddingModel& m, std::span<const double> s) {
  return m.base.contains(s) ? m.u(s) : 0.0;
}

/// int_B u(s) phi(s, mu) ds for the cylinder model with d = 1 and constant u,
/// exactly: phi is piecewise constant in s between the breakpoints r - off.
inline double cylinder_compensator_1d(const EmbeddingModel& m, const Configuration& mu) {
  const auto& cyl = *m.cylinder;
  const double a = m.base.lo()[0];
  const double b = m.base.hi()[0];
  // Point r is counted for s in [r - off_hi, r - off_lo].
  std::vector<std::pair<double, int>> events;
  std::size_t initial = 0;
  mu.for_each([&](std::span<const double> p) {
    if (p[1] > cyl.h_height) {
      return;
    }
    const double enter = p[0] - cyl.offset_hi[0];
    const double leave = p[0] - cyl.offset_lo[0];
    if (leave < a || enter > b) {
      return;
    }
    if (enter <= a) {
      ++initial;
    } else {
      events.emplace_back(enter, +1);
    }
    if (leave < b) {
      events.emplace_back(leave, -1);
    }
  });
  std::sort(events.begin(), events.end());
  KahanSum acc;
  long count = static_cast<long>(initial);
  double prev = a;
  for (const auto& [pos, delta] : events) {
    acc.add((pos - prev) * std::min(cyl.g(static_cast<std::size_t>(count)), m.y_cap));
    count += delta;
    prev = pos;
  }
  acc.add((b - prev) * std::min(cyl.g(static_cast<std::size_t>(count)), m.y_cap));
  return *cyl.u_constant * acc.value();
}

inline Integrand embedding_integrand(const EmbeddingModel& model) {
  auto m = std::make_shared<const EmbeddingModel>(model);
  Integrand g;
  g.eval = [m](const Configuration& mu, const Point& p) {
    if (!m->sim_window.contains(p.coords())) {
      throw domain_error("embedding integrand evaluated outside the simulation window");
    }
    const auto s = p.coords().first(m->d);
    const double u = u_b(*m, s);
    if (u == 0.0) {
      return 0.0;
    }
    return p[m->d] <= m->phi(s, mu) ? u : 0.0;
  };
  g.bound_hint = m->u_bound;
  if (m->cylinder && m->d == 1 && m->cylinder->u_constant) {
    g.compensator = [m](const Configuration& mu) { return cylinder_compensator_1d(*m, mu); };
  }
  return g;
}

/// xi = {s : (s, x) in config, x <= phi(s, config - delta_(s,x))}.
inline Configuration embedding_xi(const Configuration& config, const EmbeddingModel& model) {
  std::vector<double> flat;
  for (std::size_t i = 0; i < config.count(); ++i) {
    auto [p, rest] = config.remove_at(i);
    const auto s = p.coords().first(model.d);
    if (p[model.d] <= model.phi(s, rest)) {
      flat.insert(flat.end(), s.begin(), s.end());
    }
  }
  return Configuration(model.d, std::move(flat));
}

/// int u_B d xi - int u_B(s) phi(s, config) ds, the s-integral taken exactly
/// when the model supports it.
inline double embedding_delta(const Configuration& config, const EmbeddingModel& model) {
  const auto g = embedding_integrand(model);
  if (!g.compensator) {
    throw std::invalid_argument("embedding_delta: model has no exact compensator; pass nodes");
  }
  return pathwise_point_sum(g, config) - g.compensator(config);
}

/// Same, with the s-integral over B discretized by nodes on B.
inline double embedding_delta(const Configuration& config, const EmbeddingModel& model,
                              const NodeSet& base_nodes) {
  const auto g = embedding_integrand(model);
  KahanSum comp;
  for (std::size_t k = 0; k < base_nodes.size(); ++k) {
    const auto s = base_nodes.nodes[k].coords();
    comp.add(base_nodes.weights[k] * u_b(model, s) * model.phi(s, config));
  }
  return pathwise_point_sum(g, config) - comp.value();
}

} // namespace pm::models

#endif
