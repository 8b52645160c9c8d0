#ifndef POISSON_MALLIAVIN_MALLIAVIN_HPP
#define POISSON_MALLIAVIN_MALLIAVIN_HPP

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>

#include "error.hpp"
#include "point_process.hpp"
#include "stats.hpp"

namespace pm {

/// The map (mu, x) -> G_x(mu), with optional closed-form layers.
///
/// `closed_diff(m, z, mu, x)` returns D^m_{z_1..z_m} G_x(mu) for m in 1..3.
/// `point_sum(mu)` returns sum_{x in mu} G_x(mu - delta_x) and
/// `compensator(mu)` returns the exact integral of G_x(mu) against lambda.
/// All three must agree with what `eval` implies; they only change cost.
struct Integrand {
  using Eval = std::function<double(const Configuration&, const Point&)>;
  using ClosedDiff =
      std::function<double(int, std::span<const Point>, const Configuration&, const Point&)>;
  using PathFunctional = std::function<double(const Configuration&)>;

  Eval eval;
  ClosedDiff closed_diff;
  std::optional<double> bound_hint;
  PathFunctional point_sum;
  PathFunctional compensator;
};

/// A map f: configurations -> R.
using Functional = std::function<double(const Configuration&)>;

namespace detail {

[[noreturn]] inline void throw_non_finite(double v, const Configuration& mu, const Point& x) {
  std::ostringstream os;
  os << "integrand value " << v << " is not finite at |mu| = " << mu.count() << ", x = (";
  for (std::size_t i = 0; i < x.dim(); ++i) {
    os << (i ? ", " : "") << x[i];
  }
  os << ")";
  throw numeric_error(os.str());
}

inline void check_dims(const Configuration& mu, const Point& x) {
  if (mu.dim() != x.dim()) {
    throw dimension_mismatch("point dimension " + std::to_string(x.dim()) +
                             " does not match configuration dimension " +
                             std::to_string(mu.dim()));
  }
}

} // namespace detail

/// G_x(mu), aborting on non-finite output.
inline double evaluate(const Integrand& g, const Configuration& mu, const Point& x) {
  const double v = g.eval(mu, x);
  if (!std::isfinite(v)) {
    detail::throw_non_finite(v, mu, x);
  }
  return v;
}

/// D^m_{z_1..z_m} G_x(mu) by inclusion-exclusion over all 2^m subsets of
/// the added points, ignoring any closed form.
inline double finite_difference(const Integrand& g, std::span<const Point> added,
                                const Configuration& mu, const Point& x) {
  detail::check_dims(mu, x);
  for (const auto& z : added) {
    detail::check_dims(mu, z);
  }
  const std::size_t m = added.size();
  KahanSum acc;
  for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
    Configuration nu = mu;
    std::size_t bits = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (mask & (std::size_t{1} << i)) {
        nu = nu.add(added[i]);
        ++bits;
      }
    }
    const double sign = ((m - bits) % 2 == 0) ? 1.0 : -1.0;
    acc.add(sign * evaluate(g, nu, x));
  }
  return acc.value();
}

/// Iterated difference of order added.size(); uses closed_diff when present.
inline double difference(const Integrand& g, std::span<const Point> added,
                         const Configuration& mu, const Point& x) {
  if (added.empty()) {
    detail::check_dims(mu, x);
    return evaluate(g, mu, x);
  }
  if (g.closed_diff && added.size() <= 3) {
    detail::check_dims(mu, x);
    for (const auto& z : added) {
      detail::check_dims(mu, z);
    }
    const double v = g.closed_diff(static_cast<int>(added.size()), added, mu, x);
    if (!std::isfinite(v)) {
      detail::throw_non_finite(v, mu, x);
    }
    return v;
  }
  return finite_difference(g, added, mu, x);
}

/// D_z G_x(mu) = G_x(mu + delta_z) - G_x(mu).
inline double diff1(const Integrand& g, const Configuration& mu, const Point& x, const Point& z) {
  const std::array<Point, 1> a{z};
  return difference(g, a, mu, x);
}

/// D^2_{z,w} G_x(mu).
inline double diff2(const Integrand& g, const Configuration& mu, const Point& x, const Point& z,
                    const Point& w) {
  const std::array<Point, 2> a{z, w};
  return difference(g, a, mu, x);
}

/// D^3_{z,w,v} G_x(mu).
inline double diff3(const Integrand& g, const Configuration& mu, const Point& x, const Point& z,
                    const Point& w, const Point& v) {
  const std::array<Point, 3> a{z, w, v};
  return difference(g, a, mu, x);
}

/// sum_{x in mu} G_x(mu - delta_x).
inline double pathwise_point_sum(const Integrand& g, const Configuration& mu) {
  if (g.point_sum) {
    return g.point_sum(mu);
  }
  KahanSum acc;
  for (std::size_t i = 0; i < mu.count(); ++i) {
    auto [x, rest] = mu.remove_at(i);
    acc.add(evaluate(g, rest, x));
  }
  return acc.value();
}

/// Node discretization of the lambda-integral of G_x(mu).
inline double node_integral(const Integrand& g, const Configuration& mu, const NodeSet& nodes) {
  KahanSum acc;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    acc.add(nodes.weights[k] * evaluate(g, mu, nodes.nodes[k]));
  }
  return acc.value();
}

/// Pathwise KS-integral: sum over points of G_x(eta - delta_x) minus the
/// node-discretized compensator.
inline double ks_integral(const Integrand& g, const Configuration& eta, const NodeSet& nodes) {
  return pathwise_point_sum(g, eta) - node_integral(g, eta, nodes);
}

/// Pathwise KS-integral with the integrand's exact compensator.
inline double ks_integral_exact(const Integrand& g, const Configuration& eta) {
  if (!g.compensator) {
    throw std::invalid_argument("ks_integral_exact: integrand has no exact compensator");
  }
  const double comp = g.compensator(eta);
  if (!std::isfinite(comp)) {
    throw numeric_error("compensator is not finite at |eta| = " + std::to_string(eta.count()));
  }
  return pathwise_point_sum(g, eta) - comp;
}

/// The integrand (mu, y) -> D_x G_y(mu).
inline Integrand difference_integrand(Integrand g, const Point& x) {
  auto shared = std::make_shared<const Integrand>(std::move(g));
  Integrand out;
  out.eval = [shared, x](const Configuration& mu, const Point& y) {
    return diff1(*shared, mu, y, x);
  };
  out.closed_diff = [shared, x](int m, std::span<const Point> z, const Configuration& mu,
                                const Point& y) {
    std::array<Point, 4> added{};
    added[0] = x;
    for (int i = 0; i < m; ++i) {
      added[static_cast<std::size_t>(i) + 1] = z[static_cast<std::size_t>(i)];
    }
    return difference(*shared, std::span<const Point>(added.data(), static_cast<std::size_t>(m) + 1),
                      mu, y);
  };
  if (shared->bound_hint) {
    out.bound_hint = 2.0 * *shared->bound_hint;
  }
  return out;
}

/// c * G, with every closed-form layer rescaled.
inline Integrand scaled(Integrand g, double c) {
  auto shared = std::make_shared<const Integrand>(std::move(g));
  Integrand out;
  out.eval = [shared, c](const Configuration& mu, const Point& x) { return c * shared->eval(mu, x); };
  if (shared->closed_diff) {
    out.closed_diff = [shared, c](int m, std::span<const Point> z, const Configuration& mu,
                                  const Point& x) { return c * shared->closed_diff(m, z, mu, x); };
  }
  if (shared->bound_hint) {
    out.bound_hint = std::abs(c) * *shared->bound_hint;
  }
  if (shared->point_sum) {
    out.point_sum = [shared, c](const Configuration& mu) { return c * shared->point_sum(mu); };
  }
  if (shared->compensator) {
    out.compensator = [shared, c](const Configuration& mu) { return c * shared->compensator(mu); };
  }
  return out;
}

/// G + G'.
inline Integrand sum(Integrand a, Integrand b) {
  auto sa = std::make_shared<const Integrand>(std::move(a));
  auto sb = std::make_shared<const Integrand>(std::move(b));
  Integrand out;
  out.eval = [sa, sb](const Configuration& mu, const Point& x) {
    return sa->eval(mu, x) + sb->eval(mu, x);
  };
  if (sa->closed_diff && sb->closed_diff) {
    out.closed_diff = [sa, sb](int m, std::span<const Point> z, const Configuration& mu,
                               const Point& x) {
      return sa->closed_diff(m, z, mu, x) + sb->closed_diff(m, z, mu, x);
    };
  }
  if (sa->bound_hint && sb->bound_hint) {
    out.bound_hint = *sa->bound_hint + *sb->bound_hint;
  }
  return out;
}

/// [delta(G)(eta + delta_x) - delta(G)(eta)] - G_x(eta) - delta(D_x G)(eta),
/// every KS-integral on the same nodes. Zero up to rounding.
inline double commutation_residual(const Integrand& g, const Configuration& eta, const Point& x,
                                   const NodeSet& nodes) {
  const double lhs = ks_integral(g, eta.add(x), nodes) - ks_integral(g, eta, nodes);
  const double rhs = evaluate(g, eta, x) + ks_integral(difference_integrand(g, x), eta, nodes);
  return lhs - rhs;
}

/// D_x f(mu).
inline double diff_functional(const Functional& f, const Configuration& mu, const Point& x) {
  return f(mu.add(x)) - f(mu);
}

/// D_x(HH')(mu) - [(D_x H)(H' + D_x H') + H D_x H'](mu).
inline double product_rule_residual(const Functional& h, const Functional& h2,
                                    const Configuration& mu, const Point& x) {
  const Configuration plus = mu.add(x);
  const double hv = h(mu);
  const double h2v = h2(mu);
  const double dh = h(plus) - hv;
  const double dh2 = h2(plus) - h2v;
  const double lhs = h(plus) * h2(plus) - hv * h2v;
  return lhs - (dh * (h2v + dh2) + hv * dh2);
}

} // namespace pm

#endif
