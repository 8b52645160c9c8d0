#ifndef POISSON_MALLIAVIN_FINITE_ORACLE_HPP
#define POISSON_MALLIAVIN_FINITE_ORACLE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "malliavin.hpp"
#include "point_process.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace pm::oracle {

inline constexpr std::size_t max_atoms = 6;
inline constexpr double max_enumerated_configs = 1e7;

/// Atom masses lambda_1..lambda_m of a finite Poisson space.
class AtomSpace {
public:
  explicit AtomSpace(std::vector<double> weights) : weights_(std::move(weights)) {
    if (weights_.empty() || weights_.size() > max_atoms) {
      throw feasibility_error("atomic space must have between 1 and " +
                              std::to_string(max_atoms) + " atoms");
    }
    for (double w : weights_) {
      if (!(w > 0.0) || !std::isfinite(w)) {
        throw invalid_window("atom masses must be positive and finite");
      }
      total_ += w;
    }
  }

  [[nodiscard]] std::size_t size() const { return weights_.size(); }
  [[nodiscard]] const std::vector<double>& weights() const { return weights_; }
  [[nodiscard]] double weight(std::size_t i) const { return weights_[i]; }
  [[nodiscard]] double total() const { return total_; }

  /// The same space as a PoissonSpace for the Monte Carlo code.
  [[nodiscard]] AtomicWindow window() const { return AtomicWindow(weights_); }

private:
  std::vector<double> weights_;
  double total_ = 0.0;
};

using Counts = std::vector<unsigned>;

inline std::size_t total_count(const Counts& n) {
  std::size_t s = 0;
  for (auto c : n) {
    s += c;
  }
  return s;
}

inline Counts plus_atom(Counts n, std::size_t i) {
  ++n[i];
  return n;
}

inline Counts minus_atom(Counts n, std::size_t i) {
  --n[i];
  return n;
}

struct WeightedConfig {
  Counts counts;
  double prob = 0.0;
};

struct Enumeration {
  AtomSpace space;
  std::vector<WeightedConfig> configs;
  std::size_t n_max = 0;
  double tail_mass = 0.0;
};

using AtomIntegrand = std::function<double(const Counts&, std::size_t)>;
using AtomFunctional = std::function<double(const Counts&)>;
using AtomKernel = std::function<double(const Counts&, std::size_t, std::size_t)>;
/// Bound on |F(mu)| as a function of the total count |mu|.
using Envelope = std::function<double(std::size_t)>;

inline double log_poisson_pmf(double mean, std::size_t n) {
  return -mean + static_cast<double>(n) * std::log(mean) - std::lgamma(static_cast<double>(n) + 1.0);
}

/// sum_{n > n_max} P(Poisson(mean) = n) * envelope(n).
inline double poisson_tail_sum(double mean, std::size_t n_max, const Envelope& envelope) {
  KahanSum acc;
  for (std::size_t n = n_max + 1; n < n_max + 100000; ++n) {
    const double term = std::exp(log_poisson_pmf(mean, n)) * envelope(n);
    acc.add(term);
    if (static_cast<double>(n) > 2.0 * mean + 10.0 && (term == 0.0 || term < 1e-40 * acc.value())) {
      break;
    }
  }
  return acc.value();
}

inline double binomial(std::size_t n, std::size_t k) {
  return std::exp(std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
                  std::lgamma(static_cast<double>(n - k) + 1.0));
}

/// All count vectors with total <= n_max, with exact Poisson probabilities.
/// Feasibility accounts for identity checks that evaluate up to n_max + 2.
inline Enumeration enumerate(const AtomSpace& space, std::size_t n_max) {
  const std::size_t m = space.size();
  if (binomial(n_max + 2 + m, m) > max_enumerated_configs) {
    throw feasibility_error("enumeration of " + std::to_string(m) + " atoms up to " +
                            std::to_string(n_max) + " points exceeds the size limit");
  }
  Enumeration out{space, {}, n_max, 0.0};
  std::vector<double> log_w(m);
  for (std::size_t i = 0; i < m; ++i) {
    log_w[i] = std::log(space.weight(i));
  }
  Counts n(m, 0);
  // Odometer over counts with bounded total.
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t atom, std::size_t left) {
    if (atom == m) {
      double lp = -space.total();
      for (std::size_t i = 0; i < m; ++i) {
        lp += static_cast<double>(n[i]) * log_w[i] - std::lgamma(static_cast<double>(n[i]) + 1.0);
      }
      out.configs.push_back({n, std::exp(lp)});
      return;
    }
    for (std::size_t c = 0; c <= left; ++c) {
      n[atom] = static_cast<unsigned>(c);
      rec(atom + 1, left - c);
    }
    n[atom] = 0;
  };
  rec(0, n_max);
  out.tail_mass = poisson_tail_sum(space.total(), n_max, [](std::size_t) { return 1.0; });
  return out;
}

struct Expectation {
  double value = 0.0;
  double tail_bound = 0.0;
};

/// Truncated expectation sum prob * F. The tail bound is
/// sum_{n > n_max} P(N = n) envelope(n) when an envelope is given, else
/// tail_mass * max(|F| on enumerated configs, bound_hint).
inline Expectation expect(const Enumeration& e, const AtomFunctional& f,
                          const Envelope& envelope = {}, std::optional<double> bound_hint = {}) {
  KahanSum acc;
  double max_abs = 0.0;
  for (const auto& c : e.configs) {
    const double v = f(c.counts);
    if (!std::isfinite(v)) {
      throw numeric_error("expect: functional is not finite on an enumerated configuration");
    }
    max_abs = std::max(max_abs, std::abs(v));
    acc.add(c.prob * v);
  }
  Expectation r;
  r.value = acc.value();
  if (envelope) {
    r.tail_bound = poisson_tail_sum(e.space.total(), e.n_max, envelope);
  } else {
    r.tail_bound = e.tail_mass * std::max(max_abs, bound_hint.value_or(0.0));
  }
  return r;
}

/// sum_{x in mu} G_x(mu - delta_x) - sum_i lambda_i G_i(mu), exactly.
inline double ks_exact(const AtomIntegrand& g, const AtomSpace& space, const Counts& mu) {
  KahanSum acc;
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (mu[i] > 0) {
      acc.add(static_cast<double>(mu[i]) * g(minus_atom(mu, i), i));
    }
    acc.add(-space.weight(i) * g(mu, i));
  }
  return acc.value();
}

/// (mu, y) -> D_x G_y(mu) on atoms.
inline AtomIntegrand atom_difference(AtomIntegrand g, std::size_t x) {
  return [g = std::move(g), x](const Counts& mu, std::size_t y) {
    return g(plus_atom(mu, x), y) - g(mu, y);
  };
}

/// An atomic integrand together with a bound on its absolute value.
struct BoundedIntegrand {
  AtomIntegrand fn;
  Envelope bound; // |G_i(mu)| <= bound(|mu|)
};

struct BoundedFunctional {
  AtomFunctional fn;
  Envelope bound;
};

struct BoundedKernel {
  AtomKernel fn;
  Envelope bound;
};

/// Sup of |G| over configurations up to n_max + 2 points, as a constant
/// envelope. Valid for integrands that are bounded by their values there.
inline Envelope observed_bound(const AtomIntegrand& g, const AtomSpace& space, std::size_t n_max) {
  const Enumeration wide = enumerate(space, n_max + 2);
  double b = 0.0;
  for (const auto& c : wide.configs) {
    for (std::size_t i = 0; i < space.size(); ++i) {
      b = std::max(b, std::abs(g(c.counts, i)));
    }
  }
  return [b](std::size_t) { return b; };
}

struct Residual {
  std::string name;
  double residual = 0.0;
  double tail_bound = 0.0;
  double tolerance = 1e-10; // floating-point allowance on top of the tail
  [[nodiscard]] bool passed() const { return residual <= tail_bound + tolerance; }
};

namespace detail {

// |delta(G)(mu)| <= n * b(n - 1) + Lambda * b(n).
inline Envelope ks_envelope(const Envelope& b, double total) {
  return [b, total](std::size_t n) {
    return static_cast<double>(n) * b(n == 0 ? 0 : n - 1) + total * b(n);
  };
}

inline Envelope diff_envelope(const Envelope& b) {
  return [b](std::size_t n) { return b(n + 1) + b(n); };
}

} // namespace detail

/// |E delta(G)|; zero by the Mecke formula.
inline Residual verify_mecke(const AtomSpace& space, std::size_t n_max, const BoundedIntegrand& g) {
  const Enumeration e = enumerate(space, n_max);
  const auto r = expect(
      e, [&](const Counts& mu) { return ks_exact(g.fn, space, mu); },
      detail::ks_envelope(g.bound, space.total()));
  return {"mecke", std::abs(r.value), r.tail_bound};
}

/// |E[delta(G) delta(G')] - sum_i lambda_i E[G_i G'_i]
///   - sum_{i,j} lambda_i lambda_j E[D_i G_j D_j G'_i]|.
inline Residual verify_variance(const AtomSpace& space, std::size_t n_max,
                                const BoundedIntegrand& g, const BoundedIntegrand& g2) {
  const Enumeration e = enumerate(space, n_max);
  const std::size_t m = space.size();
  const double total = space.total();
  auto f = [&](const Counts& mu) {
    KahanSum acc;
    acc.add(ks_exact(g.fn, space, mu) * ks_exact(g2.fn, space, mu));
    for (std::size_t i = 0; i < m; ++i) {
      acc.add(-space.weight(i) * g.fn(mu, i) * g2.fn(mu, i));
    }
    for (std::size_t i = 0; i < m; ++i) {
      const Counts mu_i = plus_atom(mu, i);
      for (std::size_t j = 0; j < m; ++j) {
        const double d_i_gj = g.fn(mu_i, j) - g.fn(mu, j);
        const double d_j_g2i = g2.fn(plus_atom(mu, j), i) - g2.fn(mu, i);
        acc.add(-space.weight(i) * space.weight(j) * d_i_gj * d_j_g2i);
      }
    }
    return acc.value();
  };
  const auto kb = detail::ks_envelope(g.bound, total);
  const auto kb2 = detail::ks_envelope(g2.bound, total);
  const auto db = detail::diff_envelope(g.bound);
  const auto db2 = detail::diff_envelope(g2.bound);
  const Envelope env = [=](std::size_t n) {
    return kb(n) * kb2(n) + total * g.bound(n) * g2.bound(n) + total * total * db(n) * db2(n);
  };
  const auto r = expect(e, f, env);
  return {"variance", std::abs(r.value), r.tail_bound};
}

/// |E[H delta(G)] - sum_i lambda_i E[G_i D_i H]|.
inline Residual verify_ibp(const AtomSpace& space, std::size_t n_max, const BoundedIntegrand& g,
                           const BoundedFunctional& h) {
  const Enumeration e = enumerate(space, n_max);
  const double total = space.total();
  auto f = [&](const Counts& mu) {
    KahanSum acc;
    const double hv = h.fn(mu);
    acc.add(hv * ks_exact(g.fn, space, mu));
    for (std::size_t i = 0; i < space.size(); ++i) {
      acc.add(-space.weight(i) * g.fn(mu, i) * (h.fn(plus_atom(mu, i)) - hv));
    }
    return acc.value();
  };
  const auto kb = detail::ks_envelope(g.bound, total);
  const auto dh = detail::diff_envelope(h.bound);
  const Envelope env = [=](std::size_t n) {
    return h.bound(n) * kb(n) + total * g.bound(n) * dh(n);
  };
  const auto r = expect(e, f, env);
  return {"ibp", std::abs(r.value), r.tail_bound};
}

/// delta_x(delta_y h(x, y))(mu) by nesting the exact KS-integral.
inline double iterated_ks(const AtomKernel& h, const AtomSpace& space, const Counts& mu) {
  // K_x(nu) = delta_y h(nu; x, y)
  auto inner = [&](const Counts& nu, std::size_t x) {
    return ks_exact([&](const Counts& c, std::size_t y) { return h(c, x, y); }, space, nu);
  };
  return ks_exact(inner, space, mu);
}

struct IteratedBound {
  double lhs = 0.0;
  double rhs = 0.0;
  double tail_bound = 0.0; // bound on the truncated part of rhs
  [[nodiscard]] bool holds() const { return lhs <= rhs + tail_bound; }
};

/// lhs = E[(delta_x delta_y h)^2];
/// rhs = 3 E int h^2 + 3 E int (D_z h)^2 + 2 E int (D^2_{z,w} h)^2.
inline IteratedBound verify_iterated_bound(const AtomSpace& space, std::size_t n_max,
                                           const BoundedKernel& h) {
  const Enumeration e = enumerate(space, n_max);
  const std::size_t m = space.size();
  const auto& lam = space.weights();
  const double total = space.total();

  const auto lhs = expect(e, [&](const Counts& mu) {
    const double v = iterated_ks(h.fn, space, mu);
    return v * v;
  });

  auto rhs_f = [&](const Counts& mu) {
    KahanSum acc;
    for (std::size_t x = 0; x < m; ++x) {
      for (std::size_t y = 0; y < m; ++y) {
        const double lxy = lam[x] * lam[y];
        const double h0 = h.fn(mu, x, y);
        acc.add(3.0 * lxy * h0 * h0);
        for (std::size_t z = 0; z < m; ++z) {
          const Counts mz = plus_atom(mu, z);
          const double hz = h.fn(mz, x, y);
          const double dz = hz - h0;
          acc.add(3.0 * lxy * lam[z] * dz * dz);
          for (std::size_t w = 0; w < m; ++w) {
            const double d2 = h.fn(plus_atom(mz, w), x, y) - hz - h.fn(plus_atom(mu, w), x, y) + h0;
            acc.add(2.0 * lxy * lam[z] * lam[w] * d2 * d2);
          }
        }
      }
    }
    return acc.value();
  };
  const Envelope env = [b = h.bound, total](std::size_t n) {
    const double b0 = b(n);
    const double b1 = b(n + 1);
    const double b2 = b(n + 2);
    return 3.0 * total * total * b0 * b0 + 3.0 * std::pow(total, 3) * (b1 + b0) * (b1 + b0) +
           2.0 * std::pow(total, 4) * (b2 + 2.0 * b1 + b0) * (b2 + 2.0 * b1 + b0);
  };
  const auto rhs = expect(e, rhs_f, env);
  return {lhs.value, rhs.value, rhs.tail_bound};
}

/// [delta(G)(mu + e_x) - delta(G)(mu)] - G_x(mu) - delta(D_x G)(mu), exact.
inline double commutation_residual_exact(const AtomIntegrand& g, const AtomSpace& space,
                                         const Counts& mu, std::size_t x) {
  const double lhs = ks_exact(g, space, plus_atom(mu, x)) - ks_exact(g, space, mu);
  return lhs - g(mu, x) - ks_exact(atom_difference(g, x), space, mu);
}

/// Counts of an atomic Configuration (atom i at coordinate i).
inline Counts counts_of(const Configuration& mu, const AtomicWindow& w) {
  Counts n(w.atoms(), 0);
  mu.for_each([&](std::span<const double> c) { ++n[w.atom_of(c)]; });
  return n;
}

/// Atomic integrand as a generic Integrand on the embedded atom points.
inline Integrand to_integrand(AtomIntegrand g, const AtomSpace& space) {
  Integrand out;
  out.eval = [g = std::move(g), w = space.window()](const Configuration& mu, const Point& x) {
    return g(counts_of(mu, w), w.atom_of(x.coords()));
  };
  return out;
}

inline Configuration to_configuration(const Counts& n) {
  std::vector<double> flat;
  for (std::size_t i = 0; i < n.size(); ++i) {
    flat.insert(flat.end(), n[i], static_cast<double>(i));
  }
  return Configuration(1, std::move(flat));
}

// Random bounded test objects: constants plus cosines of counts, bounded
// by the sum of absolute coefficients.

inline BoundedIntegrand random_integrand(std::size_t m, Rng& rng) {
  struct Coef {
    std::vector<double> a, e, g;
    std::vector<std::vector<double>> b, c, d, f;
  };
  auto k = std::make_shared<Coef>();
  double bound = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    k->a.push_back(rng.uniform(-1.0, 1.0));
    k->e.push_back(rng.uniform(-1.0, 1.0));
    k->g.push_back(rng.uniform(0.0, 6.3));
    std::vector<double> bi, ci, di, fi;
    double row = std::abs(k->a.back()) + std::abs(k->e.back());
    for (std::size_t j = 0; j < m; ++j) {
      bi.push_back(rng.uniform(-1.0, 1.0));
      ci.push_back(rng.uniform(0.2, 2.0));
      di.push_back(rng.uniform(0.0, 6.3));
      fi.push_back(rng.uniform(0.1, 1.5));
      row += std::abs(bi.back());
    }
    k->b.push_back(bi);
    k->c.push_back(ci);
    k->d.push_back(di);
    k->f.push_back(fi);
    bound = std::max(bound, row);
  }
  AtomIntegrand fn = [k](const Counts& n, std::size_t i) {
    double v = k->a[i];
    double phase = k->g[i];
    for (std::size_t j = 0; j < n.size(); ++j) {
      v += k->b[i][j] * std::cos(k->c[i][j] * n[j] + k->d[i][j]);
      phase += k->f[i][j] * n[j];
    }
    return v + k->e[i] * std::cos(phase);
  };
  return {fn, [bound](std::size_t) { return bound; }};
}

inline BoundedFunctional random_functional(std::size_t m, Rng& rng) {
  auto g = random_integrand(m, rng);
  // H(mu) = G_0(mu), a bounded functional with cross-atom dependence.
  return {[fn = g.fn](const Counts& n) { return fn(n, 0); }, g.bound};
}

inline BoundedKernel random_kernel(std::size_t m, Rng& rng) {
  std::vector<BoundedIntegrand> rows;
  double bound = 0.0;
  for (std::size_t x = 0; x < m; ++x) {
    rows.push_back(random_integrand(m, rng));
    bound = std::max(bound, rows.back().bound(0));
  }
  AtomKernel fn = [rows](const Counts& n, std::size_t x, std::size_t y) { return rows[x].fn(n, y); };
  return {fn, [bound](std::size_t) { return bound; }};
}

} // namespace pm::oracle

#endif
