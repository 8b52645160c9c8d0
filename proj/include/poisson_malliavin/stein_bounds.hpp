#ifndef POISSON_MALLIAVIN_STEIN_BOUNDS_HPP
#define POISSON_MALLIAVIN_STEIN_BOUNDS_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <bitset>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "error.hpp"
#include "malliavin.hpp"
#include "parallel.hpp"
#include "point_process.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace pm {

/// Monte Carlo estimate of one of T_1..T_9.
///
/// raw_mean / raw_std_error describe the quantity under the outermost root
/// (the term itself for T_3, T_4, T_5). mean is the term: the clamped root
/// for the others, times 2 for the cyclic forms of T_7 and T_9.
struct TermEstimate {
  int term_id = 0;
  double mean = 0.0;
  double std_error = 0.0;
  double raw_mean = 0.0;
  double raw_std_error = 0.0;
  std::size_t n_outer = 0;
  std::size_t n_space = 0;
  bool clamped = false; // raw mean below -3 SE, root taken at 0
};

struct EstimatorSizes {
  std::size_t n_sigma = 10000;
  std::size_t n_outer = 1000;
  std::size_t n_space = 16;
  unsigned workers = 1;
};

struct BoundReport {
  std::array<TermEstimate, 9> terms{};
  double sigma2_hat = 0.0;
  double sigma2_std_error = 0.0;
  double wasserstein_bound = 0.0;
  double wasserstein_std_error = 0.0;
  double kolmogorov_bound = 0.0;
  double kolmogorov_std_error = 0.0;
  bool cyclic = false;

  [[nodiscard]] const TermEstimate& term(int i) const { return terms.at(static_cast<std::size_t>(i - 1)); }
};

struct DistanceReport {
  std::size_t n = 0;
  double d_K = 0.0;
  double d_W = 0.0;
};

/// Bit i set selects T_i.
using TermMask = std::bitset<10>;

inline TermMask all_terms() {
  TermMask m;
  for (int i = 1; i <= 9; ++i) {
    m.set(static_cast<std::size_t>(i));
  }
  return m;
}

namespace detail {

inline constexpr int n_draw = 6;
enum : unsigned { X = 0, Y = 1, Z = 2, W = 3, X2 = 4, Y2 = 5 };
constexpr unsigned bit(unsigned i) { return 1u << i; }

// Lazily evaluated G_p(mu + sum_{i in mask} delta_{p_i}) for six spatial
// points. Every difference operator is inclusion-exclusion over these.
class DrawCache {
public:
  DrawCache(const Integrand& g, const Configuration& mu) : g_(g), mu_(mu) {}

  void reset(const std::array<Point, n_draw>& pts) {
    pts_ = pts;
    have_.reset();
    for (auto& c : confs_) {
      c.reset();
    }
  }

  double G(unsigned p, unsigned mask) {
    const std::size_t key = p * 64 + mask;
    if (!have_[key]) {
      vals_[key] = evaluate(g_, conf(mask), pts_[p]);
      have_.set(key);
    }
    return vals_[key];
  }

  // D_a G_p at mu + mask.
  double D(unsigned a, unsigned p, unsigned mask) { return G(p, mask | bit(a)) - G(p, mask); }

  // D^2_{a,b} G_p at mu + mask.
  double D2(unsigned a, unsigned b, unsigned p, unsigned mask) {
    return D(b, p, mask | bit(a)) - D(b, p, mask);
  }

private:
  const Configuration& conf(unsigned mask) {
    if (mask == 0) {
      return mu_;
    }
    auto& slot = confs_[mask];
    if (!slot) {
      const unsigned low = mask & (~mask + 1);
      const unsigned i = static_cast<unsigned>(std::countr_zero(low));
      slot = conf(mask & ~low).add(pts_[i]);
    }
    return *slot;
  }

  const Integrand& g_;
  const Configuration& mu_;
  std::array<Point, n_draw> pts_{};
  std::array<std::optional<Configuration>, 64> confs_{};
  std::array<double, n_draw * 64> vals_{};
  std::bitset<n_draw * 64> have_;
};

// One draw of the quantity under the outermost root of T_id, already
// multiplied by the Jacobian lam^k.
inline double term_sample(int id, DrawCache& c, double lam, bool cyclic) {
  const double l2 = lam * lam;
  const double l3 = l2 * lam;
  const double l4 = l3 * lam;
  auto G = [&](unsigned p, unsigned m = 0) { return c.G(p, m); };
  auto D = [&](unsigned a, unsigned p, unsigned m = 0) { return c.D(a, p, m); };
  // (G_x + D_y G_x) D_x G_y
  auto A = [&](unsigned x, unsigned y, unsigned m = 0) { return G(x, m | bit(y)) * D(x, y, m); };
  // G_x D_x G_y
  auto C = [&](unsigned x, unsigned y, unsigned m = 0) { return G(x, m) * D(x, y, m); };
  // D_x G_y D_y G_x
  auto P = [&](unsigned x, unsigned y, unsigned m = 0) { return D(x, y, m) * D(y, x, m); };
  // D_x G_y D_y |G_x|
  auto B = [&](unsigned x, unsigned y, unsigned m = 0) {
    return D(x, y, m) * (std::abs(G(x, m | bit(y))) - std::abs(G(x, m)));
  };
  // D_x G_y (D_y |G_x| + |G_x|), or D_x G_y |G_x| in the cyclic form
  auto K = [&](unsigned x, unsigned y, unsigned m = 0) {
    return D(x, y, m) * std::abs(cyclic ? G(x, m) : G(x, m | bit(y)));
  };
  switch (id) {
  case 1: {
    const double a = G(X, bit(Y)) * G(X, bit(Y)) - G(X) * G(X);
    const double b = G(X2, bit(Y)) * G(X2, bit(Y)) - G(X2) * G(X2);
    return l3 * a * b;
  }
  case 2: {
    if (cyclic) {
      return 0.0;
    }
    const double a = P(X, Y, bit(Z)) - P(X, Y);
    const double b = P(X2, Y2, bit(Z)) - P(X2, Y2);
    return l4 * lam * a * b;
  }
  case 3:
    return lam * std::pow(std::abs(G(X)), 3);
  case 4: {
    const double dxy = D(X, Y);
    if (cyclic) {
      return l2 * (2.0 * G(X) * G(X) * std::abs(dxy) +
                   std::abs(C(X, Y)) * (2.0 * std::abs(G(Y)) + std::abs(dxy)));
    }
    const double dyx = D(Y, X);
    return l2 * (3.0 * std::abs(dxy * dyx * G(X)) + std::abs(dxy * dyx * dyx) +
                 2.0 * G(X) * G(X) * std::abs(dxy) +
                 std::abs(A(X, Y)) * (2.0 * std::abs(G(Y)) + std::abs(dxy + dyx)));
  }
  case 5: {
    const double lead = 2.0 * (std::abs(D(Y, Z)) + std::abs(c.D2(X, Y, Z, 0)));
    if (cyclic) {
      return l3 * lead * (std::abs(C(X, Y, bit(Z)) - C(X, Y)) + 2.0 * std::abs(C(X, Y)));
    }
    const double first = lead * (std::abs(A(X, Y, bit(Z)) - A(X, Y)) + 2.0 * std::abs(A(X, Y)));
    const double second =
        std::abs(D(X, Z)) * (std::abs(P(X, Y, bit(Z)) - P(X, Y)) + 2.0 * std::abs(P(X, Y)));
    return l3 * (first + second);
  }
  case 6: {
    auto F = [&](unsigned x, unsigned y, unsigned m) { return cyclic ? C(x, y, m) : A(x, y, m); };
    const double a = F(X, Y, 0);
    const double b = F(X2, Y, 0);
    return l3 * a * b + l4 * (F(X, Y, bit(Z)) - a) * (F(X2, Y, bit(Z)) - b);
  }
  case 7: {
    const double g4 = std::pow(G(X), 4);
    if (cyclic) {
      return lam * g4;
    }
    auto s = [&](unsigned p, unsigned m) { return G(p, m) * std::abs(G(p, m)); };
    return lam * g4 + l2 * (s(Y, bit(X)) - s(Y, 0)) * (s(X, bit(Y)) - s(X, 0));
  }
  case 8: {
    if (cyclic) {
      return 0.0;
    }
    const double first = l3 * B(X, Y) * B(X, Y2);
    const double second = l4 * (B(Z, Y, bit(X)) - B(Z, Y)) * (B(X, Y2, bit(Z)) - B(X, Y2));
    return first + second;
  }
  case 9: {
    const double k0 = K(X, Y);
    const double kz = K(X, Y, bit(Z)) - k0;
    const double kzw = K(X, Y, bit(Z) | bit(W)) - K(X, Y, bit(Z)) - K(X, Y, bit(W)) + k0;
    return 3.0 * l2 * k0 * k0 + 3.0 * l3 * kz * kz + 2.0 * l4 * kzw * kzw;
  }
  default:
    throw std::out_of_range("term id must be in 1..9");
  }
}

inline bool is_root_term(int id) { return id != 3 && id != 4 && id != 5; }

inline TermEstimate finish_term(int id, const MeanSe& raw, std::size_t n_space, bool cyclic) {
  TermEstimate e;
  e.term_id = id;
  e.raw_mean = raw.mean;
  e.raw_std_error = raw.std_error;
  e.n_outer = raw.n;
  e.n_space = n_space;
  if (!std::isfinite(raw.mean) || !std::isfinite(raw.std_error)) {
    throw numeric_error("term T" + std::to_string(id) + " estimate is not finite");
  }
  if (!is_root_term(id)) {
    e.mean = raw.mean;
    e.std_error = raw.std_error;
    return e;
  }
  e.clamped = raw.mean < -3.0 * raw.std_error;
  const double m = std::max(raw.mean, 0.0);
  e.mean = std::sqrt(m);
  // Delta method, capped by the sqrt(SE) scale that governs a root near 0.
  const double cap = std::sqrt(raw.std_error);
  e.std_error = m > 0.0 ? std::min(raw.std_error / (2.0 * e.mean), cap) : cap;
  if (cyclic && (id == 7 || id == 9)) {
    e.mean *= 2.0;
    e.std_error *= 2.0;
  }
  return e;
}

inline std::uint64_t fresh_key(Rng& rng) { return rng.engine()(); }

} // namespace detail

/// Estimates every T_i with bit i set in `mask` from n_outer configurations
/// with n_space spatial draws each. All terms share configurations and draws;
/// the result for a given term does not depend on the mask or worker count.
template <PoissonSpace S>
std::array<std::optional<TermEstimate>, 9>
estimate_terms(TermMask mask, const Integrand& g, const S& space, std::size_t n_outer,
               std::size_t n_space, Rng& rng, bool cyclic, unsigned workers = 1) {
  if (n_outer < 2) {
    throw std::invalid_argument("estimate_terms: n_outer must be >= 2 for a standard error");
  }
  if (n_space < 1) {
    throw std::invalid_argument("estimate_terms: n_space must be >= 1");
  }
  const double lam = space.total_mass();
  const std::uint64_t key = detail::fresh_key(rng);
  std::array<std::vector<double>, 9> vals;
  for (int id = 1; id <= 9; ++id) {
    if (mask[static_cast<std::size_t>(id)]) {
      vals[static_cast<std::size_t>(id - 1)].assign(n_outer, 0.0);
    }
  }
  parallel_for(n_outer, workers, [&](std::size_t i) {
    Rng r = rng.substream({key, i});
    const Configuration mu = space.sample(r);
    detail::DrawCache cache(g, mu);
    std::array<KahanSum, 9> acc{};
    for (std::size_t k = 0; k < n_space; ++k) {
      std::array<Point, detail::n_draw> pts;
      for (auto& p : pts) {
        p = space.draw_point(r);
      }
      cache.reset(pts);
      for (int id = 1; id <= 9; ++id) {
        if (mask[static_cast<std::size_t>(id)]) {
          acc[static_cast<std::size_t>(id - 1)].add(detail::term_sample(id, cache, lam, cyclic));
        }
      }
    }
    for (int id = 1; id <= 9; ++id) {
      if (mask[static_cast<std::size_t>(id)]) {
        vals[static_cast<std::size_t>(id - 1)][i] =
            acc[static_cast<std::size_t>(id - 1)].value() / static_cast<double>(n_space);
      }
    }
  });
  std::array<std::optional<TermEstimate>, 9> out;
  for (int id = 1; id <= 9; ++id) {
    const auto j = static_cast<std::size_t>(id - 1);
    if (!mask[static_cast<std::size_t>(id)]) {
      continue;
    }
    if (cyclic && (id == 2 || id == 8)) {
      TermEstimate zero;
      zero.term_id = id;
      zero.n_outer = n_outer;
      zero.n_space = n_space;
      out[j] = zero;
      continue;
    }
    out[j] = detail::finish_term(id, mean_se(vals[j]), n_space, cyclic);
  }
  return out;
}

template <PoissonSpace S>
TermEstimate estimate_term(int id, const Integrand& g, const S& space, std::size_t n_outer,
                           std::size_t n_space, Rng& rng, bool cyclic, unsigned workers = 1) {
  if (id < 1 || id > 9) {
    throw std::out_of_range("term id must be in 1..9");
  }
  TermMask mask;
  mask.set(static_cast<std::size_t>(id));
  return *estimate_terms(mask, g, space, n_outer, n_space, rng, cyclic,
                         workers)[static_cast<std::size_t>(id - 1)];
}

/// E delta(G)^2 = E int G_x^2 + E int int D_x G_y D_y G_x, by Monte Carlo.
template <PoissonSpace S>
MeanSe estimate_sigma2(const Integrand& g, const S& space, std::size_t n_outer,
                       std::size_t n_space, Rng& rng, unsigned workers = 1) {
  if (n_outer < 2 || n_space < 1) {
    throw std::invalid_argument("estimate_sigma2: need n_outer >= 2 and n_space >= 1");
  }
  const double lam = space.total_mass();
  const std::uint64_t key = detail::fresh_key(rng);
  std::vector<double> vals(n_outer, 0.0);
  parallel_for(n_outer, workers, [&](std::size_t i) {
    Rng r = rng.substream({key, i});
    const Configuration mu = space.sample(r);
    detail::DrawCache cache(g, mu);
    KahanSum acc;
    for (std::size_t k = 0; k < n_space; ++k) {
      std::array<Point, detail::n_draw> pts;
      pts[0] = space.draw_point(r);
      pts[1] = space.draw_point(r);
      for (std::size_t j = 2; j < pts.size(); ++j) {
        pts[j] = pts[0];
      }
      cache.reset(pts);
      const double gx = cache.G(detail::X, 0);
      acc.add(lam * gx * gx +
              lam * lam * cache.D(detail::X, detail::Y, 0) * cache.D(detail::Y, detail::X, 0));
    }
    vals[i] = acc.value() / static_cast<double>(n_space);
  });
  return mean_se(vals);
}

/// Normalized bound report: sigma^2 from its own pre-pass, the integrand
/// rescaled by 1/sigma_hat, then all nine terms on the rescaled integrand.
template <PoissonSpace S>
BoundReport bound_report(const Integrand& g, const S& space, const EstimatorSizes& sizes, Rng& rng,
                         bool cyclic) {
  BoundReport rep;
  rep.cyclic = cyclic;
  const MeanSe s2 = estimate_sigma2(g, space, sizes.n_sigma, sizes.n_space, rng, sizes.workers);
  rep.sigma2_hat = s2.mean;
  rep.sigma2_std_error = s2.std_error;
  if (!std::isfinite(s2.mean) || !(s2.mean > 5.0 * s2.std_error) || !(s2.mean > 0.0)) {
    throw numeric_error("variance estimate " + std::to_string(s2.mean) + " (SE " +
                        std::to_string(s2.std_error) + ") is not positive at 5 SE");
  }
  const Integrand normalized = scaled(g, 1.0 / std::sqrt(s2.mean));
  const auto est = estimate_terms(all_terms(), normalized, space, sizes.n_outer, sizes.n_space, rng,
                                  cyclic, sizes.workers);
  for (std::size_t j = 0; j < 9; ++j) {
    rep.terms[j] = *est[j];
    if (!std::isfinite(rep.terms[j].mean) || !std::isfinite(rep.terms[j].std_error)) {
      throw numeric_error("term T" + std::to_string(j + 1) + " is not finite");
    }
  }
  auto t = [&](int i) { return rep.term(i).mean; };
  auto se = [&](int i) { return rep.term(i).std_error; };
  rep.wasserstein_bound = t(1) + t(2) + t(3) + t(4) + t(5);
  rep.wasserstein_std_error = se(1) + se(2) + se(3) + se(4) + se(5);
  rep.kolmogorov_bound = t(1) + t(2) + t(6) + 2.0 * (t(7) + t(8) + t(9));
  rep.kolmogorov_std_error = se(1) + se(2) + se(6) + 2.0 * (se(7) + se(8) + se(9));
  return rep;
}

/// n i.i.d. values of f over fresh configurations, one substream per item.
template <PoissonSpace S, class F>
std::vector<double> sample_functional(const S& space, F&& f, std::size_t n, Rng& rng,
                                      unsigned workers = 1) {
  const std::uint64_t key = detail::fresh_key(rng);
  std::vector<double> out(n, 0.0);
  parallel_for(n, workers, [&](std::size_t i) {
    Rng r = rng.substream({key, i});
    out[i] = f(space.sample(r));
  });
  return out;
}

/// n i.i.d. pathwise KS-integrals over fresh configurations, fixed nodes.
template <PoissonSpace S>
std::vector<double> sample_ks(const Integrand& g, const S& space, const NodeSet& nodes,
                              std::size_t n, Rng& rng, unsigned workers = 1) {
  return sample_functional(
      space, [&](const Configuration& eta) { return ks_integral(g, eta, nodes); }, n, rng, workers);
}

/// Same with the integrand's exact compensator instead of nodes.
template <PoissonSpace S>
std::vector<double> sample_ks(const Integrand& g, const S& space, std::size_t n, Rng& rng,
                              unsigned workers = 1) {
  if (!g.compensator) {
    throw std::invalid_argument("sample_ks: integrand has no exact compensator; pass nodes");
  }
  return sample_functional(
      space, [&](const Configuration& eta) { return ks_integral_exact(g, eta); }, n, rng, workers);
}

/// sup_u |F_n(u) - Phi(u)|.
inline double empirical_kolmogorov(std::span<const double> sample) {
  if (sample.empty()) {
    throw std::invalid_argument("empirical_kolmogorov: empty sample");
  }
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double best = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double p = normal_cdf(s[i]);
    best = std::max({best, static_cast<double>(i + 1) / n - p, p - static_cast<double>(i) / n});
  }
  return std::min(best, 1.0);
}

namespace detail {

// Psi(u) = u Phi(u) + phi(u), an antiderivative of Phi.
inline double psi(double u) { return u * normal_cdf(u) + normal_pdf(u); }

// int_a^b Phi, arranged to avoid cancellation on the right half-line.
inline double int_phi(double a, double b) {
  if (b <= 0.0) {
    return psi(b) - psi(a);
  }
  if (a >= 0.0) {
    return (b - a) - (psi(-a) - psi(-b));
  }
  return int_phi(a, 0.0) + int_phi(0.0, b);
}

// int_a^b |c - Phi(u)| du.
inline double segment_abs(double a, double b, double c) {
  if (!(b > a)) {
    return 0.0;
  }
  const double cross = -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * c);
  auto below = [&](double lo, double hi) { return c * (hi - lo) - int_phi(lo, hi); }; // Phi <= c
  auto above = [&](double lo, double hi) { return int_phi(lo, hi) - c * (hi - lo); };
  if (cross <= a) {
    return above(a, b);
  }
  if (cross >= b) {
    return below(a, b);
  }
  return below(a, cross) + above(cross, b);
}

} // namespace detail

/// int |F_n(u) - Phi(u)| du, exact up to rounding.
inline double empirical_wasserstein(std::span<const double> sample) {
  if (sample.empty()) {
    throw std::invalid_argument("empirical_wasserstein: empty sample");
  }
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  KahanSum acc;
  acc.add(detail::psi(s.front()));   // int_{-inf}^{x_1} Phi
  acc.add(detail::psi(-s.back()));   // int_{x_n}^{inf} (1 - Phi)
  for (std::size_t i = 1; i < n; ++i) {
    acc.add(detail::segment_abs(s[i - 1], s[i], static_cast<double>(i) / static_cast<double>(n)));
  }
  return acc.value();
}

inline DistanceReport empirical_distances(std::span<const double> sample) {
  return {sample.size(), empirical_kolmogorov(sample), empirical_wasserstein(sample)};
}

/// max over n random (mu, x, y) of |D_x G_y(mu) D_y G_x(mu)|.
template <PoissonSpace S>
double cyclic_check(const Integrand& g, const S& space, std::size_t n, Rng& rng) {
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Configuration mu = space.sample(rng);
    const Point x = space.draw_point(rng);
    const Point y = space.draw_point(rng);
    worst = std::max(worst, std::abs(diff1(g, mu, y, x) * diff1(g, mu, x, y)));
  }
  return worst;
}

} // namespace pm

#endif
