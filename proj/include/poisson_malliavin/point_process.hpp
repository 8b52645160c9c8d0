#ifndef POISSON_MALLIAVIN_POINT_PROCESS_HPP
#define POISSON_MALLIAVIN_POINT_PROCESS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace pm {

inline constexpr std::size_t max_dim = 8;

/// A point of R^k, 1 <= k <= max_dim, stored inline.
class Point {
public:
  Point() = default;

  explicit Point(std::span<const double> coords) : dim_(coords.size()) {
    if (dim_ == 0 || dim_ > max_dim) {
      throw dimension_mismatch("point dimension must be in [1, " + std::to_string(max_dim) + "]");
    }
    std::copy(coords.begin(), coords.end(), c_.begin());
  }

  Point(std::initializer_list<double> coords)
      : Point(std::span<const double>(coords.begin(), coords.size())) {}

  [[nodiscard]] std::size_t dim() const { return dim_; }
  [[nodiscard]] std::span<const double> coords() const { return {c_.data(), dim_}; }
  double operator[](std::size_t i) const { return c_[i]; }
  double& operator[](std::size_t i) { return c_[i]; }

  friend bool operator==(const Point& a, const Point& b) {
    return a.dim_ == b.dim_ && std::equal(a.c_.begin(), a.c_.begin() + a.dim_, b.c_.begin());
  }

  friend bool operator<(const Point& a, const Point& b) {
    return std::lexicographical_compare(a.c_.begin(), a.c_.begin() + a.dim_, b.c_.begin(),
                                        b.c_.begin() + b.dim_);
  }

private:
  std::array<double, max_dim> c_{};
  std::size_t dim_ = 0;
};

/// Finite multiset of points of a common dimension.
///
/// Values are immutable. A configuration is a shared base array plus a short
/// list of removed base indices and a short list of appended points, so the
/// perturbed variants mu + delta_z, mu + delta_z + delta_w, eta - delta_x
/// that difference operators need cost O(#perturbations) instead of a copy.
/// Point order carries no meaning.
class Configuration {
public:
  /// Flat read-only view for hot loops.
  struct View {
    std::size_t dim;
    std::span<const double> base;          // base points, dim doubles each
    std::span<const std::uint32_t> removed; // sorted base indices to skip
    std::span<const double> extra;         // appended points
    bool base_sorted_by_first;             // base ordered by coordinate 0
  };

  explicit Configuration(std::size_t dim) : Configuration(dim, std::vector<double>{}) {}

  Configuration(std::size_t dim, std::vector<double> flat_coords) {
    if (dim == 0 || dim > max_dim) {
      throw dimension_mismatch("configuration dimension must be in [1, " +
                               std::to_string(max_dim) + "]");
    }
    if (flat_coords.size() % dim != 0) {
      throw dimension_mismatch("coordinate array length is not a multiple of the dimension");
    }
    auto base = std::make_shared<Base>();
    base->dim = dim;
    base->coords = std::move(flat_coords);
    const std::size_t n = base->coords.size() / dim;
    base->sorted_by_first = true;
    for (std::size_t i = 1; i < n; ++i) {
      if (base->coords[i * dim] < base->coords[(i - 1) * dim]) {
        base->sorted_by_first = false;
        break;
      }
    }
    base_ = std::move(base);
  }

  static Configuration from_points(std::size_t dim, std::span<const Point> points) {
    std::vector<double> flat;
    flat.reserve(points.size() * dim);
    for (const auto& p : points) {
      if (p.dim() != dim) {
        throw dimension_mismatch("point dimension does not match configuration");
      }
      flat.insert(flat.end(), p.coords().begin(), p.coords().end());
    }
    return Configuration(dim, std::move(flat));
  }

  [[nodiscard]] std::size_t dim() const { return base_->dim; }

  [[nodiscard]] std::size_t count() const {
    return base_count() - removed_.size() + extra_.size() / dim();
  }

  [[nodiscard]] bool empty() const { return count() == 0; }

  [[nodiscard]] View view() const {
    return View{dim(), base_->coords, removed_, extra_, base_->sorted_by_first};
  }

  /// Logical point i: live base points in base order, then appended points.
  [[nodiscard]] Point point(std::size_t i) const {
    const std::size_t d = dim();
    const std::size_t alive = base_count() - removed_.size();
    if (i < alive) {
      const std::size_t j = base_index(i);
      return Point(std::span<const double>(base_->coords).subspan(j * d, d));
    }
    const std::size_t k = i - alive;
    if (k * d >= extra_.size()) {
      throw std::out_of_range("configuration index out of range");
    }
    return Point(std::span<const double>(extra_).subspan(k * d, d));
  }

  /// Calls f(std::span<const double>) for every point.
  template <class F>
  void for_each(F&& f) const {
    const std::size_t d = dim();
    const std::size_t n = base_count();
    std::size_t r = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (r < removed_.size() && removed_[r] == j) {
        ++r;
        continue;
      }
      f(std::span<const double>(base_->coords).subspan(j * d, d));
    }
    for (std::size_t k = 0; k < extra_.size(); k += d) {
      f(std::span<const double>(extra_).subspan(k, d));
    }
  }

  /// True if pred holds for some point; stops at the first hit.
  template <class Pred>
  [[nodiscard]] bool any_of(Pred&& pred) const {
    const std::size_t d = dim();
    const std::size_t n = base_count();
    std::size_t r = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (r < removed_.size() && removed_[r] == j) {
        ++r;
        continue;
      }
      if (pred(std::span<const double>(base_->coords).subspan(j * d, d))) {
        return true;
      }
    }
    for (std::size_t k = 0; k < extra_.size(); k += d) {
      if (pred(std::span<const double>(extra_).subspan(k, d))) {
        return true;
      }
    }
    return false;
  }

  [[nodiscard]] std::vector<Point> points() const {
    std::vector<Point> out;
    out.reserve(count());
    for_each([&](std::span<const double> c) { out.emplace_back(c); });
    return out;
  }

  /// mu + delta_x.
  [[nodiscard]] Configuration add(const Point& x) const {
    if (x.dim() != dim()) {
      throw dimension_mismatch("added point has dimension " + std::to_string(x.dim()) +
                               ", configuration has " + std::to_string(dim()));
    }
    Configuration out = *this;
    out.extra_.insert(out.extra_.end(), x.coords().begin(), x.coords().end());
    return out;
  }

  /// (point i, mu - delta_{point i}).
  [[nodiscard]] std::pair<Point, Configuration> remove_at(std::size_t i) const {
    if (i >= count()) {
      throw std::out_of_range("remove_at: index " + std::to_string(i) + " out of range for " +
                              std::to_string(count()) + " points");
    }
    const std::size_t d = dim();
    const std::size_t alive = base_count() - removed_.size();
    Configuration out = *this;
    if (i < alive) {
      const std::size_t j = base_index(i);
      out.removed_.insert(std::lower_bound(out.removed_.begin(), out.removed_.end(), j),
                          static_cast<std::uint32_t>(j));
      return {Point(std::span<const double>(base_->coords).subspan(j * d, d)), std::move(out)};
    }
    const std::size_t k = (i - alive) * d;
    Point p(std::span<const double>(extra_).subspan(k, d));
    out.extra_.erase(out.extra_.begin() + static_cast<std::ptrdiff_t>(k),
                     out.extra_.begin() + static_cast<std::ptrdiff_t>(k + d));
    return {p, std::move(out)};
  }

  /// Multiset equality (order-insensitive, exact coordinates).
  [[nodiscard]] bool same_multiset(const Configuration& other) const {
    if (dim() != other.dim() || count() != other.count()) {
      return false;
    }
    auto a = points();
    auto b = other.points();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
  }

private:
  struct Base {
    std::size_t dim = 1;
    std::vector<double> coords;
    bool sorted_by_first = true;
  };

  [[nodiscard]] std::size_t base_count() const { return base_->coords.size() / base_->dim; }

  // Base index of the i-th live base point.
  [[nodiscard]] std::size_t base_index(std::size_t i) const {
    std::size_t j = i;
    for (auto r : removed_) {
      if (r <= j) {
        ++j;
      } else {
        break;
      }
    }
    return j;
  }

  std::shared_ptr<const Base> base_;
  std::vector<std::uint32_t> removed_;
  std::vector<double> extra_;
};

inline Configuration add(const Configuration& config, const Point& x) { return config.add(x); }

inline std::pair<Point, Configuration> remove_at(const Configuration& config, std::size_t i) {
  return config.remove_at(i);
}

/// Box [lo, hi] with intensity t * Lebesgue.
class Window {
public:
  Window(std::vector<double> lo, std::vector<double> hi, double intensity_scale)
      : lo_(std::move(lo)), hi_(std::move(hi)), t_(intensity_scale) {
    if (lo_.empty() || lo_.size() > max_dim || lo_.size() != hi_.size()) {
      throw invalid_window("window corners must have equal dimension in [1, " +
                           std::to_string(max_dim) + "]");
    }
    volume_ = 1.0;
    for (std::size_t i = 0; i < lo_.size(); ++i) {
      if (!std::isfinite(lo_[i]) || !std::isfinite(hi_[i]) || !(lo_[i] < hi_[i])) {
        throw invalid_window("window requires finite lo_i < hi_i");
      }
      volume_ *= hi_[i] - lo_[i];
    }
    if (!(t_ > 0.0) || !std::isfinite(t_ * volume_) || !(volume_ > 0.0)) {
      throw invalid_window("window total mass must be finite and positive");
    }
  }

  static Window unit_cube(std::size_t d, double t) {
    return Window(std::vector<double>(d, 0.0), std::vector<double>(d, 1.0), t);
  }

  [[nodiscard]] std::size_t dim() const { return lo_.size(); }
  [[nodiscard]] const std::vector<double>& lo() const { return lo_; }
  [[nodiscard]] const std::vector<double>& hi() const { return hi_; }
  [[nodiscard]] double intensity_scale() const { return t_; }
  [[nodiscard]] double volume() const { return volume_; }
  [[nodiscard]] double total_mass() const { return t_ * volume_; }

  [[nodiscard]] bool contains(std::span<const double> x) const {
    if (x.size() != dim()) {
      return false;
    }
    for (std::size_t i = 0; i < dim(); ++i) {
      if (x[i] < lo_[i] || x[i] > hi_[i]) {
        return false;
      }
    }
    return true;
  }

  /// One point from lambda / lambda(window).
  Point draw_point(Rng& rng) const {
    Point p;
    std::array<double, max_dim> c{};
    for (std::size_t i = 0; i < dim(); ++i) {
      c[i] = rng.uniform(lo_[i], hi_[i]);
    }
    return Point(std::span<const double>(c.data(), dim()));
  }

  /// Poisson configuration. The first coordinate is generated as a
  /// homogeneous Poisson process on [lo_0, hi_0] by exponential spacings,
  /// the others uniformly; the result is ordered by coordinate 0.
  Configuration sample(Rng& rng) const {
    const std::size_t d = dim();
    double rate = t_;
    for (std::size_t i = 1; i < d; ++i) {
      rate *= hi_[i] - lo_[i];
    }
    std::vector<double> flat;
    const double expected = total_mass();
    if (expected > 0.0) {
      flat.reserve(static_cast<std::size_t>(expected + 6.0 * std::sqrt(expected) + 8.0) * d);
    }
    double s = lo_[0];
    for (;;) {
      s += rng.exponential(rate);
      if (!(s <= hi_[0])) {
        break;
      }
      flat.push_back(s);
      for (std::size_t i = 1; i < d; ++i) {
        flat.push_back(rng.uniform(lo_[i], hi_[i]));
      }
    }
    return Configuration(d, std::move(flat));
  }

private:
  std::vector<double> lo_;
  std::vector<double> hi_;
  double t_;
  double volume_ = 0.0;
};

inline Configuration sample(const Window& window, Rng& rng) { return window.sample(rng); }

/// Finite atomic space embedded in R^1: atom i sits at coordinate i and
/// carries mass lambda_i.
class AtomicWindow {
public:
  explicit AtomicWindow(std::vector<double> weights) : weights_(std::move(weights)) {
    if (weights_.empty()) {
      throw invalid_window("atomic space needs at least one atom");
    }
    double acc = 0.0;
    for (double w : weights_) {
      if (!(w > 0.0) || !std::isfinite(w)) {
        throw invalid_window("atom masses must be positive and finite");
      }
      acc += w;
      cumulative_.push_back(acc);
    }
    total_ = acc;
  }

  [[nodiscard]] std::size_t dim() const { return 1; }
  [[nodiscard]] std::size_t atoms() const { return weights_.size(); }
  [[nodiscard]] const std::vector<double>& weights() const { return weights_; }
  [[nodiscard]] double total_mass() const { return total_; }

  static Point atom_point(std::size_t i) { return Point{static_cast<double>(i)}; }

  /// Atom index of a point produced by this space.
  [[nodiscard]] std::size_t atom_of(std::span<const double> x) const {
    const double r = std::round(x[0]);
    if (x.size() != 1 || r < 0.0 || r >= static_cast<double>(atoms()) || r != x[0]) {
      throw domain_error("point is not an atom of the atomic space");
    }
    return static_cast<std::size_t>(r);
  }

  Point draw_point(Rng& rng) const {
    const double u = rng.uniform() * total_;
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    std::size_t i = static_cast<std::size_t>(it - cumulative_.begin());
    return atom_point(std::min(i, atoms() - 1));
  }

  Configuration sample(Rng& rng) const {
    std::vector<double> flat;
    for (std::size_t i = 0; i < atoms(); ++i) {
      const auto n = rng.poisson(weights_[i]);
      flat.insert(flat.end(), n, static_cast<double>(i));
    }
    return Configuration(1, std::move(flat));
  }

private:
  std::vector<double> weights_;
  std::vector<double> cumulative_;
  double total_ = 0.0;
};

/// Anything Monte Carlo code can draw Poisson configurations and
/// lambda-distributed points from.
template <class S>
concept PoissonSpace = requires(const S& s, Rng& rng) {
  { s.dim() } -> std::convertible_to<std::size_t>;
  { s.total_mass() } -> std::convertible_to<double>;
  { s.sample(rng) } -> std::same_as<Configuration>;
  { s.draw_point(rng) } -> std::same_as<Point>;
};

static_assert(PoissonSpace<Window>);
static_assert(PoissonSpace<AtomicWindow>);

/// Quadrature nodes for lambda-integrals: sum_k weight_k * f(node_k).
struct NodeSet {
  std::vector<Point> nodes;
  std::vector<double> weights;

  [[nodiscard]] std::size_t size() const { return nodes.size(); }

  [[nodiscard]] double total_weight() const {
    double s = 0.0;
    for (double w : weights) {
      s += w;
    }
    return s;
  }
};

/// n iid uniform nodes, each weighted total_mass / n.
inline NodeSet integration_nodes(const Window& window, std::size_t n, Rng& rng) {
  if (n == 0) {
    throw std::invalid_argument("integration_nodes: n must be >= 1");
  }
  NodeSet out;
  out.nodes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.nodes.push_back(window.draw_point(rng));
  }
  out.weights.assign(n, window.total_mass() / static_cast<double>(n));
  return out;
}

/// The exact node set of an atomic space: every atom with its own mass.
inline NodeSet atom_nodes(const AtomicWindow& space) {
  NodeSet out;
  for (std::size_t i = 0; i < space.atoms(); ++i) {
    out.nodes.push_back(AtomicWindow::atom_point(i));
    out.weights.push_back(space.weights()[i]);
  }
  return out;
}

} // namespace pm

#endif
