#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "poisson_malliavin/point_process.hpp"
#include "poisson_malliavin/stats.hpp"

using pm::Configuration;
using pm::Point;
using pm::Rng;
using pm::Window;

TEST(Window, RejectsBadCorners) {
  EXPECT_THROW(Window({0.0}, {0.0}, 1.0), pm::invalid_window);
  EXPECT_THROW(Window({0.0, 0.0}, {1.0}, 1.0), pm::invalid_window);
  EXPECT_THROW(Window({0.0}, {1.0}, 0.0), pm::invalid_window);
  EXPECT_THROW(Window({0.0}, {1.0}, -2.0), pm::invalid_window);
  EXPECT_THROW(Window({0.0}, {INFINITY}, 1.0), pm::invalid_window);
  EXPECT_THROW(Window(std::vector<double>(9, 0.0), std::vector<double>(9, 1.0), 1.0),
               pm::invalid_window);
}

TEST(Window, MassAndContainment) {
  const Window w({0.0, -1.0}, {2.0, 1.0}, 3.0);
  EXPECT_DOUBLE_EQ(w.volume(), 4.0);
  EXPECT_DOUBLE_EQ(w.total_mass(), 12.0);
  const double in[] = {1.0, 0.0};
  const double out[] = {2.5, 0.0};
  EXPECT_TRUE(w.contains(in));
  EXPECT_FALSE(w.contains(out));
}

TEST(Sample, VanishingIntensityGivesEmptyConfigurations) {
  const Window w = Window::unit_cube(2, 1e-12);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(w.sample(rng).count(), 0u);
  }
}

TEST(Sample, MeanCountMatchesIntensity) {
  const Window w = Window::unit_cube(1, 5.0);
  Rng rng(2);
  const int n = 100000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    s += static_cast<double>(pm::sample(w, rng).count());
  }
  EXPECT_NEAR(s / n, 5.0, 3.0 * std::sqrt(5.0 / n));
}

TEST(Sample, DisjointHalvesAreUncorrelated) {
  const Window w = Window::unit_cube(2, 2.0);
  Rng rng(3);
  const int n = 100000;
  std::vector<double> prod(n), a(n), b(n);
  for (int i = 0; i < n; ++i) {
    const auto c = w.sample(rng);
    double left = 0.0;
    double right = 0.0;
    c.for_each([&](std::span<const double> x) { (x[0] < 0.5 ? left : right) += 1.0; });
    a[i] = left;
    b[i] = right;
  }
  const double ma = pm::mean_se(a).mean;
  const double mb = pm::mean_se(b).mean;
  for (int i = 0; i < n; ++i) {
    prod[i] = (a[i] - ma) * (b[i] - mb);
  }
  const auto cov = pm::mean_se(prod);
  EXPECT_NEAR(cov.mean, 0.0, 3.0 * cov.std_error);
  EXPECT_NEAR(ma, 1.0, 3.0 * std::sqrt(1.0 / n));
}

TEST(Sample, CountsPassChiSquareAgainstPoisson) {
  const Window w = Window::unit_cube(2, 4.0);
  Rng rng(4);
  const int n = 10000;
  std::vector<double> observed(13, 0.0); // bins 0..11, 12+ pooled
  for (int i = 0; i < n; ++i) {
    const auto k = std::min<std::size_t>(w.sample(rng).count(), 12);
    observed[k] += 1.0;
  }
  double chi2 = 0.0;
  double head = 0.0;
  for (std::size_t k = 0; k < 13; ++k) {
    double p = 0.0;
    if (k < 12) {
      p = oracles::poisson_pmf(4.0, k);
      head += p;
    } else {
      p = 1.0 - head;
    }
    const double e = n * p;
    chi2 += (observed[k] - e) * (observed[k] - e) / e;
  }
  EXPECT_LT(chi2, oracles::chi2_crit_0001(12));
}

TEST(Sample, PointsLieInWindowSortedByFirstCoordinate) {
  const Window w({-1.0, 2.0, 0.0}, {1.0, 3.0, 0.5}, 40.0);
  Rng rng(5);
  const auto c = w.sample(rng);
  ASSERT_GT(c.count(), 0u);
  double prev = -INFINITY;
  c.for_each([&](std::span<const double> x) {
    EXPECT_TRUE(w.contains(x));
    EXPECT_GE(x[0], prev);
    prev = x[0];
  });
  EXPECT_TRUE(c.view().base_sorted_by_first);
}

TEST(Sample, SameSeedSameConfiguration) {
  const Window w = Window::unit_cube(2, 50.0);
  Rng a(99);
  Rng b(99);
  const auto ca = w.sample(a);
  const auto cb = w.sample(b);
  ASSERT_EQ(ca.count(), cb.count());
  for (std::size_t i = 0; i < ca.count(); ++i) {
    EXPECT_EQ(ca.point(i), cb.point(i));
  }
}

TEST(Sample, SubstreamsDifferAndAreDeterministic) {
  const Rng root(7);
  Rng s1 = root.substream({1, 2});
  Rng s1b = root.substream({1, 2});
  Rng s2 = root.substream({2, 1});
  const double u1 = s1.uniform();
  EXPECT_EQ(u1, s1b.uniform());
  EXPECT_NE(u1, s2.uniform());
}

TEST(Configuration, AddToEmpty) {
  const Configuration empty(2);
  const Point x{0.1, 0.2};
  const auto c = pm::add(empty, x);
  ASSERT_EQ(c.count(), 1u);
  EXPECT_EQ(c.point(0), x);
}

TEST(Configuration, AddTwiceGivesMultiplicityTwo) {
  const Point x{0.5};
  const auto c = Configuration(1).add(x).add(x);
  ASSERT_EQ(c.count(), 2u);
  EXPECT_EQ(c.point(0), x);
  EXPECT_EQ(c.point(1), x);
}

TEST(Configuration, AddIncrementsCount) {
  Rng rng(8);
  const Window w = Window::unit_cube(2, 10.0);
  for (int i = 0; i < 100; ++i) {
    const auto c = w.sample(rng);
    EXPECT_EQ(c.add(w.draw_point(rng)).count(), c.count() + 1);
  }
}

TEST(Configuration, AddRejectsWrongDimension) {
  EXPECT_THROW(Configuration(2).add(Point{1.0}), pm::dimension_mismatch);
}

TEST(Configuration, RemoveSingleton) {
  const Point x{0.3, 0.4};
  const auto [p, rest] = pm::remove_at(Configuration(2).add(x), 0);
  EXPECT_EQ(p, x);
  EXPECT_TRUE(rest.empty());
}

TEST(Configuration, RemoveFromEmptyThrows) {
  EXPECT_THROW((void)pm::remove_at(Configuration(1), 0), std::out_of_range);
}

TEST(Configuration, AddThenRemoveRestoresMultiset) {
  Rng rng(9);
  const Window w = Window::unit_cube(2, 20.0);
  for (int i = 0; i < 200; ++i) {
    const auto c = w.sample(rng);
    const Point x = w.draw_point(rng);
    const auto plus = c.add(x);
    const auto [p, back] = plus.remove_at(plus.count() - 1);
    EXPECT_EQ(p, x);
    EXPECT_TRUE(back.same_multiset(c));
    if (!c.empty()) {
      // Removing an interior point and adding it back also round-trips.
      const std::size_t j = rng.index(c.count());
      const auto [q, minus] = c.remove_at(j);
      EXPECT_EQ(minus.count(), c.count() - 1);
      EXPECT_TRUE(minus.add(q).same_multiset(c));
    }
  }
}

TEST(Configuration, NestedPerturbationsKeepLogicalOrder) {
  const Configuration base(1, {0.1, 0.2, 0.3, 0.4});
  const auto a = base.remove_at(1).second.add(Point{0.9}).remove_at(0).second;
  ASSERT_EQ(a.count(), 3u);
  EXPECT_EQ(a.point(0), Point{0.3});
  EXPECT_EQ(a.point(1), Point{0.4});
  EXPECT_EQ(a.point(2), Point{0.9});
  EXPECT_TRUE(a.same_multiset(Configuration(1, {0.9, 0.4, 0.3})));
  EXPECT_FALSE(a.same_multiset(Configuration(1, {0.9, 0.4, 0.2})));
}

TEST(Configuration, SameMultisetIgnoresOrder) {
  std::vector<Point> pts{{0.1, 0.2}, {0.5, 0.5}, {0.1, 0.2}, {0.9, 0.0}};
  const auto a = Configuration::from_points(2, pts);
  std::mt19937 eng(1);
  std::shuffle(pts.begin(), pts.end(), eng);
  const auto b = Configuration::from_points(2, pts);
  EXPECT_TRUE(a.same_multiset(b));
}

TEST(IntegrationNodes, SingleNodeCarriesTotalMass) {
  Rng rng(10);
  const auto nodes = pm::integration_nodes(Window::unit_cube(1, 3.0), 1, rng);
  ASSERT_EQ(nodes.size(), 1u);
  EXPECT_DOUBLE_EQ(nodes.weights[0], 3.0);
}

TEST(IntegrationNodes, WeightsSumToTotalMass) {
  Rng rng(11);
  const Window w({0.0, 0.0}, {2.0, 0.5}, 7.0);
  for (std::size_t n : {1u, 2u, 7u, 100u, 4096u}) {
    const auto nodes = pm::integration_nodes(w, n, rng);
    EXPECT_NEAR(nodes.total_weight(), w.total_mass(), 1e-12 * w.total_mass());
    for (const auto& x : nodes.nodes) {
      EXPECT_TRUE(w.contains(x.coords()));
    }
  }
}

TEST(IntegrationNodes, ZeroNodesRejected) {
  Rng rng(12);
  EXPECT_THROW((void)pm::integration_nodes(Window::unit_cube(1, 1.0), 0, rng),
               std::invalid_argument);
}

TEST(AtomicWindow, CountsPerAtomArePoisson) {
  const pm::AtomicWindow w({0.2, 0.3, 0.4});
  EXPECT_DOUBLE_EQ(w.total_mass(), 0.9);
  Rng rng(13);
  const int n = 100000;
  std::vector<double> counts(3, 0.0);
  for (int i = 0; i < n; ++i) {
    w.sample(rng).for_each([&](std::span<const double> x) { counts[w.atom_of(x)] += 1.0; });
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const double lam = w.weights()[i];
    EXPECT_NEAR(counts[i] / n, lam, 3.0 * std::sqrt(lam / n));
  }
  EXPECT_THROW((void)w.atom_of(std::vector<double>{1.5}), pm::domain_error);
  EXPECT_THROW(pm::AtomicWindow({0.1, 0.0}), pm::invalid_window);
}

TEST(AtomicWindow, DrawPointFollowsWeights) {
  const pm::AtomicWindow w({1.0, 3.0});
  Rng rng(14);
  const int n = 100000;
  double ones = 0.0;
  for (int i = 0; i < n; ++i) {
    ones += w.atom_of(w.draw_point(rng).coords()) == 1 ? 1.0 : 0.0;
  }
  EXPECT_NEAR(ones / n, 0.75, 3.0 * std::sqrt(0.75 * 0.25 / n));
}
