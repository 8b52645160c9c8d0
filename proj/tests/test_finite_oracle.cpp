#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "poisson_malliavin/finite_oracle.hpp"
#include "poisson_malliavin/malliavin.hpp"

namespace po = pm::oracle;
using po::Counts;

namespace {

const po::AtomSpace default_space({0.2, 0.3, 0.4});

po::BoundedIntegrand constant_one() {
  return {[](const Counts&, std::size_t) { return 1.0; }, [](std::size_t) { return 1.0; }};
}

double poisson_tail_oracle(double mean, std::size_t n_max) {
  double s = 0.0;
  for (std::size_t n = n_max + 1; n < n_max + 200; ++n) {
    s += oracles::poisson_pmf(mean, n);
  }
  return s;
}

} // namespace

TEST(Enumerate, SingleAtomZeroCap) {
  const auto e = po::enumerate(po::AtomSpace({0.3}), 0);
  ASSERT_EQ(e.configs.size(), 1u);
  EXPECT_EQ(e.configs[0].counts, Counts{0});
  EXPECT_NEAR(e.configs[0].prob, std::exp(-0.3), 1e-16);
  EXPECT_NEAR(e.tail_mass, 1.0 - std::exp(-0.3), 1e-15);
}

TEST(Enumerate, TwoAtomsCapOne) {
  const auto e = po::enumerate(po::AtomSpace({0.5, 0.7}), 1);
  ASSERT_EQ(e.configs.size(), 3u);
  std::vector<Counts> got;
  for (const auto& c : e.configs) {
    got.push_back(c.counts);
  }
  EXPECT_NE(std::find(got.begin(), got.end(), Counts{0, 0}), got.end());
  EXPECT_NE(std::find(got.begin(), got.end(), Counts{1, 0}), got.end());
  EXPECT_NE(std::find(got.begin(), got.end(), Counts{0, 1}), got.end());
}

TEST(Enumerate, DefaultSpaceTailIsNegligible) {
  const auto e = po::enumerate(default_space, 25);
  EXPECT_LT(e.tail_mass, 1e-20);
  EXPECT_NEAR(e.tail_mass, poisson_tail_oracle(0.9, 25), 1e-3 * poisson_tail_oracle(0.9, 25));
}

TEST(Enumerate, ProbabilitiesSumToOneMinusTail) {
  for (std::size_t n_max : {0u, 1u, 3u, 8u, 25u}) {
    const auto e = po::enumerate(default_space, n_max);
    double s = 0.0;
    for (const auto& c : e.configs) {
      s += c.prob;
    }
    EXPECT_NEAR(s, 1.0 - e.tail_mass, 1e-14) << n_max;
  }
}

TEST(Enumerate, InfeasibleSpacesRejected) {
  EXPECT_THROW(po::AtomSpace(std::vector<double>(7, 0.1)), pm::feasibility_error);
  EXPECT_THROW(po::enumerate(po::AtomSpace(std::vector<double>(6, 0.1)), 200),
               pm::feasibility_error);
}

TEST(Expect, ConstantOne) {
  const auto e = po::enumerate(default_space, 10);
  const auto r = po::expect(e, [](const Counts&) { return 1.0; });
  EXPECT_NEAR(r.value, 1.0 - e.tail_mass, 1e-15);
}

TEST(Expect, PoissonMoments) {
  const auto e = po::enumerate(po::AtomSpace({0.3}), 25);
  const po::Envelope linear = [](std::size_t n) { return double(n); };
  const po::Envelope square = [](std::size_t n) { return double(n) * double(n); };
  const auto m1 = po::expect(e, [](const Counts& n) { return double(n[0]); }, linear);
  const auto m2 =
      po::expect(e, [](const Counts& n) { return double(n[0]) * double(n[0]); }, square);
  EXPECT_LE(std::abs(m1.value - 0.3), m1.tail_bound + 1e-15);
  EXPECT_LE(std::abs(m2.value - 0.39), m2.tail_bound + 1e-15);
}

TEST(KsExact, ConstantOneIsCentredCount) {
  const Counts mu{2, 0, 3};
  EXPECT_NEAR(po::ks_exact(constant_one().fn, default_space, mu), 5.0 - 0.9, 1e-15);
}

TEST(KsExact, EmptyConfiguration) {
  const po::AtomIntegrand g = [](const Counts&, std::size_t i) { return 1.0 + double(i); };
  EXPECT_NEAR(po::ks_exact(g, default_space, Counts{0, 0, 0}), -(0.2 + 0.6 + 1.2), 1e-15);
}

TEST(KsExact, LinearInIntegrand) {
  pm::Rng rng(1);
  const auto e = po::enumerate(default_space, 6);
  for (int k = 0; k < 10; ++k) {
    const auto a = po::random_integrand(3, rng);
    const auto b = po::random_integrand(3, rng);
    const po::AtomIntegrand ab = [&](const Counts& n, std::size_t i) {
      return 2.0 * a.fn(n, i) - b.fn(n, i);
    };
    for (const auto& c : e.configs) {
      const double lhs = po::ks_exact(ab, default_space, c.counts);
      const double rhs = 2.0 * po::ks_exact(a.fn, default_space, c.counts) -
                         po::ks_exact(b.fn, default_space, c.counts);
      EXPECT_NEAR(lhs, rhs, 1e-12);
    }
  }
}

TEST(KsExact, AgreesWithNodeIntegralOnAtomNodes) {
  pm::Rng rng(2);
  const auto window = default_space.window();
  const auto nodes = pm::atom_nodes(window);
  const auto e = po::enumerate(default_space, 5);
  for (int k = 0; k < 5; ++k) {
    const auto g = po::random_integrand(3, rng);
    const auto integrand = po::to_integrand(g.fn, default_space);
    for (const auto& c : e.configs) {
      const double a = po::ks_exact(g.fn, default_space, c.counts);
      const double b = pm::ks_integral(integrand, po::to_configuration(c.counts), nodes);
      EXPECT_NEAR(a, b, 1e-13);
    }
  }
}

TEST(Mecke, ConstantOneSingleAtom) {
  const auto r = po::verify_mecke(po::AtomSpace({0.3}), 25, constant_one());
  EXPECT_LE(r.residual, 1e-10);
  EXPECT_TRUE(r.passed());
}

TEST(Mecke, RandomIntegrands) {
  pm::Rng rng(3);
  for (int k = 0; k < 10; ++k) {
    const auto r = po::verify_mecke(default_space, 25, po::random_integrand(3, rng));
    EXPECT_LE(r.residual, 1e-10);
  }
}

TEST(Mecke, IntegrandDependingOnOtherAtomsOnly) {
  const po::BoundedIntegrand g{
      [](const Counts& n, std::size_t i) {
        double v = 0.0;
        for (std::size_t j = 0; j < n.size(); ++j) {
          if (j != i) {
            v += std::sin(double(n[j]) + double(i));
          }
        }
        return v;
      },
      [](std::size_t) { return 2.0; }};
  const auto r = po::verify_mecke(default_space, 25, g);
  EXPECT_TRUE(r.passed());
  EXPECT_LE(r.residual, 1e-10);
}

TEST(Mecke, TruncationResidualStaysBelowReportedTailBound) {
  // At N_max = 2 the residual is visible; the reported bound must cover it.
  const po::BoundedIntegrand g{[](const Counts& n, std::size_t) { return 1.0 / (1.0 + n[0]); },
                               [](std::size_t) { return 1.0; }};
  const auto r = po::verify_mecke(po::AtomSpace({1.0, 2.0}), 2, g);
  EXPECT_GT(r.residual, 1e-3);
  EXPECT_LE(r.residual, r.tail_bound);
}

TEST(Variance, ConstantOneGivesPoissonVariance) {
  const auto r = po::verify_variance(default_space, 25, constant_one(), constant_one());
  EXPECT_LE(r.residual, 1e-10);
}

TEST(Variance, AtomicParetoHasNoCrossTerm) {
  // Atoms totally ordered: G_i = 1 iff no point sits at an atom j < i.
  const po::BoundedIntegrand g{[](const Counts& n, std::size_t i) {
                                 for (std::size_t j = 0; j < i; ++j) {
                                   if (n[j] > 0) {
                                     return 0.0;
                                   }
                                 }
                                 return 1.0;
                               },
                               [](std::size_t) { return 1.0; }};
  const auto e = po::enumerate(default_space, 25);
  const auto cross = po::expect(e, [&](const Counts& mu) {
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        s += (g.fn(po::plus_atom(mu, i), j) - g.fn(mu, j)) *
             (g.fn(po::plus_atom(mu, j), i) - g.fn(mu, i));
      }
    }
    return s;
  });
  EXPECT_EQ(cross.value, 0.0);
  const auto r = po::verify_variance(default_space, 25, g, g);
  EXPECT_TRUE(r.passed());
  EXPECT_LE(r.residual, 1e-10);
}

TEST(Variance, RandomPairs) {
  pm::Rng rng(4);
  for (int k = 0; k < 10; ++k) {
    const auto g = po::random_integrand(3, rng);
    const auto g2 = po::random_integrand(3, rng);
    EXPECT_LE(po::verify_variance(default_space, 25, g, g2).residual, 1e-10);
    EXPECT_LE(po::verify_variance(default_space, 25, g, g).residual, 1e-10);
  }
}

TEST(Ibp, ConstantFunctionalReducesToMecke) {
  pm::Rng rng(5);
  const auto g = po::random_integrand(3, rng);
  const po::BoundedFunctional one{[](const Counts&) { return 1.0; }, [](std::size_t) { return 1.0; }};
  const auto a = po::verify_ibp(default_space, 25, g, one);
  const auto b = po::verify_mecke(default_space, 25, g);
  EXPECT_NEAR(a.residual, b.residual, 1e-15);
}

TEST(Ibp, CountAgainstConstantIntegrand) {
  const po::BoundedFunctional count{[](const Counts& n) { return double(po::total_count(n)); },
                                    [](std::size_t n) { return double(n); }};
  const auto r = po::verify_ibp(default_space, 25, constant_one(), count);
  EXPECT_LE(r.residual, 1e-10);
}

TEST(Ibp, RandomPairs) {
  pm::Rng rng(6);
  for (int k = 0; k < 10; ++k) {
    const auto g = po::random_integrand(3, rng);
    const auto h = po::random_functional(3, rng);
    EXPECT_LE(po::verify_ibp(default_space, 25, g, h).residual, 1e-10);
  }
}

TEST(IteratedBound, ZeroKernel) {
  const po::BoundedKernel zero{[](const Counts&, std::size_t, std::size_t) { return 0.0; },
                               [](std::size_t) { return 0.0; }};
  const auto b = po::verify_iterated_bound(default_space, 25, zero);
  EXPECT_EQ(b.lhs, 0.0);
  EXPECT_EQ(b.rhs, 0.0);
}

TEST(IteratedBound, DeterministicOneKernel) {
  const po::BoundedKernel one{[](const Counts&, std::size_t, std::size_t) { return 1.0; },
                              [](std::size_t) { return 1.0; }};
  const auto b = po::verify_iterated_bound(default_space, 25, one);
  const double lam = 0.9;
  EXPECT_NEAR(b.rhs, 3.0 * lam * lam, 1e-12);
  // delta(delta(1)) = N^2 - N - 2 lam N + lam^2 with N ~ Poisson(lam), so
  // its second moment is 2 lam^2.
  EXPECT_NEAR(b.lhs, 2.0 * lam * lam, 1e-12);
  EXPECT_TRUE(b.holds());
}

TEST(IteratedBound, RandomKernels) {
  pm::Rng rng(7);
  for (int k = 0; k < 20; ++k) {
    const auto b = po::verify_iterated_bound(default_space, 25, po::random_kernel(3, rng));
    EXPECT_LE(b.lhs, b.rhs);
  }
}

TEST(Commutation, ExactOnEveryEnumeratedConfiguration) {
  pm::Rng rng(8);
  const auto e = po::enumerate(default_space, 12);
  for (int k = 0; k < 5; ++k) {
    const auto g = po::random_integrand(3, rng);
    for (const auto& c : e.configs) {
      for (std::size_t x = 0; x < 3; ++x) {
        const double scale = 1.0 + std::abs(po::ks_exact(g.fn, default_space, c.counts));
        EXPECT_LE(std::abs(po::commutation_residual_exact(g.fn, default_space, c.counts, x)),
                  1e-12 * scale);
      }
    }
  }
}
