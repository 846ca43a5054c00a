#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "sope/dataset.hpp"
#include "sope/env.hpp"
#include "sope/math_util.hpp"
#include "test_util.hpp"

using namespace sope;

namespace {

PricingConfig canonical() {
  PricingConfig cfg;  // defaults are the canonical parameter set
  return cfg;
}

PricingConfig finite3() {
  PricingConfig cfg;
  cfg.context = ContextSpec::finite({{1.0, -1.0}, {0.0, 0.0}, {-1.0, 1.0}},
                                    {0.3, 0.4, 0.3});
  return cfg;
}

// E_X[mu(1|a,X)] by exact enumeration over a finite support.
double enum_mean_outcome(const PricingConfig& cfg, int a) {
  double m = 0.0;
  for (std::size_t j = 0; j < cfg.context.support.size(); ++j)
    m += cfg.context.probs[j] * true_outcome_prob(cfg, cfg.context.support[j], a);
  return m;
}

}  // namespace

TEST_CASE("true_outcome_prob matches hand-evaluated logistic values") {
  PricingConfig cfg = canonical();
  // beta.x = 2 cancels beta0 * p(1) = -2 exactly.
  std::vector<double> x1{-4.0 / 3.0, 4.0 / 3.0};
  CHECK(true_outcome_prob(cfg, x1, 1) == doctest::Approx(0.5).epsilon(1e-14));
  // sigma(-2), frozen from direct evaluation 1/(1+e^2).
  std::vector<double> x0{0.0, 0.0};
  CHECK(true_outcome_prob(cfg, x0, 1) ==
        doctest::Approx(0.11920292202211755).epsilon(1e-12));
  // canonical parameter set
  CHECK(cfg.beta == std::vector<double>{-0.75, 0.75});
  CHECK(cfg.beta0 == -2.0);
  CHECK(cfg.horizon == 10);
  CHECK(cfg.capacity == 4);
}

TEST_CASE("true_outcome_prob mixture arm enters with weight delta") {
  PricingConfig cfg = canonical();
  cfg.delta = 0.2;
  std::vector<double> x{1.0, -1.0};
  // Independent evaluation with raw std::exp.
  double z_log = (-0.75 * 1.0 + 0.75 * -1.0) + (-2.0) * 0.5;  // action 0, price 0.5
  double lo = 1.0 / (1.0 + std::exp(-z_log));
  double bump = 1.0 / (1.0 + std::exp(-(1.0 * 1.0 * 0.5)));
  CHECK(true_outcome_prob(cfg, x, 0) ==
        doctest::Approx(0.8 * lo + 0.2 * bump).epsilon(1e-14));
}

TEST_CASE("dimension mismatch raises invalid-input") {
  PricingConfig cfg = canonical();
  std::vector<double> bad{1.0, 2.0, 3.0};
  CHECK_THROWS_AS((void)true_outcome_prob(cfg, bad, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)behavior_propensity(cfg, bad), std::invalid_argument);
}

TEST_CASE("behavior propensity: sigma(0) and sigma(1.2)") {
  PricingConfig cfg = canonical();
  std::vector<double> x0{0.0, 0.0};
  CHECK(behavior_propensity(cfg, x0) == doctest::Approx(0.5).epsilon(1e-14));
  std::vector<double> x{1.0, -1.0};  // beta.x = -1.5, scale -0.8 -> sigma(1.2)
  CHECK(behavior_propensity(cfg, x) ==
        doctest::Approx(0.7685247834990175).epsilon(1e-12));
}

TEST_CASE("evaluation policy applies the 0.25 multiplier") {
  PricingConfig cfg = canonical();
  std::vector<double> x{1.0, -1.0};  // beta.x = -1.5
  double expect = 1.0 / (1.0 + std::exp(0.25 * 1.5));
  CHECK(eval_policy_prob(cfg, x) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("step transition rule") {
  CHECK(step(3, 1) == 2);
  CHECK(step(0, 1) == 0);
  CHECK(step(1, 0) == 1);
  CHECK_THROWS_AS(step(-1, 0), std::invalid_argument);
}

TEST_CASE("reward truth table") {
  PricingConfig cfg = canonical();
  CHECK(reward(cfg, 0, 1, 1) == 0.0);
  CHECK(reward(cfg, 2, 1, 1) == 1.0);
  CHECK(reward(cfg, 2, 0, 0) == 0.0);
  CHECK(reward(cfg, 2, 0, 1) == 0.5);
}

TEST_CASE("simulate: zero starting stock gives zero rewards, absorbing state") {
  PricingConfig cfg = canonical();
  cfg.capacity = 0;
  Dataset d = simulate(cfg, behavior_policy(cfg), 50, 7);
  for (int row = 0; row < d.rows(); ++row) {
    CHECK(d.s[row] == 0);
    CHECK(d.r[row] == 0.0);
  }
}

TEST_CASE("simulate: same seed is bitwise identical, different seed is not") {
  PricingConfig cfg = canonical();
  Dataset a = simulate(cfg, behavior_policy(cfg), 20, 99);
  Dataset b = simulate(cfg, behavior_policy(cfg), 20, 99);
  CHECK(a.x == b.x);
  CHECK(a.s == b.s);
  CHECK(a.a == b.a);
  CHECK(a.y == b.y);
  CHECK(a.r == b.r);
  Dataset c = simulate(cfg, behavior_policy(cfg), 20, 100);
  CHECK(a.x != c.x);
}

TEST_CASE("simulate: trajectory prefixes agree across different n (substreams)") {
  PricingConfig cfg = canonical();
  Dataset small = simulate(cfg, behavior_policy(cfg), 5, 42);
  Dataset big = simulate(cfg, behavior_policy(cfg), 12, 42);
  for (int i = 0; i < small.n; ++i)
    for (int t = 0; t < small.T; ++t) {
      CHECK(small.y[small.idx(i, t)] == big.y[big.idx(i, t)]);
      CHECK(small.x[small.idx(i, t) * 2] == big.x[big.idx(i, t) * 2]);
    }
}

TEST_CASE("simulate: per-row consistency with step and reward") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    PricingConfig cfg = seed == 2 ? finite3() : canonical();
    cfg.delta = seed == 3 ? 0.35 : 0.0;
    Dataset d = simulate(cfg, behavior_policy(cfg), 40, seed);
    for (int i = 0; i < d.n; ++i) {
      CHECK(d.s[d.idx(i, 0)] == cfg.capacity);
      for (int t = 0; t < d.T; ++t) {
        int row = d.idx(i, t);
        CHECK(d.r[row] == reward(cfg, d.s[row], d.a[row], d.y[row]));
        if (t + 1 < d.T) CHECK(d.s[d.idx(i, t + 1)] == step(d.s[row], d.y[row]));
      }
    }
  }
}

TEST_CASE("simulate: outcome frequency matches enumerated E[mu] under constant action") {
  PricingConfig cfg = finite3();
  for (int a : {0, 1}) {
    Dataset d = simulate(cfg, ConstantAction{a}, 3000, 11 + a);
    MeanVar acc;
    for (int row = 0; row < d.rows(); ++row) acc.add(d.y[row]);
    double truth = enum_mean_outcome(cfg, a);
    CHECK(std::abs(acc.mean - truth) < 3.0 * acc.stderr_mean());
  }
}

TEST_CASE("exogeneity: context distribution is invariant to the policy") {
  PricingConfig cfg = canonical();
  auto bins_of = [&](const Dataset& d) {
    const auto& z = testutil::normal_deciles();
    std::vector<long long> counts(z.size() + 1, 0);
    for (int row = 0; row < d.rows(); ++row) {
      double v = d.x[static_cast<std::size_t>(row) * d.dim];  // first coordinate
      std::size_t b = 0;
      while (b < z.size() && v > z[b]) ++b;
      ++counts[b];
    }
    return counts;
  };
  Dataset d1 = simulate(cfg, behavior_policy(cfg), 5000, 1234);
  Dataset d2 = simulate(cfg, ConstantAction{1}, 5000, 4321);
  auto c1 = bins_of(d1), c2 = bins_of(d2);
  int dof = 0;
  double stat = testutil::homogeneity_chi2(c1, c2, &dof);
  CHECK(stat < testutil::chi2_crit999(dof));
}

TEST_CASE("state non-confounding: y independent of s given (x, a)") {
  PricingConfig cfg = finite3();
  cfg.horizon = 6;
  cfg.capacity = 3;
  Dataset d = simulate(cfg, behavior_policy(cfg), 4000, 2024);
  double stat_total = 0.0;
  int dof_total = 0;
  for (std::size_t j = 0; j < cfg.context.support.size(); ++j) {
    for (int a : {0, 1}) {
      // contingency: rows = inventory level 0..s0, cols = y in {0,1}
      std::vector<std::vector<long long>> table(cfg.capacity + 1,
                                                std::vector<long long>(2, 0));
      for (int row = 0; row < d.rows(); ++row) {
        if (d.a[row] != a) continue;
        if (d.xrow(row)[0] != cfg.context.support[j][0]) continue;
        ++table[d.s[row]][d.y[row]];
      }
      int dof = 0;
      stat_total += testutil::independence_chi2(table, &dof);
      dof_total += dof;
    }
  }
  REQUIRE(dof_total >= 1);
  REQUIRE(dof_total <= 60);
  CHECK(stat_total < testutil::chi2_crit999(dof_total));
}

TEST_CASE("monte_carlo_value: degenerate and one-step cases") {
  PricingConfig cfg = canonical();
  cfg.capacity = 0;
  auto v0 = monte_carlo_value(cfg, behavior_policy(cfg), 500, 5);
  CHECK(v0.mean == 0.0);
  CHECK(v0.stderr_mean == 0.0);

  // One step, one unit, constant action 1, mu(1|1,x*) = sigma(0) = 0.5.
  PricingConfig one;
  one.horizon = 1;
  one.capacity = 1;
  one.beta = {1.0, 0.0};
  one.beta0 = 0.0;
  one.context = ContextSpec::finite({{0.0, 0.0}}, {1.0});
  auto v1 = monte_carlo_value(one, ConstantAction{1}, 20000, 17);
  CHECK(std::abs(v1.mean - 0.5) < 3.0 * v1.stderr_mean);
}

TEST_CASE("monte_carlo_value deterministic given seed") {
  PricingConfig cfg = canonical();
  auto a = monte_carlo_value(cfg, evaluation_policy(cfg), 2000, 88);
  auto b = monte_carlo_value(cfg, evaluation_policy(cfg), 2000, 88);
  CHECK(a.mean == b.mean);
  CHECK(a.stderr_mean == b.stderr_mean);
}

TEST_CASE("trajectory CSV round trip") {
  PricingConfig cfg = canonical();
  Dataset d = simulate(cfg, behavior_policy(cfg), 7, 3);
  auto path = std::filesystem::temp_directory_path() / "sope_roundtrip.csv";
  write_csv(d, path.string());
  Dataset back = read_csv(path.string());
  CHECK(back.n == d.n);
  CHECK(back.T == d.T);
  CHECK(back.dim == d.dim);
  CHECK(back.x == d.x);
  CHECK(back.s == d.s);
  CHECK(back.a == d.a);
  CHECK(back.y == d.y);
  CHECK(back.r == d.r);
  std::filesystem::remove(path);
}
