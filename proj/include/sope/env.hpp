#pragma once

#include <cstdint>
#include <span>

#include "sope/config.hpp"
#include "sope/dataset.hpp"
#include "sope/policy.hpp"
#include "sope/rng.hpp"

namespace sope {

// mu(1|a,x): purchase probability under action a, context x.
double true_outcome_prob(const PricingConfig& cfg, std::span<const double> x, int a);

// e(1|x): behavior-policy probability of the high-price action.
double behavior_propensity(const PricingConfig& cfg, std::span<const double> x);

// pi_e(1|x): evaluation-policy probability of the high-price action.
double eval_policy_prob(const PricingConfig& cfg, std::span<const double> x);

// Inventory transition: sell one unit on y=1 while stock remains; s=0 absorbs.
int step(int s, int y);

// Revenue: p(a) when a sale happens with stock on hand, else 0.
double reward(const PricingConfig& cfg, int s, int a, int y);

// Draws one context into out[0..dim). Gaussian or finite per cfg.context.
void draw_context(const PricingConfig& cfg, Rng& rng, double* out);

// n trajectories under `policy`. Context, action, and outcome draws for
// trajectory i come from an independent substream subseed(seed, {i}), so
// results do not depend on work partitioning and prefixes agree across n.
Dataset simulate(const PricingConfig& cfg, const PolicySpec& policy, int n,
                 std::uint64_t seed);

struct ValueEstimate {
  double mean = 0.0;
  double stderr_mean = 0.0;
  long long n = 0;
};

// Monte Carlo estimate of V_0(s0) = E[sum_t r_t] under `policy`.
ValueEstimate monte_carlo_value(const PricingConfig& cfg, const PolicySpec& policy,
                                long long n_rollouts, std::uint64_t seed);

}  // namespace sope
