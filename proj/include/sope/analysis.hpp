#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sope/config.hpp"
#include "sope/learn.hpp"
#include "sope/marginal.hpp"

namespace sope {

// Outcome-model evaluation: returns mu-hat(1 | a, x) for a fresh context.
using OutcomeFn = std::function<double(std::span<const double> x, int a)>;

// Pointwise model error and true uplift around a fitted (or constructed)
// outcome model: delta(a,x) = mu-hat(1|a,x) - mu(1|a,x) and
// tau(x) = mu(1|1,x) - mu(1|0,x), both in [-1, 1].
struct BiasField {
  PricingConfig cfg;  // ground truth
  OutcomeFn mu_hat;

  double delta(int a, std::span<const double> x) const;
  double tau(std::span<const double> x) const;
};

// mu-hat(1|a,x) = clamp(mu(1|a,x) + shift[a], lo, hi). shift1 > 0 > shift0
// is the canonical "historical price increases targeted toward likely
// buyers" misspecification.
OutcomeFn shifted_outcome(const PricingConfig& cfg, double shift0, double shift1,
                          double lo = 1e-3, double hi = 1.0 - 1e-3);

// theta* = (r0 + dv) / (r1 + dv). Throws when the denominator is zero.
double optimal_threshold(double r0, double r1, double dv);

// theta-hat* = theta* * (1 + delta0 / eta0) - delta1, the cut on the true
// ratio equivalent to cutting the biased ratio at theta*. Throws for
// eta0 <= 0.
double biased_threshold(double theta_star, double delta0, double delta1, double eta0);

// Optimal-threshold table from the oracle DP: theta*[t][s] for t < T,
// s = 0..capacity (s = 0 pinned to +inf, degenerate cells -inf).
// Nondecreasing in s at fixed t: the marginal value of a unit shrinks with
// inventory (concavity), raising the bar for the high price.
std::vector<std::vector<double>> oracle_thresholds(const PricingConfig& cfg,
                                                   const ContextOracle& oracle);

// Optimal policy under an arbitrary outcome model evaluated on the oracle's
// context pool: the "confounded-optimal" DP when mu_hat is biased. With
// mu_hat equal to the truth this reproduces oracle_optimal.
OptimalPolicy model_optimal(const ContextOracle& oracle, const OutcomeFn& mu_hat,
                            const PricingConfig& cfg);

// E[ -tau(X) * 1[lo <= mu(1|1,X)/mu(1|0,X) <= hi] ] with (lo, hi) the sorted
// pair (theta_hat, theta_star); nonnegativity is the sufficient condition for
// single-step bias to persist through the value recursion. Exact enumeration
// for finite supports; otherwise Monte Carlo over `samples` context draws.
double persistence_condition(const PricingConfig& cfg, double theta_hat, double theta_star,
                             long long samples = 200000, std::uint64_t seed = 0xb1a5ULL);

// Equal-width binning of delta(action, X) over sampled contexts.
struct Histogram {
  std::vector<double> edges;      // bins + 1 ascending edges
  std::vector<long long> counts;  // per-bin counts
  long long total = 0;
};

Histogram delta_histogram(const BiasField& field, int action, int bins, long long samples,
                          std::uint64_t seed = 0xb1a5ULL);

// Threshold comparison tables on t = 0..T-1, s = 1..s0 (column j holds
// inventory level j+1). gap = theta_star - theta_hat, with exactly equal
// cells (including matching infinities) recorded as zero.
struct ThresholdReport {
  std::vector<std::vector<double>> theta_star;  // [t][s-1]
  std::vector<std::vector<double>> theta_hat;   // [t][s-1]
  std::vector<std::vector<double>> gap;         // [t][s-1]
  double persistence_condition_value = 0.0;
  double share_hat_below_star_s_gt2 = 0.0;  // fraction of s > 2 cells with theta_hat < theta_star
  Histogram delta_hist;                     // binned delta(1, .)
};

// Builds the gap tables from full-width threshold tables ([t][s] with the
// s = 0 sentinel column, as produced by the learner and the oracle DP).
ThresholdReport heatmap(const std::vector<std::vector<double>>& theta_hat,
                        const std::vector<std::vector<double>>& theta_star);
ThresholdReport heatmap(const LearnedPolicy& learned,
                        const std::vector<std::vector<double>>& theta_star);

// True at t iff the forward differences V[t][s] - V[t][s-1] are nonincreasing
// in s with tolerance 1e-9 (discrete concavity). Covers every row t = 0..T.
// Requires capacity >= 2.
std::vector<bool> concavity_check(const ValueTable& values);

}  // namespace sope
