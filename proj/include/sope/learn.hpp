#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sope/config.hpp"
#include "sope/dataset.hpp"
#include "sope/env.hpp"
#include "sope/marginal.hpp"
#include "sope/nuisance.hpp"
#include "sope/policy.hpp"

#include <json.hpp>

namespace sope {

// Outcome-probability ratio mu(1|1,x)/mu(1|0,x) that threshold policies cut
// on. Deterministic function of the context only.
using RatioFn = std::function<double(std::span<const double>)>;

// Floor applied to the ratio denominator.
inline constexpr double kRatioFloor = 1e-6;

// mu1 / max(mu0, kRatioFloor); increments *floor_events when the floor binds.
double floored_ratio(double mu1, double mu0, long long* floor_events = nullptr);

// Deployment-time ratio from a fitted nuisance set (ensemble mean outcome
// head). floor_events, when given, must outlive the returned function.
RatioFn nuisance_ratio(const NuisanceSet& nuisances, long long* floor_events = nullptr);

// Candidate thresholds for the policy search: strictly increasing, first
// entry -inf and last entry +inf, interior points deduplicated.
struct ThresholdGrid {
  std::vector<double> thresholds;

  std::size_t size() const { return thresholds.size(); }
  double operator[](std::size_t g) const { return thresholds[g]; }

  // Sorts, deduplicates, drops non-finite input, and adds the sentinels.
  static ThresholdGrid from_points(std::vector<double> points);
};

// Grid of num_quantiles empirical quantiles (at probabilities k/(G+1),
// k = 1..G) of the ratio evaluated on every logged context, plus sentinels.
// Requires num_quantiles >= 2.
ThresholdGrid build_grid(const Dataset& data, const RatioFn& ratio, int num_quantiles = 101);

// Backwards-recursive threshold policy fitted from logged data. theta[t][s]
// is the cut applied at (t, s): play a=1 iff ratio(x) > theta[t][s].
// theta[t][0] is pinned to +inf (no stock, action is irrelevant).
struct LearnedPolicy {
  std::vector<std::vector<double>> theta;  // [t][s], t < T, s <= capacity
  Mode mode = Mode::kDR;
  std::string ratio_source;  // which outcome model defines the ratio
  ValueTable values;         // fitted V-hat from the learning recursion
  RatioFn ratio;             // the function theta is applied to
  long long ratio_floor_events = 0;  // denominator-floor hits while fitting

  ThresholdOnRatio as_policy() const { return ThresholdOnRatio{ratio, theta}; }
  nlohmann::json to_json() const;  // theta table + metadata (no ratio closure)
};

// Fits one threshold per (t, s) by backwards recursion: for each candidate
// theta the pooled transition under pi_theta is precomputed once (it does not
// depend on (t, s)), then each stage picks
//   argmax_theta  max(0, reward_rate) + p0 * V[t+1][s] + p1 * V[t+1][s-1]
// with ties broken toward the smallest theta. V[t][0] = 0 throughout.
LearnedPolicy learn_thresholds(const Dataset& data, const ScoreTable& scores,
                               const RatioFn& ratio, const ThresholdGrid& grid,
                               const PricingConfig& cfg, std::string ratio_source = "custom");

// Convenience wrapper: builds scores from the fitted nuisances and takes the
// ratio from the ensemble outcome head. The nuisance set must outlive the
// returned policy (its ratio closure refers back to the set).
LearnedPolicy learn_thresholds(const Dataset& data, const NuisanceSet& nuisances, Mode mode,
                               const ThresholdGrid& grid, const PricingConfig& cfg);

// Fresh-simulation estimate of the learned policy's value from n_rollouts
// independent trajectories (mean and standard error of V(s0)).
ValueEstimate out_of_sample_value(const LearnedPolicy& policy, const PricingConfig& cfg,
                                  long long n_rollouts, std::uint64_t seed);

}  // namespace sope
