#pragma once

#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "sope/config.hpp"

namespace sope {

// pi(1|x) = sigmoid(scale * coef.x). Covers both the behavior policy
// (scale = behavior_scale) and the evaluation policy (scale = eval_scale).
struct StochasticLogistic {
  std::vector<double> coef;
  double scale = 1.0;
};

struct ConstantAction {
  int action = 0;
};

// pi(1|s,x) = 1[ratio(x) > theta[t][s]]. `ratio` is the estimated (or true)
// ratio mu(1|1,x)/mu(1|0,x); theta is indexed t = 0..T-1, s = 0..s0 with the
// s = 0 column unused (the state is absorbing and rewardless).
struct ThresholdOnRatio {
  std::function<double(std::span<const double>)> ratio;
  std::vector<std::vector<double>> theta;
};

using PolicySpec = std::variant<StochasticLogistic, ConstantAction, ThresholdOnRatio>;

// Probability of playing action 1 at (t, s, x). Always in [0,1]; the implied
// distribution over {0,1} sums to one by construction.
double action1_prob(const PolicySpec& policy, int t, int s, std::span<const double> x);

PolicySpec behavior_policy(const PricingConfig& cfg);
PolicySpec evaluation_policy(const PricingConfig& cfg);

// The policy restricted to one (t, s) cell: a plain map x -> P(a=1|x). This is
// the "single-step contextual policy" that marginal transitions are defined
// over; pooled estimators depend on the policy only through this function.
using SingleStepPolicy = std::function<double(std::span<const double>)>;
SingleStepPolicy policy_slice(const PolicySpec& policy, int t, int s);

}  // namespace sope
