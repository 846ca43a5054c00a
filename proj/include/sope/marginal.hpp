#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sope/config.hpp"
#include "sope/dataset.hpp"
#include "sope/nuisance.hpp"
#include "sope/policy.hpp"

namespace sope {

// Estimator family for the marginal transition P(Y=y|pi).
enum class Mode { kDM, kIPW, kDR, kDRNonpara, kOracle };

std::string mode_name(Mode mode);
Mode mode_from_name(const std::string& name);  // throws std::invalid_argument

// Per-observation scores Gamma[i][t][a][y]. In DR mode
//   Gamma_t^i(y|a) = (1[Y=y] - mu(y|A,X)) / e(A|X) * 1[A=a] + mu(y|a,X),
// IPW keeps only the indicator term (mu = 0), DM keeps only the model term.
// Sum over y is exactly 1 for DR/DM scores on every (i,t,a); IPW scores sum
// to 1[A=a]/e(A|X), which is 1 only in expectation.
struct ScoreTable {
  int n = 0;
  int T = 0;
  Mode mode = Mode::kDR;
  std::vector<double> gamma;       // ((i*T + t)*2 + a)*2 + y
  std::vector<std::uint8_t> rows;  // 1 = row (i,t) participates in pooling
  double clip_fraction = 0.0;      // share of pooled rows whose propensity hit the clip

  double at(int i, int t, int a, int y) const {
    return gamma[(static_cast<std::size_t>(i) * T + t) * 4 + a * 2 + y];
  }
  bool included(int i, int t) const { return rows[static_cast<std::size_t>(i) * T + t] != 0; }
  long long included_rows() const;
};

// Builds scores from cross-fitted nuisances; propensity clipping is counted
// here (the clip binds when the raw prediction leaves [eps, 1-eps]).
// `drop_post_stockout` excludes s=0 rows from pooling.
ScoreTable build_scores(const Dataset& data, const NuisanceSet& nuisances, Mode mode,
                        bool drop_post_stockout = false);

// Same, from an arbitrary nuisance interface (oracle or deliberately corrupted
// nuisances in tests). The predictor's propensity is already clipped by
// contract, so clip_fraction is reported as 0.
ScoreTable build_scores(const Dataset& data, const NuisancePredictor& nuisances, Mode mode,
                        bool drop_post_stockout = false);

// Pooled single-step transition estimate for one candidate policy. The raw
// probs may fall outside [0,1] (DR scores are signed); recursion_probs()
// clips to [0,1] and renormalizes, and `clipped` records whether that bound.
// action_outcome[a][y] is the pooled mean of pi(a|X) * Gamma(y|a), so
// probs[y] = sum_a action_outcome[a][y] and the action-resolved expected
// one-step revenue is sum_a prices[a] * action_outcome[a][1].
struct MarginalTransition {
  std::array<double, 2> probs{0.0, 0.0};
  std::array<std::array<double, 2>, 2> action_outcome{{{0.0, 0.0}, {0.0, 0.0}}};
  Mode mode = Mode::kDR;
  bool clipped = false;
  double mc_stderr = 0.0;  // Monte Carlo error on probs[1] (Gaussian oracle only)

  std::array<double, 2> recursion_probs() const;
  double reward_rate(const std::array<double, 2>& prices) const {
    return prices[0] * action_outcome[0][1] + prices[1] * action_outcome[1][1];
  }
};

// P-hat(Y=y|pi) = (NT)^-1 sum_i sum_t sum_a pi(a|X_t^i) Gamma_t^i(y|a),
// pooled over the rows the score table includes and self-normalized by the
// pooled mass so that probs sum to one in every mode (a no-op up to the last
// bit for DR/DM, the standard self-normalized weighting for IPW). `action1`
// returns pi(1|x).
MarginalTransition estimate_transition(const SingleStepPolicy& action1,
                                       const ScoreTable& scores, const Dataset& data);

// Same pooling over a precomputed pi(1|x) value per row (row = i*T + t).
// Lets callers that sweep many candidate policies over fixed contexts (e.g.
// threshold grids) avoid re-evaluating the policy; excluded rows are ignored.
MarginalTransition estimate_transition_rows(std::span<const double> action1_by_row,
                                            const ScoreTable& scores, const Dataset& data);

// Exact (finite support) or fixed-pool Monte Carlo (Gaussian, default 10^6
// draws) context expectation used by every oracle computation. The pool is
// drawn once at construction so repeated queries are deterministic and
// directly comparable.
class ContextOracle {
 public:
  explicit ContextOracle(const PricingConfig& cfg, long long gaussian_draws = 1000000,
                         std::uint64_t seed = 0x09ac1eULL);

  MarginalTransition transition(const SingleStepPolicy& action1) const;

  bool exact() const { return exact_; }
  long long size() const { return static_cast<long long>(w_.size()); }
  std::span<const double> context(long long j) const {
    return {xs_.data() + j * dim_, static_cast<std::size_t>(dim_)};
  }
  double weight(long long j) const { return w_[j]; }
  double mu(long long j, int a) const { return a == 1 ? mu1_[j] : mu0_[j]; }
  const PricingConfig& config() const { return cfg_; }

 private:
  PricingConfig cfg_;
  bool exact_ = false;
  int dim_ = 0;
  std::vector<double> xs_;  // pooled contexts, row-major
  std::vector<double> w_;   // weights, sum to 1
  std::vector<double> mu0_, mu1_;
};

// One-off oracle transition (constructs a ContextOracle internally).
MarginalTransition oracle_transition(const SingleStepPolicy& action1, const PricingConfig& cfg,
                                     long long gaussian_draws = 1000000,
                                     std::uint64_t seed = 0x09ac1eULL);

// V[t][s] for t = 0..T, s = 0..capacity. V[T][.] = 0 and V[t][0] = 0 always.
// The evaluated policy's Q coincides with V by construction (the recursion
// stores exactly the one-step backup at the policy's own slice).
struct ValueTable {
  int T = 0;
  int capacity = 0;
  std::vector<double> v;  // (T+1) x (capacity+1)

  double at(int t, int s) const { return v[static_cast<std::size_t>(t) * (capacity + 1) + s]; }
  double& at(int t, int s) { return v[static_cast<std::size_t>(t) * (capacity + 1) + s]; }
};

// Supplies the pooled transition for the policy slice at (t, s).
using TransitionProvider =
    std::function<MarginalTransition(int t, int s, const SingleStepPolicy& slice)>;

// Backwards recursion (stockout state absorbing at value 0):
//   V[t][s] = max(0, reward_rate) + p0 * V[t+1][s] + p1 * V[t+1][s-1]
// with (p0, p1) = recursion_probs(). The reward-rate floor keeps estimated
// value tables monotone in s even when signed DR scores turn a revenue
// estimate slightly negative.
ValueTable evaluate_policy(const TransitionProvider& provider, const PolicySpec& policy,
                           const PricingConfig& cfg);

// Providers over estimated scores and over the exact/pooled oracle.
TransitionProvider score_provider(const ScoreTable& scores, const Dataset& data);
TransitionProvider oracle_provider(const ContextOracle& oracle);

// Exact DP of a policy in the marginal MDP (exact for finite supports).
ValueTable oracle_value(const PolicySpec& policy, const PricingConfig& cfg,
                        const ContextOracle& oracle);

// Optimal thresholds and value, computed backwards: at each (t, s) the optimal
// single-step policy plays the high price iff mu(1|1,x)/mu(1|0,x) exceeds
//   theta*_t(s) = (prices[0] + dV) / (prices[1] + dV),
// dV = V[t+1][s-1] - V[t+1][s]. The value update maximizes pointwise over the
// pool, so it does not depend on the threshold algebra (which degenerates when
// prices[1] + dV <= 0; theta is recorded as -infinity there).
struct OptimalPolicy {
  ValueTable value;
  std::vector<std::vector<double>> theta;  // [t][s], s = 0 entry unused (+inf)
};

OptimalPolicy oracle_optimal(const PricingConfig& cfg, const ContextOracle& oracle);

// The true purchase-probability ratio mu(1|1,x)/mu(1|0,x), the quantity the
// optimal policy thresholds on.
double true_ratio(const PricingConfig& cfg, std::span<const double> x);

}  // namespace sope
