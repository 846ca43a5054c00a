#include "sope/policy.hpp"

#include <stdexcept>

#include "sope/math_util.hpp"

namespace sope {

double action1_prob(const PolicySpec& policy, int t, int s, std::span<const double> x) {
  return std::visit(
      [&](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, StochasticLogistic>) {
          return sigmoid(p.scale * dot(p.coef, x));
        } else if constexpr (std::is_same_v<P, ConstantAction>) {
          return p.action == 1 ? 1.0 : 0.0;
        } else {
          if (t < 0 || t >= static_cast<int>(p.theta.size()) || s < 0 ||
              s >= static_cast<int>(p.theta[t].size()))
            throw std::invalid_argument("action1_prob: (t,s) outside threshold table");
          return p.ratio(x) > p.theta[t][s] ? 1.0 : 0.0;
        }
      },
      policy);
}

PolicySpec behavior_policy(const PricingConfig& cfg) {
  return StochasticLogistic{cfg.beta, cfg.behavior_scale};
}

PolicySpec evaluation_policy(const PricingConfig& cfg) {
  return StochasticLogistic{cfg.beta, cfg.eval_scale};
}

SingleStepPolicy policy_slice(const PolicySpec& policy, int t, int s) {
  return std::visit(
      [&](const auto& p) -> SingleStepPolicy {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, StochasticLogistic>) {
          return [p](std::span<const double> x) { return sigmoid(p.scale * dot(p.coef, x)); };
        } else if constexpr (std::is_same_v<P, ConstantAction>) {
          double q = p.action == 1 ? 1.0 : 0.0;
          return [q](std::span<const double>) { return q; };
        } else {
          if (t < 0 || t >= static_cast<int>(p.theta.size()) || s < 0 ||
              s >= static_cast<int>(p.theta[t].size()))
            throw std::invalid_argument("policy_slice: (t,s) outside threshold table");
          double theta = p.theta[t][s];
          auto ratio = p.ratio;
          return [ratio, theta](std::span<const double> x) {
            return ratio(x) > theta ? 1.0 : 0.0;
          };
        }
      },
      policy);
}

}  // namespace sope
