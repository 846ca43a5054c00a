#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace sope {

// Context (feature) distribution. Gaussian with unit covariance, or a finite
// weighted support that exact enumeration oracles can sum over.
struct ContextSpec {
  enum class Kind { kGaussian, kFinite };
  Kind kind = Kind::kGaussian;

  // Gaussian
  std::vector<double> mean{0.0, 0.0};

  // Finite: support points (row-major m x dim) and their probabilities.
  std::vector<std::vector<double>> support;
  std::vector<double> probs;

  int dim() const;
  static ContextSpec gaussian(std::vector<double> mean);
  static ContextSpec finite(std::vector<std::vector<double>> support,
                            std::vector<double> probs);
};

// Full environment specification for the single-item pricing process.
//
// Purchase probability: mu(1|a,x) = (1-delta) * sigmoid(beta.x + beta0*p(a))
//                                 + delta * sigmoid(x0^2 * p(a))
// Behavior policy:      e(1|x)  = sigmoid(behavior_scale * beta.x)
// Evaluation policy:    pi_e(1|x) = sigmoid(eval_scale * beta.x)
struct PricingConfig {
  int horizon = 10;    // T decision epochs, t = 0..T-1
  int capacity = 4;    // s0 initial inventory
  std::array<double, 2> prices{0.5, 1.0};  // p(a); prices[1] > prices[0]
  std::vector<double> beta{-0.75, 0.75};
  double beta0 = -2.0;
  double delta = 0.0;  // weight of the non-logistic demand component, in [0,1]
  double behavior_scale = -0.8;
  double eval_scale = 0.25;
  ContextSpec context;

  int dim() const { return context.dim(); }
};

// Throws std::invalid_argument on inconsistent settings (dimension mismatch,
// delta outside [0,1], horizon < 1, capacity < 0, finite probs not summing
// to 1 within 1e-12, prices out of the R(1) > R(0) >= 0 convention).
void validate(const PricingConfig& cfg);

nlohmann::json to_json(const ContextSpec& ctx);
nlohmann::json to_json(const PricingConfig& cfg);
ContextSpec context_from_json(const nlohmann::json& j);
PricingConfig config_from_json(const nlohmann::json& j);
PricingConfig load_config(const std::string& path);

// FNV-1a hash of the canonical JSON dump, as a 16-char hex string. Recorded in
// experiment manifests so result files can be traced to an exact config.
std::string config_hash(const PricingConfig& cfg);

}  // namespace sope
