#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>

#include <json.hpp>

#include "sope/config.hpp"
#include "sope/dataset.hpp"
#include "sope/folds.hpp"
#include "sope/knn.hpp"
#include "sope/logistic.hpp"

namespace sope {

enum class OutcomeMode { kLogistic, kFlexible };

struct NuisanceFitOptions {
  OutcomeMode outcome_mode = OutcomeMode::kLogistic;
  double l2 = 1e-4;
  double clip_eps = 0.01;
  int knn_k = 0;                     // 0: default ceil((n*T)^0.6)
  bool drop_post_stockout = false;   // exclude s=0 rows from training
};

// One cross-fitting cell: models that serve rows with a given
// (trajectory fold, timestep parity), trained on the complementary
// trajectory fold at the same parity.
struct NuisanceCell {
  LogisticModel propensity;              // features: raw x -> P(a=1)
  LogisticModel outcome;                 // features: (x, p(a)) -> P(y=1)
  std::shared_ptr<KnnSmoother> flexible; // same features, nonparametric
};

// Generic (i,t)-aware nuisance interface used by the score builder; lets
// tests plug in oracle or deliberately corrupted nuisances.
struct NuisancePredictor {
  // e(a | x_{i,t}), already clipped to [clip_eps, 1-clip_eps].
  std::function<double(const Dataset&, int i, int t, int a)> propensity;
  // mu(y | a, x_{i,t}); must satisfy sum_y = 1.
  std::function<double(const Dataset&, int i, int t, int a, int y)> outcome;
};

struct NuisanceSet {
  FoldAssignment folds;
  std::array<double, 2> prices{0.5, 1.0};
  double clip_eps = 0.01;
  bool flexible = false;  // outcome predictions come from the k-NN smoother
  std::array<NuisanceCell, FoldAssignment::kCells> cells;

  // Cross-fitted predictions for logged row (i, t).
  double predict_propensity(const Dataset& data, int i, int t, int a) const;
  double predict_propensity_raw(const Dataset& data, int i, int t, int a) const;
  double predict_outcome(const Dataset& data, int i, int t, int a, int y) const;

  // Deployment-time outcome probability for a fresh context: ensemble mean
  // over the four cell models (a single deterministic function of x).
  double mean_outcome1(std::span<const double> x, int a) const;

  NuisancePredictor predictor() const;

  nlohmann::json to_json() const;
};

// Fits per-cell propensity and outcome models. Throws std::invalid_argument
// when a training cell has fewer than 10 rows. The returned set must outlive
// any predictor() handles taken from it.
NuisanceSet fit_nuisances(const Dataset& data, const FoldAssignment& folds,
                          const PricingConfig& cfg, const NuisanceFitOptions& opt = {});

// Default flexible-smoother neighbor count.
int default_knn_k(long long rows);

// Population projection of the (possibly misspecified) outcome mixture onto
// the logistic class: soft-label fit on m draws of (x, price) under the
// behavior measure. This is the model the plug-in outcome fit converges to,
// and therefore the source of the direct method's asymptotic bias.
LogisticModel project_outcome_logistic(const PricingConfig& cfg, long long m,
                                       std::uint64_t seed);

}  // namespace sope
