#include "sope/learn.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>

namespace sope {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Nearest-rank empirical quantile of a sorted sample.
double sorted_quantile(const std::vector<double>& sorted, double p) {
  auto m = static_cast<long long>(sorted.size());
  auto rank = static_cast<long long>(std::ceil(p * static_cast<double>(m)));
  rank = std::clamp(rank, 1LL, m);
  return sorted[static_cast<std::size_t>(rank - 1)];
}

}  // namespace

double floored_ratio(double mu1, double mu0, long long* floor_events) {
  if (mu0 < kRatioFloor) {
    if (floor_events != nullptr) ++*floor_events;
    mu0 = kRatioFloor;
  }
  return mu1 / mu0;
}

RatioFn nuisance_ratio(const NuisanceSet& nuisances, long long* floor_events) {
  return [ns = &nuisances, floor_events](std::span<const double> x) {
    return floored_ratio(ns->mean_outcome1(x, 1), ns->mean_outcome1(x, 0), floor_events);
  };
}

ThresholdGrid ThresholdGrid::from_points(std::vector<double> points) {
  std::erase_if(points, [](double v) { return !std::isfinite(v); });
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  ThresholdGrid grid;
  grid.thresholds.reserve(points.size() + 2);
  grid.thresholds.push_back(-kInf);
  grid.thresholds.insert(grid.thresholds.end(), points.begin(), points.end());
  grid.thresholds.push_back(kInf);
  return grid;
}

ThresholdGrid build_grid(const Dataset& data, const RatioFn& ratio, int num_quantiles) {
  if (num_quantiles < 2) {
    throw std::invalid_argument("build_grid: need at least two quantiles");
  }
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(data.rows()));
  for (int i = 0; i < data.n; ++i) {
    for (int t = 0; t < data.T; ++t) values.push_back(ratio(data.xrow(i, t)));
  }
  if (values.empty()) throw std::invalid_argument("build_grid: empty dataset");
  std::sort(values.begin(), values.end());
  std::vector<double> points;
  points.reserve(static_cast<std::size_t>(num_quantiles));
  for (int k = 1; k <= num_quantiles; ++k) {
    double p = static_cast<double>(k) / (num_quantiles + 1.0);
    points.push_back(sorted_quantile(values, p));
  }
  return ThresholdGrid::from_points(std::move(points));
}

nlohmann::json LearnedPolicy::to_json() const {
  // JSON has no +-inf literal; sentinel thresholds are written as strings.
  auto encode = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return v > 0.0 ? "inf" : "-inf";
  };
  nlohmann::json jtheta = nlohmann::json::array();
  for (const auto& row : theta) {
    nlohmann::json jrow = nlohmann::json::array();
    for (double v : row) jrow.push_back(encode(v));
    jtheta.push_back(std::move(jrow));
  }
  nlohmann::json jvalues = nlohmann::json::array();
  for (int t = 0; t <= values.T; ++t) {
    nlohmann::json jrow = nlohmann::json::array();
    for (int s = 0; s <= values.capacity; ++s) jrow.push_back(values.at(t, s));
    jvalues.push_back(std::move(jrow));
  }
  return nlohmann::json{{"mode", mode_name(mode)},
                        {"ratio_source", ratio_source},
                        {"ratio_floor_events", ratio_floor_events},
                        {"theta", std::move(jtheta)},
                        {"fitted_values", std::move(jvalues)}};
}

LearnedPolicy learn_thresholds(const Dataset& data, const ScoreTable& scores,
                               const RatioFn& ratio, const ThresholdGrid& grid,
                               const PricingConfig& cfg, std::string ratio_source) {
  if (grid.size() < 2 || grid.thresholds.front() != -kInf || grid.thresholds.back() != kInf) {
    throw std::invalid_argument("learn_thresholds: grid must carry -inf/+inf sentinels");
  }
  if (scores.n != data.n || scores.T != data.T) {
    throw std::invalid_argument("learn_thresholds: score table does not match dataset");
  }
  if (data.T != cfg.horizon) {
    throw std::invalid_argument("learn_thresholds: dataset horizon does not match config");
  }

  // Ratio of every pooled context, evaluated once.
  std::vector<double> rvals(static_cast<std::size_t>(data.n) * data.T, 0.0);
  for (int i = 0; i < data.n; ++i) {
    for (int t = 0; t < data.T; ++t) {
      if (!scores.included(i, t)) continue;
      rvals[static_cast<std::size_t>(i) * data.T + t] = ratio(data.xrow(i, t));
    }
  }

  // The pooled transition under pi_theta does not depend on (t, s): one pass
  // per candidate threshold covers every stage of the recursion.
  std::size_t G = grid.size();
  std::vector<std::array<double, 2>> probs(G);
  std::vector<double> reward(G);
  std::vector<double> p1row(rvals.size(), 0.0);
  for (std::size_t g = 0; g < G; ++g) {
    double th = grid[g];
    for (std::size_t r = 0; r < rvals.size(); ++r) p1row[r] = rvals[r] > th ? 1.0 : 0.0;
    MarginalTransition tr = estimate_transition_rows(p1row, scores, data);
    probs[g] = tr.recursion_probs();
    reward[g] = std::max(0.0, tr.reward_rate(cfg.prices));
  }

  LearnedPolicy out;
  out.mode = scores.mode;
  out.ratio_source = std::move(ratio_source);
  out.ratio = ratio;
  out.values.T = cfg.horizon;
  out.values.capacity = cfg.capacity;
  out.values.v.assign(static_cast<std::size_t>(cfg.horizon + 1) * (cfg.capacity + 1), 0.0);
  out.theta.assign(static_cast<std::size_t>(cfg.horizon),
                   std::vector<double>(static_cast<std::size_t>(cfg.capacity) + 1, kInf));
  for (int t = cfg.horizon - 1; t >= 0; --t) {
    for (int s = 1; s <= cfg.capacity; ++s) {
      double vkeep = out.values.at(t + 1, s);
      double vsell = out.values.at(t + 1, s - 1);
      double best_q = -kInf;
      std::size_t best_g = 0;
      // Ascending scan with a strict improvement test: ties resolve to the
      // smallest candidate threshold.
      for (std::size_t g = 0; g < G; ++g) {
        double q = reward[g] + probs[g][0] * vkeep + probs[g][1] * vsell;
        if (q > best_q) {
          best_q = q;
          best_g = g;
        }
      }
      out.theta[t][static_cast<std::size_t>(s)] = grid[best_g];
      out.values.at(t, s) = best_q;
    }
  }
  return out;
}

LearnedPolicy learn_thresholds(const Dataset& data, const NuisanceSet& nuisances, Mode mode,
                               const ThresholdGrid& grid, const PricingConfig& cfg) {
  ScoreTable scores = build_scores(data, nuisances, mode);
  auto counter = std::make_shared<long long>(0);
  RatioFn ratio = [ns = &nuisances, counter](std::span<const double> x) {
    return floored_ratio(ns->mean_outcome1(x, 1), ns->mean_outcome1(x, 0), counter.get());
  };
  LearnedPolicy out = learn_thresholds(data, scores, ratio, grid, cfg,
                                       nuisances.flexible ? "knn-ensemble" : "logistic-ensemble");
  out.ratio_floor_events = *counter;
  return out;
}

ValueEstimate out_of_sample_value(const LearnedPolicy& policy, const PricingConfig& cfg,
                                  long long n_rollouts, std::uint64_t seed) {
  return monte_carlo_value(cfg, PolicySpec{policy.as_policy()}, n_rollouts, seed);
}

}  // namespace sope
