#include "sope/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sope/env.hpp"

namespace sope {

FoldAssignment assign_folds(int n, int T, int K, std::uint64_t seed) {
  if (K != 2) throw std::invalid_argument("assign_folds: only K=2 is supported");
  if (n < K) throw std::invalid_argument("assign_folds: need n >= K trajectories");
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  Rng rng(subseed(seed, {0x0f01d5ULL}));
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[i], perm[j]);
  }
  FoldAssignment folds;
  folds.K = K;
  folds.T = T;
  folds.traj_fold.assign(n, 0);
  for (int pos = 0; pos < n; ++pos) folds.traj_fold[perm[pos]] = pos < (n + 1) / 2 ? 0 : 1;
  return folds;
}

int default_knn_k(long long rows) {
  return static_cast<int>(std::ceil(std::pow(static_cast<double>(rows), 0.6)));
}

namespace {

// Training rows for the cell that predicts (fold g, parity p): complementary
// trajectory fold, same parity.
std::vector<int> training_rows(const Dataset& data, const FoldAssignment& folds, int g,
                               int p, bool drop_post_stockout) {
  std::vector<int> rows;
  for (int i = 0; i < data.n; ++i) {
    if (folds.traj_fold[i] == g) continue;
    for (int t = p; t < data.T; t += 2) {
      int row = data.idx(i, t);
      if (drop_post_stockout && data.s[row] == 0) continue;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace

NuisanceSet fit_nuisances(const Dataset& data, const FoldAssignment& folds,
                          const PricingConfig& cfg, const NuisanceFitOptions& opt) {
  if (data.rows() == 0) throw std::invalid_argument("fit_nuisances: empty data");
  if (static_cast<int>(folds.traj_fold.size()) != data.n || folds.T != data.T)
    throw std::invalid_argument("fit_nuisances: folds built for different data");

  NuisanceSet ns;
  ns.folds = folds;
  ns.prices = cfg.prices;
  ns.clip_eps = opt.clip_eps;
  ns.flexible = opt.outcome_mode == OutcomeMode::kFlexible;

  LogisticFitOptions lopt;
  lopt.l2 = opt.l2;

  int d = data.dim;
  for (int g = 0; g < 2; ++g) {
    for (int p = 0; p < 2; ++p) {
      auto rows = training_rows(data, folds, g, p, opt.drop_post_stockout);
      if (rows.size() < 10)
        throw std::invalid_argument("fit_nuisances: a cross-fitting cell has < 10 rows");

      std::vector<double> xprop, xout, ya, yy;
      xprop.reserve(rows.size() * d);
      xout.reserve(rows.size() * (d + 1));
      ya.reserve(rows.size());
      yy.reserve(rows.size());
      for (int row : rows) {
        auto xr = data.xrow(row);
        xprop.insert(xprop.end(), xr.begin(), xr.end());
        xout.insert(xout.end(), xr.begin(), xr.end());
        xout.push_back(cfg.prices[data.a[row]]);
        ya.push_back(static_cast<double>(data.a[row]));
        yy.push_back(static_cast<double>(data.y[row]));
      }

      NuisanceCell& cell = ns.cells[g * 2 + p];
      cell.propensity = fit_logistic(xprop, d, ya, lopt);
      cell.propensity.feature_map = "raw-x";
      cell.outcome = fit_logistic(xout, d + 1, yy, lopt);
      cell.outcome.feature_map = "x-price";
      if (ns.flexible) {
        int k = opt.knn_k > 0 ? opt.knn_k : default_knn_k(data.rows());
        cell.flexible = std::make_shared<KnnSmoother>(
            KnnSmoother::fit(xout, d + 1, yy, k));
      }
    }
  }
  return ns;
}

double NuisanceSet::predict_propensity_raw(const Dataset& data, int i, int t, int a) const {
  const NuisanceCell& cell = cells[folds.key(i, t)];
  double e1 = cell.propensity.predict1(data.xrow(i, t));
  return a == 1 ? e1 : 1.0 - e1;
}

double NuisanceSet::predict_propensity(const Dataset& data, int i, int t, int a) const {
  return std::clamp(predict_propensity_raw(data, i, t, a), clip_eps, 1.0 - clip_eps);
}

double NuisanceSet::predict_outcome(const Dataset& data, int i, int t, int a, int y) const {
  const NuisanceCell& cell = cells[folds.key(i, t)];
  auto xr = data.xrow(i, t);
  std::vector<double> f(xr.begin(), xr.end());
  f.push_back(prices[a]);
  double p1 = flexible ? cell.flexible->predict1(f) : cell.outcome.predict1(f);
  return y == 1 ? p1 : 1.0 - p1;
}

double NuisanceSet::mean_outcome1(std::span<const double> x, int a) const {
  std::vector<double> f(x.begin(), x.end());
  f.push_back(prices[a]);
  double acc = 0.0;
  for (const NuisanceCell& cell : cells)
    acc += flexible ? cell.flexible->predict1(f) : cell.outcome.predict1(f);
  return acc / static_cast<double>(cells.size());
}

NuisancePredictor NuisanceSet::predictor() const {
  return {
      [this](const Dataset& data, int i, int t, int a) {
        return predict_propensity(data, i, t, a);
      },
      [this](const Dataset& data, int i, int t, int a, int y) {
        return predict_outcome(data, i, t, a, y);
      },
  };
}

LogisticModel project_outcome_logistic(const PricingConfig& cfg, long long m,
                                       std::uint64_t seed) {
  int d = cfg.context.dim();
  std::vector<double> feats;
  std::vector<double> labels;
  feats.reserve(static_cast<std::size_t>(m) * (d + 1));
  labels.reserve(static_cast<std::size_t>(m));
  Rng rng(subseed(seed, {0x6a0b5ULL}));
  std::vector<double> x(d);
  for (long long i = 0; i < m; ++i) {
    draw_context(cfg, rng, x.data());
    int a = rng.bernoulli(behavior_propensity(cfg, x)) ? 1 : 0;
    feats.insert(feats.end(), x.begin(), x.end());
    feats.push_back(cfg.prices[a]);
    labels.push_back(true_outcome_prob(cfg, x, a));
  }
  LogisticModel model = fit_logistic(feats, d + 1, labels, LogisticFitOptions{});
  model.feature_map = "x-price";
  return model;
}

nlohmann::json NuisanceSet::to_json() const {
  nlohmann::json j;
  j["clip_eps"] = clip_eps;
  j["flexible"] = flexible;
  j["prices"] = prices;
  j["fold_map"] = folds.traj_fold;
  nlohmann::json cell_list = nlohmann::json::array();
  for (int g = 0; g < 2; ++g)
    for (int p = 0; p < 2; ++p) {
      const NuisanceCell& cell = cells[g * 2 + p];
      nlohmann::json c;
      c["traj_fold"] = g;
      c["parity"] = p;
      c["propensity"] = {{"w", cell.propensity.w},
                         {"b", cell.propensity.b},
                         {"feature_map", cell.propensity.feature_map}};
      c["outcome"] = {{"w", cell.outcome.w},
                      {"b", cell.outcome.b},
                      {"feature_map", cell.outcome.feature_map}};
      if (flexible && cell.flexible)
        c["flexible"] = {{"k", cell.flexible->k()},
                         {"rows", cell.flexible->size()},
                         {"note", "nonparametric smoother; refit from data"}};
      cell_list.push_back(c);
    }
  j["cells"] = cell_list;
  return j;
}

}  // namespace sope
