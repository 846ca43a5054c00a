#pragma once

#include <span>
#include <vector>

namespace sope {

// Distance-weighted k-nearest-neighbor probability estimate on standardized
// features: the flexible (nonparametric) outcome nuisance. A local-linear fit
// under Epanechnikov weights 1 - (d/d_k)^2 gives the prediction, so the k-th
// neighbor contributes nothing and equidistant neighborhoods fall back to a
// plain mean. A query that lands exactly on a training point short-circuits
// to the mean label over all duplicates of that point. Deterministic.
class KnnSmoother {
 public:
  KnnSmoother() = default;

  // features: row-major m x dim; labels in [0,1].
  static KnnSmoother fit(const std::vector<double>& features, int dim,
                         const std::vector<double>& labels, int k);

  double predict1(std::span<const double> x) const;  // P(label = 1 | x)
  int k() const { return k_; }
  long long size() const { return static_cast<long long>(labels_.size()); }

 private:
  struct Node {
    int lo = 0, hi = 0;        // index range into order_ (leaf if left < 0)
    int axis = 0;
    double split = 0.0;
    int left = -1, right = -1;
  };

  int dim_ = 0;
  int k_ = 1;
  std::vector<double> mean_, sd_;
  std::vector<double> pts_;        // standardized coordinates, m x dim
  std::vector<double> labels_;     // aligned with pts_ rows
  std::vector<double> exact_mean_; // mean label over rows identical to this row
  std::vector<int> order_;      // kd-tree leaf ordering of row indices
  std::vector<Node> nodes_;

  int build(int lo, int hi, std::vector<double>& scratch);
  void search(int node, std::span<const double> q,
              std::vector<std::pair<double, int>>& heap) const;
};

}  // namespace sope
