#include "sope/knn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sope/math_util.hpp"

namespace sope {

namespace {
constexpr int kLeafSize = 24;
constexpr double kExactMatch = 1e-18;  // squared standardized distance
}  // namespace

KnnSmoother KnnSmoother::fit(const std::vector<double>& features, int dim,
                             const std::vector<double>& labels, int k) {
  if (dim < 1 || labels.empty() ||
      features.size() != labels.size() * static_cast<std::size_t>(dim))
    throw std::invalid_argument("KnnSmoother: shape mismatch");
  if (k < 1) throw std::invalid_argument("KnnSmoother: k must be >= 1");

  KnnSmoother s;
  s.dim_ = dim;
  long long m = static_cast<long long>(labels.size());
  s.k_ = static_cast<int>(std::min<long long>(k, m));
  s.labels_ = labels;

  // Standardize columns; constant columns keep unit scale.
  s.mean_.assign(dim, 0.0);
  s.sd_.assign(dim, 0.0);
  for (long long i = 0; i < m; ++i)
    for (int d = 0; d < dim; ++d) s.mean_[d] += features[i * dim + d];
  for (int d = 0; d < dim; ++d) s.mean_[d] /= static_cast<double>(m);
  for (long long i = 0; i < m; ++i)
    for (int d = 0; d < dim; ++d) {
      double c = features[i * dim + d] - s.mean_[d];
      s.sd_[d] += c * c;
    }
  for (int d = 0; d < dim; ++d) {
    s.sd_[d] = std::sqrt(s.sd_[d] / static_cast<double>(m));
    if (s.sd_[d] < 1e-12) s.sd_[d] = 1.0;
  }
  s.pts_.resize(features.size());
  for (long long i = 0; i < m; ++i)
    for (int d = 0; d < dim; ++d)
      s.pts_[i * dim + d] = (features[i * dim + d] - s.mean_[d]) / s.sd_[d];

  // Mean label per group of exactly-identical rows, so duplicate-heavy data
  // (finite context supports) resolves exact-match queries in O(1).
  std::vector<int> by_coords(m);
  for (long long i = 0; i < m; ++i) by_coords[i] = static_cast<int>(i);
  auto coord_less = [&](int a, int b) {
    const double* pa = s.pts_.data() + static_cast<std::size_t>(a) * dim;
    const double* pb = s.pts_.data() + static_cast<std::size_t>(b) * dim;
    return std::lexicographical_compare(pa, pa + dim, pb, pb + dim);
  };
  auto coord_eq = [&](int a, int b) {
    const double* pa = s.pts_.data() + static_cast<std::size_t>(a) * dim;
    const double* pb = s.pts_.data() + static_cast<std::size_t>(b) * dim;
    return std::equal(pa, pa + dim, pb);
  };
  std::sort(by_coords.begin(), by_coords.end(), coord_less);
  s.exact_mean_.assign(m, 0.0);
  for (long long lo = 0; lo < m;) {
    long long hi = lo + 1;
    while (hi < m && coord_eq(by_coords[lo], by_coords[hi])) ++hi;
    double mean = 0.0;
    for (long long j = lo; j < hi; ++j) mean += labels[by_coords[j]];
    mean /= static_cast<double>(hi - lo);
    for (long long j = lo; j < hi; ++j) s.exact_mean_[by_coords[j]] = mean;
    lo = hi;
  }

  s.order_.resize(m);
  for (long long i = 0; i < m; ++i) s.order_[i] = static_cast<int>(i);
  std::vector<double> scratch;
  s.nodes_.reserve(static_cast<std::size_t>(2 * m / kLeafSize + 8));
  s.build(0, static_cast<int>(m), scratch);
  return s;
}

int KnnSmoother::build(int lo, int hi, std::vector<double>& scratch) {
  Node node;
  node.lo = lo;
  node.hi = hi;
  int id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (hi - lo <= kLeafSize) return id;

  // Split on the widest axis at the median.
  int best_axis = 0;
  double best_spread = -1.0;
  for (int d = 0; d < dim_; ++d) {
    double mn = pts_[static_cast<std::size_t>(order_[lo]) * dim_ + d];
    double mx = mn;
    for (int i = lo + 1; i < hi; ++i) {
      double v = pts_[static_cast<std::size_t>(order_[i]) * dim_ + d];
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    if (mx - mn > best_spread) {
      best_spread = mx - mn;
      best_axis = d;
    }
  }
  if (best_spread <= 0.0) return id;  // all points identical: leave as leaf

  int mid = (lo + hi) / 2;
  std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                   [&](int a, int b) {
                     return pts_[static_cast<std::size_t>(a) * dim_ + best_axis] <
                            pts_[static_cast<std::size_t>(b) * dim_ + best_axis];
                   });
  double split = pts_[static_cast<std::size_t>(order_[mid]) * dim_ + best_axis];
  int left = build(lo, mid, scratch);
  int right = build(mid, hi, scratch);
  nodes_[id].axis = best_axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KnnSmoother::search(int node_id, std::span<const double> q,
                         std::vector<std::pair<double, int>>& heap) const {
  const Node& node = nodes_[node_id];
  if (node.left < 0) {
    for (int i = node.lo; i < node.hi; ++i) {
      int row = order_[i];
      const double* p = pts_.data() + static_cast<std::size_t>(row) * dim_;
      double d2 = 0.0;
      for (int d = 0; d < dim_; ++d) {
        double diff = q[d] - p[d];
        d2 += diff * diff;
      }
      if (static_cast<int>(heap.size()) < k_) {
        heap.emplace_back(d2, row);
        std::push_heap(heap.begin(), heap.end());
      } else if (d2 < heap.front().first) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = {d2, row};
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }
  double diff = q[node.axis] - node.split;
  int near = diff <= 0.0 ? node.left : node.right;
  int far = diff <= 0.0 ? node.right : node.left;
  search(near, q, heap);
  double worst = static_cast<int>(heap.size()) < k_
                     ? std::numeric_limits<double>::infinity()
                     : heap.front().first;
  if (diff * diff <= worst) search(far, q, heap);
}

double KnnSmoother::predict1(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_)
    throw std::invalid_argument("KnnSmoother: query dimension mismatch");
  std::vector<double> q(dim_);
  for (int d = 0; d < dim_; ++d) q[d] = (x[d] - mean_[d]) / sd_[d];

  std::vector<std::pair<double, int>> heap;
  heap.reserve(k_);
  search(0, q, heap);

  // A query sitting on a training point resolves to that point's duplicate
  // group; otherwise smooth with tricube weights inside the k-neighborhood.
  double dmax2 = 0.0;
  const std::pair<double, int>* nearest = nullptr;
  for (const auto& entry : heap) {
    dmax2 = std::max(dmax2, entry.first);
    if (nearest == nullptr || entry.first < nearest->first) nearest = &entry;
  }
  if (nearest->first <= kExactMatch) return exact_mean_[nearest->second];

  // Epanechnikov weights over the k-neighborhood: w = 1 - (d/d_k)^2, so the
  // k-th neighbor contributes nothing. Milder than tricube on purpose - the
  // Bernoulli labels make variance the dominant error here, and this kernel
  // keeps about three quarters of the neighborhood's effective sample size.
  double wsum = 0.0, vsum = 0.0;
  std::vector<double> wts;
  wts.reserve(heap.size());
  for (const auto& [d2, row] : heap) {
    double w = 1.0 - d2 / dmax2;
    wts.push_back(w);
    wsum += w;
    vsum += w * labels_[row];
  }
  if (wsum <= 0.0) {
    // All neighbors equidistant (every weight vanishes): plain average.
    double mean = 0.0;
    for (const auto& [d2, row] : heap) mean += labels_[row];
    return mean / static_cast<double>(heap.size());
  }

  // Local-linear fit on the weighted neighborhood, centered at the query:
  // the intercept of the weighted least squares is the prediction. This
  // removes the first-order bias a plain weighted mean picks up wherever the
  // neighborhood is lopsided. Falls back to the weighted mean if the local
  // design is degenerate.
  int nb = dim_ + 1;
  std::vector<double> A(static_cast<std::size_t>(nb) * nb, 0.0), c(nb, 0.0), z(dim_);
  for (std::size_t j = 0; j < heap.size(); ++j) {
    double w = wts[j];
    if (w <= 0.0) continue;
    int row = heap[j].second;
    const double* pt = pts_.data() + static_cast<std::size_t>(row) * dim_;
    for (int d = 0; d < dim_; ++d) z[d] = pt[d] - q[d];
    A[0] += w;
    c[0] += w * labels_[row];
    for (int r = 0; r < dim_; ++r) {
      A[r + 1] += w * z[r];  // row 0 of the upper triangle
      for (int cc = r; cc < dim_; ++cc) A[(r + 1) * nb + (cc + 1)] += w * z[r] * z[cc];
      c[r + 1] += w * labels_[row] * z[r];
    }
  }
  for (int r = 1; r < nb; ++r)
    for (int cc = 0; cc < r; ++cc) A[r * nb + cc] = A[cc * nb + r];
  for (int r = 0; r < nb; ++r) A[r * nb + r] += 1e-10 * (1.0 + A[r * nb + r]);
  std::vector<double> beta = c;
  if (!cholesky_solve(A, beta, nb)) return vsum / wsum;
  return std::clamp(beta[0], 0.0, 1.0);
}

}  // namespace sope
