#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace sope::testutil {

// chi-square 0.999 quantiles for dof = 1..60 (precomputed; tests at
// significance alpha = 0.001 compare their statistic against these).
inline double chi2_crit999(int dof) {
  static const double kCrit[60] = {
      10.827566, 13.815511, 16.266236, 18.466827, 20.515006,
      22.457744, 24.321886, 26.124482, 27.877165, 29.588298,
      31.264134, 32.909490, 34.528179, 36.123274, 37.697298,
      39.252355, 40.790217, 42.312396, 43.820196, 45.314747,
      46.797038, 48.267942, 49.728232, 51.178598, 52.619656,
      54.051962, 55.476020, 56.892285, 58.301173, 59.703064,
      61.098306, 62.487219, 63.870099, 65.247217, 66.618829,
      67.985168, 69.346452, 70.702887, 72.054663, 73.401958,
      74.744938, 76.083763, 77.418578, 78.749524, 80.076732,
      81.400326, 82.720423, 84.037134, 85.350565, 86.660815,
      87.967980, 89.272151, 90.573412, 91.871847, 93.167533,
      94.460545, 95.750954, 97.038829, 98.324234, 99.607233};
  if (dof < 1 || dof > 60) throw std::invalid_argument("chi2_crit999: dof out of table");
  return kCrit[dof - 1];
}

// Standard normal deciles (z_{0.1}..z_{0.9}) for equal-probability binning.
inline const std::vector<double>& normal_deciles() {
  static const std::vector<double> kZ = {
      -1.2815515655446004, -0.8416212335729142, -0.5244005127080407,
      -0.2533471031357997, 0.0,
      0.2533471031357997,  0.5244005127080407,  0.8416212335729142,
      1.2815515655446004};
  return kZ;
}

// Two-sample homogeneity chi-square over shared bins. Returns the statistic;
// dof is (bins_with_mass - 1).
inline double homogeneity_chi2(std::span<const long long> c1, std::span<const long long> c2,
                               int* dof_out) {
  if (c1.size() != c2.size()) throw std::invalid_argument("homogeneity_chi2: bin mismatch");
  double n1 = 0, n2 = 0;
  for (auto v : c1) n1 += static_cast<double>(v);
  for (auto v : c2) n2 += static_cast<double>(v);
  double total = n1 + n2;
  double stat = 0.0;
  int used = 0;
  for (std::size_t b = 0; b < c1.size(); ++b) {
    double colsum = static_cast<double>(c1[b] + c2[b]);
    if (colsum == 0) continue;
    ++used;
    double e1 = n1 * colsum / total;
    double e2 = n2 * colsum / total;
    stat += (c1[b] - e1) * (c1[b] - e1) / e1;
    stat += (c2[b] - e2) * (c2[b] - e2) / e2;
  }
  *dof_out = used - 1;
  return stat;
}

// Independence chi-square on an r x c contingency table (row-major counts).
// Rows/columns with zero mass are dropped from the dof count.
inline double independence_chi2(const std::vector<std::vector<long long>>& table,
                                int* dof_out) {
  std::size_t nr = table.size(), nc = table.empty() ? 0 : table[0].size();
  std::vector<double> rowsum(nr, 0.0), colsum(nc, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) {
      rowsum[i] += static_cast<double>(table[i][j]);
      colsum[j] += static_cast<double>(table[i][j]);
      total += static_cast<double>(table[i][j]);
    }
  int live_rows = 0, live_cols = 0;
  for (double v : rowsum) live_rows += v > 0;
  for (double v : colsum) live_cols += v > 0;
  double stat = 0.0;
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) {
      if (rowsum[i] == 0 || colsum[j] == 0) continue;
      double e = rowsum[i] * colsum[j] / total;
      double d = static_cast<double>(table[i][j]) - e;
      stat += d * d / e;
    }
  *dof_out = (live_rows - 1) * (live_cols - 1);
  return stat;
}

// Derivative-free coordinate descent with golden-section line search — a slow,
// independent optimizer used as a reference against the Newton solver.
inline std::vector<double> coordinate_golden_min(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double span0 = 8.0, int sweeps = 400) {
  const double kPhi = 0.6180339887498949;
  double span = span0;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (std::size_t k = 0; k < x.size(); ++k) {
      double lo = x[k] - span, hi = x[k] + span;
      double a = hi - kPhi * (hi - lo), b = lo + kPhi * (hi - lo);
      auto eval = [&](double v) {
        std::vector<double> y = x;
        y[k] = v;
        return f(y);
      };
      double fa = eval(a), fb = eval(b);
      for (int it = 0; it < 120; ++it) {
        if (fa < fb) {
          hi = b;
          b = a;
          fb = fa;
          a = hi - kPhi * (hi - lo);
          fa = eval(a);
        } else {
          lo = a;
          a = b;
          fa = fb;
          b = lo + kPhi * (hi - lo);
          fb = eval(b);
        }
      }
      x[k] = 0.5 * (lo + hi);
    }
    span = std::max(span * 0.7, 1e-7);
  }
  return x;
}

}  // namespace sope::testutil
