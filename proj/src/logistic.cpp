#include "sope/logistic.hpp"

#include <cmath>

namespace sope {

namespace {

// Objective, gradient, Hessian of mean NLL + (l2/2)||w||^2 over the augmented
// parameter vector [w..., b]; the intercept coordinate carries no penalty.
struct Problem {
  const std::vector<double>& X;
  int d;
  const std::vector<double>& y;
  double l2;
  long long m;

  double value(const std::vector<double>& p) const {
    double f = 0.0;
    for (long long i = 0; i < m; ++i) {
      const double* xi = X.data() + i * d;
      double z = p[d];
      for (int k = 0; k < d; ++k) z += p[k] * xi[k];
      f += softplus(z) - y[i] * z;
    }
    f /= static_cast<double>(m);
    for (int k = 0; k < d; ++k) f += 0.5 * l2 * p[k] * p[k];
    return f;
  }

  void grad_hess(const std::vector<double>& p, std::vector<double>& g,
                 std::vector<double>& h) const {
    int q = d + 1;
    g.assign(q, 0.0);
    h.assign(static_cast<std::size_t>(q) * q, 0.0);
    for (long long i = 0; i < m; ++i) {
      const double* xi = X.data() + i * d;
      double z = p[d];
      for (int k = 0; k < d; ++k) z += p[k] * xi[k];
      double mu = sigmoid(z);
      double resid = mu - y[i];
      double wgt = mu * (1.0 - mu);
      for (int k = 0; k < d; ++k) g[k] += resid * xi[k];
      g[d] += resid;
      for (int r = 0; r < d; ++r) {
        for (int c = r; c < d; ++c) h[r * q + c] += wgt * xi[r] * xi[c];
        h[r * q + d] += wgt * xi[r];
      }
      h[d * q + d] += wgt;
    }
    double inv_m = 1.0 / static_cast<double>(m);
    for (double& v : g) v *= inv_m;
    for (double& v : h) v *= inv_m;
    for (int k = 0; k < d; ++k) {
      g[k] += l2 * p[k];
      h[k * q + k] += l2;
    }
    // tiny ridge keeps the factorization alive when predictions saturate
    for (int k = 0; k < q; ++k) h[k * q + k] += 1e-12;
    for (int r = 0; r < q; ++r)
      for (int c = 0; c < r; ++c) h[r * q + c] = h[c * q + r];
  }
};

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

LogisticModel fit_logistic(const std::vector<double>& features, int dim,
                           const std::vector<double>& labels,
                           const LogisticFitOptions& opt) {
  if (dim < 0 || labels.empty() ||
      features.size() != labels.size() * static_cast<std::size_t>(dim))
    throw std::invalid_argument("fit_logistic: shape mismatch");
  if (opt.l2 < 0.0) throw std::invalid_argument("fit_logistic: l2 must be >= 0");
  for (double v : labels)
    if (v < 0.0 || v > 1.0) throw std::invalid_argument("fit_logistic: labels must be in [0,1]");

  Problem prob{features, dim, labels, opt.l2, static_cast<long long>(labels.size())};
  int q = dim + 1;
  std::vector<double> p(q, 0.0), g, h, dir;
  double fcur = prob.value(p);
  double gnorm = 0.0;
  for (int it = 0; it < opt.max_iter; ++it) {
    prob.grad_hess(p, g, h);
    gnorm = norm2(g);
    if (gnorm <= opt.tol) {
      LogisticModel model;
      model.w.assign(p.begin(), p.begin() + dim);
      model.b = p[dim];
      return model;
    }
    dir = g;
    std::vector<double> hc = h;
    if (!cholesky_solve(hc, dir, q)) {
      // fall back to gradient direction if the Hessian is degenerate
      dir = g;
    }
    double slope = 0.0;
    for (int k = 0; k < q; ++k) slope += g[k] * dir[k];
    if (slope <= 1e-13 * std::max(1.0, std::abs(fcur)) && gnorm < 1e-4) {
      // The decrease a Newton step can deliver is below the objective's
      // floating-point resolution, so a backtracking test on f can no longer
      // distinguish progress from rounding noise. This only happens deep in
      // the quadratic phase, where the undamped step is the right move and
      // the (still accurate) gradient certifies convergence next iteration.
      for (int k = 0; k < q; ++k) p[k] -= dir[k];
      fcur = prob.value(p);
      continue;
    }
    double stepsize = 1.0;
    std::vector<double> trial(q);
    while (true) {
      for (int k = 0; k < q; ++k) trial[k] = p[k] - stepsize * dir[k];
      double ftrial = prob.value(trial);
      if (ftrial <= fcur - 1e-4 * stepsize * slope || stepsize < 1e-12) {
        p = trial;
        fcur = ftrial;
        break;
      }
      stepsize *= 0.5;
    }
  }
  prob.grad_hess(p, g, h);
  gnorm = norm2(g);
  if (gnorm <= opt.tol) {
    LogisticModel model;
    model.w.assign(p.begin(), p.begin() + dim);
    model.b = p[dim];
    return model;
  }
  throw ConvergenceError(gnorm);
}

double logistic_grad_norm(const LogisticModel& model, const std::vector<double>& features,
                          int dim, const std::vector<double>& labels, double l2) {
  Problem prob{features, dim, labels, l2, static_cast<long long>(labels.size())};
  std::vector<double> p(model.w);
  p.push_back(model.b);
  std::vector<double> g, h;
  prob.grad_hess(p, g, h);
  double s = 0.0;
  for (double v : g) s += v * v;
  return std::sqrt(s);
}

}  // namespace sope
