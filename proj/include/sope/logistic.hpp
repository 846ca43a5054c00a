#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sope/math_util.hpp"

namespace sope {

// p(label=1 | f) = sigmoid(w.f + b).
struct LogisticModel {
  std::vector<double> w;
  double b = 0.0;
  std::string feature_map;  // "raw-x" (propensity) or "x-price" (outcome)

  double predict1(std::span<const double> f) const { return sigmoid(dot(w, f) + b); }
};

struct LogisticFitOptions {
  double l2 = 1e-4;     // ridge strength on weights (intercept unpenalized)
  double tol = 1e-9;    // convergence: ||gradient||_2 of the mean objective
  int max_iter = 200;
};

// Thrown when damped Newton fails to reach tol within max_iter.
struct ConvergenceError : std::runtime_error {
  double grad_norm;
  explicit ConvergenceError(double g)
      : std::runtime_error("logistic fit did not converge; |grad| = " + std::to_string(g)),
        grad_norm(g) {}
};

// Minimizes mean negative log-likelihood + (l2/2)*||w||^2 by damped Newton.
// Labels may be fractional in [0,1] (soft labels), which makes the same code
// fit population projections from expected outcomes. Deterministic.
LogisticModel fit_logistic(const std::vector<double>& features, int dim,
                           const std::vector<double>& labels,
                           const LogisticFitOptions& opt = {});

// Value of the fitted objective's gradient norm at `model` (diagnostics).
double logistic_grad_norm(const LogisticModel& model, const std::vector<double>& features,
                          int dim, const std::vector<double>& labels, double l2);

}  // namespace sope
