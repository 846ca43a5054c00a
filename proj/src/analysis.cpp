#include "sope/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "sope/env.hpp"
#include "sope/rng.hpp"

namespace sope {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

double BiasField::delta(int a, std::span<const double> x) const {
  return mu_hat(x, a) - true_outcome_prob(cfg, x, a);
}

double BiasField::tau(std::span<const double> x) const {
  return true_outcome_prob(cfg, x, 1) - true_outcome_prob(cfg, x, 0);
}

OutcomeFn shifted_outcome(const PricingConfig& cfg, double shift0, double shift1,
                          double lo, double hi) {
  if (!(lo < hi) || lo < 0.0 || hi > 1.0) {
    throw std::invalid_argument("shifted_outcome: need 0 <= lo < hi <= 1");
  }
  return [cfg, shift0, shift1, lo, hi](std::span<const double> x, int a) {
    double mu = true_outcome_prob(cfg, x, a) + (a == 1 ? shift1 : shift0);
    return std::clamp(mu, lo, hi);
  };
}

double optimal_threshold(double r0, double r1, double dv) {
  double den = r1 + dv;
  if (den == 0.0) throw std::invalid_argument("optimal_threshold: r1 + dv is zero");
  return (r0 + dv) / den;
}

double biased_threshold(double theta_star, double delta0, double delta1, double eta0) {
  if (!(eta0 > 0.0)) throw std::invalid_argument("biased_threshold: eta0 must be positive");
  return theta_star * (1.0 + delta0 / eta0) - delta1;
}

std::vector<std::vector<double>> oracle_thresholds(const PricingConfig& cfg,
                                                   const ContextOracle& oracle) {
  return oracle_optimal(cfg, oracle).theta;
}

OptimalPolicy model_optimal(const ContextOracle& oracle, const OutcomeFn& mu_hat,
                            const PricingConfig& cfg) {
  long long m = oracle.size();
  std::vector<double> m0(m), m1(m);
  for (long long j = 0; j < m; ++j) {
    m0[j] = mu_hat(oracle.context(j), 0);
    m1[j] = mu_hat(oracle.context(j), 1);
  }
  OptimalPolicy out;
  out.value.T = cfg.horizon;
  out.value.capacity = cfg.capacity;
  out.value.v.assign(static_cast<std::size_t>(cfg.horizon + 1) * (cfg.capacity + 1), 0.0);
  out.theta.assign(static_cast<std::size_t>(cfg.horizon),
                   std::vector<double>(static_cast<std::size_t>(cfg.capacity) + 1, kInf));
  for (int t = cfg.horizon - 1; t >= 0; --t) {
    for (int s = 1; s <= cfg.capacity; ++s) {
      double dv = out.value.at(t + 1, s - 1) - out.value.at(t + 1, s);
      double c0 = cfg.prices[0] + dv;
      double c1 = cfg.prices[1] + dv;
      double best = 0.0;
      for (long long j = 0; j < m; ++j) {
        best += oracle.weight(j) * std::max(m1[j] * c1, m0[j] * c0);
      }
      out.value.at(t, s) = out.value.at(t + 1, s) + best;
      out.theta[t][s] = c1 > 1e-12 ? c0 / c1 : -kInf;
    }
  }
  return out;
}

double persistence_condition(const PricingConfig& cfg, double theta_hat, double theta_star,
                             long long samples, std::uint64_t seed) {
  double lo = std::min(theta_hat, theta_star);
  double hi = std::max(theta_hat, theta_star);
  auto term = [&cfg, lo, hi](std::span<const double> x) {
    double mu0 = true_outcome_prob(cfg, x, 0);
    double mu1 = true_outcome_prob(cfg, x, 1);
    double r = mu1 / std::max(mu0, 1e-300);
    if (r < lo || r > hi) return 0.0;
    return -(mu1 - mu0);
  };
  if (cfg.context.kind == ContextSpec::Kind::kFinite) {
    double total = 0.0;
    for (std::size_t j = 0; j < cfg.context.support.size(); ++j) {
      total += cfg.context.probs[j] * term(cfg.context.support[j]);
    }
    return total;
  }
  if (samples < 1) throw std::invalid_argument("persistence_condition: samples must be positive");
  Rng rng(seed);
  std::vector<double> x(cfg.dim());
  double total = 0.0;
  for (long long i = 0; i < samples; ++i) {
    draw_context(cfg, rng, x.data());
    total += term(x);
  }
  return total / static_cast<double>(samples);
}

Histogram delta_histogram(const BiasField& field, int action, int bins, long long samples,
                          std::uint64_t seed) {
  if (bins < 1) throw std::invalid_argument("delta_histogram: bins must be positive");
  if (samples < 1) throw std::invalid_argument("delta_histogram: samples must be positive");
  Rng rng(seed);
  std::vector<double> x(field.cfg.dim());
  std::vector<double> vals(static_cast<std::size_t>(samples));
  for (long long i = 0; i < samples; ++i) {
    draw_context(field.cfg, rng, x.data());
    vals[i] = field.delta(action, x);
  }
  auto [lo_it, hi_it] = std::minmax_element(vals.begin(), vals.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (hi - lo < 1e-12) hi = lo + 1e-12;  // constant field: one degenerate bin span
  Histogram h;
  h.edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) {
    h.edges[b] = lo + (hi - lo) * static_cast<double>(b) / bins;
  }
  h.counts.assign(bins, 0);
  for (double d : vals) {
    auto b = static_cast<long long>((d - lo) / (hi - lo) * bins);
    h.counts[std::clamp(b, 0LL, static_cast<long long>(bins) - 1)] += 1;
  }
  h.total = samples;
  return h;
}

ThresholdReport heatmap(const std::vector<std::vector<double>>& theta_hat,
                        const std::vector<std::vector<double>>& theta_star) {
  if (theta_hat.empty() || theta_hat.size() != theta_star.size()) {
    throw std::invalid_argument("heatmap: threshold tables must have equal nonzero horizon");
  }
  auto T = theta_hat.size();
  auto cols = theta_hat[0].size();
  if (cols < 2) throw std::invalid_argument("heatmap: need at least one inventory level");
  for (std::size_t t = 0; t < T; ++t) {
    if (theta_hat[t].size() != cols || theta_star[t].size() != cols) {
      throw std::invalid_argument("heatmap: ragged threshold table");
    }
  }
  std::size_t cap = cols - 1;  // column 0 is the s = 0 sentinel
  ThresholdReport rep;
  rep.theta_star.assign(T, std::vector<double>(cap, 0.0));
  rep.theta_hat.assign(T, std::vector<double>(cap, 0.0));
  rep.gap.assign(T, std::vector<double>(cap, 0.0));
  long long persist_cells = 0;
  long long below = 0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 1; s <= cap; ++s) {
      double th = theta_hat[t][s];
      double ts = theta_star[t][s];
      rep.theta_hat[t][s - 1] = th;
      rep.theta_star[t][s - 1] = ts;
      rep.gap[t][s - 1] = th == ts ? 0.0 : ts - th;
      if (s > 2) {
        ++persist_cells;
        if (th < ts) ++below;
      }
    }
  }
  rep.share_hat_below_star_s_gt2 =
      persist_cells > 0 ? static_cast<double>(below) / static_cast<double>(persist_cells) : 0.0;
  return rep;
}

ThresholdReport heatmap(const LearnedPolicy& learned,
                        const std::vector<std::vector<double>>& theta_star) {
  return heatmap(learned.theta, theta_star);
}

std::vector<bool> concavity_check(const ValueTable& values) {
  if (values.capacity < 2) {
    throw std::invalid_argument("concavity_check: needs capacity >= 2");
  }
  constexpr double kTol = 1e-9;
  std::vector<bool> ok(static_cast<std::size_t>(values.T) + 1, true);
  for (int t = 0; t <= values.T; ++t) {
    for (int s = 2; s <= values.capacity; ++s) {
      double d_prev = values.at(t, s - 1) - values.at(t, s - 2);
      double d_cur = values.at(t, s) - values.at(t, s - 1);
      if (d_cur > d_prev + kTol) {
        ok[t] = false;
        break;
      }
    }
  }
  return ok;
}

}  // namespace sope
