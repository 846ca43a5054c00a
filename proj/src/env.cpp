#include "sope/env.hpp"

#include <stdexcept>

#include "sope/math_util.hpp"

namespace sope {

double true_outcome_prob(const PricingConfig& cfg, std::span<const double> x, int a) {
  if (static_cast<int>(x.size()) != static_cast<int>(cfg.beta.size()))
    throw std::invalid_argument("true_outcome_prob: context dimension mismatch");
  double price = cfg.prices[a];
  double logistic_part = sigmoid(dot(cfg.beta, x) + cfg.beta0 * price);
  if (cfg.delta == 0.0) return logistic_part;
  double bump_part = sigmoid(x[0] * x[0] * price);
  return (1.0 - cfg.delta) * logistic_part + cfg.delta * bump_part;
}

double behavior_propensity(const PricingConfig& cfg, std::span<const double> x) {
  if (x.size() != cfg.beta.size())
    throw std::invalid_argument("behavior_propensity: context dimension mismatch");
  return sigmoid(cfg.behavior_scale * dot(cfg.beta, x));
}

double eval_policy_prob(const PricingConfig& cfg, std::span<const double> x) {
  if (x.size() != cfg.beta.size())
    throw std::invalid_argument("eval_policy_prob: context dimension mismatch");
  return sigmoid(cfg.eval_scale * dot(cfg.beta, x));
}

int step(int s, int y) {
  if (s < 0) throw std::invalid_argument("step: negative inventory");
  if (s == 0) return 0;
  return y == 1 ? s - 1 : s;
}

double reward(const PricingConfig& cfg, int s, int a, int y) {
  if (s < 0) throw std::invalid_argument("reward: negative inventory");
  return (y == 1 && s > 0) ? cfg.prices[a] : 0.0;
}

void draw_context(const PricingConfig& cfg, Rng& rng, double* out) {
  const ContextSpec& ctx = cfg.context;
  int d = ctx.dim();
  if (ctx.kind == ContextSpec::Kind::kGaussian) {
    for (int k = 0; k < d; ++k) out[k] = ctx.mean[k] + rng.normal();
  } else {
    double u = rng.uniform01();
    double acc = 0.0;
    std::size_t pick = ctx.support.size() - 1;
    for (std::size_t j = 0; j < ctx.probs.size(); ++j) {
      acc += ctx.probs[j];
      if (u < acc) {
        pick = j;
        break;
      }
    }
    for (int k = 0; k < d; ++k) out[k] = ctx.support[pick][k];
  }
}

namespace {

// One trajectory; records rows into `data` at trajectory index i when data is
// non-null, and returns the realized total reward. Draw order per timestep is
// fixed (context, action, outcome) so seeds pin byte-identical output.
double roll_one(const PricingConfig& cfg, const PolicySpec& policy, Rng& rng,
                Dataset* data, int i, double* xbuf) {
  int s = cfg.capacity;
  double total = 0.0;
  for (int t = 0; t < cfg.horizon; ++t) {
    draw_context(cfg, rng, xbuf);
    std::span<const double> x{xbuf, static_cast<std::size_t>(cfg.dim())};
    int a = rng.bernoulli(action1_prob(policy, t, s, x)) ? 1 : 0;
    int y = rng.bernoulli(true_outcome_prob(cfg, x, a)) ? 1 : 0;
    double r = reward(cfg, s, a, y);
    if (data != nullptr) {
      int row = data->idx(i, t);
      data->s[row] = s;
      data->a[row] = a;
      data->y[row] = y;
      data->r[row] = r;
      for (int k = 0; k < data->dim; ++k)
        data->x[static_cast<std::size_t>(row) * data->dim + k] = xbuf[k];
    }
    total += r;
    s = step(s, y);
  }
  return total;
}

}  // namespace

Dataset simulate(const PricingConfig& cfg, const PolicySpec& policy, int n,
                 std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("simulate: n must be >= 1");
  validate(cfg);
  Dataset data;
  data.n = n;
  data.T = cfg.horizon;
  data.dim = cfg.dim();
  data.x.resize(static_cast<std::size_t>(data.rows()) * data.dim);
  data.s.resize(data.rows());
  data.a.resize(data.rows());
  data.y.resize(data.rows());
  data.r.resize(data.rows());
  std::vector<double> xbuf(data.dim);
  for (int i = 0; i < n; ++i) {
    Rng rng(subseed(seed, {static_cast<std::uint64_t>(i)}));
    roll_one(cfg, policy, rng, &data, i, xbuf.data());
  }
  return data;
}

ValueEstimate monte_carlo_value(const PricingConfig& cfg, const PolicySpec& policy,
                                long long n_rollouts, std::uint64_t seed) {
  if (n_rollouts < 2) throw std::invalid_argument("monte_carlo_value: need >= 2 rollouts");
  validate(cfg);
  MeanVar acc;
  std::vector<double> xbuf(cfg.dim());
  for (long long i = 0; i < n_rollouts; ++i) {
    Rng rng(subseed(seed, {static_cast<std::uint64_t>(i)}));
    acc.add(roll_one(cfg, policy, rng, nullptr, 0, xbuf.data()));
  }
  return {acc.mean, acc.stderr_mean(), acc.n};
}

}  // namespace sope
