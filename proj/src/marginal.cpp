#include "sope/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "sope/env.hpp"
#include "sope/math_util.hpp"
#include "sope/rng.hpp"

namespace sope {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Neumaier compensated sum. Pooled score sums can mix O(1/eps)-sized IPW terms
// with O(1) model terms over 10^5+ rows; naive accumulation would erode the
// sum-to-one identity past the 1e-10 the transition contract promises.
struct KahanSum {
  double s = 0.0;
  double c = 0.0;
  void add(double x) {
    double t = s + x;
    c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
    s = t;
  }
  double value() const { return s + c; }
};

std::size_t score_index(int T, int i, int t, int a, int y) {
  return (static_cast<std::size_t>(i) * T + t) * 4 + static_cast<std::size_t>(a) * 2 + y;
}

// Shared score-table assembly. `prop_obs(row)` returns the (clipped) propensity
// of the observed action; `mu(row, a, y)` the outcome model. `count_clips`
// reports how many rows had a binding propensity clip (-1: not applicable).
template <typename PropFn, typename MuFn>
ScoreTable assemble_scores(const Dataset& data, Mode mode, bool drop_post_stockout,
                           const PropFn& prop_obs, const MuFn& mu, long long clip_count) {
  if (mode == Mode::kOracle) {
    throw std::invalid_argument("build_scores: oracle is not a data-driven mode");
  }
  ScoreTable out;
  out.n = data.n;
  out.T = data.T;
  out.mode = mode;
  out.gamma.assign(static_cast<std::size_t>(data.rows()) * 4, 0.0);
  out.rows.assign(static_cast<std::size_t>(data.rows()), 1);

  const bool use_prop = mode != Mode::kDM;
  const bool use_mu = mode != Mode::kIPW;

  long long included = 0;
  for (int i = 0; i < data.n; ++i) {
    for (int t = 0; t < data.T; ++t) {
      int row = data.idx(i, t);
      if (drop_post_stockout && data.s[row] == 0) {
        out.rows[row] = 0;
        continue;
      }
      ++included;
      int aobs = data.a[row];
      int yobs = data.y[row];
      double inv_e = use_prop ? 1.0 / prop_obs(row) : 0.0;
      for (int a = 0; a < 2; ++a) {
        if (use_mu) {
          // DR / DM. The two outcome entries are complements in exact
          // arithmetic; computing y=0 as 1 - Gamma(1|a) keeps the
          // normalization identity exact in floating point as well.
          double g1 = mu(row, a, 1);
          if (use_prop && a == aobs) {
            g1 += ((yobs == 1 ? 1.0 : 0.0) - mu(row, aobs, 1)) * inv_e;
          }
          out.gamma[score_index(data.T, i, t, a, 1)] = g1;
          out.gamma[score_index(data.T, i, t, a, 0)] = 1.0 - g1;
        } else {
          // IPW: indicator terms only; the y-sum is 1[A=a]/e, not 1.
          double w = a == aobs ? inv_e : 0.0;
          out.gamma[score_index(data.T, i, t, a, 1)] = yobs == 1 ? w : 0.0;
          out.gamma[score_index(data.T, i, t, a, 0)] = yobs == 0 ? w : 0.0;
        }
      }
    }
  }
  if (included == 0) throw std::invalid_argument("build_scores: no rows to pool");
  if (clip_count >= 0 && use_prop) {
    out.clip_fraction = static_cast<double>(clip_count) / static_cast<double>(included);
  }
  return out;
}

}  // namespace

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::kDM: return "dm";
    case Mode::kIPW: return "ipw";
    case Mode::kDR: return "dr";
    case Mode::kDRNonpara: return "drnp";
    case Mode::kOracle: return "oracle";
  }
  throw std::invalid_argument("mode_name: unknown mode");
}

Mode mode_from_name(const std::string& name) {
  if (name == "dm") return Mode::kDM;
  if (name == "ipw") return Mode::kIPW;
  if (name == "dr") return Mode::kDR;
  if (name == "drnp") return Mode::kDRNonpara;
  if (name == "oracle") return Mode::kOracle;
  throw std::invalid_argument("mode_from_name: unknown mode '" + name + "'");
}

long long ScoreTable::included_rows() const {
  long long c = 0;
  for (std::uint8_t b : rows) c += b;
  return c;
}

ScoreTable build_scores(const Dataset& data, const NuisanceSet& nuisances, Mode mode,
                        bool drop_post_stockout) {
  long long clips = 0;
  if (mode != Mode::kDM) {
    for (int i = 0; i < data.n; ++i) {
      for (int t = 0; t < data.T; ++t) {
        int row = data.idx(i, t);
        if (drop_post_stockout && data.s[row] == 0) continue;
        double raw = nuisances.predict_propensity_raw(data, i, t, data.a[row]);
        if (raw < nuisances.clip_eps || raw > 1.0 - nuisances.clip_eps) ++clips;
      }
    }
  }
  auto prop = [&](int row) {
    return nuisances.predict_propensity(data, row / data.T, row % data.T, data.a[row]);
  };
  auto mu = [&](int row, int a, int y) {
    return nuisances.predict_outcome(data, row / data.T, row % data.T, a, y);
  };
  return assemble_scores(data, mode, drop_post_stockout, prop, mu, clips);
}

ScoreTable build_scores(const Dataset& data, const NuisancePredictor& nuisances, Mode mode,
                        bool drop_post_stockout) {
  auto prop = [&](int row) {
    return nuisances.propensity(data, row / data.T, row % data.T, data.a[row]);
  };
  auto mu = [&](int row, int a, int y) {
    return nuisances.outcome(data, row / data.T, row % data.T, a, y);
  };
  return assemble_scores(data, mode, drop_post_stockout, prop, mu, -1);
}

std::array<double, 2> MarginalTransition::recursion_probs() const {
  double c0 = std::clamp(probs[0], 0.0, 1.0);
  double c1 = std::clamp(probs[1], 0.0, 1.0);
  double z = c0 + c1;
  if (z <= 0.0) return {1.0, 0.0};  // degenerate: treat as a certain no-sale
  return {c0 / z, c1 / z};
}

MarginalTransition estimate_transition(const SingleStepPolicy& action1,
                                       const ScoreTable& scores, const Dataset& data) {
  if (scores.n != data.n || scores.T != data.T) {
    throw std::invalid_argument("estimate_transition: score table does not match dataset");
  }
  std::vector<double> p1(static_cast<std::size_t>(scores.n) * scores.T, 0.0);
  for (int i = 0; i < scores.n; ++i) {
    for (int t = 0; t < scores.T; ++t) {
      if (!scores.included(i, t)) continue;
      p1[static_cast<std::size_t>(i) * scores.T + t] = action1(data.xrow(i, t));
    }
  }
  return estimate_transition_rows(p1, scores, data);
}

MarginalTransition estimate_transition_rows(std::span<const double> action1_by_row,
                                            const ScoreTable& scores, const Dataset& data) {
  if (scores.n != data.n || scores.T != data.T) {
    throw std::invalid_argument("estimate_transition: score table does not match dataset");
  }
  if (action1_by_row.size() != static_cast<std::size_t>(scores.n) * scores.T) {
    throw std::invalid_argument("estimate_transition: row policy size mismatch");
  }
  MarginalTransition out;
  out.mode = scores.mode;
  KahanSum g[2][2];
  long long m = 0;
  for (int i = 0; i < scores.n; ++i) {
    for (int t = 0; t < scores.T; ++t) {
      if (!scores.included(i, t)) continue;
      ++m;
      double p1 = action1_by_row[static_cast<std::size_t>(i) * scores.T + t];
      double pi[2] = {1.0 - p1, p1};
      for (int a = 0; a < 2; ++a) {
        if (pi[a] == 0.0) continue;
        g[a][0].add(pi[a] * scores.at(i, t, a, 0));
        g[a][1].add(pi[a] * scores.at(i, t, a, 1));
      }
    }
  }
  if (m == 0) throw std::invalid_argument("estimate_transition: no pooled rows");
  double inv_m = 1.0 / static_cast<double>(m);
  for (int a = 0; a < 2; ++a) {
    for (int y = 0; y < 2; ++y) out.action_outcome[a][y] = g[a][y].value() * inv_m;
  }
  // Self-normalize by the pooled mass so probs sum to one in every mode. For
  // DR/DM the per-row mass is identically one and this is a no-op up to the
  // last bit; for IPW it yields the usual self-normalized weighting.
  double z = out.action_outcome[0][0] + out.action_outcome[0][1] +
             out.action_outcome[1][0] + out.action_outcome[1][1];
  if (z > 0.0 && std::isfinite(z)) {
    for (int a = 0; a < 2; ++a) {
      for (int y = 0; y < 2; ++y) out.action_outcome[a][y] /= z;
    }
  }
  out.probs = {out.action_outcome[0][0] + out.action_outcome[1][0],
               out.action_outcome[0][1] + out.action_outcome[1][1]};
  out.clipped = out.probs[0] < 0.0 || out.probs[0] > 1.0 || out.probs[1] < 0.0 ||
                out.probs[1] > 1.0;
  return out;
}

ContextOracle::ContextOracle(const PricingConfig& cfg, long long gaussian_draws,
                             std::uint64_t seed)
    : cfg_(cfg), dim_(cfg.dim()) {
  validate(cfg_);
  if (cfg_.context.kind == ContextSpec::Kind::kFinite) {
    exact_ = true;
    auto m = static_cast<long long>(cfg_.context.support.size());
    xs_.reserve(static_cast<std::size_t>(m) * dim_);
    for (const auto& pt : cfg_.context.support) {
      xs_.insert(xs_.end(), pt.begin(), pt.end());
    }
    w_ = cfg_.context.probs;
  } else {
    if (gaussian_draws < 1) {
      throw std::invalid_argument("ContextOracle: need at least one draw");
    }
    exact_ = false;
    Rng rng(subseed(seed, {0x0a11eULL}));
    xs_.resize(static_cast<std::size_t>(gaussian_draws) * dim_);
    for (long long j = 0; j < gaussian_draws; ++j) {
      draw_context(cfg_, rng, xs_.data() + j * dim_);
    }
    w_.assign(static_cast<std::size_t>(gaussian_draws),
              1.0 / static_cast<double>(gaussian_draws));
  }
  mu0_.resize(w_.size());
  mu1_.resize(w_.size());
  for (std::size_t j = 0; j < w_.size(); ++j) {
    std::span<const double> x{xs_.data() + j * dim_, static_cast<std::size_t>(dim_)};
    mu0_[j] = true_outcome_prob(cfg_, x, 0);
    mu1_[j] = true_outcome_prob(cfg_, x, 1);
  }
}

MarginalTransition ContextOracle::transition(const SingleStepPolicy& action1) const {
  MarginalTransition out;
  out.mode = Mode::kOracle;
  KahanSum g[2][2];
  MeanVar sale;  // per-draw P(Y=1|pi) integrand, for the MC stderr
  for (std::size_t j = 0; j < w_.size(); ++j) {
    double p1 = action1(context(static_cast<long long>(j)));
    double pi[2] = {1.0 - p1, p1};
    double mu[2] = {mu0_[j], mu1_[j]};
    for (int a = 0; a < 2; ++a) {
      g[a][1].add(w_[j] * pi[a] * mu[a]);
      g[a][0].add(w_[j] * pi[a] * (1.0 - mu[a]));
    }
    if (!exact_) sale.add(pi[0] * mu[0] + pi[1] * mu[1]);
  }
  for (int a = 0; a < 2; ++a) {
    for (int y = 0; y < 2; ++y) out.action_outcome[a][y] = g[a][y].value();
  }
  out.probs = {out.action_outcome[0][0] + out.action_outcome[1][0],
               out.action_outcome[0][1] + out.action_outcome[1][1]};
  if (!exact_) out.mc_stderr = sale.stderr_mean();
  return out;
}

MarginalTransition oracle_transition(const SingleStepPolicy& action1, const PricingConfig& cfg,
                                     long long gaussian_draws, std::uint64_t seed) {
  return ContextOracle(cfg, gaussian_draws, seed).transition(action1);
}

TransitionProvider score_provider(const ScoreTable& scores, const Dataset& data) {
  return [sp = &scores, dp = &data](int, int, const SingleStepPolicy& slice) {
    return estimate_transition(slice, *sp, *dp);
  };
}

TransitionProvider oracle_provider(const ContextOracle& oracle) {
  return [op = &oracle](int, int, const SingleStepPolicy& slice) {
    return op->transition(slice);
  };
}

ValueTable evaluate_policy(const TransitionProvider& provider, const PolicySpec& policy,
                           const PricingConfig& cfg) {
  ValueTable vt;
  vt.T = cfg.horizon;
  vt.capacity = cfg.capacity;
  vt.v.assign(static_cast<std::size_t>(vt.T + 1) * (vt.capacity + 1), 0.0);
  for (int t = vt.T - 1; t >= 0; --t) {
    for (int s = 1; s <= vt.capacity; ++s) {
      MarginalTransition tr = provider(t, s, policy_slice(policy, t, s));
      std::array<double, 2> pr = tr.recursion_probs();
      double rr = std::max(0.0, tr.reward_rate(cfg.prices));
      vt.at(t, s) = rr + pr[0] * vt.at(t + 1, s) + pr[1] * vt.at(t + 1, s - 1);
    }
  }
  return vt;
}

ValueTable oracle_value(const PolicySpec& policy, const PricingConfig& cfg,
                        const ContextOracle& oracle) {
  return evaluate_policy(oracle_provider(oracle), policy, cfg);
}

OptimalPolicy oracle_optimal(const PricingConfig& cfg, const ContextOracle& oracle) {
  OptimalPolicy out;
  out.value.T = cfg.horizon;
  out.value.capacity = cfg.capacity;
  out.value.v.assign(static_cast<std::size_t>(cfg.horizon + 1) * (cfg.capacity + 1), 0.0);
  out.theta.assign(static_cast<std::size_t>(cfg.horizon),
                   std::vector<double>(static_cast<std::size_t>(cfg.capacity) + 1, kInf));
  long long m = oracle.size();
  for (int t = cfg.horizon - 1; t >= 0; --t) {
    for (int s = 1; s <= cfg.capacity; ++s) {
      double dv = out.value.at(t + 1, s - 1) - out.value.at(t + 1, s);
      double c0 = cfg.prices[0] + dv;
      double c1 = cfg.prices[1] + dv;
      // Pointwise maximum over the context pool; exact on finite supports.
      double best = 0.0;
      for (long long j = 0; j < m; ++j) {
        best += oracle.weight(j) * std::max(oracle.mu(j, 1) * c1, oracle.mu(j, 0) * c0);
      }
      out.value.at(t, s) = out.value.at(t + 1, s) + best;
      out.theta[t][s] = c1 > 1e-12 ? c0 / c1 : -kInf;
    }
  }
  return out;
}

double true_ratio(const PricingConfig& cfg, std::span<const double> x) {
  double mu0 = true_outcome_prob(cfg, x, 0);
  double mu1 = true_outcome_prob(cfg, x, 1);
  return mu1 / std::max(mu0, 1e-300);
}

}  // namespace sope
