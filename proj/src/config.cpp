#include "sope/config.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace sope {

int ContextSpec::dim() const {
  if (kind == Kind::kGaussian) return static_cast<int>(mean.size());
  return support.empty() ? 0 : static_cast<int>(support.front().size());
}

ContextSpec ContextSpec::gaussian(std::vector<double> mean) {
  ContextSpec c;
  c.kind = Kind::kGaussian;
  c.mean = std::move(mean);
  return c;
}

ContextSpec ContextSpec::finite(std::vector<std::vector<double>> support,
                                std::vector<double> probs) {
  ContextSpec c;
  c.kind = Kind::kFinite;
  c.support = std::move(support);
  c.probs = std::move(probs);
  return c;
}

void validate(const PricingConfig& cfg) {
  if (cfg.horizon < 1) throw std::invalid_argument("config: horizon must be >= 1");
  if (cfg.capacity < 0) throw std::invalid_argument("config: capacity must be >= 0");
  if (!(cfg.prices[1] > cfg.prices[0]) || cfg.prices[0] < 0.0)
    throw std::invalid_argument("config: need prices[1] > prices[0] >= 0");
  if (cfg.delta < 0.0 || cfg.delta > 1.0)
    throw std::invalid_argument("config: delta must lie in [0,1]");
  if (static_cast<int>(cfg.beta.size()) != cfg.context.dim())
    throw std::invalid_argument("config: beta dimension != context dimension");
  if (cfg.context.kind == ContextSpec::Kind::kFinite) {
    if (cfg.context.support.empty() ||
        cfg.context.support.size() != cfg.context.probs.size())
      throw std::invalid_argument("config: finite support/probs size mismatch");
    double total = 0.0;
    for (double p : cfg.context.probs) {
      if (p < 0.0) throw std::invalid_argument("config: negative support probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("config: finite probs must sum to 1");
    for (const auto& pt : cfg.context.support)
      if (static_cast<int>(pt.size()) != cfg.context.dim())
        throw std::invalid_argument("config: ragged finite support");
  }
}

nlohmann::json to_json(const ContextSpec& ctx) {
  nlohmann::json j;
  if (ctx.kind == ContextSpec::Kind::kGaussian) {
    j["type"] = "gaussian";
    j["mean"] = ctx.mean;
  } else {
    j["type"] = "finite";
    j["support"] = ctx.support;
    j["probs"] = ctx.probs;
  }
  return j;
}

nlohmann::json to_json(const PricingConfig& cfg) {
  nlohmann::json j;
  j["horizon"] = cfg.horizon;
  j["capacity"] = cfg.capacity;
  j["prices"] = cfg.prices;
  j["beta"] = cfg.beta;
  j["beta0"] = cfg.beta0;
  j["delta"] = cfg.delta;
  j["behavior_scale"] = cfg.behavior_scale;
  j["eval_scale"] = cfg.eval_scale;
  j["context"] = to_json(cfg.context);
  return j;
}

ContextSpec context_from_json(const nlohmann::json& j) {
  ContextSpec ctx;
  std::string type = j.value("type", "gaussian");
  if (type == "gaussian") {
    ctx.kind = ContextSpec::Kind::kGaussian;
    ctx.mean = j.value("mean", std::vector<double>{0.0, 0.0});
  } else if (type == "finite") {
    ctx.kind = ContextSpec::Kind::kFinite;
    ctx.support = j.at("support").get<std::vector<std::vector<double>>>();
    ctx.probs = j.at("probs").get<std::vector<double>>();
  } else {
    throw std::invalid_argument("config: unknown context type '" + type + "'");
  }
  return ctx;
}

PricingConfig config_from_json(const nlohmann::json& j) {
  PricingConfig cfg;
  cfg.horizon = j.value("horizon", cfg.horizon);
  cfg.capacity = j.value("capacity", cfg.capacity);
  if (j.contains("prices")) {
    auto p = j.at("prices").get<std::vector<double>>();
    if (p.size() != 2) throw std::invalid_argument("config: prices must have 2 entries");
    cfg.prices = {p[0], p[1]};
  }
  cfg.beta = j.value("beta", cfg.beta);
  cfg.beta0 = j.value("beta0", cfg.beta0);
  cfg.delta = j.value("delta", cfg.delta);
  cfg.behavior_scale = j.value("behavior_scale", cfg.behavior_scale);
  cfg.eval_scale = j.value("eval_scale", cfg.eval_scale);
  if (j.contains("context")) cfg.context = context_from_json(j.at("context"));
  validate(cfg);
  return cfg;
}

PricingConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return config_from_json(j);
}

std::string config_hash(const PricingConfig& cfg) {
  std::string dump = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace sope
