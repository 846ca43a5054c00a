#include "sope/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "sope/env.hpp"
#include "sope/folds.hpp"
#include "sope/learn.hpp"
#include "sope/nuisance.hpp"
#include "sope/policy.hpp"
#include "sope/rng.hpp"

namespace sope {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr long long kTruthRollouts = 1000000;
constexpr long long kOosRollouts = 10000;
constexpr int kLearnQuantiles = 101;

// Substream tags within one replication stream.
constexpr std::uint64_t kFoldsTag = 1;
constexpr std::uint64_t kRolloutTag = 2;
// Run-level streams independent of any replication.
constexpr std::uint64_t kTruthTag = 0x0ddba11ULL;
constexpr std::uint64_t kHistTag = 3;

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Status text goes into one CSV cell: keep it delimiter-free.
std::string csv_safe(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
  }
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

// Runs fn(0..count-1) across a fixed-size pool pulling from a shared atomic
// counter. fn must confine its effects to its own task's slots; exceptions
// escaping fn abort the run (per-replication errors are recorded in rows
// instead of thrown).
void run_tasks(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  int k = std::clamp<int>(workers, 1, static_cast<int>(std::max<std::size_t>(count, 1)));
  if (k == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(k);
  for (int w = 0; w < k; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Everything one replication shares across modes: the logged data and the
// cross-fitted nuisances (flexible fit only when some mode needs it).
struct RepFit {
  Dataset data;
  NuisanceSet logistic;
  NuisanceSet flexible;
  bool has_flexible = false;
  std::string error;  // nonempty: the whole replication failed
};

RepFit fit_replication(const ExperimentConfig& cfg, long long n, std::uint64_t rep_seed,
                       bool need_flexible) {
  RepFit fit;
  try {
    fit.data = simulate(cfg.env, behavior_policy(cfg.env), static_cast<int>(n), rep_seed);
    FoldAssignment folds = assign_folds(static_cast<int>(n), cfg.env.horizon, 2,
                                        subseed(rep_seed, {kFoldsTag}));
    fit.logistic = fit_nuisances(fit.data, folds, cfg.env);
    if (need_flexible) {
      NuisanceFitOptions opt;
      opt.outcome_mode = OutcomeMode::kFlexible;
      fit.flexible = fit_nuisances(fit.data, folds, cfg.env, opt);
      fit.has_flexible = true;
    }
  } catch (const std::exception& e) {
    fit.error = e.what();
  }
  return fit;
}

const NuisanceSet& pick_nuisances(const RepFit& fit, Mode mode) {
  return mode == Mode::kDRNonpara ? fit.flexible : fit.logistic;
}

bool wants_flexible(const std::vector<Mode>& modes) {
  return std::find(modes.begin(), modes.end(), Mode::kDRNonpara) != modes.end();
}

void write_json(const nlohmann::json& j, const std::string& path) {
  open_out(path) << j.dump(2) << '\n';
}

}  // namespace

void validate(const ExperimentConfig& cfg) {
  validate(cfg.env);
  if (cfg.replications < 1) {
    throw std::invalid_argument("experiment: replications must be >= 1");
  }
  if (cfg.grid.empty()) throw std::invalid_argument("experiment: empty sample-size grid");
  for (long long n : cfg.grid) {
    if (n < 1 || n > 10000000) {
      throw std::invalid_argument("experiment: grid sizes must be in [1, 1e7]");
    }
  }
  if (cfg.modes.empty()) throw std::invalid_argument("experiment: no estimator modes");
  for (Mode m : cfg.modes) {
    if (m == Mode::kOracle) {
      throw std::invalid_argument("experiment: oracle is not an estimator mode");
    }
  }
  if (cfg.output_dir.empty()) throw std::invalid_argument("experiment: empty output_dir");
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json modes = nlohmann::json::array();
  for (Mode m : cfg.modes) modes.push_back(mode_name(m));
  nlohmann::json j{{"env", to_json(cfg.env)},
                   {"grid", cfg.grid},
                   {"replications", cfg.replications},
                   {"modes", modes},
                   {"output_dir", cfg.output_dir}};
  // JSON numbers are exact only up to 2^53; larger seeds ride as strings.
  if (cfg.master_seed <= (1ULL << 53)) {
    j["master_seed"] = cfg.master_seed;
  } else {
    j["master_seed"] = std::to_string(cfg.master_seed);
  }
  return j;
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (j.contains("env")) cfg.env = config_from_json(j.at("env"));
  if (j.contains("grid")) cfg.grid = j.at("grid").get<std::vector<long long>>();
  if (j.contains("replications")) cfg.replications = j.at("replications").get<int>();
  if (j.contains("modes")) {
    cfg.modes.clear();
    for (const auto& name : j.at("modes")) {
      cfg.modes.push_back(mode_from_name(name.get<std::string>()));
    }
  }
  if (j.contains("master_seed")) {
    const auto& seed = j.at("master_seed");
    cfg.master_seed = seed.is_string() ? std::stoull(seed.get<std::string>())
                                       : seed.get<std::uint64_t>();
  }
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  validate(cfg);
  return cfg;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  in >> j;
  return experiment_from_json(j);
}

std::vector<OpeRow> run_ope(const ExperimentConfig& cfg, int workers) {
  validate(cfg);
  double truth = monte_carlo_value(cfg.env, evaluation_policy(cfg.env), kTruthRollouts,
                                   subseed(cfg.master_seed, {kTruthTag}))
                     .mean;
  std::vector<long long> grid = cfg.grid;
  std::sort(grid.begin(), grid.end());  // rows merge in (mode, n, rep) order
  const std::size_t G = cfg.grid.size();
  const std::size_t R = static_cast<std::size_t>(cfg.replications);
  const std::size_t M = cfg.modes.size();
  const bool need_flexible = wants_flexible(cfg.modes);
  std::vector<OpeRow> rows(G * R * M);
  run_tasks(G * R, workers, [&](std::size_t task) {
    std::size_t gi = task / R;
    int r = static_cast<int>(task % R);
    long long n = grid[gi];
    std::uint64_t seed = subseed(cfg.master_seed, {static_cast<std::uint64_t>(r)});
    RepFit fit = fit_replication(cfg, n, seed, need_flexible);
    for (std::size_t mi = 0; mi < M; ++mi) {
      OpeRow row;
      row.mode = mode_name(cfg.modes[mi]);
      row.n = n;
      row.rep = r;
      row.seed = seed;
      row.oracle_value = truth;
      row.estimate = kNan;
      row.rel_abs_error = kNan;
      if (!fit.error.empty()) {
        row.status = fit.error;
      } else {
        try {
          ScoreTable scores = build_scores(fit.data, pick_nuisances(fit, cfg.modes[mi]),
                                           cfg.modes[mi]);
          ValueTable vt = evaluate_policy(score_provider(scores, fit.data),
                                          evaluation_policy(cfg.env), cfg.env);
          row.estimate = vt.at(0, cfg.env.capacity);
          row.rel_abs_error = std::abs(row.estimate - truth) / std::abs(truth);
        } catch (const std::exception& e) {
          row.status = e.what();
        }
      }
      rows[(mi * G + gi) * R + r] = std::move(row);
    }
  });
  return rows;
}

std::vector<LearnRow> run_learn(const ExperimentConfig& cfg, int workers) {
  validate(cfg);
  ContextOracle oracle(cfg.env);
  double vstar = oracle_optimal(cfg.env, oracle).value.at(0, cfg.env.capacity);
  std::vector<long long> grid = cfg.grid;
  std::sort(grid.begin(), grid.end());  // rows merge in (mode, n, rep) order
  const std::size_t G = cfg.grid.size();
  const std::size_t R = static_cast<std::size_t>(cfg.replications);
  const std::size_t M = cfg.modes.size();
  const bool need_flexible = wants_flexible(cfg.modes);
  std::vector<LearnRow> rows(G * R * M);
  run_tasks(G * R, workers, [&](std::size_t task) {
    std::size_t gi = task / R;
    int r = static_cast<int>(task % R);
    long long n = grid[gi];
    std::uint64_t seed = subseed(cfg.master_seed, {static_cast<std::uint64_t>(r)});
    RepFit fit = fit_replication(cfg, n, seed, need_flexible);
    for (std::size_t mi = 0; mi < M; ++mi) {
      LearnRow row;
      row.mode = mode_name(cfg.modes[mi]);
      row.n = n;
      row.rep = r;
      row.seed = seed;
      row.oracle_value = vstar;
      row.oos_value = kNan;
      row.oracle_gap = kNan;
      if (!fit.error.empty()) {
        row.status = fit.error;
      } else {
        try {
          const NuisanceSet& ns = pick_nuisances(fit, cfg.modes[mi]);
          ThresholdGrid tg = build_grid(fit.data, nuisance_ratio(ns), kLearnQuantiles);
          LearnedPolicy lp = learn_thresholds(fit.data, ns, cfg.modes[mi], tg, cfg.env);
          row.oos_value =
              out_of_sample_value(lp, cfg.env, kOosRollouts, subseed(seed, {kRolloutTag})).mean;
          row.oracle_gap = vstar - row.oos_value;
        } catch (const std::exception& e) {
          row.status = e.what();
        }
      }
      rows[(mi * G + gi) * R + r] = std::move(row);
    }
  });
  return rows;
}

AnalyzeResult run_analyze(const ExperimentConfig& cfg) {
  validate(cfg);
  ContextOracle oracle(cfg.env);
  OptimalPolicy opt = oracle_optimal(cfg.env, oracle);
  long long n = *std::max_element(cfg.grid.begin(), cfg.grid.end());
  std::uint64_t seed = subseed(cfg.master_seed, {0});

  Dataset data = simulate(cfg.env, behavior_policy(cfg.env), static_cast<int>(n), seed);
  FoldAssignment folds =
      assign_folds(static_cast<int>(n), cfg.env.horizon, 2, subseed(seed, {kFoldsTag}));
  auto set = std::make_shared<NuisanceSet>(fit_nuisances(data, folds, cfg.env));

  // Plug-in thresholds: the direct method trusts the fitted outcome model.
  ThresholdGrid tg = build_grid(data, nuisance_ratio(*set), kLearnQuantiles);
  LearnedPolicy lp = learn_thresholds(data, *set, Mode::kDM, tg, cfg.env);

  AnalyzeResult out;
  out.report = heatmap(lp, opt.theta);
  int last = cfg.env.horizon - 1;
  out.report.persistence_condition_value = persistence_condition(
      cfg.env, lp.theta[last][cfg.env.capacity], opt.theta[last][cfg.env.capacity]);
  OutcomeFn mu_hat = [set](std::span<const double> x, int a) { return set->mean_outcome1(x, a); };
  out.report.delta_hist = delta_histogram(BiasField{cfg.env, mu_hat}, 1, kHistBins, kHistSamples,
                                          subseed(cfg.master_seed, {kHistTag}));
  out.fit_n = n;
  out.oracle_value = opt.value.at(0, cfg.env.capacity);
  return out;
}

void write_ope_csv(const std::vector<OpeRow>& rows, const std::string& path) {
  auto out = open_out(path);
  out << "mode,n,rep,seed,estimate,oracle_value,rel_abs_error,status\n";
  for (const OpeRow& r : rows) {
    out << r.mode << ',' << r.n << ',' << r.rep << ',' << r.seed << ',' << num(r.estimate) << ','
        << num(r.oracle_value) << ',' << num(r.rel_abs_error) << ',' << csv_safe(r.status)
        << '\n';
  }
}

void write_learn_csv(const std::vector<LearnRow>& rows, const std::string& path) {
  auto out = open_out(path);
  out << "mode,n,rep,seed,oos_value,oracle_value,oracle_gap,status\n";
  for (const LearnRow& r : rows) {
    out << r.mode << ',' << r.n << ',' << r.rep << ',' << r.seed << ',' << num(r.oos_value) << ','
        << num(r.oracle_value) << ',' << num(r.oracle_gap) << ',' << csv_safe(r.status) << '\n';
  }
}

void write_threshold_csv(const ThresholdReport& report, const std::string& path) {
  auto out = open_out(path);
  out << "t,s,theta_star,theta_hat,gap\n";
  for (std::size_t t = 0; t < report.gap.size(); ++t) {
    for (std::size_t j = 0; j < report.gap[t].size(); ++j) {
      out << t << ',' << (j + 1) << ',' << num(report.theta_star[t][j]) << ','
          << num(report.theta_hat[t][j]) << ',' << num(report.gap[t][j]) << '\n';
    }
  }
}

void write_histogram_csv(const Histogram& hist, const std::string& path) {
  auto out = open_out(path);
  out << "bin_lo,bin_hi,count,share\n";
  for (std::size_t b = 0; b < hist.counts.size(); ++b) {
    double share = hist.total > 0 ? static_cast<double>(hist.counts[b]) /
                                        static_cast<double>(hist.total)
                                  : 0.0;
    out << num(hist.edges[b]) << ',' << num(hist.edges[b + 1]) << ',' << hist.counts[b] << ','
        << num(share) << '\n';
  }
}

nlohmann::json manifest(const ExperimentConfig& cfg, const std::string& command,
                        const std::vector<std::pair<std::string, long long>>& outputs) {
  nlohmann::json files = nlohmann::json::object();
  for (const auto& [name, rows] : outputs) files[name] = rows;
  return nlohmann::json{{"command", command},
                        {"version", kCodeVersion},
                        {"config_hash", config_hash(cfg.env)},
                        {"experiment", to_json(cfg)},
                        {"outputs", files}};
}

int cmd_simulate(const ExperimentConfig& cfg, const std::string& out_path) {
  validate(cfg);
  std::filesystem::create_directories(cfg.output_dir);
  auto parent = std::filesystem::path(out_path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  long long n = *std::max_element(cfg.grid.begin(), cfg.grid.end());
  Dataset data = simulate(cfg.env, behavior_policy(cfg.env), static_cast<int>(n),
                          subseed(cfg.master_seed, {0}));
  write_csv(data, out_path);
  write_json(manifest(cfg, "simulate", {{out_path, data.rows()}}),
             cfg.output_dir + "/manifest.json");
  std::cout << "wrote " << out_path << " (" << data.rows() << " rows)\n";
  return 0;
}

int cmd_ope(const ExperimentConfig& cfg, int workers) {
  std::filesystem::create_directories(cfg.output_dir);
  std::vector<OpeRow> rows = run_ope(cfg, workers);
  std::string path = cfg.output_dir + "/ope.csv";
  write_ope_csv(rows, path);
  write_json(manifest(cfg, "ope", {{path, static_cast<long long>(rows.size())}}),
             cfg.output_dir + "/manifest.json");
  std::cout << "wrote " << path << " (" << rows.size() << " rows)\n";
  return 0;
}

int cmd_learn(const ExperimentConfig& cfg, int workers) {
  std::filesystem::create_directories(cfg.output_dir);
  std::vector<LearnRow> rows = run_learn(cfg, workers);
  std::string path = cfg.output_dir + "/learn.csv";
  write_learn_csv(rows, path);
  write_json(manifest(cfg, "learn", {{path, static_cast<long long>(rows.size())}}),
             cfg.output_dir + "/manifest.json");
  std::cout << "wrote " << path << " (" << rows.size() << " rows)\n";
  return 0;
}

int cmd_analyze(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  AnalyzeResult res = run_analyze(cfg);
  std::string thresholds = cfg.output_dir + "/thresholds.csv";
  std::string hist = cfg.output_dir + "/delta_hist.csv";
  std::string summary = cfg.output_dir + "/threshold_summary.json";
  write_threshold_csv(res.report, thresholds);
  write_histogram_csv(res.report.delta_hist, hist);
  long long cells = 0;
  for (const auto& row : res.report.gap) cells += static_cast<long long>(row.size());
  write_json(nlohmann::json{{"persistence_condition_value", res.report.persistence_condition_value},
                            {"share_hat_below_star_s_gt2", res.report.share_hat_below_star_s_gt2},
                            {"fit_n", res.fit_n},
                            {"oracle_value", res.oracle_value},
                            {"horizon", cfg.env.horizon},
                            {"capacity", cfg.env.capacity}},
             summary);
  write_json(manifest(cfg, "analyze",
                      {{thresholds, cells},
                       {hist, static_cast<long long>(res.report.delta_hist.counts.size())},
                       {summary, 1}}),
             cfg.output_dir + "/manifest.json");
  std::cout << "wrote " << thresholds << ", " << hist << ", " << summary << '\n';
  return 0;
}

namespace {

void usage(std::ostream& out) {
  out << "usage: pricing <simulate|ope|learn|analyze> [flags]\n"
         "  --config <json>  experiment config file (defaults apply otherwise)\n"
         "  --out <dir>      output directory (default: out)\n"
         "  --seed <u64>     master seed override\n"
         "  --workers <k>    parallel replications (default: 1)\n"
         "  --modes <list>   comma-separated subset of dm,ipw,dr,drnp\n"
         "  --delta <real>   demand-mixture weight override\n";
}

std::vector<Mode> parse_modes(const std::string& list) {
  std::vector<Mode> modes;
  std::string cur;
  for (char c : list + ",") {
    if (c == ',') {
      if (!cur.empty()) modes.push_back(mode_from_name(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (modes.empty()) throw std::invalid_argument("--modes: empty mode list");
  return modes;
}

}  // namespace

int main_cli(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty()) {
    usage(std::cerr);
    return 2;
  }
  std::string command = args[0];
  if (command == "help" || command == "--help" || command == "-h") {
    usage(std::cout);
    return 0;
  }
  if (command != "simulate" && command != "ope" && command != "learn" && command != "analyze") {
    std::cerr << "error: unknown command '" << command << "'\n";
    usage(std::cerr);
    return 2;
  }

  ExperimentConfig cfg;
  int workers = 1;
  try {
    // --config loads first so explicit flags override the file.
    for (std::size_t i = 1; i < args.size(); i += 2) {
      if (i + 1 >= args.size()) {
        throw std::invalid_argument("flag " + args[i] + " is missing its value");
      }
      if (args[i] == "--config") cfg = load_experiment(args[i + 1]);
    }
    for (std::size_t i = 1; i < args.size(); i += 2) {
      const std::string& flag = args[i];
      const std::string& value = args[i + 1];
      if (flag == "--config") {
        continue;
      } else if (flag == "--out") {
        cfg.output_dir = value;
      } else if (flag == "--seed") {
        std::size_t used = 0;
        if (value.empty() || value[0] == '-') {
          throw std::invalid_argument("--seed: not an unsigned integer: " + value);
        }
        cfg.master_seed = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument("--seed: not an integer: " + value);
      } else if (flag == "--workers") {
        workers = std::stoi(value);
        if (workers < 1) throw std::invalid_argument("--workers: must be >= 1");
      } else if (flag == "--modes") {
        cfg.modes = parse_modes(value);
      } else if (flag == "--delta") {
        std::size_t used = 0;
        cfg.env.delta = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("--delta: not a number: " + value);
      } else {
        throw std::invalid_argument("unknown flag: " + flag);
      }
    }
    validate(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    usage(std::cerr);
    return 2;
  }

  try {
    if (command == "simulate") {
      return cmd_simulate(cfg, cfg.output_dir + "/trajectories.csv");
    }
    if (command == "ope") return cmd_ope(cfg, workers);
    if (command == "learn") return cmd_learn(cfg, workers);
    return cmd_analyze(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace sope
