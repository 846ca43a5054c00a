#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sope/analysis.hpp"
#include "sope/config.hpp"
#include "sope/marginal.hpp"

namespace sope {

inline constexpr const char* kCodeVersion = "0.1.0";

// Model-error histogram resolution used by the analyze command.
inline constexpr int kHistBins = 40;
inline constexpr long long kHistSamples = 20000;

// Orchestration settings for the empirical protocol: estimator error and
// learned-policy value over a log grid of sample sizes, averaged over seeded
// replications.
struct ExperimentConfig {
  PricingConfig env;
  std::vector<long long> grid{50, 100, 250, 500, 1000, 2500, 5000};
  int replications = 48;
  std::vector<Mode> modes{Mode::kDM, Mode::kIPW, Mode::kDR};
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";
};

// Throws std::invalid_argument on an invalid environment, empty grid,
// nonpositive sample sizes, replications < 1, or an empty / oracle-containing
// mode list.
void validate(const ExperimentConfig& cfg);

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::string& path);

// One off-policy-evaluation replication: the pooled estimate of the
// evaluation policy's value against the Monte Carlo ground truth.
struct OpeRow {
  std::string mode;
  long long n = 0;
  int rep = 0;
  std::uint64_t seed = 0;  // replication substream seed
  double estimate = 0.0;
  double oracle_value = 0.0;
  double rel_abs_error = 0.0;
  std::string status = "ok";
};

// One policy-learning replication: out-of-sample value of the learned
// thresholds against the optimal-policy value.
struct LearnRow {
  std::string mode;
  long long n = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  double oos_value = 0.0;
  double oracle_value = 0.0;
  double oracle_gap = 0.0;  // oracle_value - oos_value
  std::string status = "ok";
};

// Replication r draws everything from subseed(master_seed, {r}), so results
// are invariant to the worker count and common random numbers pair the modes
// and nest the sample sizes (the N-row dataset is a prefix of the 2N-row
// one). Failed replications carry their error in `status` and NaN metrics.
// Rows come back sorted by (mode order in config, n, rep).
std::vector<OpeRow> run_ope(const ExperimentConfig& cfg, int workers = 1);
std::vector<LearnRow> run_learn(const ExperimentConfig& cfg, int workers = 1);

// Threshold diagnostics on one dataset of max(grid) trajectories (replication
// 0's stream): plug-in (direct method) thresholds against the oracle's, the
// single-step persistence condition at the last decision's full-inventory
// cell, and the fitted model's error histogram.
struct AnalyzeResult {
  ThresholdReport report;
  long long fit_n = 0;
  double oracle_value = 0.0;  // optimal value at (t = 0, s = s0)
};

AnalyzeResult run_analyze(const ExperimentConfig& cfg);

// Writers. Doubles use 17 significant digits, so equal results give
// byte-identical files; non-finite values print as nan/inf/-inf.
void write_ope_csv(const std::vector<OpeRow>& rows, const std::string& path);
void write_learn_csv(const std::vector<LearnRow>& rows, const std::string& path);
void write_threshold_csv(const ThresholdReport& report, const std::string& path);
void write_histogram_csv(const Histogram& hist, const std::string& path);

// Provenance record written next to every command's outputs.
nlohmann::json manifest(const ExperimentConfig& cfg, const std::string& command,
                        const std::vector<std::pair<std::string, long long>>& outputs);

// Subcommand bodies. Each writes its files under cfg.output_dir (simulate
// takes an explicit file path) plus manifest.json, and returns 0 on success.
// Filesystem or configuration problems surface as exceptions.
int cmd_simulate(const ExperimentConfig& cfg, const std::string& out_path);
int cmd_ope(const ExperimentConfig& cfg, int workers);
int cmd_learn(const ExperimentConfig& cfg, int workers);
int cmd_analyze(const ExperimentConfig& cfg);

// Argument parsing and dispatch for the `pricing` binary. Returns the
// process exit code: 0 success, 2 usage/configuration errors, 1 runtime
// failures (with a diagnostic line on stderr).
int main_cli(int argc, const char* const* argv);

}  // namespace sope
