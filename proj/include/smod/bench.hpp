#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smod/algorithms.hpp"
#include "smod/stability.hpp"

namespace smod {

// Config grammar: one `key = value` per line, `#` starts a comment, lists are
// comma separated. Later keys override earlier ones.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::istream& is);
KeyValues load_key_values(const std::string& path);

// Dataset names: synthetic_pr, synthetic_bd, zipcode, absolute_linear, instance.
struct ExperimentConfig {
  std::string dataset = "synthetic_pr";
  GenSpec gen;                      // n, d, kappa, p_fail, noise_std, seed (= data_seed)
  std::string image_path;           // zipcode
  int blocks = 3;                   // zipcode sign blocks
  std::string instance_path;        // dataset = instance
  std::vector<Algorithm> algorithms{Algorithm::SmodMB};
  std::vector<ModelKind> kinds{ModelKind::ProxLinear};
  std::vector<double> alpha0;       // explicit grid; overrides the range
  double alpha0_min = 0.0;          // 0 selects the dataset default
  double alpha0_max = 0.0;
  int alpha0_count = 10;
  std::vector<int> m{1};
  std::vector<double> beta;         // empty selects the dataset default for momentum runs
  int epochs = 0;                   // 0 selects 200 (minibatch) or 400 (momentum)
  int seeds = 1;                    // repetitions per cell
  std::uint64_t seed = 0;           // base seed of the per-run batch streams
  double threshold = 1.5;           // <= 0 runs the full horizon
  double threshold_floor = 0.0;
  std::string out = "out";
  int threads = 1;
  bool fresh_data_per_run = false;
  bool traces = false;              // per-run trace CSVs under out/traces
  int record_every = 0;             // 0: one row per epoch

  static ExperimentConfig from_key_values(const KeyValues& kv);
  void validate() const;
  bool momentum() const;
  std::vector<double> alpha0_grid() const;
  std::vector<double> beta_grid(Algorithm algorithm) const;
  int epoch_cap() const;
};

std::vector<double> log_grid(double lo, double hi, int count);

ProblemInstance build_instance(const ExperimentConfig& config, std::uint64_t data_seed);

struct RunCell {
  Algorithm algorithm = Algorithm::SmodMB;
  ModelKind kind = ModelKind::ProxLinear;
  double alpha0 = 1.0;
  int m = 1;
  double beta = 0.0;
  int rep = 0;

  std::string key() const;
};

std::vector<RunCell> expand_grid(const ExperimentConfig& config);
std::uint64_t run_seed(const ExperimentConfig& config, int rep);
SolverConfig solver_config(const ExperimentConfig& config, const ProblemInstance& instance,
                           const RunCell& cell);

const std::vector<std::string>& result_columns();

struct ExperimentSummary {
  int cells = 0;
  int skipped = 0;   // already present in the results file
  int executed = 0;
  int failed = 0;
  std::string results_path;
};

// Runs every grid cell not already present in <out>/results.csv and appends
// one row per cell in grid order.
ExperimentSummary run_experiment(const ExperimentConfig& config);

using ResultRow = std::map<std::string, std::string>;
std::vector<ResultRow> read_results(const std::string& path);
std::vector<ResultRow> read_results(std::istream& is);

struct SpeedupEntry {
  std::string algorithm;
  std::string kind;
  double beta = 0.0;
  int m = 1;
  double best_alpha0 = 0.0;
  double t_star = 0.0;   // min over alpha0 of the mean stopping iteration
  double speedup = 1.0;  // T*_1 / T*_m
};

// Capped runs count as the largest iteration cap within their (algorithm,
// kind, beta) group, so an all-capped group has speedup 1 everywhere.
std::vector<SpeedupEntry> speedup_table(const std::vector<ResultRow>& rows);
void write_speedup(std::ostream& os, const std::vector<SpeedupEntry>& table);

// Mean (over repetitions) number of alpha0 grid points whose run reached the threshold.
struct RobustnessEntry {
  std::string algorithm;
  std::string kind;
  double beta = 0.0;
  int m = 1;
  double mean_hits = 0.0;
  int grid_points = 0;
};
std::vector<RobustnessEntry> robustness_table(const std::vector<ResultRow>& rows);

struct StationarityRow {
  int k = 0;
  double objective = 0.0;
  double grad_x = 0.0;
  double grad_z = 0.0;
};

// Evaluates |grad f_{1/rho}| at x^k and z^k for k = first, first + stride, ...
// up to the last step taken. The record must hold every iterate (keep_iterates).
std::vector<StationarityRow> stationarity_trace(const ProblemInstance& instance,
                                                const RunRecord& record, double rho, int stride,
                                                double tol = 1e-8);
void write_stationarity(std::ostream& os, const std::vector<StationarityRow>& rows);

// Writes each checkpointed iterate, reshaped column-major into a square
// matrix, to <dir>/iterate_<k>.txt. Returns the written paths.
std::vector<std::string> recover_dump(const RunRecord& record, const std::vector<int>& checkpoints,
                                      const std::string& dir);

struct StabilityConfig {
  ExperimentConfig data;
  std::vector<ModelKind> kinds{ModelKind::Linear, ModelKind::ProxLinear};
  std::vector<int> m{1, 4, 16};
  double gamma = 0.0;         // 0: three times the model curvature plus lambda
  int trials = 1000;
  int gap_trials = 0;         // > 0 adds the expectation-gap estimate per cell
  bool identical = false;
  double tol = 1e-8;
  std::uint64_t seed = 0;

  static StabilityConfig from_key_values(const KeyValues& kv);
};

struct StabilityCell {
  ModelKind kind;
  int m;
  double gamma;
  StabilityReport report;
};

// Writes <out>/stability_trials.csv (one row per trial) and
// <out>/stability_summary.csv (one row per kind and m).
std::vector<StabilityCell> stability_command(const StabilityConfig& config);

}  // namespace smod
