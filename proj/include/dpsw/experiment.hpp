#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpsw/estimator.hpp"

namespace dpsw {

// One (replication, mode) outcome. Attribution values are NaN where the mode
// has no matching encoder (e.g. psw_separate has no instrument encoder).
struct SeedModeResult {
  int seed_index = 0;
  std::uint64_t data_seed = 0;
  Mode mode = Mode::dpsw;
  bool ok = true;
  std::string error;
  double pehe = 0.0;
  double att_gamma = 0.0;
  double att_delta = 0.0;
  double att_upsilon = 0.0;
  int degenerate_fallbacks = 0;
  int best_round = 0;
  double best_val = 0.0;
  std::vector<double> xi_trace;  // per-round mean fitted shape (NaN: no fit that round)
};

struct AggregateRow {
  Mode mode = Mode::dpsw;
  int count = 0;  // successful replications
  double pehe_mean = 0.0;
  double pehe_std = 0.0;
  double att_gamma_mean = 0.0;
  double att_delta_mean = 0.0;
  double att_upsilon_mean = 0.0;
};

struct ExperimentResult {
  std::vector<SeedModeResult> rows;
  std::vector<AggregateRow> aggregates;
};

struct ExperimentConfig {
  int d = 18;
  int n = 4000;
  int n_seeds = 10;
  std::uint64_t master_seed = 1;
  std::array<double, 3> split_ratios{0.5, 0.25, 0.25};
  std::vector<Mode> modes{Mode::dpsw, Mode::drcfr_raw};
  Hyperparams hp;
  int threads = 0;  // 0 = hardware concurrency
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);

// Multi-seed, multi-mode harness: per replication, generate data, split,
// train every mode, and score test PEHE plus first-layer attributions.
// Training failures are recorded per row and do not stop the sweep.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

std::vector<AggregateRow> aggregate(const std::vector<SeedModeResult>& rows);

// results.csv / aggregate.csv / results.json in out_dir. CSV carries 6
// significant digits; the JSON carries full precision.
void write_experiment_files(const ExperimentResult& result,
                            const ExperimentConfig& cfg, const std::string& out_dir);

std::string results_csv_string(const std::vector<SeedModeResult>& rows);
std::string aggregate_csv_string(const std::vector<AggregateRow>& rows);
std::vector<SeedModeResult> read_results_csv(const std::string& path);

}  // namespace dpsw
