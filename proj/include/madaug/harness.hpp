// Copyright 2026 The madaug Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "madaug/bilevel.hpp"
#include "madaug/config.hpp"

namespace madaug {

/// Version string compiled into the library (project version plus git hash).
std::string code_version();

// Run directory layout (one per seed, `<output_dir>/seed_<seed>/`):
//   config.json    resolved config for this seed, code version, op fingerprint
//   ops.json       the op registry
//   split.json     train / val / test indices
//   metrics.jsonl  one record per epoch; byte-identical across seeded reruns
//   timings.json   wall time per epoch
//   policy.json    final policy checkpoint (policy modes)
//   state.json     final training state
//   checkpoints/   periodic training states when checkpoint_every > 0
// The experiment directory holds config.json, summary.json and summary.md.

struct RunOptions {
  int stop_after_epochs = -1;  // stop early without changing the schedule
  bool resume = false;         // continue from the latest checkpoint if present
  std::function<void(std::uint64_t seed, const EpochMetrics&)> on_epoch;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::string run_dir;
  bool ok = false;
  std::string error;  // set when !ok
  std::vector<EpochMetrics> metrics;
  double seconds = 0.0;

  double final_test_accuracy() const;
};

struct Stat {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for one value
  double median = 0.0;
  std::vector<double> values;
};

Stat summarize(std::vector<double> values);

struct TrainResult {
  std::string output_dir;
  std::vector<SeedRun> runs;
  Stat test_accuracy;  // final epoch, successful seeds
  Stat val_loss;
  Stat similarity;     // final epoch similarity_mean
  bool ok() const;     // every seed succeeded
};

/// Trains one model per seed under `config.output_dir`. Config errors throw
/// before any compute; a failing seed is recorded and the others still run.
TrainResult run_train(const ExperimentConfig& config, const RunOptions& options = {});

/// Rebuilds a TrainResult from an experiment directory written by run_train.
TrainResult load_train_result(const std::string& output_dir);

/// Reads a metrics log; missing file gives an empty vector.
std::vector<EpochMetrics> read_metrics(const std::string& path);

// ---- ablations ---------------------------------------------------------------

/// Sweepable hyperparameters: "delta", "k", "h", "tau", "s".
void set_ablation_parameter(ExperimentConfig& config, const std::string& parameter, double value);
double default_ablation_value(const std::string& parameter);

struct AblationCell {
  double value = 0.0;
  std::string run_dir;
  bool ok = false;
  std::string error;
  Stat test_accuracy;
};

struct AblationRow {
  std::string parameter;
  std::vector<AblationCell> cells;
  /// Value with the highest mean accuracy; NaN when no cell succeeded.
  double best_value() const;
};

/// One row per parameter. Runs land in `<output_dir>/<parameter>_<value>/`;
/// a failing cell is recorded and the grid continues.
AblationRow run_ablation(const ExperimentConfig& base, const std::string& parameter,
                         const std::vector<double>& values, const RunOptions& options = {});

/// Rebuilds a row from the cell directories on disk.
AblationRow load_ablation_row(const std::string& output_dir, const std::string& parameter,
                              const std::vector<double>& values);

/// Stacked layout: for each row a header line "param | v1 | v2 ..." and an
/// accuracy line "ACC(%) | a1 | a2 ...", followed by the best value and
/// whether it equals the default.
std::string ablation_table_markdown(const std::vector<AblationRow>& rows);

/// The declared grid per parameter.
std::vector<double> default_ablation_grid(const std::string& parameter);

// ---- curriculum and adaptivity ablations -------------------------------------

struct MethodCell {
  std::string method;  // row label
  std::string detail;  // column label
  std::string run_dir;
  bool ok = false;
  std::string error;
  Stat test_accuracy;
};

/// {fixed policy, per-sample policy, MADAug} x {curriculum off, on}. The
/// per-sample row trains a per-sample policy during warm-up and then freezes
/// it; "off" applies augmentation to every sample from the first epoch.
std::vector<MethodCell> run_curriculum_ablation(const ExperimentConfig& base, const RunOptions& options = {});

/// {model-adaptive only, data-adaptive only, both}.
std::vector<MethodCell> run_adaptivity_ablation(const ExperimentConfig& base, const RunOptions& options = {});

std::string curriculum_table_markdown(const std::vector<MethodCell>& cells);
std::string adaptivity_table_markdown(const std::vector<MethodCell>& cells);

// ---- transfer -----------------------------------------------------------------

struct TransferResult {
  TrainResult frozen;   // transferred policy, frozen, curriculum active
  TrainResult none;     // no augmentation
  TrainResult fixed;    // fixed random-pair policy
};

/// Trains the target task under the frozen policy from `policy_path` and under
/// the two baselines. Throws DimensionError naming both dimensions when the
/// checkpoint does not fit the target model, before any training.
TransferResult run_transfer(const std::string& policy_path, const ExperimentConfig& target,
                            const RunOptions& options = {});

std::string transfer_table_markdown(const TransferResult& result);

}  // namespace madaug
