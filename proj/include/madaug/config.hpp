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
#include <string>
#include <vector>

#include "madaug/augops.hpp"
#include "madaug/bilevel.hpp"
#include "madaug/curriculum.hpp"
#include "madaug/data.hpp"
#include "madaug/task_model.hpp"

namespace madaug {

/// How the dataset is divided. The split depends on `seed` only, so every
/// training seed and every ablation cell sees the same images.
struct SplitSpec {
  int n_train = 2000;
  int n_val = 500;
  long n_test = -1;  // -1: every remaining image
  bool stratify = true;
  std::uint64_t seed = 7;
};

/// Everything one experiment needs. Serialises to JSON; a run directory holds
/// the resolved form, which reproduces the run.
struct ExperimentConfig {
  DatasetSpec dataset;
  SplitSpec split;
  ModelSpec model;
  BilevelConfig bilevel;
  CurriculumSchedule curriculum;
  AugmentConfig augment;
  std::vector<std::string> ops;     // empty: the standard 17-op set
  std::string reserved_slot = "Flip";
  std::string ops_file;             // registry JSON; overrides `ops`
  std::string init_policy;          // policy checkpoint loaded before training
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "runs/default";
  int checkpoint_every = 0;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

/// Desk-scale defaults: 32-pixel synthetic shapes, small CNN, 40 epochs.
ExperimentConfig default_config();

std::string config_to_json(const ExperimentConfig& config);

/// Keys absent from `text` keep the values of `base`; unknown keys throw
/// ConfigError so typos never pass silently.
ExperimentConfig config_from_json(const std::string& text, const ExperimentConfig& base = default_config());

ExperimentConfig load_config(const std::string& path, const ExperimentConfig& base = default_config());

/// Applies "section.key=value" (e.g. "bilevel.alpha=0.1", "seeds=[0,1,2]").
/// The value is parsed as JSON, falling back to a bare string.
void apply_override(ExperimentConfig& config, const std::string& assignment);

/// The op registry the config selects.
OpRegistry build_registry(const ExperimentConfig& config);

}  // namespace madaug
