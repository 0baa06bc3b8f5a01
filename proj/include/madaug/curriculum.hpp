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

#include <string>
#include <string_view>
#include <vector>

#include "madaug/rng.hpp"

namespace madaug {

enum class CurriculumMode { Tanh, AlwaysOn, AlwaysOff };

std::string_view curriculum_mode_name(CurriculumMode mode);
CurriculumMode curriculum_mode_from_name(std::string_view name);

/// When to augment: the per-sample augmentation probability as a function of
/// the epoch index.
struct CurriculumSchedule {
  double tau = 40.0;
  CurriculumMode mode = CurriculumMode::Tanh;

  /// Throws ConfigError unless tau > 0 in tanh mode.
  void validate() const;
};

/// tanh(t / tau) in tanh mode; 1 or 0 for the fixed modes.
double curriculum_probability(int epoch, const CurriculumSchedule& schedule);

/// Independent Bernoulli(p) draw per sample; true means augment.
/// p = 0 and p = 1 are decided without consuming the generator.
std::vector<char> gate_batch(int batch_size, double p, Rng& rng);

}  // namespace madaug
