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

#include "madaug/curriculum.hpp"

#include <algorithm>

#include <cmath>

#include "madaug/errors.hpp"

namespace madaug {

std::string_view curriculum_mode_name(CurriculumMode mode) {
  switch (mode) {
    case CurriculumMode::Tanh:
      return "tanh";
    case CurriculumMode::AlwaysOn:
      return "always_on";
    case CurriculumMode::AlwaysOff:
      return "always_off";
  }
  return "tanh";
}

CurriculumMode curriculum_mode_from_name(std::string_view name) {
  if (name == "tanh") return CurriculumMode::Tanh;
  if (name == "always_on") return CurriculumMode::AlwaysOn;
  if (name == "always_off") return CurriculumMode::AlwaysOff;
  throw ConfigError("unknown curriculum mode: " + std::string(name));
}

void CurriculumSchedule::validate() const {
  if (mode == CurriculumMode::Tanh && !(tau > 0.0)) throw ConfigError("curriculum tau must be positive");
}

double curriculum_probability(int epoch, const CurriculumSchedule& schedule) {
  if (epoch < 0) throw ConfigError("curriculum epoch must be non-negative");
  switch (schedule.mode) {
    case CurriculumMode::AlwaysOn:
      return 1.0;
    case CurriculumMode::AlwaysOff:
      return 0.0;
    case CurriculumMode::Tanh:
      break;
  }
  schedule.validate();
  return std::tanh(double(epoch) / schedule.tau);
}

std::vector<char> gate_batch(int batch_size, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("gate probability must lie in [0, 1]");
  std::vector<char> mask(std::size_t(std::max(batch_size, 0)), p >= 1.0 ? 1 : 0);
  if (p <= 0.0 || p >= 1.0) return mask;
  for (auto& m : mask) m = uniform01(rng) < p ? 1 : 0;
  return mask;
}

}  // namespace madaug
