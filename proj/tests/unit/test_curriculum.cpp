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

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "madaug/curriculum.hpp"
#include "madaug/errors.hpp"

using namespace madaug;

// tanh(1), evaluated once with long double std::tanh and frozen.
constexpr double kTanhOne = 0.7615941559557649;

TEST_CASE("tanh schedule: endpoints and the tau point") {
  const CurriculumSchedule s{40.0, CurriculumMode::Tanh};
  CHECK(curriculum_probability(0, s) == 0.0);
  CHECK(std::abs(curriculum_probability(40, s) - kTanhOne) < 1e-12);
  CHECK(std::abs(double(std::tanh(1.0L)) - kTanhOne) < 1e-16);
  CHECK(std::abs(curriculum_probability(20, CurriculumSchedule{20.0, CurriculumMode::Tanh}) - kTanhOne) < 1e-12);
}

TEST_CASE("tanh schedule is monotone and stays below 1") {
  for (double tau : {1.0, 10.0, 40.0, 50.0}) {
    const CurriculumSchedule s{tau, CurriculumMode::Tanh};
    double prev = curriculum_probability(0, s);
    for (int t = 1; t < 400; ++t) {
      const double p = curriculum_probability(t, s);
      CHECK(p >= prev);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      prev = p;
    }
    CHECK(curriculum_probability(5, s) < 1.0);
  }
}

TEST_CASE("fixed modes ignore the epoch") {
  for (int t : {0, 1, 7, 1000}) {
    CHECK(curriculum_probability(t, {40.0, CurriculumMode::AlwaysOn}) == 1.0);
    CHECK(curriculum_probability(t, {40.0, CurriculumMode::AlwaysOff}) == 0.0);
  }
}

TEST_CASE("mode names round-trip and bad schedules are rejected") {
  for (CurriculumMode m : {CurriculumMode::Tanh, CurriculumMode::AlwaysOn, CurriculumMode::AlwaysOff})
    CHECK(curriculum_mode_from_name(curriculum_mode_name(m)) == m);
  CHECK_THROWS_AS(curriculum_mode_from_name("linear"), ConfigError);
  CHECK_THROWS_AS((CurriculumSchedule{0.0, CurriculumMode::Tanh}.validate()), ConfigError);
  CHECK_THROWS_AS((CurriculumSchedule{-1.0, CurriculumMode::Tanh}.validate()), ConfigError);
  CHECK_NOTHROW((CurriculumSchedule{40.0, CurriculumMode::Tanh}.validate()));
}

TEST_CASE("gate_batch: degenerate probabilities and concentration at 0.5") {
  Rng rng = make_stream(3, 1);
  const auto off = gate_batch(100, 0.0, rng);
  const auto on = gate_batch(100, 1.0, rng);
  CHECK(std::count(off.begin(), off.end(), 1) == 0);
  CHECK(std::count(on.begin(), on.end(), 1) == 100);

  // 10,000 Bernoulli(0.5) draws: sigma of the fraction is 0.005.
  const auto mask = gate_batch(10000, 0.5, rng);
  const double fraction = double(std::count(mask.begin(), mask.end(), 1)) / 10000.0;
  CHECK(std::abs(fraction - 0.5) < 3 * 0.005);
}

TEST_CASE("gate_batch with p in {0, 1} leaves the generator untouched") {
  Rng a = make_stream(3, 2), b = make_stream(3, 2);
  gate_batch(50, 0.0, a);
  gate_batch(50, 1.0, a);
  CHECK(a() == b());
}
