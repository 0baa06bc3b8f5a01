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

#include <Eigen/Dense>

namespace madaug {

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every i.
Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double step);

/// |a - b| / max(|a|, |b|, floor), norms taken over the whole vector.
double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-12);

struct CheckResult {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return error <= tolerance; }
};

/// Analytic derivatives against central differences on small problems:
/// task-model weight, input and mixed gradients per architecture, the policy
/// network, the composition relaxation and the one-step policy hypergradient.
///
/// The hypergradient is checked against the surrogate that defines it: the
/// augmented image is the sampled image plus the change of the relaxed
/// composition in p, plus the change of each sampled magnitude spread
/// uniformly over the pixels (the straight-through rule).
std::vector<CheckResult> run_gradient_checks(std::uint64_t seed = 0);

}  // namespace madaug
