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

#include <Eigen/Dense>

namespace madaug {

/// Heavy-ball SGD with coupled weight decay:
///   g <- grad + weight_decay * w;  v <- momentum * v + g;  w <- w - lr * v.
struct SgdMomentum {
  double momentum = 0.9;
  double weight_decay = 0.0;
  Eigen::VectorXd velocity;  // empty until the first step

  void step(Eigen::VectorXd& w, const Eigen::VectorXd& grad, double lr);
};

/// Bias-corrected first/second-moment optimiser.
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t t = 0;

  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);
};

/// Single-cycle cosine annealing from base_lr at step 0 to 0 at total_steps.
double cosine_lr(double base_lr, std::int64_t step, std::int64_t total_steps);

/// Scales grad in place so its Euclidean norm is at most max_norm; returns
/// the norm before clipping. max_norm <= 0 disables clipping.
double clip_grad_norm(Eigen::VectorXd& grad, double max_norm);

}  // namespace madaug
