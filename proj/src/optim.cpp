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

#include "madaug/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "madaug/errors.hpp"

namespace madaug {

void SgdMomentum::step(Eigen::VectorXd& w, const Eigen::VectorXd& grad, double lr) {
  if (grad.size() != w.size()) throw DimensionError("SgdMomentum: gradient length != parameter length");
  if (velocity.size() == 0) velocity = Eigen::VectorXd::Zero(w.size());
  velocity = momentum * velocity + grad + weight_decay * w;
  w -= lr * velocity;
}

void Adam::step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
  if (grad.size() != theta.size()) throw DimensionError("Adam: gradient length != parameter length");
  if (m.size() == 0) {
    m = Eigen::VectorXd::Zero(theta.size());
    v = Eigen::VectorXd::Zero(theta.size());
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, double(t)), c2 = 1.0 - std::pow(beta2, double(t));
  theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

double cosine_lr(double base_lr, std::int64_t step, std::int64_t total_steps) {
  if (total_steps <= 0) return base_lr;
  const double frac = std::clamp(double(step) / double(total_steps), 0.0, 1.0);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * frac));
}

double clip_grad_norm(Eigen::VectorXd& grad, double max_norm) {
  const double norm = grad.norm();
  if (max_norm > 0.0 && norm > max_norm) grad *= max_norm / norm;
  return norm;
}

}  // namespace madaug
