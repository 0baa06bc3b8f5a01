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
#include <vector>

#include <Eigen/Dense>

#include "madaug/augops.hpp"
#include "madaug/rng.hpp"

namespace madaug {

/// Feature-conditioned policy: h hidden ReLU layers followed by one affine
/// layer whose 2n outputs feed a softmax head (op probabilities) and a
/// sigmoid head (magnitudes).
///
/// theta layout, per layer in order: weight matrix (out x in, column-major),
/// then bias.
struct PolicyNetwork {
  int input_dim = 0;
  int hidden_layers = 0;
  int hidden_width = 0;
  int n_ops = 0;
  Eigen::VectorXd theta;

  /// He-initialised hidden layers and a zero output layer, so a fresh network
  /// emits uniform probabilities and magnitudes of 0.5.
  static PolicyNetwork create(int input_dim, int n_ops, int hidden_layers, int hidden_width, Rng& rng);

  Eigen::Index num_params() const;
  int layer_count() const { return hidden_layers + 1; }
  int layer_in(int layer) const { return layer == 0 ? input_dim : hidden_width; }
  int layer_out(int layer) const { return layer == hidden_layers ? 2 * n_ops : hidden_width; }
  Eigen::Index layer_offset(int layer) const;
};

struct PolicyOutput {
  Eigen::VectorXd p;       // simplex over the n ops
  Eigen::VectorXd lambda;  // magnitudes in [0, 1]
};

/// Intermediate activations kept for policy_backward.
struct PolicyTrace {
  std::vector<Eigen::VectorXd> inputs;  // input to each layer
  PolicyOutput output;
};

/// Throws DimensionError when features.size() != net.input_dim.
PolicyOutput policy_forward(const Eigen::VectorXd& features, const PolicyNetwork& net, PolicyTrace* trace = nullptr);

/// Gradient with respect to theta of a scalar whose gradients with respect
/// to p and lambda are given.
Eigen::VectorXd policy_backward(const PolicyNetwork& net, const PolicyTrace& trace, const Eigen::VectorXd& grad_p,
                                const Eigen::VectorXd& grad_lambda);

/// k distinct indices drawn without replacement proportional to p
/// (draw, zero out, renormalise, repeat).
std::vector<int> sample_ops(const Eigen::VectorXd& p, int k, Rng& rng);

/// Policy checkpoint: theta plus everything needed to validate reuse.
struct PolicyCheckpoint {
  PolicyNetwork net;
  std::string registry_fingerprint;
  std::vector<std::string> op_names;
};

void save_policy_checkpoint(const std::string& path, const PolicyNetwork& net, const OpRegistry& registry);
PolicyCheckpoint load_policy_checkpoint(const std::string& path);

/// Throws DimensionError naming both sizes when the checkpoint's input
/// dimension differs from feature_dim, and ConfigError when the op registry
/// fingerprint differs.
void check_policy_compatible(const PolicyCheckpoint& checkpoint, int feature_dim, const OpRegistry& registry);

}  // namespace madaug
