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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "madaug/augops.hpp"
#include "madaug/composer.hpp"
#include "madaug/curriculum.hpp"
#include "madaug/data.hpp"
#include "madaug/optim.hpp"
#include "madaug/policy.hpp"
#include "madaug/rng.hpp"
#include "madaug/task_model.hpp"

namespace madaug {

// Alternating optimisation of the task model w and the policy network theta.
//
// Per iteration, on a training batch:
//   1. gate each sample with probability p(epoch);
//   2. s times: augment gated samples under theta, take the virtual step
//      w_hat = w - alpha * grad_w L_tr(w), and move theta along
//      -d L_val(w_hat(theta)) / d theta on a fresh validation batch;
//   3. re-augment the same gated samples under the updated theta and take a
//      real SGD step on w.

struct BilevelConfig {
  double alpha = 0.05;  // base task learning rate (cosine-annealed)
  double beta = 0.001;  // policy learning rate
  int n_tr = 128;
  int n_val = 128;
  int s = 1;            // policy updates per task step
  int epochs = 40;      // schedule length T
  bool second_order = true;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double grad_clip = 5.0;
  // First-order mode replaces the exact mixed derivative by a central
  // difference at w +- eps * v with eps = fd_scale / |v|.
  double fd_scale = 0.01;

  /// Throws ConfigError on alpha <= 0, beta < 0, s < 1 or empty batches.
  void validate() const;
};

enum class PolicyMode {
  MadAug,             // per-sample policy on task features, trained online
  Fixed,              // uniformly random op pair, fixed magnitudes
  None,               // never augment
  ModelAdaptiveOnly,  // policy on a constant input, trained online
  DataAdaptiveOnly,   // per-sample policy trained during warm-up, then frozen
  Frozen,             // per-sample policy, never trained (transfer)
};

std::string_view policy_mode_name(PolicyMode mode);
PolicyMode policy_mode_from_name(std::string_view name);

struct AugmentConfig {
  PolicyMode mode = PolicyMode::MadAug;
  int k = 2;
  double delta = 0.3;
  int hidden_layers = 0;
  int hidden_width = 64;
  bool renormalize = true;
  RelaxationMode relaxation = RelaxationMode::FullPairSum;
  double warmup_fraction = 0.25;  // DataAdaptiveOnly

  void validate(std::size_t n_ops) const;
};

/// Whether the policy parameters receive updates at this epoch.
bool policy_trainable(const AugmentConfig& aug, int epoch, int total_epochs);

/// Magnitudes used by the fixed policy for one sample: 0.25 or 0.75 (random
/// sign) for ops whose midpoint is the identity, 0.5 otherwise.
Eigen::VectorXd fixed_policy_magnitudes(const OpRegistry& registry, Rng& rng);

/// A training batch after gating and augmentation.
struct AugmentedBatch {
  Eigen::MatrixXd x;                            // one column per sample
  std::vector<int> gated;                       // augmented batch positions
  std::vector<ComposedAugmentation> composed;   // parallel to gated, when kept
  std::vector<PolicyTrace> traces;              // parallel to gated, policy modes
};

/// Augments the samples whose mask entry is set. `features` holds one column
/// per gated sample (policy input); `partners` supplies SamplePairing images.
/// With keep_relaxation the result retains what the policy backward needs.
AugmentedBatch augment_batch(std::span<const Image* const> images, std::span<const char> mask,
                             const Eigen::MatrixXd& features, const PolicyNetwork& policy,
                             const OpRegistry& registry, const AugmentConfig& aug,
                             std::span<const Image* const> partners, Rng& rng, bool keep_relaxation);

/// w - alpha * grad_w of the mean training loss.
Eigen::VectorXd virtual_step(const TaskModel& model, const Eigen::VectorXd& w, const Eigen::MatrixXd& x,
                             std::span<const int> labels, double alpha);

/// Gradient of the policy parameters given d L_val / d x_aug (`upstream`,
/// one column per batch sample): each gated column is pulled back through the
/// composition relaxation (p), the straight-through rule (lambda) and the
/// policy network.
Eigen::VectorXd policy_gradient_from_upstream(const Eigen::MatrixXd& upstream, const AugmentedBatch& batch,
                                              const PolicyNetwork& policy, const OpRegistry& registry);

struct Hypergradient {
  Eigen::VectorXd theta;     // d L_val(w_hat) / d theta
  Eigen::MatrixXd upstream;  // d L_val(w_hat) / d x_aug
  double train_loss = 0.0;   // L_tr(w) on the augmented batch
  double val_loss = 0.0;     // L_val(w_hat)
};

/// d L_val(w_hat(theta)) / d theta for one virtual step. The input-pixel
/// derivative is -alpha * d/dx <v, grad_w L_tr(w, x)> with v = grad L_val(w_hat):
/// exact (dual numbers) when second_order, else a central difference.
Hypergradient policy_hypergradient(const TaskModel& model, const Eigen::VectorXd& w, double alpha,
                                   const AugmentedBatch& batch, std::span<const int> train_labels,
                                   const Eigen::MatrixXd& x_val, std::span<const int> val_labels,
                                   const PolicyNetwork& policy, const OpRegistry& registry, bool second_order,
                                   double fd_scale = 0.01);

/// Everything the loop mutates; checkpointed as a unit.
struct TrainState {
  Eigen::VectorXd w;
  PolicyNetwork policy;
  SgdMomentum task_opt;
  Adam policy_opt;
  int epoch = 0;               // next epoch to run
  std::int64_t iteration = 0;  // task steps taken
  Rng train_rng;               // epoch shuffles
  Rng val_rng;                 // validation batch order
  Rng aug_rng;                 // gating, sampling, perturbation, op draws
  std::vector<std::size_t> val_order;
  std::size_t val_cursor = 0;
};

TrainState init_train_state(Eigen::VectorXd w, PolicyNetwork policy, const BilevelConfig& config,
                            std::uint64_t seed);

/// JSON; restores bit-exactly, generator states included.
void save_train_state(const std::string& path, const TrainState& state);
TrainState load_train_state(const std::string& path);

struct EpochMetrics {
  int epoch = 0;                   // curriculum index t, 0-based
  double curriculum_p = 0.0;
  double augmented_fraction = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double test_accuracy = 0.0;
  Eigen::VectorXd per_class_accuracy;
  double similarity_mean = 1.0;    // over all samples; unaugmented count as 1
  double similarity_augmented = 1.0;  // over augmented samples; NaN if none
  double lr = 0.0;
  double policy_entropy = 0.0;     // mean entropy of p over augmented samples
  double seconds = 0.0;            // wall time, not serialised
};

/// One JSON object per line; fields other than `seconds`.
std::string to_json_line(const EpochMetrics& m);
EpochMetrics metrics_from_json_line(const std::string& line);

struct TrainingProblem {
  const TaskModel* model = nullptr;
  const OpRegistry* registry = nullptr;
  const Dataset* data = nullptr;
  const DatasetSplit* split = nullptr;
};

struct LoopOptions {
  int stop_after_epochs = -1;  // stop early without changing the schedule
  int checkpoint_every = 0;    // epochs; 0 disables
  std::string checkpoint_dir;
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Runs epochs state.epoch .. config.epochs - 1 (or until stop_after_epochs
/// epochs have run). Throws ConfigError on overlapping splits before any
/// compute, TrainingError when w or theta become non-finite.
std::vector<EpochMetrics> train_loop(TrainState& state, const TrainingProblem& problem, const BilevelConfig& config,
                                     const CurriculumSchedule& schedule, const AugmentConfig& aug,
                                     const LoopOptions& options = {});

}  // namespace madaug
