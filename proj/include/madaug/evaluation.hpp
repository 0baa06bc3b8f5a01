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

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "madaug/image.hpp"
#include "madaug/task_model.hpp"

namespace madaug {

struct ClassAccuracy {
  Eigen::VectorXd per_class;  // NaN for classes without samples
  std::vector<int> counts;    // samples per class
  double overall = 0.0;       // sample-weighted
  double class_mean = 0.0;    // unweighted mean over classes with samples
};

/// Throws DimensionError on length mismatch and ConfigError on an empty set.
ClassAccuracy per_class_accuracy(std::span<const int> predictions, std::span<const int> labels, int num_classes);

/// Arg-max class per column of `logits`.
std::vector<int> argmax_columns(const Eigen::MatrixXd& logits);

/// Predictions for a batch, evaluated in chunks of `chunk` columns.
std::vector<int> predict(const TaskModel& model, const Eigen::VectorXd& w, const Eigen::MatrixXd& x, int chunk = 256);

/// Mean-centred cosine similarity of the flattened pixels, in [-1, 1].
/// When either image has zero variance: 1 if the images are equal, else 0.
double augmentation_similarity(const Image& original, const Image& augmented);

}  // namespace madaug
