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

#include "madaug/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "madaug/errors.hpp"

namespace madaug {

ClassAccuracy per_class_accuracy(std::span<const int> predictions, std::span<const int> labels, int num_classes) {
  if (predictions.size() != labels.size()) throw DimensionError("per_class_accuracy: predictions and labels differ in length");
  if (labels.empty()) throw ConfigError("per_class_accuracy: empty evaluation set");
  ClassAccuracy acc;
  acc.counts.assign(std::size_t(num_classes), 0);
  std::vector<int> correct(std::size_t(num_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes) throw DimensionError("per_class_accuracy: label out of range");
    ++acc.counts[std::size_t(y)];
    if (predictions[i] == y) ++correct[std::size_t(y)];
  }
  acc.per_class = Eigen::VectorXd::Constant(num_classes, std::numeric_limits<double>::quiet_NaN());
  int defined = 0, total_correct = 0;
  for (int c = 0; c < num_classes; ++c) {
    total_correct += correct[std::size_t(c)];
    if (acc.counts[std::size_t(c)] == 0) continue;
    acc.per_class[c] = double(correct[std::size_t(c)]) / acc.counts[std::size_t(c)];
    acc.class_mean += acc.per_class[c];
    ++defined;
  }
  acc.class_mean /= defined;
  acc.overall = double(total_correct) / double(labels.size());
  return acc;
}

std::vector<int> argmax_columns(const Eigen::MatrixXd& logits) {
  std::vector<int> out(std::size_t(logits.cols()));
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    Eigen::Index best = 0;
    logits.col(b).maxCoeff(&best);
    out[std::size_t(b)] = int(best);
  }
  return out;
}

std::vector<int> predict(const TaskModel& model, const Eigen::VectorXd& w, const Eigen::MatrixXd& x, int chunk) {
  std::vector<int> out;
  out.reserve(std::size_t(x.cols()));
  for (Eigen::Index start = 0; start < x.cols(); start += chunk) {
    const Eigen::Index n = std::min<Eigen::Index>(chunk, x.cols() - start);
    const auto part = argmax_columns(model.forward<double>(w, x.middleCols(start, n)));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

double augmentation_similarity(const Image& original, const Image& augmented) {
  require_same_shape(original, augmented, "augmentation_similarity");
  const Eigen::ArrayXd a = original.pixels - original.pixels.mean();
  const Eigen::ArrayXd b = augmented.pixels - augmented.pixels.mean();
  const double na = std::sqrt((a * a).sum()), nb = std::sqrt((b * b).sum());
  constexpr double kFlat = 1e-12;
  if (na < kFlat || nb < kFlat) return original == augmented ? 1.0 : 0.0;
  return std::clamp((a * b).sum() / (na * nb), -1.0, 1.0);
}

}  // namespace madaug
