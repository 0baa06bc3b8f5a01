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
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "madaug/dual.hpp"
#include "madaug/image.hpp"
#include "madaug/rng.hpp"

namespace madaug {

struct ImageShape {
  int channels = 3;
  int height = 32;
  int width = 32;
  Eigen::Index size() const { return Eigen::Index(channels) * height * width; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

namespace layers {

/// Fixed per-channel (x - mean) / std; no parameters.
struct Standardize {
  int channels = 0;
  Eigen::Index plane = 0;
  std::vector<double> mean;
  std::vector<double> inv_std;
};

/// 3x3 convolution, zero padding 1. Weight (out x in*9, column-major) then bias.
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int in_height = 0;
  int in_width = 0;
  int stride = 1;
  Eigen::Index offset = 0;

  int out_height() const { return (in_height - 1) / stride + 1; }
  int out_width() const { return (in_width - 1) / stride + 1; }
  Eigen::Index num_params() const { return Eigen::Index(out_channels) * in_channels * 9 + out_channels; }
};

struct Relu {};

/// 2x2 max pooling, stride 2.
struct MaxPool2 {
  int channels = 0;
  int in_height = 0;
  int in_width = 0;
};

struct GlobalAvgPool {
  int channels = 0;
  Eigen::Index plane = 0;
};

/// Weight (out x in, column-major) then bias.
struct Dense {
  int in = 0;
  int out = 0;
  Eigen::Index offset = 0;
  Eigen::Index num_params() const { return Eigen::Index(out) * in + out; }
};

/// relu(second(relu(first(x))) + x), both convolutions channel-preserving.
struct Residual {
  Conv2d first;
  Conv2d second;
};

}  // namespace layers

using Layer = std::variant<layers::Standardize, layers::Conv2d, layers::Relu, layers::MaxPool2, layers::GlobalAvgPool,
                           layers::Dense, layers::Residual>;

enum class Architecture { SmallCnn, Mlp, WideResnetTiny, Custom };

std::string_view architecture_name(Architecture arch);
Architecture architecture_from_name(std::string_view name);

/// Activations saved by a forward pass.
template <typename Scalar>
struct ForwardTrace {
  std::vector<std::vector<MatrixX<Scalar>>> saved;      // per layer
  std::vector<std::vector<Eigen::Index>> argmax;        // per layer, MaxPool2 only
};

/// Classifier f(x; w) as a stack of layers; the input to the final Dense
/// layer is the feature vector g_w(x). Parameters live outside the model in a
/// flat vector so that virtual steps can evaluate it at w_hat.
///
/// Batches are matrices with one flattened image (or activation) per column.
class TaskModel {
 public:
  TaskModel() = default;
  /// The last layer must be Dense; its input width becomes feature_dim.
  TaskModel(std::vector<Layer> layers, ImageShape input, Architecture arch = Architecture::Custom);

  Eigen::Index num_params() const { return num_params_; }
  int feature_dim() const { return feature_dim_; }
  int num_classes() const { return num_classes_; }
  ImageShape input_shape() const { return input_; }
  Architecture architecture() const { return arch_; }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Logits, num_classes x batch.
  template <typename Scalar>
  MatrixX<Scalar> forward(const VectorX<Scalar>& w, const MatrixX<Scalar>& x, ForwardTrace<Scalar>* trace = nullptr,
                          std::size_t stop_layer = std::size_t(-1)) const;

  /// Propagates d_out (gradient with respect to the last layer's output)
  /// backwards. Accumulates into grad_w when non-null; returns the input
  /// gradient when want_input, otherwise an empty matrix.
  template <typename Scalar>
  MatrixX<Scalar> backward(const VectorX<Scalar>& w, const ForwardTrace<Scalar>& trace, const MatrixX<Scalar>& d_out,
                           VectorX<Scalar>* grad_w, bool want_input) const;

  /// Penultimate activations, feature_dim x batch.
  Eigen::MatrixXd features(const Eigen::VectorXd& w, const Eigen::MatrixXd& x) const;

 private:
  std::vector<Layer> layers_;
  ImageShape input_;
  Architecture arch_ = Architecture::Custom;
  Eigen::Index num_params_ = 0;
  int feature_dim_ = 0;
  int num_classes_ = 0;
};

/// Mean softmax cross-entropy over the batch; writes d loss / d logits when
/// d_logits is non-null.
template <typename Scalar>
Scalar softmax_cross_entropy(const MatrixX<Scalar>& logits, std::span<const int> labels, MatrixX<Scalar>* d_logits);

struct LossGradients {
  double loss = 0.0;
  Eigen::VectorXd grad_w;   // d loss / d w
  Eigen::MatrixXd grad_x;   // d loss / d x, empty unless requested
};

/// Mean cross-entropy and its gradients at w.
LossGradients loss_and_gradients(const TaskModel& model, const Eigen::VectorXd& w, const Eigen::MatrixXd& x,
                                 std::span<const int> labels, bool want_input_grad = false);

double mean_loss(const TaskModel& model, const Eigen::VectorXd& w, const Eigen::MatrixXd& x,
                 std::span<const int> labels);

/// d/d eps of (d loss / d x) at w + eps * direction, i.e. the gradient with
/// respect to x of <direction, d loss / d w>. Exact, via a dual-number
/// backward pass.
Eigen::MatrixXd mixed_input_gradient(const TaskModel& model, const Eigen::VectorXd& w, const Eigen::VectorXd& direction,
                                     const Eigen::MatrixXd& x, std::span<const int> labels);

/// Per-channel normalisation and architecture widths.
struct ModelSpec {
  Architecture arch = Architecture::SmallCnn;
  int width = 8;     // base channel count for the convolutional models
  int hidden = 64;   // hidden width of the MLP (its feature_dim)
  std::vector<double> channel_mean;  // empty: 0.5 per channel
  std::vector<double> channel_std;   // empty: 0.25 per channel
};

struct BuiltModel {
  TaskModel model;
  Eigen::VectorXd w;
};

/// Deterministic given the generator state. He-normal weights, zero biases.
BuiltModel build_model(const ModelSpec& spec, ImageShape input, int num_classes, Rng& rng);

/// Closed-form parameter count of the architectures build_model produces.
Eigen::Index expected_parameter_count(const ModelSpec& spec, ImageShape input, int num_classes);

/// Packs images into a batch matrix, one column per image.
Eigen::MatrixXd to_batch(std::span<const Image> images);
Eigen::MatrixXd to_batch(std::span<const Image* const> images);

}  // namespace madaug
