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
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "madaug/augops.hpp"
#include "madaug/image.hpp"

namespace madaug {

// Composition of sampled ops on the forward pass and the probability-weighted
// pair relaxation used for gradients with respect to p on the backward pass.
//
// Relaxed image, k >= 2:  sum over ordered pairs a != b of w_ab * op_b(op_a(x))
// with w_ab = p_a p_b, or p_a p_b / Z when renormalised (Z = sum of the
// unnormalised weights, equal to 1 - sum p_j^2 for the full pair sum).
// For k = 1 the relaxation is the single-op mixture sum_a p_a op_a(x).
// For k > 2 only the first two composition slots are relaxed.

enum class RelaxationMode { FullPairSum, SampledNeighborhood };

std::string_view relaxation_mode_name(RelaxationMode mode);
RelaxationMode relaxation_mode_from_name(std::string_view name);

/// One term of the relaxation; `second` is -1 for single-op terms.
struct RelaxationTerm {
  int first = 0;
  int second = -1;
  double weight = 0.0;
};

/// Terms and weights of the relaxation. In SampledNeighborhood mode only pairs
/// sharing an index with the first two sampled ops are kept. Throws when
/// n < 2 (pair relaxation) or when renormalising a distribution without pair
/// mass (one-hot p).
std::vector<RelaxationTerm> relaxation_terms(const Eigen::VectorXd& p, bool renormalize,
                                             RelaxationMode mode = RelaxationMode::FullPairSum,
                                             std::span<const int> sampled = {}, int k = 2);

/// Sequential application op_k(...op_1(x)). Duplicate indices throw.
Image compose_sampled(const Image& x, std::span<const int> ops, const Eigen::VectorXd& lambda,
                      const OpRegistry& registry, std::span<const OpDraw> draws = {});

/// The pair relaxation evaluated explicitly.
Image relaxed_composition(const Image& x, const Eigen::VectorXd& p, const Eigen::VectorXd& lambda, bool renormalize,
                          const OpRegistry& registry, std::span<const OpDraw> draws = {},
                          RelaxationMode mode = RelaxationMode::FullPairSum, std::span<const int> sampled = {},
                          int k = 2);

struct RelaxedGradient {
  Eigen::VectorXd p;
  Image x;  // empty unless requested
};

/// Gradients of <upstream, relaxed_composition(...)> with respect to p and
/// (optionally) the input pixels.
RelaxedGradient relaxed_composition_vjp(const Image& x, const Eigen::VectorXd& p, const Eigen::VectorXd& lambda,
                                        bool renormalize, const OpRegistry& registry, const Image& upstream,
                                        std::span<const OpDraw> draws = {},
                                        RelaxationMode mode = RelaxationMode::FullPairSum,
                                        std::span<const int> sampled = {}, int k = 2, bool want_x = true);

/// Straight-through magnitude gradient: every sampled op that uses a
/// magnitude receives the sum of all output-pixel gradients, every other op
/// receives 0. Returns a vector of length registry.size().
Eigen::VectorXd straight_through_lambda_grad(const Image& pixel_grad, std::span<const int> sampled,
                                             const OpRegistry& registry);

/// Sampled forward value carrying the relaxed backward pass.
struct ComposedAugmentation {
  std::vector<int> sampled_indices;
  Image forward_image;
  RelaxationMode relaxation_mode = RelaxationMode::FullPairSum;
  bool renormalize = true;

  // Retained for backward().
  Image source;
  Eigen::VectorXd p;
  Eigen::VectorXd lambda;
  std::vector<OpDraw> draws;

  struct Gradients {
    Eigen::VectorXd p;
    Eigen::VectorXd lambda;
    Image x;  // empty unless requested
  };

  /// p and x gradients through the relaxation, lambda through the
  /// straight-through rule.
  Gradients backward(const Image& upstream, const OpRegistry& registry, bool want_x = true) const;
};

/// Value equals compose_sampled(x, sampled, lambda) exactly.
ComposedAugmentation forward_sampled_backward_relaxed(const Image& x, const Eigen::VectorXd& p,
                                                      const Eigen::VectorXd& lambda, std::vector<int> sampled,
                                                      bool renormalize, const OpRegistry& registry,
                                                      std::vector<OpDraw> draws = {},
                                                      RelaxationMode mode = RelaxationMode::FullPairSum);

/// Second-slot applications performed by the relaxation on this thread.
std::uint64_t pair_application_count();
void reset_pair_application_count();

}  // namespace madaug
