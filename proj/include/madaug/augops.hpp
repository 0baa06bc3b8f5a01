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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "madaug/image.hpp"
#include "madaug/rng.hpp"

namespace madaug {

enum class OpKind {
  ShearX,
  ShearY,
  TranslateX,
  TranslateY,
  Rotate,
  AutoContrast,
  Invert,
  Equalize,
  Solarize,
  Posterize,
  Contrast,
  Color,
  Brightness,
  Sharpness,
  Cutout,
  Flip,
  SamplePairing,
  Identity,
};

std::string_view op_name(OpKind kind);
std::optional<OpKind> op_kind_from_name(std::string_view name);

/// Pixel sizes (translation, cutout patch) are declared at this reference
/// width and scaled with the actual image width.
inline constexpr double kReferenceSize = 32.0;

/// One named transform plus its magnitude convention.
///
/// The native parameter for a magnitude lambda in [0, 1] is
/// low + lambda * (high - low). Discrete ops snap the result to
/// low + step * k in the forward pass.
struct AugmentationOp {
  OpKind kind = OpKind::Identity;
  std::string name;
  double low = 0.0;
  double high = 0.0;
  bool discrete = false;
  double step = 0.0;
  bool uses_magnitude = false;
  // False where the pixel backward pass is straight-through (Equalize,
  // Posterize): the forward map is piecewise constant.
  bool pixel_differentiable = true;
};

/// Default table entry for an op kind.
AugmentationOp default_op(OpKind kind);

/// Per-sample random draw consumed by ops with a stochastic component.
/// Fixing it makes apply_op a pure function, so the sampled forward image and
/// the relaxed pair sum see the same Cutout location and pairing partner.
struct OpDraw {
  double u = 0.5;  // horizontal position in [0, 1)
  double v = 0.5;  // vertical position in [0, 1)
  const Image* partner = nullptr;
};

OpDraw draw_op_randomness(Rng& rng, const Image* partner = nullptr);

/// Immutable, ordered set of augmentation ops.
class OpRegistry {
 public:
  OpRegistry() = default;
  explicit OpRegistry(std::vector<AugmentationOp> ops);

  /// The 17-op set: 15 named transforms, the reserved slot, and Identity.
  /// The reserved slot accepts "Flip" (default) or "SamplePairing".
  static OpRegistry standard(std::string_view reserved_slot = "Flip");
  /// Ops by name with default ranges. Unknown names throw ConfigError.
  static OpRegistry from_names(const std::vector<std::string>& names);
  static OpRegistry from_json(const std::string& text);
  static OpRegistry load(const std::string& path);

  std::string to_json() const;
  void save(const std::string& path) const;
  /// FNV-1a over the canonical JSON form, as 16 hex digits.
  std::string fingerprint() const;

  std::size_t size() const { return ops_.size(); }
  const AugmentationOp& operator[](std::size_t i) const { return ops_[i]; }
  const std::vector<AugmentationOp>& ops() const { return ops_; }
  std::optional<std::size_t> index_of(std::string_view name) const;

 private:
  std::vector<AugmentationOp> ops_;
};

/// Native parameter before discrete rounding. Monotone in lambda.
double map_magnitude_continuous(const AugmentationOp& op, double lambda);
/// Native parameter as used in the forward pass.
double map_magnitude(const AugmentationOp& op, double lambda);

/// tau_j(x; lambda), clamped to [0, 1].
Image apply_op(const Image& x, const AugmentationOp& op, double lambda, const OpDraw& draw = {});

/// Vector-Jacobian product of apply_op with respect to the input pixels.
/// Straight-through (identity) for ops without a pixel derivative; zero where
/// the output was clamped.
Image apply_op_vjp(const Image& x, const AugmentationOp& op, double lambda, const Image& upstream,
                   const OpDraw& draw = {});

/// Uniform noise in [-delta, delta] per entry, then clamp to [0, 1].
Eigen::VectorXd perturb_magnitude(const Eigen::VectorXd& lambda, double delta, Rng& rng);

/// Number of apply_op calls on this thread since the last reset.
std::uint64_t op_application_count();
void reset_op_application_count();

}  // namespace madaug
