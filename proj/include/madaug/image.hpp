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

#include <Eigen/Dense>

#include "madaug/errors.hpp"

namespace madaug {

/// Planar image, channel-major: pixel (c, y, x) lives at
/// c * height * width + y * width + x. Values are expected in [0, 1].
template <typename Scalar>
struct ImageT {
  using Pixels = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  int channels = 0;
  int height = 0;
  int width = 0;
  Pixels pixels;

  ImageT() = default;
  ImageT(int c, int h, int w) : channels(c), height(h), width(w), pixels(Pixels::Zero(Eigen::Index(c) * h * w)) {}
  ImageT(int c, int h, int w, Pixels data) : channels(c), height(h), width(w), pixels(std::move(data)) {
    if (pixels.size() != Eigen::Index(c) * h * w) throw DimensionError("image buffer does not match its shape");
  }

  static ImageT constant(int c, int h, int w, Scalar value) {
    return ImageT(c, h, w, Pixels::Constant(Eigen::Index(c) * h * w, value));
  }

  Eigen::Index size() const { return pixels.size(); }
  Eigen::Index plane() const { return Eigen::Index(height) * width; }

  Scalar& at(int c, int y, int x) { return pixels[c * plane() + Eigen::Index(y) * width + x]; }
  const Scalar& at(int c, int y, int x) const { return pixels[c * plane() + Eigen::Index(y) * width + x]; }

  auto channel(int c) { return pixels.segment(c * plane(), plane()); }
  auto channel(int c) const { return pixels.segment(c * plane(), plane()); }

  bool same_shape(const ImageT& other) const {
    return channels == other.channels && height == other.height && width == other.width;
  }

  friend bool operator==(const ImageT& a, const ImageT& b) {
    return a.same_shape(b) && (a.pixels == b.pixels).all();
  }
};

using Image = ImageT<double>;

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) throw DimensionError(std::string(what) + ": image shapes differ");
}

}  // namespace madaug
