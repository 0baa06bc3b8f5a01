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

#include "madaug/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "madaug/errors.hpp"

namespace madaug {
namespace {

using std::abs;

double sq(double v) { return v * v; }

// Shape membership in canonical coordinates (u, v) in [-1, 1], v pointing down.
bool inside_a(int cls, double u, double v) {
  const double r = std::hypot(u, v);
  switch (cls) {
    case 0:  // disk
      return r < 0.7;
    case 1:  // square
      return std::max(abs(u), abs(v)) < 0.6;
    case 2:  // triangle, apex up
      return v < 0.5 && v > -0.7 + 2.0 * abs(u);
    case 3:  // ring
      return r > 0.42 && r < 0.72;
    case 4:  // plus
      return (abs(u) < 0.2 && abs(v) < 0.75) || (abs(v) < 0.2 && abs(u) < 0.75);
    case 5:  // two horizontal bars
      return abs(u) < 0.75 && (abs(v - 0.4) < 0.17 || abs(v + 0.4) < 0.17);
    case 6:  // half disk, flat side up
      return r < 0.75 && v > -0.05;
    case 7:  // L
      return (u > -0.65 && u < -0.25 && abs(v) < 0.7) || (abs(u) < 0.65 && v > 0.3 && v < 0.7);
    case 8:  // hollow square
      return std::max(abs(u), abs(v)) < 0.68 && std::max(abs(u), abs(v)) > 0.42;
    default:  // four dots
      return std::hypot(abs(u) - 0.42, abs(v) - 0.42) < 0.24;
  }
}

bool inside_b(int cls, double u, double v) {
  const double r = std::hypot(u, v);
  const double phi = std::atan2(v, u);
  switch (cls) {
    case 0:  // wide ellipse
      return sq(u / 0.8) + sq(v / 0.38) < 1.0;
    case 1:  // five-pointed star
      return r < 0.38 + 0.34 * std::max(0.0, std::cos(5.0 * (phi + std::numbers::pi / 2.0)));
    case 2:  // T
      return (abs(u) < 0.7 && v > -0.7 && v < -0.35) || (abs(u) < 0.18 && v > -0.7 && v < 0.7);
    case 3:  // crescent
      return r < 0.72 && std::hypot(u - 0.35, v) > 0.55;
    case 4:  // three vertical stripes
      return abs(v) < 0.7 && (abs(u) < 0.12 || abs(abs(u) - 0.5) < 0.12);
    case 5:  // target: dot inside a ring
      return r < 0.22 || (r > 0.48 && r < 0.72);
    case 6:  // chevron pointing up
      return abs(u) < 0.7 && v - (-0.5 + abs(u)) > 0.0 && v - (-0.5 + abs(u)) < 0.4;
    case 7:  // H
      return (abs(abs(u) - 0.5) < 0.16 && abs(v) < 0.7) || (abs(u) < 0.5 && abs(v) < 0.14);
    case 8:  // triangle outline
      return v < 0.55 && v > -0.75 + 2.0 * abs(u) && !(v < 0.3 && v > -0.3 + 2.0 * abs(u));
    default:  // 3x3 checker
      if (std::max(abs(u), abs(v)) >= 0.69) return false;
      return (int(std::floor((u + 0.69) / 0.46)) + int(std::floor((v + 0.69) / 0.46))) % 2 == 0;
  }
}

double luminance(const std::array<double, 3>& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

std::array<double, 3> random_colour(Rng& rng) { return {uniform01(rng), uniform01(rng), uniform01(rng)}; }

Image render(bool variant_b, int cls, int h, int w, Rng& rng) {
  Image img(3, h, w);
  const double side = std::min(h, w);

  // Background: base colour, a linear gradient and a smooth texture.
  const auto bg = random_colour(rng);
  const double gx = uniform(rng, -0.15, 0.15), gy = uniform(rng, -0.15, 0.15);
  const double fx = uniform(rng, 0.2, 0.6), fy = uniform(rng, 0.2, 0.6), ph = uniform(rng, 0.0, 6.3);
  const double tex = uniform(rng, 0.0, 0.08);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double shade = gx * (x / double(w) - 0.5) + gy * (y / double(h) - 0.5) +
                           tex * std::sin(fx * x + ph) * std::cos(fy * y - ph);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = bg[std::size_t(c)] + shade;
    }
  }

  // Clutter: small rectangles in random colours.
  const int clutter = int(uniform_index(rng, 3));
  const auto clutter_side = std::max<std::uint64_t>(1, std::uint64_t(side / 10));
  for (int i = 0; i < clutter; ++i) {
    const auto col = random_colour(rng);
    const int rw = 1 + int(uniform_index(rng, clutter_side)), rh = 1 + int(uniform_index(rng, clutter_side));
    const int x0 = int(uniform_index(rng, std::uint64_t(w))), y0 = int(uniform_index(rng, std::uint64_t(h)));
    for (int y = y0; y < std::min(h, y0 + rh); ++y)
      for (int x = x0; x < std::min(w, x0 + rw); ++x)
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[std::size_t(c)];
  }

  // Foreground colour with a minimum luminance contrast.
  std::array<double, 3> fg = random_colour(rng);
  for (int tries = 0; tries < 64 && abs(luminance(fg) - luminance(bg)) < 0.25; ++tries) fg = random_colour(rng);

  const double radius = side * uniform(rng, 0.2, 0.36);
  const double margin = 0.55 * radius;
  const double cx = uniform(rng, margin, w - margin), cy = uniform(rng, margin, h - margin);
  const double angle = uniform(rng, -0.6, 0.6);
  const bool mirror = uniform01(rng) < 0.5;
  const double ca = std::cos(angle), sa = std::sin(angle);

  // 3x3 supersampling gives anti-aliased edges.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int hits = 0;
      for (int sy = 0; sy < 3; ++sy) {
        for (int sx = 0; sx < 3; ++sx) {
          const double dx = (x + (sx + 0.5) / 3.0 - cx) / radius, dy = (y + (sy + 0.5) / 3.0 - cy) / radius;
          double u = ca * dx + sa * dy;
          const double v = -sa * dx + ca * dy;
          if (mirror) u = -u;
          hits += (variant_b ? inside_b(cls, u, v) : inside_a(cls, u, v)) ? 1 : 0;
        }
      }
      if (hits == 0) continue;
      const double a = hits / 9.0;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = (1.0 - a) * img.at(c, y, x) + a * fg[std::size_t(c)];
    }
  }

  const double noise = uniform(rng, 0.01, 0.05);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.pixels[i] = std::clamp(img.pixels[i] + noise * normal(rng), 0.0, 1.0);
  return img;
}

}  // namespace

Dataset make_synthetic(const std::string& variant, int count, int height, int width, std::uint64_t seed) {
  if (variant != "A" && variant != "B") throw ConfigError("synthetic variant must be A or B, got " + variant);
  if (count <= 0 || height < 8 || width < 8) throw ConfigError("synthetic dataset needs count > 0 and sides >= 8");
  Dataset d;
  d.name = "synthetic_" + variant;
  d.shape = {3, height, width};
  d.num_classes = 10;
  Rng rng = make_stream(seed, variant == "A" ? 0xA : 0xB);
  d.images.reserve(std::size_t(count));
  for (int i = 0; i < count; ++i) {
    const int cls = i % d.num_classes;
    d.images.push_back(render(variant == "B", cls, height, width, rng));
    d.labels.push_back(cls);
  }
  return d;
}

Dataset load_cifar10(const std::string& directory) {
  namespace fs = std::filesystem;
  constexpr int kSide = 32, kPlane = kSide * kSide, kRecord = 1 + 3 * kPlane;
  Dataset d;
  d.name = "cifar10";
  d.shape = {3, kSide, kSide};
  d.num_classes = 10;
  const std::array<const char*, 6> files = {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
                                            "data_batch_4.bin", "data_batch_5.bin", "test_batch.bin"};
  std::vector<unsigned char> record(kRecord);
  for (const char* name : files) {
    const fs::path file = fs::path(directory) / name;
    std::ifstream in(file, std::ios::binary);
    if (!in) continue;
    while (in.read(reinterpret_cast<char*>(record.data()), kRecord)) {
      if (record[0] > 9) throw ConfigError("corrupt CIFAR-10 record in " + file.string());
      Image img(3, kSide, kSide);
      for (int i = 0; i < 3 * kPlane; ++i) img.pixels[i] = record[std::size_t(i) + 1] / 255.0;
      d.images.push_back(std::move(img));
      d.labels.push_back(record[0]);
    }
  }
  if (d.images.empty()) throw ConfigError("no CIFAR-10 batches found under " + directory);
  return d;
}

Dataset load_dataset(const DatasetSpec& spec) {
  if (spec.kind == "synthetic") return make_synthetic(spec.variant, spec.num_images, spec.height, spec.width, spec.seed);
  if (spec.kind == "cifar10") return load_cifar10(spec.path);
  throw ConfigError("unknown dataset kind: " + spec.kind);
}

DatasetSplit make_splits(std::span<const int> labels, int num_classes, std::size_t n_train, std::size_t n_val,
                         bool stratify, Rng& rng, long n_test) {
  if (num_classes <= 0) throw ConfigError("make_splits: num_classes must be positive");
  if (n_train + n_val > labels.size())
    throw ConfigError("make_splits: n_train + n_val = " + std::to_string(n_train + n_val) + " exceeds dataset size " +
                      std::to_string(labels.size()));
  DatasetSplit split;
  split.num_classes = num_classes;
  std::vector<std::size_t> rest;
  if (stratify) {
    std::vector<std::vector<std::size_t>> by_class{std::size_t(num_classes)};
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= num_classes) throw ConfigError("make_splits: label out of range");
      by_class[std::size_t(labels[i])].push_back(i);
    }
    auto quota = [&](std::size_t n, int c) { return n / std::size_t(num_classes) + (std::size_t(c) < n % std::size_t(num_classes) ? 1 : 0); };
    for (int c = 0; c < num_classes; ++c) {
      auto& members = by_class[std::size_t(c)];
      shuffle(members, rng);
      const std::size_t nt = quota(n_train, c), nv = quota(n_val, c);
      if (members.size() < nt + nv)
        throw ConfigError("make_splits: class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                          " samples, stratification needs " + std::to_string(nt + nv));
      split.train.insert(split.train.end(), members.begin(), members.begin() + long(nt));
      split.val.insert(split.val.end(), members.begin() + long(nt), members.begin() + long(nt + nv));
      rest.insert(rest.end(), members.begin() + long(nt + nv), members.end());
    }
    shuffle(rest, rng);
  } else {
    std::vector<std::size_t> all(labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    shuffle(all, rng);
    split.train.assign(all.begin(), all.begin() + long(n_train));
    split.val.assign(all.begin() + long(n_train), all.begin() + long(n_train + n_val));
    rest.assign(all.begin() + long(n_train + n_val), all.end());
  }
  if (n_test >= 0 && rest.size() > std::size_t(n_test)) rest.resize(std::size_t(n_test));
  split.test = std::move(rest);
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

void validate_split(const DatasetSplit& split, std::size_t dataset_size) {
  std::vector<char> owner(dataset_size, 0);
  const std::array<std::pair<const std::vector<std::size_t>*, const char*>, 3> roles = {
      {{&split.train, "train"}, {&split.val, "val"}, {&split.test, "test"}}};
  for (std::size_t r = 0; r < roles.size(); ++r) {
    for (std::size_t i : *roles[r].first) {
      if (i >= dataset_size)
        throw ConfigError(std::string("split index ") + std::to_string(i) + " in " + roles[r].second +
                          " is outside the dataset (size " + std::to_string(dataset_size) + ")");
      if (owner[i] != 0)
        throw ConfigError("overlapping splits: index " + std::to_string(i) + " appears in both " +
                          roles[std::size_t(owner[i] - 1)].second + " and " + roles[r].second);
      owner[i] = char(r + 1);
    }
  }
}

void save_split(const std::string& path, const DatasetSplit& split) {
  nlohmann::json j;
  j["train"] = split.train;
  j["val"] = split.val;
  j["test"] = split.test;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write split file " + path);
  out << j.dump() << '\n';
}

DatasetSplit load_split(const std::string& path, const Dataset& dataset) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read split file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed split file " + path + ": " + e.what());
  }
  DatasetSplit split;
  split.train = j.at("train").get<std::vector<std::size_t>>();
  split.val = j.at("val").get<std::vector<std::size_t>>();
  split.test = j.at("test").get<std::vector<std::size_t>>();
  split.shape = dataset.shape;
  split.num_classes = dataset.num_classes;
  validate_split(split, dataset.size());
  return split;
}

Subset gather(const Dataset& dataset, std::span<const std::size_t> indices) {
  Subset s;
  s.images.reserve(indices.size());
  s.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= dataset.size()) throw DimensionError("gather: index " + std::to_string(i) + " out of range");
    s.images.push_back(&dataset.images[i]);
    s.labels.push_back(dataset.labels[i]);
  }
  return s;
}

}  // namespace madaug
