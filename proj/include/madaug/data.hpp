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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "madaug/image.hpp"
#include "madaug/rng.hpp"
#include "madaug/task_model.hpp"

namespace madaug {

/// Labelled images with pixels in [0, 1]. Immutable once built.
struct Dataset {
  std::string name;
  ImageShape shape;
  int num_classes = 0;
  std::vector<Image> images;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
};

/// Where a dataset comes from.
///
///   kind = "synthetic": procedurally rendered shapes; `variant` "A" or "B"
///                       selects one of two disjoint sets of ten shape classes.
///   kind = "cifar10":   the binary CIFAR-10 batches under `path`
///                       (data_batch_1..5.bin, test_batch.bin), in that order.
struct DatasetSpec {
  std::string kind = "synthetic";
  std::string variant = "A";
  std::string path;
  int num_images = 4500;  // synthetic only
  int height = 32;        // synthetic only
  int width = 32;         // synthetic only
  std::uint64_t seed = 2024;
};

/// Renders `count` images, classes assigned round-robin. Every image places one
/// foreground shape with random position, scale, rotation, mirroring and
/// colours over a textured background with clutter and pixel noise.
Dataset make_synthetic(const std::string& variant, int count, int height, int width, std::uint64_t seed);

/// Reads CIFAR-10 binary batches; throws ConfigError when no batch is found.
Dataset load_cifar10(const std::string& directory);

Dataset load_dataset(const DatasetSpec& spec);

/// Disjoint train / validation / test index sets into one dataset.
struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  ImageShape shape;
  int num_classes = 0;
};

/// Draws n_train and n_val indices; the rest (capped at n_test when
/// n_test >= 0) become the test set. With stratify, each class contributes
/// floor(n / classes) samples, the remainder going to the lowest class ids.
/// Throws ConfigError when the sizes exceed the data or a class is too small.
/// All index lists are sorted.
DatasetSplit make_splits(std::span<const int> labels, int num_classes, std::size_t n_train, std::size_t n_val,
                         bool stratify, Rng& rng, long n_test = -1);

/// Throws ConfigError naming the offending index when the split sets
/// overlap or reference indices outside [0, dataset_size).
void validate_split(const DatasetSplit& split, std::size_t dataset_size);

/// JSON object {"train": [...], "val": [...], "test": [...]}.
void save_split(const std::string& path, const DatasetSplit& split);
DatasetSplit load_split(const std::string& path, const Dataset& dataset);

/// Images and labels gathered for one split role.
struct Subset {
  std::vector<const Image*> images;
  std::vector<int> labels;
};

Subset gather(const Dataset& dataset, std::span<const std::size_t> indices);

}  // namespace madaug
