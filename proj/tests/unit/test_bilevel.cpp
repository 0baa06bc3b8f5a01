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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "madaug/bilevel.hpp"
#include "madaug/errors.hpp"
#include "test_util.hpp"

using namespace madaug;
using madaug::testing::numeric_gradient;
using madaug::testing::random_image;
using madaug::testing::rel_error;

namespace {

// Standardize -> GAP -> Dense(3, 4) -> Relu -> Dense(4, 2): 26 parameters.
TaskModel tiny_model() {
  layers::Standardize st;
  st.channels = 3;
  st.plane = 64;
  st.mean.assign(3, 0.5);
  st.inv_std.assign(3, 4.0);
  layers::Dense d1{3, 4, 0};
  layers::Dense d2{4, 2, d1.num_params()};
  return TaskModel({st, layers::GlobalAvgPool{3, 64}, d1, layers::Relu{}, d2}, ImageShape{3, 8, 8});
}

struct HyperProblem {
  TaskModel model = tiny_model();
  Eigen::VectorXd w;
  OpRegistry reg = OpRegistry::from_names({"Brightness", "Contrast", "Color"});
  PolicyNetwork policy;
  std::vector<Image> images;
  std::vector<const Image*> ptrs;
  std::vector<int> labels = {0, 1, 1, 0};
  Eigen::MatrixXd x_val;
  std::vector<int> val_labels = {1, 0, 1};

  explicit HyperProblem(std::uint64_t seed) {
    Rng rng = make_stream(seed, 1);
    w.resize(model.num_params());
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = 0.7 * normal(rng);
    policy = PolicyNetwork::create(model.feature_dim(), 3, 0, 0, rng);
    for (Eigen::Index i = 0; i < policy.theta.size(); ++i) policy.theta[i] = 0.5 * normal(rng);
    for (int i = 0; i < 4; ++i) images.push_back(random_image(3, 8, 8, rng));
    for (const Image& im : images) ptrs.push_back(&im);
    std::vector<Image> val;
    for (int i = 0; i < 3; ++i) val.push_back(random_image(3, 8, 8, rng));
    x_val = to_batch(std::span<const Image>(val));
  }

  AugmentedBatch augment(const std::vector<char>& mask, Rng& rng) const {
    std::vector<const Image*> gated;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) gated.push_back(ptrs[i]);
    Eigen::MatrixXd features;
    if (!gated.empty()) features = model.features(w, to_batch(std::span<const Image* const>(gated)));
    AugmentConfig aug;
    aug.delta = 0.0;
    return augment_batch(ptrs, mask, features, policy, reg, aug, {}, rng, true);
  }
};

// A small synthetic problem that trains in well under a second per epoch.
struct LoopFixture {
  Dataset data = make_synthetic("A", 160, 8, 8, 3);
  DatasetSplit split;
  BuiltModel built;
  OpRegistry reg = OpRegistry::standard();
  BilevelConfig config;
  CurriculumSchedule schedule{40.0, CurriculumMode::AlwaysOn};
  AugmentConfig aug;

  LoopFixture() {
    Rng rng = make_stream(11, 0);
    split = make_splits(data.labels, 10, 60, 30, true, rng, 40);
    split.shape = data.shape;
    split.num_classes = 10;
    ModelSpec spec;
    spec.width = 2;
    built = build_model(spec, data.shape, 10, rng);
    config.epochs = 3;
    config.n_tr = 16;
    config.n_val = 16;
    config.beta = 0.01;
  }

  TrainState fresh(std::uint64_t seed) const {
    Rng rng = make_stream(seed, 5);
    return init_train_state(built.w, PolicyNetwork::create(built.model.feature_dim(), int(reg.size()), 0, 0, rng),
                            config, seed);
  }
  TrainingProblem problem() const { return {&built.model, &reg, &data, &split}; }
};

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("virtual_step on a one-pixel softmax model matches the closed form") {
  const TaskModel model({layers::Dense{1, 2, 0}}, ImageShape{1, 1, 1});
  Eigen::VectorXd w(4);
  w << 0.5, -0.25, 0.1, 0.0;  // W = [0.5, -0.25], b = [0.1, 0]
  Eigen::MatrixXd x(1, 1);
  x << 0.8;
  const std::vector<int> labels = {0};
  // z = W x + b = [0.5, -0.2]; d loss / d z = softmax(z) - e_0.
  const double e0 = std::exp(0.5), e1 = std::exp(-0.2);
  const double g0 = e0 / (e0 + e1) - 1.0, g1 = e1 / (e0 + e1);
  Eigen::VectorXd expected(4);
  expected << 0.5 - 0.3 * g0 * 0.8, -0.25 - 0.3 * g1 * 0.8, 0.1 - 0.3 * g0, 0.0 - 0.3 * g1;
  CHECK((virtual_step(model, w, x, labels, 0.3) - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(virtual_step(model, w, x, labels, 0.0) == w);
}

TEST_CASE("hypergradient vanishes for alpha = 0 and for an ungated batch") {
  const HyperProblem hp(1);
  Rng rng = make_stream(1, 2);
  const AugmentedBatch batch = hp.augment({1, 0, 1, 1}, rng);
  REQUIRE(batch.gated.size() == 3);
  for (bool second_order : {true, false}) {
    const Hypergradient hg = policy_hypergradient(hp.model, hp.w, 0.0, batch, hp.labels, hp.x_val, hp.val_labels,
                                                  hp.policy, hp.reg, second_order);
    CHECK(hg.theta.cwiseAbs().maxCoeff() == 0.0);
  }
  const AugmentedBatch none = hp.augment({0, 0, 0, 0}, rng);
  CHECK(none.gated.empty());
  const Hypergradient hg =
      policy_hypergradient(hp.model, hp.w, 0.5, none, hp.labels, hp.x_val, hp.val_labels, hp.policy, hp.reg, true);
  CHECK(hg.theta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("first-order hypergradient tracks the exact one") {
  for (std::uint64_t seed : {2, 3, 4}) {
    const HyperProblem hp(seed);
    Rng rng = make_stream(seed, 2);
    const AugmentedBatch batch = hp.augment({1, 1, 0, 1}, rng);
    const Hypergradient exact = policy_hypergradient(hp.model, hp.w, 0.5, batch, hp.labels, hp.x_val,
                                                     hp.val_labels, hp.policy, hp.reg, true);
    const Hypergradient approx = policy_hypergradient(hp.model, hp.w, 0.5, batch, hp.labels, hp.x_val,
                                                      hp.val_labels, hp.policy, hp.reg, false, 1e-3);
    CHECK(rel_error(exact.theta, approx.theta) < 1e-3);
    CHECK(exact.theta.norm() > 0.0);
  }
}

TEST_CASE("upstream gradient equals the pixel derivative of the validation loss") {
  const HyperProblem hp(5);
  Rng rng = make_stream(5, 2);
  const AugmentedBatch batch = hp.augment({1, 1, 1, 1}, rng);
  const double alpha = 0.5;
  const Hypergradient hg = policy_hypergradient(hp.model, hp.w, alpha, batch, hp.labels, hp.x_val, hp.val_labels,
                                                hp.policy, hp.reg, true);
  const auto f = [&](const Eigen::VectorXd& flat) {
    const Eigen::Map<const Eigen::MatrixXd> x(flat.data(), batch.x.rows(), batch.x.cols());
    return mean_loss(hp.model, virtual_step(hp.model, hp.w, x, hp.labels, alpha), hp.x_val, hp.val_labels);
  };
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(batch.x.data(), batch.x.size());
  const Eigen::VectorXd up = Eigen::Map<const Eigen::VectorXd>(hg.upstream.data(), hg.upstream.size());
  CHECK(rel_error(up, numeric_gradient(f, flat, 1e-5)) < 1e-6);
}

TEST_CASE("fixed policy magnitudes") {
  const OpRegistry reg = OpRegistry::standard();
  Rng rng = make_stream(6, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd m = fixed_policy_magnitudes(reg, rng);
    // Ops whose midpoint is the identity move a quarter of the range away.
    for (const char* name : {"ShearX", "ShearY", "TranslateX", "TranslateY", "Rotate", "Contrast", "Color",
                             "Brightness", "Sharpness"}) {
      const double v = m[Eigen::Index(*reg.index_of(name))];
      CHECK((v == 0.25 || v == 0.75));
    }
    for (const char* name : {"Solarize", "Posterize", "Cutout", "Identity"})
      CHECK(m[Eigen::Index(*reg.index_of(name))] == 0.5);
  }
}

TEST_CASE("optimisers follow their update rules") {
  SgdMomentum sgd{0.9, 0.1, {}};
  Eigen::VectorXd w(2), g(2);
  w << 1.0, -2.0;
  g << 0.5, 0.25;
  sgd.step(w, g, 0.1);
  // v = g + 0.1 w = [0.6, 0.05]; w -= 0.1 v.
  CHECK(std::abs(w[0] - 0.94) < 1e-15);
  CHECK(std::abs(w[1] + 2.005) < 1e-15);
  sgd.step(w, g, 0.1);
  // v = 0.9 [0.6, 0.05] + g + 0.1 w.
  CHECK(std::abs(w[0] - (0.94 - 0.1 * (0.54 + 0.5 + 0.094))) < 1e-15);

  Adam adam;
  adam.lr = 0.01;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(3), grad(3);
  grad << 2.0, -0.5, 1e-3;
  adam.step(theta, grad);
  // The first bias-corrected step is lr * g / (|g| + eps).
  for (Eigen::Index i = 0; i < 3; ++i)
    CHECK(std::abs(theta[i] + 0.01 * grad[i] / (std::abs(grad[i]) + 1e-8)) < 1e-15);

  CHECK(cosine_lr(0.1, 0, 100) == 0.1);
  CHECK(std::abs(cosine_lr(0.1, 50, 100) - 0.05) < 1e-15);
  CHECK(std::abs(cosine_lr(0.1, 100, 100)) < 1e-15);

  Eigen::VectorXd big(2);
  big << 3.0, 4.0;
  CHECK(clip_grad_norm(big, 1.0) == 5.0);
  CHECK(std::abs(big.norm() - 1.0) < 1e-15);
  Eigen::VectorXd small = big;
  clip_grad_norm(small, 0.0);
  CHECK(small == big);
}

TEST_CASE("both optimisers descend a quadratic") {
  Eigen::MatrixXd a(2, 2);
  a << 3.0, 0.5, 0.5, 1.0;
  Eigen::VectorXd target(2);
  target << 1.0, -1.0;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(2), theta = Eigen::VectorXd::Zero(2);
  SgdMomentum sgd{0.9, 0.0, {}};
  Adam adam;
  adam.lr = 0.05;
  for (int i = 0; i < 2000; ++i) {
    sgd.step(w, a * (w - target), 0.05);
    adam.step(theta, a * (theta - target));
  }
  CHECK((w - target).norm() < 1e-8);
  CHECK((theta - target).norm() < 1e-3);
}

TEST_CASE("metrics lines round-trip") {
  EpochMetrics m;
  m.epoch = 7;
  m.curriculum_p = 0.17;
  m.augmented_fraction = 0.2;
  m.train_loss = 1.25;
  m.val_loss = 1.5;
  m.test_accuracy = 0.625;
  m.per_class_accuracy = Eigen::VectorXd::LinSpaced(10, 0.0, 0.9);
  m.similarity_mean = 0.93;
  m.similarity_augmented = std::numeric_limits<double>::quiet_NaN();
  m.lr = 0.01;
  m.policy_entropy = 2.5;
  const std::string line = to_json_line(m);
  CHECK(line.find('\n') == std::string::npos);
  const EpochMetrics back = metrics_from_json_line(line);
  CHECK(back.epoch == 7);
  CHECK(back.curriculum_p == m.curriculum_p);
  CHECK(back.test_accuracy == m.test_accuracy);
  CHECK(back.per_class_accuracy == m.per_class_accuracy);
  CHECK(back.similarity_mean == m.similarity_mean);
  CHECK(std::isnan(back.similarity_augmented));
  CHECK(to_json_line(back) == line);
}

TEST_CASE("train_loop is deterministic for a fixed seed") {
  const LoopFixture fx;
  TrainState a = fx.fresh(1), b = fx.fresh(1);
  const auto la = train_loop(a, fx.problem(), fx.config, fx.schedule, fx.aug);
  const auto lb = train_loop(b, fx.problem(), fx.config, fx.schedule, fx.aug);
  REQUIRE(la.size() == 3);
  CHECK(a.w == b.w);
  CHECK(a.policy.theta == b.policy.theta);
  for (std::size_t i = 0; i < la.size(); ++i) CHECK(to_json_line(la[i]) == to_json_line(lb[i]));
  CHECK(a.policy.theta != fx.fresh(1).policy.theta);
}

TEST_CASE("resuming from a checkpoint reproduces the uninterrupted run") {
  const LoopFixture fx;
  const auto dir = fresh_dir("madaug_test_resume");
  TrainState full = fx.fresh(2);
  LoopOptions opts;
  opts.checkpoint_every = 1;
  opts.checkpoint_dir = dir.string();
  const auto log = train_loop(full, fx.problem(), fx.config, fx.schedule, fx.aug, opts);

  TrainState resumed = load_train_state((dir / "checkpoint_epoch_001.json").string());
  CHECK(resumed.epoch == 1);
  const auto rest = train_loop(resumed, fx.problem(), fx.config, fx.schedule, fx.aug);
  REQUIRE(rest.size() == 2);
  CHECK(resumed.w == full.w);
  CHECK(resumed.policy.theta == full.policy.theta);
  CHECK(to_json_line(rest.back()) == to_json_line(log.back()));

  TrainState stopped = fx.fresh(2);
  LoopOptions stop;
  stop.stop_after_epochs = 1;
  CHECK(train_loop(stopped, fx.problem(), fx.config, fx.schedule, fx.aug, stop).size() == 1);
  train_loop(stopped, fx.problem(), fx.config, fx.schedule, fx.aug);
  CHECK(stopped.w == full.w);
  std::filesystem::remove_all(dir);
}

TEST_CASE("beta = 0 leaves the policy bit-unchanged") {
  LoopFixture fx;
  fx.config.beta = 0.0;
  TrainState s = fx.fresh(3);
  const Eigen::VectorXd before = s.policy.theta;
  train_loop(s, fx.problem(), fx.config, fx.schedule, fx.aug);
  CHECK(s.policy.theta == before);
  CHECK(s.w != fx.built.w);
}

TEST_CASE("train_loop rejects bad problems before any compute") {
  LoopFixture fx;
  DatasetSplit overlap = fx.split;
  overlap.val.push_back(overlap.train.front());
  TrainState s = fx.fresh(4);
  const TrainingProblem bad{&fx.built.model, &fx.reg, &fx.data, &overlap};
  CHECK_THROWS_AS(train_loop(s, bad, fx.config, fx.schedule, fx.aug), ConfigError);
  CHECK(s.w == fx.built.w);

  Rng rng = make_stream(4, 1);
  TrainState wrong = init_train_state(fx.built.w, PolicyNetwork::create(3, 17, 0, 0, rng), fx.config, 4);
  CHECK_THROWS_AS(train_loop(wrong, fx.problem(), fx.config, fx.schedule, fx.aug), DimensionError);
  fx.config.alpha = 0.0;
  CHECK_THROWS_AS(train_loop(s, fx.problem(), fx.config, fx.schedule, fx.aug), ConfigError);
}

TEST_CASE("no-augmentation mode never gates and keeps similarity 1") {
  LoopFixture fx;
  fx.aug.mode = PolicyMode::None;
  TrainState s = fx.fresh(5);
  for (const EpochMetrics& m : train_loop(s, fx.problem(), fx.config, fx.schedule, fx.aug)) {
    CHECK(m.augmented_fraction == 0.0);
    CHECK(m.similarity_mean == 1.0);
  }
}

TEST_CASE("data-adaptive-only policy stops training after the warm-up") {
  LoopFixture fx;
  fx.aug.mode = PolicyMode::DataAdaptiveOnly;
  fx.config.epochs = 4;
  CHECK(policy_trainable(fx.aug, 0, 4));
  CHECK_FALSE(policy_trainable(fx.aug, 1, 4));
  TrainState s = fx.fresh(6);
  LoopOptions one;
  one.stop_after_epochs = 1;
  train_loop(s, fx.problem(), fx.config, fx.schedule, fx.aug, one);
  const Eigen::VectorXd after_warmup = s.policy.theta;
  train_loop(s, fx.problem(), fx.config, fx.schedule, fx.aug);
  CHECK(s.policy.theta == after_warmup);
  CHECK_FALSE(policy_trainable(AugmentConfig{PolicyMode::Frozen}, 0, 4));
}
