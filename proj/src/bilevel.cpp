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

#include "madaug/bilevel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "madaug/errors.hpp"
#include "madaug/evaluation.hpp"

namespace madaug {
namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool uses_policy_network(PolicyMode mode) {
  return mode == PolicyMode::MadAug || mode == PolicyMode::ModelAdaptiveOnly || mode == PolicyMode::DataAdaptiveOnly ||
         mode == PolicyMode::Frozen;
}

bool uses_features(PolicyMode mode) { return uses_policy_network(mode) && mode != PolicyMode::ModelAdaptiveOnly; }

bool centred_identity(OpKind kind) {
  switch (kind) {
    case OpKind::ShearX:
    case OpKind::ShearY:
    case OpKind::TranslateX:
    case OpKind::TranslateY:
    case OpKind::Rotate:
    case OpKind::Contrast:
    case OpKind::Color:
    case OpKind::Brightness:
    case OpKind::Sharpness:
      return true;
    default:
      return false;
  }
}

Image column_image(const Eigen::MatrixXd& m, Eigen::Index col, const Image& like) {
  return Image(like.channels, like.height, like.width, m.col(col).array());
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vec(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), Eigen::Index(values.size()));
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_or_nan(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

// Mean cross-entropy over a large batch, evaluated in chunks.
double chunked_loss(const TaskModel& model, const Eigen::VectorXd& w, const Eigen::MatrixXd& x,
                    std::span<const int> labels, Eigen::Index chunk = 256) {
  double total = 0.0;
  for (Eigen::Index start = 0; start < x.cols(); start += chunk) {
    const Eigen::Index n = std::min(chunk, x.cols() - start);
    total += double(n) * mean_loss(model, w, x.middleCols(start, n), labels.subspan(std::size_t(start), std::size_t(n)));
  }
  return total / double(x.cols());
}

void require_finite(const Eigen::VectorXd& v, const char* what, int epoch, std::int64_t iteration) {
  if (v.allFinite()) return;
  Eigen::Index bad = 0;
  for (; bad < v.size() && std::isfinite(v[bad]); ++bad) {
  }
  std::ostringstream msg;
  msg << "non-finite " << what << " at epoch " << epoch << ", iteration " << iteration << " (first bad entry " << bad
      << " = " << v[bad] << ")";
  throw TrainingError(msg.str());
}

}  // namespace

void BilevelConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (s < 1) throw ConfigError("s must be >= 1");
  if (n_tr < 1 || n_val < 1) throw ConfigError("batch sizes n_tr and n_val must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(fd_scale > 0.0)) throw ConfigError("fd_scale must be > 0");
}

std::string_view policy_mode_name(PolicyMode mode) {
  switch (mode) {
    case PolicyMode::MadAug:
      return "madaug";
    case PolicyMode::Fixed:
      return "fixed";
    case PolicyMode::None:
      return "none";
    case PolicyMode::ModelAdaptiveOnly:
      return "model_adaptive_only";
    case PolicyMode::DataAdaptiveOnly:
      return "data_adaptive_only";
    case PolicyMode::Frozen:
      return "frozen";
  }
  return "madaug";
}

PolicyMode policy_mode_from_name(std::string_view name) {
  for (PolicyMode m : {PolicyMode::MadAug, PolicyMode::Fixed, PolicyMode::None, PolicyMode::ModelAdaptiveOnly,
                       PolicyMode::DataAdaptiveOnly, PolicyMode::Frozen})
    if (policy_mode_name(m) == name) return m;
  throw ConfigError("unknown policy mode: " + std::string(name));
}

void AugmentConfig::validate(std::size_t n_ops) const {
  if (k < 1 || std::size_t(k) > n_ops)
    throw ConfigError("k = " + std::to_string(k) + " must lie in [1, " + std::to_string(n_ops) + "]");
  if (!(delta >= 0.0)) throw ConfigError("delta must be >= 0");
  if (hidden_layers < 0) throw ConfigError("hidden_layers must be >= 0");
  if (hidden_layers > 0 && hidden_width < 1) throw ConfigError("hidden_width must be >= 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw ConfigError("warmup_fraction must lie in [0, 1]");
  if (k >= 2 && n_ops < 2) throw ConfigError("pair relaxation needs at least two ops");
}

bool policy_trainable(const AugmentConfig& aug, int epoch, int total_epochs) {
  switch (aug.mode) {
    case PolicyMode::MadAug:
    case PolicyMode::ModelAdaptiveOnly:
      return true;
    case PolicyMode::DataAdaptiveOnly:
      return epoch < aug.warmup_fraction * total_epochs;
    default:
      return false;
  }
}

Eigen::VectorXd fixed_policy_magnitudes(const OpRegistry& registry, Rng& rng) {
  Eigen::VectorXd lambda = Eigen::VectorXd::Constant(Eigen::Index(registry.size()), 0.5);
  for (std::size_t i = 0; i < registry.size(); ++i)
    if (centred_identity(registry[i].kind)) lambda[Eigen::Index(i)] = uniform01(rng) < 0.5 ? 0.25 : 0.75;
  return lambda;
}

AugmentedBatch augment_batch(std::span<const Image* const> images, std::span<const char> mask,
                             const Eigen::MatrixXd& features, const PolicyNetwork& policy,
                             const OpRegistry& registry, const AugmentConfig& aug,
                             std::span<const Image* const> partners, Rng& rng, bool keep_relaxation) {
  if (mask.size() != images.size()) throw DimensionError("augment_batch: one mask entry per image required");
  AugmentedBatch out;
  out.x = to_batch(images);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] && aug.mode != PolicyMode::None) out.gated.push_back(int(i));
  if (out.gated.empty()) return out;

  const bool network = uses_policy_network(aug.mode);
  if (network && uses_features(aug.mode) && features.cols() != Eigen::Index(out.gated.size()))
    throw DimensionError("augment_batch: one feature column per augmented sample required");
  const Eigen::Index n = Eigen::Index(registry.size());
  const Eigen::VectorXd constant_input = Eigen::VectorXd::Ones(policy.input_dim);
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(n, 1.0 / double(n));

  for (std::size_t j = 0; j < out.gated.size(); ++j) {
    const Image& source = *images[std::size_t(out.gated[j])];
    const Image* partner = partners.empty() ? &source : partners[uniform_index(rng, partners.size())];
    const std::vector<OpDraw> draws(registry.size(), draw_op_randomness(rng, partner));
    Image augmented;
    if (network) {
      PolicyTrace trace;
      const Eigen::VectorXd input = uses_features(aug.mode) ? Eigen::VectorXd(features.col(Eigen::Index(j))) : constant_input;
      const PolicyOutput po = policy_forward(input, policy, &trace);
      const Eigen::VectorXd lambda = perturb_magnitude(po.lambda, aug.delta, rng);
      std::vector<int> ops = sample_ops(po.p, aug.k, rng);
      if (keep_relaxation) {
        out.composed.push_back(forward_sampled_backward_relaxed(source, po.p, lambda, std::move(ops), aug.renormalize,
                                                                registry, draws, aug.relaxation));
        augmented = out.composed.back().forward_image;
      } else {
        augmented = compose_sampled(source, ops, lambda, registry, draws);
      }
      out.traces.push_back(std::move(trace));
    } else {
      const Eigen::VectorXd lambda = fixed_policy_magnitudes(registry, rng);
      const std::vector<int> ops = sample_ops(uniform, aug.k, rng);
      augmented = compose_sampled(source, ops, lambda, registry, draws);
    }
    out.x.col(out.gated[j]) = augmented.pixels.matrix();
  }
  return out;
}

Eigen::VectorXd virtual_step(const TaskModel& model, const Eigen::VectorXd& w, const Eigen::MatrixXd& x,
                             std::span<const int> labels, double alpha) {
  const LossGradients g = loss_and_gradients(model, w, x, labels);
  if (!std::isfinite(g.loss)) throw TrainingError("non-finite training loss in the virtual step");
  return w - alpha * g.grad_w;
}

Eigen::VectorXd policy_gradient_from_upstream(const Eigen::MatrixXd& upstream, const AugmentedBatch& batch,
                                              const PolicyNetwork& policy, const OpRegistry& registry) {
  if (batch.composed.size() != batch.gated.size() || batch.traces.size() != batch.gated.size())
    throw DimensionError("policy gradient needs the relaxation and policy trace of every augmented sample");
  if (upstream.cols() != batch.x.cols() || upstream.rows() != batch.x.rows())
    throw DimensionError("upstream gradient must match the augmented batch");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.num_params());
  for (std::size_t j = 0; j < batch.gated.size(); ++j) {
    const ComposedAugmentation& c = batch.composed[j];
    const Image u = column_image(upstream, batch.gated[j], c.source);
    const ComposedAugmentation::Gradients g = c.backward(u, registry, false);
    grad += policy_backward(policy, batch.traces[j], g.p, g.lambda);
  }
  return grad;
}

Hypergradient policy_hypergradient(const TaskModel& model, const Eigen::VectorXd& w, double alpha,
                                   const AugmentedBatch& batch, std::span<const int> train_labels,
                                   const Eigen::MatrixXd& x_val, std::span<const int> val_labels,
                                   const PolicyNetwork& policy, const OpRegistry& registry, bool second_order,
                                   double fd_scale) {
  Hypergradient h;
  const LossGradients tr = loss_and_gradients(model, w, batch.x, train_labels);
  h.train_loss = tr.loss;
  const Eigen::VectorXd w_hat = w - alpha * tr.grad_w;
  const LossGradients val = loss_and_gradients(model, w_hat, x_val, val_labels);
  h.val_loss = val.loss;
  if (!std::isfinite(tr.loss) || !std::isfinite(val.loss)) throw TrainingError("non-finite loss in the virtual step");
  const Eigen::VectorXd& v = val.grad_w;
  // No layer mixes batch columns and the loss is a batch mean, so the input
  // derivative of ungated columns is never needed: evaluate the gated columns
  // alone and rescale from their mean to the full-batch mean.
  h.upstream = Eigen::MatrixXd::Zero(batch.x.rows(), batch.x.cols());
  if (batch.gated.empty()) {
    h.theta = Eigen::VectorXd::Zero(policy.num_params());
    return h;
  }
  Eigen::MatrixXd xg(batch.x.rows(), Eigen::Index(batch.gated.size()));
  std::vector<int> yg(batch.gated.size());
  for (std::size_t j = 0; j < batch.gated.size(); ++j) {
    xg.col(Eigen::Index(j)) = batch.x.col(batch.gated[j]);
    yg[j] = train_labels[std::size_t(batch.gated[j])];
  }
  const double scale = -alpha * double(batch.gated.size()) / double(batch.x.cols());
  Eigen::MatrixXd ug;
  if (second_order) {
    ug = scale * mixed_input_gradient(model, w, v, xg, yg);
  } else {
    const double norm = v.norm();
    ug = Eigen::MatrixXd::Zero(xg.rows(), xg.cols());
    if (norm > 0.0) {
      const double eps = fd_scale / norm;
      const Eigen::MatrixXd plus = loss_and_gradients(model, w + eps * v, xg, yg, true).grad_x;
      const Eigen::MatrixXd minus = loss_and_gradients(model, w - eps * v, xg, yg, true).grad_x;
      ug = scale * (plus - minus) / (2.0 * eps);
    }
  }
  for (std::size_t j = 0; j < batch.gated.size(); ++j) h.upstream.col(batch.gated[j]) = ug.col(Eigen::Index(j));
  h.theta = policy_gradient_from_upstream(h.upstream, batch, policy, registry);
  return h;
}

TrainState init_train_state(Eigen::VectorXd w, PolicyNetwork policy, const BilevelConfig& config, std::uint64_t seed) {
  TrainState s;
  s.w = std::move(w);
  s.policy = std::move(policy);
  s.task_opt.momentum = config.momentum;
  s.task_opt.weight_decay = config.weight_decay;
  s.policy_opt.lr = config.beta;
  s.train_rng = make_stream(seed, 1);
  s.val_rng = make_stream(seed, 2);
  s.aug_rng = make_stream(seed, 3);
  return s;
}

void save_train_state(const std::string& path, const TrainState& s) {
  json j;
  j["format"] = "madaug-train-state-v1";
  j["w"] = vec_json(s.w);
  j["policy"] = {{"input_dim", s.policy.input_dim},
                 {"hidden_layers", s.policy.hidden_layers},
                 {"hidden_width", s.policy.hidden_width},
                 {"n_ops", s.policy.n_ops},
                 {"theta", vec_json(s.policy.theta)}};
  j["task_opt"] = {{"momentum", s.task_opt.momentum},
                   {"weight_decay", s.task_opt.weight_decay},
                   {"velocity", vec_json(s.task_opt.velocity)}};
  j["policy_opt"] = {{"lr", s.policy_opt.lr},   {"beta1", s.policy_opt.beta1}, {"beta2", s.policy_opt.beta2},
                     {"eps", s.policy_opt.eps}, {"m", vec_json(s.policy_opt.m)}, {"v", vec_json(s.policy_opt.v)},
                     {"t", s.policy_opt.t}};
  j["epoch"] = s.epoch;
  j["iteration"] = s.iteration;
  j["rng"] = {{"train", rng_state(s.train_rng)}, {"val", rng_state(s.val_rng)}, {"aug", rng_state(s.aug_rng)}};
  j["val_order"] = s.val_order;
  j["val_cursor"] = s.val_cursor;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write checkpoint " + path);
    out << j.dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_train_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint " + path);
  json j;
  try {
    in >> j;
    if (j.at("format") != "madaug-train-state-v1") throw ConfigError("unsupported checkpoint format in " + path);
    TrainState s;
    s.w = json_vec(j.at("w"));
    const json& p = j.at("policy");
    s.policy.input_dim = p.at("input_dim");
    s.policy.hidden_layers = p.at("hidden_layers");
    s.policy.hidden_width = p.at("hidden_width");
    s.policy.n_ops = p.at("n_ops");
    s.policy.theta = json_vec(p.at("theta"));
    if (s.policy.theta.size() != s.policy.num_params()) throw ConfigError("checkpoint policy size mismatch in " + path);
    const json& t = j.at("task_opt");
    s.task_opt.momentum = t.at("momentum");
    s.task_opt.weight_decay = t.at("weight_decay");
    s.task_opt.velocity = json_vec(t.at("velocity"));
    const json& a = j.at("policy_opt");
    s.policy_opt.lr = a.at("lr");
    s.policy_opt.beta1 = a.at("beta1");
    s.policy_opt.beta2 = a.at("beta2");
    s.policy_opt.eps = a.at("eps");
    s.policy_opt.m = json_vec(a.at("m"));
    s.policy_opt.v = json_vec(a.at("v"));
    s.policy_opt.t = a.at("t");
    s.epoch = j.at("epoch");
    s.iteration = j.at("iteration");
    restore_rng_state(s.train_rng, j.at("rng").at("train"));
    restore_rng_state(s.val_rng, j.at("rng").at("val"));
    restore_rng_state(s.aug_rng, j.at("rng").at("aug"));
    s.val_order = j.at("val_order").get<std::vector<std::size_t>>();
    s.val_cursor = j.at("val_cursor");
    return s;
  } catch (const json::exception& e) {
    throw ConfigError("malformed checkpoint " + path + ": " + e.what());
  }
}

std::string to_json_line(const EpochMetrics& m) {
  json j;
  j["epoch"] = m.epoch;
  j["curriculum_p"] = m.curriculum_p;
  j["augmented_fraction"] = m.augmented_fraction;
  j["train_loss"] = number_or_null(m.train_loss);
  j["val_loss"] = number_or_null(m.val_loss);
  j["test_accuracy"] = m.test_accuracy;
  json per_class = json::array();
  for (Eigen::Index c = 0; c < m.per_class_accuracy.size(); ++c) per_class.push_back(number_or_null(m.per_class_accuracy[c]));
  j["per_class_accuracy"] = per_class;
  j["similarity_metric"] = "mean_centred_pixel_cosine";
  j["similarity_mean"] = number_or_null(m.similarity_mean);
  j["similarity_augmented"] = number_or_null(m.similarity_augmented);
  j["lr"] = m.lr;
  j["policy_entropy"] = number_or_null(m.policy_entropy);
  return j.dump();
}

EpochMetrics metrics_from_json_line(const std::string& line) {
  EpochMetrics m;
  try {
    const json j = json::parse(line);
    m.epoch = j.at("epoch");
    m.curriculum_p = j.at("curriculum_p");
    m.augmented_fraction = j.at("augmented_fraction");
    m.train_loss = number_or_nan(j.at("train_loss"));
    m.val_loss = number_or_nan(j.at("val_loss"));
    m.test_accuracy = j.at("test_accuracy");
    const json& pc = j.at("per_class_accuracy");
    m.per_class_accuracy.resize(Eigen::Index(pc.size()));
    for (std::size_t c = 0; c < pc.size(); ++c) m.per_class_accuracy[Eigen::Index(c)] = number_or_nan(pc[c]);
    m.similarity_mean = number_or_nan(j.at("similarity_mean"));
    m.similarity_augmented = number_or_nan(j.at("similarity_augmented"));
    m.lr = j.at("lr");
    m.policy_entropy = number_or_nan(j.value("policy_entropy", json(nullptr)));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed metrics record: ") + e.what());
  }
  return m;
}

std::vector<EpochMetrics> train_loop(TrainState& state, const TrainingProblem& problem, const BilevelConfig& config,
                                     const CurriculumSchedule& schedule, const AugmentConfig& aug,
                                     const LoopOptions& options) {
  if (!problem.model || !problem.registry || !problem.data || !problem.split)
    throw ConfigError("train_loop: incomplete training problem");
  const TaskModel& model = *problem.model;
  const OpRegistry& registry = *problem.registry;
  const Dataset& data = *problem.data;
  const DatasetSplit& split = *problem.split;
  config.validate();
  schedule.validate();
  aug.validate(registry.size());
  validate_split(split, data.size());
  if (split.train.empty() || split.val.empty() || split.test.empty())
    throw ConfigError("train_loop: train, val and test splits must be non-empty");
  if (state.w.size() != model.num_params()) throw DimensionError("train_loop: parameter vector does not fit the model");
  if (uses_policy_network(aug.mode)) {
    if (state.policy.input_dim != model.feature_dim())
      throw DimensionError("policy input_dim " + std::to_string(state.policy.input_dim) +
                           " does not match the task model feature_dim " + std::to_string(model.feature_dim()));
    if (std::size_t(state.policy.n_ops) != registry.size())
      throw DimensionError("policy n_ops " + std::to_string(state.policy.n_ops) + " != registry size " +
                           std::to_string(registry.size()));
  }

  const Subset train = gather(data, split.train);
  const Subset val = gather(data, split.val);
  const Subset test = gather(data, split.test);
  const Eigen::MatrixXd x_val_all = to_batch(std::span<const Image* const>(val.images));
  const Eigen::MatrixXd x_test = to_batch(std::span<const Image* const>(test.images));

  const std::size_t n_train = train.images.size();
  const std::int64_t steps_per_epoch = std::int64_t((n_train + std::size_t(config.n_tr) - 1) / std::size_t(config.n_tr));
  const std::int64_t total_steps = steps_per_epoch * config.epochs;

  if (state.val_order.empty()) {
    state.val_order.resize(val.images.size());
    for (std::size_t i = 0; i < state.val_order.size(); ++i) state.val_order[i] = i;
    shuffle(state.val_order, state.val_rng);
    state.val_cursor = 0;
  }
  auto next_val_batch = [&](std::vector<int>& labels) {
    const std::size_t n = std::min<std::size_t>(std::size_t(config.n_val), state.val_order.size());
    Eigen::MatrixXd x(x_val_all.rows(), Eigen::Index(n));
    labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (state.val_cursor == state.val_order.size()) {
        shuffle(state.val_order, state.val_rng);
        state.val_cursor = 0;
      }
      const std::size_t idx = state.val_order[state.val_cursor++];
      x.col(Eigen::Index(i)) = x_val_all.col(Eigen::Index(idx));
      labels[i] = val.labels[idx];
    }
    return x;
  };

  std::vector<EpochMetrics> log;
  int ran = 0;
  for (int epoch = state.epoch; epoch < config.epochs; ++epoch) {
    if (options.stop_after_epochs >= 0 && ran >= options.stop_after_epochs) break;
    const auto start_time = std::chrono::steady_clock::now();
    EpochMetrics m;
    m.epoch = epoch;
    m.curriculum_p = curriculum_probability(epoch, schedule);
    const bool train_policy = config.beta > 0.0 && policy_trainable(aug, epoch, config.epochs);

    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
    shuffle(order, state.train_rng);

    double loss_sum = 0.0, sim_sum = 0.0, sim_aug_sum = 0.0, entropy_sum = 0.0;
    std::size_t seen = 0, augmented = 0, entropy_count = 0;
    std::vector<int> val_labels;
    for (std::size_t start = 0; start < n_train; start += std::size_t(config.n_tr)) {
      const std::size_t b = std::min<std::size_t>(std::size_t(config.n_tr), n_train - start);
      std::vector<const Image*> images(b);
      std::vector<int> labels(b);
      for (std::size_t i = 0; i < b; ++i) {
        images[i] = train.images[order[start + i]];
        labels[i] = train.labels[order[start + i]];
      }
      const double p_gate = aug.mode == PolicyMode::None ? 0.0 : m.curriculum_p;
      const std::vector<char> mask = gate_batch(int(b), p_gate, state.aug_rng);

      Eigen::MatrixXd features;
      std::vector<const Image*> gated_images;
      for (std::size_t i = 0; i < b; ++i)
        if (mask[i]) gated_images.push_back(images[i]);
      if (uses_features(aug.mode) && !gated_images.empty())
        features = model.features(state.w, to_batch(std::span<const Image* const>(gated_images)));

      const double lr = cosine_lr(config.alpha, state.iteration, total_steps);
      if (train_policy && !gated_images.empty()) {
        for (int step = 0; step < config.s; ++step) {
          const AugmentedBatch ab =
              augment_batch(images, mask, features, state.policy, registry, aug, train.images, state.aug_rng, true);
          const Eigen::MatrixXd x_val = next_val_batch(val_labels);
          const Hypergradient hg = policy_hypergradient(model, state.w, lr, ab, labels, x_val, val_labels,
                                                        state.policy, registry, config.second_order, config.fd_scale);
          require_finite(hg.theta, "policy gradient", epoch, state.iteration);
          state.policy_opt.lr = config.beta;
          state.policy_opt.step(state.policy.theta, hg.theta);
          require_finite(state.policy.theta, "policy parameters", epoch, state.iteration);
        }
      }

      const AugmentedBatch ab =
          augment_batch(images, mask, features, state.policy, registry, aug, train.images, state.aug_rng, false);
      LossGradients g = loss_and_gradients(model, state.w, ab.x, labels);
      if (!std::isfinite(g.loss))
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) + ", iteration " +
                            std::to_string(state.iteration));
      require_finite(g.grad_w, "task gradient", epoch, state.iteration);
      clip_grad_norm(g.grad_w, config.grad_clip);
      state.task_opt.step(state.w, g.grad_w, lr);
      require_finite(state.w, "task parameters", epoch, state.iteration);
      ++state.iteration;

      loss_sum += g.loss * double(b);
      seen += b;
      for (std::size_t j = 0; j < ab.gated.size(); ++j) {
        const Image* src = images[std::size_t(ab.gated[j])];
        const double sim = augmentation_similarity(*src, column_image(ab.x, ab.gated[j], *src));
        sim_aug_sum += sim;
        sim_sum += sim;
      }
      augmented += ab.gated.size();
      sim_sum += double(b - ab.gated.size());
      for (const PolicyTrace& t : ab.traces) {
        double h = 0.0;
        for (Eigen::Index i = 0; i < t.output.p.size(); ++i)
          if (t.output.p[i] > 0.0) h -= t.output.p[i] * std::log(t.output.p[i]);
        entropy_sum += h;
        ++entropy_count;
      }
    }

    m.train_loss = loss_sum / double(seen);
    m.augmented_fraction = double(augmented) / double(seen);
    m.similarity_mean = sim_sum / double(seen);
    m.similarity_augmented = augmented ? sim_aug_sum / double(augmented) : kNaN;
    m.policy_entropy = entropy_count ? entropy_sum / double(entropy_count) : kNaN;
    m.val_loss = chunked_loss(model, state.w, x_val_all, val.labels);
    const ClassAccuracy acc =
        per_class_accuracy(predict(model, state.w, x_test), test.labels, model.num_classes());
    m.test_accuracy = acc.overall;
    m.per_class_accuracy = acc.per_class;
    m.lr = cosine_lr(config.alpha, state.iteration, total_steps);
    state.epoch = epoch + 1;
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();

    if (options.checkpoint_every > 0 && !options.checkpoint_dir.empty() && state.epoch % options.checkpoint_every == 0) {
      std::filesystem::create_directories(options.checkpoint_dir);
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_epoch_%03d.json", state.epoch);
      save_train_state((std::filesystem::path(options.checkpoint_dir) / name).string(), state);
    }
    if (options.on_epoch) options.on_epoch(m);
    log.push_back(std::move(m));
    ++ran;
  }
  return log;
}

}  // namespace madaug
