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

#include "madaug/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "madaug/errors.hpp"

namespace madaug {
namespace {

using nlohmann::json;

// Written with every resolved config; ignored on input.
constexpr const char* kInterpretationKey = "interpretation";

json interpretation() {
  return {{"s", "consecutive policy updates per task step, each with its own virtual step and validation batch"},
          {"epoch_index", "curriculum index t is 0-based; the record for epoch t follows t + 1 completed epochs"},
          {"similarity_metric", "mean_centred_pixel_cosine"},
          {"virtual_step", "plain SGD at the current cosine-annealed task learning rate"}};
}

json to_json_value(const ExperimentConfig& c) {
  const DatasetSpec& d = c.dataset;
  const BilevelConfig& b = c.bilevel;
  const AugmentConfig& a = c.augment;
  return {
      {"dataset",
       {{"kind", d.kind},
        {"variant", d.variant},
        {"path", d.path},
        {"num_images", d.num_images},
        {"height", d.height},
        {"width", d.width},
        {"seed", d.seed}}},
      {"split",
       {{"n_train", c.split.n_train},
        {"n_val", c.split.n_val},
        {"n_test", c.split.n_test},
        {"stratify", c.split.stratify},
        {"seed", c.split.seed}}},
      {"model",
       {{"arch", std::string(architecture_name(c.model.arch))},
        {"width", c.model.width},
        {"hidden", c.model.hidden},
        {"channel_mean", c.model.channel_mean},
        {"channel_std", c.model.channel_std}}},
      {"bilevel",
       {{"alpha", b.alpha},
        {"beta", b.beta},
        {"n_tr", b.n_tr},
        {"n_val", b.n_val},
        {"s", b.s},
        {"epochs", b.epochs},
        {"second_order", b.second_order},
        {"momentum", b.momentum},
        {"weight_decay", b.weight_decay},
        {"grad_clip", b.grad_clip},
        {"fd_scale", b.fd_scale}}},
      {"curriculum", {{"mode", std::string(curriculum_mode_name(c.curriculum.mode))}, {"tau", c.curriculum.tau}}},
      {"augment",
       {{"mode", std::string(policy_mode_name(a.mode))},
        {"k", a.k},
        {"delta", a.delta},
        {"hidden_layers", a.hidden_layers},
        {"hidden_width", a.hidden_width},
        {"renormalize", a.renormalize},
        {"relaxation", std::string(relaxation_mode_name(a.relaxation))},
        {"warmup_fraction", a.warmup_fraction}}},
      {"ops", c.ops},
      {"reserved_slot", c.reserved_slot},
      {"ops_file", c.ops_file},
      {"init_policy", c.init_policy},
      {"seeds", c.seeds},
      {"output_dir", c.output_dir},
      {"checkpoint_every", c.checkpoint_every},
  };
}

ExperimentConfig from_json_value(const json& j) {
  ExperimentConfig c;
  const json& d = j.at("dataset");
  c.dataset.kind = d.at("kind").get<std::string>();
  c.dataset.variant = d.at("variant").get<std::string>();
  c.dataset.path = d.at("path").get<std::string>();
  c.dataset.num_images = d.at("num_images").get<int>();
  c.dataset.height = d.at("height").get<int>();
  c.dataset.width = d.at("width").get<int>();
  c.dataset.seed = d.at("seed").get<std::uint64_t>();
  const json& s = j.at("split");
  c.split.n_train = s.at("n_train").get<int>();
  c.split.n_val = s.at("n_val").get<int>();
  c.split.n_test = s.at("n_test").get<long>();
  c.split.stratify = s.at("stratify").get<bool>();
  c.split.seed = s.at("seed").get<std::uint64_t>();
  const json& m = j.at("model");
  c.model.arch = architecture_from_name(m.at("arch").get<std::string>());
  c.model.width = m.at("width").get<int>();
  c.model.hidden = m.at("hidden").get<int>();
  c.model.channel_mean = m.at("channel_mean").get<std::vector<double>>();
  c.model.channel_std = m.at("channel_std").get<std::vector<double>>();
  const json& b = j.at("bilevel");
  c.bilevel.alpha = b.at("alpha").get<double>();
  c.bilevel.beta = b.at("beta").get<double>();
  c.bilevel.n_tr = b.at("n_tr").get<int>();
  c.bilevel.n_val = b.at("n_val").get<int>();
  c.bilevel.s = b.at("s").get<int>();
  c.bilevel.epochs = b.at("epochs").get<int>();
  c.bilevel.second_order = b.at("second_order").get<bool>();
  c.bilevel.momentum = b.at("momentum").get<double>();
  c.bilevel.weight_decay = b.at("weight_decay").get<double>();
  c.bilevel.grad_clip = b.at("grad_clip").get<double>();
  c.bilevel.fd_scale = b.at("fd_scale").get<double>();
  const json& cu = j.at("curriculum");
  c.curriculum.mode = curriculum_mode_from_name(cu.at("mode").get<std::string>());
  c.curriculum.tau = cu.at("tau").get<double>();
  const json& a = j.at("augment");
  c.augment.mode = policy_mode_from_name(a.at("mode").get<std::string>());
  c.augment.k = a.at("k").get<int>();
  c.augment.delta = a.at("delta").get<double>();
  c.augment.hidden_layers = a.at("hidden_layers").get<int>();
  c.augment.hidden_width = a.at("hidden_width").get<int>();
  c.augment.renormalize = a.at("renormalize").get<bool>();
  c.augment.relaxation = relaxation_mode_from_name(a.at("relaxation").get<std::string>());
  c.augment.warmup_fraction = a.at("warmup_fraction").get<double>();
  c.ops = j.at("ops").get<std::vector<std::string>>();
  c.reserved_slot = j.at("reserved_slot").get<std::string>();
  c.ops_file = j.at("ops_file").get<std::string>();
  c.init_policy = j.at("init_policy").get<std::string>();
  c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.output_dir = j.at("output_dir").get<std::string>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  return c;
}

// Every key of `patch` must exist in `reference`; objects are checked
// recursively, arrays and scalars replace wholesale.
void check_keys(const json& patch, const json& reference, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError("config " + (prefix.empty() ? "root" : prefix) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    if (prefix.empty() && key == kInterpretationKey) continue;
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!reference.contains(key)) throw ConfigError("unknown config key: " + path);
    if (reference.at(key).is_object()) check_keys(value, reference.at(key), path);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.kind != "synthetic" && dataset.kind != "cifar10")
    throw ConfigError("dataset.kind must be synthetic or cifar10, got " + dataset.kind);
  if (dataset.kind == "synthetic") {
    if (dataset.variant != "A" && dataset.variant != "B")
      throw ConfigError("dataset.variant must be A or B, got " + dataset.variant);
    if (dataset.num_images < 1 || dataset.height < 8 || dataset.width < 8)
      throw ConfigError("dataset.num_images must be >= 1 and the image sides >= 8");
  }
  if (split.n_train < 1 || split.n_val < 1) throw ConfigError("split.n_train and split.n_val must be >= 1");
  if (model.width < 1 || model.hidden < 1) throw ConfigError("model.width and model.hidden must be >= 1");
  bilevel.validate();
  curriculum.validate();
  if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  augment.validate(build_registry(*this).size());
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  // At width 8 the small CNN lacks the capacity to profit from augmentation
  // on the synthetic shapes; width 16 does.
  c.model.width = 16;
  c.bilevel.n_tr = 32;
  c.bilevel.n_val = 32;
  return c;
}

std::string config_to_json(const ExperimentConfig& config) {
  json j = to_json_value(config);
  j[kInterpretationKey] = interpretation();
  return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text, const ExperimentConfig& base) {
  json patch;
  try {
    patch = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  json merged = to_json_value(base);
  check_keys(patch, merged, "");
  patch.erase(kInterpretationKey);
  merged.merge_patch(patch);
  try {
    return from_json_value(merged);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config has a field of the wrong type: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path, const ExperimentConfig& base) {
  return config_from_json(read_file(path), base);
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t dot; (dot = rest.find('.')) != std::string::npos; rest = rest.substr(dot + 1))
    parts.push_back(rest.substr(0, dot));
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  config = config_from_json(patch.dump(), config);
}

OpRegistry build_registry(const ExperimentConfig& config) {
  if (!config.ops_file.empty()) return OpRegistry::load(config.ops_file);
  if (!config.ops.empty()) return OpRegistry::from_names(config.ops);
  return OpRegistry::standard(config.reserved_slot);
}

}  // namespace madaug
