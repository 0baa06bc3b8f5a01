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

#include "madaug/policy.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "madaug/errors.hpp"

namespace madaug {

PolicyNetwork PolicyNetwork::create(int input_dim, int n_ops, int hidden_layers, int hidden_width, Rng& rng) {
  if (input_dim <= 0 || n_ops <= 0) throw ConfigError("policy network needs positive input_dim and n_ops");
  if (hidden_layers < 0) throw ConfigError("policy hidden layer count must be non-negative");
  PolicyNetwork net;
  net.input_dim = input_dim;
  net.n_ops = n_ops;
  net.hidden_layers = hidden_layers;
  net.hidden_width = hidden_layers > 0 ? (hidden_width > 0 ? hidden_width : input_dim) : 0;
  net.theta = Eigen::VectorXd::Zero(net.num_params());
  for (int l = 0; l < hidden_layers; ++l) {
    const double scale = std::sqrt(2.0 / net.layer_in(l));
    const Eigen::Index weights = Eigen::Index(net.layer_in(l)) * net.layer_out(l);
    for (Eigen::Index i = 0; i < weights; ++i) net.theta[net.layer_offset(l) + i] = scale * normal(rng);
  }
  return net;
}

Eigen::Index PolicyNetwork::num_params() const { return layer_offset(layer_count()); }

Eigen::Index PolicyNetwork::layer_offset(int layer) const {
  Eigen::Index offset = 0;
  for (int l = 0; l < layer; ++l) offset += Eigen::Index(layer_out(l)) * (layer_in(l) + 1);
  return offset;
}

PolicyOutput policy_forward(const Eigen::VectorXd& features, const PolicyNetwork& net, PolicyTrace* trace) {
  if (features.size() != net.input_dim)
    throw DimensionError("policy input has " + std::to_string(features.size()) + " features, network expects " +
                         std::to_string(net.input_dim));
  if (trace) trace->inputs.clear();
  Eigen::VectorXd a = features;
  for (int l = 0; l < net.layer_count(); ++l) {
    if (trace) trace->inputs.push_back(a);
    const int in = net.layer_in(l), out = net.layer_out(l);
    const Eigen::Index off = net.layer_offset(l);
    Eigen::Map<const Eigen::MatrixXd> weight(net.theta.data() + off, out, in);
    Eigen::Map<const Eigen::VectorXd> bias(net.theta.data() + off + Eigen::Index(out) * in, out);
    Eigen::VectorXd z = weight * a + bias;
    a = l < net.hidden_layers ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
  }
  const int n = net.n_ops;
  PolicyOutput result;
  const Eigen::VectorXd logits = a.head(n);
  const Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
  result.p = (e / e.sum()).matrix();
  result.lambda = (1.0 / (1.0 + (-a.tail(n).array()).exp())).matrix();
  if (trace) trace->output = result;
  return result;
}

Eigen::VectorXd policy_backward(const PolicyNetwork& net, const PolicyTrace& trace, const Eigen::VectorXd& grad_p,
                                const Eigen::VectorXd& grad_lambda) {
  const int n = net.n_ops;
  if (grad_p.size() != n || grad_lambda.size() != n) throw DimensionError("policy_backward: gradient length != n_ops");
  if (int(trace.inputs.size()) != net.layer_count()) throw DimensionError("policy_backward: trace does not match net");
  const auto& p = trace.output.p;
  const auto& lam = trace.output.lambda;
  Eigen::VectorXd delta(2 * n);
  delta.head(n) = p.cwiseProduct(grad_p - Eigen::VectorXd::Constant(n, p.dot(grad_p)));
  delta.tail(n) = grad_lambda.cwiseProduct(lam.cwiseProduct(Eigen::VectorXd::Ones(n) - lam));

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.num_params());
  for (int l = net.layer_count() - 1; l >= 0; --l) {
    const int in = net.layer_in(l), out = net.layer_out(l);
    const Eigen::Index off = net.layer_offset(l);
    const Eigen::VectorXd& a = trace.inputs[std::size_t(l)];
    Eigen::Map<Eigen::MatrixXd>(grad.data() + off, out, in) = delta * a.transpose();
    grad.segment(off + Eigen::Index(out) * in, out) = delta;
    if (l == 0) break;
    Eigen::Map<const Eigen::MatrixXd> weight(net.theta.data() + off, out, in);
    // `a` is the ReLU output of the previous layer.
    delta = (weight.transpose() * delta).cwiseProduct((a.array() > 0.0).cast<double>().matrix());
  }
  return grad;
}

std::vector<int> sample_ops(const Eigen::VectorXd& p, int k, Rng& rng) {
  const int n = int(p.size());
  if (k < 0 || k > n) throw ConfigError("cannot draw " + std::to_string(k) + " distinct ops from " + std::to_string(n));
  Eigen::VectorXd mass = p.cwiseMax(0.0);
  std::vector<int> picked;
  picked.reserve(std::size_t(k));
  for (int draw = 0; draw < k; ++draw) {
    const double total = mass.sum();
    if (!(total > 0.0)) throw DegenerateDistributionError("no probability mass left for op sampling");
    const double target = uniform01(rng) * total;
    double acc = 0.0;
    int chosen = -1;
    for (int i = 0; i < n; ++i) {
      if (mass[i] <= 0.0) continue;
      acc += mass[i];
      chosen = i;
      if (target < acc) break;
    }
    picked.push_back(chosen);
    mass[chosen] = 0.0;
  }
  return picked;
}

void save_policy_checkpoint(const std::string& path, const PolicyNetwork& net, const OpRegistry& registry) {
  nlohmann::json names = nlohmann::json::array();
  for (const auto& op : registry.ops()) names.push_back(op.name);
  const nlohmann::json j{{"format", "madaug-policy-v1"},
                         {"input_dim", net.input_dim},
                         {"hidden_layers", net.hidden_layers},
                         {"hidden_width", net.hidden_width},
                         {"n_ops", net.n_ops},
                         {"registry_fingerprint", registry.fingerprint()},
                         {"ops", names},
                         {"theta", std::vector<double>(net.theta.data(), net.theta.data() + net.theta.size())}};
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write policy checkpoint " + path);
  out << j.dump() << "\n";
}

PolicyCheckpoint load_policy_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open policy checkpoint " + path);
  nlohmann::json j;
  try {
    in >> j;
    PolicyCheckpoint c;
    c.net.input_dim = j.at("input_dim").get<int>();
    c.net.hidden_layers = j.at("hidden_layers").get<int>();
    c.net.hidden_width = j.at("hidden_width").get<int>();
    c.net.n_ops = j.at("n_ops").get<int>();
    const auto theta = j.at("theta").get<std::vector<double>>();
    c.net.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), Eigen::Index(theta.size()));
    c.registry_fingerprint = j.at("registry_fingerprint").get<std::string>();
    c.op_names = j.value("ops", std::vector<std::string>{});
    if (c.net.theta.size() != c.net.num_params()) throw ConfigError("policy checkpoint parameter count mismatch");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed policy checkpoint " + path + ": " + e.what());
  }
}

void check_policy_compatible(const PolicyCheckpoint& checkpoint, int feature_dim, const OpRegistry& registry) {
  if (checkpoint.net.input_dim != feature_dim)
    throw DimensionError("policy checkpoint expects input_dim " + std::to_string(checkpoint.net.input_dim) +
                         " but the target task model has feature_dim " + std::to_string(feature_dim));
  if (checkpoint.net.n_ops != int(registry.size()) || checkpoint.registry_fingerprint != registry.fingerprint())
    throw ConfigError("policy checkpoint op registry (" + checkpoint.registry_fingerprint + ", " +
                      std::to_string(checkpoint.net.n_ops) + " ops) does not match the configured registry (" +
                      registry.fingerprint() + ", " + std::to_string(registry.size()) + " ops)");
}

}  // namespace madaug
