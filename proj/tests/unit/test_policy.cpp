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
#include <map>
#include <set>

#include "madaug/errors.hpp"
#include "madaug/policy.hpp"
#include "test_util.hpp"

using namespace madaug;
using madaug::testing::numeric_gradient;
using madaug::testing::rel_error;

namespace {

Eigen::VectorXd random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * normal(rng);
  return v;
}

}  // namespace

TEST_CASE("fresh network: uniform p and magnitudes of 0.5") {
  Rng rng = make_stream(4, 1);
  for (int h : {0, 1, 3}) {
    const PolicyNetwork net = PolicyNetwork::create(6, 17, h, 8, rng);
    const PolicyOutput o = policy_forward(random_vector(6, rng), net);
    CHECK((o.p.array() - 1.0 / 17.0).abs().maxCoeff() < 1e-15);
    CHECK((o.lambda.array() - 0.5).abs().maxCoeff() < 1e-15);
  }
  PolicyNetwork zero = PolicyNetwork::create(4, 5, 0, 0, rng);
  zero.theta.setZero();
  const PolicyOutput o = policy_forward(Eigen::VectorXd::Zero(4), zero);
  CHECK(o.p.isApprox(Eigen::VectorXd::Constant(5, 0.2)));
  CHECK(o.lambda.isApprox(Eigen::VectorXd::Constant(5, 0.5)));
}

TEST_CASE("h = 0 is one affine map: parameter count (2n) x (d + 1)") {
  Rng rng = make_stream(4, 2);
  CHECK(PolicyNetwork::create(64, 17, 0, 32, rng).num_params() == 34 * 65);
  // h = 2, width 8: 8 x 65 + 8 x 9 + 34 x 9.
  CHECK(PolicyNetwork::create(64, 17, 2, 8, rng).num_params() == 8 * 65 + 8 * 9 + 34 * 9);
}

TEST_CASE("outputs stay on the simplex and in [0, 1] for random parameters") {
  Rng rng = make_stream(4, 3);
  for (int trial = 0; trial < 200; ++trial) {
    PolicyNetwork net = PolicyNetwork::create(5, 7, trial % 3, 6, rng);
    net.theta = random_vector(net.num_params(), rng, 3.0);
    const PolicyOutput o = policy_forward(random_vector(5, rng, 4.0), net);
    CHECK(std::abs(o.p.sum() - 1.0) < 1e-6);
    CHECK(o.p.minCoeff() >= 0.0);
    CHECK(o.lambda.minCoeff() >= 0.0);
    CHECK(o.lambda.maxCoeff() <= 1.0);
  }
}

TEST_CASE("policy_forward is deterministic and checks the input size") {
  Rng rng = make_stream(4, 4);
  PolicyNetwork net = PolicyNetwork::create(5, 4, 1, 6, rng);
  net.theta = random_vector(net.num_params(), rng);
  const Eigen::VectorXd f = random_vector(5, rng);
  const PolicyOutput a = policy_forward(f, net), b = policy_forward(f, net);
  CHECK(a.p == b.p);
  CHECK(a.lambda == b.lambda);
  CHECK_THROWS_AS(policy_forward(random_vector(6, rng), net), DimensionError);
}

TEST_CASE("theta gradient of a scalar of (p, lambda) matches central differences") {
  Rng rng = make_stream(4, 5);
  for (int h : {0, 1, 2}) {
    PolicyNetwork net = PolicyNetwork::create(5, 4, h, 6, rng);
    net.theta = random_vector(net.num_params(), rng, 0.5);
    const Eigen::VectorXd features = random_vector(5, rng);
    const Eigen::VectorXd a = random_vector(4, rng), b = random_vector(4, rng);
    // Scalar: sum_i a_i p_i^2 + b_i lambda_i, so grad_p = 2 a p.
    PolicyTrace trace;
    const PolicyOutput o = policy_forward(features, net, &trace);
    const Eigen::VectorXd analytic =
        policy_backward(net, trace, Eigen::VectorXd(2.0 * a.cwiseProduct(o.p)), b);
    const auto f = [&](const Eigen::VectorXd& theta) {
      PolicyNetwork n = net;
      n.theta = theta;
      const PolicyOutput q = policy_forward(features, n);
      return a.dot(q.p.cwiseProduct(q.p)) + b.dot(q.lambda);
    };
    const double err = rel_error(analytic, numeric_gradient(f, net.theta, 1e-4));
    CHECK_MESSAGE(err < 1e-3, "h " << h << " err " << err);
  }
}

TEST_CASE("sample_ops: one-hot, distinctness and error paths") {
  Rng rng = make_stream(4, 6);
  Eigen::VectorXd onehot = Eigen::VectorXd::Zero(5);
  onehot[3] = 1.0;
  CHECK(sample_ops(onehot, 1, rng) == std::vector<int>{3});
  CHECK_THROWS_AS(sample_ops(Eigen::VectorXd::Constant(3, 1.0 / 3), 4, rng), ConfigError);
  CHECK_THROWS_AS(sample_ops(onehot, 2, rng), DegenerateDistributionError);

  Eigen::VectorXd p(6);
  p << 0.5, 0.2, 0.1, 0.1, 0.05, 0.05;
  for (int i = 0; i < 20000; ++i) {
    const auto ops = sample_ops(p, 3, rng);
    CHECK(std::set<int>(ops.begin(), ops.end()).size() == 3);
  }
}

TEST_CASE("sample_ops: unordered pair frequencies under uniform p over 4 ops") {
  Rng rng = make_stream(4, 7);
  const int draws = 40000;
  std::map<std::pair<int, int>, int> counts;
  for (int i = 0; i < draws; ++i) {
    const auto ops = sample_ops(Eigen::VectorXd::Constant(4, 0.25), 2, rng);
    counts[{std::min(ops[0], ops[1]), std::max(ops[0], ops[1])}]++;
  }
  REQUIRE(counts.size() == 6);
  const double q = 1.0 / 6.0, sigma = std::sqrt(q * (1 - q) / draws);
  for (const auto& [pair, c] : counts) CHECK(std::abs(double(c) / draws - q) < 3 * sigma);
}

TEST_CASE("sample_ops: first-draw frequencies follow a non-uniform p") {
  Rng rng = make_stream(4, 8);
  Eigen::VectorXd p(3);
  p << 0.6, 0.3, 0.1;
  const int draws = 30000;
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < draws; ++i) freq[sample_ops(p, 1, rng)[0]] += 1.0 / draws;
  for (int i = 0; i < 3; ++i) CHECK(std::abs(freq[i] - p[i]) < 3 * std::sqrt(p[i] * (1 - p[i]) / draws));
}

TEST_CASE("checkpoints round-trip and reject mismatched targets") {
  Rng rng = make_stream(4, 9);
  PolicyNetwork net = PolicyNetwork::create(32, 17, 1, 8, rng);
  net.theta = random_vector(net.num_params(), rng);
  const OpRegistry reg = OpRegistry::standard();
  const auto path = std::filesystem::temp_directory_path() / "madaug_test_policy.json";
  save_policy_checkpoint(path.string(), net, reg);
  const PolicyCheckpoint ckpt = load_policy_checkpoint(path.string());
  CHECK(ckpt.net.theta == net.theta);
  CHECK(ckpt.net.hidden_layers == 1);
  CHECK(ckpt.registry_fingerprint == reg.fingerprint());
  CHECK_NOTHROW(check_policy_compatible(ckpt, 32, reg));
  try {
    check_policy_compatible(ckpt, 64, reg);
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("32") != std::string::npos);
    CHECK(msg.find("64") != std::string::npos);
  }
  CHECK_THROWS_AS(check_policy_compatible(ckpt, 32, OpRegistry::standard("SamplePairing")), ConfigError);
  std::filesystem::remove(path);
}
