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

#include "madaug/gradcheck.hpp"

#include <algorithm>
#include <string>

#include "madaug/bilevel.hpp"
#include "madaug/composer.hpp"
#include "madaug/policy.hpp"
#include "madaug/task_model.hpp"

namespace madaug {
namespace {

Eigen::MatrixXd random_pixels(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = uniform(rng, 0.1, 0.9);
  return x;
}

Image random_image(int c, int h, int w, Rng& rng) {
  Image img(c, h, w);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.pixels[i] = uniform(rng, 0.1, 0.9);
  return img;
}

Eigen::VectorXd flat(const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

void check_task_model(Architecture arch, Rng& rng, std::vector<CheckResult>& out) {
  const std::string name(architecture_name(arch));
  ModelSpec spec;
  spec.arch = arch;
  spec.width = 2;
  spec.hidden = 5;
  const ImageShape shape{3, 8, 8};
  BuiltModel m = build_model(spec, shape, 3, rng);
  for (Eigen::Index i = 0; i < m.w.size(); ++i) m.w[i] += 0.1 * normal(rng);
  const Eigen::MatrixXd x = random_pixels(shape.size(), 4, rng);
  const std::vector<int> y = {0, 1, 2, 1};
  const LossGradients g = loss_and_gradients(m.model, m.w, x, y, true);

  const auto loss_w = [&](const Eigen::VectorXd& w) { return mean_loss(m.model, w, x, y); };
  out.push_back({name + " weight gradient", relative_error(g.grad_w, central_difference(loss_w, m.w, 1e-5)), 1e-5});

  const auto loss_x = [&](const Eigen::VectorXd& v) {
    return mean_loss(m.model, m.w, Eigen::Map<const Eigen::MatrixXd>(v.data(), x.rows(), x.cols()), y);
  };
  out.push_back({name + " input gradient", relative_error(flat(g.grad_x), central_difference(loss_x, flat(x), 1e-5)),
                 1e-5});

  Eigen::VectorXd dir(m.w.size());
  for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = normal(rng);
  const Eigen::MatrixXd mixed = mixed_input_gradient(m.model, m.w, dir, x, y);
  const double h = 1e-5;
  const Eigen::MatrixXd fd = (loss_and_gradients(m.model, m.w + h * dir, x, y, true).grad_x -
                              loss_and_gradients(m.model, m.w - h * dir, x, y, true).grad_x) /
                             (2.0 * h);
  out.push_back({name + " mixed input gradient", relative_error(flat(mixed), flat(fd)), 1e-5});
}

void check_policy_network(Rng& rng, std::vector<CheckResult>& out) {
  PolicyNetwork net = PolicyNetwork::create(5, 4, 1, 6, rng);
  for (Eigen::Index i = 0; i < net.theta.size(); ++i) net.theta[i] += 0.3 * normal(rng);
  Eigen::VectorXd feat(5), gp(4), gl(4);
  for (Eigen::Index i = 0; i < 5; ++i) feat[i] = normal(rng);
  for (Eigen::Index i = 0; i < 4; ++i) gp[i] = normal(rng), gl[i] = normal(rng);
  PolicyTrace trace;
  policy_forward(feat, net, &trace);
  const Eigen::VectorXd analytic = policy_backward(net, trace, gp, gl);
  const auto f = [&](const Eigen::VectorXd& theta) {
    PolicyNetwork n = net;
    n.theta = theta;
    const PolicyOutput o = policy_forward(feat, n);
    return gp.dot(o.p) + gl.dot(o.lambda);
  };
  out.push_back({"policy network gradient", relative_error(analytic, central_difference(f, net.theta, 1e-6)), 1e-6});
}

void check_relaxation(Rng& rng, std::vector<CheckResult>& out) {
  const OpRegistry reg = OpRegistry::from_names({"Brightness", "Contrast", "Color", "Sharpness"});
  const Image x = random_image(3, 8, 8, rng);
  Eigen::VectorXd p(4), lambda(4);
  for (Eigen::Index i = 0; i < 4; ++i) p[i] = uniform(rng, 0.1, 1.0), lambda[i] = uniform(rng, 0.2, 0.8);
  p /= p.sum();
  const Image u = random_image(3, 8, 8, rng);
  const RelaxedGradient g = relaxed_composition_vjp(x, p, lambda, true, reg, u);
  const auto fp = [&](const Eigen::VectorXd& q) {
    return (u.pixels * relaxed_composition(x, q, lambda, true, reg).pixels).sum();
  };
  out.push_back({"relaxed composition p gradient", relative_error(g.p, central_difference(fp, p, 1e-6)), 1e-6});
  const auto fx = [&](const Eigen::VectorXd& v) {
    return (u.pixels * relaxed_composition(Image(3, 8, 8, v.array()), p, lambda, true, reg).pixels).sum();
  };
  out.push_back({"relaxed composition input gradient",
                 relative_error(g.x.pixels.matrix(), central_difference(fx, x.pixels.matrix(), 1e-6)), 1e-5});
}

// L_val(w - alpha grad L_tr(w, x(theta))) on a two-layer model with 26
// parameters and three continuous ops; one of four samples is not augmented.
void check_hypergradient(Rng& rng, std::vector<CheckResult>& out, bool second_order) {
  const ImageShape shape{3, 8, 8};
  layers::Standardize st;
  st.channels = 3;
  st.plane = 64;
  st.mean.assign(3, 0.5);
  st.inv_std.assign(3, 4.0);
  layers::GlobalAvgPool gap{3, 64};
  layers::Dense d1{3, 4, 0};
  layers::Dense d2{4, 2, d1.num_params()};
  const TaskModel model({st, gap, d1, layers::Relu{}, d2}, shape);
  Eigen::VectorXd w(model.num_params());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = 0.7 * normal(rng);

  const OpRegistry reg = OpRegistry::from_names({"Brightness", "Contrast", "Color"});
  PolicyNetwork policy = PolicyNetwork::create(model.feature_dim(), 3, 0, 0, rng);
  for (Eigen::Index i = 0; i < policy.theta.size(); ++i) policy.theta[i] = 0.5 * normal(rng);

  std::vector<Image> images;
  for (int i = 0; i < 4; ++i) images.push_back(random_image(3, 8, 8, rng));
  std::vector<const Image*> ptrs;
  for (const Image& im : images) ptrs.push_back(&im);
  const std::vector<char> mask = {1, 0, 1, 1};
  const std::vector<int> labels = {0, 1, 1, 0};
  const Eigen::MatrixXd x_val = random_pixels(shape.size(), 3, rng);
  const std::vector<int> val_labels = {1, 0, 1};

  Eigen::MatrixXd features(model.feature_dim(), 3);
  for (int j = 0, i = 0; i < 4; ++i)
    if (mask[std::size_t(i)]) features.col(j++) = model.features(w, to_batch(std::span(&ptrs[std::size_t(i)], 1)));
  AugmentConfig aug;
  aug.delta = 0.0;
  const double alpha = 0.5;
  const AugmentedBatch batch = augment_batch(ptrs, mask, features, policy, reg, aug, {}, rng, true);
  const Hypergradient hg =
      policy_hypergradient(model, w, alpha, batch, labels, x_val, val_labels, policy, reg, second_order, 1e-3);

  const auto objective = [&](const Eigen::VectorXd& theta) {
    PolicyNetwork net = policy;
    net.theta = theta;
    Eigen::MatrixXd x = batch.x;
    for (std::size_t j = 0; j < batch.gated.size(); ++j) {
      const ComposedAugmentation& c = batch.composed[j];
      const PolicyOutput o = policy_forward(features.col(Eigen::Index(j)), net);
      Image::Pixels v = c.forward_image.pixels + relaxed_composition(c.source, o.p, c.lambda, true, reg).pixels -
                        relaxed_composition(c.source, c.p, c.lambda, true, reg).pixels;
      for (int m : c.sampled_indices)
        if (reg[std::size_t(m)].uses_magnitude) v += o.lambda[m] - c.lambda[m];
      x.col(batch.gated[j]) = v.matrix();
    }
    const Eigen::VectorXd w_hat = w - alpha * loss_and_gradients(model, w, x, labels).grad_w;
    return mean_loss(model, w_hat, x_val, val_labels);
  };
  const Eigen::VectorXd fd = central_difference(objective, policy.theta, 1e-5);
  out.push_back({std::string("policy hypergradient (") + (second_order ? "exact" : "finite-difference") + " mixed term)",
                 relative_error(hg.theta, fd), second_order ? 1e-5 : 1e-3});
}

}  // namespace

Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

std::vector<CheckResult> run_gradient_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng = make_stream(seed, 0x6c);
  for (Architecture arch : {Architecture::SmallCnn, Architecture::Mlp, Architecture::WideResnetTiny})
    check_task_model(arch, rng, out);
  check_policy_network(rng, out);
  check_relaxation(rng, out);
  check_hypergradient(rng, out, true);
  check_hypergradient(rng, out, false);
  return out;
}

}  // namespace madaug
