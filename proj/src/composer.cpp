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

#include "madaug/composer.hpp"

#include <algorithm>
#include <string>

#include "madaug/errors.hpp"

namespace madaug {
namespace {

thread_local std::uint64_t g_pair_count = 0;

// Below this pair mass a renormalised relaxation is undefined.
constexpr double kMinPairMass = 1e-12;

const OpDraw& draw_for(std::span<const OpDraw> draws, int op) {
  static const OpDraw kDefault{};
  return draws.empty() ? kDefault : draws[std::size_t(op)];
}

void check_inputs(const Eigen::VectorXd& p, const Eigen::VectorXd& lambda, const OpRegistry& registry,
                  std::span<const OpDraw> draws) {
  const auto n = Eigen::Index(registry.size());
  if (p.size() != n || lambda.size() != n)
    throw DimensionError("relaxation: p and lambda need one entry per registered op (" + std::to_string(n) + ")");
  if (!draws.empty() && Eigen::Index(draws.size()) != n) throw DimensionError("relaxation: one draw per op required");
}

// Calls fn(term, term_image) for every term. First-slot images are computed
// once per distinct first op; `first_image` receives op_a(x) for pair terms.
template <typename Fn>
void for_each_term_image(const Image& x, const Eigen::VectorXd& lambda, const OpRegistry& registry,
                         std::span<const OpDraw> draws, const std::vector<RelaxationTerm>& terms, Fn&& fn) {
  const int n = int(registry.size());
  for (int a = 0; a < n; ++a) {
    bool used = false;
    for (const auto& t : terms) used = used || t.first == a;
    if (!used) continue;
    const Image first = apply_op(x, registry[std::size_t(a)], lambda[a], draw_for(draws, a));
    for (const auto& t : terms) {
      if (t.first != a) continue;
      if (t.second < 0) {
        fn(t, first, first);
        continue;
      }
      ++g_pair_count;
      const Image both = apply_op(first, registry[std::size_t(t.second)], lambda[t.second], draw_for(draws, t.second));
      fn(t, both, first);
    }
  }
}

}  // namespace

std::string_view relaxation_mode_name(RelaxationMode mode) {
  return mode == RelaxationMode::FullPairSum ? "full_pair_sum" : "sampled_neighborhood";
}

RelaxationMode relaxation_mode_from_name(std::string_view name) {
  if (name == "full_pair_sum") return RelaxationMode::FullPairSum;
  if (name == "sampled_neighborhood") return RelaxationMode::SampledNeighborhood;
  throw ConfigError("unknown relaxation mode: " + std::string(name));
}

std::vector<RelaxationTerm> relaxation_terms(const Eigen::VectorXd& p, bool renormalize, RelaxationMode mode,
                                             std::span<const int> sampled, int k) {
  const int n = int(p.size());
  std::vector<RelaxationTerm> terms;
  if (k <= 1) {
    if (n < 1) throw ConfigError("relaxation needs at least one op");
    for (int a = 0; a < n; ++a) terms.push_back({a, -1, p[a]});
  } else {
    if (n < 2) throw ConfigError("pair relaxation needs at least two ops, got " + std::to_string(n));
    const bool restrict = mode == RelaxationMode::SampledNeighborhood;
    if (restrict && sampled.size() < 2) throw ConfigError("sampled_neighborhood relaxation needs the sampled pair");
    auto near = [&](int i) { return i == sampled[0] || i == sampled[1]; };
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (a != b && (!restrict || near(a) || near(b))) terms.push_back({a, b, p[a] * p[b]});
  }
  if (renormalize) {
    double mass = 0.0;
    for (const auto& t : terms) mass += t.weight;
    if (!(mass > kMinPairMass))
      throw DegenerateDistributionError("relaxation weights have no mass to renormalise (one-hot p?)");
    for (auto& t : terms) t.weight /= mass;
  }
  return terms;
}

Image compose_sampled(const Image& x, std::span<const int> ops, const Eigen::VectorXd& lambda,
                      const OpRegistry& registry, std::span<const OpDraw> draws) {
  if (lambda.size() != Eigen::Index(registry.size())) throw DimensionError("compose_sampled: lambda length != n_ops");
  if (!draws.empty() && draws.size() != registry.size()) throw DimensionError("compose_sampled: one draw per op");
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (ops[i] < 0 || std::size_t(ops[i]) >= registry.size()) throw DimensionError("compose_sampled: op index out of range");
    for (std::size_t j = 0; j < i; ++j)
      if (ops[i] == ops[j]) throw ConfigError("compose_sampled: duplicate op index " + std::to_string(ops[i]));
  }
  Image out = x;
  for (int op : ops) out = apply_op(out, registry[std::size_t(op)], lambda[op], draw_for(draws, op));
  return out;
}

Image relaxed_composition(const Image& x, const Eigen::VectorXd& p, const Eigen::VectorXd& lambda, bool renormalize,
                          const OpRegistry& registry, std::span<const OpDraw> draws, RelaxationMode mode,
                          std::span<const int> sampled, int k) {
  check_inputs(p, lambda, registry, draws);
  const auto terms = relaxation_terms(p, renormalize, mode, sampled, k);
  Image out(x.channels, x.height, x.width);
  for_each_term_image(x, lambda, registry, draws, terms,
                      [&](const RelaxationTerm& t, const Image& img, const Image&) { out.pixels += t.weight * img.pixels; });
  return out;
}

RelaxedGradient relaxed_composition_vjp(const Image& x, const Eigen::VectorXd& p, const Eigen::VectorXd& lambda,
                                        bool renormalize, const OpRegistry& registry, const Image& upstream,
                                        std::span<const OpDraw> draws, RelaxationMode mode,
                                        std::span<const int> sampled, int k, bool want_x) {
  check_inputs(p, lambda, registry, draws);
  require_same_shape(x, upstream, "relaxed_composition_vjp");
  // Unnormalised weights q_t and their normaliser Z; the renormalised weight
  // is q_t / Z.
  const auto terms = relaxation_terms(p, false, mode, sampled, k);
  double mass = 1.0;
  if (renormalize) {
    mass = 0.0;
    for (const auto& t : terms) mass += t.weight;
    if (!(mass > kMinPairMass))
      throw DegenerateDistributionError("relaxation weights have no mass to renormalise (one-hot p?)");
  }

  const int n = int(registry.size());
  std::vector<double> inner(terms.size(), 0.0);
  std::vector<Image> first_grad;  // sum_b w_ab * J_b^T u, evaluated at op_a(x)
  if (want_x) first_grad.assign(std::size_t(n), Image(x.channels, x.height, x.width));

  std::size_t idx = 0;
  std::vector<std::size_t> order;  // term index in visiting order
  for (int a = 0; a < n; ++a)
    for (std::size_t t = 0; t < terms.size(); ++t)
      if (terms[t].first == a) order.push_back(t);
  for_each_term_image(x, lambda, registry, draws, terms, [&](const RelaxationTerm& t, const Image& img, const Image& first) {
    const std::size_t ti = order[idx++];
    inner[ti] = (upstream.pixels * img.pixels).sum();
    if (!want_x) return;
    const double w = t.weight / mass;
    if (t.second < 0) {
      first_grad[std::size_t(t.first)].pixels += w * upstream.pixels;
    } else {
      const Image g = apply_op_vjp(first, registry[std::size_t(t.second)], lambda[t.second], upstream,
                                   draw_for(draws, t.second));
      first_grad[std::size_t(t.first)].pixels += w * g.pixels;
    }
  });

  // d/dp_j of sum_t (q_t / Z) c_t = sum_t dq_t/dp_j * (c_t / Z - S / Z^2),
  // S = sum_t q_t c_t; the S term vanishes without renormalisation.
  double weighted = 0.0;
  for (std::size_t t = 0; t < terms.size(); ++t) weighted += terms[t].weight * inner[t];
  RelaxedGradient grad;
  grad.p = Eigen::VectorXd::Zero(n);
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const double coeff = renormalize ? inner[t] / mass - weighted / (mass * mass) : inner[t];
    const auto& term = terms[t];
    if (term.second < 0) {
      grad.p[term.first] += coeff;
    } else {
      grad.p[term.first] += p[term.second] * coeff;
      grad.p[term.second] += p[term.first] * coeff;
    }
  }

  if (want_x) {
    grad.x = Image(x.channels, x.height, x.width);
    for (int a = 0; a < n; ++a) {
      const Image& g = first_grad[std::size_t(a)];
      if ((g.pixels == 0.0).all()) continue;
      grad.x.pixels += apply_op_vjp(x, registry[std::size_t(a)], lambda[a], g, draw_for(draws, a)).pixels;
    }
  }
  return grad;
}

Eigen::VectorXd straight_through_lambda_grad(const Image& pixel_grad, std::span<const int> sampled,
                                             const OpRegistry& registry) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(Eigen::Index(registry.size()));
  const double total = pixel_grad.pixels.sum();
  for (int m : sampled)
    if (registry[std::size_t(m)].uses_magnitude) grad[m] = total;
  return grad;
}

ComposedAugmentation::Gradients ComposedAugmentation::backward(const Image& upstream, const OpRegistry& registry,
                                                               bool want_x) const {
  const int k = int(sampled_indices.size());
  RelaxedGradient relaxed = relaxed_composition_vjp(source, p, lambda, renormalize, registry, upstream, draws,
                                                    relaxation_mode, sampled_indices, std::max(k, 1), want_x);
  Gradients g;
  g.p = std::move(relaxed.p);
  g.x = std::move(relaxed.x);
  g.lambda = straight_through_lambda_grad(upstream, sampled_indices, registry);
  return g;
}

ComposedAugmentation forward_sampled_backward_relaxed(const Image& x, const Eigen::VectorXd& p,
                                                      const Eigen::VectorXd& lambda, std::vector<int> sampled,
                                                      bool renormalize, const OpRegistry& registry,
                                                      std::vector<OpDraw> draws, RelaxationMode mode) {
  check_inputs(p, lambda, registry, draws);
  ComposedAugmentation c;
  c.forward_image = compose_sampled(x, sampled, lambda, registry, draws);
  c.sampled_indices = std::move(sampled);
  c.relaxation_mode = mode;
  c.renormalize = renormalize;
  c.source = x;
  c.p = p;
  c.lambda = lambda;
  c.draws = std::move(draws);
  return c;
}

std::uint64_t pair_application_count() { return g_pair_count; }
void reset_pair_application_count() { g_pair_count = 0; }

}  // namespace madaug
