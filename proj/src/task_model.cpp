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

#include "madaug/task_model.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "madaug/errors.hpp"

namespace madaug {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

template <typename S>
bool positive(const S& v) {
  return value_of(v) > 0.0;
}

template <typename S>
MatrixX<S> relu(const MatrixX<S>& x) {
  return x.unaryExpr([](const S& v) { return positive(v) ? v : S(0.0); });
}

// Gradient through a ReLU whose output is `out`.
template <typename S>
MatrixX<S> relu_backward(const MatrixX<S>& out, MatrixX<S> dy) {
  for (Eigen::Index i = 0; i < dy.size(); ++i)
    if (!positive(out(i))) dy(i) = S(0.0);
  return dy;
}

template <typename S>
MatrixX<S> weight_matrix(const VectorX<S>& w, Eigen::Index offset, int rows, int cols) {
  return Eigen::Map<const MatrixX<S>>(w.data() + offset, rows, cols);
}

// ---- convolution -----------------------------------------------------------

// Transposed im2col: rows index (sample, out_y, out_x), columns index
// (in_channel, ky, kx), so every column is a contiguous run over output pixels.
template <typename S>
MatrixX<S> im2col(const layers::Conv2d& c, const MatrixX<S>& x) {
  const int ho = c.out_height(), wo = c.out_width();
  const Eigen::Index out_plane = Eigen::Index(ho) * wo, in_plane = Eigen::Index(c.in_height) * c.in_width;
  const Eigen::Index batch = x.cols();
  MatrixX<S> cols(out_plane * batch, Eigen::Index(c.in_channels) * 9);
  for (int ci = 0; ci < c.in_channels; ++ci) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        S* dst = cols.col(Eigen::Index(ci) * 9 + ky * 3 + kx).data();
        for (Eigen::Index b = 0; b < batch; ++b) {
          const S* src = x.col(b).data() + ci * in_plane;
          for (int oy = 0; oy < ho; ++oy) {
            S* row = dst + b * out_plane + Eigen::Index(oy) * wo;
            const int iy = oy * c.stride + ky - 1;
            if (iy < 0 || iy >= c.in_height) {
              for (int ox = 0; ox < wo; ++ox) row[ox] = S(0.0);
              continue;
            }
            const S* line = src + Eigen::Index(iy) * c.in_width;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * c.stride + kx - 1;
              row[ox] = (ix >= 0 && ix < c.in_width) ? line[ix] : S(0.0);
            }
          }
        }
      }
    }
  }
  return cols;
}

template <typename S>
MatrixX<S> col2im(const layers::Conv2d& c, const MatrixX<S>& cols, Eigen::Index batch) {
  const int ho = c.out_height(), wo = c.out_width();
  const Eigen::Index out_plane = Eigen::Index(ho) * wo, in_plane = Eigen::Index(c.in_height) * c.in_width;
  MatrixX<S> dx = MatrixX<S>::Zero(Eigen::Index(c.in_channels) * in_plane, batch);
  for (int ci = 0; ci < c.in_channels; ++ci) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const S* src = cols.col(Eigen::Index(ci) * 9 + ky * 3 + kx).data();
        for (Eigen::Index b = 0; b < batch; ++b) {
          S* dst = dx.col(b).data() + ci * in_plane;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * c.stride + ky - 1;
            if (iy < 0 || iy >= c.in_height) continue;
            const S* row = src + b * out_plane + Eigen::Index(oy) * wo;
            S* line = dst + Eigen::Index(iy) * c.in_width;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * c.stride + kx - 1;
              if (ix >= 0 && ix < c.in_width) line[ix] += row[ox];
            }
          }
        }
      }
    }
  }
  return dx;
}

// Returns the layer output; `cols` receives the im2col matrix for backward.
template <typename S>
MatrixX<S> conv_forward(const layers::Conv2d& c, const VectorX<S>& w, const MatrixX<S>& x, MatrixX<S>& cols) {
  const Eigen::Index k = Eigen::Index(c.in_channels) * 9;
  const Eigen::Index out_plane = Eigen::Index(c.out_height()) * c.out_width();
  const MatrixX<S> weight = weight_matrix(w, c.offset, c.out_channels, int(k));
  cols = im2col(c, x);
  const MatrixX<S> yt = product(cols, false, weight, true);  // (sample, pos) x out_channel
  const VectorX<S> bias = w.segment(c.offset + c.out_channels * k, c.out_channels);
  MatrixX<S> out(c.out_channels * out_plane, x.cols());
  for (Eigen::Index b = 0; b < x.cols(); ++b)
    for (int co = 0; co < c.out_channels; ++co)
      out.col(b).segment(co * out_plane, out_plane) = yt.col(co).segment(b * out_plane, out_plane).array() + bias[co];
  return out;
}

template <typename S>
MatrixX<S> conv_backward(const layers::Conv2d& c, const VectorX<S>& w, const MatrixX<S>& cols, const MatrixX<S>& d_out,
                         VectorX<S>* grad_w, bool want_input) {
  const Eigen::Index k = Eigen::Index(c.in_channels) * 9;
  const Eigen::Index out_plane = Eigen::Index(c.out_height()) * c.out_width();
  const Eigen::Index batch = d_out.cols();
  MatrixX<S> dyt(out_plane * batch, c.out_channels);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int co = 0; co < c.out_channels; ++co)
      dyt.col(co).segment(b * out_plane, out_plane) = d_out.col(b).segment(co * out_plane, out_plane);
  if (grad_w) {
    const MatrixX<S> dweight = product(dyt, true, cols, false);
    grad_w->segment(c.offset, c.out_channels * k) += Eigen::Map<const VectorX<S>>(dweight.data(), dweight.size());
    grad_w->segment(c.offset + c.out_channels * k, c.out_channels) += dyt.colwise().sum().transpose();
  }
  if (!want_input) return {};
  const MatrixX<S> weight = weight_matrix(w, c.offset, c.out_channels, int(k));
  return col2im(c, product(dyt, false, weight, false), batch);
}

// ---- per-layer visitors ----------------------------------------------------

template <typename S>
struct LayerForward {
  const VectorX<S>& w;
  const MatrixX<S>& x;
  std::vector<MatrixX<S>>* saved;
  std::vector<Eigen::Index>* argmax;

  void keep(const MatrixX<S>& m) const {
    if (saved) saved->push_back(m);
  }
  void keep(MatrixX<S>&& m) const {
    if (saved) saved->push_back(std::move(m));
  }

  MatrixX<S> operator()(const layers::Standardize& l) const {
    MatrixX<S> y(x.rows(), x.cols());
    for (int c = 0; c < l.channels; ++c)
      y.middleRows(c * l.plane, l.plane) = (x.middleRows(c * l.plane, l.plane).array() - S(l.mean[std::size_t(c)])) *
                                           S(l.inv_std[std::size_t(c)]);
    return y;
  }
  MatrixX<S> operator()(const layers::Conv2d& l) const {
    MatrixX<S> cols;
    MatrixX<S> y = conv_forward(l, w, x, cols);
    keep(std::move(cols));
    return y;
  }
  MatrixX<S> operator()(const layers::Relu&) const {
    MatrixX<S> y = relu(x);
    keep(y);
    return y;
  }
  MatrixX<S> operator()(const layers::MaxPool2& l) const {
    const int ho = l.in_height / 2, wo = l.in_width / 2;
    const Eigen::Index in_plane = Eigen::Index(l.in_height) * l.in_width, out_plane = Eigen::Index(ho) * wo;
    MatrixX<S> y(l.channels * out_plane, x.cols());
    if (argmax) argmax->resize(std::size_t(y.size()));
    for (Eigen::Index b = 0; b < x.cols(); ++b) {
      for (int c = 0; c < l.channels; ++c) {
        for (int oy = 0; oy < ho; ++oy) {
          for (int ox = 0; ox < wo; ++ox) {
            Eigen::Index best = c * in_plane + Eigen::Index(2 * oy) * l.in_width + 2 * ox;
            for (int d = 1; d < 4; ++d) {
              const Eigen::Index idx = c * in_plane + Eigen::Index(2 * oy + d / 2) * l.in_width + 2 * ox + d % 2;
              if (value_of(x(idx, b)) > value_of(x(best, b))) best = idx;
            }
            const Eigen::Index o = c * out_plane + Eigen::Index(oy) * wo + ox;
            y(o, b) = x(best, b);
            if (argmax) (*argmax)[std::size_t(b * y.rows() + o)] = best;
          }
        }
      }
    }
    return y;
  }
  MatrixX<S> operator()(const layers::GlobalAvgPool& l) const {
    MatrixX<S> y(l.channels, x.cols());
    for (int c = 0; c < l.channels; ++c) y.row(c) = x.middleRows(c * l.plane, l.plane).colwise().sum() / S(double(l.plane));
    return y;
  }
  MatrixX<S> operator()(const layers::Dense& l) const {
    keep(x);
    MatrixX<S> y = product(weight_matrix(w, l.offset, l.out, l.in), false, x, false);
    const VectorX<S> bias = w.segment(l.offset + Eigen::Index(l.out) * l.in, l.out);
    y.colwise() += bias;
    return y;
  }
  MatrixX<S> operator()(const layers::Residual& l) const {
    MatrixX<S> cols1, cols2;
    MatrixX<S> hidden = relu(conv_forward(l.first, w, x, cols1));
    MatrixX<S> y = relu(MatrixX<S>(conv_forward(l.second, w, hidden, cols2) + x));
    keep(std::move(cols1));
    keep(std::move(hidden));
    keep(std::move(cols2));
    keep(y);
    return y;
  }
};

template <typename S>
struct LayerBackward {
  const VectorX<S>& w;
  const std::vector<MatrixX<S>>& saved;
  const std::vector<Eigen::Index>& argmax;
  MatrixX<S>& dy;  // consumed
  VectorX<S>* grad_w;
  bool want_input;

  MatrixX<S> operator()(const layers::Standardize& l) const {
    if (!want_input) return {};
    MatrixX<S> dx(dy.rows(), dy.cols());
    for (int c = 0; c < l.channels; ++c)
      dx.middleRows(c * l.plane, l.plane) = dy.middleRows(c * l.plane, l.plane) * S(l.inv_std[std::size_t(c)]);
    return dx;
  }
  MatrixX<S> operator()(const layers::Conv2d& l) const { return conv_backward(l, w, saved[0], dy, grad_w, want_input); }
  MatrixX<S> operator()(const layers::Relu&) const { return relu_backward(saved[0], std::move(dy)); }
  MatrixX<S> operator()(const layers::MaxPool2& l) const {
    MatrixX<S> dx = MatrixX<S>::Zero(Eigen::Index(l.channels) * l.in_height * l.in_width, dy.cols());
    for (Eigen::Index b = 0; b < dy.cols(); ++b)
      for (Eigen::Index o = 0; o < dy.rows(); ++o) dx(argmax[std::size_t(b * dy.rows() + o)], b) += dy(o, b);
    return dx;
  }
  MatrixX<S> operator()(const layers::GlobalAvgPool& l) const {
    MatrixX<S> dx(l.channels * l.plane, dy.cols());
    const S scale(1.0 / double(l.plane));
    for (int c = 0; c < l.channels; ++c)
      for (Eigen::Index b = 0; b < dy.cols(); ++b)
        dx.col(b).segment(c * l.plane, l.plane).setConstant(S(dy(c, b) * scale));
    return dx;
  }
  MatrixX<S> operator()(const layers::Dense& l) const {
    const MatrixX<S>& x = saved[0];
    if (grad_w) {
      const MatrixX<S> dweight = product(dy, false, x, true);
      grad_w->segment(l.offset, Eigen::Index(l.out) * l.in) += Eigen::Map<const VectorX<S>>(dweight.data(), dweight.size());
      grad_w->segment(l.offset + Eigen::Index(l.out) * l.in, l.out) += dy.rowwise().sum();
    }
    if (!want_input) return {};
    return product(weight_matrix(w, l.offset, l.out, l.in), true, dy, false);
  }
  MatrixX<S> operator()(const layers::Residual& l) const {
    const MatrixX<S>& cols1 = saved[0];
    const MatrixX<S>& hidden = saved[1];
    const MatrixX<S>& cols2 = saved[2];
    const MatrixX<S> d_sum = relu_backward(saved[3], std::move(dy));
    const MatrixX<S> d_hidden = relu_backward(hidden, conv_backward(l.second, w, cols2, d_sum, grad_w, true));
    if (!want_input) {
      conv_backward(l.first, w, cols1, d_hidden, grad_w, false);
      return {};
    }
    return conv_backward(l.first, w, cols1, d_hidden, grad_w, true) + d_sum;
  }
};

}  // namespace

std::string_view architecture_name(Architecture arch) {
  switch (arch) {
    case Architecture::SmallCnn:
      return "small_cnn";
    case Architecture::Mlp:
      return "mlp";
    case Architecture::WideResnetTiny:
      return "wide_resnet_tiny";
    case Architecture::Custom:
      return "custom";
  }
  return "custom";
}

Architecture architecture_from_name(std::string_view name) {
  if (name == "small_cnn") return Architecture::SmallCnn;
  if (name == "mlp") return Architecture::Mlp;
  if (name == "wide_resnet_tiny") return Architecture::WideResnetTiny;
  throw ConfigError("unknown architecture: " + std::string(name));
}

TaskModel::TaskModel(std::vector<Layer> layer_list, ImageShape input, Architecture arch)
    : layers_(std::move(layer_list)), input_(input), arch_(arch) {
  if (layers_.empty() || !std::holds_alternative<layers::Dense>(layers_.back()))
    throw ConfigError("task model must end with a Dense classification layer");
  Eigen::Index offset = 0;
  for (auto& layer : layers_) {
    std::visit(Overloaded{[&](layers::Conv2d& c) {
                            c.offset = offset;
                            offset += c.num_params();
                          },
                          [&](layers::Dense& d) {
                            d.offset = offset;
                            offset += d.num_params();
                          },
                          [&](layers::Residual& r) {
                            r.first.offset = offset;
                            offset += r.first.num_params();
                            r.second.offset = offset;
                            offset += r.second.num_params();
                          },
                          [](auto&) {}},
               layer);
  }
  num_params_ = offset;
  const auto& head = std::get<layers::Dense>(layers_.back());
  feature_dim_ = head.in;
  num_classes_ = head.out;
}

template <typename Scalar>
MatrixX<Scalar> TaskModel::forward(const VectorX<Scalar>& w, const MatrixX<Scalar>& x, ForwardTrace<Scalar>* trace,
                                   std::size_t stop_layer) const {
  if (w.size() != num_params_)
    throw DimensionError("parameter vector has " + std::to_string(w.size()) + " entries, model expects " +
                         std::to_string(num_params_));
  if (x.rows() != input_.size())
    throw DimensionError("input rows " + std::to_string(x.rows()) + " != image size " + std::to_string(input_.size()));
  const std::size_t end = std::min(stop_layer, layers_.size());
  if (trace) {
    trace->saved.assign(end, {});
    trace->argmax.assign(end, {});
  }
  MatrixX<Scalar> a = x;
  for (std::size_t i = 0; i < end; ++i) {
    LayerForward<Scalar> f{w, a, trace ? &trace->saved[i] : nullptr, trace ? &trace->argmax[i] : nullptr};
    a = std::visit(f, layers_[i]);
  }
  return a;
}

template <typename Scalar>
MatrixX<Scalar> TaskModel::backward(const VectorX<Scalar>& w, const ForwardTrace<Scalar>& trace,
                                    const MatrixX<Scalar>& d_out, VectorX<Scalar>* grad_w, bool want_input) const {
  if (trace.saved.size() != layers_.size()) throw DimensionError("backward needs a full forward trace");
  if (grad_w && grad_w->size() != num_params_) throw DimensionError("gradient buffer has the wrong size");
  MatrixX<Scalar> d = d_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool need = want_input || i > 0;
    LayerBackward<Scalar> b{w, trace.saved[i], trace.argmax[i], d, grad_w, need};
    MatrixX<Scalar> next = std::visit(b, layers_[i]);
    d = std::move(next);
  }
  return want_input ? d : MatrixX<Scalar>();
}

Eigen::MatrixXd TaskModel::features(const Eigen::VectorXd& w, const Eigen::MatrixXd& x) const {
  return forward<double>(w, x, nullptr, layers_.size() - 1);
}

template MatrixX<double> TaskModel::forward(const VectorX<double>&, const MatrixX<double>&, ForwardTrace<double>*,
                                            std::size_t) const;
template MatrixX<Dual> TaskModel::forward(const VectorX<Dual>&, const MatrixX<Dual>&, ForwardTrace<Dual>*,
                                          std::size_t) const;
template MatrixX<double> TaskModel::backward(const VectorX<double>&, const ForwardTrace<double>&,
                                             const MatrixX<double>&, VectorX<double>*, bool) const;
template MatrixX<Dual> TaskModel::backward(const VectorX<Dual>&, const ForwardTrace<Dual>&, const MatrixX<Dual>&,
                                           VectorX<Dual>*, bool) const;

template <typename Scalar>
Scalar softmax_cross_entropy(const MatrixX<Scalar>& logits, std::span<const int> labels, MatrixX<Scalar>* d_logits) {
  using std::exp;
  using std::log;
  if (Eigen::Index(labels.size()) != logits.cols()) throw DimensionError("one label per batch column required");
  const Eigen::Index batch = logits.cols();
  if (d_logits) d_logits->resize(logits.rows(), batch);
  Scalar total(0.0);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int y = labels[std::size_t(b)];
    if (y < 0 || y >= logits.rows()) throw DimensionError("label out of range: " + std::to_string(y));
    Eigen::Index top = 0;
    for (Eigen::Index r = 1; r < logits.rows(); ++r)
      if (value_of(logits(r, b)) > value_of(logits(top, b))) top = r;
    const Scalar shift = logits(top, b);
    VectorX<Scalar> e(logits.rows());
    Scalar sum(0.0);
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      e[r] = exp(Scalar(logits(r, b) - shift));
      sum += e[r];
    }
    total += log(sum) - (logits(y, b) - shift);
    if (d_logits) {
      for (Eigen::Index r = 0; r < logits.rows(); ++r) (*d_logits)(r, b) = (e[r] / sum - Scalar(r == y ? 1.0 : 0.0)) / Scalar(double(batch));
    }
  }
  return total / Scalar(double(batch));
}

template double softmax_cross_entropy(const MatrixX<double>&, std::span<const int>, MatrixX<double>*);
template Dual softmax_cross_entropy(const MatrixX<Dual>&, std::span<const int>, MatrixX<Dual>*);

LossGradients loss_and_gradients(const TaskModel& model, const Eigen::VectorXd& w, const Eigen::MatrixXd& x,
                                 std::span<const int> labels, bool want_input_grad) {
  ForwardTrace<double> trace;
  const Eigen::MatrixXd logits = model.forward<double>(w, x, &trace);
  Eigen::MatrixXd d_logits;
  LossGradients out;
  out.loss = softmax_cross_entropy<double>(logits, labels, &d_logits);
  out.grad_w = Eigen::VectorXd::Zero(model.num_params());
  out.grad_x = model.backward<double>(w, trace, d_logits, &out.grad_w, want_input_grad);
  return out;
}

double mean_loss(const TaskModel& model, const Eigen::VectorXd& w, const Eigen::MatrixXd& x,
                 std::span<const int> labels) {
  return softmax_cross_entropy<double>(model.forward<double>(w, x), labels, nullptr);
}

Eigen::MatrixXd mixed_input_gradient(const TaskModel& model, const Eigen::VectorXd& w, const Eigen::VectorXd& direction,
                                     const Eigen::MatrixXd& x, std::span<const int> labels) {
  if (direction.size() != w.size()) throw DimensionError("mixed_input_gradient: direction length != parameter count");
  const VectorX<Dual> wd = make_dual(w, direction);
  const MatrixX<Dual> xd = make_dual(x, Eigen::MatrixXd::Zero(x.rows(), x.cols()));
  ForwardTrace<Dual> trace;
  const MatrixX<Dual> logits = model.forward<Dual>(wd, xd, &trace);
  MatrixX<Dual> d_logits;
  softmax_cross_entropy<Dual>(logits, labels, &d_logits);
  const MatrixX<Dual> dx = model.backward<Dual>(wd, trace, d_logits, nullptr, true);
  return dual_tangents(dx);
}

namespace {

layers::Conv2d conv(int in, int out, int h, int w, int stride = 1) {
  layers::Conv2d c;
  c.in_channels = in;
  c.out_channels = out;
  c.in_height = h;
  c.in_width = w;
  c.stride = stride;
  return c;
}

layers::Dense dense(int in, int out) {
  layers::Dense d;
  d.in = in;
  d.out = out;
  return d;
}

layers::Standardize standardize(const ModelSpec& spec, ImageShape input) {
  layers::Standardize s;
  s.channels = input.channels;
  s.plane = Eigen::Index(input.height) * input.width;
  for (int c = 0; c < input.channels; ++c) {
    const double mean = spec.channel_mean.empty() ? 0.5 : spec.channel_mean.at(std::size_t(c));
    const double sd = spec.channel_std.empty() ? 0.25 : spec.channel_std.at(std::size_t(c));
    if (!(sd > 0.0)) throw ConfigError("channel std must be positive");
    s.mean.push_back(mean);
    s.inv_std.push_back(1.0 / sd);
  }
  return s;
}

std::vector<Layer> architecture_layers(const ModelSpec& spec, ImageShape in, int num_classes) {
  const int w = spec.width;
  std::vector<Layer> l;
  l.push_back(standardize(spec, in));
  switch (spec.arch) {
    case Architecture::Mlp:
      l.push_back(dense(int(in.size()), spec.hidden));
      l.push_back(layers::Relu{});
      l.push_back(dense(spec.hidden, num_classes));
      break;
    case Architecture::SmallCnn: {
      if (in.height % 4 != 0 || in.width % 4 != 0) throw ConfigError("small_cnn needs image sides divisible by 4");
      l.push_back(conv(in.channels, w, in.height, in.width));
      l.push_back(layers::Relu{});
      l.push_back(layers::MaxPool2{w, in.height, in.width});
      l.push_back(conv(w, 2 * w, in.height / 2, in.width / 2));
      l.push_back(layers::Relu{});
      l.push_back(layers::MaxPool2{2 * w, in.height / 2, in.width / 2});
      l.push_back(conv(2 * w, 4 * w, in.height / 4, in.width / 4));
      l.push_back(layers::Relu{});
      l.push_back(layers::GlobalAvgPool{4 * w, Eigen::Index(in.height / 4) * (in.width / 4)});
      l.push_back(dense(4 * w, num_classes));
      break;
    }
    case Architecture::WideResnetTiny: {
      const int h2 = (in.height - 1) / 2 + 1, w2 = (in.width - 1) / 2 + 1;
      l.push_back(conv(in.channels, w, in.height, in.width));
      l.push_back(layers::Relu{});
      l.push_back(layers::Residual{conv(w, w, in.height, in.width), conv(w, w, in.height, in.width)});
      l.push_back(conv(w, 2 * w, in.height, in.width, 2));
      l.push_back(layers::Relu{});
      l.push_back(layers::Residual{conv(2 * w, 2 * w, h2, w2), conv(2 * w, 2 * w, h2, w2)});
      l.push_back(layers::GlobalAvgPool{2 * w, Eigen::Index(h2) * w2});
      l.push_back(dense(2 * w, num_classes));
      break;
    }
    case Architecture::Custom:
      throw ConfigError("build_model cannot build a custom architecture");
  }
  return l;
}

void fill_normal(Eigen::VectorXd& w, Eigen::Index offset, Eigen::Index count, double stddev, Rng& rng) {
  for (Eigen::Index i = 0; i < count; ++i) w[offset + i] = stddev * normal(rng);
}

}  // namespace

BuiltModel build_model(const ModelSpec& spec, ImageShape input, int num_classes, Rng& rng) {
  if (num_classes < 2) throw ConfigError("need at least two classes");
  if (spec.width <= 0 || spec.hidden <= 0) throw ConfigError("model widths must be positive");
  BuiltModel built{TaskModel(architecture_layers(spec, input, num_classes), input, spec.arch), {}};
  built.w = Eigen::VectorXd::Zero(built.model.num_params());
  const auto& all = built.model.layers();
  for (std::size_t i = 0; i < all.size(); ++i) {
    const bool head = i + 1 == all.size();
    std::visit(Overloaded{[&](const layers::Conv2d& c) {
                            fill_normal(built.w, c.offset, Eigen::Index(c.out_channels) * c.in_channels * 9,
                                        std::sqrt(2.0 / (9.0 * c.in_channels)), rng);
                          },
                          [&](const layers::Dense& d) {
                            fill_normal(built.w, d.offset, Eigen::Index(d.out) * d.in,
                                        std::sqrt((head ? 1.0 : 2.0) / d.in), rng);
                          },
                          [&](const layers::Residual& r) {
                            for (const auto* c : {&r.first, &r.second})
                              fill_normal(built.w, c->offset, Eigen::Index(c->out_channels) * c->in_channels * 9,
                                          std::sqrt(2.0 / (9.0 * c->in_channels)), rng);
                          },
                          [](const auto&) {}},
               all[i]);
  }
  return built;
}

Eigen::Index expected_parameter_count(const ModelSpec& spec, ImageShape in, int num_classes) {
  const Eigen::Index w = spec.width, c = in.channels, k = num_classes;
  auto conv_params = [](Eigen::Index cin, Eigen::Index cout) { return cout * cin * 9 + cout; };
  switch (spec.arch) {
    case Architecture::Mlp:
      return in.size() * spec.hidden + spec.hidden + Eigen::Index(spec.hidden) * k + k;
    case Architecture::SmallCnn:
      return conv_params(c, w) + conv_params(w, 2 * w) + conv_params(2 * w, 4 * w) + 4 * w * k + k;
    case Architecture::WideResnetTiny:
      return conv_params(c, w) + 2 * conv_params(w, w) + conv_params(w, 2 * w) + 2 * conv_params(2 * w, 2 * w) +
             2 * w * k + k;
    case Architecture::Custom:
      break;
  }
  throw ConfigError("no closed-form parameter count for a custom architecture");
}

Eigen::MatrixXd to_batch(std::span<const Image> images) {
  if (images.empty()) return {};
  Eigen::MatrixXd batch(images[0].size(), Eigen::Index(images.size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].size() != batch.rows()) throw DimensionError("to_batch: images differ in size");
    batch.col(Eigen::Index(i)) = images[i].pixels.matrix();
  }
  return batch;
}

Eigen::MatrixXd to_batch(std::span<const Image* const> images) {
  if (images.empty()) return {};
  Eigen::MatrixXd batch(images[0]->size(), Eigen::Index(images.size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i]->size() != batch.rows()) throw DimensionError("to_batch: images differ in size");
    batch.col(Eigen::Index(i)) = images[i]->pixels.matrix();
  }
  return batch;
}

}  // namespace madaug
