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

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

namespace madaug {

/// Forward-mode scalar with one tangent direction. Running a backward pass in
/// this type yields directional derivatives of gradients (mixed second
/// derivatives) without a second reverse sweep.
using Dual = Eigen::AutoDiffScalar<Eigen::Matrix<double, 1, 1>>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline double value_of(double v) { return v; }
inline double value_of(const Dual& d) { return d.value(); }

inline Dual make_dual(double value, double tangent) { return Dual(value, Eigen::Matrix<double, 1, 1>(tangent)); }

static_assert(sizeof(Dual) == 2 * sizeof(double), "Dual must be a packed (value, tangent) pair");

namespace detail {
using DualPartMap = Eigen::Map<Eigen::MatrixXd, 0, Eigen::Stride<Eigen::Dynamic, 2>>;
using ConstDualPartMap = Eigen::Map<const Eigen::MatrixXd, 0, Eigen::Stride<Eigen::Dynamic, 2>>;

// part 0 is the value, part 1 the tangent, of every entry of a dense matrix.
inline ConstDualPartMap dual_part(const MatrixX<Dual>& m, int part) {
  return {reinterpret_cast<const double*>(m.data()) + part, m.rows(), m.cols(),
          Eigen::Stride<Eigen::Dynamic, 2>(2 * m.rows(), 2)};
}
inline DualPartMap dual_part(MatrixX<Dual>& m, int part) {
  return {reinterpret_cast<double*>(m.data()) + part, m.rows(), m.cols(),
          Eigen::Stride<Eigen::Dynamic, 2>(2 * m.rows(), 2)};
}
}  // namespace detail

template <typename Derived>
Eigen::MatrixXd dual_values(const Eigen::MatrixBase<Derived>& m) {
  return m.unaryExpr([](const Dual& d) { return d.value(); });
}
inline Eigen::MatrixXd dual_values(const MatrixX<Dual>& m) { return detail::dual_part(m, 0); }

template <typename Derived>
Eigen::MatrixXd dual_tangents(const Eigen::MatrixBase<Derived>& m) {
  return m.unaryExpr([](const Dual& d) { return d.derivatives()(0); });
}
inline Eigen::MatrixXd dual_tangents(const MatrixX<Dual>& m) { return detail::dual_part(m, 1); }

inline MatrixX<Dual> make_dual(const Eigen::MatrixXd& values, const Eigen::MatrixXd& tangents) {
  MatrixX<Dual> out(values.rows(), values.cols());
  detail::dual_part(out, 0) = values;
  detail::dual_part(out, 1) = tangents;
  return out;
}

/// op(a) * op(b), where op transposes when requested.
inline Eigen::MatrixXd product(const Eigen::MatrixXd& a, bool ta, const Eigen::MatrixXd& b, bool tb) {
  if (ta && tb) return a.transpose() * b.transpose();
  if (ta) return a.transpose() * b;
  if (tb) return a * b.transpose();
  return a * b;
}

namespace detail {
// A column-major Dual matrix read as a real matrix with twice the rows:
// row 2i holds the values and row 2i + 1 the tangents of row i.
inline Eigen::Map<const Eigen::MatrixXd> interleaved(const MatrixX<Dual>& m) {
  return {reinterpret_cast<const double*>(m.data()), 2 * m.rows(), m.cols()};
}
inline Eigen::Map<Eigen::MatrixXd> interleaved(MatrixX<Dual>& m) {
  return {reinterpret_cast<double*>(m.data()), 2 * m.rows(), m.cols()};
}
}  // namespace detail

/// Dual products as real GEMMs on the interleaved storage; Eigen's generic
/// kernel for custom scalars is far slower than the vectorised real one.
inline MatrixX<Dual> product(const MatrixX<Dual>& a, bool ta, const MatrixX<Dual>& b, bool tb) {
  using Eigen::MatrixXd;
  if (!ta) {
    // [av; at] interleaved times op(bv) yields the value and at * op(bv);
    // the even rows of [av; at] * op(bt) supply av * op(bt).
    const MatrixXd bv = dual_values(b), bt = dual_tangents(b);
    const auto ar = detail::interleaved(a);
    MatrixX<Dual> out(a.rows(), tb ? b.rows() : b.cols());
    auto outr = detail::interleaved(out);
    outr.noalias() = ar * (tb ? MatrixXd(bv.transpose()) : bv);
    const MatrixXd cross = ar * (tb ? MatrixXd(bt.transpose()) : bt);
    for (Eigen::Index j = 0; j < outr.cols(); ++j)
      for (Eigen::Index i = 0; i < a.rows(); ++i) outr(2 * i + 1, j) += cross(2 * i, j);
    return out;
  }
  if (!tb) {
    // Contraction over interleaved rows: zeroing a's tangents gives av' bv;
    // swapping each (value, tangent) pair of a gives at' bv + av' bt.
    const auto ar = detail::interleaved(a);
    MatrixXd a_value = ar, a_swap(ar.rows(), ar.cols());
    for (Eigen::Index j = 0; j < ar.cols(); ++j)
      for (Eigen::Index i = 0; i < a.rows(); ++i) {
        a_value(2 * i + 1, j) = 0.0;
        a_swap(2 * i, j) = ar(2 * i + 1, j);
        a_swap(2 * i + 1, j) = ar(2 * i, j);
      }
    const auto br = detail::interleaved(b);
    MatrixX<Dual> out(a.cols(), b.cols());
    detail::dual_part(out, 0) = a_value.transpose() * br;
    detail::dual_part(out, 1) = a_swap.transpose() * br;
    return out;
  }
  const MatrixXd av = dual_values(a), at = dual_tangents(a);
  const MatrixXd bv = dual_values(b), bt = dual_tangents(b);
  MatrixX<Dual> out(a.cols(), b.rows());
  detail::dual_part(out, 0) = product(av, ta, bv, tb);
  detail::dual_part(out, 1) = product(at, ta, bv, tb);
  detail::dual_part(out, 1) += product(av, ta, bt, tb);
  return out;
}

}  // namespace madaug
