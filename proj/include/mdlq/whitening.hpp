// Copyright 2026 The MDLQ Authors
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
/** \file

 Quadratic forms under an AR(1) correlation matrix without forming it.

 For a block of length L >= 2 with correlation r^{|i-j|},

   R^{-1} = (1 - r^2)^{-1} T,   T = tridiag(-r; 1, 1+r^2, ..., 1+r^2, 1; -r)

 so u' R^{-1} v = (S0 + r^2 Sint - r S1) / (1 - r^2), where S0 is the plain
 inner product, Sint the inner product over interior positions and S1 the
 symmetrised lag-one cross product. A block of length 1 has R = 1, which
 the same expression reproduces by giving its single position weight -1 in
 Sint. log det R = (L - 1) log(1 - r^2) per block.

 The three statistics do not depend on r, so they are computed once per
 window for every column pair of [X | y]; any later r costs O(p^2).

*/
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace mdlq {

enum class ArStructure { BlockPerSensor, FullConcatenated };

struct WhitenedQuadratics {
  Eigen::MatrixXd xtqx;
  Eigen::VectorXd xtqy;
  double ytqy = 0.0;
  double log_det = 0.0;
};

/// r-independent AR(1) sufficient statistics of [X | y].
class Ar1Gram {
 public:
  Ar1Gram() = default;

  /// `block_len` rows per independent AR(1) block; must divide X.rows().
  Ar1Gram(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::size_t block_len) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (y.size() != n) throw std::invalid_argument("Ar1Gram: y/X row mismatch");
    if (block_len == 0 || (n > 0 && n % static_cast<Eigen::Index>(block_len) != 0))
      throw std::invalid_argument("Ar1Gram: block length must divide n");
    Eigen::MatrixXd a(n, p + 1);
    a.leftCols(p) = x;
    a.col(p) = y;

    const auto len = static_cast<Eigen::Index>(block_len);
    Eigen::VectorXd w(n);
    for (Eigen::Index t = 0; t < n; ++t) {
      Eigen::Index pos = t % len;
      w(t) = len == 1 ? -1.0 : (pos == 0 || pos == len - 1) ? 0.0 : 1.0;
    }
    s0_ = a.transpose() * a;
    sint_ = a.transpose() * w.asDiagonal() * a;
    s1_ = Eigen::MatrixXd::Zero(p + 1, p + 1);
    if (len >= 2) {
      for (Eigen::Index b = 0; b < n; b += len) {
        auto head = a.middleRows(b, len - 1);
        auto tail = a.middleRows(b + 1, len - 1);
        s1_.noalias() += head.transpose() * tail;
      }
      s1_ = (s1_ + s1_.transpose()).eval();
    }
    n_ = n;
    p_ = p;
    blocks_ = len > 0 ? n / len : 0;
    block_len_ = len;
  }

  Eigen::Index rows() const { return n_; }
  Eigen::Index cols() const { return p_; }

  double log_det(double r) const {
    return static_cast<double>(blocks_ * (block_len_ - 1)) * std::log1p(-r * r);
  }

  /// (p+1) x (p+1) matrix [X|y]' R^{-1} [X|y].
  Eigen::MatrixXd combined(double r) const {
    return (s0_ + (r * r) * sint_ - r * s1_) / (1.0 - r * r);
  }

  WhitenedQuadratics at(double r) const {
    Eigen::MatrixXd c = combined(r);
    return {c.topLeftCorner(p_, p_), c.col(p_).head(p_), c(p_, p_), log_det(r)};
  }

  /// e' R^{-1} e for e = y - X beta.
  double residual_quadratic(const Eigen::VectorXd& beta, double r) const {
    Eigen::VectorXd v(p_ + 1);
    v.head(p_) = -beta;
    v(p_) = 1.0;
    return std::max(0.0, combine_quadratic(v, r));
  }

  /// Residual statistics (e'e, e'We, e'S1e) so repeated r evaluations for
  /// a fixed beta cost O(1).
  struct Residual {
    double s0, sint, s1;
    double quadratic(double r) const {
      return std::max(0.0, (s0 + r * r * sint - r * s1) / (1.0 - r * r));
    }
  };

  Residual residual(const Eigen::VectorXd& beta) const {
    Eigen::VectorXd v(p_ + 1);
    v.head(p_) = -beta;
    v(p_) = 1.0;
    return {v.dot(s0_ * v), v.dot(sint_ * v), v.dot(s1_ * v)};
  }

 private:
  double combine_quadratic(const Eigen::VectorXd& v, double r) const {
    return (v.dot(s0_ * v) + r * r * v.dot(sint_ * v) - r * v.dot(s1_ * v)) / (1.0 - r * r);
  }

  Eigen::MatrixXd s0_, sint_, s1_;
  Eigen::Index n_ = 0, p_ = 0, blocks_ = 0, block_len_ = 1;
};

inline std::size_t ar_block_length(ArStructure s, std::size_t minutes, std::size_t n) {
  return s == ArStructure::BlockPerSensor ? minutes : n;
}

/// X'R^{-1}X, X'R^{-1}y, y'R^{-1}y and log det R for one r.
inline WhitenedQuadratics whitened_quadratics(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                                              double r, std::size_t block_len) {
  return Ar1Gram(x, y, block_len).at(r);
}

}  // namespace mdlq
