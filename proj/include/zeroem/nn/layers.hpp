#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zeroem/rng.hpp"

namespace zeroem::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Trainable tensor. Vectors are stored as 1 x n matrices.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  /// Weight decay applies to matrices only, not to biases, norms or embeddings' gains.
  bool decay = false;
};

/// y = x W + b, with W stored (in x out).
template <typename Scalar>
Matrix<Scalar> linear(const Matrix<Scalar>& x, const Parameter<Scalar>& w, const Parameter<Scalar>& b) {
  Matrix<Scalar> y = x * w.value;
  y.rowwise() += RowVector<Scalar>(b.value.row(0));
  return y;
}

/// Accumulates parameter gradients and returns dL/dx.
template <typename Scalar>
Matrix<Scalar> linear_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& dy, Parameter<Scalar>& w,
                               Parameter<Scalar>& b) {
  w.grad.noalias() += x.transpose() * dy;
  b.grad.row(0) += dy.colwise().sum();
  return dy * w.value.transpose();
}

template <typename Scalar>
struct LayerNormCache {
  Matrix<Scalar> xhat;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rstd;
};

template <typename Scalar>
Matrix<Scalar> layer_norm(const Matrix<Scalar>& x, const Parameter<Scalar>& gain, const Parameter<Scalar>& bias,
                          Scalar eps, LayerNormCache<Scalar>* cache) {
  const Eigen::Index n = x.cols();
  Matrix<Scalar> xhat(x.rows(), n);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rstd(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Scalar mean = x.row(i).mean();
    const Scalar var = (x.row(i).array() - mean).square().mean();
    rstd(i) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mean) * rstd(i);
  }
  Matrix<Scalar> y = (xhat.array().rowwise() * gain.value.row(0).array()).matrix();
  y.rowwise() += RowVector<Scalar>(bias.value.row(0));
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

template <typename Scalar>
Matrix<Scalar> layer_norm_backward(const LayerNormCache<Scalar>& cache, const Matrix<Scalar>& dy,
                                   Parameter<Scalar>& gain, Parameter<Scalar>& bias) {
  gain.grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  bias.grad.row(0) += dy.colwise().sum();
  const Matrix<Scalar> dxhat = (dy.array().rowwise() * gain.value.row(0).array()).matrix();
  Matrix<Scalar> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const Scalar mean_d = dxhat.row(i).mean();
    const Scalar mean_dx = (dxhat.row(i).array() * cache.xhat.row(i).array()).mean();
    dx.row(i) = cache.rstd(i) * (dxhat.row(i).array() - mean_d - cache.xhat.row(i).array() * mean_dx);
  }
  return dx;
}

/// tanh approximation used by GPT-2.
template <typename Scalar>
Matrix<Scalar> gelu(const Matrix<Scalar>& x) {
  const Scalar c = Scalar(0.7978845608028654);
  return x.unaryExpr([c](Scalar v) {
    return Scalar(0.5) * v * (Scalar(1) + std::tanh(c * (v + Scalar(0.044715) * v * v * v)));
  });
}

template <typename Scalar>
Matrix<Scalar> gelu_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& dy) {
  const Scalar c = Scalar(0.7978845608028654);
  return dy.binaryExpr(x, [c](Scalar g, Scalar v) {
    const Scalar t = std::tanh(c * (v + Scalar(0.044715) * v * v * v));
    const Scalar dt = (Scalar(1) - t * t) * c * (Scalar(1) + Scalar(3 * 0.044715) * v * v);
    return g * (Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * v * dt);
  });
}

/// Inverted dropout mask (entries 0 or 1/(1-p)); empty when inactive.
template <typename Scalar>
Matrix<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng* rng) {
  if (!rng || p <= 0.0) return {};
  const Scalar keep = Scalar(1.0 / (1.0 - p));
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng->uniform01() < p ? Scalar(0) : keep;
  return m;
}

template <typename Scalar>
void apply_mask(Matrix<Scalar>& x, const Matrix<Scalar>& mask) {
  if (mask.size() != 0) x.array() *= mask.array();
}

/// Row-wise softmax in place.
template <typename Scalar>
void softmax_rows(Matrix<Scalar>& x) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Scalar m = x.row(i).maxCoeff();
    x.row(i) = (x.row(i).array() - m).exp();
    x.row(i) /= x.row(i).sum();
  }
}

}  // namespace zeroem::nn
