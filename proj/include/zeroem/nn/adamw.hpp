#pragma once

#include <cmath>
#include <vector>

#include "zeroem/nn/layers.hpp"

namespace zeroem::nn {

struct AdamWConfig {
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay and a constant learning rate.
template <typename Scalar>
class AdamW {
 public:
  AdamW(const std::vector<Parameter<Scalar>>& params, AdamWConfig config) : config_(config) {
    for (const auto& p : params) {
      m_.push_back(Matrix<Scalar>::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Matrix<Scalar>::Zero(p.value.rows(), p.value.cols()));
    }
  }

  void step(std::vector<Parameter<Scalar>>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<Scalar>(config_.beta1);
    const auto b2 = static_cast<Scalar>(config_.beta2);
    const auto lr = static_cast<Scalar>(config_.learning_rate);
    const auto step_size = static_cast<Scalar>(config_.learning_rate / bc1);
    const auto sqrt_bc2 = static_cast<Scalar>(std::sqrt(bc2));
    const auto eps = static_cast<Scalar>(config_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (p.decay && config_.weight_decay > 0.0) p.value *= Scalar(1) - lr * static_cast<Scalar>(config_.weight_decay);
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * p.grad;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * p.grad.cwiseAbs2();
      p.value.array() -= step_size * m_[i].array() / (v_[i].array().sqrt() / sqrt_bc2 + eps);
    }
  }

  long steps() const { return t_; }

 private:
  AdamWConfig config_;
  std::vector<Matrix<Scalar>> m_;
  std::vector<Matrix<Scalar>> v_;
  long t_ = 0;
};

/// Scales all gradients so their global L2 norm is at most `max_norm`; returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(std::vector<Parameter<Scalar>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) sq += static_cast<double>(p.grad.squaredNorm());
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto s = static_cast<Scalar>(max_norm / (norm + 1e-6));
    for (auto& p : params) p.grad *= s;
  }
  return norm;
}

}  // namespace zeroem::nn
