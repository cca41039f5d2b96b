#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "zeroem/nn/layers.hpp"

namespace zeroem::nn {

template <typename Scalar>
struct HeadsCache {
  Matrix<Scalar> q, k, v;
  std::vector<Matrix<Scalar>> probs;  // softmax output per head
  std::vector<Matrix<Scalar>> masks;  // dropout masks per head (may be empty)
};

/// Scaled dot-product attention over `n_head` heads. q is (Tq x d), k and v are (Tk x d).
/// With `causal`, query i only sees keys j <= i (requires Tq == Tk). Keys at
/// positions >= `key_limit` (padding) are masked out; -1 keeps all keys.
template <typename Scalar>
Matrix<Scalar> multi_head_attention(Matrix<Scalar> q, Matrix<Scalar> k, Matrix<Scalar> v, int n_head, bool causal,
                                    double dropout, Rng* rng, HeadsCache<Scalar>* cache, Eigen::Index key_limit = -1) {
  const Eigen::Index tq = q.rows();
  const Eigen::Index tk = k.rows();
  const Eigen::Index dh = q.cols() / n_head;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  Matrix<Scalar> out(tq, q.cols());
  if (cache) {
    cache->probs.resize(static_cast<std::size_t>(n_head));
    cache->masks.resize(static_cast<std::size_t>(n_head));
  }
  for (int h = 0; h < n_head; ++h) {
    const Eigen::Index c0 = h * dh;
    Matrix<Scalar> s = (q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose()) * scale;
    if (causal) {
      for (Eigen::Index i = 0; i < tq; ++i)
        for (Eigen::Index j = i + 1; j < tk; ++j) s(i, j) = -std::numeric_limits<Scalar>::infinity();
    }
    if (key_limit >= 0 && key_limit < tk) s.rightCols(tk - key_limit).setConstant(-std::numeric_limits<Scalar>::infinity());
    softmax_rows(s);
    Matrix<Scalar> mask = dropout_mask<Scalar>(tq, tk, dropout, rng);
    if (mask.size() != 0) {
      Matrix<Scalar> dropped = s.cwiseProduct(mask);
      out.middleCols(c0, dh).noalias() = dropped * v.middleCols(c0, dh);
    } else {
      out.middleCols(c0, dh).noalias() = s * v.middleCols(c0, dh);
    }
    if (cache) {
      cache->probs[static_cast<std::size_t>(h)] = std::move(s);
      cache->masks[static_cast<std::size_t>(h)] = std::move(mask);
    }
  }
  if (cache) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
  }
  return out;
}

template <typename Scalar>
struct HeadsGrad {
  Matrix<Scalar> dq, dk, dv;
};

template <typename Scalar>
HeadsGrad<Scalar> multi_head_attention_backward(const HeadsCache<Scalar>& cache, const Matrix<Scalar>& dout,
                                                int n_head) {
  const Eigen::Index dh = cache.q.cols() / n_head;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  HeadsGrad<Scalar> g;
  g.dq = Matrix<Scalar>::Zero(cache.q.rows(), cache.q.cols());
  g.dk = Matrix<Scalar>::Zero(cache.k.rows(), cache.k.cols());
  g.dv = Matrix<Scalar>::Zero(cache.v.rows(), cache.v.cols());
  for (int h = 0; h < n_head; ++h) {
    const Eigen::Index c0 = h * dh;
    const auto& p = cache.probs[static_cast<std::size_t>(h)];
    const auto& mask = cache.masks[static_cast<std::size_t>(h)];
    const auto d_head = dout.middleCols(c0, dh);
    Matrix<Scalar> dp = d_head * cache.v.middleCols(c0, dh).transpose();
    if (mask.size() != 0) {
      g.dv.middleCols(c0, dh).noalias() = p.cwiseProduct(mask).transpose() * d_head;
      dp.array() *= mask.array();
    } else {
      g.dv.middleCols(c0, dh).noalias() = p.transpose() * d_head;
    }
    // Softmax backward; masked positions have p = 0 and drop out automatically.
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row_dot = (dp.array() * p.array()).rowwise().sum();
    Matrix<Scalar> ds = (p.array() * (dp.array().colwise() - row_dot.array())).matrix() * scale;
    g.dq.middleCols(c0, dh).noalias() = ds * cache.k.middleCols(c0, dh);
    g.dk.middleCols(c0, dh).noalias() = ds.transpose() * cache.q.middleCols(c0, dh);
  }
  return g;
}

template <typename Scalar>
struct SelfAttentionCache {
  Matrix<Scalar> x;
  Matrix<Scalar> context;
  HeadsCache<Scalar> heads;
};

/// Fused-QKV self-attention with output projection, GPT-2 layout: qkv_w is (d x 3d).
template <typename Scalar>
Matrix<Scalar> self_attention(const Matrix<Scalar>& x, const Parameter<Scalar>& qkv_w, const Parameter<Scalar>& qkv_b,
                              const Parameter<Scalar>& proj_w, const Parameter<Scalar>& proj_b, int n_head,
                              bool causal, double dropout, Rng* rng, SelfAttentionCache<Scalar>* cache,
                              Eigen::Index key_limit = -1) {
  const Eigen::Index d = x.cols();
  const Matrix<Scalar> qkv = linear(x, qkv_w, qkv_b);
  Matrix<Scalar> context = multi_head_attention<Scalar>(qkv.leftCols(d), qkv.middleCols(d, d), qkv.rightCols(d),
                                                        n_head, causal, dropout, rng,
                                                        cache ? &cache->heads : nullptr, key_limit);
  Matrix<Scalar> out = linear(context, proj_w, proj_b);
  if (cache) {
    cache->x = x;
    cache->context = std::move(context);
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> self_attention_backward(const SelfAttentionCache<Scalar>& cache, const Matrix<Scalar>& dout,
                                       Parameter<Scalar>& qkv_w, Parameter<Scalar>& qkv_b, Parameter<Scalar>& proj_w,
                                       Parameter<Scalar>& proj_b, int n_head) {
  const Matrix<Scalar> dcontext = linear_backward(cache.context, dout, proj_w, proj_b);
  const auto g = multi_head_attention_backward(cache.heads, dcontext, n_head);
  const Eigen::Index d = cache.x.cols();
  Matrix<Scalar> dqkv(cache.x.rows(), 3 * d);
  dqkv << g.dq, g.dk, g.dv;
  return linear_backward(cache.x, dqkv, qkv_w, qkv_b);
}

template <typename Scalar>
struct CrossAttentionCache {
  Matrix<Scalar> x;
  Matrix<Scalar> memory;
  Matrix<Scalar> context;
  HeadsCache<Scalar> heads;
};

/// Queries from `x` (Tq x d), keys and values from `memory` (Tk x d); kv_w is (d x 2d).
template <typename Scalar>
Matrix<Scalar> cross_attention(const Matrix<Scalar>& x, const Matrix<Scalar>& memory, const Parameter<Scalar>& q_w,
                               const Parameter<Scalar>& q_b, const Parameter<Scalar>& kv_w,
                               const Parameter<Scalar>& kv_b, const Parameter<Scalar>& proj_w,
                               const Parameter<Scalar>& proj_b, int n_head, double dropout, Rng* rng,
                               CrossAttentionCache<Scalar>* cache, Eigen::Index key_limit = -1) {
  const Eigen::Index d = x.cols();
  Matrix<Scalar> q = linear(x, q_w, q_b);
  const Matrix<Scalar> kv = linear(memory, kv_w, kv_b);
  Matrix<Scalar> context = multi_head_attention<Scalar>(std::move(q), kv.leftCols(d), kv.rightCols(d), n_head, false,
                                                        dropout, rng, cache ? &cache->heads : nullptr, key_limit);
  Matrix<Scalar> out = linear(context, proj_w, proj_b);
  if (cache) {
    cache->x = x;
    cache->memory = memory;
    cache->context = std::move(context);
  }
  return out;
}

template <typename Scalar>
struct CrossAttentionGrad {
  Matrix<Scalar> dx;
  Matrix<Scalar> dmemory;
};

template <typename Scalar>
CrossAttentionGrad<Scalar> cross_attention_backward(const CrossAttentionCache<Scalar>& cache,
                                                    const Matrix<Scalar>& dout, Parameter<Scalar>& q_w,
                                                    Parameter<Scalar>& q_b, Parameter<Scalar>& kv_w,
                                                    Parameter<Scalar>& kv_b, Parameter<Scalar>& proj_w,
                                                    Parameter<Scalar>& proj_b, int n_head) {
  const Matrix<Scalar> dcontext = linear_backward(cache.context, dout, proj_w, proj_b);
  const auto g = multi_head_attention_backward(cache.heads, dcontext, n_head);
  Matrix<Scalar> dkv(cache.memory.rows(), 2 * cache.memory.cols());
  dkv << g.dk, g.dv;
  CrossAttentionGrad<Scalar> out;
  out.dx = linear_backward(cache.x, g.dq, q_w, q_b);
  out.dmemory = linear_backward(cache.memory, dkv, kv_w, kv_b);
  return out;
}

}  // namespace zeroem::nn
