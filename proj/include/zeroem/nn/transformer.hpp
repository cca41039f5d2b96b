#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "zeroem/nn/attention.hpp"
#include "zeroem/nn/layers.hpp"

namespace zeroem::nn {

enum class Family { kDecoderOnly, kEncoderOnly, kEncoderDecoder };

std::string_view family_name(Family family);
Family parse_family(std::string_view name);

struct TransformerConfig {
  Family family = Family::kDecoderOnly;
  int n_layer = 12;
  /// Decoder blocks of the encoder-decoder family.
  int n_dec_layer = 0;
  int n_embd = 768;
  int n_head = 12;
  int vocab_size = 50257;
  int n_ctx = 1024;
  double dropout = 0.1;
  double layer_norm_eps = 1e-5;
  int num_labels = 2;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TransformerConfig from_json(const nlohmann::json& j);
  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

/// Number of trainable scalars, classification head included.
std::size_t parameter_count(const TransformerConfig& config);

/// Transformer with a 2-class linear head. Decoder-only models read the last
/// token, encoder-only models the first (classification) token through a tanh
/// pooler, encoder-decoder models a single learned decoder query that
/// cross-attends over the encoder output. Parameters use GPT-2 names and layouts.
template <typename Scalar>
class TransformerClassifier {
 public:
  struct BlockCache {
    LayerNormCache<Scalar> ln1;
    SelfAttentionCache<Scalar> attn;
    CrossAttentionCache<Scalar> cross;
    Matrix<Scalar> attn_mask;
    LayerNormCache<Scalar> ln2;
    Matrix<Scalar> ln2_out;
    Matrix<Scalar> fc_pre;
    Matrix<Scalar> fc_act;
    Matrix<Scalar> mlp_mask;
  };

  struct Cache {
    std::vector<std::int32_t> tokens;
    Matrix<Scalar> emb_mask;
    std::vector<BlockCache> blocks;
    LayerNormCache<Scalar> ln_f;
    Matrix<Scalar> memory;
    std::vector<BlockCache> dec_blocks;
    LayerNormCache<Scalar> dec_ln_f;
    Matrix<Scalar> pool_in;
    Matrix<Scalar> pooled;
    Matrix<Scalar> feature;
    std::size_t length = 0;
  };

  explicit TransformerClassifier(TransformerConfig config) : config_(std::move(config)) {
    config_.validate();
    const int d = config_.n_embd;
    add("wte.weight", config_.vocab_size, d);
    add("wpe.weight", config_.n_ctx, d);
    for (int i = 0; i < config_.n_layer; ++i) blocks_.push_back(add_block("h." + std::to_string(i), false));
    add("ln_f.weight", 1, d);
    add("ln_f.bias", 1, d);
    if (config_.family == Family::kEncoderOnly) {
      add("pooler.dense.weight", d, d);
      add("pooler.dense.bias", 1, d);
    }
    if (config_.family == Family::kEncoderDecoder) {
      add("dec_start", 1, d);
      for (int i = 0; i < config_.n_dec_layer; ++i) dec_blocks_.push_back(add_block("dec." + std::to_string(i), true));
      add("dec_ln_f.weight", 1, d);
      add("dec_ln_f.bias", 1, d);
    }
    add("score.weight", config_.num_labels, d);
    for (auto& p : params_) {
      p.decay = p.value.rows() > 1;
      p.grad = Matrix<Scalar>::Zero(p.value.rows(), p.value.cols());
    }
  }

  const TransformerConfig& config() const { return config_; }
  std::vector<Parameter<Scalar>>& parameters() { return params_; }
  const std::vector<Parameter<Scalar>>& parameters() const { return params_; }

  Parameter<Scalar>* find(const std::string& name) {
    const auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  /// GPT-2 style initialization: N(0, 0.02), residual projections scaled by 1/sqrt(2 * layers).
  void init(Rng& rng) {
    const double resid_std = 0.02 / std::sqrt(2.0 * std::max(1, config_.n_layer + config_.n_dec_layer));
    for (auto& p : params_) {
      const bool is_norm = p.name.find("ln_") != std::string::npos;
      const bool is_bias = p.name.size() >= 5 && p.name.compare(p.name.size() - 5, 5, ".bias") == 0;
      if (is_bias) {
        p.value.setZero();
      } else if (is_norm) {
        p.value.setOnes();
      } else {
        const bool resid = p.name.find("c_proj.weight") != std::string::npos;
        const double std = resid ? resid_std : 0.02;
        for (Eigen::Index j = 0; j < p.value.cols(); ++j)
          for (Eigen::Index i = 0; i < p.value.rows(); ++i) p.value(i, j) = static_cast<Scalar>(std * rng.normal());
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

  /// Class logits for one sequence. Positions from `length` on are padding and
  /// are masked out (0 = no padding). `rng` enables dropout; `cache` enables backward.
  RowVector<Scalar> forward(std::span<const std::int32_t> tokens, Cache* cache = nullptr, Rng* rng = nullptr,
                            std::size_t length = 0) const {
    const auto t = static_cast<Eigen::Index>(tokens.size());
    if (t == 0) throw std::invalid_argument("empty token sequence");
    if (length == 0 || length > tokens.size()) length = tokens.size();
    const auto valid = static_cast<Eigen::Index>(length);
    if (t > config_.n_ctx) throw std::invalid_argument("sequence of " + std::to_string(t) +
                                                       " tokens exceeds the context window of " +
                                                       std::to_string(config_.n_ctx));
    const double p = rng ? config_.dropout : 0.0;
    const Matrix<Scalar>& wte = P("wte.weight");
    const Matrix<Scalar>& wpe = P("wpe.weight");
    Matrix<Scalar> x(t, config_.n_embd);
    for (Eigen::Index i = 0; i < t; ++i) {
      const auto id = tokens[static_cast<std::size_t>(i)];
      if (id < 0 || id >= config_.vocab_size) throw std::invalid_argument("token id out of range");
      x.row(i) = wte.row(id) + wpe.row(i);
    }
    Matrix<Scalar> emb_mask = dropout_mask<Scalar>(t, config_.n_embd, p, rng);
    apply_mask(x, emb_mask);
    if (cache) {
      cache->tokens.assign(tokens.begin(), tokens.end());
      cache->emb_mask = std::move(emb_mask);
      cache->blocks.assign(blocks_.size(), {});
    }
    const bool causal = config_.family == Family::kDecoderOnly;
    for (std::size_t b = 0; b < blocks_.size(); ++b)
      x = block_forward(blocks_[b], x, nullptr, causal, p, rng, cache ? &cache->blocks[b] : nullptr, valid);

    Matrix<Scalar> feature;
    const auto eps = static_cast<Scalar>(config_.layer_norm_eps);
    switch (config_.family) {
      case Family::kDecoderOnly: {
        const Matrix<Scalar> last = x.row(valid - 1);
        feature = layer_norm(last, param("ln_f.weight"), param("ln_f.bias"), eps, cache ? &cache->ln_f : nullptr);
        break;
      }
      case Family::kEncoderOnly: {
        const Matrix<Scalar> first = x.topRows(1);
        Matrix<Scalar> h = layer_norm(first, param("ln_f.weight"), param("ln_f.bias"), eps, cache ? &cache->ln_f : nullptr);
        feature = linear(h, param("pooler.dense.weight"), param("pooler.dense.bias")).array().tanh().matrix();
        if (cache) cache->pool_in = std::move(h);
        break;
      }
      case Family::kEncoderDecoder: {
        Matrix<Scalar> memory = layer_norm(x, param("ln_f.weight"), param("ln_f.bias"), eps, cache ? &cache->ln_f : nullptr);
        Matrix<Scalar> y = P("dec_start");
        if (cache) cache->dec_blocks.assign(dec_blocks_.size(), {});
        for (std::size_t b = 0; b < dec_blocks_.size(); ++b)
          y = block_forward(dec_blocks_[b], y, &memory, false, p, rng, cache ? &cache->dec_blocks[b] : nullptr, valid);
        feature = layer_norm(y, param("dec_ln_f.weight"), param("dec_ln_f.bias"), eps, cache ? &cache->dec_ln_f : nullptr);
        if (cache) cache->memory = std::move(memory);
        break;
      }
    }
    RowVector<Scalar> logits = feature * P("score.weight").transpose();
    if (cache) {
      cache->feature = std::move(feature);
      cache->length = length;
    }
    return logits;
  }

  /// Accumulates parameter gradients for dL/dlogits.
  void backward(const Cache& cache, const RowVector<Scalar>& dlogits) {
    auto& score = param("score.weight");
    score.grad.noalias() += dlogits.transpose() * cache.feature;
    Matrix<Scalar> dfeature = dlogits * score.value;
    const auto t = static_cast<Eigen::Index>(cache.tokens.size());
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(t, config_.n_embd);

    switch (config_.family) {
      case Family::kDecoderOnly:
        dx.row(static_cast<Eigen::Index>(cache.length) - 1) = layer_norm_backward(cache.ln_f, dfeature, param("ln_f.weight"), param("ln_f.bias"));
        break;
      case Family::kEncoderOnly: {
        const Matrix<Scalar> dpre = (dfeature.array() * (Scalar(1) - cache.feature.array().square())).matrix();
        const Matrix<Scalar> dh = linear_backward(cache.pool_in, dpre, param("pooler.dense.weight"), param("pooler.dense.bias"));
        dx.topRows(1) = layer_norm_backward(cache.ln_f, dh, param("ln_f.weight"), param("ln_f.bias"));
        break;
      }
      case Family::kEncoderDecoder: {
        Matrix<Scalar> dy = layer_norm_backward(cache.dec_ln_f, dfeature, param("dec_ln_f.weight"), param("dec_ln_f.bias"));
        Matrix<Scalar> dmemory = Matrix<Scalar>::Zero(t, config_.n_embd);
        for (std::size_t b = dec_blocks_.size(); b-- > 0;)
          dy = block_backward(dec_blocks_[b], cache.dec_blocks[b], dy, &dmemory);
        param("dec_start").grad += dy;
        dx = layer_norm_backward(cache.ln_f, dmemory, param("ln_f.weight"), param("ln_f.bias"));
        break;
      }
    }
    for (std::size_t b = blocks_.size(); b-- > 0;) dx = block_backward(blocks_[b], cache.blocks[b], dx, nullptr);
    apply_mask(dx, cache.emb_mask);
    auto& wte = param("wte.weight");
    auto& wpe = param("wpe.weight");
    for (Eigen::Index i = 0; i < t; ++i) {
      wte.grad.row(cache.tokens[static_cast<std::size_t>(i)]) += dx.row(i);
      wpe.grad.row(i) += dx.row(i);
    }
  }

 private:
  struct BlockIndex {
    std::size_t ln1_w, ln1_b, ln2_w, ln2_b, fc_w, fc_b, fc2_w, fc2_b;
    std::size_t qkv_w = 0, qkv_b = 0;          // self-attention
    std::size_t q_w = 0, q_b = 0, kv_w = 0, kv_b = 0;  // cross-attention
    std::size_t proj_w, proj_b;
    bool cross = false;
  };

  std::size_t add(const std::string& name, int rows, int cols) {
    index_[name] = params_.size();
    Parameter<Scalar> p;
    p.name = name;
    p.value = Matrix<Scalar>::Zero(rows, cols);
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  BlockIndex add_block(const std::string& prefix, bool cross) {
    const int d = config_.n_embd;
    BlockIndex b;
    b.cross = cross;
    b.ln1_w = add(prefix + ".ln_1.weight", 1, d);
    b.ln1_b = add(prefix + ".ln_1.bias", 1, d);
    if (cross) {
      b.q_w = add(prefix + ".cross.q.weight", d, d);
      b.q_b = add(prefix + ".cross.q.bias", 1, d);
      b.kv_w = add(prefix + ".cross.kv.weight", d, 2 * d);
      b.kv_b = add(prefix + ".cross.kv.bias", 1, 2 * d);
      b.proj_w = add(prefix + ".cross.c_proj.weight", d, d);
      b.proj_b = add(prefix + ".cross.c_proj.bias", 1, d);
    } else {
      b.qkv_w = add(prefix + ".attn.c_attn.weight", d, 3 * d);
      b.qkv_b = add(prefix + ".attn.c_attn.bias", 1, 3 * d);
      b.proj_w = add(prefix + ".attn.c_proj.weight", d, d);
      b.proj_b = add(prefix + ".attn.c_proj.bias", 1, d);
    }
    b.ln2_w = add(prefix + ".ln_2.weight", 1, d);
    b.ln2_b = add(prefix + ".ln_2.bias", 1, d);
    b.fc_w = add(prefix + ".mlp.c_fc.weight", d, 4 * d);
    b.fc_b = add(prefix + ".mlp.c_fc.bias", 1, 4 * d);
    b.fc2_w = add(prefix + ".mlp.c_proj.weight", 4 * d, d);
    b.fc2_b = add(prefix + ".mlp.c_proj.bias", 1, d);
    return b;
  }

  const Matrix<Scalar>& P(const std::string& name) const { return params_[index_.at(name)].value; }
  const Parameter<Scalar>& param(const std::string& name) const { return params_[index_.at(name)]; }
  Parameter<Scalar>& param(const std::string& name) { return params_[index_.at(name)]; }

  Matrix<Scalar> block_forward(const BlockIndex& b, const Matrix<Scalar>& x, const Matrix<Scalar>* memory, bool causal,
                               double p, Rng* rng, BlockCache* cache, Eigen::Index key_limit) const {
    const auto eps = static_cast<Scalar>(config_.layer_norm_eps);
    const auto& ps = params_;
    const Matrix<Scalar> a = layer_norm(x, ps[b.ln1_w], ps[b.ln1_b], eps, cache ? &cache->ln1 : nullptr);
    Matrix<Scalar> attn =
        b.cross ? cross_attention(a, *memory, ps[b.q_w], ps[b.q_b], ps[b.kv_w], ps[b.kv_b], ps[b.proj_w], ps[b.proj_b],
                                  config_.n_head, p, rng, cache ? &cache->cross : nullptr, key_limit)
                : self_attention(a, ps[b.qkv_w], ps[b.qkv_b], ps[b.proj_w], ps[b.proj_b], config_.n_head, causal, p, rng,
                                 cache ? &cache->attn : nullptr, key_limit);
    Matrix<Scalar> attn_mask = dropout_mask<Scalar>(attn.rows(), attn.cols(), p, rng);
    apply_mask(attn, attn_mask);
    Matrix<Scalar> x1 = x + attn;
    Matrix<Scalar> h = layer_norm(x1, ps[b.ln2_w], ps[b.ln2_b], eps, cache ? &cache->ln2 : nullptr);
    Matrix<Scalar> f = linear(h, ps[b.fc_w], ps[b.fc_b]);
    Matrix<Scalar> g = gelu(f);
    Matrix<Scalar> m = linear(g, ps[b.fc2_w], ps[b.fc2_b]);
    Matrix<Scalar> mlp_mask = dropout_mask<Scalar>(m.rows(), m.cols(), p, rng);
    apply_mask(m, mlp_mask);
    x1 += m;
    if (cache) {
      cache->attn_mask = std::move(attn_mask);
      cache->ln2_out = std::move(h);
      cache->fc_pre = std::move(f);
      cache->fc_act = std::move(g);
      cache->mlp_mask = std::move(mlp_mask);
    }
    return x1;
  }

  Matrix<Scalar> block_backward(const BlockIndex& b, const BlockCache& cache, const Matrix<Scalar>& dout,
                                Matrix<Scalar>* dmemory) {
    auto& ps = params_;
    Matrix<Scalar> dm = dout;
    apply_mask(dm, cache.mlp_mask);
    const Matrix<Scalar> dg = linear_backward(cache.fc_act, dm, ps[b.fc2_w], ps[b.fc2_b]);
    const Matrix<Scalar> df = gelu_backward(cache.fc_pre, dg);
    const Matrix<Scalar> dh = linear_backward(cache.ln2_out, df, ps[b.fc_w], ps[b.fc_b]);
    Matrix<Scalar> dx1 = dout + layer_norm_backward(cache.ln2, dh, ps[b.ln2_w], ps[b.ln2_b]);
    Matrix<Scalar> dattn = dx1;
    apply_mask(dattn, cache.attn_mask);
    Matrix<Scalar> da;
    if (b.cross) {
      auto g = cross_attention_backward(cache.cross, dattn, ps[b.q_w], ps[b.q_b], ps[b.kv_w], ps[b.kv_b], ps[b.proj_w],
                                        ps[b.proj_b], config_.n_head);
      *dmemory += g.dmemory;
      da = std::move(g.dx);
    } else {
      da = self_attention_backward(cache.attn, dattn, ps[b.qkv_w], ps[b.qkv_b], ps[b.proj_w], ps[b.proj_b],
                                   config_.n_head);
    }
    return dx1 + layer_norm_backward(cache.ln1, da, ps[b.ln1_w], ps[b.ln1_b]);
  }

  TransformerConfig config_;
  std::vector<Parameter<Scalar>> params_;
  std::map<std::string, std::size_t> index_;
  std::vector<BlockIndex> blocks_;
  std::vector<BlockIndex> dec_blocks_;
};

}  // namespace zeroem::nn
