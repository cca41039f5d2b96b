#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "zeroem/core_model.hpp"
#include "zeroem/corpus_builder.hpp"
#include "zeroem/nn/transformer.hpp"
#include "zeroem/perfbench_cost.hpp"
#include "zeroem/prediction.hpp"
#include "zeroem/serializer.hpp"
#include "zeroem/tokenizer.hpp"

namespace zeroem {

/// A named base model: architecture, tokenizer and whether pretrained weights are required.
struct ModelSpec {
  std::string identifier;
  nn::TransformerConfig config;
  std::string tokenizer_kind;
  bool requires_pretrained = false;
  std::string description;
};

/// Known identifiers: gpt2 (default, decoder-only 124M), encoder-only-base
/// (bert-base), encoder-decoder-base (t5-base), and the byte-level *-compact
/// variants of each family. Throws ValidationError for anything else.
ModelSpec resolve_model(std::string_view identifier);
std::vector<std::string> known_models();

inline constexpr std::string_view kDefaultBaseModel = "gpt2";

struct TrainConfig {
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  int max_epochs = 50;
  int patience = 6;
  double improvement_epsilon = 1e-4;
  /// nullopt selects the largest power of two that fits the memory budget.
  std::optional<std::size_t> batch_size = 16;
  std::size_t max_sequence_length = 512;
  std::uint64_t seed = 0;
  double max_grad_norm = 1.0;
  /// Share of available memory the auto batch size may use.
  double memory_fraction = 0.5;
  /// Upper bound for the auto batch size.
  std::size_t max_auto_batch_size = 64;

  /// Throws ValidationError on inconsistent settings.
  void validate(const nn::TransformerConfig& model) const;
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
  int phase = 2;
  int epoch = 0;
  double train_loss = 0.0;
  double validation_f1 = 0.0;
  bool improved = false;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  /// Best epoch (1-based) of the final phase and its validation F1.
  int best_epoch = 0;
  double best_validation_f1 = 0.0;
  int phase1_best_epoch = 0;
  std::size_t batch_size = 0;

  std::vector<double> curve(int phase, bool loss) const;
  nlohmann::ordered_json to_json() const;
  static TrainingHistory from_json(const nlohmann::json& j);
};

class MatcherModel {
 public:
  MatcherModel(ModelSpec spec, std::unique_ptr<Tokenizer> tokenizer, SerializationVariant variant = {});

  const ModelSpec& spec() const { return spec_; }
  const Tokenizer& tokenizer() const { return *tokenizer_; }
  nn::TransformerClassifier<float>& network() { return network_; }
  const nn::TransformerClassifier<float>& network() const { return network_; }
  const SerializationVariant& variant() const { return variant_; }

  /// Which representation feeds the head: "last-token", "pooled-first-token" or "decoder-query".
  std::string head_input() const;
  std::size_t parameter_count() const { return network_.parameter_count(); }

  /// Token ids for a serialized prompt, shortened by trimming attribute values
  /// (longest first) until it fits `max_length`. Throws ValidationError when it cannot fit.
  std::vector<TokenId> encode_prompt(std::string_view prompt, std::size_t max_length) const;

  /// Match probability from one logit pair.
  static double match_score(float logit_nonmatch, float logit_match);

  std::optional<CorpusProvenance> provenance;
  std::optional<TrainConfig> train_config;
  TrainingHistory history;
  std::size_t max_sequence_length = 512;

 private:
  ModelSpec spec_;
  std::unique_ptr<Tokenizer> tokenizer_;
  SerializationVariant variant_;
  nn::TransformerClassifier<float> network_;
};

struct ScaffoldOptions {
  /// Directory with weights.bin and tokenizer files of the pretrained base.
  std::optional<std::filesystem::path> pretrained_dir;
  /// Permit random initialization for bases that normally need pretrained weights.
  bool allow_random_init = false;
  std::uint64_t seed = 0;
  SerializationVariant variant = {};
};

/// Untrained matcher for `identifier` with a freshly initialized 2-class head.
/// Throws ValidationError for unknown identifiers and LoadError when required weights are absent.
MatcherModel swap_base_model(std::string_view identifier, const ScaffoldOptions& options = {});

/// Observer called after every epoch.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Fine-tunes `model` on `train`, selecting the epoch with the best F1 on `validation`.
/// When `train` holds phase-1 samples those are trained first, to convergence,
/// then phase 2 continues from the best phase-1 weights.
void finetune(MatcherModel& model, const FineTuneCorpus& train, const FineTuneCorpus& validation,
              const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Predictions for serialized prompts, in order. Batch size never changes results.
std::vector<MatchPrediction> predict_texts(const MatcherModel& model, const std::vector<std::string>& prompts,
                                           std::optional<std::size_t> batch_size = std::nullopt);

/// Serializes with the model's variant, then predicts. Errors name the offending pair index.
std::vector<MatchPrediction> predict_pairs(const MatcherModel& model, std::span<const LabeledPair> pairs,
                                           std::span<const AttributeName> schema = {},
                                           std::optional<std::size_t> batch_size = std::nullopt);

/// Logits of a padded batch: every row of `batch` is padded with the pad token
/// to the longest row plus `extra_padding`; padding is masked out.
std::vector<std::array<float, 2>> padded_batch_logits(const MatcherModel& model,
                                                      const std::vector<std::vector<TokenId>>& batch,
                                                      std::size_t extra_padding = 0);

/// Bytes of activations for a batch of `batch_size` sequences of `length` tokens, plus weights
/// (and optimizer state when `training`).
std::size_t estimate_memory_bytes(const nn::TransformerConfig& config, std::size_t length, std::size_t batch_size,
                                  bool training);

/// MemAvailable from /proc/meminfo, if readable.
std::optional<std::size_t> available_memory_bytes();

std::size_t auto_batch_size(const nn::TransformerConfig& config, std::size_t length, std::size_t budget_bytes,
                            std::size_t cap, bool training);

/// Checkpoint directory: weights.bin, tokenizer files, config.json, provenance.json.
void save_checkpoint(const MatcherModel& model, const std::filesystem::path& dir);
MatcherModel load_checkpoint(const std::filesystem::path& dir);

/// PairMatcher view of a fine-tuned model for the evaluation harness.
class FineTunedMatcher final : public PairMatcher {
 public:
  explicit FineTunedMatcher(std::shared_ptr<const MatcherModel> model, std::optional<std::size_t> batch_size = {})
      : model_(std::move(model)), batch_size_(batch_size) {}

  std::string id() const override;
  std::optional<CorpusProvenance> provenance() const override { return model_->provenance; }
  std::vector<MatchPrediction> predict(std::span<const LabeledPair> pairs,
                                       std::span<const AttributeName> schema) const override;

 private:
  std::shared_ptr<const MatcherModel> model_;
  std::optional<std::size_t> batch_size_;
};

/// Hooks for the throughput benchmark: the probe accepts a batch size when its
/// estimated footprint fits `budget_bytes` and a forward pass over that many
/// prompts succeeds (run for sizes up to `execute_up_to`).
BatchProbe make_batch_probe(const MatcherModel& model, std::span<const TokenizedPrompt> prompts,
                            std::size_t budget_bytes, std::size_t execute_up_to = 64);
BatchRunner make_batch_runner(const MatcherModel& model);

/// Tokenized benchmark prompts using the model's own tokenizer.
std::vector<TokenizedPrompt> tokenize_prompts(const MatcherModel& model, const std::vector<std::string>& prompts);

}  // namespace zeroem
