#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "zeroem/core_model.hpp"

namespace zeroem {

struct MatchPrediction {
  Label label = Label::kNonMatch;
  /// Match-class score in [0, 1].
  double score = 0.0;
};

/// Where a trained matcher's fine-tuning data came from. Evaluation uses it
/// to refuse matchers that have seen the target dataset.
struct CorpusProvenance {
  std::string excluded_target;
  std::vector<std::string> sources;
  std::string corpus_hash;

  nlohmann::ordered_json to_json() const;
  static CorpusProvenance from_json(const nlohmann::json& j);
};

/// Anything the evaluation harness can score pairs with.
class PairMatcher {
 public:
  virtual ~PairMatcher() = default;

  virtual std::string id() const = 0;

  /// Empty for training-free matchers.
  virtual std::optional<CorpusProvenance> provenance() const { return std::nullopt; }

  /// One prediction per pair, in order. `schema` is only consulted by
  /// ablation variants that put attribute names into prompts.
  virtual std::vector<MatchPrediction> predict(std::span<const LabeledPair> pairs,
                                               std::span<const AttributeName> schema) const = 0;
};

}  // namespace zeroem
