#pragma once

#include <string>
#include <string_view>

#include "zeroem/core_model.hpp"
#include "zeroem/prediction.hpp"

namespace zeroem {

struct StringSimConfig {
  double threshold = 0.5;
  std::string separator = ", ";
  /// Mirror difflib's popular-element heuristic for sequences of 200+ code points.
  bool autojunk = true;
};

/// Gestalt pattern matching similarity 2*M/(|a|+|b|), computed over Unicode
/// code points with difflib's block search order. Not symmetric in general:
/// `a` is the left serialization. Two empty strings score 1.
double ratcliff_obershelp(std::string_view a, std::string_view b, bool autojunk = true);

/// Values joined by `separator`; missing values become empty strings.
std::string join_record(const Record& record, std::string_view separator);

/// label = score > threshold (strict).
MatchPrediction stringsim_predict(const Record& left, const Record& right, const StringSimConfig& config = {});

class StringSimMatcher final : public PairMatcher {
 public:
  explicit StringSimMatcher(StringSimConfig config = {}) : config_(std::move(config)) {}

  std::string id() const override { return "stringsim"; }
  std::vector<MatchPrediction> predict(std::span<const LabeledPair> pairs,
                                       std::span<const AttributeName> schema) const override;

 private:
  StringSimConfig config_;
};

}  // namespace zeroem
