#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "zeroem/core_model.hpp"
#include "zeroem/prediction.hpp"

namespace zeroem {

/// Raised when a matcher's fine-tuning data includes the evaluation target.
class ZeroShotViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct F1Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Every 0/0 ratio is taken as 0, so a matcher that predicts no positives scores f1 = 0.
F1Metrics f1_from_confusion(const ConfusionCounts& counts);

ConfusionCounts confusion(std::span<const LabeledPair> truth, std::span<const MatchPrediction> predictions);

struct EvalReport {
  std::string target_dataset;
  std::string matcher_id;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  ConfusionCounts counts;
  std::size_t test_size_used = 0;
  bool downsampled = false;
  std::uint64_t seed = 0;

  nlohmann::ordered_json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

/// Test sets larger than this many pairs get down-sampled.
inline constexpr std::size_t kDownsampleAbove = 1250;
inline constexpr std::size_t kMaxTestPositives = 250;
inline constexpr std::size_t kMaxTestNegatives = 1000;

/// Indices into `test` kept by the down-sampling rule, in a seeded shuffled order.
/// Returns 0..n-1 unchanged when n <= 1250.
std::vector<std::size_t> downsample_indices(std::span<const LabeledPair> test, std::uint64_t seed);

std::vector<LabeledPair> downsample_test(std::span<const LabeledPair> test, std::uint64_t seed);

struct EvalConfig {
  std::uint64_t seed = 0;
  /// Explicit test-split row indices; replaces down-sampling when set
  /// (for parity with externally published test pair lists).
  std::optional<std::vector<std::size_t>> pair_list;
};

/// Reads a pair list: a JSON array of row indices, or one index per line.
std::vector<std::size_t> read_pair_list(const std::filesystem::path& path);

/// Throws ZeroShotViolation if the matcher's corpus was not built with `target`
/// excluded, or lists `target` among its sources.
void check_zero_shot(const PairMatcher& matcher, std::string_view target);

EvalReport evaluate_zero_shot(const std::vector<PairDataset>& datasets, std::string_view target,
                              const PairMatcher& matcher, const EvalConfig& config = {});

struct SummaryTable {
  std::string matcher_id;
  std::vector<std::pair<std::string, double>> f1_by_target;
  double mean_f1 = 0.0;

  /// Header `matcher,<targets...>,mean`, then one row with F1 in percent (2 decimals).
  std::string to_csv() const;
  nlohmann::ordered_json to_json() const;
};

/// Per-target F1 plus the unweighted mean. Throws std::invalid_argument on an
/// empty list or a repeated target.
SummaryTable aggregate(std::span<const EvalReport> reports);

}  // namespace zeroem
