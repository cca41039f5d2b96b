#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "zeroem/core_model.hpp"
#include "zeroem/gbdt.hpp"

namespace zeroem {

/// fit_filter was given single-class training data; the caller should skip
/// difficulty filtering for this dataset.
class FilterUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Positive training pairs split by whether the tabular classifier got them right.
/// Indices refer to PairDataset::train.
struct FilterReport {
  std::string dataset_name;
  std::vector<std::size_t> wrong_positive_indices;
  std::vector<std::size_t> correct_positive_indices;
  nlohmann::json classifier_summary = nlohmann::json::object();

  nlohmann::ordered_json to_json() const;
  static FilterReport from_json(const nlohmann::json& j);
};

/// Fitted per-dataset classifier behind the filter.
class PairClassifier {
 public:
  virtual ~PairClassifier() = default;
  /// Match probability for each pair; pairs must follow the schema the classifier was fitted on.
  virtual std::vector<double> match_probability(std::span<const LabeledPair> pairs) const = 0;
  virtual nlohmann::json summary() const = 0;
};

/// Per-attribute similarity features plus whole-record token overlap.
/// Missing values produce -1 in the similarity columns.
Eigen::MatrixXd pair_features(std::span<const LabeledPair> pairs, std::size_t attribute_count);
std::vector<std::string> pair_feature_names(const std::vector<AttributeName>& attributes);

struct FilterOptions {
  /// Depth grid searched by cross-validation.
  std::vector<int> depth_grid = {2, 3, 4};
  int max_rounds = 200;
  double learning_rate = 0.1;
  int folds = 3;
  /// Datasets smaller than this skip cross-validation and use `fallback`.
  std::size_t min_rows_for_search = 60;
  GbdtParams fallback = {};
};

/// Fits the gradient-boosted fallback classifier on d.train with a small
/// cross-validated search over depth and round count. Deterministic in `seed`.
/// Throws FilterUnavailable when d.train has a single class (or is empty).
std::unique_ptr<PairClassifier> fit_filter(const PairDataset& d, std::uint64_t seed, const FilterOptions& options = {});

/// Partitions the positive training pairs by the classifier's hard label at 0.5.
FilterReport split_positives(const PairDataset& d, const PairClassifier& classifier);

/// Fingerprint of d.train, stored in cached reports to detect stale caches.
std::string train_fingerprint(const PairDataset& d);

std::filesystem::path filter_cache_path(const std::filesystem::path& cache_dir, const std::string& dataset);

/// Returns a cached report when one exists for this dataset, seed and training data.
std::optional<FilterReport> load_cached_filter(const std::filesystem::path& cache_dir, const PairDataset& d,
                                               std::uint64_t seed);
void store_cached_filter(const std::filesystem::path& cache_dir, const FilterReport& report);

/// fit_filter + split_positives, with optional caching under `cache_dir`.
FilterReport run_difficulty_filter(const PairDataset& d, std::uint64_t seed,
                                   const std::optional<std::filesystem::path>& cache_dir = std::nullopt,
                                   const FilterOptions& options = {});

}  // namespace zeroem
