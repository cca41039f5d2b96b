#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace zeroem {

/// Raised when an input file or directory cannot be read.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when input data violates a structural invariant (bad label, ragged row, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Label : std::uint8_t { kNonMatch = 0, kMatch = 1 };

constexpr int to_int(Label label) { return static_cast<int>(label); }
constexpr Label label_from_bool(bool match) { return match ? Label::kMatch : Label::kNonMatch; }
Label label_from_int(long value);

/// Attribute name of an aligned schema. Stored trimmed and lowercased.
class AttributeName {
 public:
  explicit AttributeName(std::string_view raw);

  const std::string& str() const { return name_; }
  friend bool operator==(const AttributeName&, const AttributeName&) = default;
  friend auto operator<=>(const AttributeName&, const AttributeName&) = default;

 private:
  std::string name_;
};

/// A missing attribute value is std::nullopt.
using Value = std::optional<std::string>;

struct Record {
  std::vector<Value> values;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const Record&, const Record&) = default;
};

struct LabeledPair {
  Record left;
  Record right;
  Label label = Label::kNonMatch;

  bool is_match() const { return label == Label::kMatch; }
  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

enum class Split { kTrain, kValid, kTest };

std::string_view split_name(Split split);

struct PairDataset {
  std::string name;
  std::vector<AttributeName> attributes;
  std::string domain;
  std::vector<LabeledPair> train;
  std::vector<LabeledPair> valid;
  std::vector<LabeledPair> test;

  const std::vector<LabeledPair>& split(Split s) const;
  std::vector<LabeledPair>& split(Split s);

  /// Position of `attribute` in the schema, if present.
  std::optional<std::size_t> attribute_index(const AttributeName& attribute) const;

  /// Throws ValidationError if any pair does not conform to the schema.
  void validate() const;
};

struct SplitCounts {
  std::size_t total = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

struct DatasetManifest {
  std::string name;
  std::vector<std::string> attributes;
  std::string domain;
  SplitCounts train;
  SplitCounts valid;
  SplitCounts test;

  std::size_t total() const { return train.total + valid.total + test.total; }
  nlohmann::ordered_json to_json() const;
};

struct LoadOptions {
  /// Reject CSV columns that are not part of the declared schema, and
  /// identical pairs shared between splits.
  bool strict = false;
};

/// True for cells that normalize to a missing value: empty, "NULL", "nan" (any case).
bool is_missing_cell(std::string_view cell);

SplitCounts count_split(const std::vector<LabeledPair>& pairs);

/// Reads manifest.json plus train.csv / valid.csv / test.csv from `dir`.
PairDataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options = {});

/// Writes `dataset` in the same layout load_dataset reads.
void write_dataset(const PairDataset& dataset, const std::filesystem::path& dir);

DatasetManifest dataset_stats(const PairDataset& dataset);

/// Loads every immediate subdirectory of `root` holding a manifest.json, ordered by directory name.
std::vector<PairDataset> load_dataset_collection(const std::filesystem::path& root,
                                                 const LoadOptions& options = {});

const PairDataset* find_dataset(const std::vector<PairDataset>& datasets, std::string_view name);

}  // namespace zeroem
