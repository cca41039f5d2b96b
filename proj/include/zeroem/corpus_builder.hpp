#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "zeroem/core_model.hpp"
#include "zeroem/difficulty_filter.hpp"
#include "zeroem/serializer.hpp"

namespace zeroem {

enum class AttributeMode { kMix, kSequential, kOff };

std::string_view attribute_mode_name(AttributeMode mode);
AttributeMode parse_attribute_mode(std::string_view name);

struct GenerationConfig {
  /// Record-level pairs kept per dataset.
  std::size_t n_r = 1200;
  /// Cap on attribute-level samples per attribute.
  std::size_t n_a = 600;
  std::uint64_t seed = 0;
  bool enable_automl_filter = true;
  bool enable_flip = true;
  AttributeMode attribute_mode = AttributeMode::kMix;
  SerializationVariant variant = {};

  nlohmann::ordered_json to_json() const;
  static GenerationConfig from_json(const nlohmann::json& j);
};

struct DatasetContribution {
  std::string dataset;
  std::size_t record_pairs = 0;
  std::size_t record_positives = 0;
  std::size_t record_negatives = 0;
  std::size_t hard_positives = 0;
  bool filtered = false;
  std::size_t attribute_samples = 0;
};

struct FineTuneCorpus {
  std::vector<SerializedSample> samples;
  GenerationConfig config;
  std::string excluded_target;
  std::vector<std::string> sources;
  std::vector<DatasetContribution> contributions;
  std::vector<std::string> warnings;

  /// FNV-1a of the JSONL rendering.
  std::string hash() const;
  bool has_phase(int phase) const;
};

struct AttributeEntry {
  Value left;
  Value right;
  Label label = Label::kNonMatch;
  std::string source;
};

struct AttributeGroup {
  AttributeName attribute;
  std::vector<AttributeEntry> pairs;
};

/// Record-level samples for one transfer dataset. `warnings` receives a note when
/// there are fewer than 2·n+ negatives. Throws ValidationError when |train| > n_r
/// and the dataset has no positives.
std::vector<SerializedSample> gen_recordlevel(const PairDataset& d, const GenerationConfig& cfg,
                                              const std::optional<FilterReport>& filter_report,
                                              std::vector<std::string>* warnings = nullptr);

/// Attribute pairs grouped by attribute name over the train splits, ordered by name.
/// Pairs with both values missing are skipped.
std::vector<AttributeGroup> collect_attribute_groups(const std::vector<const PairDataset*>& datasets);

std::vector<SerializedSample> gen_attributelevel(const std::vector<const PairDataset*>& datasets,
                                                 const GenerationConfig& cfg);
std::vector<SerializedSample> gen_attributelevel(const std::vector<PairDataset>& datasets, const GenerationConfig& cfg);

/// Supplies the difficulty split for a dataset; the default runs the GBDT filter.
using FilterProvider = std::function<FilterReport(const PairDataset&, std::uint64_t seed)>;

/// Leave-one-out corpus for `target`. Throws ValidationError if the target is
/// unknown or no other dataset exists.
FineTuneCorpus build_corpus(const std::vector<PairDataset>& datasets, const std::string& target,
                            const GenerationConfig& cfg, const FilterProvider& filter = {});

/// Stratified split into (train, validation); flipped twins stay together.
/// Throws std::invalid_argument for fractions outside (0, 1) and ValidationError
/// when a label has too few samples to appear on both sides.
std::pair<FineTuneCorpus, FineTuneCorpus> split_validation(const FineTuneCorpus& c, double fraction,
                                                           std::uint64_t seed = 0);

nlohmann::ordered_json sample_to_json(const SerializedSample& s);
SerializedSample sample_from_json(const nlohmann::json& j);

std::string corpus_to_jsonl(const std::vector<SerializedSample>& samples);
std::vector<SerializedSample> corpus_from_jsonl(std::string_view text);

/// Generation sidecar: config, seed, sources and per-dataset counts.
nlohmann::ordered_json corpus_metadata(const FineTuneCorpus& c);

/// Writes `<path>` (JSONL) and `<path>.meta.json`.
void write_corpus(const FineTuneCorpus& c, const std::filesystem::path& path);

/// Reads a corpus written by write_corpus. The sidecar is optional; without it
/// config and provenance fields are left at their defaults.
FineTuneCorpus read_corpus(const std::filesystem::path& path);

std::filesystem::path corpus_metadata_path(const std::filesystem::path& corpus_path);

}  // namespace zeroem
