#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zeroem/core_model.hpp"

namespace zeroem {

inline constexpr std::string_view kQuestion = "Given the attributes of the two records, are they the same?";
inline constexpr std::string_view kMissingValue = "N/A";
inline constexpr std::string_view kColumnMarker = "COL";

enum class QuestionPosition { kSuffix, kPrefix };
enum class Enclosure { kAngleP, kNone };
enum class AttributeMarker { kGenericCol, kColumnName };

/// Prompt layout. The default (suffix, <p> enclosure, COL markers) is the
/// production format; the others exist for ablations.
struct SerializationVariant {
  QuestionPosition question_position = QuestionPosition::kSuffix;
  Enclosure enclosure = Enclosure::kAngleP;
  AttributeMarker attribute_marker = AttributeMarker::kGenericCol;

  /// Comma separated tag, e.g. "suffix,p" or "prefix,none,column-name".
  std::string tag() const;
  static SerializationVariant parse(std::string_view tag);

  friend bool operator==(const SerializationVariant&, const SerializationVariant&) = default;
};

enum class Granularity { kRecord, kAttribute };

std::string_view granularity_name(Granularity g);
Granularity parse_granularity(std::string_view name);

struct SerializedSample {
  std::string text;
  Label label = Label::kNonMatch;
  Granularity granularity = Granularity::kRecord;
  bool flipped = false;
  std::string source_dataset;
  /// 1 = attribute pre-training phase (sequential mode), 2 = main phase.
  int phase = 2;

  friend bool operator==(const SerializedSample&, const SerializedSample&) = default;
};

/// Serializes a record pair. `attribute_names` is only read by the
/// column-name variant and must then match the value count.
/// Throws std::invalid_argument on empty or mismatched value lists.
std::string serialize_record_pair(std::span<const Value> left, std::span<const Value> right,
                                  const SerializationVariant& variant = {},
                                  std::span<const AttributeName> attribute_names = {});

/// Single attribute prompt. Throws std::invalid_argument if both values are missing.
std::string serialize_attribute_pair(const Value& left, const Value& right,
                                     const SerializationVariant& variant = {},
                                     const AttributeName* attribute_name = nullptr);

/// Human readable dump with the " Yes." / " No." answer appended.
std::string render_training_dump(const SerializedSample& sample);

/// Inverse of serialization for the COL-marker variants, used to shorten
/// overlong prompts. Values equal to "N/A" come back as that literal.
/// Returns nullopt if `text` does not have the variant's layout.
struct PromptPayload {
  std::vector<std::string> left;
  std::vector<std::string> right;
};
std::optional<PromptPayload> parse_prompt(std::string_view text, const SerializationVariant& variant = {});

/// Re-serializes an already-cleaned payload (no missing-value handling).
std::string render_prompt(const PromptPayload& payload, const SerializationVariant& variant = {});

}  // namespace zeroem
