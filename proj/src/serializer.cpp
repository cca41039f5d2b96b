#include "zeroem/serializer.hpp"

#include <stdexcept>

#include "zeroem/util.hpp"

namespace zeroem {

namespace {

constexpr std::string_view kRecordA = "Record A is ";
constexpr std::string_view kRecordB = "Record B is ";
constexpr std::string_view kOpen = "<p>";
constexpr std::string_view kClose = "</p>";
constexpr std::string_view kSeparator = ", ";

// Runs of CR/LF collapse to one space.
std::string clean_value(std::string_view v) {
  std::string out;
  out.reserve(v.size());
  bool in_break = false;
  for (char c : v) {
    if (c == '\n' || c == '\r') {
      if (!in_break) out.push_back(' ');
      in_break = true;
    } else {
      out.push_back(c);
      in_break = false;
    }
  }
  return out;
}

std::string render_value(const Value& v) { return v ? clean_value(*v) : std::string(kMissingValue); }

std::string marker_for(const SerializationVariant& variant, const AttributeName* name) {
  if (variant.attribute_marker == AttributeMarker::kGenericCol) return std::string(kColumnMarker);
  if (!name) throw std::invalid_argument("column-name serialization requires attribute names");
  return name->str();
}

void append_record(std::string& out, std::string_view intro, const std::vector<std::string>& fields,
                   const SerializationVariant& variant) {
  out += intro;
  if (variant.enclosure == Enclosure::kAngleP) out += kOpen;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += kSeparator;
    out += fields[i];
  }
  if (variant.enclosure == Enclosure::kAngleP) out += kClose;
  out.push_back('.');
}

std::string assemble(const std::vector<std::string>& left, const std::vector<std::string>& right,
                     const SerializationVariant& variant) {
  std::string body;
  append_record(body, kRecordA, left, variant);
  body.push_back(' ');
  append_record(body, kRecordB, right, variant);
  if (variant.question_position == QuestionPosition::kSuffix) return body + " " + std::string(kQuestion);
  return std::string(kQuestion) + " " + body;
}

std::optional<std::vector<std::string>> split_fields(std::string_view payload) {
  const std::string lead = std::string(kColumnMarker) + " ";
  if (payload.substr(0, lead.size()) != lead) return std::nullopt;
  payload.remove_prefix(lead.size());
  const std::string sep = std::string(kSeparator) + lead;
  std::vector<std::string> fields;
  for (;;) {
    const auto pos = payload.find(sep);
    if (pos == std::string_view::npos) {
      fields.emplace_back(payload);
      return fields;
    }
    fields.emplace_back(payload.substr(0, pos));
    payload.remove_prefix(pos + sep.size());
  }
}

}  // namespace

std::string SerializationVariant::tag() const {
  std::string t = question_position == QuestionPosition::kSuffix ? "suffix" : "prefix";
  t += enclosure == Enclosure::kAngleP ? ",p" : ",none";
  if (attribute_marker == AttributeMarker::kColumnName) t += ",column-name";
  return t;
}

SerializationVariant SerializationVariant::parse(std::string_view tag) {
  SerializationVariant v;
  v.enclosure = Enclosure::kNone;
  bool saw_position = false;
  while (!tag.empty()) {
    const auto comma = tag.find(',');
    const std::string part = to_lower(trim(tag.substr(0, comma)));
    tag = comma == std::string_view::npos ? std::string_view{} : tag.substr(comma + 1);
    if (part == "suffix" || part == "prefix") {
      v.question_position = part == "suffix" ? QuestionPosition::kSuffix : QuestionPosition::kPrefix;
      saw_position = true;
    } else if (part == "p" || part == "<p>") {
      v.enclosure = Enclosure::kAngleP;
    } else if (part == "none") {
      v.enclosure = Enclosure::kNone;
    } else if (part == "column-name" || part == "column_name" || part == "colname") {
      v.attribute_marker = AttributeMarker::kColumnName;
    } else if (part == "col") {
      v.attribute_marker = AttributeMarker::kGenericCol;
    } else if (!part.empty()) {
      throw std::invalid_argument("unknown serialization variant component '" + part + "'");
    }
  }
  if (!saw_position) throw std::invalid_argument("serialization variant needs 'suffix' or 'prefix'");
  return v;
}

std::string_view granularity_name(Granularity g) {
  return g == Granularity::kRecord ? "record" : "attribute";
}

Granularity parse_granularity(std::string_view name) {
  if (name == "record") return Granularity::kRecord;
  if (name == "attribute") return Granularity::kAttribute;
  throw std::invalid_argument("unknown granularity '" + std::string(name) + "'");
}

std::string serialize_record_pair(std::span<const Value> left, std::span<const Value> right,
                                  const SerializationVariant& variant,
                                  std::span<const AttributeName> attribute_names) {
  if (left.empty() || right.empty()) throw std::invalid_argument("cannot serialize an empty record");
  if (left.size() != right.size())
    throw std::invalid_argument("left and right records have different attribute counts");
  if (variant.attribute_marker == AttributeMarker::kColumnName && attribute_names.size() != left.size())
    throw std::invalid_argument("column-name serialization requires one name per attribute");

  auto fields = [&](std::span<const Value> values) {
    std::vector<std::string> out;
    out.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const AttributeName* name = attribute_names.empty() ? nullptr : &attribute_names[i];
      out.push_back(marker_for(variant, name) + " " + render_value(values[i]));
    }
    return out;
  };
  return assemble(fields(left), fields(right), variant);
}

std::string serialize_attribute_pair(const Value& left, const Value& right, const SerializationVariant& variant,
                                     const AttributeName* attribute_name) {
  if (!left && !right) throw std::invalid_argument("attribute pair has both values missing");
  const std::string marker = marker_for(variant, attribute_name);
  return assemble({marker + " " + render_value(left)}, {marker + " " + render_value(right)}, variant);
}

std::string render_training_dump(const SerializedSample& sample) {
  if (sample.text.empty()) throw std::invalid_argument("sample text is empty");
  return sample.text + (sample.label == Label::kMatch ? " Yes." : " No.");
}

std::optional<PromptPayload> parse_prompt(std::string_view text, const SerializationVariant& variant) {
  if (variant.attribute_marker != AttributeMarker::kGenericCol) return std::nullopt;
  const std::string question(kQuestion);
  if (variant.question_position == QuestionPosition::kSuffix) {
    if (text.size() < question.size() + 1 || text.substr(text.size() - question.size()) != question)
      return std::nullopt;
    text.remove_suffix(question.size() + 1);
  } else {
    if (text.substr(0, question.size() + 1) != question + " ") return std::nullopt;
    text.remove_prefix(question.size() + 1);
  }

  const bool enclosed = variant.enclosure == Enclosure::kAngleP;
  const std::string a_open = std::string(kRecordA) + (enclosed ? std::string(kOpen) : "");
  const std::string middle = (enclosed ? std::string(kClose) : "") + ". " + std::string(kRecordB) +
                             (enclosed ? std::string(kOpen) : "");
  const std::string tail = (enclosed ? std::string(kClose) : "") + ".";

  if (text.substr(0, a_open.size()) != a_open) return std::nullopt;
  if (text.size() < tail.size() || text.substr(text.size() - tail.size()) != tail) return std::nullopt;
  text.remove_prefix(a_open.size());
  text.remove_suffix(tail.size());
  const auto mid = text.find(middle);
  if (mid == std::string_view::npos) return std::nullopt;

  auto left = split_fields(text.substr(0, mid));
  auto right = split_fields(text.substr(mid + middle.size()));
  if (!left || !right) return std::nullopt;
  return PromptPayload{std::move(*left), std::move(*right)};
}

std::string render_prompt(const PromptPayload& payload, const SerializationVariant& variant) {
  if (payload.left.empty() || payload.right.empty()) throw std::invalid_argument("empty prompt payload");
  auto fields = [](const std::vector<std::string>& values) {
    std::vector<std::string> out;
    for (const auto& v : values) out.push_back(std::string(kColumnMarker) + " " + v);
    return out;
  };
  return assemble(fields(payload.left), fields(payload.right), variant);
}

}  // namespace zeroem
