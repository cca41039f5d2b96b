#include "zeroem/core_model.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "zeroem/csv.hpp"
#include "zeroem/util.hpp"

namespace zeroem {

namespace fs = std::filesystem;

namespace {

constexpr Split kAllSplits[] = {Split::kTrain, Split::kValid, Split::kTest};

std::string split_file(Split s) { return std::string(split_name(s)) + ".csv"; }

struct ColumnLayout {
  std::vector<std::size_t> left;  // csv column for attribute i
  std::vector<std::size_t> right;
  std::size_t label = 0;
  std::size_t width = 0;
};

ColumnLayout resolve_columns(const csv::Row& header, const std::vector<AttributeName>& attributes,
                             const fs::path& file, bool strict) {
  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string key = to_lower(trim(header[i]));
    if (!by_name.emplace(key, i).second)
      throw ValidationError(file.string() + ": duplicate column '" + header[i] + "'");
  }

  ColumnLayout layout;
  layout.width = header.size();
  std::set<std::size_t> used;
  for (const auto& attribute : attributes) {
    for (const char* side : {"left_", "right_"}) {
      auto it = by_name.find(side + attribute.str());
      if (it == by_name.end()) {
        throw ValidationError(file.string() + ": missing column '" + side + attribute.str() +
                              "' declared by the manifest");
      }
      (side[0] == 'l' ? layout.left : layout.right).push_back(it->second);
      used.insert(it->second);
    }
  }
  auto label = by_name.find("label");
  if (label == by_name.end()) throw ValidationError(file.string() + ": missing column 'label'");
  layout.label = label->second;
  used.insert(label->second);

  if (strict) {
    for (const auto& [name, index] : by_name) {
      if (!used.count(index)) throw ValidationError(file.string() + ": unknown column '" + header[index] + "'");
    }
  }
  return layout;
}

Value parse_cell(const std::string& cell) {
  if (is_missing_cell(cell)) return std::nullopt;
  return cell;
}

std::vector<LabeledPair> read_split(const fs::path& file, const std::vector<AttributeName>& attributes,
                                    bool strict) {
  if (!fs::exists(file)) throw LoadError("missing split file " + file.string());
  std::vector<csv::Row> rows;
  try {
    rows = csv::parse(read_file(file));
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
  if (rows.empty()) throw ValidationError(file.string() + ": header row is mandatory");

  const ColumnLayout layout = resolve_columns(rows.front(), attributes, file, strict);
  std::vector<LabeledPair> pairs;
  pairs.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row.front().empty()) continue;  // blank line
    const std::size_t row_index = r - 1;
    if (row.size() != layout.width) {
      std::ostringstream msg;
      msg << file.string() << ": row " << row_index << " has " << row.size() << " fields, expected "
          << layout.width;
      throw ValidationError(msg.str());
    }
    const std::string_view label_cell = trim(row[layout.label]);
    LabeledPair pair;
    if (label_cell == "1") {
      pair.label = Label::kMatch;
    } else if (label_cell == "0") {
      pair.label = Label::kNonMatch;
    } else {
      std::ostringstream msg;
      msg << file.string() << ": row " << row_index << " has label '" << row[layout.label]
          << "', expected 0 or 1";
      throw ValidationError(msg.str());
    }
    pair.left.values.reserve(attributes.size());
    pair.right.values.reserve(attributes.size());
    for (std::size_t a = 0; a < attributes.size(); ++a) {
      pair.left.values.push_back(parse_cell(row[layout.left[a]]));
      pair.right.values.push_back(parse_cell(row[layout.right[a]]));
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

void check_cross_split_duplicates(const PairDataset& d) {
  auto key = [](const LabeledPair& p) {
    std::string k;
    for (const auto* rec : {&p.left, &p.right}) {
      for (const auto& v : rec->values) {
        k += v ? "v" + *v : std::string("m");
        k.push_back('\x1f');
      }
      k.push_back('\x1e');
    }
    return k;
  };
  std::map<std::string, Split> seen;
  for (Split s : kAllSplits) {
    for (const auto& p : d.split(s)) {
      auto [it, inserted] = seen.emplace(key(p), s);
      if (!inserted && it->second != s) {
        throw ValidationError("dataset '" + d.name + "': identical pair appears in both " +
                              std::string(split_name(it->second)) + " and " + std::string(split_name(s)));
      }
    }
  }
}

}  // namespace

Label label_from_int(long value) {
  if (value == 0) return Label::kNonMatch;
  if (value == 1) return Label::kMatch;
  throw ValidationError("label must be 0 or 1, got " + std::to_string(value));
}

AttributeName::AttributeName(std::string_view raw) : name_(to_lower(trim(raw))) {
  if (name_.empty()) throw ValidationError("attribute name must not be empty");
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "?";
}

const std::vector<LabeledPair>& PairDataset::split(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kValid: return valid;
    case Split::kTest: break;
  }
  return test;
}

std::vector<LabeledPair>& PairDataset::split(Split s) {
  return const_cast<std::vector<LabeledPair>&>(std::as_const(*this).split(s));
}

std::optional<std::size_t> PairDataset::attribute_index(const AttributeName& attribute) const {
  auto it = std::find(attributes.begin(), attributes.end(), attribute);
  if (it == attributes.end()) return std::nullopt;
  return static_cast<std::size_t>(it - attributes.begin());
}

void PairDataset::validate() const {
  std::set<AttributeName> unique(attributes.begin(), attributes.end());
  if (unique.size() != attributes.size())
    throw ValidationError("dataset '" + name + "': duplicate attribute names");
  for (Split s : kAllSplits) {
    const auto& pairs = split(s);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (pairs[i].left.size() != attributes.size() || pairs[i].right.size() != attributes.size()) {
        throw ValidationError("dataset '" + name + "': " + std::string(split_name(s)) + " pair " +
                              std::to_string(i) + " does not match the " +
                              std::to_string(attributes.size()) + "-attribute schema");
      }
    }
  }
}

nlohmann::ordered_json DatasetManifest::to_json() const {
  auto counts = [](const SplitCounts& c) {
    return nlohmann::ordered_json{{"total", c.total}, {"positives", c.positives}, {"negatives", c.negatives}};
  };
  return {{"name", name},
          {"attributes", attributes},
          {"domain", domain},
          {"splits", {{"train", counts(train)}, {"valid", counts(valid)}, {"test", counts(test)}}},
          {"total", total()}};
}

bool is_missing_cell(std::string_view cell) {
  return cell.empty() || iequals(cell, "null") || iequals(cell, "nan");
}

SplitCounts count_split(const std::vector<LabeledPair>& pairs) {
  SplitCounts c;
  c.total = pairs.size();
  c.positives = static_cast<std::size_t>(std::count_if(pairs.begin(), pairs.end(),
                                                       [](const LabeledPair& p) { return p.is_match(); }));
  c.negatives = c.total - c.positives;
  return c;
}

PairDataset load_dataset(const fs::path& dir, const LoadOptions& options) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw LoadError("missing " + manifest_path.string());

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }

  PairDataset d;
  try {
    d.name = manifest.at("name").get<std::string>();
    for (const auto& a : manifest.at("attributes")) d.attributes.emplace_back(a.get<std::string>());
    d.domain = manifest.value("domain", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }
  if (d.name.empty()) throw ValidationError(manifest_path.string() + ": empty dataset name");
  if (d.attributes.empty()) throw ValidationError(manifest_path.string() + ": no attributes declared");

  for (Split s : kAllSplits) d.split(s) = read_split(dir / split_file(s), d.attributes, options.strict);
  d.validate();
  if (options.strict) check_cross_split_duplicates(d);
  return d;
}

void write_dataset(const PairDataset& d, const fs::path& dir) {
  d.validate();
  fs::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["name"] = d.name;
  manifest["attributes"] = nlohmann::json::array();
  for (const auto& a : d.attributes) manifest["attributes"].push_back(a.str());
  manifest["domain"] = d.domain;
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");

  csv::Row header;
  for (const auto& a : d.attributes) header.push_back("left_" + a.str());
  for (const auto& a : d.attributes) header.push_back("right_" + a.str());
  header.push_back("label");

  for (Split s : kAllSplits) {
    std::string text = csv::format_row(header);
    for (const auto& p : d.split(s)) {
      csv::Row row;
      row.reserve(header.size());
      for (const auto& v : p.left.values) row.push_back(v.value_or(""));
      for (const auto& v : p.right.values) row.push_back(v.value_or(""));
      row.push_back(std::to_string(to_int(p.label)));
      text += csv::format_row(row);
    }
    write_file_atomic(dir / split_file(s), text);
  }
}

DatasetManifest dataset_stats(const PairDataset& d) {
  DatasetManifest m;
  m.name = d.name;
  for (const auto& a : d.attributes) m.attributes.push_back(a.str());
  m.domain = d.domain;
  m.train = count_split(d.train);
  m.valid = count_split(d.valid);
  m.test = count_split(d.test);
  return m;
}

std::vector<PairDataset> load_dataset_collection(const fs::path& root, const LoadOptions& options) {
  if (!fs::is_directory(root)) throw LoadError("not a directory: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<PairDataset> out;
  out.reserve(dirs.size());
  std::set<std::string> names;
  for (const auto& dir : dirs) {
    out.push_back(load_dataset(dir, options));
    if (!names.insert(out.back().name).second)
      throw ValidationError("duplicate dataset name '" + out.back().name + "' under " + root.string());
  }
  return out;
}

const PairDataset* find_dataset(const std::vector<PairDataset>& datasets, std::string_view name) {
  for (const auto& d : datasets)
    if (d.name == name) return &d;
  return nullptr;
}

}  // namespace zeroem
