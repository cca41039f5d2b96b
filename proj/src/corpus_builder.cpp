#include "zeroem/corpus_builder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "zeroem/rng.hpp"
#include "zeroem/util.hpp"

namespace zeroem {

namespace {

constexpr std::uint64_t kRecordStream = 0x7265636f7264ULL;
constexpr std::uint64_t kAttributeStream = 0x61747472ULL;
constexpr std::uint64_t kShuffleStream = 0x73687566ULL;
constexpr std::uint64_t kSplitStream = 0x76616c6964ULL;

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream, std::string_view key) {
  return fnv1a64(key, seed ^ (stream * 0x9e3779b97f4a7c15ULL));
}

SerializedSample record_sample(const LabeledPair& p, const PairDataset& d, const GenerationConfig& cfg, bool flipped) {
  SerializedSample s;
  const Record& a = flipped ? p.right : p.left;
  const Record& b = flipped ? p.left : p.right;
  s.text = serialize_record_pair(a.values, b.values, cfg.variant, d.attributes);
  s.label = p.label;
  s.granularity = Granularity::kRecord;
  s.flipped = flipped;
  s.source_dataset = d.name;
  s.phase = 2;
  return s;
}

// Consecutive samples that must stay together: an original with its flipped twin.
std::vector<std::pair<std::size_t, std::size_t>> sample_units(const std::vector<SerializedSample>& samples) {
  std::vector<std::pair<std::size_t, std::size_t>> units;
  for (std::size_t i = 0; i < samples.size();) {
    const auto& s = samples[i];
    std::size_t len = 1;
    if (s.granularity == Granularity::kRecord && !s.flipped && i + 1 < samples.size()) {
      const auto& t = samples[i + 1];
      if (t.granularity == Granularity::kRecord && t.flipped && t.label == s.label && t.source_dataset == s.source_dataset)
        len = 2;
    }
    units.emplace_back(i, len);
    i += len;
  }
  return units;
}

void shuffle_units(std::vector<SerializedSample>& samples, Rng& rng) {
  auto units = sample_units(samples);
  rng.shuffle(units);
  std::vector<SerializedSample> out;
  out.reserve(samples.size());
  for (const auto& [start, len] : units)
    for (std::size_t k = 0; k < len; ++k) out.push_back(std::move(samples[start + k]));
  samples = std::move(out);
}

}  // namespace

std::string_view attribute_mode_name(AttributeMode mode) {
  switch (mode) {
    case AttributeMode::kMix: return "mix";
    case AttributeMode::kSequential: return "sequential";
    case AttributeMode::kOff: return "off";
  }
  return "mix";
}

AttributeMode parse_attribute_mode(std::string_view name) {
  const std::string n = to_lower(trim(name));
  if (n == "mix") return AttributeMode::kMix;
  if (n == "sequential" || n == "seq") return AttributeMode::kSequential;
  if (n == "off" || n == "none") return AttributeMode::kOff;
  throw std::invalid_argument("unknown attribute mode '" + std::string(name) + "' (expected mix, sequential or off)");
}

nlohmann::ordered_json GenerationConfig::to_json() const {
  return {{"n_r", n_r},
          {"n_a", n_a},
          {"seed", seed},
          {"enable_automl_filter", enable_automl_filter},
          {"enable_flip", enable_flip},
          {"attribute_mode", attribute_mode_name(attribute_mode)},
          {"variant", variant.tag()}};
}

GenerationConfig GenerationConfig::from_json(const nlohmann::json& j) {
  GenerationConfig c;
  c.n_r = j.value("n_r", c.n_r);
  c.n_a = j.value("n_a", c.n_a);
  c.seed = j.value("seed", c.seed);
  c.enable_automl_filter = j.value("enable_automl_filter", c.enable_automl_filter);
  c.enable_flip = j.value("enable_flip", c.enable_flip);
  if (j.contains("attribute_mode")) c.attribute_mode = parse_attribute_mode(j.at("attribute_mode").get<std::string>());
  if (j.contains("variant")) c.variant = SerializationVariant::parse(j.at("variant").get<std::string>());
  return c;
}

std::string FineTuneCorpus::hash() const { return hex64(fnv1a64(corpus_to_jsonl(samples))); }

bool FineTuneCorpus::has_phase(int phase) const {
  return std::any_of(samples.begin(), samples.end(), [&](const SerializedSample& s) { return s.phase == phase; });
}

std::vector<SerializedSample> gen_recordlevel(const PairDataset& d, const GenerationConfig& cfg,
                                              const std::optional<FilterReport>& filter_report,
                                              std::vector<std::string>* warnings) {
  if (cfg.n_r == 0) throw std::invalid_argument("n_r must be positive");
  std::vector<std::size_t> keep;
  if (d.train.size() <= cfg.n_r) {
    keep.resize(d.train.size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
  } else {
    std::vector<std::size_t> positives, negatives;
    for (std::size_t i = 0; i < d.train.size(); ++i) (d.train[i].is_match() ? positives : negatives).push_back(i);
    if (positives.empty())
      throw ValidationError("dataset '" + d.name + "' has no positive training pairs; cannot build a 1:2 sample");
    Rng rng(stream_seed(cfg.seed, kRecordStream, d.name));
    const std::size_t n_p = cfg.n_r / 3;
    const std::size_t n_pos = std::min(positives.size(), n_p);

    std::vector<std::size_t> chosen;
    if (filter_report) {
      const auto& wrong = filter_report->wrong_positive_indices;
      const auto& correct = filter_report->correct_positive_indices;
      if (wrong.size() >= n_pos) {
        chosen = rng.sample(wrong, n_pos);
      } else {
        chosen = wrong;
        const auto top_up = rng.sample(correct, n_pos - wrong.size());
        chosen.insert(chosen.end(), top_up.begin(), top_up.end());
      }
      for (std::size_t i : chosen) {
        if (i >= d.train.size() || !d.train[i].is_match())
          throw ValidationError("filter report for '" + d.name + "' names a non-positive pair at index " + std::to_string(i));
      }
    } else {
      chosen = rng.sample(positives, n_pos);
    }

    const std::size_t want_neg = 2 * chosen.size();
    if (negatives.size() < want_neg && warnings) {
      warnings->push_back("dataset '" + d.name + "': only " + std::to_string(negatives.size()) +
                          " negatives available, wanted " + std::to_string(want_neg) + "; taking all");
    }
    const auto neg = rng.sample(negatives, want_neg);
    keep = chosen;
    keep.insert(keep.end(), neg.begin(), neg.end());
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  }

  std::vector<SerializedSample> out;
  out.reserve(keep.size() * (cfg.enable_flip ? 2 : 1));
  for (std::size_t i : keep) {
    out.push_back(record_sample(d.train[i], d, cfg, false));
    if (cfg.enable_flip) out.push_back(record_sample(d.train[i], d, cfg, true));
  }
  return out;
}

std::vector<AttributeGroup> collect_attribute_groups(const std::vector<const PairDataset*>& datasets) {
  std::map<AttributeName, std::vector<AttributeEntry>> groups;
  for (const PairDataset* d : datasets) {
    for (std::size_t a = 0; a < d->attributes.size(); ++a) {
      auto& group = groups[d->attributes[a]];
      for (const auto& p : d->train) {
        const Value& l = p.left.values[a];
        const Value& r = p.right.values[a];
        if (!l && !r) continue;
        group.push_back({l, r, p.label, d->name});
      }
    }
  }
  std::vector<AttributeGroup> out;
  for (auto& [name, pairs] : groups) out.push_back({name, std::move(pairs)});
  return out;
}

std::vector<SerializedSample> gen_attributelevel(const std::vector<const PairDataset*>& datasets,
                                                 const GenerationConfig& cfg) {
  std::vector<SerializedSample> out;
  for (const auto& group : collect_attribute_groups(datasets)) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < group.pairs.size(); ++i)
      (group.pairs[i].label == Label::kMatch ? pos : neg).push_back(i);
    std::size_t per_class = std::min(pos.size(), neg.size());
    if (2 * per_class > cfg.n_a) per_class = cfg.n_a / 2;
    if (per_class == 0) continue;
    Rng rng(stream_seed(cfg.seed, kAttributeStream, group.attribute.str()));
    auto keep = rng.sample(pos, per_class);
    const auto kept_neg = rng.sample(neg, per_class);
    keep.insert(keep.end(), kept_neg.begin(), kept_neg.end());
    std::sort(keep.begin(), keep.end());
    for (std::size_t i : keep) {
      const auto& e = group.pairs[i];
      SerializedSample s;
      s.text = serialize_attribute_pair(e.left, e.right, cfg.variant, &group.attribute);
      s.label = e.label;
      s.granularity = Granularity::kAttribute;
      s.source_dataset = e.source;
      s.phase = cfg.attribute_mode == AttributeMode::kSequential ? 1 : 2;
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<SerializedSample> gen_attributelevel(const std::vector<PairDataset>& datasets, const GenerationConfig& cfg) {
  std::vector<const PairDataset*> ptrs;
  for (const auto& d : datasets) ptrs.push_back(&d);
  return gen_attributelevel(ptrs, cfg);
}

FineTuneCorpus build_corpus(const std::vector<PairDataset>& datasets, const std::string& target,
                            const GenerationConfig& cfg, const FilterProvider& filter) {
  if (!find_dataset(datasets, target)) throw ValidationError("target dataset '" + target + "' not found");
  std::vector<const PairDataset*> others;
  for (const auto& d : datasets)
    if (d.name != target) others.push_back(&d);
  if (others.empty()) throw ValidationError("no transfer datasets besides target '" + target + "'");

  FineTuneCorpus corpus;
  corpus.config = cfg;
  corpus.excluded_target = target;

  std::vector<SerializedSample> record_samples;
  for (const PairDataset* d : others) {
    corpus.sources.push_back(d->name);
    DatasetContribution contribution;
    contribution.dataset = d->name;
    std::optional<FilterReport> report;
    if (cfg.enable_automl_filter && d->train.size() > cfg.n_r) {
      try {
        report = filter ? filter(*d, cfg.seed) : run_difficulty_filter(*d, cfg.seed);
        contribution.filtered = true;
        contribution.hard_positives = report->wrong_positive_indices.size();
      } catch (const FilterUnavailable& e) {
        corpus.warnings.push_back(e.what());
      }
    }
    auto samples = gen_recordlevel(*d, cfg, report, &corpus.warnings);
    for (const auto& s : samples) {
      if (s.flipped) continue;
      ++contribution.record_pairs;
      ++(s.label == Label::kMatch ? contribution.record_positives : contribution.record_negatives);
    }
    record_samples.insert(record_samples.end(), std::make_move_iterator(samples.begin()),
                          std::make_move_iterator(samples.end()));
    corpus.contributions.push_back(contribution);
  }

  std::vector<SerializedSample> attribute_samples;
  if (cfg.attribute_mode != AttributeMode::kOff) {
    attribute_samples = gen_attributelevel(others, cfg);
    for (const auto& s : attribute_samples)
      for (auto& c : corpus.contributions)
        if (c.dataset == s.source_dataset) ++c.attribute_samples;
  }

  Rng rng(stream_seed(cfg.seed, kShuffleStream, target));
  if (cfg.attribute_mode == AttributeMode::kSequential) {
    shuffle_units(attribute_samples, rng);
    shuffle_units(record_samples, rng);
    corpus.samples = std::move(attribute_samples);
    corpus.samples.insert(corpus.samples.end(), std::make_move_iterator(record_samples.begin()),
                          std::make_move_iterator(record_samples.end()));
  } else {
    corpus.samples = std::move(record_samples);
    corpus.samples.insert(corpus.samples.end(), std::make_move_iterator(attribute_samples.begin()),
                          std::make_move_iterator(attribute_samples.end()));
    shuffle_units(corpus.samples, rng);
  }
  return corpus;
}

std::pair<FineTuneCorpus, FineTuneCorpus> split_validation(const FineTuneCorpus& c, double fraction,
                                                           std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("validation fraction must lie strictly between 0 and 1");
  const auto units = sample_units(c.samples);

  std::map<std::pair<int, int>, std::vector<std::size_t>> strata;  // (phase, label) -> unit ids
  std::size_t label_units[2] = {0, 0};
  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto& s = c.samples[units[u].first];
    strata[{s.phase, to_int(s.label)}].push_back(u);
    ++label_units[to_int(s.label)];
  }
  for (int label = 0; label <= 1; ++label) {
    if (label_units[label] < 2)
      throw ValidationError("corpus needs at least two independent " + std::string(label ? "positive" : "negative") +
                            " samples for a validation split, found " + std::to_string(label_units[label]));
  }

  Rng rng(stream_seed(seed, kSplitStream, c.excluded_target));
  std::vector<bool> in_validation(units.size(), false);
  std::size_t label_valid[2] = {0, 0};
  for (auto& [key, members] : strata) {
    if (members.size() < 2) continue;
    const double want = std::round(fraction * static_cast<double>(members.size()));
    const std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, members.size() - 1);
    for (std::size_t i : rng.sample_sorted(members.size(), k)) in_validation[members[i]] = true;
    label_valid[key.second] += k;
  }
  // A label spread over single-unit strata still needs one validation unit.
  for (int label = 0; label <= 1; ++label) {
    if (label_valid[label] > 0) continue;
    for (auto& [key, members] : strata) {
      if (key.second == label && members.size() == 1) {
        in_validation[members[0]] = true;
        break;
      }
    }
  }

  FineTuneCorpus train, valid;
  for (auto* part : {&train, &valid}) {
    part->config = c.config;
    part->excluded_target = c.excluded_target;
    part->sources = c.sources;
  }
  for (std::size_t u = 0; u < units.size(); ++u) {
    auto& dest = in_validation[u] ? valid : train;
    for (std::size_t k = 0; k < units[u].second; ++k) dest.samples.push_back(c.samples[units[u].first + k]);
  }
  return {std::move(train), std::move(valid)};
}

nlohmann::ordered_json sample_to_json(const SerializedSample& s) {
  return {{"text", s.text},
          {"label", to_int(s.label)},
          {"granularity", granularity_name(s.granularity)},
          {"flipped", s.flipped},
          {"source", s.source_dataset},
          {"phase", s.phase}};
}

SerializedSample sample_from_json(const nlohmann::json& j) {
  SerializedSample s;
  s.text = j.at("text").get<std::string>();
  s.label = label_from_int(j.at("label").get<long>());
  s.granularity = parse_granularity(j.value("granularity", std::string("record")));
  s.flipped = j.value("flipped", false);
  s.source_dataset = j.value("source", std::string{});
  s.phase = j.value("phase", 2);
  if (s.phase != 1 && s.phase != 2) throw ValidationError("sample phase must be 1 or 2");
  return s;
}

std::string corpus_to_jsonl(const std::vector<SerializedSample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    out += sample_to_json(s).dump();
    out += '\n';
  }
  return out;
}

std::vector<SerializedSample> corpus_from_jsonl(std::string_view text) {
  std::vector<SerializedSample> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("corpus line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ValidationError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

nlohmann::ordered_json corpus_metadata(const FineTuneCorpus& c) {
  nlohmann::ordered_json per_dataset = nlohmann::ordered_json::array();
  for (const auto& d : c.contributions) {
    per_dataset.push_back({{"dataset", d.dataset},
                           {"record_pairs", d.record_pairs},
                           {"record_positives", d.record_positives},
                           {"record_negatives", d.record_negatives},
                           {"filtered", d.filtered},
                           {"hard_positives", d.hard_positives},
                           {"attribute_samples", d.attribute_samples}});
  }
  std::size_t positives = 0;
  for (const auto& s : c.samples) positives += s.label == Label::kMatch;
  return {{"config", c.config.to_json()},
          {"seed", c.config.seed},
          {"excluded_target", c.excluded_target},
          {"sources", c.sources},
          {"samples", c.samples.size()},
          {"positives", positives},
          {"negatives", c.samples.size() - positives},
          {"corpus_hash", c.hash()},
          {"per_dataset", per_dataset},
          {"warnings", c.warnings}};
}

std::filesystem::path corpus_metadata_path(const std::filesystem::path& corpus_path) {
  return corpus_path.string() + ".meta.json";
}

void write_corpus(const FineTuneCorpus& c, const std::filesystem::path& path) {
  write_file_atomic(path, corpus_to_jsonl(c.samples));
  write_file_atomic(corpus_metadata_path(path), corpus_metadata(c).dump(2) + "\n");
}

FineTuneCorpus read_corpus(const std::filesystem::path& path) {
  FineTuneCorpus c;
  c.samples = corpus_from_jsonl(read_file(path));
  const auto meta_path = corpus_metadata_path(path);
  if (std::filesystem::exists(meta_path)) {
    try {
      const auto meta = nlohmann::json::parse(read_file(meta_path));
      c.config = GenerationConfig::from_json(meta.at("config"));
      c.excluded_target = meta.value("excluded_target", std::string{});
      c.sources = meta.value("sources", std::vector<std::string>{});
      c.warnings = meta.value("warnings", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(meta_path.string() + ": " + e.what());
    }
  }
  return c;
}

}  // namespace zeroem
