#include "zeroem/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "zeroem/rng.hpp"
#include "zeroem/util.hpp"

namespace zeroem {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

nlohmann::ordered_json CorpusProvenance::to_json() const {
  return {{"excluded_target", excluded_target}, {"sources", sources}, {"corpus_hash", corpus_hash}};
}

CorpusProvenance CorpusProvenance::from_json(const nlohmann::json& j) {
  CorpusProvenance p;
  p.excluded_target = j.at("excluded_target").get<std::string>();
  p.sources = j.at("sources").get<std::vector<std::string>>();
  p.corpus_hash = j.value("corpus_hash", std::string{});
  return p;
}

F1Metrics f1_from_confusion(const ConfusionCounts& c) {
  F1Metrics m;
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  const double denom = m.precision + m.recall;
  m.f1 = denom == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / denom;
  return m;
}

ConfusionCounts confusion(std::span<const LabeledPair> truth, std::span<const MatchPrediction> predictions) {
  if (truth.size() != predictions.size())
    throw std::invalid_argument("confusion: prediction count does not match pair count");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool actual = truth[i].is_match();
    const bool predicted = predictions[i].label == Label::kMatch;
    if (actual && predicted) ++c.tp;
    else if (!actual && predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

nlohmann::ordered_json EvalReport::to_json() const {
  return {{"target_dataset", target_dataset},
          {"matcher_id", matcher_id},
          {"precision", precision},
          {"recall", recall},
          {"f1", f1},
          {"tp", counts.tp},
          {"fp", counts.fp},
          {"fn", counts.fn},
          {"tn", counts.tn},
          {"test_size_used", test_size_used},
          {"downsampled", downsampled},
          {"seed", seed}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.target_dataset = j.at("target_dataset").get<std::string>();
  r.matcher_id = j.at("matcher_id").get<std::string>();
  r.precision = j.at("precision").get<double>();
  r.recall = j.at("recall").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.counts = {j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(), j.at("fn").get<std::size_t>(),
              j.at("tn").get<std::size_t>()};
  r.test_size_used = j.at("test_size_used").get<std::size_t>();
  r.downsampled = j.at("downsampled").get<bool>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

std::vector<std::size_t> downsample_indices(std::span<const LabeledPair> test, std::uint64_t seed) {
  std::vector<std::size_t> keep(test.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
  if (test.size() <= kDownsampleAbove) return keep;

  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < test.size(); ++i) (test[i].is_match() ? positives : negatives).push_back(i);

  Rng rng(seed);
  keep = rng.sample(positives, std::min(positives.size(), kMaxTestPositives));
  const auto kept_negatives = rng.sample(negatives, std::min(negatives.size(), kMaxTestNegatives));
  keep.insert(keep.end(), kept_negatives.begin(), kept_negatives.end());
  rng.shuffle(keep);
  return keep;
}

std::vector<LabeledPair> downsample_test(std::span<const LabeledPair> test, std::uint64_t seed) {
  std::vector<LabeledPair> out;
  for (std::size_t i : downsample_indices(test, seed)) out.push_back(test[i]);
  return out;
}

std::vector<std::size_t> read_pair_list(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<std::size_t> out;
  const std::string_view body = trim(text);
  if (!body.empty() && body.front() == '[') {
    try {
      out = nlohmann::json::parse(body).get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
    return out;
  }
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(std::string(t), &used);
      if (used != t.size()) throw std::invalid_argument("trailing characters");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) + " is not a row index");
    }
  }
  return out;
}

void check_zero_shot(const PairMatcher& matcher, std::string_view target) {
  const auto provenance = matcher.provenance();
  if (!provenance) return;
  if (provenance->excluded_target != target) {
    throw ZeroShotViolation("matcher '" + matcher.id() + "' was fine-tuned for target '" +
                            provenance->excluded_target + "', not '" + std::string(target) + "'");
  }
  if (std::find(provenance->sources.begin(), provenance->sources.end(), target) != provenance->sources.end()) {
    throw ZeroShotViolation("matcher '" + matcher.id() + "' lists target '" + std::string(target) +
                            "' among its fine-tuning sources");
  }
}

EvalReport evaluate_zero_shot(const std::vector<PairDataset>& datasets, std::string_view target,
                              const PairMatcher& matcher, const EvalConfig& config) {
  const PairDataset* dataset = find_dataset(datasets, target);
  if (!dataset) throw std::invalid_argument("unknown target dataset '" + std::string(target) + "'");
  check_zero_shot(matcher, target);

  std::vector<std::size_t> rows;
  bool downsampled = false;
  if (config.pair_list) {
    rows = *config.pair_list;
    for (std::size_t r : rows) {
      if (r >= dataset->test.size())
        throw ValidationError("pair list row " + std::to_string(r) + " is outside the test split");
    }
    downsampled = rows.size() != dataset->test.size();
  } else {
    rows = downsample_indices(dataset->test, config.seed);
    downsampled = dataset->test.size() > kDownsampleAbove;
  }
  std::vector<LabeledPair> test;
  test.reserve(rows.size());
  for (std::size_t r : rows) test.push_back(dataset->test[r]);

  const auto predictions = matcher.predict(test, dataset->attributes);
  EvalReport report;
  report.target_dataset = dataset->name;
  report.matcher_id = matcher.id();
  report.counts = confusion(test, predictions);
  const F1Metrics m = f1_from_confusion(report.counts);
  report.precision = m.precision;
  report.recall = m.recall;
  report.f1 = m.f1;
  report.test_size_used = test.size();
  report.downsampled = downsampled;
  report.seed = config.seed;
  return report;
}

std::string SummaryTable::to_csv() const {
  std::string header = "matcher";
  std::string row = matcher_id;
  char buf[32];
  for (const auto& [target, f1] : f1_by_target) {
    header += "," + target;
    std::snprintf(buf, sizeof(buf), ",%.2f", 100.0 * f1);
    row += buf;
  }
  std::snprintf(buf, sizeof(buf), ",%.2f", 100.0 * mean_f1);
  return header + ",mean\n" + row + buf + "\n";
}

nlohmann::ordered_json SummaryTable::to_json() const {
  nlohmann::ordered_json per_target = nlohmann::ordered_json::object();
  for (const auto& [target, f1] : f1_by_target) per_target[target] = f1;
  return {{"matcher_id", matcher_id}, {"f1", per_target}, {"mean_f1", mean_f1}};
}

SummaryTable aggregate(std::span<const EvalReport> reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate: no reports");
  SummaryTable table;
  table.matcher_id = reports.front().matcher_id;
  std::set<std::string> seen;
  double sum = 0.0;
  for (const auto& r : reports) {
    if (!seen.insert(r.target_dataset).second)
      throw std::invalid_argument("aggregate: duplicate target '" + r.target_dataset + "'");
    if (r.matcher_id != table.matcher_id)
      throw std::invalid_argument("aggregate: reports come from different matchers");
    table.f1_by_target.emplace_back(r.target_dataset, r.f1);
    sum += r.f1;
  }
  table.mean_f1 = sum / static_cast<double>(reports.size());
  return table;
}

}  // namespace zeroem
