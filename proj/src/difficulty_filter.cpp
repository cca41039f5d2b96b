#include "zeroem/difficulty_filter.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <set>

#include "zeroem/rng.hpp"
#include "zeroem/util.hpp"

namespace zeroem {

namespace {

constexpr int kPerAttribute = 7;
constexpr int kPerRecord = 2;

std::set<std::string> word_tokens(std::string_view s) {
  std::set<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.insert(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.insert(std::move(cur));
  return out;
}

std::set<std::string> trigrams(std::string_view s) {
  const std::string padded = "  " + to_lower(trim(s)) + " ";
  std::set<std::string> out;
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) out.insert(padded.substr(i, 3));
  return out;
}

std::size_t intersection_size(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  const std::size_t inter = intersection_size(a, b);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

double containment(const std::set<std::string>& a, const std::set<std::string>& b) {
  const std::size_t smaller = std::min(a.size(), b.size());
  if (smaller == 0) return a.size() == b.size() ? 1.0 : 0.0;
  return static_cast<double>(intersection_size(a, b)) / static_cast<double>(smaller);
}

std::optional<double> parse_number(std::string_view s) {
  std::string cleaned;
  for (char c : trim(s)) {
    if (c == '$' || c == ',' || std::isspace(static_cast<unsigned char>(c))) continue;
    cleaned.push_back(c);
  }
  if (cleaned.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(cleaned.c_str(), &end);
  if (end != cleaned.c_str() + cleaned.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

void attribute_features(const Value& l, const Value& r, double* out) {
  const int missing = static_cast<int>(!l) + static_cast<int>(!r);
  out[0] = missing;
  if (missing) {
    std::fill(out + 1, out + kPerAttribute, -1.0);
    return;
  }
  const auto tl = word_tokens(*l);
  const auto tr = word_tokens(*r);
  out[1] = iequals(trim(*l), trim(*r)) ? 1.0 : 0.0;
  out[2] = jaccard(tl, tr);
  out[3] = containment(tl, tr);
  out[4] = jaccard(trigrams(*l), trigrams(*r));
  const double ll = static_cast<double>(l->size());
  const double lr = static_cast<double>(r->size());
  out[5] = std::max(ll, lr) == 0.0 ? 1.0 : std::min(ll, lr) / std::max(ll, lr);
  const auto nl = parse_number(*l);
  const auto nr = parse_number(*r);
  out[6] = (nl && nr) ? std::fabs(*nl - *nr) / std::max({std::fabs(*nl), std::fabs(*nr), 1e-9}) : -1.0;
}

std::vector<int> labels_of(std::span<const LabeledPair> pairs) {
  std::vector<int> y;
  y.reserve(pairs.size());
  for (const auto& p : pairs) y.push_back(to_int(p.label));
  return y;
}

class GbdtPairClassifier final : public PairClassifier {
 public:
  GbdtPairClassifier(GradientBoostedTrees model, std::size_t attribute_count, nlohmann::json summary)
      : model_(std::move(model)), attribute_count_(attribute_count), summary_(std::move(summary)) {}

  std::vector<double> match_probability(std::span<const LabeledPair> pairs) const override {
    return model_.predict_proba(pair_features(pairs, attribute_count_));
  }
  nlohmann::json summary() const override { return summary_; }

 private:
  GradientBoostedTrees model_;
  std::size_t attribute_count_;
  nlohmann::json summary_;
};

struct SearchOutcome {
  GbdtParams params;
  double cv_log_loss = std::numeric_limits<double>::quiet_NaN();
  bool searched = false;
};

SearchOutcome search_params(const Eigen::MatrixXd& x, const std::vector<int>& y, std::uint64_t seed,
                            const FilterOptions& options) {
  const std::size_t n = y.size();
  SearchOutcome outcome;
  outcome.params = options.fallback;
  outcome.params.min_samples_leaf = std::max<std::size_t>(options.fallback.min_samples_leaf, n / 50);
  const std::size_t positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  const auto folds = static_cast<std::size_t>(std::max(2, options.folds));
  if (n < options.min_rows_for_search || positives < folds || n - positives < folds) {
    outcome.params.min_samples_leaf = std::min<std::size_t>(outcome.params.min_samples_leaf, std::max<std::size_t>(1, n / 4));
    return outcome;
  }

  // Stratified fold assignment.
  std::vector<std::size_t> fold(n);
  Rng rng(seed);
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i)
      if (y[i] == cls) members.push_back(i);
    rng.shuffle(members);
    for (std::size_t k = 0; k < members.size(); ++k) fold[members[k]] = k % folds;
  }

  double best_loss = std::numeric_limits<double>::infinity();
  for (int depth : options.depth_grid) {
    GbdtParams p = outcome.params;
    p.max_depth = depth;
    p.n_rounds = options.max_rounds;
    p.learning_rate = options.learning_rate;
    std::vector<double> mean_curve(static_cast<std::size_t>(options.max_rounds) + 1, 0.0);
    for (std::size_t f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> train_rows, held_rows;
      for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? held_rows : train_rows).push_back(static_cast<Eigen::Index>(i));
      Eigen::MatrixXd xt = x(train_rows, Eigen::all);
      Eigen::MatrixXd xh = x(held_rows, Eigen::all);
      std::vector<int> yt, yh;
      for (auto i : train_rows) yt.push_back(y[static_cast<std::size_t>(i)]);
      for (auto i : held_rows) yh.push_back(y[static_cast<std::size_t>(i)]);
      const auto model = GradientBoostedTrees::fit(xt, yt, p);
      const auto curve = model.staged_log_loss(xh, yh);
      for (std::size_t r = 0; r < curve.size(); ++r) mean_curve[r] += curve[r] / static_cast<double>(folds);
    }
    for (std::size_t r = 1; r < mean_curve.size(); ++r) {
      if (mean_curve[r] < best_loss - 1e-12) {
        best_loss = mean_curve[r];
        outcome.params = p;
        outcome.params.n_rounds = static_cast<int>(r);
      }
    }
  }
  outcome.cv_log_loss = best_loss;
  outcome.searched = true;
  return outcome;
}

}  // namespace

nlohmann::ordered_json FilterReport::to_json() const {
  return {{"dataset_name", dataset_name},
          {"wrong_positive_indices", wrong_positive_indices},
          {"correct_positive_indices", correct_positive_indices},
          {"classifier_summary", classifier_summary}};
}

FilterReport FilterReport::from_json(const nlohmann::json& j) {
  FilterReport r;
  r.dataset_name = j.at("dataset_name").get<std::string>();
  r.wrong_positive_indices = j.at("wrong_positive_indices").get<std::vector<std::size_t>>();
  r.correct_positive_indices = j.at("correct_positive_indices").get<std::vector<std::size_t>>();
  r.classifier_summary = j.value("classifier_summary", nlohmann::json::object());
  return r;
}

Eigen::MatrixXd pair_features(std::span<const LabeledPair> pairs, std::size_t attribute_count) {
  const auto cols = static_cast<Eigen::Index>(attribute_count * kPerAttribute + kPerRecord);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(pairs.size()), cols);
  double row[kPerAttribute];
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (p.left.size() != attribute_count || p.right.size() != attribute_count)
      throw ValidationError("pair " + std::to_string(i) + " does not match the classifier schema");
    const auto r = static_cast<Eigen::Index>(i);
    std::string left_all, right_all;
    for (std::size_t a = 0; a < attribute_count; ++a) {
      attribute_features(p.left.values[a], p.right.values[a], row);
      for (int k = 0; k < kPerAttribute; ++k) x(r, static_cast<Eigen::Index>(a * kPerAttribute + k)) = row[k];
      if (p.left.values[a]) left_all += *p.left.values[a] + " ";
      if (p.right.values[a]) right_all += *p.right.values[a] + " ";
    }
    const auto base = static_cast<Eigen::Index>(attribute_count * kPerAttribute);
    x(r, base) = jaccard(word_tokens(left_all), word_tokens(right_all));
    x(r, base + 1) = jaccard(trigrams(left_all), trigrams(right_all));
  }
  return x;
}

std::vector<std::string> pair_feature_names(const std::vector<AttributeName>& attributes) {
  static const char* kNames[kPerAttribute] = {"missing", "exact", "token_jaccard", "token_containment",
                                              "trigram_jaccard", "length_ratio", "numeric_rel_diff"};
  std::vector<std::string> names;
  for (const auto& a : attributes)
    for (const char* n : kNames) names.push_back(a.str() + "." + n);
  names.push_back("record.token_jaccard");
  names.push_back("record.trigram_jaccard");
  return names;
}

std::unique_ptr<PairClassifier> fit_filter(const PairDataset& d, std::uint64_t seed, const FilterOptions& options) {
  const auto counts = count_split(d.train);
  if (counts.positives == 0 || counts.negatives == 0) {
    throw FilterUnavailable("dataset '" + d.name + "' has single-class training data (" +
                            std::to_string(counts.positives) + " positives, " + std::to_string(counts.negatives) +
                            " negatives); skip difficulty filtering for it");
  }
  const Eigen::MatrixXd x = pair_features(d.train, d.attributes.size());
  const std::vector<int> y = labels_of(d.train);
  const SearchOutcome search = search_params(x, y, seed, options);
  auto model = GradientBoostedTrees::fit(x, y, search.params);

  const auto proba = model.predict_proba(x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) correct += static_cast<std::size_t>((proba[i] >= 0.5) == (y[i] == 1));

  nlohmann::json summary{{"backend", "gbdt-fallback"},
                         {"reference_configuration", false},
                         {"params", search.params.to_json()},
                         {"searched", search.searched},
                         {"train_split", "train"},
                         {"train_rows", y.size()},
                         {"features", x.cols()},
                         {"train_accuracy", static_cast<double>(correct) / static_cast<double>(y.size())},
                         {"seed", seed},
                         {"train_fingerprint", train_fingerprint(d)}};
  summary["cv_log_loss"] = search.searched ? nlohmann::json(search.cv_log_loss) : nlohmann::json(nullptr);
  return std::make_unique<GbdtPairClassifier>(std::move(model), d.attributes.size(), std::move(summary));
}

FilterReport split_positives(const PairDataset& d, const PairClassifier& classifier) {
  FilterReport report;
  report.dataset_name = d.name;
  report.classifier_summary = classifier.summary();
  const auto proba = classifier.match_probability(d.train);
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    if (!d.train[i].is_match()) continue;
    (proba[i] >= 0.5 ? report.correct_positive_indices : report.wrong_positive_indices).push_back(i);
  }
  return report;
}

std::string train_fingerprint(const PairDataset& d) {
  std::uint64_t h = fnv1a64(d.name);
  for (const auto& p : d.train) {
    for (const auto* rec : {&p.left, &p.right}) {
      for (const auto& v : rec->values) {
        h = fnv1a64(v ? "v" + *v : std::string("\x01"), h);
        h = fnv1a64("\x1f", h);
      }
    }
    h = fnv1a64(p.is_match() ? "1" : "0", h);
  }
  return hex64(h);
}

std::filesystem::path filter_cache_path(const std::filesystem::path& cache_dir, const std::string& dataset) {
  return cache_dir / "filter" / (dataset + ".json");
}

std::optional<FilterReport> load_cached_filter(const std::filesystem::path& cache_dir, const PairDataset& d,
                                               std::uint64_t seed) {
  const auto path = filter_cache_path(cache_dir, d.name);
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    auto report = FilterReport::from_json(nlohmann::json::parse(read_file(path)));
    const auto& s = report.classifier_summary;
    if (s.value("seed", std::uint64_t{0}) != seed || s.value("train_fingerprint", std::string{}) != train_fingerprint(d))
      return std::nullopt;
    return report;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

void store_cached_filter(const std::filesystem::path& cache_dir, const FilterReport& report) {
  write_file_atomic(filter_cache_path(cache_dir, report.dataset_name), report.to_json().dump(2) + "\n");
}

FilterReport run_difficulty_filter(const PairDataset& d, std::uint64_t seed,
                                   const std::optional<std::filesystem::path>& cache_dir, const FilterOptions& options) {
  if (cache_dir) {
    if (auto cached = load_cached_filter(*cache_dir, d, seed)) return *cached;
  }
  const auto classifier = fit_filter(d, seed, options);
  FilterReport report = split_positives(d, *classifier);
  if (cache_dir) store_cached_filter(*cache_dir, report);
  return report;
}

}  // namespace zeroem
