// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <set>
#include <sstream>

#include "support/corpus_properties.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "zeroem/baselines.hpp"
#include "zeroem/evaluation.hpp"
#include "zeroem/matcher.hpp"
#include "zeroem/perfbench_cost.hpp"
#include "zeroem/serializer.hpp"
#include "zeroem/util.hpp"

namespace {

using namespace zeroem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

Outcome serialization_goldens() {
  const std::string tail = " Given the attributes of the two records, are they the same?";
  int failed = 0;
  auto expect = [&](const std::string& got, const std::string& want) { failed += got != want; };

  const std::vector<Value> gl = {"I'm a Machine", "David Guetta", "$1.29", "2011"};
  const std::vector<Value> gr = {"Night Of Your Life", "David Guetta", "$1.29", "2011"};
  expect(serialize_record_pair(gl, gr),
         "Record A is <p>COL I'm a Machine, COL David Guetta, COL $1.29, COL 2011</p>. Record B is <p>COL Night Of "
         "Your Life, COL David Guetta, COL $1.29, COL 2011</p>." + tail);

  const std::vector<Value> dl = {"6PM In New York", "Drake",
                                 "Hip-Hop/Rap Music - Hardcore Rap - Rap R&B/Soul - Contemporary R&B", "$1.29",
                                 "13-Feb-15"};
  const std::vector<Value> dr = {"6PM In New York [Explicit]", "Drake", "Rap & Hip-Hop", "$ 1.29", "February 13 2015"};
  expect(serialize_record_pair(dl, dr),
         "Record A is <p>COL 6PM In New York, COL Drake, COL Hip-Hop/Rap Music - Hardcore Rap - Rap R&B/Soul - "
         "Contemporary R&B, COL $1.29, COL 13-Feb-15</p>. Record B is <p>COL 6PM In New York [Explicit], COL Drake, "
         "COL Rap & Hip-Hop, COL $ 1.29, COL February 13 2015</p>." + tail);
  expect(serialize_attribute_pair("6PM In New York", "6PM In New York [Explicit]"),
         "Record A is <p>COL 6PM In New York</p>. Record B is <p>COL 6PM In New York [Explicit]</p>." + tail);
  expect(serialize_attribute_pair("Hip-Hop/Rap Music - Hardcore Rap - Rap R&B/Soul - Contemporary R&B", "Rap & Hip-Hop"),
         "Record A is <p>COL Hip-Hop/Rap Music - Hardcore Rap - Rap R&B/Soul - Contemporary R&B</p>. Record B is "
         "<p>COL Rap & Hip-Hop</p>." + tail);
  expect(serialize_attribute_pair("February 13 2015", "13-Feb-15"),
         "Record A is <p>COL February 13 2015</p>. Record B is <p>COL 13-Feb-15</p>." + tail);
  return {failed == 0, std::to_string(5 - failed) + "/5 prompts exact"};
}

Outcome corpus_invariants() {
  const auto start = std::chrono::steady_clock::now();
  const auto run = testing::run_corpus_properties(1000, 2024);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = run.first_failure.empty() && run.configurations == 1000 && secs < 60.0;
  std::string detail = std::to_string(run.configurations) + " configurations, " +
                       std::to_string(run.filtered_datasets) + " filtered datasets, " + fmt(secs, 1) + " s";
  if (!run.first_failure.empty()) detail += "; " + run.first_failure;
  return {ok, detail};
}

Outcome difficulty_filter() {
  const auto planted = testing::separable_pair_dataset(480, 20, 1);
  const auto classifier = fit_filter(planted.dataset, 1);
  std::vector<LabeledPair> pairs;
  for (std::size_t i : planted.planted) pairs.push_back(planted.dataset.train[i]);
  std::size_t oracle_wrong = 0;
  for (double p : classifier->match_probability(pairs)) oracle_wrong += p < 0.5;
  const FilterReport report = split_positives(planted.dataset, *classifier);
  const std::set<std::size_t> wrong(report.wrong_positive_indices.begin(), report.wrong_positive_indices.end());
  std::size_t caught = 0;
  for (std::size_t i : planted.planted) caught += wrong.count(i);

  const auto separable = testing::separable_pair_dataset(500, 0, 1);
  const FilterReport clean = run_difficulty_filter(separable.dataset, 1);
  const bool ok = caught == 20 && oracle_wrong == 20 && clean.wrong_positive_indices.empty();
  return {ok, std::to_string(caught) + "/20 planted in D+_wrong (oracle " + std::to_string(oracle_wrong) +
                  "/20), separable fixture D+_wrong size " + std::to_string(clean.wrong_positive_indices.size())};
}

double heldout_f1(const MatcherModel& m, const FineTuneCorpus& c) {
  const auto preds = predict_texts(m, testing::texts(c));
  std::vector<int> truth, pred;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    truth.push_back(c.samples[i].label == Label::kMatch);
    pred.push_back(preds[i].label == Label::kMatch);
  }
  return testing::reference_f1(truth, pred).f1;
}

struct Smoke {
  double f1 = 0.0;
  bool loss_decreasing = false;
  std::size_t epochs = 0;
};

Smoke smoke(MatcherModel& model, const TrainConfig& cfg) {
  finetune(model, testing::separable_corpus(200, 1), testing::separable_corpus(100, 2), cfg);
  const auto loss = model.history.curve(2, true);
  Smoke s;
  s.epochs = loss.size();
  s.loss_decreasing = loss.size() >= 3 && loss[1] < loss[0] && loss[2] < loss[1];
  s.f1 = heldout_f1(model, testing::separable_corpus(100, 3));
  return s;
}

Outcome training_smoke() {
  const std::vector<std::pair<std::string, double>> row = {{"ABT", 86.05},  {"AMGO", 55.08}, {"BEER", 96.55},
                                                           {"DBAC", 93.61}, {"DBGO", 90.59}, {"FOZA", 100.00},
                                                           {"ITAM", 90.91}, {"WAAM", 61.51}, {"WDC", 63.31}};
  std::vector<EvalReport> reports;
  for (const auto& [t, f] : row) {
    EvalReport r;
    r.target_dataset = t;
    r.matcher_id = "AnyMatch";
    r.f1 = f / 100.0;
    reports.push_back(r);
  }
  const double mean = 100.0 * aggregate(reports).mean_f1;
  const bool arithmetic = std::abs(mean - 81.96) <= 0.005;
  std::string detail = "Table 1 mean " + fmt(mean) + (arithmetic ? " ok" : " WRONG");

  TrainConfig compact_cfg;
  compact_cfg.learning_rate = 1e-3;
  compact_cfg.batch_size = 8;
  compact_cfg.max_epochs = 10;
  compact_cfg.patience = 9;
  compact_cfg.seed = 1;
  ScaffoldOptions compact_opt;
  compact_opt.seed = 1;
  MatcherModel compact = swap_base_model("decoder-only-compact", compact_opt);
  const Smoke c = smoke(compact, compact_cfg);
  detail += "; compact base: F1 " + fmt(c.f1) + ", loss decreasing " + (c.loss_decreasing ? "yes" : "no");

  const char* dir = std::getenv("ZEROEM_GPT2_DIR");
  if (!dir || !*dir) {
    return {false, detail + "; 124M base BLOCKED: pretrained weights not available (set ZEROEM_GPT2_DIR to a "
                            "converted checkpoint)"};
  }
  ScaffoldOptions opt;
  opt.pretrained_dir = dir;
  opt.seed = 1;
  MatcherModel base = swap_base_model("gpt2", opt);
  TrainConfig cfg;
  cfg.max_epochs = 10;
  cfg.patience = 9;
  cfg.seed = 1;
  const auto start = std::chrono::steady_clock::now();
  const Smoke g = smoke(base, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  detail += "; 124M base: F1 " + fmt(g.f1) + ", loss decreasing " + (g.loss_decreasing ? "yes" : "no") + ", " +
            fmt(secs, 0) + " s";
  return {arithmetic && g.f1 >= 0.95 && g.loss_decreasing && g.epochs <= 10, detail};
}

std::vector<LabeledPair> labelled(std::size_t pos, std::size_t neg) {
  std::vector<LabeledPair> out(pos + neg);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].label = label_from_bool(i < pos);
    out[i].left.values = {std::to_string(i)};
    out[i].right.values = {std::to_string(i)};
  }
  return out;
}

Outcome evaluation_protocol() {
  const auto kept = downsample_test(labelled(400, 2000), 0);
  std::size_t pos = 0;
  for (const auto& p : kept) pos += p.is_match();
  const bool downsample_ok = pos == 250 && kept.size() - pos == 1000;

  Rng rng(5);
  bool identity_ok = true;
  for (int i = 0; i < 2000 && identity_ok; ++i) {
    const ConfusionCounts c{rng.uniform_index(40), rng.uniform_index(40), rng.uniform_index(40), rng.uniform_index(40)};
    const F1Metrics m = f1_from_confusion(c);
    const double want = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    identity_ok = std::abs(m.f1 - want) <= 1e-15;
  }

  std::vector<LabeledPair> test;
  for (int i = 0; i < 20; ++i) {
    LabeledPair p;
    p.label = label_from_bool(i % 3 == 0);
    const std::string a = testing::random_word(rng, 'a', 'f', 3, 8);
    p.left.values = {a, "x"};
    p.right.values = {rng.uniform_index(2) ? a : testing::random_word(rng, 'a', 'f', 3, 8), "x"};
    test.push_back(p);
  }
  PairDataset d;
  d.name = "fixture";
  d.attributes = {AttributeName("a"), AttributeName("b")};
  d.test = test;
  const std::vector<PairDataset> ds = {d};
  const EvalReport r = evaluate_zero_shot(ds, "fixture", StringSimMatcher{});
  std::vector<int> truth, pred;
  for (const auto& p : test) {
    truth.push_back(p.is_match());
    pred.push_back(testing::gestalt_ratio(*p.left.values[0] + ", x", *p.right.values[0] + ", x") > 0.5);
  }
  const bool stringsim_ok = r.f1 == testing::reference_f1(truth, pred).f1;
  return {downsample_ok && identity_ok && stringsim_ok,
          "down-sample " + std::to_string(pos) + "+" + std::to_string(kept.size() - pos) + ", F1 identity " +
              (identity_ok ? "holds" : "broken") + ", StringSim F1 " + fmt(r.f1) +
              (stringsim_ok ? " = oracle" : " != oracle")};
}

Outcome cost_model() {
  const CostEstimate c = estimate_cost(693999.0, 19.22, 2.0);
  const std::string shown = format_dollars(c.cost_per_1k_tokens);
  const double ratio = 0.015 / c.cost_per_1k_tokens;
  const bool ok = shown == "$0.0000038" && std::abs(ratio - 3899.0) <= 0.01 * 3899.0;
  return {ok, shown + " per 1K tokens, GPT-4 ratio " + fmt(ratio, 1) + "x"};
}

Outcome stringsim_oracle() {
  Rng rng(77);
  const std::string alphabet = "abcde fgh,.1";
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    std::string a(rng.uniform_index(20), ' '), b(rng.uniform_index(20), ' ');
    for (auto& ch : a) ch = alphabet[rng.uniform_index(alphabet.size())];
    for (auto& ch : b) ch = alphabet[rng.uniform_index(alphabet.size())];
    worst = std::max(worst, std::abs(ratcliff_obershelp(a, b) - testing::gestalt_ratio(a, b)));
  }
  std::ostringstream s;
  s << "max |difference| " << worst << " over 1000 pairs";
  return {worst <= 1e-12, s.str()};
}

int run_cli(const testing::TempDir& dir, const std::string& args, std::string* out = nullptr) {
  const auto out_path = dir / "stdout.txt";
  const std::string cmd = "cd '" + dir.path().string() + "' && '" + std::string(ZEROEM_CLI_PATH) + "' " + args +
                          " > '" + out_path.string() + "' 2> /dev/null";
  const int status = std::system(cmd.c_str());
  if (out) *out = read_file(out_path);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  testing::TempDir dir("acceptance");
  Rng rng(8);
  for (const auto& d : testing::random_collection(rng, 3, 150)) write_dataset(d, dir / "data" / d.name);
  const std::string gen = "gen-corpus --datasets data --target d1 --n-r 60 --n-a 20 --seed 11 --out ";
  if (run_cli(dir, gen + "a.jsonl") != 0 || run_cli(dir, gen + "b.jsonl") != 0) return {false, "gen-corpus failed"};
  const bool same_corpus = read_file(dir / "a.jsonl") == read_file(dir / "b.jsonl");

  const std::string train =
      "train --corpus a.jsonl --base decoder-only-compact --max-epochs 4 --patience 3 --batch-size 8 "
      "--max-seq-len 256 --lr 1e-3 --seed 11 --out ";
  std::string first, second;
  if (run_cli(dir, train + "m1", &first) != 0 || run_cli(dir, train + "m2", &second) != 0)
    return {false, "train failed"};
  const auto e1 = nlohmann::json::parse(first)["best_epoch"].get<int>();
  const auto e2 = nlohmann::json::parse(second)["best_epoch"].get<int>();
  return {same_corpus && e1 == e2, std::string("corpora ") + (same_corpus ? "byte-identical" : "differ") +
                                       ", best epochs " + std::to_string(e1) + " and " + std::to_string(e2)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
      {"serialization goldens", serialization_goldens},
      {"corpus invariants", corpus_invariants},
      {"difficulty filter", difficulty_filter},
      {"training smoke", training_smoke},
      {"evaluation protocol", evaluation_protocol},
      {"cost model", cost_model},
      {"StringSim oracle equivalence", stringsim_oracle},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
