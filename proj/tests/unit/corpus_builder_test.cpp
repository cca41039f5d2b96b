#include <gtest/gtest.h>

#include <set>

#include "support/corpus_properties.hpp"
#include "support/fixtures.hpp"
#include "zeroem/corpus_builder.hpp"

namespace zeroem {
namespace {

using testing::trace;

// `pos` positives followed by `neg` negatives, one attribute, traceable values.
PairDataset counted(const std::string& name, std::size_t index, std::size_t pos, std::size_t neg) {
  Rng rng(index + 1);
  PairDataset d;
  d.name = name;
  d.attributes = {AttributeName("title")};
  for (std::size_t i = 0; i < pos + neg; ++i) {
    LabeledPair p;
    p.label = label_from_bool(i < pos);
    p.left.values = {testing::tagged_value(rng, "title", index, i)};
    p.right.values = {testing::tagged_value(rng, "title", index, i)};
    d.train.push_back(std::move(p));
  }
  return d;
}

FilterReport first_wrong(const PairDataset& d, std::size_t wrong) {
  FilterReport r;
  r.dataset_name = d.name;
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    if (!d.train[i].is_match()) continue;
    (r.wrong_positive_indices.size() < wrong ? r.wrong_positive_indices : r.correct_positive_indices).push_back(i);
  }
  return r;
}

std::vector<std::size_t> traced_positives(const std::vector<SerializedSample>& samples) {
  std::vector<std::size_t> out;
  for (const auto& s : samples)
    if (!s.flipped && s.label == Label::kMatch) out.push_back(trace(s.text)->pair);
  return out;
}

TEST(RecordLevel, HardPositivesTopUp) {
  const PairDataset d = counted("big", 0, 300, 5000);
  GenerationConfig cfg;
  const auto samples = gen_recordlevel(d, cfg, first_wrong(d, 100));
  EXPECT_EQ(samples.size(), 1800u);
  const auto pos = traced_positives(samples);
  EXPECT_EQ(pos.size(), 300u);
  const std::set<std::size_t> chosen(pos.begin(), pos.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_TRUE(chosen.count(i));
  std::size_t neg = 0;
  for (const auto& s : samples) neg += !s.flipped && s.label == Label::kNonMatch;
  EXPECT_EQ(neg, 600u);
}

TEST(RecordLevel, OnlyHardPositivesWhenEnough) {
  const PairDataset d = counted("big", 0, 1000, 5000);
  GenerationConfig cfg;
  const auto pos = traced_positives(gen_recordlevel(d, cfg, first_wrong(d, 450)));
  EXPECT_EQ(pos.size(), 400u);
  for (std::size_t i : pos) EXPECT_LT(i, 450u);
}

TEST(RecordLevel, SmallDatasetKeptWholeAndFlipped) {
  const PairDataset d = counted("small", 0, 2, 5);
  GenerationConfig cfg;
  const auto samples = gen_recordlevel(d, cfg, std::nullopt);
  ASSERT_EQ(samples.size(), 14u);
  for (std::size_t i = 0; i < samples.size(); i += 2) {
    EXPECT_FALSE(samples[i].flipped);
    EXPECT_TRUE(samples[i + 1].flipped);
    const auto a = testing::payloads(samples[i].text);
    const auto b = testing::payloads(samples[i + 1].text);
    ASSERT_TRUE(a && b);
    EXPECT_EQ(a->first, b->second);
    EXPECT_EQ(a->second, b->first);
  }
  cfg.enable_flip = false;
  EXPECT_EQ(gen_recordlevel(d, cfg, std::nullopt).size(), 7u);
}

TEST(RecordLevel, NoPositivesIsAnError) {
  const PairDataset d = counted("neg", 0, 0, 20);
  GenerationConfig cfg;
  cfg.n_r = 10;
  EXPECT_THROW(gen_recordlevel(d, cfg, std::nullopt), ValidationError);
  cfg.n_r = 20;
  EXPECT_EQ(gen_recordlevel(d, cfg, std::nullopt).size(), 40u);
}

TEST(RecordLevel, FewNegativesWarns) {
  const PairDataset d = counted("posheavy", 0, 30, 10);
  GenerationConfig cfg;
  cfg.n_r = 30;
  std::vector<std::string> warnings;
  const auto samples = gen_recordlevel(d, cfg, std::nullopt, &warnings);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_EQ(samples.size(), 2u * 20u);
}

TEST(AttributeLevel, BalancedPerAttribute) {
  std::vector<PairDataset> ds = {counted("a", 0, 10, 40), counted("b", 1, 5, 5)};
  GenerationConfig cfg;
  cfg.n_a = 8;
  const auto samples = gen_attributelevel(ds, cfg);
  std::size_t pos = 0;
  for (const auto& s : samples) {
    EXPECT_EQ(s.granularity, Granularity::kAttribute);
    pos += s.label == Label::kMatch;
  }
  EXPECT_EQ(samples.size(), 8u);
  EXPECT_EQ(pos, 4u);
}

TEST(BuildCorpus, ExcludesTargetAndValidates) {
  std::vector<PairDataset> ds = {counted("a", 0, 10, 40), counted("b", 1, 5, 5), counted("c", 2, 3, 6)};
  GenerationConfig cfg;
  const FineTuneCorpus c = build_corpus(ds, "b", cfg);
  EXPECT_EQ(c.excluded_target, "b");
  EXPECT_EQ(c.sources, (std::vector<std::string>{"a", "c"}));
  EXPECT_EQ(testing::check_corpus(ds, "b", cfg, c, {}), "");
  EXPECT_THROW(build_corpus(ds, "zz", cfg), ValidationError);
  const std::vector<PairDataset> lone = {ds[0]};
  EXPECT_THROW(build_corpus(lone, "a", cfg), ValidationError);
}

TEST(BuildCorpus, Deterministic) {
  Rng rng(11);
  const auto ds = testing::random_collection(rng, 3, 200);
  GenerationConfig cfg;
  cfg.n_r = 60;
  cfg.seed = 4;
  const auto provider = [](const PairDataset& d, std::uint64_t s) { return testing::random_filter_report(d, s); };
  const auto a = build_corpus(ds, "d0", cfg, provider);
  const auto b = build_corpus(ds, "d0", cfg, provider);
  EXPECT_EQ(corpus_to_jsonl(a.samples), corpus_to_jsonl(b.samples));
  EXPECT_EQ(a.hash(), b.hash());
  cfg.seed = 5;
  EXPECT_NE(build_corpus(ds, "d0", cfg, provider).hash(), a.hash());
}

TEST(BuildCorpus, FilterUnavailableBecomesWarning) {
  std::vector<PairDataset> ds = {counted("a", 0, 10, 40), counted("b", 1, 5, 5)};
  GenerationConfig cfg;
  cfg.n_r = 30;
  const auto c = build_corpus(ds, "b", cfg, [](const PairDataset&, std::uint64_t) -> FilterReport {
    throw FilterUnavailable("single class");
  });
  EXPECT_EQ(c.warnings.size(), 1u);
  EXPECT_FALSE(c.contributions[0].filtered);
}

TEST(Properties, RandomConfigurations) {
  const auto run = testing::run_corpus_properties(200, 99);
  EXPECT_EQ(run.first_failure, "");
  EXPECT_EQ(run.configurations, 200u);
  EXPECT_GT(run.filtered_datasets, 0u);
}

// The checker itself must notice tampering.
TEST(Properties, CheckerCatchesMutations) {
  std::vector<PairDataset> ds = {counted("a", 0, 50, 150), counted("b", 1, 20, 30), counted("c", 2, 10, 20)};
  GenerationConfig cfg;
  cfg.n_r = 60;
  cfg.n_a = 20;
  std::map<std::string, FilterReport> reports;
  const FilterProvider provider = [&](const PairDataset& d, std::uint64_t) {
    return reports[d.name] = first_wrong(d, 5);
  };
  const FineTuneCorpus c = build_corpus(ds, "c", cfg, provider);
  ASSERT_EQ(testing::check_corpus(ds, "c", cfg, c, reports), "");

  auto mutated = [&](auto change) {
    FineTuneCorpus m = c;
    change(m);
    return testing::check_corpus(ds, "c", cfg, m, reports);
  };
  const auto first_record = [&](const FineTuneCorpus& m) {
    for (std::size_t i = 0; i < m.samples.size(); ++i)
      if (m.samples[i].granularity == Granularity::kRecord && !m.samples[i].flipped) return i;
    return m.samples.size();
  };
  EXPECT_NE(mutated([&](FineTuneCorpus& m) { m.samples.erase(m.samples.begin() + first_record(m) + 1); }), "");
  EXPECT_NE(mutated([&](FineTuneCorpus& m) {
              const auto i = first_record(m);
              m.samples[i].label = m.samples[i].label == Label::kMatch ? Label::kNonMatch : Label::kMatch;
              m.samples[i + 1].label = m.samples[i].label;
            }), "");
  EXPECT_NE(mutated([&](FineTuneCorpus& m) {
              SerializedSample s = m.samples[first_record(m)];
              s.text = serialize_record_pair(ds[2].train[0].left.values, ds[2].train[0].right.values);
              s.flipped = false;
              m.samples.push_back(s);
            }), "");
  EXPECT_NE(mutated([&](FineTuneCorpus& m) {
              for (auto it = m.samples.begin(); it != m.samples.end(); ++it)
                if (it->granularity == Granularity::kAttribute) {
                  m.samples.erase(it);
                  break;
                }
            }), "");
  EXPECT_NE(mutated([&](FineTuneCorpus& m) { m.excluded_target = ""; }), "");
}

TEST(Validation, StratifiedAndKeepsTwinsTogether) {
  const FineTuneCorpus c = testing::separable_corpus(200, 1);
  const auto [train, valid] = split_validation(c, 0.25, 3);
  EXPECT_EQ(train.samples.size() + valid.samples.size(), c.samples.size());
  std::size_t vpos = 0;
  for (const auto& s : valid.samples) vpos += s.label == Label::kMatch;
  EXPECT_GT(vpos, 0u);
  EXPECT_LT(vpos, valid.samples.size());
  EXPECT_NEAR(static_cast<double>(valid.samples.size()) / c.samples.size(), 0.25, 0.05);
  EXPECT_THROW(split_validation(c, 0.0), std::invalid_argument);
  EXPECT_THROW(split_validation(c, 1.0), std::invalid_argument);

  std::vector<PairDataset> ds = {counted("a", 0, 10, 20), counted("b", 1, 3, 6)};
  const FineTuneCorpus flipped = build_corpus(ds, "b", GenerationConfig{});
  const auto parts = split_validation(flipped, 0.3, 1);
  for (const auto* part : {&parts.first, &parts.second}) {
    const auto& ss = part->samples;
    for (std::size_t i = 0; i < ss.size(); ++i)
      if (ss[i].flipped) EXPECT_TRUE(i > 0 && !ss[i - 1].flipped && ss[i - 1].granularity == Granularity::kRecord);
  }

  FineTuneCorpus tiny;
  tiny.samples.resize(3);
  tiny.samples[0].label = Label::kMatch;
  EXPECT_THROW(split_validation(tiny, 0.5), ValidationError);
}

TEST(Serialization, JsonlAndSidecarRoundTrip) {
  std::vector<PairDataset> ds = {counted("a", 0, 10, 20), counted("b", 1, 3, 6)};
  GenerationConfig cfg;
  cfg.attribute_mode = AttributeMode::kSequential;
  cfg.seed = 8;
  const FineTuneCorpus c = build_corpus(ds, "b", cfg);
  EXPECT_TRUE(c.has_phase(1));
  EXPECT_EQ(corpus_from_jsonl(corpus_to_jsonl(c.samples)), c.samples);
  testing::TempDir tmp("corpus");
  write_corpus(c, tmp / "c.jsonl");
  EXPECT_TRUE(std::filesystem::exists(corpus_metadata_path(tmp / "c.jsonl")));
  const FineTuneCorpus back = read_corpus(tmp / "c.jsonl");
  EXPECT_EQ(back.samples, c.samples);
  EXPECT_EQ(back.excluded_target, "b");
  EXPECT_EQ(back.config.seed, 8u);
  EXPECT_EQ(back.config.attribute_mode, AttributeMode::kSequential);
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(parse_attribute_mode(attribute_mode_name(AttributeMode::kOff)), AttributeMode::kOff);
  EXPECT_THROW(corpus_from_jsonl("{\"text\": 1}\n"), std::exception);
}

}  // namespace
}  // namespace zeroem
