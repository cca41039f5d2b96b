#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "zeroem/matcher.hpp"

namespace zeroem {
namespace {

TrainConfig smoke_config() {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 8;
  cfg.max_epochs = 10;
  cfg.patience = 9;
  cfg.seed = 1;
  return cfg;
}

double f1_on(const MatcherModel& m, const FineTuneCorpus& c) {
  const auto preds = predict_texts(m, testing::texts(c));
  std::vector<int> truth, pred;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    truth.push_back(c.samples[i].label == Label::kMatch);
    pred.push_back(preds[i].label == Label::kMatch);
  }
  return testing::reference_f1(truth, pred).f1;
}

// One trained compact model shared by the tests below.
class Trained : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ScaffoldOptions opt;
    opt.seed = 1;
    model_ = std::make_shared<MatcherModel>(swap_base_model("decoder-only-compact", opt));
    model_->provenance = CorpusProvenance{"target", {"synthetic"}, "abc"};
    finetune(*model_, testing::separable_corpus(200, 1), testing::separable_corpus(100, 2), smoke_config());
  }
  static void TearDownTestSuite() { model_.reset(); }
  static std::shared_ptr<MatcherModel> model_;
};
std::shared_ptr<MatcherModel> Trained::model_;

TEST_F(Trained, CompactSmokeReachesHighF1) {
  const auto& h = model_->history;
  ASSERT_GE(h.epochs.size(), 3u);
  EXPECT_LT(h.epochs[1].train_loss, h.epochs[0].train_loss);
  EXPECT_LT(h.epochs[2].train_loss, h.epochs[1].train_loss);
  EXPECT_LE(h.epochs.size(), 10u);
  EXPECT_GE(h.best_validation_f1, 0.95);
  EXPECT_GE(f1_on(*model_, testing::separable_corpus(100, 3)), 0.95);
}

TEST_F(Trained, BatchSizeDoesNotChangePredictions) {
  const auto prompts = testing::texts(testing::separable_corpus(40, 9));
  const auto one = predict_texts(*model_, prompts, 1);
  const auto many = predict_texts(*model_, prompts, 64);
  ASSERT_EQ(one.size(), many.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].label, many[i].label);
    EXPECT_NEAR(one[i].score, many[i].score, 1e-6);
  }
}

TEST_F(Trained, PaddingIsMasked) {
  const auto prompts = testing::texts(testing::separable_corpus(6, 4));
  std::vector<std::vector<TokenId>> batch;
  for (const auto& p : prompts) batch.push_back(model_->encode_prompt(p, 512));
  const auto tight = padded_batch_logits(*model_, batch);
  const auto loose = padded_batch_logits(*model_, batch, 37);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto alone = padded_batch_logits(*model_, {batch[i]});
    for (int k = 0; k < 2; ++k) {
      EXPECT_NEAR(tight[i][k], loose[i][k], 1e-4);
      EXPECT_NEAR(tight[i][k], alone[0][k], 1e-4);
    }
  }
}

TEST_F(Trained, CheckpointRoundTrip) {
  testing::TempDir tmp("ckpt");
  save_checkpoint(*model_, tmp / "ckpt");
  const MatcherModel back = load_checkpoint(tmp / "ckpt");
  EXPECT_EQ(back.spec().identifier, "decoder-only-compact");
  ASSERT_TRUE(back.provenance);
  EXPECT_EQ(back.provenance->excluded_target, "target");
  EXPECT_EQ(back.history.best_epoch, model_->history.best_epoch);
  const auto prompts = testing::texts(testing::separable_corpus(10, 5));
  const auto a = predict_texts(*model_, prompts);
  const auto b = predict_texts(back, prompts);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].score, b[i].score);
  EXPECT_THROW(load_checkpoint(tmp / "absent"), LoadError);
}

TEST_F(Trained, FineTunedMatcherRespectsSchemaAndEmptyInput) {
  const FineTunedMatcher matcher(model_);
  EXPECT_TRUE(matcher.predict({}, {}).empty());
  LabeledPair p;
  p.left.values = {"abc", "def"};
  p.right.values = {"abc", "def"};
  const auto preds = matcher.predict(std::span(&p, 1), {});
  ASSERT_EQ(preds.size(), 1u);
  EXPECT_GE(preds[0].score, 0.0);
  EXPECT_LE(preds[0].score, 1.0);
  ASSERT_TRUE(matcher.provenance());
}

TEST(Training, InfiniteEpsilonStopsAfterPatience) {
  ScaffoldOptions opt;
  opt.seed = 2;
  MatcherModel m = swap_base_model("encoder-only-compact", opt);
  TrainConfig cfg = smoke_config();
  cfg.improvement_epsilon = std::numeric_limits<double>::infinity();
  cfg.patience = 2;
  cfg.max_epochs = 8;
  int calls = 0;
  finetune(m, testing::separable_corpus(24, 1, 1), testing::separable_corpus(12, 2, 1), cfg,
           [&](const EpochRecord&) { ++calls; });
  EXPECT_EQ(m.history.epochs.size(), 3u);
  EXPECT_EQ(calls, 3);
  EXPECT_GE(m.history.best_epoch, 1);
  EXPECT_LE(m.history.best_epoch, 3);
  EXPECT_TRUE(m.history.epochs[0].improved);
  EXPECT_FALSE(m.history.epochs[1].improved);
  EXPECT_THROW(finetune(m, FineTuneCorpus{}, testing::separable_corpus(4, 1), cfg), ValidationError);
}

TEST(Training, SameSeedSameHistory) {
  auto run = [] {
    ScaffoldOptions opt;
    opt.seed = 3;
    MatcherModel m = swap_base_model("encoder-decoder-compact", opt);
    TrainConfig cfg = smoke_config();
    cfg.max_epochs = 3;
    cfg.patience = 2;
    finetune(m, testing::separable_corpus(16, 1, 1), testing::separable_corpus(8, 2, 1), cfg);
    return m.history.to_json().dump();
  };
  EXPECT_EQ(run(), run());
}

TEST(Models, Registry) {
  const ModelSpec gpt2 = resolve_model("gpt2");
  EXPECT_EQ(gpt2.config.family, nn::Family::kDecoderOnly);
  EXPECT_EQ(nn::parameter_count(gpt2.config), 124441344u);
  EXPECT_TRUE(gpt2.requires_pretrained);
  EXPECT_EQ(resolve_model(kDefaultBaseModel).identifier, "gpt2");
  EXPECT_THROW(resolve_model("llama"), ValidationError);
  EXPECT_THROW(swap_base_model("gpt2"), LoadError);
  EXPECT_GE(known_models().size(), 6u);
  EXPECT_EQ(swap_base_model("encoder-only-compact").head_input(), "pooled-first-token");
  EXPECT_EQ(swap_base_model("encoder-decoder-compact").head_input(), "decoder-query");
  EXPECT_EQ(swap_base_model("decoder-only-compact").head_input(), "last-token");
}

TEST(Models, TruncationTrimsLongestValue) {
  const MatcherModel m = swap_base_model("decoder-only-compact");
  const std::vector<Value> left = {std::string(300, 'x'), "short"};
  const std::vector<Value> right = {"y", "z"};
  const std::string prompt = serialize_record_pair(left, right);
  const auto ids = m.encode_prompt(prompt, 200);
  EXPECT_LE(ids.size(), 200u);
  const auto text = m.tokenizer().decode(ids);
  EXPECT_NE(text.find("COL short"), std::string::npos);
  EXPECT_NE(text.find("xxxx"), std::string::npos);
  EXPECT_EQ(m.encode_prompt("abc", 200).size(), 3u);
  EXPECT_THROW(m.encode_prompt(prompt, 20), ValidationError);
}

TEST(Models, TrainConfigValidation) {
  const auto model = resolve_model("decoder-only-compact").config;
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate(model));
  cfg.patience = cfg.max_epochs;
  EXPECT_THROW(cfg.validate(model), ValidationError);
  cfg = {};
  cfg.max_sequence_length = 4096;
  EXPECT_THROW(cfg.validate(model), ValidationError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(model), ValidationError);
  EXPECT_EQ(TrainConfig::from_json(TrainConfig{}.to_json()).to_json(), TrainConfig{}.to_json());
}

TEST(Memory, AutoBatchSize) {
  const auto c = resolve_model("gpt2").config;
  const std::size_t b = auto_batch_size(c, 512, std::size_t{8} << 30, 64, true);
  EXPECT_GE(b, 1u);
  EXPECT_LE(b, 64u);
  EXPECT_EQ(b & (b - 1), 0u);
  EXPECT_LE(estimate_memory_bytes(c, 512, b, true), std::size_t{8} << 30);
  EXPECT_THROW(auto_batch_size(c, 512, 1000, 64, true), ResourceError);
  EXPECT_GT(estimate_memory_bytes(c, 512, 2, false), estimate_memory_bytes(c, 512, 1, false));
}

}  // namespace
}  // namespace zeroem
