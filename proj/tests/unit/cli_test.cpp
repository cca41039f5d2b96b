#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include "support/fixtures.hpp"
#include "zeroem/matcher.hpp"
#include "zeroem/util.hpp"

namespace zeroem {
namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  Cli() : tmp_("cli") {}

  Result run(const std::string& args) {
    const auto out = tmp_ / "stdout.txt";
    const auto err = tmp_ / "stderr.txt";
    const std::string cmd = "cd '" + tmp_.path().string() + "' && '" + std::string(ZEROEM_CLI_PATH) + "' " + args +
                            " > '" + out.string() + "' 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(out);
    r.err = read_file(err);
    return r;
  }

  // Three small datasets whose test split mirrors the train split.
  std::string write_collection() {
    Rng rng(3);
    auto datasets = testing::random_collection(rng, 3, 60);
    for (auto& d : datasets) {
      d.test = d.train;
      for (auto& p : d.test) p.left.values[0] = *p.left.values[0] + " test";
    }
    for (const auto& d : datasets) write_dataset(d, tmp_ / "data" / d.name);
    return (tmp_ / "data").string();
  }

  static std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);)
      if (!line.empty()) out.push_back(line);
    return out;
  }

  std::string path(const std::string& name) const { return (tmp_ / name).string(); }

  testing::TempDir tmp_;
};

TEST_F(Cli, EstimateCost) {
  const Result r = run("estimate-cost --throughput 693999 --hourly-price 19.22 --pricing-config '" +
                       std::string(ZEROEM_PRICING_PATH) + "' --name AnyMatch --manifest m.json");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("$0.0000038 per 1K tokens"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("GPT-4"), std::string::npos);
  const auto m = nlohmann::json::parse(read_file(path("m.json")));
  EXPECT_EQ(m["command"], "estimate-cost");
  EXPECT_EQ(m["exit_code"], 0);
  EXPECT_EQ(m["config"]["hourly-price"], 19.22);
}

TEST_F(Cli, BadArgumentsExitOne) {
  EXPECT_EQ(run("estimate-cost --throughput 0 --hourly-price 1").code, 1);
  EXPECT_EQ(run("estimate-cost --bogus").code, 1);
  EXPECT_EQ(run("no-such-command").code, 1);
}

TEST_F(Cli, EmptyPredictInput) {
  write_file_atomic(tmp_ / "empty.jsonl", "");
  const Result r = run("predict --checkpoint absent --input empty.jsonl --out preds.jsonl");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_file(tmp_ / "preds.jsonl"), "");
}

TEST_F(Cli, MalformedLabelFailsWithRow) {
  const auto dir = tmp_ / "bad";
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "manifest.json", R"({"name": "bad", "attributes": ["title"]})");
  write_file_atomic(dir / "train.csv", "left_title,right_title,label\na,b,0\na,b,maybe\n");
  write_file_atomic(dir / "valid.csv", "left_title,right_title,label\n");
  write_file_atomic(dir / "test.csv", "left_title,right_title,label\n");
  const Result r = run("ingest --data bad --manifest ingest.json");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("row 1"), std::string::npos) << r.err;
  const auto m = nlohmann::json::parse(read_file(path("ingest.json")));
  EXPECT_EQ(m["exit_code"], 1);
  EXPECT_FALSE(m["error"].get<std::string>().empty());
}

TEST_F(Cli, IngestPrintsManifest) {
  write_collection();
  const Result r = run("ingest --data data/d1");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["name"], "d1");
}

TEST_F(Cli, GenCorpusIsDeterministic) {
  write_collection();
  const std::string base = "gen-corpus --datasets data --target d0 --n-r 30 --n-a 10 ";
  ASSERT_EQ(run(base + "--seed 7 --out a.jsonl").code, 0);
  ASSERT_EQ(run(base + "--seed 7 --out b.jsonl").code, 0);
  ASSERT_EQ(run(base + "--seed 8 --out c.jsonl").code, 0);
  EXPECT_EQ(read_file(tmp_ / "a.jsonl"), read_file(tmp_ / "b.jsonl"));
  EXPECT_NE(read_file(tmp_ / "a.jsonl"), read_file(tmp_ / "c.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(tmp_ / "a.jsonl.meta.json"));
  const auto m = nlohmann::json::parse(read_file(tmp_ / "a.jsonl.run.json"));
  EXPECT_EQ(m["seed"], 7);
  EXPECT_FALSE(m["inputs"].empty());
  EXPECT_EQ(m["outputs"][0], "a.jsonl");
}

TEST_F(Cli, ConfigPrecedence) {
  write_collection();
  write_file_atomic(tmp_ / "cfg.json", R"({"gen-corpus": {"seed": 5, "n-r": 30, "n-a": 10}})");
  const std::string base = "gen-corpus --datasets data --target d0 --config cfg.json ";
  ASSERT_EQ(run(base + "--out a.jsonl").code, 0);
  ASSERT_EQ(run(base + "--seed 6 --out b.jsonl").code, 0);
  const auto a = nlohmann::json::parse(read_file(tmp_ / "a.jsonl.run.json"));
  const auto b = nlohmann::json::parse(read_file(tmp_ / "b.jsonl.run.json"));
  EXPECT_EQ(a["config"]["seed"], 5);
  EXPECT_EQ(a["config"]["n-r"], 30);
  EXPECT_EQ(b["config"]["seed"], 6);
  // A previous manifest replays its configuration.
  ASSERT_EQ(run("gen-corpus --config a.jsonl.run.json --out c.jsonl").code, 0);
  EXPECT_EQ(read_file(tmp_ / "a.jsonl"), read_file(tmp_ / "c.jsonl"));
}

TEST_F(Cli, StringSimBaseline) {
  write_collection();
  const Result r = run("baseline-stringsim --datasets data --out reports.json");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("matcher,d0,d1,d2,mean\nstringsim,", 0), 0u) << r.out;
  EXPECT_EQ(nlohmann::json::parse(read_file(tmp_ / "reports.json"))["reports"].size(), 3u);
  EXPECT_EQ(run("eval --matcher stringsim --datasets data --target d2").code, 0);
}

TEST_F(Cli, EvalRefusesCheckpointThatSawTarget) {
  write_collection();
  MatcherModel m = swap_base_model("decoder-only-compact");
  m.provenance = CorpusProvenance{"d0", {"d1", "d2"}, "h"};
  save_checkpoint(m, tmp_ / "ckpt");
  const Result r = run("eval --checkpoint ckpt --datasets data --target d1");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("d1"), std::string::npos) << r.err;
  EXPECT_EQ(run("eval --checkpoint ckpt --datasets data --target d0 --out report.json").code, 0);
  EXPECT_EQ(nlohmann::json::parse(read_file(tmp_ / "report.json"))["target_dataset"], "d0");
}

TEST_F(Cli, TrainThenPredict) {
  write_collection();
  ASSERT_EQ(run("gen-corpus --datasets data --target d0 --n-r 30 --n-a 10 --out c.jsonl").code, 0);
  const std::string train =
      "train --corpus c.jsonl --base decoder-only-compact --max-epochs 2 --patience 1 --batch-size 8 "
      "--max-seq-len 256 --lr 1e-3 --seed 1 --validation-fraction 0.3 --out ";
  const Result r = run(train + "ckpt");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = nlohmann::json::parse(r.out);
  EXPECT_GE(summary["best_epoch"].get<int>(), 1);
  EXPECT_TRUE(std::filesystem::exists(tmp_ / "ckpt" / "run.json"));
  EXPECT_NE(r.err.find("epoch 1"), std::string::npos);
  const Result again = run(train + "ckpt2");
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(nlohmann::json::parse(again.out)["best_epoch"], summary["best_epoch"]);

  write_file_atomic(tmp_ / "in.jsonl", "{\"text\": \"Record A is <p>COL a</p>. Record B is <p>COL a</p>.\"}\nraw line\n");
  const Result p = run("predict --checkpoint ckpt --input in.jsonl");
  ASSERT_EQ(p.code, 0) << p.err;
  const auto rows = lines(p.out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(nlohmann::json::parse(rows[1])["index"], 1);
  EXPECT_EQ(run("train --corpus c.jsonl --base gpt2 --out g").code, 1);
}

TEST_F(Cli, BenchThroughputSynthetic) {
  const Result r = run("bench-throughput --base decoder-only-compact --synthetic 8 --batches 2 --warmup 1 "
                       "--ceiling 4 --max-seq-len 256 --hourly-price 19.22 --out bench.json");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(read_file(tmp_ / "bench.json"));
  EXPECT_EQ(j["prompt_source"], "synthetic");
  EXPECT_GT(j["throughput"]["tokens_per_second"].get<double>(), 0.0);
  EXPECT_LE(j["throughput"]["max_batch_size"].get<int>(), 4);
}

}  // namespace
}  // namespace zeroem
