#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <new>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "zeroem/baselines.hpp"
#include "zeroem/core_model.hpp"
#include "zeroem/corpus_builder.hpp"
#include "zeroem/difficulty_filter.hpp"
#include "zeroem/evaluation.hpp"
#include "zeroem/matcher.hpp"
#include "zeroem/perfbench_cost.hpp"
#include "zeroem/serializer.hpp"
#include "zeroem/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace zeroem::cli {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

// Options that may also come from a config file. A value given on the
// command line wins over the file, the file wins over the built-in default.
class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* option(const std::string& name, T& value, const std::string& help) {
    CLI::Option* opt = app_->add_option("--" + name, value, help)->capture_default_str();
    entries_.push_back({name, opt, [&value](const json& j) { value = j.get<T>(); },
                        [&value] { return ordered_json(value); }});
    return opt;
  }

  CLI::Option* flag(const std::string& name, bool& value, const std::string& help) {
    CLI::Option* opt = app_->add_flag("--" + name, value, help);
    entries_.push_back({name, opt, [&value](const json& j) { value = j.get<bool>(); },
                        [&value] { return ordered_json(value); }});
    return opt;
  }

  void apply(const json& config) {
    for (auto& e : entries_) {
      if (e.opt->count() > 0 || !config.contains(e.name)) continue;
      try {
        e.assign(config.at(e.name));
      } catch (const json::exception& ex) {
        throw ValidationError("config key '" + e.name + "': " + ex.what());
      }
    }
  }

  ordered_json effective() const {
    ordered_json out = ordered_json::object();
    for (const auto& e : entries_) out[e.name] = e.read();
    return out;
  }

 private:
  struct Entry {
    std::string name;
    CLI::Option* opt;
    std::function<void(const json&)> assign;
    std::function<ordered_json()> read;
  };
  CLI::App* app_;
  std::vector<Entry> entries_;
};

// Accepts a plain JSON object, an object with per-command sections, or a
// previous run manifest (its "config" member is replayed).
json load_config(const std::string& path, const std::string& command) {
  if (path.empty()) return json::object();
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  if (!j.is_object()) throw ValidationError(path + ": config must be a JSON object");
  if (j.contains("command") && j.contains("config") && j["config"].is_object()) {
    if (j["command"] != command)
      throw ValidationError(path + ": manifest is for command '" + j["command"].get<std::string>() + "'");
    return j["config"];
  }
  json flat = json::object();
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!it.value().is_object()) flat[it.key()] = it.value();
  if (j.contains(command) && j[command].is_object()) flat.update(j[command]);
  return flat;
}

std::string hash_path(const fs::path& path) {
  if (!fs::exists(path)) return "";
  if (fs::is_regular_file(path)) return hex64(fnv1a64(read_file(path)));
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(path))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a64("");
  for (const auto& f : files) {
    h = fnv1a64(fs::relative(f, path).generic_string(), h);
    h = fnv1a64(read_file(f), h);
  }
  return hex64(h);
}

struct Run {
  std::string command;
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<std::string> outputs;

  void input(const fs::path& p) { inputs.emplace_back(p.string(), hash_path(p)); }
  void output(const fs::path& p) { outputs.push_back(p.string()); }
};

void write_manifest(const fs::path& path, const Run& run, const ordered_json& config, double seconds, int status,
                    const std::string& error) {
  ordered_json m;
  m["command"] = run.command;
  m["config"] = config;
  if (config.contains("seed")) m["seed"] = config["seed"];
  ordered_json inputs = ordered_json::array();
  for (const auto& [p, h] : run.inputs) inputs.push_back({{"path", p}, {"fnv1a64", h}});
  m["inputs"] = inputs;
  m["outputs"] = run.outputs;
  m["wall_time_seconds"] = seconds;
  m["exit_code"] = status;
  if (!error.empty()) m["error"] = error;
  write_file_atomic(path, m.dump(2) + "\n");
}

void write_json(const std::string& out, const ordered_json& j, Run& run) {
  const std::string text = j.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
    run.output(out);
  }
}

LoadOptions load_options(bool strict) {
  LoadOptions o;
  o.strict = strict;
  return o;
}

std::vector<PairDataset> load_collection(const std::string& root, bool strict, Run& run) {
  if (root.empty()) throw ValidationError("--datasets is required");
  if (!fs::is_directory(root)) throw LoadError(root + ": not a directory");
  run.input(root);
  auto datasets = load_dataset_collection(root, load_options(strict));
  if (datasets.empty()) throw ValidationError(root + ": no datasets found");
  return datasets;
}

std::optional<std::size_t> parse_batch(const std::string& text) {
  if (text == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size() || v < 1) throw std::invalid_argument("");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ValidationError("batch size must be a positive integer or 'auto', got '" + text + "'");
  }
}

std::size_t memory_budget(double fraction) {
  const auto avail = available_memory_bytes();
  return static_cast<std::size_t>(fraction * static_cast<double>(avail.value_or(std::size_t{4} << 30)));
}

// ---------------------------------------------------------------- commands

struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<Settings> settings;
  std::string config_path;
  std::string manifest_path;
  std::function<void(Run&)> body;
  std::function<std::string()> default_manifest;
};

struct IngestArgs {
  std::string data;
  std::string out;
  bool strict = false;
};

void ingest(const IngestArgs& a, Run& run) {
  if (a.data.empty()) throw ValidationError("--data is required");
  run.input(a.data);
  ordered_json result;
  if (fs::exists(fs::path(a.data) / "manifest.json")) {
    result = dataset_stats(load_dataset(a.data, load_options(a.strict))).to_json();
  } else {
    if (!fs::is_directory(a.data)) throw LoadError(a.data + ": not a dataset directory");
    result = ordered_json::array();
    for (const auto& d : load_dataset_collection(a.data, load_options(a.strict)))
      result.push_back(dataset_stats(d).to_json());
  }
  write_json(a.out, result, run);
}

struct GenCorpusArgs {
  std::string datasets;
  std::string target;
  std::string out;
  std::size_t n_r = 1200;
  std::size_t n_a = 600;
  std::uint64_t seed = 0;
  bool no_automl = false;
  bool no_flip = false;
  std::string attr_mode = "mix";
  std::string variant = "suffix,p";
  std::string cache_dir;
  bool strict = false;
};

void gen_corpus(const GenCorpusArgs& a, Run& run) {
  if (a.target.empty()) throw ValidationError("--target is required");
  if (a.out.empty()) throw ValidationError("--out is required");
  GenerationConfig cfg;
  cfg.n_r = a.n_r;
  cfg.n_a = a.n_a;
  cfg.seed = a.seed;
  cfg.enable_automl_filter = !a.no_automl;
  cfg.enable_flip = !a.no_flip;
  try {
    cfg.attribute_mode = parse_attribute_mode(a.attr_mode);
    cfg.variant = SerializationVariant::parse(a.variant);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  const auto datasets = load_collection(a.datasets, a.strict, run);
  FilterProvider provider;
  if (!a.cache_dir.empty()) {
    const fs::path cache = a.cache_dir;
    provider = [cache](const PairDataset& d, std::uint64_t seed) { return run_difficulty_filter(d, seed, cache); };
  }
  const FineTuneCorpus corpus = build_corpus(datasets, a.target, cfg, provider);
  for (const auto& w : corpus.warnings) std::cerr << "warning: " << w << "\n";
  write_corpus(corpus, a.out);
  run.output(a.out);
  run.output(corpus_metadata_path(a.out).string());
  std::cout << corpus.samples.size() << " samples, hash " << corpus.hash() << "\n";
}

struct TrainArgs {
  std::string corpus;
  std::string validation;
  std::string out;
  std::string base = std::string(kDefaultBaseModel);
  std::string base_dir;
  bool allow_random_init = false;
  double lr = 2e-5;
  double weight_decay = 0.01;
  int max_epochs = 50;
  int patience = 6;
  double epsilon = 1e-4;
  std::string batch_size = "16";
  std::size_t max_seq_len = 512;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  double max_grad_norm = 1.0;
  double memory_fraction = 0.5;
};

void train(const TrainArgs& a, Run& run) {
  if (a.corpus.empty()) throw ValidationError("--corpus is required");
  if (a.out.empty()) throw ValidationError("--out is required");
  run.input(a.corpus);
  const FineTuneCorpus corpus = read_corpus(a.corpus);
  FineTuneCorpus train_part;
  FineTuneCorpus valid_part;
  if (!a.validation.empty()) {
    run.input(a.validation);
    train_part = corpus;
    valid_part = read_corpus(a.validation);
  } else {
    try {
      std::tie(train_part, valid_part) = split_validation(corpus, a.validation_fraction, a.seed);
    } catch (const std::invalid_argument& e) {
      throw ValidationError(e.what());
    }
  }

  ScaffoldOptions scaffold;
  if (!a.base_dir.empty()) {
    scaffold.pretrained_dir = a.base_dir;
    run.input(a.base_dir);
  }
  scaffold.allow_random_init = a.allow_random_init;
  scaffold.seed = a.seed;
  scaffold.variant = corpus.config.variant;
  MatcherModel model = swap_base_model(a.base, scaffold);

  TrainConfig cfg;
  cfg.learning_rate = a.lr;
  cfg.weight_decay = a.weight_decay;
  cfg.max_epochs = a.max_epochs;
  cfg.patience = a.patience;
  cfg.improvement_epsilon = a.epsilon;
  cfg.batch_size = parse_batch(a.batch_size);
  cfg.max_sequence_length = a.max_seq_len;
  cfg.seed = a.seed;
  cfg.max_grad_norm = a.max_grad_norm;
  cfg.memory_fraction = a.memory_fraction;

  std::cerr << "training " << a.base << " (" << model.parameter_count() << " parameters) on "
            << train_part.samples.size() << " samples, validating on " << valid_part.samples.size() << "\n";
  finetune(model, train_part, valid_part, cfg, [](const EpochRecord& r) {
    char line[160];
    std::snprintf(line, sizeof line, "phase %d epoch %d loss %.6f val_f1 %.4f%s", r.phase, r.epoch, r.train_loss,
                  r.validation_f1, r.improved ? " *" : "");
    std::cerr << line << "\n";
  });
  save_checkpoint(model, a.out);
  run.output(a.out);
  std::cout << ordered_json{{"best_epoch", model.history.best_epoch},
                            {"best_validation_f1", model.history.best_validation_f1},
                            {"batch_size", model.history.batch_size},
                            {"checkpoint", a.out}}
                   .dump()
            << "\n";
}

struct PredictArgs {
  std::string checkpoint;
  std::string input;
  std::string out;
  std::string batch_size = "64";
};

std::vector<std::string> read_prompts(const std::string& path) {
  std::vector<std::string> prompts;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    if (line.front() == '{') {
      try {
        prompts.push_back(json::parse(line).at("text").get<std::string>());
      } catch (const json::exception& e) {
        throw ValidationError(path + ":" + std::to_string(row) + ": " + e.what());
      }
    } else {
      prompts.push_back(line);
    }
  }
  return prompts;
}

void predict(const PredictArgs& a, Run& run) {
  if (a.checkpoint.empty()) throw ValidationError("--checkpoint is required");
  if (a.input.empty()) throw ValidationError("--input is required");
  run.input(a.input);
  const auto prompts = read_prompts(a.input);
  std::string text;
  if (!prompts.empty()) {
    run.input(a.checkpoint);
    const MatcherModel model = load_checkpoint(a.checkpoint);
    const auto preds = predict_texts(model, prompts, parse_batch(a.batch_size));
    for (std::size_t i = 0; i < preds.size(); ++i)
      text += ordered_json{{"index", i}, {"label", to_int(preds[i].label)}, {"score", preds[i].score}}.dump() + "\n";
  }
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(a.out, text);
    run.output(a.out);
  }
}

struct EvalArgs {
  std::string checkpoint;
  std::string matcher;
  std::string datasets;
  std::string target;
  std::string pair_list;
  std::string out;
  std::uint64_t seed = 0;
  std::string batch_size = "64";
  double threshold = 0.5;
  bool strict = false;
};

void eval(const EvalArgs& a, Run& run) {
  if (a.target.empty()) throw ValidationError("--target is required");
  if (a.checkpoint.empty() == a.matcher.empty())
    throw ValidationError("give exactly one of --checkpoint or --matcher");
  std::unique_ptr<PairMatcher> matcher;
  if (!a.checkpoint.empty()) {
    run.input(a.checkpoint);
    auto model = std::make_shared<const MatcherModel>(load_checkpoint(a.checkpoint));
    matcher = std::make_unique<FineTunedMatcher>(model, parse_batch(a.batch_size));
    check_zero_shot(*matcher, a.target);
  } else if (a.matcher == "stringsim") {
    StringSimConfig sc;
    sc.threshold = a.threshold;
    matcher = std::make_unique<StringSimMatcher>(sc);
  } else {
    throw ValidationError("unknown matcher '" + a.matcher + "' (expected 'stringsim')");
  }
  const auto datasets = load_collection(a.datasets, a.strict, run);
  EvalConfig cfg;
  cfg.seed = a.seed;
  if (!a.pair_list.empty()) {
    run.input(a.pair_list);
    cfg.pair_list = read_pair_list(a.pair_list);
  }
  const EvalReport report = evaluate_zero_shot(datasets, a.target, *matcher, cfg);
  write_json(a.out, report.to_json(), run);
}

struct BaselineArgs {
  std::string datasets;
  std::vector<std::string> targets;
  std::string out;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  bool strict = false;
};

void baseline_stringsim(const BaselineArgs& a, Run& run) {
  const auto datasets = load_collection(a.datasets, a.strict, run);
  std::vector<std::string> targets = a.targets;
  if (targets.empty())
    for (const auto& d : datasets) targets.push_back(d.name);
  StringSimConfig sc;
  sc.threshold = a.threshold;
  const StringSimMatcher matcher(sc);
  EvalConfig cfg;
  cfg.seed = a.seed;
  std::vector<EvalReport> reports;
  for (const auto& t : targets) reports.push_back(evaluate_zero_shot(datasets, t, matcher, cfg));
  const SummaryTable summary = aggregate(reports);
  ordered_json j;
  j["reports"] = ordered_json::array();
  for (const auto& r : reports) j["reports"].push_back(r.to_json());
  j["summary"] = summary.to_json();
  if (!a.out.empty()) {
    write_file_atomic(a.out, j.dump(2) + "\n");
    run.output(a.out);
  }
  std::cout << summary.to_csv();
}

struct BenchArgs {
  std::string checkpoint;
  std::string base;
  std::string base_dir;
  bool allow_random_init = false;
  std::string datasets;
  std::size_t synthetic = 256;
  std::size_t batches = 100;
  std::size_t warmup = 3;
  std::size_t ceiling = 256;
  std::size_t gpus_used = 1;
  double machine_factor = 1.0;
  double hourly_price = 0.0;
  double extrapolation_factor = 2.0;
  std::string pricing_config;
  double memory_fraction = 0.5;
  std::size_t max_seq_len = 512;
  std::uint64_t seed = 0;
  std::string out;
};

std::vector<std::string> benchmark_prompts(const BenchArgs& a, const MatcherModel& model, Run& run,
                                           std::string& source) {
  if (a.datasets.empty()) {
    source = "synthetic";
    return synthetic_prompts(a.synthetic, 6, a.seed);
  }
  const auto datasets = load_collection(a.datasets, false, run);
  const PairDataset* largest = &datasets.front();
  for (const auto& d : datasets)
    if (d.train.size() + d.valid.size() + d.test.size() >
        largest->train.size() + largest->valid.size() + largest->test.size())
      largest = &d;
  source = largest->name;
  std::vector<std::string> prompts;
  for (const auto& p : largest->test)
    prompts.push_back(serialize_record_pair(p.left.values, p.right.values, model.variant(), largest->attributes));
  if (prompts.empty()) throw ValidationError(largest->name + ": empty test split");
  return prompts;
}

std::optional<double> hourly_price(double flag_price, const std::optional<PricingConfig>& pricing) {
  if (flag_price > 0.0) return flag_price;
  if (pricing && pricing->instance_hourly_price > 0.0) return pricing->instance_hourly_price;
  return std::nullopt;
}

ordered_json comparison_json(const std::string& name, const CostEstimate& est, const PricingConfig& pricing) {
  const SelfHostedEstimate self{name, est, pricing.instance_name.empty() ? "self-hosted" : pricing.instance_name};
  ordered_json rows = ordered_json::array();
  for (const auto& row : compare_pricing(std::span(&self, 1), pricing.api_prices))
    rows.push_back({{"name", row.name},
                    {"cost_per_1k_tokens", row.cost_per_1k_tokens},
                    {"display", format_dollars(row.cost_per_1k_tokens)},
                    {"scenario", row.scenario},
                    {"ratio_to_self_hosted", row.cost_per_1k_tokens / est.cost_per_1k_tokens}});
  return rows;
}

std::optional<PricingConfig> load_pricing(const std::string& path, Run& run) {
  if (path.empty()) return std::nullopt;
  run.input(path);
  return PricingConfig::load(path);
}

void bench_throughput(const BenchArgs& a, Run& run) {
  if (a.checkpoint.empty() == a.base.empty()) throw ValidationError("give exactly one of --checkpoint or --base");
  std::optional<MatcherModel> model;
  if (!a.checkpoint.empty()) {
    run.input(a.checkpoint);
    model.emplace(load_checkpoint(a.checkpoint));
  } else {
    ScaffoldOptions scaffold;
    if (!a.base_dir.empty()) {
      scaffold.pretrained_dir = a.base_dir;
      run.input(a.base_dir);
    }
    scaffold.allow_random_init = a.allow_random_init;
    scaffold.seed = a.seed;
    model.emplace(swap_base_model(a.base, scaffold));
  }
  model->max_sequence_length = std::min<std::size_t>(a.max_seq_len, model->spec().config.n_ctx);
  const auto pricing = load_pricing(a.pricing_config, run);

  std::string source;
  const auto prompts = tokenize_prompts(*model, benchmark_prompts(a, *model, run, source));
  const auto search = find_max_batch_size(make_batch_probe(*model, prompts, memory_budget(a.memory_fraction)),
                                          a.ceiling);
  ThroughputOptions opts;
  opts.model_id = model->spec().identifier;
  opts.n_batches = a.batches;
  opts.warmup_batches = a.warmup;
  opts.gpus_used = a.gpus_used;
  opts.extrapolation_factor = a.machine_factor;
  const ThroughputReport tp = measure_throughput(prompts, search.max_batch_size, make_batch_runner(*model), opts);
  if (tp.low_confidence) std::cerr << "warning: machine was busy during timing; result is low confidence\n";

  ordered_json j;
  j["prompt_source"] = source;
  j["prompts"] = prompts.size();
  ordered_json probes = ordered_json::array();
  for (const auto& [b, ok] : search.probes) probes.push_back({{"batch_size", b}, {"ok", ok}});
  j["batch_search"] = {{"max_batch_size", search.max_batch_size}, {"hit_ceiling", search.hit_ceiling},
                       {"probes", probes}};
  j["throughput"] = tp.to_json();
  if (const auto price = hourly_price(a.hourly_price, pricing)) {
    const CostEstimate est = estimate_cost(tp, *price, a.extrapolation_factor);
    j["cost"] = est.to_json();
    j["cost"]["display"] = format_dollars(est.cost_per_1k_tokens);
    if (pricing) j["comparison"] = comparison_json(opts.model_id, est, *pricing);
  }
  write_json(a.out, j, run);
}

struct CostArgs {
  double throughput = 0.0;
  double hourly_price = 0.0;
  double extrapolation_factor = 2.0;
  std::string pricing_config;
  std::string name = "self-hosted";
  std::string out;
};

void estimate_cost_cmd(const CostArgs& a, Run& run) {
  const auto pricing = load_pricing(a.pricing_config, run);
  const auto price = hourly_price(a.hourly_price, pricing);
  if (!price) throw ValidationError("--hourly-price is required (or a pricing config with an instance price)");
  CostEstimate est;
  try {
    est = estimate_cost(a.throughput, *price, a.extrapolation_factor);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  std::cout << format_dollars(est.cost_per_1k_tokens) << " per 1K tokens\n";
  ordered_json j = est.to_json();
  j["display"] = format_dollars(est.cost_per_1k_tokens);
  if (pricing) {
    j["comparison"] = comparison_json(a.name, est, *pricing);
    for (const auto& row : j["comparison"])
      std::cout << "  " << row["name"].get<std::string>() << "  " << row["display"].get<std::string>() << "  ("
                << row["scenario"].get<std::string>() << ")\n";
  }
  if (!a.out.empty()) {
    write_file_atomic(a.out, j.dump(2) + "\n");
    run.output(a.out);
  }
}

std::string manifest_next_to(const std::string& out, const std::string& command) {
  if (out.empty()) return command + ".run.json";
  if (fs::is_directory(out)) return (fs::path(out) / "run.json").string();
  return out + ".run.json";
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Zero-shot entity matching: corpus generation, fine-tuning, evaluation and cost benchmarking"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> commands;

  auto add = [&](const std::string& name, const std::string& help) -> Command& {
    auto c = std::make_unique<Command>();
    c->app = app.add_subcommand(name, help);
    c->settings = std::make_unique<Settings>(c->app);
    c->app->add_option("--config", c->config_path, "JSON config file or a previous run manifest");
    c->app->add_option("--manifest", c->manifest_path,
                       "Run manifest path (default: next to the output, or <command>.run.json)");
    commands.push_back(std::move(c));
    return *commands.back();
  };

  IngestArgs ingest_args;
  {
    auto& c = add("ingest", "Validate a dataset (or a directory of datasets) and print its statistics");
    auto& s = *c.settings;
    s.option("data", ingest_args.data, "Dataset directory or collection root");
    s.option("out", ingest_args.out, "Write the manifest JSON here instead of stdout");
    s.flag("strict", ingest_args.strict, "Reject unknown columns and pairs shared between splits");
    c.body = [&](Run& r) { ingest(ingest_args, r); };
    c.default_manifest = [&] { return manifest_next_to(ingest_args.out, "ingest"); };
  }

  GenCorpusArgs gen_args;
  {
    auto& c = add("gen-corpus", "Build a leave-one-out fine-tuning corpus for a target dataset");
    auto& s = *c.settings;
    s.option("datasets", gen_args.datasets, "Directory holding one subdirectory per dataset");
    s.option("target", gen_args.target, "Dataset to hold out");
    s.option("out", gen_args.out, "Corpus JSONL path (metadata goes to <out>.meta.json)");
    s.option("n-r", gen_args.n_r, "Record-level pairs kept per dataset before flipping");
    s.option("n-a", gen_args.n_a, "Attribute-level samples per attribute");
    s.option("seed", gen_args.seed, "Random seed");
    s.flag("no-automl", gen_args.no_automl, "Disable the difficulty filter");
    s.flag("no-flip", gen_args.no_flip, "Disable flipped record-level samples");
    s.option("attr-mode", gen_args.attr_mode, "Attribute-level samples: mix, sequential or off");
    s.option("variant", gen_args.variant, "Prompt layout tag, e.g. suffix,p,col or prefix,none,column-name");
    s.option("cache-dir", gen_args.cache_dir, "Cache directory for difficulty filter results");
    s.flag("strict", gen_args.strict, "Strict dataset loading");
    c.body = [&](Run& r) { gen_corpus(gen_args, r); };
    c.default_manifest = [&] { return manifest_next_to(gen_args.out, "gen-corpus"); };
  }

  TrainArgs train_args;
  {
    auto& c = add("train", "Fine-tune a base model on a corpus and save the best checkpoint");
    auto& s = *c.settings;
    s.option("corpus", train_args.corpus, "Corpus JSONL from gen-corpus");
    s.option("validation", train_args.validation, "Separate validation corpus (default: carved from --corpus)");
    s.option("out", train_args.out, "Checkpoint directory");
    s.option("base", train_args.base, "Base model identifier");
    s.option("base-dir", train_args.base_dir, "Directory with pretrained weights and tokenizer files");
    s.flag("allow-random-init", train_args.allow_random_init, "Allow a randomly initialized base");
    s.option("lr", train_args.lr, "Learning rate");
    s.option("weight-decay", train_args.weight_decay, "AdamW weight decay");
    s.option("max-epochs", train_args.max_epochs, "Maximum epochs per phase");
    s.option("patience", train_args.patience, "Epochs without improvement before stopping");
    s.option("epsilon", train_args.epsilon, "Minimum validation F1 gain counted as improvement");
    s.option("batch-size", train_args.batch_size, "Batch size or 'auto'");
    s.option("max-seq-len", train_args.max_seq_len, "Maximum tokens per prompt");
    s.option("seed", train_args.seed, "Random seed");
    s.option("validation-fraction", train_args.validation_fraction, "Share of the corpus held out for validation");
    s.option("max-grad-norm", train_args.max_grad_norm, "Gradient clipping norm");
    s.option("memory-fraction", train_args.memory_fraction, "Share of available memory for the auto batch size");
    c.body = [&](Run& r) { train(train_args, r); };
    c.default_manifest = [&] {
      return train_args.out.empty() ? std::string("train.run.json") : (fs::path(train_args.out) / "run.json").string();
    };
  }

  PredictArgs predict_args;
  {
    auto& c = add("predict", "Score serialized prompts (JSONL with a \"text\" field, or one prompt per line)");
    auto& s = *c.settings;
    s.option("checkpoint", predict_args.checkpoint, "Checkpoint directory");
    s.option("input", predict_args.input, "Prompt file");
    s.option("out", predict_args.out, "Predictions JSONL (default: stdout)");
    s.option("batch-size", predict_args.batch_size, "Inference batch size");
    c.body = [&](Run& r) { predict(predict_args, r); };
    c.default_manifest = [&] { return manifest_next_to(predict_args.out, "predict"); };
  }

  EvalArgs eval_args;
  {
    auto& c = add("eval", "Zero-shot evaluation on a held-out target dataset");
    auto& s = *c.settings;
    s.option("checkpoint", eval_args.checkpoint, "Checkpoint directory");
    s.option("matcher", eval_args.matcher, "Training-free matcher instead of a checkpoint: stringsim");
    s.option("datasets", eval_args.datasets, "Dataset collection root");
    s.option("target", eval_args.target, "Target dataset");
    s.option("pair-list", eval_args.pair_list, "Explicit test row indices");
    s.option("out", eval_args.out, "Report JSON (default: stdout)");
    s.option("seed", eval_args.seed, "Down-sampling seed");
    s.option("batch-size", eval_args.batch_size, "Inference batch size");
    s.option("threshold", eval_args.threshold, "StringSim decision threshold");
    s.flag("strict", eval_args.strict, "Strict dataset loading");
    c.body = [&](Run& r) { eval(eval_args, r); };
    c.default_manifest = [&] { return manifest_next_to(eval_args.out, "eval"); };
  }

  BenchArgs bench_args;
  {
    auto& c = add("bench-throughput", "Measure inference tokens per second at the largest fitting batch size");
    auto& s = *c.settings;
    s.option("checkpoint", bench_args.checkpoint, "Checkpoint directory");
    s.option("base", bench_args.base, "Base model identifier (untrained head)");
    s.option("base-dir", bench_args.base_dir, "Pretrained weights for --base");
    s.flag("allow-random-init", bench_args.allow_random_init, "Allow a randomly initialized base");
    s.option("datasets", bench_args.datasets, "Draw prompts from the largest dataset's test split");
    s.option("synthetic", bench_args.synthetic, "Number of synthetic prompts when no datasets are given");
    s.option("batches", bench_args.batches, "Timed batches");
    s.option("warmup", bench_args.warmup, "Untimed warmup batches");
    s.option("ceiling", bench_args.ceiling, "Largest batch size probed");
    s.option("gpus-used", bench_args.gpus_used, "Devices used for the measurement");
    s.option("machine-factor", bench_args.machine_factor, "Scale from the devices used to the whole benchmark machine");
    s.option("hourly-price", bench_args.hourly_price, "Instance price per hour");
    s.option("extrapolation-factor", bench_args.extrapolation_factor, "Benchmark machine to priced instance factor");
    s.option("pricing-config", bench_args.pricing_config, "Pricing table JSON");
    s.option("memory-fraction", bench_args.memory_fraction, "Share of available memory the batch may use");
    s.option("max-seq-len", bench_args.max_seq_len, "Maximum tokens per prompt");
    s.option("seed", bench_args.seed, "Seed for synthetic prompts and random initialization");
    s.option("out", bench_args.out, "Report JSON (default: stdout)");
    c.body = [&](Run& r) { bench_throughput(bench_args, r); };
    c.default_manifest = [&] { return manifest_next_to(bench_args.out, "bench-throughput"); };
  }

  CostArgs cost_args;
  {
    auto& c = add("estimate-cost", "Cost per 1K tokens from a measured throughput");
    auto& s = *c.settings;
    s.option("throughput", cost_args.throughput, "Tokens per second on the benchmark machine");
    s.option("hourly-price", cost_args.hourly_price, "Instance price per hour");
    s.option("extrapolation-factor", cost_args.extrapolation_factor, "Benchmark machine to priced instance factor");
    s.option("pricing-config", cost_args.pricing_config, "Pricing table JSON for the comparison");
    s.option("name", cost_args.name, "Label of the self-hosted row");
    s.option("out", cost_args.out, "Write the estimate JSON here");
    c.body = [&](Run& r) { estimate_cost_cmd(cost_args, r); };
    c.default_manifest = [&] { return manifest_next_to(cost_args.out, "estimate-cost"); };
  }

  BaselineArgs baseline_args;
  {
    auto& c = add("baseline-stringsim", "Evaluate the string similarity baseline and print the summary row");
    auto& s = *c.settings;
    s.option("datasets", baseline_args.datasets, "Dataset collection root");
    s.option("target", baseline_args.targets, "Target dataset (repeatable; default: all)");
    s.option("out", baseline_args.out, "Reports JSON");
    s.option("seed", baseline_args.seed, "Down-sampling seed");
    s.option("threshold", baseline_args.threshold, "Decision threshold");
    s.flag("strict", baseline_args.strict, "Strict dataset loading");
    c.body = [&](Run& r) { baseline_stringsim(baseline_args, r); };
    c.default_manifest = [&] { return manifest_next_to(baseline_args.out, "baseline-stringsim"); };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  Command* cmd = nullptr;
  for (auto& c : commands)
    if (c->app->parsed()) cmd = c.get();

  Run run;
  run.command = cmd->app->get_name();
  const auto start = std::chrono::steady_clock::now();
  int status = kExitOk;
  std::string error;
  try {
    cmd->settings->apply(load_config(cmd->config_path, run.command));
    if (!cmd->config_path.empty()) run.input(cmd->config_path);
    cmd->body(run);
  } catch (const ValidationError& e) {
    status = kExitValidation, error = e.what();
  } catch (const LoadError& e) {
    status = kExitValidation, error = e.what();
  } catch (const ZeroShotViolation& e) {
    status = kExitValidation, error = e.what();
  } catch (const std::invalid_argument& e) {
    status = kExitValidation, error = e.what();
  } catch (const json::exception& e) {
    status = kExitValidation, error = e.what();
  } catch (const ResourceError& e) {
    status = kExitRuntime, error = e.what();
  } catch (const std::bad_alloc&) {
    status = kExitRuntime, error = "out of memory";
  } catch (const std::exception& e) {
    status = kExitRuntime, error = e.what();
  }
  if (!error.empty()) std::cerr << "error: " << error << "\n";

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const std::string manifest = cmd->manifest_path.empty() ? cmd->default_manifest() : cmd->manifest_path;
  try {
    write_manifest(manifest, run, cmd->settings->effective(), seconds, status, error);
  } catch (const std::exception& e) {
    std::cerr << "error: could not write run manifest " << manifest << ": " << e.what() << "\n";
    if (status == kExitOk) status = kExitRuntime;
  }
  return status;
}

}  // namespace zeroem::cli

int main(int argc, char** argv) { return zeroem::cli::run_cli(argc, argv); }
