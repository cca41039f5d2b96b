#include "zeroem/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <new>
#include <sstream>

#include "zeroem/nn/adamw.hpp"
#include "zeroem/nn/weights.hpp"
#include "zeroem/evaluation.hpp"
#include "zeroem/rng.hpp"
#include "zeroem/util.hpp"

namespace zeroem {

namespace {

using nn::Family;

struct Preset {
  const char* name;
  const char* alias;
  Family family;
  int n_layer;
  int n_dec_layer;
  int n_embd;
  int n_head;
  int vocab;
  int n_ctx;
  double dropout;
  const char* tokenizer;
  bool pretrained;
  const char* description;
};

constexpr Preset kPresets[] = {
    {"gpt2", "decoder-only-base", Family::kDecoderOnly, 12, 0, 768, 12, 50257, 1024, 0.1, "gpt2-bpe", true,
     "decoder-only, 124M parameters"},
    {"encoder-only-base", "bert-base", Family::kEncoderOnly, 12, 0, 768, 12, 50257, 512, 0.1, "gpt2-bpe", true,
     "encoder-only, pooled first-token head"},
    {"encoder-decoder-base", "t5-base", Family::kEncoderDecoder, 12, 12, 768, 12, 50257, 512, 0.1, "gpt2-bpe", true,
     "encoder-decoder, decoder query head"},
    {"decoder-only-compact", "gpt2-compact", Family::kDecoderOnly, 2, 0, 32, 2, 258, 512, 0.0, "byte", false,
     "small byte-level decoder-only model"},
    {"encoder-only-compact", nullptr, Family::kEncoderOnly, 2, 0, 32, 2, 258, 512, 0.0, "byte", false,
     "small byte-level encoder-only model"},
    {"encoder-decoder-compact", nullptr, Family::kEncoderDecoder, 2, 1, 32, 2, 258, 512, 0.0, "byte", false,
     "small byte-level encoder-decoder model"},
};

bool optional_in_base(const std::string& name) {
  return name == "score.weight" || name.starts_with("pooler.") || name.starts_with("dec");
}

float positive_score(const nn::RowVector<float>& logits) {
  return static_cast<float>(MatcherModel::match_score(logits(0), logits(1)));
}

MatchPrediction to_prediction(const nn::RowVector<float>& logits) {
  MatchPrediction p;
  p.score = MatcherModel::match_score(logits(0), logits(1));
  p.label = label_from_bool(p.score >= 0.5);
  return p;
}

nlohmann::json number_or_string(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double read_number(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw ValidationError(std::string("bad number for '") + key + "'");
  }
  return v.get<double>();
}

struct EncodedSet {
  std::vector<std::vector<TokenId>> tokens;
  std::vector<int> labels;
};

EncodedSet encode_samples(const MatcherModel& model, const std::vector<const SerializedSample*>& samples,
                          std::size_t max_length, const char* what) {
  EncodedSet out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      out.tokens.push_back(model.encode_prompt(samples[i]->text, max_length));
    } catch (const ValidationError& e) {
      throw ValidationError(std::string(what) + " sample " + std::to_string(i) + ": " + e.what());
    }
    out.labels.push_back(to_int(samples[i]->label));
  }
  return out;
}

double validation_f1(const MatcherModel& model, const EncodedSet& set) {
  ConfusionCounts c;
  for (std::size_t i = 0; i < set.tokens.size(); ++i) {
    const auto pred = to_prediction(model.network().forward(set.tokens[i]));
    const bool p = pred.label == Label::kMatch;
    const bool y = set.labels[i] == 1;
    if (p && y) ++c.tp;
    else if (p && !y) ++c.fp;
    else if (!p && y) ++c.fn;
    else ++c.tn;
  }
  return f1_from_confusion(c).f1;
}

std::vector<nn::Matrix<float>> snapshot(const nn::TransformerClassifier<float>& net) {
  std::vector<nn::Matrix<float>> out;
  for (const auto& p : net.parameters()) out.push_back(p.value);
  return out;
}

void restore(nn::TransformerClassifier<float>& net, const std::vector<nn::Matrix<float>>& values) {
  auto& params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = values[i];
}

struct PhaseOutcome {
  int best_epoch = 0;
  double best_f1 = -1.0;
};

PhaseOutcome run_phase(MatcherModel& model, int phase, const EncodedSet& train, const EncodedSet& valid,
                       const TrainConfig& config, std::size_t batch_size, Rng& rng, const EpochCallback& on_epoch) {
  auto& net = model.network();
  nn::AdamW<float> optimizer(net.parameters(), {config.learning_rate, config.weight_decay});
  std::vector<std::size_t> order(train.tokens.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  PhaseOutcome outcome;
  std::vector<nn::Matrix<float>> best_weights;
  double reference = 0.0;
  int since_improvement = 0;
  nn::TransformerClassifier<float>::Cache cache;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      const auto scale = 1.0f / static_cast<float>(end - start);
      net.zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const auto logits = net.forward(train.tokens[i], &cache, &rng);
        const double p1 = MatcherModel::match_score(logits(0), logits(1));
        const double py = train.labels[i] == 1 ? p1 : 1.0 - p1;
        loss_sum -= std::log(std::max(py, 1e-12));
        nn::RowVector<float> dlogits(2);
        dlogits(0) = static_cast<float>((1.0 - p1) - (train.labels[i] == 0 ? 1.0 : 0.0)) * scale;
        dlogits(1) = static_cast<float>(p1 - (train.labels[i] == 1 ? 1.0 : 0.0)) * scale;
        net.backward(cache, dlogits);
      }
      nn::clip_grad_norm(net.parameters(), config.max_grad_norm);
      optimizer.step(net.parameters());
    }

    EpochRecord record;
    record.phase = phase;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(order.size());
    record.validation_f1 = validation_f1(model, valid);
    record.improved = epoch == 1 || record.validation_f1 > reference + config.improvement_epsilon;
    if (record.improved) {
      reference = record.validation_f1;
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    if (record.validation_f1 > outcome.best_f1) {
      outcome.best_f1 = record.validation_f1;
      outcome.best_epoch = epoch;
      best_weights = snapshot(net);
    }
    model.history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    if (since_improvement >= config.patience) break;
  }
  restore(net, best_weights);
  return outcome;
}

std::vector<const SerializedSample*> select_phase(const FineTuneCorpus& c, int phase) {
  std::vector<const SerializedSample*> out;
  for (const auto& s : c.samples)
    if (s.phase == phase) out.push_back(&s);
  return out;
}

std::vector<const SerializedSample*> all_samples(const FineTuneCorpus& c) {
  std::vector<const SerializedSample*> out;
  for (const auto& s : c.samples) out.push_back(&s);
  return out;
}

}  // namespace

ModelSpec resolve_model(std::string_view identifier) {
  const std::string id = to_lower(trim(identifier));
  for (const auto& p : kPresets) {
    if (id == p.name || (p.alias && id == p.alias)) {
      ModelSpec spec;
      spec.identifier = p.name;
      spec.config.family = p.family;
      spec.config.n_layer = p.n_layer;
      spec.config.n_dec_layer = p.n_dec_layer;
      spec.config.n_embd = p.n_embd;
      spec.config.n_head = p.n_head;
      spec.config.vocab_size = p.vocab;
      spec.config.n_ctx = p.n_ctx;
      spec.config.dropout = p.dropout;
      spec.tokenizer_kind = p.tokenizer;
      spec.requires_pretrained = p.pretrained;
      spec.description = p.description;
      return spec;
    }
  }
  std::string known;
  for (const auto& name : known_models()) known += (known.empty() ? "" : ", ") + name;
  throw ValidationError("unsupported base model '" + std::string(identifier) + "' (known: " + known + ")");
}

std::vector<std::string> known_models() {
  std::vector<std::string> out;
  for (const auto& p : kPresets) out.emplace_back(p.name);
  return out;
}

void TrainConfig::validate(const nn::TransformerConfig& model) const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (weight_decay < 0.0) throw ValidationError("weight_decay must be non-negative");
  if (max_epochs < 1) throw ValidationError("max_epochs must be at least 1");
  if (patience < 1 || patience >= max_epochs) throw ValidationError("patience must lie in [1, max_epochs)");
  if (std::isnan(improvement_epsilon) || improvement_epsilon < 0.0)
    throw ValidationError("improvement_epsilon must be non-negative");
  if (batch_size && *batch_size == 0) throw ValidationError("batch_size must be positive");
  if (max_sequence_length < 8) throw ValidationError("max_sequence_length must be at least 8");
  if (max_sequence_length > static_cast<std::size_t>(model.n_ctx))
    throw ValidationError("max_sequence_length " + std::to_string(max_sequence_length) +
                          " exceeds the base model context window of " + std::to_string(model.n_ctx));
  if (!(memory_fraction > 0.0 && memory_fraction <= 1.0)) throw ValidationError("memory_fraction must lie in (0, 1]");
  if (max_auto_batch_size == 0) throw ValidationError("max_auto_batch_size must be positive");
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j{{"learning_rate", learning_rate},
                           {"weight_decay", weight_decay},
                           {"max_epochs", max_epochs},
                           {"patience", patience},
                           {"improvement_epsilon", number_or_string(improvement_epsilon)}};
  j["batch_size"] = batch_size ? nlohmann::ordered_json(*batch_size) : nlohmann::ordered_json("auto");
  j["max_sequence_length"] = max_sequence_length;
  j["seed"] = seed;
  j["max_grad_norm"] = max_grad_norm;
  j["memory_fraction"] = memory_fraction;
  j["max_auto_batch_size"] = max_auto_batch_size;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = read_number(j, "learning_rate", c.learning_rate);
  c.weight_decay = read_number(j, "weight_decay", c.weight_decay);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.improvement_epsilon = read_number(j, "improvement_epsilon", c.improvement_epsilon);
  if (j.contains("batch_size")) {
    const auto& b = j.at("batch_size");
    if (b.is_string()) {
      if (b.get<std::string>() != "auto") throw ValidationError("batch_size must be a positive integer or \"auto\"");
      c.batch_size = std::nullopt;
    } else {
      c.batch_size = b.get<std::size_t>();
    }
  }
  c.max_sequence_length = j.value("max_sequence_length", c.max_sequence_length);
  c.seed = j.value("seed", c.seed);
  c.max_grad_norm = read_number(j, "max_grad_norm", c.max_grad_norm);
  c.memory_fraction = read_number(j, "memory_fraction", c.memory_fraction);
  c.max_auto_batch_size = j.value("max_auto_batch_size", c.max_auto_batch_size);
  return c;
}

std::vector<double> TrainingHistory::curve(int phase, bool loss) const {
  std::vector<double> out;
  for (const auto& e : epochs)
    if (e.phase == phase) out.push_back(loss ? e.train_loss : e.validation_f1);
  return out;
}

nlohmann::ordered_json TrainingHistory::to_json() const {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& e : epochs) {
    rows.push_back({{"phase", e.phase},
                    {"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"validation_f1", e.validation_f1},
                    {"improved", e.improved}});
  }
  return {{"best_epoch", best_epoch},
          {"best_validation_f1", best_validation_f1},
          {"phase1_best_epoch", phase1_best_epoch},
          {"batch_size", batch_size},
          {"validation_f1_curve", curve(2, false)},
          {"train_loss_curve", curve(2, true)},
          {"epochs", rows}};
}

TrainingHistory TrainingHistory::from_json(const nlohmann::json& j) {
  TrainingHistory h;
  h.best_epoch = j.value("best_epoch", 0);
  h.best_validation_f1 = j.value("best_validation_f1", 0.0);
  h.phase1_best_epoch = j.value("phase1_best_epoch", 0);
  h.batch_size = j.value("batch_size", std::size_t{0});
  for (const auto& e : j.value("epochs", nlohmann::json::array())) {
    h.epochs.push_back({e.at("phase").get<int>(), e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                        e.at("validation_f1").get<double>(), e.at("improved").get<bool>()});
  }
  return h;
}

MatcherModel::MatcherModel(ModelSpec spec, std::unique_ptr<Tokenizer> tokenizer, SerializationVariant variant)
    : spec_(std::move(spec)), tokenizer_(std::move(tokenizer)), variant_(variant), network_(spec_.config) {
  if (!tokenizer_) throw std::invalid_argument("matcher needs a tokenizer");
  if (tokenizer_->vocab_size() > spec_.config.vocab_size)
    throw ValidationError("tokenizer vocabulary (" + std::to_string(tokenizer_->vocab_size()) +
                          ") is larger than the model's embedding table (" + std::to_string(spec_.config.vocab_size) + ")");
  max_sequence_length = std::min<std::size_t>(512, static_cast<std::size_t>(spec_.config.n_ctx));
}

std::string MatcherModel::head_input() const {
  switch (spec_.config.family) {
    case Family::kDecoderOnly: return "last-token";
    case Family::kEncoderOnly: return "pooled-first-token";
    case Family::kEncoderDecoder: return "decoder-query";
  }
  return "last-token";
}

double MatcherModel::match_score(float logit_nonmatch, float logit_match) {
  return 1.0 / (1.0 + std::exp(static_cast<double>(logit_nonmatch) - static_cast<double>(logit_match)));
}

std::vector<TokenId> MatcherModel::encode_prompt(std::string_view prompt, std::size_t max_length) const {
  const bool with_cls = spec_.config.family == Family::kEncoderOnly;
  const std::size_t reserve = with_cls ? 1 : 0;
  if (max_length <= reserve) throw ValidationError("maximum sequence length too small");
  const std::size_t limit = max_length - reserve;
  auto finish = [&](std::vector<TokenId> ids) {
    if (with_cls) ids.insert(ids.begin(), tokenizer_->cls_id());
    return ids;
  };

  std::vector<TokenId> ids = tokenizer_->encode(prompt);
  if (ids.empty()) throw ValidationError("prompt is empty");
  if (ids.size() <= limit) return finish(std::move(ids));

  auto payload = parse_prompt(prompt, variant_);
  if (!payload)
    throw ValidationError("prompt of " + std::to_string(ids.size()) + " tokens exceeds " + std::to_string(limit) +
                          " and does not have a layout that can be shortened");
  const std::size_t n_left = payload->left.size();
  std::vector<std::vector<TokenId>> values;
  for (const auto& v : payload->left) values.push_back(tokenizer_->encode(v));
  for (const auto& v : payload->right) values.push_back(tokenizer_->encode(v));

  for (;;) {
    std::size_t deficit = ids.size() - limit;
    while (deficit > 0) {
      std::size_t longest = 0;
      for (std::size_t k = 1; k < values.size(); ++k)
        if (values[k].size() > values[longest].size()) longest = k;
      if (values[longest].empty()) break;
      values[longest].pop_back();
      --deficit;
    }
    for (std::size_t k = 0; k < values.size(); ++k) {
      auto& slot = k < n_left ? payload->left[k] : payload->right[k - n_left];
      slot = trim(tokenizer_->decode(values[k]));
    }
    ids = tokenizer_->encode(render_prompt(*payload, variant_));
    if (ids.size() <= limit) return finish(std::move(ids));
    const bool exhausted = std::all_of(values.begin(), values.end(), [](const auto& v) { return v.empty(); });
    if (exhausted)
      throw ValidationError("prompt needs " + std::to_string(ids.size()) + " tokens even with every value removed; limit is " +
                            std::to_string(limit));
  }
}

MatcherModel swap_base_model(std::string_view identifier, const ScaffoldOptions& options) {
  ModelSpec spec = resolve_model(identifier);
  std::unique_ptr<Tokenizer> tokenizer;
  if (spec.tokenizer_kind == "byte") {
    tokenizer = std::make_unique<ByteTokenizer>();
  } else if (options.pretrained_dir) {
    tokenizer = make_tokenizer(spec.tokenizer_kind, *options.pretrained_dir);
  } else {
    throw LoadError("base model '" + spec.identifier + "' needs its tokenizer files (vocab.json, merges.txt); "
                    "point the pretrained directory at a converted checkpoint (tools/convert_hf_gpt2.py)");
  }
  if (spec.requires_pretrained && !options.pretrained_dir && !options.allow_random_init) {
    throw LoadError("base model '" + spec.identifier + "' needs pretrained weights; "
                    "convert them with tools/convert_hf_gpt2.py and pass the output directory");
  }

  MatcherModel model(spec, std::move(tokenizer), options.variant);
  Rng rng(options.seed);
  model.network().init(rng);
  if (options.pretrained_dir) {
    const auto weights_path = *options.pretrained_dir / "weights.bin";
    if (!std::filesystem::exists(weights_path)) {
      if (spec.requires_pretrained && !options.allow_random_init)
        throw LoadError("no weights.bin in " + options.pretrained_dir->string());
    } else {
      std::vector<std::string> missing;
      try {
        missing = nn::import_weights(model.network().parameters(), nn::read_weights_file(weights_path));
      } catch (const std::invalid_argument& e) {
        throw LoadError(weights_path.string() + ": " + e.what());
      }
      for (const auto& name : missing)
        if (!optional_in_base(name)) throw LoadError(weights_path.string() + ": tensor '" + name + "' is missing");
    }
  }
  return model;
}

std::size_t estimate_memory_bytes(const nn::TransformerConfig& c, std::size_t length, std::size_t batch_size,
                                  bool training) {
  const std::size_t params = nn::parameter_count(c);
  const std::size_t d = static_cast<std::size_t>(c.n_embd);
  const std::size_t layers = static_cast<std::size_t>(c.n_layer + c.n_dec_layer);
  const std::size_t heads = static_cast<std::size_t>(c.n_head);
  std::size_t per_sequence;
  if (training) {
    per_sequence = length * d * (2 + 20 * layers) + 2 * layers * heads * length * length;
  } else {
    per_sequence = length * d * 12 + heads * length * length;
  }
  return 4 * (params * (training ? 4 : 1) + batch_size * per_sequence);
}

std::optional<std::size_t> available_memory_bytes() {
  std::ifstream in("/proc/meminfo");
  std::string key;
  std::size_t value = 0;
  std::string unit;
  while (in >> key >> value >> unit) {
    if (key == "MemAvailable:") return value * 1024;
  }
  return std::nullopt;
}

std::size_t auto_batch_size(const nn::TransformerConfig& config, std::size_t length, std::size_t budget_bytes,
                            std::size_t cap, bool training) {
  if (estimate_memory_bytes(config, length, 1, training) > budget_bytes)
    throw ResourceError("model does not fit the memory budget at batch size 1");
  std::size_t b = 1;
  while (b * 2 <= cap && estimate_memory_bytes(config, length, b * 2, training) <= budget_bytes) b *= 2;
  return b;
}

void finetune(MatcherModel& model, const FineTuneCorpus& train, const FineTuneCorpus& validation,
              const TrainConfig& config, const EpochCallback& on_epoch) {
  if (train.samples.empty()) throw ValidationError("training corpus is empty");
  if (validation.samples.empty()) throw ValidationError("validation split is missing or empty");
  config.validate(model.spec().config);
  model.max_sequence_length = config.max_sequence_length;

  std::size_t batch_size;
  if (config.batch_size) {
    batch_size = *config.batch_size;
  } else {
    const std::size_t budget = static_cast<std::size_t>(
        config.memory_fraction * static_cast<double>(available_memory_bytes().value_or(std::size_t{1} << 30)));
    batch_size = auto_batch_size(model.spec().config, config.max_sequence_length, budget, config.max_auto_batch_size, true);
  }
  model.history = {};
  model.history.batch_size = batch_size;
  Rng rng(config.seed);

  const bool sequential = train.has_phase(1);
  if (sequential) {
    auto valid1 = select_phase(validation, 1);
    if (valid1.empty()) valid1 = all_samples(validation);
    const auto t1 = encode_samples(model, select_phase(train, 1), config.max_sequence_length, "training");
    const auto v1 = encode_samples(model, valid1, config.max_sequence_length, "validation");
    const auto outcome = run_phase(model, 1, t1, v1, config, batch_size, rng, on_epoch);
    model.history.phase1_best_epoch = outcome.best_epoch;
  }
  auto train2 = select_phase(train, 2);
  if (!train2.empty()) {
    auto valid2 = select_phase(validation, 2);
    if (valid2.empty()) valid2 = all_samples(validation);
    const auto t2 = encode_samples(model, train2, config.max_sequence_length, "training");
    const auto v2 = encode_samples(model, valid2, config.max_sequence_length, "validation");
    const auto outcome = run_phase(model, 2, t2, v2, config, batch_size, rng, on_epoch);
    model.history.best_epoch = outcome.best_epoch;
    model.history.best_validation_f1 = outcome.best_f1;
  } else {
    model.history.best_epoch = model.history.phase1_best_epoch;
    const auto f1 = model.history.curve(1, false);
    model.history.best_validation_f1 = f1.empty() ? 0.0 : *std::max_element(f1.begin(), f1.end());
  }
  model.train_config = config;
  CorpusProvenance provenance;
  provenance.excluded_target = train.excluded_target;
  provenance.sources = train.sources;
  provenance.corpus_hash = train.hash();
  model.provenance = provenance;
}

std::vector<MatchPrediction> predict_texts(const MatcherModel& model, const std::vector<std::string>& prompts,
                                           std::optional<std::size_t> batch_size) {
  std::vector<MatchPrediction> out;
  out.reserve(prompts.size());
  const std::size_t b = batch_size.value_or(64);
  if (b == 0) throw ValidationError("batch size must be positive");
  for (std::size_t start = 0; start < prompts.size(); start += b) {
    const std::size_t end = std::min(prompts.size(), start + b);
    std::vector<std::vector<TokenId>> batch;
    for (std::size_t i = start; i < end; ++i) {
      try {
        batch.push_back(model.encode_prompt(prompts[i], model.max_sequence_length));
      } catch (const ValidationError& e) {
        throw ValidationError("pair " + std::to_string(i) + ": " + e.what());
      }
    }
    for (const auto& ids : batch) out.push_back(to_prediction(model.network().forward(ids)));
  }
  return out;
}

std::vector<MatchPrediction> predict_pairs(const MatcherModel& model, std::span<const LabeledPair> pairs,
                                           std::span<const AttributeName> schema,
                                           std::optional<std::size_t> batch_size) {
  std::vector<std::string> prompts;
  prompts.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    try {
      prompts.push_back(serialize_record_pair(pairs[i].left.values, pairs[i].right.values, model.variant(), schema));
    } catch (const std::invalid_argument& e) {
      throw ValidationError("pair " + std::to_string(i) + ": " + e.what());
    }
  }
  return predict_texts(model, prompts, batch_size);
}

std::vector<std::array<float, 2>> padded_batch_logits(const MatcherModel& model,
                                                      const std::vector<std::vector<TokenId>>& batch,
                                                      std::size_t extra_padding) {
  std::size_t longest = 0;
  for (const auto& row : batch) longest = std::max(longest, row.size());
  const std::size_t width = longest + extra_padding;
  std::vector<std::array<float, 2>> out;
  for (const auto& row : batch) {
    std::vector<TokenId> padded = row;
    padded.resize(width, model.tokenizer().pad_id());
    const auto logits = model.network().forward(padded, nullptr, nullptr, row.size());
    out.push_back({logits(0), logits(1)});
  }
  return out;
}

void save_checkpoint(const MatcherModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nn::write_weights_file(dir / "weights.bin", nn::export_weights(model.network().parameters()));
  model.tokenizer().save(dir);
  nlohmann::ordered_json config{{"identifier", model.spec().identifier},
                                {"model", model.spec().config.to_json()},
                                {"tokenizer", model.spec().tokenizer_kind},
                                {"requires_pretrained", model.spec().requires_pretrained},
                                {"variant", model.variant().tag()},
                                {"max_sequence_length", model.max_sequence_length},
                                {"parameter_count", model.parameter_count()},
                                {"head_input", model.head_input()}};
  write_file_atomic(dir / "config.json", config.dump(2) + "\n");
  nlohmann::ordered_json provenance = model.provenance ? model.provenance->to_json() : nlohmann::ordered_json::object();
  provenance["train_config"] = model.train_config ? nlohmann::ordered_json(model.train_config->to_json())
                                                  : nlohmann::ordered_json(nullptr);
  const auto history = model.history.to_json();
  for (auto it = history.begin(); it != history.end(); ++it) provenance[it.key()] = it.value();
  write_file_atomic(dir / "provenance.json", provenance.dump(2) + "\n");
}

MatcherModel load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::json config, provenance;
  try {
    config = nlohmann::json::parse(read_file(dir / "config.json"));
    provenance = nlohmann::json::parse(read_file(dir / "provenance.json"));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(dir.string() + ": " + e.what());
  }
  ModelSpec spec;
  try {
    spec.identifier = config.at("identifier").get<std::string>();
    spec.config = nn::TransformerConfig::from_json(config.at("model"));
    spec.tokenizer_kind = config.at("tokenizer").get<std::string>();
    spec.requires_pretrained = config.value("requires_pretrained", false);
  } catch (const std::exception& e) {
    throw LoadError((dir / "config.json").string() + ": " + e.what());
  }
  MatcherModel model(spec, load_tokenizer(dir), SerializationVariant::parse(config.value("variant", std::string("suffix,p"))));
  model.max_sequence_length = config.value("max_sequence_length", model.max_sequence_length);
  try {
    const auto missing = nn::import_weights(model.network().parameters(), nn::read_weights_file(dir / "weights.bin"));
    if (!missing.empty()) throw LoadError((dir / "weights.bin").string() + ": tensor '" + missing.front() + "' is missing");
  } catch (const std::invalid_argument& e) {
    throw LoadError((dir / "weights.bin").string() + ": " + e.what());
  }
  if (provenance.contains("excluded_target")) model.provenance = CorpusProvenance::from_json(provenance);
  if (provenance.contains("train_config") && !provenance.at("train_config").is_null())
    model.train_config = TrainConfig::from_json(provenance.at("train_config"));
  model.history = TrainingHistory::from_json(provenance);
  return model;
}

std::string FineTunedMatcher::id() const { return "zeroem:" + model_->spec().identifier; }

std::vector<MatchPrediction> FineTunedMatcher::predict(std::span<const LabeledPair> pairs,
                                                       std::span<const AttributeName> schema) const {
  return predict_pairs(*model_, pairs, schema, batch_size_);
}

std::vector<TokenizedPrompt> tokenize_prompts(const MatcherModel& model, const std::vector<std::string>& prompts) {
  std::vector<TokenizedPrompt> out;
  out.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    try {
      out.push_back(model.encode_prompt(prompts[i], model.max_sequence_length));
    } catch (const ValidationError& e) {
      throw ValidationError("prompt " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

BatchProbe make_batch_probe(const MatcherModel& model, std::span<const TokenizedPrompt> prompts,
                            std::size_t budget_bytes, std::size_t execute_up_to) {
  std::size_t longest = 1;
  for (const auto& p : prompts) longest = std::max(longest, p.size());
  return [&model, prompts, budget_bytes, execute_up_to, longest](std::size_t batch) {
    if (estimate_memory_bytes(model.spec().config, longest, batch, false) > budget_bytes) return false;
    if (batch > execute_up_to || prompts.empty()) return true;
    try {
      for (std::size_t i = 0; i < batch; ++i) model.network().forward(prompts[i % prompts.size()]);
    } catch (const std::bad_alloc&) {
      return false;
    }
    return true;
  };
}

BatchRunner make_batch_runner(const MatcherModel& model) {
  return [&model](std::span<const TokenizedPrompt> batch) {
    float sink = 0.0f;
    for (const auto& ids : batch) sink += positive_score(model.network().forward(ids));
    if (std::isnan(sink)) throw ResourceError("forward pass produced NaN");
  };
}

}  // namespace zeroem
