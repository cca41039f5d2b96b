#include "zeroem/perfbench_cost.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "zeroem/core_model.hpp"
#include "zeroem/rng.hpp"
#include "zeroem/serializer.hpp"
#include "zeroem/util.hpp"

namespace zeroem {

BatchSearchResult find_max_batch_size(const BatchProbe& probe, std::size_t ceiling) {
  if (ceiling == 0) throw std::invalid_argument("batch size ceiling must be positive");
  BatchSearchResult result;
  std::size_t batch = 1;
  for (;;) {
    const bool ok = probe(batch);
    result.probes.emplace_back(batch, ok);
    if (!ok) {
      if (batch == 1) throw ResourceError("model does not fit: batch size 1 failed");
      return result;
    }
    result.max_batch_size = batch;
    if (batch * 2 > ceiling) {
      result.hit_ceiling = true;
      return result;
    }
    batch *= 2;
  }
}

nlohmann::ordered_json ThroughputReport::to_json() const {
  nlohmann::ordered_json j{{"model_id", model_id},
                           {"max_batch_size", max_batch_size},
                           {"tokens_per_second", tokens_per_second},
                           {"machine_tokens_per_second", machine_tokens_per_second()},
                           {"batches_timed", batches_timed},
                           {"gpus_used", gpus_used},
                           {"extrapolation_factor", extrapolation_factor},
                           {"total_tokens", total_tokens},
                           {"elapsed_seconds", elapsed_seconds},
                           {"low_confidence", low_confidence},
                           {"batch_seconds", batch_seconds},
                           {"batch_tokens", batch_tokens}};
  j["load_average"] = load_average ? nlohmann::ordered_json(*load_average) : nlohmann::ordered_json(nullptr);
  return j;
}

std::optional<double> read_load_average() {
  std::ifstream in("/proc/loadavg");
  double load = 0.0;
  if (in >> load) return load;
  return std::nullopt;
}

ThroughputReport measure_throughput(std::span<const TokenizedPrompt> prompts, std::size_t batch_size,
                                    const BatchRunner& run_batch, const ThroughputOptions& options) {
  if (prompts.empty()) throw std::invalid_argument("throughput benchmark needs at least one prompt");
  if (batch_size == 0 || options.n_batches == 0) throw std::invalid_argument("batch size and batch count must be positive");

  std::function<double()> clock = options.clock;
  if (!clock) {
    clock = [] { return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count(); };
  }

  std::size_t cursor = 0;
  std::vector<TokenizedPrompt> batch(batch_size);
  auto fill = [&]() -> std::uint64_t {
    std::uint64_t tokens = 0;
    for (auto& slot : batch) {
      slot = prompts[cursor];
      tokens += slot.size();
      cursor = (cursor + 1) % prompts.size();
    }
    return tokens;
  };

  ThroughputReport report;
  report.model_id = options.model_id;
  report.max_batch_size = batch_size;
  report.gpus_used = options.gpus_used;
  report.extrapolation_factor = options.extrapolation_factor;
  report.load_average = read_load_average();

  for (std::size_t i = 0; i < options.warmup_batches; ++i) {
    fill();
    run_batch(batch);
  }
  for (std::size_t i = 0; i < options.n_batches; ++i) {
    const std::uint64_t tokens = fill();
    const double start = clock();
    run_batch(batch);
    const double stop = clock();
    report.batch_seconds.push_back(stop - start);
    report.batch_tokens.push_back(tokens);
    report.total_tokens += tokens;
    report.elapsed_seconds += stop - start;
  }
  if (!(report.elapsed_seconds > 0.0))
    throw ResourceError("timing anomaly: measured zero elapsed time over " + std::to_string(options.n_batches) + " batches");
  report.batches_timed = options.n_batches;
  report.tokens_per_second = static_cast<double>(report.total_tokens) / report.elapsed_seconds;
  report.low_confidence = options.n_batches < 2;
  return report;
}

nlohmann::ordered_json CostEstimate::to_json() const {
  return {{"hourly_price", hourly_price},
          {"tokens_per_second", tokens_per_second},
          {"extrapolation_factor", extrapolation_factor},
          {"cost_per_1k_tokens", cost_per_1k_tokens},
          {"display", format_dollars(cost_per_1k_tokens)}};
}

CostEstimate estimate_cost(double tokens_per_second, double hourly_price, double extrapolation_factor) {
  if (!(tokens_per_second > 0.0)) throw std::invalid_argument("throughput must be positive");
  if (!(hourly_price > 0.0)) throw std::invalid_argument("hourly price must be positive");
  if (!(extrapolation_factor > 0.0)) throw std::invalid_argument("extrapolation factor must be positive");
  CostEstimate c;
  c.hourly_price = hourly_price;
  c.tokens_per_second = tokens_per_second;
  c.extrapolation_factor = extrapolation_factor;
  c.cost_per_1k_tokens = hourly_price / (extrapolation_factor * tokens_per_second * 3600.0) * 1000.0;
  return c;
}

CostEstimate estimate_cost(const ThroughputReport& throughput, double hourly_price, double extrapolation_factor) {
  return estimate_cost(throughput.machine_tokens_per_second(), hourly_price, extrapolation_factor);
}

std::string format_dollars(double amount) {
  if (!std::isfinite(amount)) return "$nan";
  if (amount == 0.0) return "$0";
  const double magnitude = std::floor(std::log10(std::fabs(amount)));
  // Decimals needed to show two significant digits.
  const int decimals = std::max(0, static_cast<int>(1 - magnitude));
  const double scale = std::pow(10.0, decimals);
  const double rounded = std::round(amount * scale) / scale;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, rounded);
  std::string s = buf;
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  return "$" + s;
}

PricingConfig PricingConfig::from_json(const nlohmann::json& j) {
  PricingConfig c;
  c.version = j.at("version").get<int>();
  c.retrieved = j.at("retrieved").get<std::string>();
  const auto& instance = j.at("instance");
  c.instance_name = instance.at("name").get<std::string>();
  c.instance_hourly_price = instance.at("hourly_price").get<double>();
  c.instance_gpus = instance.at("gpus").get<std::size_t>();
  for (const auto& row : j.at("api_prices")) {
    c.api_prices.push_back({row.at("name").get<std::string>(), row.at("cost_per_1k_tokens").get<double>(),
                            row.at("scenario").get<std::string>()});
  }
  return c;
}

PricingConfig PricingConfig::load(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::vector<PricedDeployment> compare_pricing(std::span<const SelfHostedEstimate> estimates,
                                              std::span<const PricedDeployment> api_prices) {
  std::vector<PricedDeployment> rows(api_prices.begin(), api_prices.end());
  for (const auto& e : estimates) rows.push_back({e.name, e.estimate.cost_per_1k_tokens, e.scenario});
  std::stable_sort(rows.begin(), rows.end(), [](const PricedDeployment& a, const PricedDeployment& b) {
    if (a.cost_per_1k_tokens != b.cost_per_1k_tokens) return a.cost_per_1k_tokens > b.cost_per_1k_tokens;
    return a.name < b.name;
  });
  return rows;
}

std::vector<std::string> synthetic_prompts(std::size_t count, std::size_t attributes, std::uint64_t seed) {
  if (attributes == 0) throw std::invalid_argument("synthetic prompts need at least one attribute");
  Rng rng(seed);
  auto word = [&rng] {
    std::string w(3 + rng.uniform_index(6), 'a');
    for (auto& c : w) c = static_cast<char>('a' + rng.uniform_index(26));
    return w;
  };
  auto record = [&] {
    std::vector<Value> values;
    for (std::size_t a = 0; a < attributes; ++a) {
      std::string v = word();
      for (std::size_t k = rng.uniform_index(4); k > 0; --k) v += " " + word();
      values.emplace_back(std::move(v));
    }
    return values;
  };
  std::vector<std::string> prompts;
  prompts.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto left = record();
    const auto right = record();
    prompts.push_back(serialize_record_pair(left, right));
  }
  return prompts;
}

}  // namespace zeroem
