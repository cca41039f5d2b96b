#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace zeroem {

/// A model does not fit, or a timing run produced unusable measurements.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Returns true when one forward pass at the given batch size succeeds.
using BatchProbe = std::function<bool(std::size_t batch_size)>;

struct BatchSearchResult {
  std::size_t max_batch_size = 0;
  bool hit_ceiling = false;
  /// Every probe in order: (batch size, succeeded).
  std::vector<std::pair<std::size_t, bool>> probes;
};

/// Doubles the batch size from 1 until a probe fails or `ceiling` is reached.
/// Throws ResourceError if batch size 1 already fails.
BatchSearchResult find_max_batch_size(const BatchProbe& probe, std::size_t ceiling = std::size_t{1} << 16);

using TokenizedPrompt = std::vector<std::int32_t>;
using BatchRunner = std::function<void(std::span<const TokenizedPrompt> batch)>;

struct ThroughputOptions {
  std::string model_id;
  std::size_t n_batches = 100;
  std::size_t warmup_batches = 3;
  std::size_t gpus_used = 1;
  /// Scales the measured rate to the whole benchmark machine (machine devices / devices used).
  double extrapolation_factor = 1.0;
  /// Seconds since an arbitrary epoch; defaults to std::chrono::steady_clock.
  std::function<double()> clock;
};

struct ThroughputReport {
  std::string model_id;
  std::size_t max_batch_size = 0;
  /// Measured tokens/s on the devices actually used.
  double tokens_per_second = 0.0;
  std::size_t batches_timed = 0;
  std::size_t gpus_used = 1;
  double extrapolation_factor = 1.0;
  std::uint64_t total_tokens = 0;
  double elapsed_seconds = 0.0;
  bool low_confidence = false;
  std::optional<double> load_average;
  std::vector<double> batch_seconds;
  std::vector<std::uint64_t> batch_tokens;

  /// The rate attributed to the full benchmark machine (t_m).
  double machine_tokens_per_second() const { return tokens_per_second * extrapolation_factor; }
  nlohmann::ordered_json to_json() const;
};

/// Cycles through `prompts` to fill `batch_size`-sized batches, runs
/// `warmup_batches` untimed and `n_batches` timed batches. Tokens are the
/// unpadded prompt lengths. Throws ResourceError on zero elapsed time.
ThroughputReport measure_throughput(std::span<const TokenizedPrompt> prompts, std::size_t batch_size,
                                    const BatchRunner& run_batch, const ThroughputOptions& options = {});

/// Serialized record-pair prompts with random lowercase words, for benchmarking
/// without a dataset. Each record has `attributes` values of 1 to 4 words.
std::vector<std::string> synthetic_prompts(std::size_t count, std::size_t attributes = 6, std::uint64_t seed = 0);

/// 1-minute load average from /proc/loadavg, if readable.
std::optional<double> read_load_average();

struct CostEstimate {
  double hourly_price = 0.0;
  double tokens_per_second = 0.0;
  double extrapolation_factor = 2.0;
  double cost_per_1k_tokens = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// cost per 1K tokens = hourly_price / (extrapolation_factor * t_m * 3600) * 1000.
/// Throws std::invalid_argument on non-positive inputs.
CostEstimate estimate_cost(double tokens_per_second, double hourly_price, double extrapolation_factor = 2.0);
CostEstimate estimate_cost(const ThroughputReport& throughput, double hourly_price,
                           double extrapolation_factor = 2.0);

/// Dollar amount rounded to two significant figures in plain decimal
/// notation with trailing zeros dropped: 3.846e-6 -> "$0.0000038".
std::string format_dollars(double amount);

struct PricedDeployment {
  std::string name;
  double cost_per_1k_tokens = 0.0;
  std::string scenario;
};

struct PricingConfig {
  int version = 1;
  std::string retrieved;
  std::string instance_name;
  double instance_hourly_price = 0.0;
  std::size_t instance_gpus = 0;
  std::vector<PricedDeployment> api_prices;

  static PricingConfig load(const std::filesystem::path& path);
  static PricingConfig from_json(const nlohmann::json& j);
};

struct SelfHostedEstimate {
  std::string name;
  CostEstimate estimate;
  std::string scenario;
};

/// Merges self-hosted estimates with API prices, sorted by cost descending,
/// ties broken by name ascending.
std::vector<PricedDeployment> compare_pricing(std::span<const SelfHostedEstimate> estimates,
                                              std::span<const PricedDeployment> api_prices);

}  // namespace zeroem
