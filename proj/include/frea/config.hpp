#pragma once

#include "frea/data.hpp"
#include "frea/model.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace frea {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything a training / evaluation run needs. The model part carries the
/// architecture; use_attention and use_freq_branches follow `ablation`.
struct TrainConfig {
  ModelConfig model = ModelConfig::reduced(64);
  std::string ablation = "full";
  int epochs = 200;
  Scalar lr = 2e-4;
  Scalar beta1 = 0.5;
  Scalar beta2 = 0.999;
  Scalar adam_eps = 1e-8;
  /// Linear decay to zero over the second half of training.
  bool lr_decay = false;
  FrequencyParams freq;
  int k = 3;
  std::uint64_t data_seed = 0;
  std::uint64_t shuffle_seed = 0;
  int subjects = 30;
  Scalar mask_threshold = 0.01;
  std::string ssim_mode = "global";
  std::string data;        ///< dataset directory; empty selects synthetic data
  std::string checkpoint;  ///< output (train, cv) or input (eval) checkpoint path
  std::string report;      ///< report path prefix

  void validate() const;
  /// Model config with the ablation switches applied.
  ModelConfig effective_model() const;
  /// Learning rate used during `epoch` (0-based).
  Scalar lr_at(int epoch) const;

  bool operator==(const TrainConfig&) const = default;
};

/// Sets one key from its textual value. Throws ConfigError for unknown keys
/// or malformed values.
void set_config_value(TrainConfig& config, std::string_view key, std::string_view value);

/// All recognised keys, in snapshot order.
const std::vector<std::string>& config_keys();

/// Applies `key = value` lines (with '#' comments) on top of `config`.
void apply_config_text(TrainConfig& config, std::string_view text, const std::string& origin);
TrainConfig load_config(const std::filesystem::path& path);

/// Lossless `key = value` rendering of every key.
std::string to_text(const TrainConfig& config);

std::string model_config_to_text(const ModelConfig& config);
ModelConfig model_config_from_text(std::string_view text);

/// "lambda_low" -> "--lambda-low".
std::string flag_for_key(std::string_view key);

}  // namespace frea
