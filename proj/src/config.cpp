#include "frea/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace frea {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* what) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) + ": " +
                    what);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, "not a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value, "expected true/false");
}

std::array<Index, kDepth> parse_filters(std::string_view key, std::string_view value) {
  std::array<Index, kDepth> out{};
  std::size_t count = 0;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    const auto comma = value.find(',', pos);
    const auto item = trim(value.substr(pos, comma == std::string_view::npos ? value.npos
                                                                               : comma - pos));
    if (count == kDepth) bad_value(key, value, "expected 6 comma-separated filter counts");
    out[count++] = parse_number<Index>(key, item);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  if (count != kDepth) bad_value(key, value, "expected 6 comma-separated filter counts");
  return out;
}

std::string fmt_double(Scalar v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_filters(const std::array<Index, kDepth>& f) {
  std::string s;
  for (int i = 0; i < kDepth; ++i) {
    if (i) s += ',';
    s += std::to_string(f[i]);
  }
  return s;
}

template <typename C>
struct KeySpec {
  std::function<void(C&, std::string_view, std::string_view)> set;
  std::function<std::string(const C&)> get;
};

template <typename C, typename T>
KeySpec<C> number_key(T C::*field) {
  return {[field](C& c, std::string_view k, std::string_view v) {
            c.*field = parse_number<T>(k, v);
          },
          [field](const C& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return fmt_double(c.*field);
            } else {
              return std::to_string(c.*field);
            }
          }};
}

template <typename C>
KeySpec<C> bool_key(bool C::*field) {
  return {[field](C& c, std::string_view k, std::string_view v) { c.*field = parse_bool(k, v); },
          [field](const C& c) { return std::string(c.*field ? "true" : "false"); }};
}

template <typename C>
KeySpec<C> string_key(std::string C::*field) {
  return {[field](C& c, std::string_view, std::string_view v) { c.*field = std::string(v); },
          [field](const C& c) { return c.*field; }};
}

template <typename C>
KeySpec<C> filters_key(std::array<Index, kDepth> C::*field) {
  return {[field](C& c, std::string_view k, std::string_view v) {
            c.*field = parse_filters(k, v);
          },
          [field](const C& c) { return fmt_filters(c.*field); }};
}

using ModelKeys = std::vector<std::pair<std::string, KeySpec<ModelConfig>>>;
using TrainKeys = std::vector<std::pair<std::string, KeySpec<TrainConfig>>>;

const ModelKeys& model_keys() {
  static const ModelKeys keys = {
      {"input_size", number_key(&ModelConfig::input_size)},
      {"encoder_filters", filters_key(&ModelConfig::encoder_filters)},
      {"decoder_filters", filters_key(&ModelConfig::decoder_filters)},
      {"low_branch_layer", number_key(&ModelConfig::low_branch_layer)},
      {"high_branch_layer", number_key(&ModelConfig::high_branch_layer)},
      {"use_attention", bool_key(&ModelConfig::use_attention)},
      {"use_freq_branches", bool_key(&ModelConfig::use_freq_branches)},
      {"dropout_p", number_key(&ModelConfig::dropout_p)},
      {"lambda_low", number_key(&ModelConfig::lambda_low)},
      {"lambda_high", number_key(&ModelConfig::lambda_high)},
      {"lambda_rec", number_key(&ModelConfig::lambda_rec)},
      {"init_std", number_key(&ModelConfig::init_std)},
      {"bn_momentum", number_key(&ModelConfig::bn_momentum)},
      {"bn_eps", number_key(&ModelConfig::bn_eps)},
      {"rng_seed", number_key(&ModelConfig::rng_seed)},
  };
  return keys;
}

// Lifts a model key onto TrainConfig::model.
KeySpec<TrainConfig> lift(const KeySpec<ModelConfig>& spec) {
  return {[spec](TrainConfig& c, std::string_view k, std::string_view v) { spec.set(c.model, k, v); },
          [spec](const TrainConfig& c) { return spec.get(c.model); }};
}

const TrainKeys& train_keys() {
  static const TrainKeys keys = [] {
    TrainKeys k;
    for (const auto& [name, spec] : model_keys()) {
      // Ablation switches are derived from `ablation`; the seed is `init_seed`.
      if (name == "use_attention" || name == "use_freq_branches") continue;
      k.emplace_back(name == "rng_seed" ? "init_seed" : name, lift(spec));
    }
    k.emplace_back("ablation", string_key(&TrainConfig::ablation));
    k.emplace_back("epochs", number_key(&TrainConfig::epochs));
    k.emplace_back("lr", number_key(&TrainConfig::lr));
    k.emplace_back("beta1", number_key(&TrainConfig::beta1));
    k.emplace_back("beta2", number_key(&TrainConfig::beta2));
    k.emplace_back("adam_eps", number_key(&TrainConfig::adam_eps));
    k.emplace_back("lr_decay", bool_key(&TrainConfig::lr_decay));
    k.emplace_back("sigma",
                   KeySpec<TrainConfig>{[](TrainConfig& c, std::string_view key,
                                           std::string_view v) {
                                          c.freq.sigma = parse_number<Scalar>(key, v);
                                        },
                                        [](const TrainConfig& c) { return fmt_double(c.freq.sigma); }});
    k.emplace_back("kernel_size",
                   KeySpec<TrainConfig>{[](TrainConfig& c, std::string_view key,
                                           std::string_view v) {
                                          c.freq.kernel_size = parse_number<Index>(key, v);
                                        },
                                        [](const TrainConfig& c) {
                                          return std::to_string(c.freq.kernel_size);
                                        }});
    k.emplace_back("k", number_key(&TrainConfig::k));
    k.emplace_back("data_seed", number_key(&TrainConfig::data_seed));
    k.emplace_back("shuffle_seed", number_key(&TrainConfig::shuffle_seed));
    k.emplace_back("subjects", number_key(&TrainConfig::subjects));
    k.emplace_back("mask_threshold", number_key(&TrainConfig::mask_threshold));
    k.emplace_back("ssim_mode", string_key(&TrainConfig::ssim_mode));
    k.emplace_back("data", string_key(&TrainConfig::data));
    k.emplace_back("checkpoint", string_key(&TrainConfig::checkpoint));
    k.emplace_back("report", string_key(&TrainConfig::report));
    return k;
  }();
  return keys;
}

template <typename Keys, typename C>
void apply_key(const Keys& keys, C& config, std::string_view key, std::string_view value) {
  for (const auto& [name, spec] : keys) {
    if (name == key) {
      spec.set(config, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

template <typename C, typename F>
void for_each_line(std::string_view text, const std::string& origin, C& config, F apply) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
      }
      try {
        apply(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
  if (k < 2) throw ConfigError("k must be >= 2");
  if (subjects < 3) throw ConfigError("subjects must be >= 3");
  if (!(mask_threshold >= 0 && mask_threshold < 1)) {
    throw ConfigError("mask_threshold must lie in [0, 1)");
  }
  if (ssim_mode != "global" && ssim_mode != "windowed") {
    throw ConfigError("ssim_mode must be 'global' or 'windowed'");
  }
  if (!(freq.sigma > 0) || freq.kernel_size < 1 || freq.kernel_size % 2 == 0) {
    throw ConfigError("sigma must be positive and kernel_size odd");
  }
  try {
    effective_model().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ModelConfig TrainConfig::effective_model() const {
  try {
    return ablation_config(ablation, model);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

Scalar TrainConfig::lr_at(int epoch) const {
  if (!lr_decay) return lr;
  const int hold = epochs / 2;
  if (epoch < hold) return lr;
  const int span = epochs - hold;
  return lr * static_cast<Scalar>(epochs - epoch) / static_cast<Scalar>(span + 1);
}

void set_config_value(TrainConfig& config, std::string_view key, std::string_view value) {
  apply_key(train_keys(), config, key, value);
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, _] : train_keys()) n.push_back(name);
    return n;
  }();
  return names;
}

void apply_config_text(TrainConfig& config, std::string_view text, const std::string& origin) {
  for_each_line(text, origin, config, [](TrainConfig& c, std::string_view k, std::string_view v) {
    set_config_value(c, k, v);
  });
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  TrainConfig config;
  apply_config_text(config, ss.str(), path.string());
  return config;
}

std::string to_text(const TrainConfig& config) {
  std::string out;
  for (const auto& [name, spec] : train_keys()) out += name + " = " + spec.get(config) + "\n";
  return out;
}

std::string model_config_to_text(const ModelConfig& config) {
  std::string out;
  for (const auto& [name, spec] : model_keys()) out += name + " = " + spec.get(config) + "\n";
  return out;
}

ModelConfig model_config_from_text(std::string_view text) {
  ModelConfig config;
  for_each_line(text, "model config", config,
                [](ModelConfig& c, std::string_view k, std::string_view v) {
                  apply_key(model_keys(), c, k, v);
                });
  return config;
}

std::string flag_for_key(std::string_view key) {
  std::string flag = "--";
  for (char ch : key) flag += ch == '_' ? '-' : ch;
  return flag;
}

}  // namespace frea
