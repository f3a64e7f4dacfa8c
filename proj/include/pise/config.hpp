/*
 * Copyright 2026 PISE Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pise/loss.hpp"
#include "pise/reconstructor.hpp"
#include "pise/sensing.hpp"

namespace pise {

/// Plain-text configuration: one `key = value` per line, '#' starts a
/// comment, blank lines ignored. Keys are kept sorted so serialization is
/// canonical and parse -> serialize -> parse is the identity.
using ConfigMap = std::map<std::string, std::string>;

namespace detail {

inline std::string strip(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

inline ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    check(eq != std::string::npos,
          "config line " + std::to_string(lineno) + " has no '='");
    const std::string key = detail::strip(line.substr(0, eq));
    const std::string value = detail::strip(line.substr(eq + 1));
    check(!key.empty(), "config line " + std::to_string(lineno) +
                            " has an empty key");
    check(!out.count(key), "duplicate config key: " + key);
    out[key] = value;
  }
  return out;
}

inline std::string serialize_config(const ConfigMap& map) {
  std::ostringstream os;
  for (const auto& [k, v] : map) os << k << " = " << v << "\n";
  return os.str();
}

inline ConfigMap load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw IoError("cannot read config file: " + path);
  std::ostringstream body;
  body << in.rdbuf();
  return parse_config_text(body.str());
}

inline void save_config_file(const ConfigMap& map, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  check(out.good(), "cannot write config file: " + path);
  out << serialize_config(map);
  if (!out.good()) throw IoError("failed writing " + path);
}

/// Everything one training run needs. Seeds have no defaults on purpose:
/// a config that does not pin them cannot claim reproducibility.
struct TrainConfig {
  std::string dataset;
  std::size_t train_count = 4000;
  std::size_t val_count = 512;
  std::size_t test_count = 1000;
  double rate = 0.0;
  PatternKind pattern = PatternKind::gaussian;
  std::uint64_t operator_seed = 0;
  InitMode init_mode = InitMode::adjoint;
  LossWeights loss;
  std::string extractor = "domain_cnn";
  std::string extractor_checkpoint;
  std::uint64_t extractor_seed = 23;
  bool extractor_from_classifier = false;
  std::string classifier_checkpoint;
  std::string optimizer = "adam";
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 0;
  std::uint64_t param_seed = 0;
  std::uint64_t noise_seed = 0;
  double train_sigma_max = 0.1;
  std::string eval_noise = "poisson";
  double eval_photon_scale = 1e4;
  int eval_quant_bits = 8;
  std::size_t unet_depth = 3;
  std::size_t unet_base = 32;
  std::string output_dir;

  /// Keys that must be present in every config file.
  static const std::vector<std::string>& required_keys() {
    static const std::vector<std::string> keys = {
        "dataset",       "rate",       "pattern",
        "operator_seed", "init_mode",  "epochs",
        "param_seed",    "noise_seed", "output_dir"};
    return keys;
  }

  void validate() const {
    check(!dataset.empty(), "dataset tag must not be empty");
    check(rate > 0.0 && rate <= 1.0, "rate must lie in (0, 1]");
    check(train_count >= 1 && val_count >= 1 && test_count >= 1,
          "split sizes must be positive");
    check(epochs >= 6, "epochs must be at least 6 (grad index window + 1)");
    check(batch_size >= 1, "batch_size must be positive");
    check(learning_rate > 0.0, "learning_rate must be positive");
    check(optimizer == "adam", "unsupported optimizer: " + optimizer);
    check(train_sigma_max >= 0.0, "train_sigma_max must be non-negative");
    check(eval_noise == "none" || eval_noise == "awgn" ||
              eval_noise == "poisson",
          "eval_noise must be none, awgn, or poisson");
    check(eval_quant_bits >= 0 && eval_quant_bits <= 16,
          "eval_quant_bits must lie in [0, 16]");
    check(eval_noise != "poisson" || eval_photon_scale > 0.0,
          "eval_photon_scale must be positive");
    check(unet_depth >= 1 && unet_base >= 1, "network size must be positive");
    check(extractor == "domain_cnn" || extractor == "pretrained_perceptual",
          "unknown extractor kind: " + extractor);
    check(!output_dir.empty(), "output_dir must not be empty");
    loss.validate();
  }
};

namespace detail {

template <class T>
inline T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* begin = text.data();
  const char* end = begin + text.size();
  if constexpr (std::is_floating_point_v<T>) {
    std::size_t used = 0;
    try {
      value = static_cast<T>(std::stod(text, &used));
    } catch (const std::exception&) {
      throw InvalidArgument("config key " + key + ": bad number '" + text +
                            "'");
    }
    check(used == text.size(),
          "config key " + key + ": bad number '" + text + "'");
  } else {
    auto [ptr, ec] = std::from_chars(begin, end, value);
    check(ec == std::errc() && ptr == end,
          "config key " + key + ": bad integer '" + text + "'");
  }
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw InvalidArgument("config key " + key + ": bad boolean '" + text + "'");
}

}  // namespace detail

/// Builds a TrainConfig from a parsed map. Every missing required key is
/// listed by name in one error message; unknown keys are rejected so typos
/// cannot silently fall back to defaults.
inline TrainConfig train_config_from_map(const ConfigMap& map) {
  std::string missing;
  for (const auto& key : TrainConfig::required_keys())
    if (!map.count(key)) missing += missing.empty() ? key : ", " + key;
  if (!missing.empty())
    throw InvalidArgument("missing config keys: " + missing);

  TrainConfig cfg;
  ConfigMap rest = map;
  auto take = [&rest](const std::string& key) {
    auto it = rest.find(key);
    if (it == rest.end()) return std::string();
    std::string v = it->second;
    rest.erase(it);
    return v;
  };
  auto take_or = [&take](const std::string& key, const std::string& fallback) {
    std::string v = take(key);
    return v.empty() ? fallback : v;
  };

  cfg.dataset = take("dataset");
  cfg.rate = detail::parse_number<double>("rate", take("rate"));
  cfg.pattern = pattern_kind_from_string(take("pattern"));
  cfg.operator_seed =
      detail::parse_number<std::uint64_t>("operator_seed", take("operator_seed"));
  cfg.init_mode = init_mode_from_string(take("init_mode"));
  cfg.epochs = detail::parse_number<std::size_t>("epochs", take("epochs"));
  cfg.param_seed =
      detail::parse_number<std::uint64_t>("param_seed", take("param_seed"));
  cfg.noise_seed =
      detail::parse_number<std::uint64_t>("noise_seed", take("noise_seed"));
  cfg.output_dir = take("output_dir");

  cfg.train_count = detail::parse_number<std::size_t>(
      "train_count", take_or("train_count", std::to_string(cfg.train_count)));
  cfg.val_count = detail::parse_number<std::size_t>(
      "val_count", take_or("val_count", std::to_string(cfg.val_count)));
  cfg.test_count = detail::parse_number<std::size_t>(
      "test_count", take_or("test_count", std::to_string(cfg.test_count)));
  cfg.loss.mse = detail::parse_number<double>(
      "lambda_mse", take_or("lambda_mse", detail::format_double(cfg.loss.mse)));
  cfg.loss.perc = detail::parse_number<double>(
      "lambda_perc",
      take_or("lambda_perc", detail::format_double(cfg.loss.perc)));
  cfg.extractor = take_or("extractor", cfg.extractor);
  if (rest.count("extractor_checkpoint"))
    cfg.extractor_checkpoint = take("extractor_checkpoint");
  cfg.extractor_seed = detail::parse_number<std::uint64_t>(
      "extractor_seed",
      take_or("extractor_seed", std::to_string(cfg.extractor_seed)));
  cfg.extractor_from_classifier =
      detail::parse_bool("extractor_from_classifier",
                         take_or("extractor_from_classifier",
                                 cfg.extractor_from_classifier ? "true" : "false"));
  if (rest.count("classifier_checkpoint"))
    cfg.classifier_checkpoint = take("classifier_checkpoint");
  cfg.optimizer = take_or("optimizer", cfg.optimizer);
  cfg.learning_rate = detail::parse_number<double>(
      "learning_rate",
      take_or("learning_rate", detail::format_double(cfg.learning_rate)));
  cfg.batch_size = detail::parse_number<std::size_t>(
      "batch_size", take_or("batch_size", std::to_string(cfg.batch_size)));
  cfg.train_sigma_max = detail::parse_number<double>(
      "train_sigma_max",
      take_or("train_sigma_max", detail::format_double(cfg.train_sigma_max)));
  cfg.eval_noise = take_or("eval_noise", cfg.eval_noise);
  cfg.eval_photon_scale = detail::parse_number<double>(
      "eval_photon_scale",
      take_or("eval_photon_scale",
              detail::format_double(cfg.eval_photon_scale)));
  cfg.eval_quant_bits = detail::parse_number<int>(
      "eval_quant_bits",
      take_or("eval_quant_bits", std::to_string(cfg.eval_quant_bits)));
  cfg.unet_depth = detail::parse_number<std::size_t>(
      "unet_depth", take_or("unet_depth", std::to_string(cfg.unet_depth)));
  cfg.unet_base = detail::parse_number<std::size_t>(
      "unet_base", take_or("unet_base", std::to_string(cfg.unet_base)));

  if (!rest.empty()) {
    std::string unknown;
    for (const auto& [k, v] : rest)
      unknown += unknown.empty() ? k : ", " + k;
    throw InvalidArgument("unknown config keys: " + unknown);
  }
  cfg.validate();
  return cfg;
}

/// Full resolved key set (defaults materialized), ready to serialize.
inline ConfigMap train_config_to_map(const TrainConfig& cfg) {
  ConfigMap m;
  m["dataset"] = cfg.dataset;
  m["train_count"] = std::to_string(cfg.train_count);
  m["val_count"] = std::to_string(cfg.val_count);
  m["test_count"] = std::to_string(cfg.test_count);
  m["rate"] = detail::format_double(cfg.rate);
  m["pattern"] = to_string(cfg.pattern);
  m["operator_seed"] = std::to_string(cfg.operator_seed);
  m["init_mode"] = to_string(cfg.init_mode);
  m["lambda_mse"] = detail::format_double(cfg.loss.mse);
  m["lambda_perc"] = detail::format_double(cfg.loss.perc);
  m["extractor"] = cfg.extractor;
  m["extractor_checkpoint"] = cfg.extractor_checkpoint;
  m["extractor_seed"] = std::to_string(cfg.extractor_seed);
  m["extractor_from_classifier"] =
      cfg.extractor_from_classifier ? "true" : "false";
  m["classifier_checkpoint"] = cfg.classifier_checkpoint;
  m["optimizer"] = cfg.optimizer;
  m["learning_rate"] = detail::format_double(cfg.learning_rate);
  m["batch_size"] = std::to_string(cfg.batch_size);
  m["epochs"] = std::to_string(cfg.epochs);
  m["param_seed"] = std::to_string(cfg.param_seed);
  m["noise_seed"] = std::to_string(cfg.noise_seed);
  m["train_sigma_max"] = detail::format_double(cfg.train_sigma_max);
  m["eval_noise"] = cfg.eval_noise;
  m["eval_photon_scale"] = detail::format_double(cfg.eval_photon_scale);
  m["eval_quant_bits"] = std::to_string(cfg.eval_quant_bits);
  m["unet_depth"] = std::to_string(cfg.unet_depth);
  m["unet_base"] = std::to_string(cfg.unet_base);
  m["output_dir"] = cfg.output_dir;
  return m;
}

}  // namespace pise
