#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spurlab/common.hpp"
#include "spurlab/eval.hpp"
#include "spurlab/train.hpp"

namespace spurlab {

// Merged configuration for every subcommand. Resolution is layered:
// built-in defaults, then config file, then command-line flags.
struct RunConfig {
  BenchConfig bench;        // spec defaults unless a subcommand injects its own
  Method method = Method::Standard;
  double lambda = -1.0;     // < 0 means "use the method's default"
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::vector<double> sweep_sigmas = {0.1, 0.3, 0.8};

  RunConfig() {
    bench.gen = GeneratorConfig{};
    bench.model = ModelConfig{};
    bench.plant = PlantSpec{};
  }

  double resolved_lambda() const {
    return lambda >= 0.0 ? lambda : default_lambda(method);
  }

  TrainConfig train_config() const {
    TrainConfig tc;
    tc.method = method;
    tc.lambda = resolved_lambda();
    tc.learning_rate = bench.learning_rate;
    tc.beta1 = beta1;
    tc.beta2 = beta2;
    tc.adam_eps = adam_eps;
    tc.epochs = bench.epochs;
    tc.batch_size = bench.batch_size;
    tc.seed = bench.seed;
    return tc;
  }
};

namespace detail {

inline int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    fail("config", "key '" + key + "' expects an integer, got '" + v + "'");
  }
}

inline double parse_float(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    fail("config", "key '" + key + "' expects a number, got '" + v + "'");
  }
}

inline std::vector<double> parse_float_list(const std::string& key,
                                            const std::string& v) {
  std::vector<double> out;
  for (const auto& piece : split(v, ',')) {
    if (piece.empty()) continue;
    out.push_back(parse_float(key, piece));
  }
  if (out.empty()) fail("config", "key '" + key + "' expects a list of numbers");
  return out;
}

}  // namespace detail

inline void apply_config_key(RunConfig& cfg, const std::string& key,
                             const std::string& value) {
  using detail::parse_float;
  using detail::parse_int;
  GeneratorConfig& g = cfg.bench.gen;
  ModelConfig& m = cfg.bench.model;
  PlantSpec& p = cfg.bench.plant;

  if (key == "n_genuine_positive") g.n_genuine_positive = parse_int(key, value);
  else if (key == "n_genuine_negative") g.n_genuine_negative = parse_int(key, value);
  else if (key == "n_topics") g.n_topics = parse_int(key, value);
  else if (key == "topic_size") g.topic_size = parse_int(key, value);
  else if (key == "n_filler") g.n_filler = parse_int(key, value);
  else if (key == "min_length") g.min_length = parse_int(key, value);
  else if (key == "max_length") g.max_length = parse_int(key, value);
  else if (key == "min_genuine") g.min_genuine = parse_int(key, value);
  else if (key == "max_genuine") g.max_genuine = parse_int(key, value);
  else if (key == "min_topic") g.min_topic = parse_int(key, value);
  else if (key == "max_topic") g.max_topic = parse_int(key, value);
  else if (key == "label_noise") g.label_noise = parse_float(key, value);
  else if (key == "train_size") g.train_size = parse_int(key, value);
  else if (key == "test_size") g.test_size = parse_int(key, value);
  else if (key == "d") m.d = parse_int(key, value);
  else if (key == "max_positions") m.max_positions = parse_int(key, value);
  else if (key == "classes") m.n_classes = parse_int(key, value);
  else if (key == "prompt_count") m.prompt_count = parse_int(key, value);
  else if (key == "pooling") {
    if (value == "bos") m.pooling = Pooling::BosPosition;
    else if (value == "mean") m.pooling = Pooling::MeanPool;
    else fail("config", "pooling must be 'bos' or 'mean', got '" + value + "'");
  }
  else if (key == "alpha") p.center_scale = parse_float(key, value);
  else if (key == "sigma") p.noise = parse_float(key, value);
  else if (key == "min_angle_deg") p.min_angle_deg = parse_float(key, value);
  else if (key == "rho") cfg.bench.rho = parse_float(key, value);
  else if (key == "spurious_positive") cfg.bench.spurious_positive_surface = value;
  else if (key == "spurious_negative") cfg.bench.spurious_negative_surface = value;
  else if (key == "method") cfg.method = parse_method(value);
  else if (key == "lambda") cfg.lambda = parse_float(key, value);
  else if (key == "lambda_co") cfg.bench.lambda_co = parse_float(key, value);
  else if (key == "lambda_cp") cfg.bench.lambda_cp = parse_float(key, value);
  else if (key == "learning_rate") cfg.bench.learning_rate = parse_float(key, value);
  else if (key == "epochs") cfg.bench.epochs = parse_int(key, value);
  else if (key == "batch_size") cfg.bench.batch_size = parse_int(key, value);
  else if (key == "beta1") cfg.beta1 = parse_float(key, value);
  else if (key == "beta2") cfg.beta2 = parse_float(key, value);
  else if (key == "adam_eps") cfg.adam_eps = parse_float(key, value);
  else if (key == "neighbor_k") cfg.bench.neighbor_k = parse_int(key, value);
  else if (key == "score_k") cfg.bench.score_k = parse_int(key, value);
  else if (key == "seed") {
    try {
      cfg.bench.seed = std::stoull(value);
    } catch (const std::exception&) {
      fail("config", "key 'seed' expects an unsigned integer, got '" + value + "'");
    }
    g.seed = cfg.bench.seed;
    p.seed = cfg.bench.seed;
  }
  else if (key == "sweep_sigmas") cfg.sweep_sigmas = detail::parse_float_list(key, value);
  else fail("config", "unknown configuration key: '" + key + "'");
}

inline std::string strip(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Flat "key = value" file, '#' comments, UTF-8.
inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail("config", "malformed line " + std::to_string(lineno) + " in " + path);
    apply_config_key(cfg, strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
  }
}

// defaults < subcommand defaults < file < flags
inline RunConfig parse_config(const std::vector<std::pair<std::string, std::string>>& subcommand_defaults,
                              const std::optional<std::string>& file,
                              const std::vector<std::pair<std::string, std::string>>& flag_overrides) {
  RunConfig cfg;
  for (const auto& [k, v] : subcommand_defaults) apply_config_key(cfg, k, v);
  if (file) apply_config_file(cfg, *file);
  for (const auto& [k, v] : flag_overrides) apply_config_key(cfg, k, v);
  return cfg;
}

}  // namespace spurlab
