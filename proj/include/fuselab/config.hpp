#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fuselab/data.hpp"
#include "fuselab/evaluation.hpp"
#include "fuselab/training.hpp"

namespace fuselab {

struct EvalConfig {
  std::size_t holdout = 33;  // validation lesions set aside before LOO; 0 keeps all
  std::size_t folds = 0;     // 0 = leave-one-out
  std::size_t parallel = 1;
  std::vector<std::string> variants{"basic"};  // matrix architectures
};

struct ExplainConfig {
  std::string layer;  // empty = last conv layer
  int target_class = 1;
};

/// Everything a run needs. Serialized with every default filled in.
struct RunConfig {
  std::uint64_t seed = 42;
  GenConfig data;
  TrainConfig train;
  EvalConfig eval;
  ExplainConfig explain;
};

/// Parses a JSON document. Missing keys take defaults; unknown keys, wrong
/// types and out-of-range values raise ConfigError naming the key.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Pretty JSON with every key present; parse_run_config(to_json(c)) == c.
std::string run_config_to_json(const RunConfig& config);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

void validate(const RunConfig& config);

}  // namespace fuselab
