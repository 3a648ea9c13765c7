#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

#include "fuselab/config.hpp"

namespace fuselab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs body and maps exceptions to exit codes: ConfigError, ContractError
/// and DimensionError are usage errors (2), anything else is a runtime
/// failure (1). The reason goes to err.
int run_guarded(const std::function<void()>& body, std::ostream& err);

/// Reads --config when given, otherwise the defaults.
RunConfig resolve_config(const std::optional<std::filesystem::path>& config_path);

/// --parallel when given, else FUSELAB_THREADS, else the config value.
std::size_t resolve_parallel(std::optional<std::size_t> flag, std::size_t config_value);

struct GenArgs {
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
};
void cmd_gen(const GenArgs& args, std::ostream& log);

struct TrainArgs {
  std::optional<std::filesystem::path> config;
  std::filesystem::path dataset;
  std::filesystem::path out;
};
/// Writes mg.ckpt, us.ckpt, fusion.ckpt, training_log.csv and config.json.
void cmd_train(const TrainArgs& args, std::ostream& log);

struct LooArgs {
  std::optional<std::filesystem::path> config;
  std::filesystem::path dataset;
  std::filesystem::path out;
  std::optional<std::size_t> parallel;
};
/// Writes scores.csv, roc_{mg,us,fused}.csv, roc.svg, audit.csv, summary.txt
/// and config.json; prints the summary line.
void cmd_loo(const LooArgs& args, std::ostream& log);

/// Writes matrix.csv and config.json.
void cmd_matrix(const LooArgs& args, std::ostream& log);

struct GradcamArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path patch;
  int target_class = 1;
  std::string layer;
  std::filesystem::path out;
};
/// Writes heatmap.pgm and overlay.ppm.
void cmd_gradcam(const GradcamArgs& args, std::ostream& log);

struct ReadersArgs {
  std::filesystem::path scores;
  std::filesystem::path ratings;
  std::filesystem::path out;
};
/// Writes comparison.csv and roc_readers.svg.
void cmd_readers(const ReadersArgs& args, std::ostream& log);

}  // namespace fuselab
