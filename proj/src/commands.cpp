#include "fuselab/commands.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <ostream>

#include "fuselab/checkpoint.hpp"
#include "fuselab/csv.hpp"
#include "fuselab/error.hpp"
#include "fuselab/explain.hpp"
#include "fuselab/image.hpp"

namespace fuselab {

namespace {

void prepare_out_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  csv::write_text(path, text);
}

Dataset load_existing_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.csv")) {
    throw ConfigError("no dataset at " + dir.string() + " (manifest.csv not found)");
  }
  return load_dataset(dir);
}

// The lesions LOO runs on: the train part of the holdout split when one is configured.
Dataset evaluation_set(const Dataset& ds, const RunConfig& cfg) {
  if (cfg.eval.holdout == 0) return ds;
  if (cfg.eval.holdout >= ds.size()) {
    throw ConfigError("eval.holdout (" + std::to_string(cfg.eval.holdout) + ") must be smaller than the dataset (" +
                      std::to_string(ds.size()) + " lesions)");
  }
  return split_holdout(ds, cfg.eval.holdout, cfg.seed).first;
}

}  // namespace

int run_guarded(const std::function<void()>& body, std::ostream& err) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& config_path) {
  if (!config_path) return RunConfig{};
  return load_run_config(*config_path);
}

std::size_t resolve_parallel(std::optional<std::size_t> flag, std::size_t config_value) {
  if (flag) {
    if (*flag == 0) throw ConfigError("--parallel must be positive");
    return *flag;
  }
  if (const char* env = std::getenv("FUSELAB_THREADS"); env && *env) {
    std::size_t value = 0;
    const char* end = env + std::char_traits<char>::length(env);
    auto [ptr, ec] = std::from_chars(env, end, value);
    if (ec != std::errc() || ptr != end || value == 0) {
      throw ConfigError(std::string("FUSELAB_THREADS must be a positive integer, got \"") + env + "\"");
    }
    return value;
  }
  return config_value;
}

void cmd_gen(const GenArgs& args, std::ostream& log) {
  const RunConfig cfg = resolve_config(args.config);
  const Dataset ds = synth_generate(cfg.data);
  prepare_out_dir(args.out);
  save_dataset(ds, args.out);
  save_run_config(args.out / "config.json", cfg);
  log << "wrote " << ds.size() << " lesions to " << args.out.string() << "\n";
}

void cmd_train(const TrainArgs& args, std::ostream& log) {
  const RunConfig cfg = resolve_config(args.config);
  const Dataset ds = load_existing_dataset(args.dataset);
  prepare_out_dir(args.out);
  const TrainedTriple model = train(ds, cfg.train);
  save_checkpoint(args.out / "mg.ckpt", model.mg);
  save_checkpoint(args.out / "us.ckpt", model.us);
  save_checkpoint(args.out / "fusion.ckpt", model.fusion);
  write_training_log(args.out / "training_log.csv", model.log);
  save_run_config(args.out / "config.json", cfg);
  log << "trained " << to_string(cfg.train.method) << "/" << to_string(cfg.train.loss) << " on " << ds.size()
      << " lesions\n";
}

void cmd_loo(const LooArgs& args, std::ostream& log) {
  RunConfig cfg = resolve_config(args.config);
  cfg.eval.parallel = resolve_parallel(args.parallel, cfg.eval.parallel);
  const Dataset ds = evaluation_set(load_existing_dataset(args.dataset), cfg);
  prepare_out_dir(args.out);
  const LooResult result = loo_run(ds, cfg.train, {cfg.eval.folds, cfg.eval.parallel});
  const AucTriple aucs = evaluate_records(result.records);

  write_file(args.out / "scores.csv", format_scores_csv(result.records));
  write_file(args.out / "roc_mg.csv", format_roc_csv(aucs.mg));
  write_file(args.out / "roc_us.csv", format_roc_csv(aucs.us));
  write_file(args.out / "roc_fused.csv", format_roc_csv(aucs.fused));
  write_file(args.out / "roc.svg", emit_roc_svg({aucs.mg, aucs.us, aucs.fused}, {"mammography", "ultrasound", "combined"}));
  std::string audit = "fold,test_ids,train_count,leak_free\n";
  for (const FoldAudit& a : result.audits) {
    std::string ids;
    for (const std::string& id : a.test_ids) ids += (ids.empty() ? "" : " ") + id;
    audit += csv::join({std::to_string(a.fold), ids, std::to_string(a.train_ids.size()), a.leak_free ? "1" : "0"}) + "\n";
  }
  write_file(args.out / "audit.csv", audit);
  const std::string summary = format_summary(aucs);
  write_file(args.out / "summary.txt", summary + "\n");
  save_run_config(args.out / "config.json", cfg);
  log << summary << "\n";
}

void cmd_matrix(const LooArgs& args, std::ostream& log) {
  RunConfig cfg = resolve_config(args.config);
  cfg.eval.parallel = resolve_parallel(args.parallel, cfg.eval.parallel);
  const Dataset ds = evaluation_set(load_existing_dataset(args.dataset), cfg);
  prepare_out_dir(args.out);
  const auto rows = run_matrix(ds, cfg.train, cfg.eval.variants, {cfg.eval.folds, cfg.eval.parallel});
  write_file(args.out / "matrix.csv", format_matrix_csv(rows));
  save_run_config(args.out / "config.json", cfg);
  for (const MatrixRow& row : rows) {
    log << row.method << " " << row.loss << " " << row.variant << " " << format_summary(row.aucs) << "\n";
  }
}

void cmd_gradcam(const GradcamArgs& args, std::ostream& log) {
  if (args.target_class != 0 && args.target_class != 1) {
    throw ConfigError("--class must be 0 or 1, got " + std::to_string(args.target_class));
  }
  const CnnParams params = load_cnn_checkpoint(args.checkpoint);
  const Patch patch = read_pgm(args.patch);
  if (patch.rows != params.arch.input_size || patch.cols != params.arch.input_size) {
    throw ContractError("patch is " + std::to_string(patch.rows) + "x" + std::to_string(patch.cols) +
                        " but the checkpoint expects " + std::to_string(params.arch.input_size) + "x" +
                        std::to_string(params.arch.input_size));
  }
  const Heatmap heatmap = grad_cam(params, patch, args.target_class, args.layer);
  prepare_out_dir(args.out);
  write_pgm(args.out / "heatmap.pgm", heatmap.upsampled);
  write_ppm(args.out / "overlay.ppm", overlay(patch, heatmap));
  log << "grad-cam at " << heatmap.layer << " for class " << args.target_class << "\n";
}

void cmd_readers(const ReadersArgs& args, std::ostream& log) {
  const std::vector<ScoreRecord> scores = read_scores_csv(args.scores);
  const ReaderRatings ratings = read_reader_ratings(args.ratings);
  const auto rows = compare_readers(scores, ratings);
  prepare_out_dir(args.out);
  write_file(args.out / "comparison.csv", format_comparison_csv(rows));
  std::vector<RocCurve> curves;
  std::vector<std::string> labels;
  for (const ComparisonRow& row : rows) {
    curves.push_back(row.curve);
    labels.push_back(row.name);
  }
  write_file(args.out / "roc_readers.svg", emit_roc_svg(curves, labels));
  for (const ComparisonRow& row : rows) log << row.name << " " << csv::format_double(row.curve.auc) << "\n";
}

}  // namespace fuselab
