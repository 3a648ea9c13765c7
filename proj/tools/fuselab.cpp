#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fuselab/commands.hpp"
#include "fuselab/runtime.hpp"

namespace {

template <typename T>
std::optional<T> optional_of(const CLI::Option* opt, const T& value) {
  return opt->count() ? std::optional<T>(value) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace fuselab;
  tune_allocator();
  CLI::App app{"fuselab: paired mammography/ultrasound lesion classification"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::string dataset;
  std::size_t parallel = 1;

  auto* gen = app.add_subcommand("gen", "generate a synthetic paired-lesion dataset");
  auto* gen_config = gen->add_option("--config", config, "run config JSON");
  gen->add_option("--out", out, "dataset directory")->required();

  auto* train = app.add_subcommand("train", "train mg/us/fusion networks");
  auto* train_config = train->add_option("--config", config, "run config JSON");
  train->add_option("--dataset", dataset, "dataset directory")->required();
  train->add_option("--out", out, "output directory")->required();

  auto* loo = app.add_subcommand("loo", "leave-one-out evaluation");
  auto* loo_config = loo->add_option("--config", config, "run config JSON");
  loo->add_option("--dataset", dataset, "dataset directory")->required();
  loo->add_option("--out", out, "output directory")->required();
  auto* loo_parallel = loo->add_option("--parallel", parallel, "worker threads over folds");

  auto* matrix = app.add_subcommand("matrix", "methods x losses LOO grid");
  auto* matrix_config = matrix->add_option("--config", config, "run config JSON");
  matrix->add_option("--dataset", dataset, "dataset directory")->required();
  matrix->add_option("--out", out, "output directory")->required();
  auto* matrix_parallel = matrix->add_option("--parallel", parallel, "worker threads over folds");

  GradcamArgs cam;
  std::string cam_checkpoint;
  std::string cam_patch;
  auto* gradcam = app.add_subcommand("gradcam", "Grad-CAM heatmap for one patch");
  gradcam->add_option("--checkpoint", cam_checkpoint, "single-modality checkpoint")->required();
  gradcam->add_option("--patch", cam_patch, "PGM patch")->required();
  gradcam->add_option("--class", cam.target_class, "target class (0 benign, 1 malignant)");
  gradcam->add_option("--layer", cam.layer, "conv layer id, default last");
  gradcam->add_option("--out", out, "output directory")->required();

  std::string scores;
  std::string ratings;
  auto* readers = app.add_subcommand("readers", "compare the model with reader ratings");
  readers->add_option("--scores", scores, "scores CSV from loo")->required();
  readers->add_option("--ratings", ratings, "reader ratings CSV")->required();
  readers->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  return run_guarded(
      [&] {
        if (*gen) {
          cmd_gen({optional_of<std::filesystem::path>(gen_config, config), out}, std::cout);
        } else if (*train) {
          cmd_train({optional_of<std::filesystem::path>(train_config, config), dataset, out}, std::cout);
        } else if (*loo) {
          cmd_loo({optional_of<std::filesystem::path>(loo_config, config), dataset, out,
                   optional_of(loo_parallel, parallel)},
                  std::cout);
        } else if (*matrix) {
          cmd_matrix({optional_of<std::filesystem::path>(matrix_config, config), dataset, out,
                      optional_of(matrix_parallel, parallel)},
                     std::cout);
        } else if (*gradcam) {
          cam.checkpoint = cam_checkpoint;
          cam.patch = cam_patch;
          cam.out = out;
          cmd_gradcam(cam, std::cout);
        } else if (*readers) {
          cmd_readers({scores, ratings, out}, std::cout);
        }
      },
      std::cerr);
}
