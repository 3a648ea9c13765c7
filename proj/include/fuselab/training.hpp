#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fuselab/data.hpp"
#include "fuselab/models.hpp"
#include "fuselab/optim.hpp"

namespace fuselab {

enum class TrainMethod { Separate, EndToEnd };

const char* to_string(TrainMethod method);
TrainMethod train_method_from_string(const std::string& name);

struct TrainConfig {
  LossKind loss = LossKind::Bce;
  TrainMethod method = TrainMethod::Separate;
  std::size_t epochs = 60;         // single-modality and end-to-end epochs
  std::size_t fusion_epochs = 60;  // stage-two epochs of the separate method
  std::size_t batch_size = 16;
  AdamConfig adam;
  std::size_t augmentations_per_appearance = 1;
  double lmcl_s = 30.0;
  double lmcl_m = 0.35;
  std::string variant = "basic";
  bool normalize_descriptors = false;
  double fusion_loss_weight = 1.0;  // end-to-end only
  std::size_t max_pairs_per_lesion = 9;
  std::uint64_t seed = 0;

  HeadConfig head() const { return {loss, lmcl_s, lmcl_m}; }
};

void validate(const TrainConfig& cfg);

/// One row of the training log. Absent components are NaN and written empty.
struct LogRow {
  std::size_t epoch = 0;  // 0 = evaluation at initialization
  double loss_mg;
  double loss_us;
  double loss_fused;
  double total;
};

struct StepLosses {
  double mg = 0.0;
  double us = 0.0;
  double fused = 0.0;
  double total = 0.0;
};

struct TrainedTriple {
  CnnParams mg;
  CnnParams us;
  FusionParams fusion;
  std::vector<LogRow> log;
  std::vector<StepLosses> steps;  // end-to-end only
};

struct SingleResult {
  CnnParams params;
  std::vector<double> epoch_losses;  // index 0 = at initialization
};

/// Mini-batch Adam on freshly augmented patches each epoch.
SingleResult train_single(const std::vector<const Patch*>& patches, const std::vector<int>& labels,
                          const TrainConfig& cfg, std::uint64_t seed);

struct DescriptorRow {
  std::string lesion_id;
  std::size_t view_index = 0;
  std::vector<double> descriptor;  // kDescriptorWidth values
};

using DescriptorTable = std::vector<DescriptorRow>;

/// One row per appearance, computed by single-patch cnn_forward.
DescriptorTable extract_descriptors(const CnnParams& params, const Dataset& ds, Modality modality);

struct FusionResult {
  FusionParams params;
  std::vector<double> epoch_losses;
};

/// Trains on the Cartesian product of each lesion's mammography x ultrasound
/// descriptors, keeping the first max_pairs_per_lesion pairs in row-major order.
FusionResult train_fusion(const DescriptorTable& mg, const DescriptorTable& us,
                          const std::map<std::string, int>& labels, const TrainConfig& cfg, std::uint64_t seed);

/// Two-stage training: both CNNs independently, then the fusion network on
/// frozen descriptors.
TrainedTriple train_separate(const Dataset& ds, const TrainConfig& cfg);

struct End2EndBatch {
  std::vector<const Patch*> mg;
  std::vector<const Patch*> us;
  std::vector<int> labels;
};

/// Forward pass of all three networks on one batch and backward of
/// loss_mg + loss_us + fusion_weight * loss_fused. Gradients accumulate into
/// the parameters; nothing is updated.
StepLosses end2end_forward_backward(const CnnParams& mg, const CnnParams& us, const FusionParams& fusion,
                                    const End2EndBatch& batch, double fusion_weight);

/// Joint training under the summed loss with a single optimizer.
TrainedTriple train_end2end(const Dataset& ds, const TrainConfig& cfg);

/// Dispatches on cfg.method.
TrainedTriple train(const Dataset& ds, const TrainConfig& cfg);

/// p(malignant) of one patch.
double predict_single(const CnnParams& params, const Patch& patch);

void write_training_log(const std::filesystem::path& path, const std::vector<LogRow>& rows);
std::string format_training_log(const std::vector<LogRow>& rows);

}  // namespace fuselab
