#include "fuselab/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "fuselab/csv.hpp"
#include "fuselab/error.hpp"
#include "fuselab/ops.hpp"
#include "fuselab/rng.hpp"

namespace fuselab {

namespace {

constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

void require_both_classes(const std::vector<int>& labels, const std::string& what) {
  bool seen[2] = {false, false};
  for (int y : labels) {
    if (y != kBenign && y != kMalignant) throw ContractError(what + ": label outside {0,1}");
    seen[y] = true;
  }
  if (!seen[0] || !seen[1]) throw ContractError(what + ": training data must contain both classes");
}

double mean_single_loss(const CnnParams& params, const std::vector<const Patch*>& patches,
                        const std::vector<int>& labels, std::size_t batch_size) {
  NoGradGuard no_grad;
  double total = 0.0;
  for (std::size_t start = 0; start < patches.size(); start += batch_size) {
    const std::size_t end = std::min(patches.size(), start + batch_size);
    std::vector<const Patch*> batch(patches.begin() + static_cast<long>(start), patches.begin() + static_cast<long>(end));
    std::vector<int> y(labels.begin() + static_cast<long>(start), labels.begin() + static_cast<long>(end));
    const CnnOutput out = cnn_forward(params, batch_tensor(batch));
    total += head_loss(params.head_config, out.probs, out.descriptor, params.lmcl, y).item() *
             static_cast<double>(end - start);
  }
  return total / static_cast<double>(patches.size());
}

struct FusionPair {
  const DescriptorRow* mg;
  const DescriptorRow* us;
  int label;
};

Tensor descriptor_batch(const std::vector<const DescriptorRow*>& rows) {
  std::vector<double> data;
  data.reserve(rows.size() * kDescriptorWidth);
  for (const DescriptorRow* row : rows) data.insert(data.end(), row->descriptor.begin(), row->descriptor.end());
  return Tensor({rows.size(), kDescriptorWidth}, std::move(data));
}

double fusion_batch_loss(const FusionParams& params, const std::vector<FusionPair>& pairs, std::size_t start,
                         std::size_t end, bool record) {
  std::vector<const DescriptorRow*> mg;
  std::vector<const DescriptorRow*> us;
  std::vector<int> y;
  for (std::size_t i = start; i < end; ++i) {
    mg.push_back(pairs[i].mg);
    us.push_back(pairs[i].us);
    y.push_back(pairs[i].label);
  }
  const FusionOutput out = fusion_forward(descriptor_batch(mg), descriptor_batch(us), params);
  Tensor loss = head_loss(params.head_config, out.probs, out.features, params.lmcl, y);
  if (record) backward(loss);
  return loss.item();
}

std::vector<const Patch*> all_appearances(const Dataset& ds, Modality modality, std::vector<int>& labels) {
  std::vector<const Patch*> out;
  labels.clear();
  for (const LesionPair& lesion : ds.lesions) {
    for (const Patch& p : lesion.appearances(modality)) {
      out.push_back(&p);
      labels.push_back(lesion.label);
    }
  }
  return out;
}

std::string field(double v) { return std::isnan(v) ? std::string() : csv::format_double(v); }

}  // namespace

const char* to_string(TrainMethod method) { return method == TrainMethod::Separate ? "separate" : "end2end"; }

TrainMethod train_method_from_string(const std::string& name) {
  if (name == "separate") return TrainMethod::Separate;
  if (name == "end2end") return TrainMethod::EndToEnd;
  throw ConfigError("train.method must be \"separate\" or \"end2end\", got \"" + name + "\"");
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs == 0) throw ConfigError("train.epochs must be positive");
  if (cfg.fusion_epochs == 0) throw ConfigError("train.fusion_epochs must be positive");
  if (cfg.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(cfg.adam.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (!(cfg.adam.beta1 >= 0.0 && cfg.adam.beta1 < 1.0)) throw ConfigError("train.beta1 must lie in [0,1)");
  if (!(cfg.adam.beta2 >= 0.0 && cfg.adam.beta2 < 1.0)) throw ConfigError("train.beta2 must lie in [0,1)");
  if (!(cfg.adam.epsilon > 0.0)) throw ConfigError("train.epsilon must be positive");
  if (cfg.augmentations_per_appearance == 0) throw ConfigError("train.augmentations_per_appearance must be positive");
  if (!(cfg.lmcl_s > 0.0)) throw ConfigError("model.lmcl.s must be positive");
  if (!(cfg.lmcl_m >= 0.0 && cfg.lmcl_m < 1.0)) throw ConfigError("model.lmcl.m must lie in [0,1)");
  if (!(cfg.fusion_loss_weight >= 0.0)) throw ConfigError("train.fusion_loss_weight must be nonnegative");
  if (cfg.max_pairs_per_lesion == 0) throw ConfigError("train.max_pairs_per_lesion must be positive");
}

SingleResult train_single(const std::vector<const Patch*>& patches, const std::vector<int>& labels,
                          const TrainConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  if (patches.size() != labels.size()) throw DimensionError("train_single: patch and label counts differ");
  require_both_classes(labels, "train_single");
  const std::size_t size = patches.front()->rows;
  SingleResult result{init_cnn_params(derive_seed(seed, "init"), CnnArch::named(cfg.variant, size), cfg.head()), {}};
  CnnParams& params = result.params;
  Adam optimizer(params.trainable(), cfg.adam);
  Rng rng = make_rng(derive_seed(seed, "train"));
  result.epoch_losses.push_back(mean_single_loss(params, patches, labels, cfg.batch_size));

  std::vector<std::size_t> order;
  for (std::size_t copy = 0; copy < cfg.augmentations_per_appearance; ++copy) {
    for (std::size_t i = 0; i < patches.size(); ++i) order.push_back(i);
  }
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Patch> augmented;
      std::vector<int> y;
      augmented.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        augmented.push_back(augment(*patches[order[k]], random_augmentation(rng, size)));
        y.push_back(labels[order[k]]);
      }
      std::vector<const Patch*> batch;
      for (const Patch& p : augmented) batch.push_back(&p);
      optimizer.zero_grad();
      const CnnOutput out = cnn_forward(params, batch_tensor(batch));
      Tensor loss = head_loss(params.head_config, out.probs, out.descriptor, params.lmcl, y);
      backward(loss);
      optimizer.step();
      total += loss.item() * static_cast<double>(end - start);
    }
    result.epoch_losses.push_back(total / static_cast<double>(order.size()));
  }
  return result;
}

DescriptorTable extract_descriptors(const CnnParams& params, const Dataset& ds, Modality modality) {
  NoGradGuard no_grad;
  DescriptorTable table;
  for (const LesionPair& lesion : ds.lesions) {
    const auto& views = lesion.appearances(modality);
    for (std::size_t v = 0; v < views.size(); ++v) {
      const CnnOutput out = cnn_forward(params, image_tensor(views[v]));
      table.push_back({lesion.lesion_id, v, std::vector<double>(out.descriptor.data().begin(), out.descriptor.data().end())});
    }
  }
  return table;
}

FusionResult train_fusion(const DescriptorTable& mg, const DescriptorTable& us,
                          const std::map<std::string, int>& labels, const TrainConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  std::vector<std::string> order;
  std::map<std::string, std::vector<const DescriptorRow*>> mg_rows;
  std::map<std::string, std::vector<const DescriptorRow*>> us_rows;
  for (const DescriptorRow& row : mg) {
    if (row.descriptor.size() != kDescriptorWidth) throw DimensionError("train_fusion: descriptor width mismatch");
    auto& rows = mg_rows[row.lesion_id];
    if (rows.empty()) order.push_back(row.lesion_id);
    rows.push_back(&row);
  }
  for (const DescriptorRow& row : us) {
    if (row.descriptor.size() != kDescriptorWidth) throw DimensionError("train_fusion: descriptor width mismatch");
    us_rows[row.lesion_id].push_back(&row);
  }
  std::set<std::string> mg_ids;
  std::set<std::string> us_ids;
  for (const auto& [id, rows] : mg_rows) mg_ids.insert(id);
  for (const auto& [id, rows] : us_rows) us_ids.insert(id);
  if (mg_ids != us_ids) throw ContractError("train_fusion: mammography and ultrasound tables cover different lesions");

  std::vector<FusionPair> pairs;
  std::vector<int> pair_labels;
  for (const std::string& id : order) {
    const auto label = labels.find(id);
    if (label == labels.end()) throw ContractError("train_fusion: no label for lesion " + id);
    std::size_t taken = 0;
    for (const DescriptorRow* a : mg_rows[id]) {
      for (const DescriptorRow* b : us_rows[id]) {
        if (taken++ >= cfg.max_pairs_per_lesion) break;
        pairs.push_back({a, b, label->second});
        pair_labels.push_back(label->second);
      }
    }
  }
  require_both_classes(pair_labels, "train_fusion");

  FusionResult result{init_fusion_params(derive_seed(seed, "init"), cfg.head(), cfg.normalize_descriptors), {}};
  FusionParams& params = result.params;
  Adam optimizer(params.trainable(), cfg.adam);
  Rng rng = make_rng(derive_seed(seed, "train"));
  {
    NoGradGuard no_grad;
    double total = 0.0;
    for (std::size_t start = 0; start < pairs.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(pairs.size(), start + cfg.batch_size);
      total += fusion_batch_loss(params, pairs, start, end, false) * static_cast<double>(end - start);
    }
    result.epoch_losses.push_back(total / static_cast<double>(pairs.size()));
  }
  for (std::size_t epoch = 1; epoch <= cfg.fusion_epochs; ++epoch) {
    shuffle(pairs.begin(), pairs.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < pairs.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(pairs.size(), start + cfg.batch_size);
      optimizer.zero_grad();
      total += fusion_batch_loss(params, pairs, start, end, true) * static_cast<double>(end - start);
      optimizer.step();
    }
    result.epoch_losses.push_back(total / static_cast<double>(pairs.size()));
  }
  return result;
}

TrainedTriple train_separate(const Dataset& ds, const TrainConfig& cfg) {
  validate(cfg);
  if (ds.lesions.empty()) throw ContractError("train_separate: empty dataset");
  std::vector<int> mg_labels;
  std::vector<int> us_labels;
  const auto mg_patches = all_appearances(ds, Modality::Mammography, mg_labels);
  const auto us_patches = all_appearances(ds, Modality::Ultrasound, us_labels);
  SingleResult mg = train_single(mg_patches, mg_labels, cfg, derive_seed(cfg.seed, "mg"));
  SingleResult us = train_single(us_patches, us_labels, cfg, derive_seed(cfg.seed, "us"));

  std::map<std::string, int> labels;
  for (const LesionPair& lesion : ds.lesions) labels[lesion.lesion_id] = lesion.label;
  FusionResult fusion = train_fusion(extract_descriptors(mg.params, ds, Modality::Mammography),
                                     extract_descriptors(us.params, ds, Modality::Ultrasound), labels, cfg,
                                     derive_seed(cfg.seed, "fusion"));

  TrainedTriple out{std::move(mg.params), std::move(us.params), std::move(fusion.params), {}, {}};
  for (std::size_t e = 0; e < mg.epoch_losses.size(); ++e) {
    out.log.push_back({e, mg.epoch_losses[e], kAbsent, kAbsent, mg.epoch_losses[e]});
  }
  for (std::size_t e = 0; e < us.epoch_losses.size(); ++e) {
    out.log.push_back({e, kAbsent, us.epoch_losses[e], kAbsent, us.epoch_losses[e]});
  }
  for (std::size_t e = 0; e < fusion.epoch_losses.size(); ++e) {
    out.log.push_back({e, kAbsent, kAbsent, fusion.epoch_losses[e], fusion.epoch_losses[e]});
  }
  return out;
}

StepLosses end2end_forward_backward(const CnnParams& mg, const CnnParams& us, const FusionParams& fusion,
                                    const End2EndBatch& batch, double fusion_weight) {
  const CnnOutput out_mg = cnn_forward(mg, batch_tensor(batch.mg));
  const CnnOutput out_us = cnn_forward(us, batch_tensor(batch.us));
  const FusionOutput out_f = fusion_forward(out_mg.descriptor, out_us.descriptor, fusion);
  const Tensor loss_mg = head_loss(mg.head_config, out_mg.probs, out_mg.descriptor, mg.lmcl, batch.labels);
  const Tensor loss_us = head_loss(us.head_config, out_us.probs, out_us.descriptor, us.lmcl, batch.labels);
  const Tensor loss_f = head_loss(fusion.head_config, out_f.probs, out_f.features, fusion.lmcl, batch.labels);
  const Tensor total = add(add(loss_mg, loss_us), fusion_weight == 1.0 ? loss_f : scale(loss_f, fusion_weight));
  if (grad_enabled()) backward(total);
  return {loss_mg.item(), loss_us.item(), loss_f.item(), total.item()};
}

TrainedTriple train_end2end(const Dataset& ds, const TrainConfig& cfg) {
  validate(cfg);
  if (ds.lesions.empty()) throw ContractError("train_end2end: empty dataset");
  std::vector<int> labels;
  for (const LesionPair& lesion : ds.lesions) labels.push_back(lesion.label);
  require_both_classes(labels, "train_end2end");
  const std::size_t size = ds.lesions.front().mg.front().rows;
  const CnnArch arch = CnnArch::named(cfg.variant, size);

  TrainedTriple out;
  out.mg = init_cnn_params(derive_seed(derive_seed(cfg.seed, "mg"), "init"), arch, cfg.head());
  out.us = init_cnn_params(derive_seed(derive_seed(cfg.seed, "us"), "init"), arch, cfg.head());
  out.fusion = init_fusion_params(derive_seed(derive_seed(cfg.seed, "fusion"), "init"), cfg.head(),
                                  cfg.normalize_descriptors);
  std::vector<Tensor> params = out.mg.trainable();
  for (const Tensor& t : out.us.trainable()) params.push_back(t);
  for (const Tensor& t : out.fusion.trainable()) params.push_back(t);
  Adam optimizer(params, cfg.adam);
  Rng rng = make_rng(derive_seed(cfg.seed, "end2end"));

  {
    // Initialization row: first view of each modality, no augmentation.
    NoGradGuard no_grad;
    StepLosses sum;
    for (std::size_t start = 0; start < ds.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(ds.size(), start + cfg.batch_size);
      End2EndBatch batch;
      for (std::size_t i = start; i < end; ++i) {
        batch.mg.push_back(&ds.lesions[i].mg.front());
        batch.us.push_back(&ds.lesions[i].us.front());
        batch.labels.push_back(ds.lesions[i].label);
      }
      const StepLosses s = end2end_forward_backward(out.mg, out.us, out.fusion, batch, cfg.fusion_loss_weight);
      const auto w = static_cast<double>(end - start);
      sum.mg += s.mg * w;
      sum.us += s.us * w;
      sum.fused += s.fused * w;
      sum.total += s.total * w;
    }
    const auto n = static_cast<double>(ds.size());
    out.log.push_back({0, sum.mg / n, sum.us / n, sum.fused / n, sum.total / n});
  }

  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    StepLosses sum;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Patch> mg_aug;
      std::vector<Patch> us_aug;
      End2EndBatch batch;
      for (std::size_t k = start; k < end; ++k) {
        const LesionPair& lesion = ds.lesions[order[k]];
        const Patch& a = lesion.mg[uniform_index(rng, lesion.mg.size())];
        const Patch& b = lesion.us[uniform_index(rng, lesion.us.size())];
        mg_aug.push_back(augment(a, random_augmentation(rng, size)));
        us_aug.push_back(augment(b, random_augmentation(rng, size)));
        batch.labels.push_back(lesion.label);
      }
      for (std::size_t k = 0; k < mg_aug.size(); ++k) {
        batch.mg.push_back(&mg_aug[k]);
        batch.us.push_back(&us_aug[k]);
      }
      optimizer.zero_grad();
      const StepLosses s = end2end_forward_backward(out.mg, out.us, out.fusion, batch, cfg.fusion_loss_weight);
      optimizer.step();
      out.steps.push_back(s);
      const auto w = static_cast<double>(end - start);
      sum.mg += s.mg * w;
      sum.us += s.us * w;
      sum.fused += s.fused * w;
      sum.total += s.total * w;
    }
    const auto n = static_cast<double>(order.size());
    out.log.push_back({epoch, sum.mg / n, sum.us / n, sum.fused / n, sum.total / n});
  }
  return out;
}

TrainedTriple train(const Dataset& ds, const TrainConfig& cfg) {
  return cfg.method == TrainMethod::Separate ? train_separate(ds, cfg) : train_end2end(ds, cfg);
}

double predict_single(const CnnParams& params, const Patch& patch) {
  NoGradGuard no_grad;
  return cnn_forward(params, image_tensor(patch)).probs.at(1);
}

std::string format_training_log(const std::vector<LogRow>& rows) {
  std::string out = "epoch,loss_mg,loss_us,loss_fused,total\n";
  for (const LogRow& row : rows) {
    out += csv::join({std::to_string(row.epoch), field(row.loss_mg), field(row.loss_us), field(row.loss_fused),
                      field(row.total)}) +
           "\n";
  }
  return out;
}

void write_training_log(const std::filesystem::path& path, const std::vector<LogRow>& rows) {
  csv::write_text(path, format_training_log(rows));
}

}  // namespace fuselab
