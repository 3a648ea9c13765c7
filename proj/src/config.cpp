#include "fuselab/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fuselab/error.hpp"

namespace fuselab {

namespace {

using nlohmann::json;

// Reads typed keys out of one JSON object and complains about leftovers.
class Section {
 public:
  Section(const json& doc, std::string prefix) : prefix_(std::move(prefix)) {
    if (!doc.is_object()) throw ConfigError(where("") + " must be a JSON object");
    doc_ = &doc;
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = doc_->find(key);
    if (it == doc_->end()) return;
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!it->is_number_unsigned()) throw ConfigError(where(key) + " must be a nonnegative integer");
      } else if constexpr (std::is_same_v<T, int>) {
        if (!it->is_number_integer()) throw ConfigError(where(key) + " must be an integer");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ConfigError(where(key) + " must be a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError(where(key) + " must be true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError(where(key) + " must be a string");
      }
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  Section child(const char* key) {
    seen_.insert(key);
    auto it = doc_->find(key);
    static const json empty = json::object();
    return Section(it == doc_->end() ? empty : *it, where(key));
  }

  bool has(const char* key) const { return doc_->contains(key); }

  void finish() const {
    for (const auto& [key, value] : doc_->items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key " + where(key));
    }
  }

 private:
  std::string where(const std::string& key) const {
    if (prefix_.empty()) return key.empty() ? "config" : key;
    return key.empty() ? prefix_ : prefix_ + "." + key;
  }

  const json* doc_ = nullptr;
  std::string prefix_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  Section root(doc, "");
  root.get("seed", cfg.seed);

  Section data = root.child("data");
  GenConfig& g = cfg.data;
  data.get("n_lesions", g.n_lesions);
  data.get("malignant_fraction", g.malignant_fraction);
  data.get("patch_size", g.patch_size);
  data.get("views_per_modality", g.views_per_modality);
  data.get("benign_amplitude", g.benign_amplitude);
  data.get("malignant_amplitude", g.malignant_amplitude);
  data.get("fidelity_mg", g.fidelity_mg);
  data.get("fidelity_us", g.fidelity_us);
  data.get("noise_mg", g.noise_mg);
  data.get("noise_us", g.noise_us);
  data.finish();

  TrainConfig& t = cfg.train;
  Section model = root.child("model");
  std::string loss = to_string(t.loss);
  model.get("variant", t.variant);
  model.get("loss", loss);
  Section lmcl = model.child("lmcl");
  lmcl.get("s", t.lmcl_s);
  lmcl.get("m", t.lmcl_m);
  lmcl.finish();
  model.get("normalize_descriptors", t.normalize_descriptors);
  model.finish();
  try {
    t.loss = loss_kind_from_string(loss);
  } catch (const ConfigError&) {
    throw ConfigError("model.loss must be \"bce\" or \"lmcl\", got \"" + loss + "\"");
  }

  Section train = root.child("train");
  std::string method = to_string(t.method);
  train.get("method", method);
  train.get("epochs", t.epochs);
  train.get("fusion_epochs", t.fusion_epochs);
  train.get("batch_size", t.batch_size);
  train.get("learning_rate", t.adam.learning_rate);
  train.get("beta1", t.adam.beta1);
  train.get("beta2", t.adam.beta2);
  train.get("epsilon", t.adam.epsilon);
  train.get("augmentations_per_appearance", t.augmentations_per_appearance);
  train.get("fusion_loss_weight", t.fusion_loss_weight);
  train.get("max_pairs_per_lesion", t.max_pairs_per_lesion);
  train.finish();
  try {
    t.method = train_method_from_string(method);
  } catch (const ConfigError&) {
    throw ConfigError("train.method must be \"separate\" or \"end2end\", got \"" + method + "\"");
  }

  Section eval = root.child("eval");
  eval.get("holdout", cfg.eval.holdout);
  eval.get("folds", cfg.eval.folds);
  eval.get("parallel", cfg.eval.parallel);
  eval.get("variants", cfg.eval.variants);
  eval.finish();

  Section explain = root.child("explain");
  explain.get("layer", cfg.explain.layer);
  explain.get("target_class", cfg.explain.target_class);
  explain.finish();
  root.finish();

  g.seed = cfg.seed;
  t.seed = cfg.seed;
  validate(cfg);
  return cfg;
}

void validate(const RunConfig& config) {
  validate(config.data);
  validate(config.train);
  if (config.train.variant != "basic" && config.train.variant != "deeper") {
    throw ConfigError("model.variant must be \"basic\" or \"deeper\", got \"" + config.train.variant + "\"");
  }
  if (config.data.patch_size % 8 != 0) throw ConfigError("data.patch_size must be a multiple of 8");
  if (config.eval.parallel == 0) throw ConfigError("eval.parallel must be positive");
  if (config.eval.folds == 1) throw ConfigError("eval.folds must be 0 (leave-one-out) or at least 2");
  if (config.eval.variants.empty()) throw ConfigError("eval.variants must not be empty");
  for (const std::string& v : config.eval.variants) {
    if (v != "basic" && v != "deeper") throw ConfigError("eval.variants entries must be \"basic\" or \"deeper\"");
  }
  if (config.explain.target_class != 0 && config.explain.target_class != 1) {
    throw ConfigError("explain.target_class must be 0 or 1");
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string run_config_to_json(const RunConfig& c) {
  const GenConfig& g = c.data;
  const TrainConfig& t = c.train;
  json doc = json::object();
  doc["seed"] = c.seed;
  doc["data"] = {{"n_lesions", g.n_lesions},
                 {"malignant_fraction", g.malignant_fraction},
                 {"patch_size", g.patch_size},
                 {"views_per_modality", g.views_per_modality},
                 {"benign_amplitude", g.benign_amplitude},
                 {"malignant_amplitude", g.malignant_amplitude},
                 {"fidelity_mg", g.fidelity_mg},
                 {"fidelity_us", g.fidelity_us},
                 {"noise_mg", g.noise_mg},
                 {"noise_us", g.noise_us}};
  doc["model"] = {{"variant", t.variant},
                  {"loss", to_string(t.loss)},
                  {"lmcl", {{"s", t.lmcl_s}, {"m", t.lmcl_m}}},
                  {"normalize_descriptors", t.normalize_descriptors}};
  doc["train"] = {{"method", to_string(t.method)},
                  {"epochs", t.epochs},
                  {"fusion_epochs", t.fusion_epochs},
                  {"batch_size", t.batch_size},
                  {"learning_rate", t.adam.learning_rate},
                  {"beta1", t.adam.beta1},
                  {"beta2", t.adam.beta2},
                  {"epsilon", t.adam.epsilon},
                  {"augmentations_per_appearance", t.augmentations_per_appearance},
                  {"fusion_loss_weight", t.fusion_loss_weight},
                  {"max_pairs_per_lesion", t.max_pairs_per_lesion}};
  doc["eval"] = {{"holdout", c.eval.holdout},
                 {"folds", c.eval.folds},
                 {"parallel", c.eval.parallel},
                 {"variants", c.eval.variants}};
  doc["explain"] = {{"layer", c.explain.layer}, {"target_class", c.explain.target_class}};
  return doc.dump(2) + "\n";
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << run_config_to_json(config);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace fuselab
