#include "fuselab/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "fuselab/csv.hpp"
#include "fuselab/error.hpp"

namespace fuselab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kFirstHarmonic = 3;
constexpr int kHarmonics = 7;

struct View {
  double rotation = 0.0;
  double zoom = 1.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
  double squash = 1.0;  // vertical compression; < 1 for ultrasound transducer pressure
};

View draw_view(Rng& rng, Modality modality, std::size_t size) {
  View view;
  const double s = static_cast<double>(size);
  view.rotation = uniform(rng, 0.0, kTwoPi);
  view.zoom = uniform(rng, 0.9, 1.1);
  view.shift_x = uniform(rng, -0.06 * s, 0.06 * s);
  view.shift_y = uniform(rng, -0.06 * s, 0.06 * s);
  if (modality == Modality::Ultrasound) view.squash = uniform(rng, 0.75, 0.95);
  return view;
}

// Soft inside-indicator of the perturbed ellipse; malignant-looking boundaries
// are both rougher and blurrier.
Image render_mask(const LatentShape& shape, double amplitude, const View& view, std::size_t size) {
  Image mask(size, size);
  const double center = (static_cast<double>(size) - 1.0) / 2.0;
  const double softness = 0.03 + 0.25 * amplitude;
  const double angle = -(view.rotation + shape.orientation);
  const double cos_a = std::cos(angle);
  const double sin_a = std::sin(angle);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      double x = static_cast<double>(c) - center - view.shift_x;
      double y = (static_cast<double>(r) - center - view.shift_y) / view.squash;
      x /= view.zoom;
      y /= view.zoom;
      const double u = (cos_a * x - sin_a * y) / shape.semi_major;
      const double v = (sin_a * x + cos_a * y) / shape.semi_minor;
      const double rho = std::hypot(u, v);
      const double boundary = shape.radius(std::atan2(v, u), amplitude);
      mask(r, c) = 1.0 / (1.0 + std::exp(-(boundary - rho) / softness));
    }
  }
  return mask;
}

Patch render(const LatentShape& shape, double amplitude, Modality modality, Rng& rng, const GenConfig& cfg) {
  const std::size_t size = cfg.patch_size;
  const View view = draw_view(rng, modality, size);
  const Image mask = render_mask(shape, amplitude, view, size);
  const double s = static_cast<double>(size);
  const double ramp_angle = uniform(rng, 0.0, kTwoPi);
  const double ramp_x = std::cos(ramp_angle) / s;
  const double ramp_y = std::sin(ramp_angle) / s;
  Patch patch(size, size);
  if (modality == Modality::Mammography) {
    // Bright mass over smooth tissue background, additive Gaussian noise.
    const double blob_r = uniform(rng, 0.0, s);
    const double blob_c = uniform(rng, 0.0, s);
    const double blob_sigma = s / 3.0;
    for (std::size_t r = 0; r < size; ++r) {
      for (std::size_t c = 0; c < size; ++c) {
        const double dr = static_cast<double>(r) - blob_r;
        const double dc = static_cast<double>(c) - blob_c;
        const double background = 0.22 + 0.06 * (ramp_x * static_cast<double>(c) + ramp_y * static_cast<double>(r)) +
                                  0.08 * std::exp(-(dr * dr + dc * dc) / (2.0 * blob_sigma * blob_sigma));
        patch(r, c) = background + 0.45 * mask(r, c) + cfg.noise_mg * normal(rng);
      }
    }
  } else {
    // Dark (hypoechoic) mass with multiplicative speckle.
    for (std::size_t r = 0; r < size; ++r) {
      for (std::size_t c = 0; c < size; ++c) {
        const double tissue = 0.55 + 0.05 * (ramp_x * static_cast<double>(c) + ramp_y * static_cast<double>(r));
        patch(r, c) = tissue * (1.0 - 0.7 * mask(r, c)) * (1.0 + cfg.noise_us * normal(rng));
      }
    }
  }
  for (double& v : patch.pixels) v = std::clamp(v, 0.0, 1.0);
  quantize_to_8bit(patch);
  return patch;
}

std::string lesion_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "L%04zu", index);
  return buf;
}

std::string image_name(const std::string& lesion, Modality modality, std::size_t view) {
  return "images/" + lesion + "_" + to_string(modality) + "_" + std::to_string(view) + ".pgm";
}

}  // namespace

const char* to_string(Modality modality) { return modality == Modality::Mammography ? "mg" : "us"; }

Modality modality_from_string(const std::string& name) {
  if (name == "mg") return Modality::Mammography;
  if (name == "us") return Modality::Ultrasound;
  throw ParseError("unknown modality \"" + name + "\" (expected mg or us)");
}

std::size_t Dataset::count_label(int label) const {
  return static_cast<std::size_t>(
      std::count_if(lesions.begin(), lesions.end(), [label](const LesionPair& l) { return l.label == label; }));
}

void validate(const Dataset& ds) {
  std::set<std::string> ids;
  for (const LesionPair& lesion : ds.lesions) {
    if (!ids.insert(lesion.lesion_id).second) throw ContractError("duplicate lesion_id " + lesion.lesion_id);
    if (lesion.label != kBenign && lesion.label != kMalignant) {
      throw ContractError("lesion " + lesion.lesion_id + " has label outside {0,1}");
    }
    if (lesion.mg.empty() || lesion.us.empty()) {
      throw ContractError("lesion " + lesion.lesion_id + " lacks an appearance in some modality");
    }
    for (const auto* list : {&lesion.mg, &lesion.us}) {
      for (const Patch& p : *list) {
        if (p.rows != p.cols || p.rows == 0) throw ContractError("lesion " + lesion.lesion_id + " has a non-square patch");
        for (double v : p.pixels) {
          if (!(v >= 0.0 && v <= 1.0)) throw ContractError("lesion " + lesion.lesion_id + " has pixels outside [0,1]");
        }
      }
    }
  }
}

void validate(const GenConfig& cfg) {
  if (!(cfg.malignant_fraction > 0.0 && cfg.malignant_fraction < 1.0)) {
    throw ConfigError("data.malignant_fraction must lie in (0,1)");
  }
  if (!(cfg.fidelity_mg >= 0.0 && cfg.fidelity_mg <= 1.0)) throw ConfigError("data.fidelity_mg must lie in [0,1]");
  if (!(cfg.fidelity_us >= 0.0 && cfg.fidelity_us <= 1.0)) throw ConfigError("data.fidelity_us must lie in [0,1]");
  if (cfg.n_lesions == 0) throw ConfigError("data.n_lesions must be positive");
  if (cfg.views_per_modality == 0) throw ConfigError("data.views_per_modality must be positive");
  if (cfg.patch_size < 8) throw ConfigError("data.patch_size must be at least 8");
  if (!(cfg.benign_amplitude >= 0.0 && cfg.malignant_amplitude >= 0.0)) {
    throw ConfigError("data.benign_amplitude and data.malignant_amplitude must be nonnegative");
  }
  if (!(cfg.noise_mg >= 0.0 && cfg.noise_us >= 0.0)) throw ConfigError("data.noise_mg and data.noise_us must be nonnegative");
}

double LatentShape::radius(double theta, double amplitude) const {
  double perturbation = 0.0;
  for (std::size_t k = 0; k < harmonic_weights.size(); ++k) {
    perturbation += harmonic_weights[k] * std::sin(static_cast<double>(kFirstHarmonic + static_cast<int>(k)) * theta +
                                                   harmonic_phases[k]);
  }
  return std::max(0.2, 1.0 + amplitude * perturbation);
}

LatentShape draw_shape(Rng& rng, std::size_t patch_size) {
  LatentShape shape;
  const double s = static_cast<double>(patch_size);
  shape.semi_major = s * uniform(rng, 0.18, 0.26);
  shape.semi_minor = shape.semi_major * uniform(rng, 0.7, 1.0);
  shape.orientation = uniform(rng, 0.0, std::numbers::pi);
  double total = 0.0;
  for (int k = 0; k < kHarmonics; ++k) {
    shape.harmonic_weights.push_back(uniform(rng, 0.3, 1.0));
    shape.harmonic_phases.push_back(uniform(rng, 0.0, kTwoPi));
    total += shape.harmonic_weights.back();
  }
  for (double& w : shape.harmonic_weights) w /= total;
  return shape;
}

double draw_amplitude(Rng& rng, int label, const GenConfig& cfg) {
  return label == kMalignant ? cfg.malignant_amplitude * uniform(rng, 0.75, 1.25)
                             : cfg.benign_amplitude * uniform(rng, 0.5, 1.5);
}

double irregularity(const LatentShape& shape, double amplitude, std::size_t samples) {
  double perimeter = 0.0;
  double twice_area = 0.0;
  auto point = [&](std::size_t i) {
    const double t = kTwoPi * static_cast<double>(i % samples) / static_cast<double>(samples);
    const double r = shape.radius(t, amplitude);
    return std::pair{shape.semi_major * r * std::cos(t), shape.semi_minor * r * std::sin(t)};
  };
  for (std::size_t i = 0; i < samples; ++i) {
    const auto [x0, y0] = point(i);
    const auto [x1, y1] = point(i + 1);
    perimeter += std::hypot(x1 - x0, y1 - y0);
    twice_area += x0 * y1 - x1 * y0;
  }
  return perimeter * perimeter / (0.5 * std::abs(twice_area));
}

Dataset synth_generate(const GenConfig& cfg) {
  validate(cfg);
  const auto n_malignant = static_cast<std::size_t>(
      std::llround(static_cast<double>(cfg.n_lesions) * cfg.malignant_fraction));
  std::vector<int> labels(cfg.n_lesions, kBenign);
  std::fill_n(labels.begin(), std::min(n_malignant, cfg.n_lesions), kMalignant);
  Rng label_rng = make_rng(derive_seed(cfg.seed, "labels"));
  shuffle(labels.begin(), labels.end(), label_rng);

  Dataset ds;
  for (std::size_t i = 0; i < cfg.n_lesions; ++i) {
    Rng rng = make_rng(derive_seed(cfg.seed, "lesion", i));
    LesionPair lesion;
    lesion.lesion_id = lesion_name(i);
    lesion.label = labels[i];
    const LatentShape shape = draw_shape(rng, cfg.patch_size);
    LatentRecord latent;
    latent.lesion_id = lesion.lesion_id;
    latent.label = lesion.label;
    latent.amplitude = draw_amplitude(rng, lesion.label, cfg);
    latent.mg_corrupted = bernoulli(rng, 1.0 - cfg.fidelity_mg);
    latent.us_corrupted = bernoulli(rng, 1.0 - cfg.fidelity_us);
    const double opposite = draw_amplitude(rng, 1 - lesion.label, cfg);
    latent.mg_amplitude = latent.mg_corrupted ? opposite : latent.amplitude;
    latent.us_amplitude = latent.us_corrupted ? opposite : latent.amplitude;
    for (std::size_t v = 0; v < cfg.views_per_modality; ++v) {
      lesion.mg.push_back(render(shape, latent.mg_amplitude, Modality::Mammography, rng, cfg));
    }
    for (std::size_t v = 0; v < cfg.views_per_modality; ++v) {
      lesion.us.push_back(render(shape, latent.us_amplitude, Modality::Ultrasound, rng, cfg));
    }
    ds.lesions.push_back(std::move(lesion));
    ds.latent.push_back(latent);
  }
  return ds;
}

int max_shift(std::size_t patch_size) { return static_cast<int>(patch_size / 10); }

Patch augment(const Patch& patch, const Augmentation& op) {
  const std::size_t rows = patch.rows;
  const std::size_t cols = patch.cols;
  Patch out(rows, cols);
  switch (op.kind) {
    case AugmentKind::HFlip:
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out(r, c) = patch(r, cols - 1 - c);
      return out;
    case AugmentKind::VFlip:
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out(r, c) = patch(rows - 1 - r, c);
      return out;
    case AugmentKind::Rot90: {
      if (rows != cols) throw DimensionError("rot90 requires a square patch");
      out = patch;
      const int turns = ((op.quarter_turns % 4) + 4) % 4;
      for (int t = 0; t < turns; ++t) {
        Patch next(rows, cols);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) next(c, rows - 1 - r) = out(r, c);
        out = std::move(next);
      }
      return out;
    }
    case AugmentKind::Translate: {
      const int limit_r = max_shift(rows);
      const int limit_c = max_shift(cols);
      if (std::abs(op.dx) > limit_c || std::abs(op.dy) > limit_r) {
        throw ContractError("translate(" + std::to_string(op.dx) + "," + std::to_string(op.dy) +
                            ") exceeds 10% of the patch size");
      }
      const auto last_r = static_cast<long>(rows) - 1;
      const auto last_c = static_cast<long>(cols) - 1;
      for (std::size_t r = 0; r < rows; ++r) {
        const long sr = std::clamp(static_cast<long>(r) - op.dy, 0L, last_r);
        for (std::size_t c = 0; c < cols; ++c) {
          const long sc = std::clamp(static_cast<long>(c) - op.dx, 0L, last_c);
          out(r, c) = patch(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
        }
      }
      return out;
    }
  }
  return out;
}

Augmentation random_augmentation(Rng& rng, std::size_t patch_size) {
  Augmentation op;
  op.kind = static_cast<AugmentKind>(uniform_index(rng, 4));
  if (op.kind == AugmentKind::Rot90) op.quarter_turns = 1 + static_cast<int>(uniform_index(rng, 3));
  if (op.kind == AugmentKind::Translate) {
    const int limit = max_shift(patch_size);
    const auto span = static_cast<std::uint64_t>(2 * limit + 1);
    op.dx = static_cast<int>(uniform_index(rng, span)) - limit;
    op.dy = static_cast<int>(uniform_index(rng, span)) - limit;
  }
  return op;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  std::string manifest = "lesion_id,label,modality,view_index,relative_path\n";
  for (const LesionPair& lesion : ds.lesions) {
    for (Modality modality : {Modality::Mammography, Modality::Ultrasound}) {
      const auto& views = lesion.appearances(modality);
      for (std::size_t v = 0; v < views.size(); ++v) {
        const std::string rel = image_name(lesion.lesion_id, modality, v);
        write_pgm(dir / rel, views[v]);
        manifest += csv::join({lesion.lesion_id, std::to_string(lesion.label), to_string(modality),
                               std::to_string(v), rel}) +
                    "\n";
      }
    }
  }
  csv::write_text(dir / "manifest.csv", manifest);
  const auto latent_path = dir / "latent.csv";
  if (ds.latent.empty()) {
    std::filesystem::remove(latent_path);
    return;
  }
  std::string latent = "lesion_id,label,amplitude,mg_corrupted,us_corrupted,mg_amplitude,us_amplitude\n";
  for (const LatentRecord& rec : ds.latent) {
    latent += csv::join({rec.lesion_id, std::to_string(rec.label), csv::format_double(rec.amplitude),
                         rec.mg_corrupted ? "1" : "0", rec.us_corrupted ? "1" : "0",
                         csv::format_double(rec.mg_amplitude), csv::format_double(rec.us_amplitude)}) +
              "\n";
  }
  csv::write_text(latent_path, latent);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.csv";
  const std::string origin = manifest_path.string();
  const csv::Table table = csv::read(manifest_path);
  Dataset ds;
  if (table.header.empty()) return ds;
  const std::size_t col_id = csv::column(table, "lesion_id", origin);
  const std::size_t col_label = csv::column(table, "label", origin);
  const std::size_t col_modality = csv::column(table, "modality", origin);
  const std::size_t col_view = csv::column(table, "view_index", origin);
  const std::size_t col_path = csv::column(table, "relative_path", origin);

  std::map<std::string, std::size_t> index;
  std::vector<std::map<long long, Patch>> mg_views;
  std::vector<std::map<long long, Patch>> us_views;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::string where = origin + " line " + std::to_string(table.line_numbers[i]);
    const std::string& id = row[col_id];
    if (id.empty()) throw ParseError(where + ": empty lesion_id");
    const long long label = csv::parse_int(row[col_label], where);
    if (label != kBenign && label != kMalignant) throw ParseError(where + ": label must be 0 or 1");
    Modality modality;
    try {
      modality = modality_from_string(row[col_modality]);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    const long long view = csv::parse_int(row[col_view], where);
    if (view < 0) throw ParseError(where + ": negative view_index");
    const auto image_path = dir / row[col_path];
    if (!std::filesystem::exists(image_path)) {
      throw ParseError(where + ": image " + image_path.string() + " does not exist");
    }
    auto [it, inserted] = index.emplace(id, ds.lesions.size());
    if (inserted) {
      LesionPair lesion;
      lesion.lesion_id = id;
      lesion.label = static_cast<int>(label);
      ds.lesions.push_back(std::move(lesion));
      mg_views.emplace_back();
      us_views.emplace_back();
    } else if (ds.lesions[it->second].label != label) {
      throw ParseError(where + ": label " + std::to_string(label) + " contradicts earlier rows of lesion " + id);
    }
    auto& views = modality == Modality::Mammography ? mg_views[it->second] : us_views[it->second];
    if (!views.emplace(view, read_pgm(image_path)).second) {
      throw ParseError(where + ": duplicate view " + std::to_string(view) + " for lesion " + id);
    }
  }
  for (std::size_t i = 0; i < ds.lesions.size(); ++i) {
    for (auto& [view, patch] : mg_views[i]) ds.lesions[i].mg.push_back(std::move(patch));
    for (auto& [view, patch] : us_views[i]) ds.lesions[i].us.push_back(std::move(patch));
    if (ds.lesions[i].mg.empty() || ds.lesions[i].us.empty()) {
      throw ParseError(origin + ": lesion " + ds.lesions[i].lesion_id + " lacks one modality");
    }
  }

  const auto latent_path = dir / "latent.csv";
  if (std::filesystem::exists(latent_path)) {
    const csv::Table latent = csv::read(latent_path);
    const std::string lorigin = latent_path.string();
    for (std::size_t i = 0; i < latent.rows.size(); ++i) {
      const auto& row = latent.rows[i];
      const std::string where = lorigin + " line " + std::to_string(latent.line_numbers[i]);
      LatentRecord rec;
      rec.lesion_id = row[csv::column(latent, "lesion_id", lorigin)];
      rec.label = static_cast<int>(csv::parse_int(row[csv::column(latent, "label", lorigin)], where));
      rec.amplitude = csv::parse_double(row[csv::column(latent, "amplitude", lorigin)], where);
      rec.mg_corrupted = csv::parse_int(row[csv::column(latent, "mg_corrupted", lorigin)], where) != 0;
      rec.us_corrupted = csv::parse_int(row[csv::column(latent, "us_corrupted", lorigin)], where) != 0;
      rec.mg_amplitude = csv::parse_double(row[csv::column(latent, "mg_amplitude", lorigin)], where);
      rec.us_amplitude = csv::parse_double(row[csv::column(latent, "us_amplitude", lorigin)], where);
      ds.latent.push_back(rec);
    }
  }
  validate(ds);
  return ds;
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
  std::map<std::string, const LatentRecord*> latent;
  for (const LatentRecord& rec : ds.latent) latent[rec.lesion_id] = &rec;
  Dataset out;
  out.split = ds.split;
  for (std::size_t i : indices) {
    out.lesions.push_back(ds.lesions.at(i));
    if (auto it = latent.find(ds.lesions[i].lesion_id); it != latent.end()) out.latent.push_back(*it->second);
  }
  return out;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, std::size_t n_holdout, std::uint64_t seed) {
  if (n_holdout >= ds.size() && !(n_holdout == 0 && ds.size() == 0)) {
    throw ContractError("split_holdout: n_holdout=" + std::to_string(n_holdout) + " must be below the dataset size " +
                        std::to_string(ds.size()));
  }
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.lesions[i].label].push_back(i);
  Rng rng = make_rng(seed);
  for (auto& ids : by_class) shuffle(ids.begin(), ids.end(), rng);

  const std::size_t keep = ds.size() - n_holdout;
  const std::size_t n0 = by_class[0].size();
  const std::size_t n1 = by_class[1].size();
  const std::size_t lo = keep > n0 ? keep - n0 : 0;
  const std::size_t keep1 = std::clamp(keep / 2, lo, std::min(n1, keep));
  const std::size_t keep0 = keep - keep1;

  std::vector<std::size_t> train(by_class[0].begin(), by_class[0].begin() + static_cast<long>(keep0));
  train.insert(train.end(), by_class[1].begin(), by_class[1].begin() + static_cast<long>(keep1));
  std::vector<std::size_t> validation(by_class[0].begin() + static_cast<long>(keep0), by_class[0].end());
  validation.insert(validation.end(), by_class[1].begin() + static_cast<long>(keep1), by_class[1].end());
  std::sort(train.begin(), train.end());
  std::sort(validation.begin(), validation.end());

  Dataset a = subset(ds, train);
  Dataset b = subset(ds, validation);
  a.split = Split::Train;
  b.split = Split::Validation;
  return {std::move(a), std::move(b)};
}

}  // namespace fuselab
