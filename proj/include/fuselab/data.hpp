#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fuselab/image.hpp"
#include "fuselab/rng.hpp"

namespace fuselab {

enum class Modality { Mammography, Ultrasound };

const char* to_string(Modality modality);  // "mg" / "us"
Modality modality_from_string(const std::string& name);

inline constexpr int kBenign = 0;
inline constexpr int kMalignant = 1;

struct LesionPair {
  std::string lesion_id;
  int label = kBenign;
  std::vector<Patch> mg;
  std::vector<Patch> us;

  const std::vector<Patch>& appearances(Modality modality) const {
    return modality == Modality::Mammography ? mg : us;
  }
  bool operator==(const LesionPair&) const = default;
};

/// Generator ground truth for one lesion. Never used as a training input.
struct LatentRecord {
  std::string lesion_id;
  int label = kBenign;
  double amplitude = 0.0;     // true boundary-perturbation amplitude
  bool mg_corrupted = false;  // mammography rendered with the opposite class's amplitude
  bool us_corrupted = false;
  double mg_amplitude = 0.0;  // amplitude actually rendered
  double us_amplitude = 0.0;
  bool operator==(const LatentRecord&) const = default;
};

enum class Split { Train, Validation };

struct Dataset {
  std::vector<LesionPair> lesions;
  Split split = Split::Train;
  std::vector<LatentRecord> latent;  // empty when unknown

  std::size_t size() const { return lesions.size(); }
  std::size_t count_label(int label) const;
  bool operator==(const Dataset&) const = default;
};

/// Throws ContractError when ids repeat, an appearance list is empty or
/// patches are not square with values in [0,1].
void validate(const Dataset& ds);

struct GenConfig {
  std::size_t n_lesions = 153;
  double malignant_fraction = 73.0 / 153.0;
  std::size_t patch_size = 64;
  std::size_t views_per_modality = 3;
  double benign_amplitude = 0.04;
  double malignant_amplitude = 0.30;
  double fidelity_mg = 0.85;
  double fidelity_us = 0.85;
  double noise_mg = 0.04;  // additive Gaussian sigma
  double noise_us = 0.12;  // multiplicative speckle sigma
  std::uint64_t seed = 42;
};

void validate(const GenConfig& cfg);

/// Ellipse with a harmonic boundary perturbation, in units of the semi-axes.
struct LatentShape {
  double semi_major = 1.0;  // pixels
  double semi_minor = 1.0;
  double orientation = 0.0;
  std::vector<double> harmonic_weights;  // frequencies 3, 4, ...
  std::vector<double> harmonic_phases;

  /// Normalized boundary radius at polar angle theta for a given amplitude.
  double radius(double theta, double amplitude) const;
};

LatentShape draw_shape(Rng& rng, std::size_t patch_size);
double draw_amplitude(Rng& rng, int label, const GenConfig& cfg);

/// perimeter^2 / area of the rendered boundary polygon (4*pi for a circle).
double irregularity(const LatentShape& shape, double amplitude, std::size_t samples = 720);

Dataset synth_generate(const GenConfig& cfg);

enum class AugmentKind { HFlip, VFlip, Rot90, Translate };

struct Augmentation {
  AugmentKind kind = AugmentKind::HFlip;
  int quarter_turns = 1;  // Rot90
  int dx = 0;             // Translate, columns
  int dy = 0;             // Translate, rows
};

/// Largest |dx|, |dy| accepted by translate: 10% of the patch side.
int max_shift(std::size_t patch_size);

/// Label-preserving geometric transform. Rot90 maps pixel (r,c) to (c, H-1-r)
/// per quarter turn; translation replicates edge pixels into vacated cells.
Patch augment(const Patch& patch, const Augmentation& op);

/// One op drawn uniformly from {hflip, vflip, rot90, translate}, with random
/// turns/shift.
Augmentation random_augmentation(Rng& rng, std::size_t patch_size);

// Directory layout: manifest.csv (lesion_id,label,modality,view_index,relative_path),
// images/<lesion>_<modality>_<view>.pgm, and latent.csv when latent records exist.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Holds out n_holdout lesions; the remainder is as class-balanced as the
/// class counts allow. Deterministic by seed; both parts keep source order.
std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, std::size_t n_holdout, std::uint64_t seed);

/// Lesions at the given indices, with matching latent records.
Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices);

}  // namespace fuselab
