#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fuselab/data.hpp"
#include "fuselab/training.hpp"

namespace fuselab {

/// Appearance-averaged malignancy scores of one held-out lesion.
struct ScoreRecord {
  std::string lesion_id;
  int label = kBenign;
  double score_mg = 0.0;
  double score_us = 0.0;
  double score_fused = 0.0;
  bool operator==(const ScoreRecord&) const = default;
};

struct RocPoint {
  double threshold;  // predict positive when score >= threshold; +inf for the origin
  double fpr;
  double tpr;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last
  double auc = 0.0;
};

/// Threshold sweep over distinct scores. The AUC is the Mann-Whitney
/// statistic with ties counted one half, accumulated in exact pair counts.
RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Trapezoidal area under a curve's points.
double trapezoid_area(const RocCurve& curve);

/// Per-lesion scores: mean p(malignant) over each modality's views, and mean
/// fused p(malignant) over every mammography x ultrasound view pair.
ScoreRecord score_lesion(const TrainedTriple& model, const LesionPair& lesion);

struct LooOptions {
  std::size_t folds = 0;     // 0 = leave-one-out, otherwise k-fold
  std::size_t parallel = 1;  // worker threads over folds
};

struct FoldAudit {
  std::size_t fold = 0;
  std::vector<std::string> test_ids;
  std::vector<std::string> train_ids;
  bool leak_free = false;  // no test id among the training ids
};

struct LooResult {
  std::vector<ScoreRecord> records;  // dataset order
  std::vector<FoldAudit> audits;     // fold order
};

/// Fold seeds derive from (cfg.seed, fold index) only, so results do not
/// depend on scheduling or thread count.
LooResult loo_run(const Dataset& ds, const TrainConfig& cfg, const LooOptions& options = {});

struct AucTriple {
  RocCurve mg;
  RocCurve us;
  RocCurve fused;
};

AucTriple evaluate_records(const std::vector<ScoreRecord>& records);

/// "0.xx/0.xx/0.xx" in mammography/ultrasound/combined order.
std::string format_summary(const AucTriple& aucs);

std::string format_scores_csv(const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> parse_scores_csv(const std::string& text, const std::string& origin);
std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path);

std::string format_roc_csv(const RocCurve& curve);

/// lesion_id,label,reader_1..reader_k with ordinal 0-10 ratings.
struct ReaderRatings {
  std::vector<std::string> lesion_ids;
  std::vector<int> labels;
  std::vector<std::string> reader_names;
  std::vector<std::vector<double>> ratings;  // [reader][lesion]
};

ReaderRatings parse_reader_ratings(const std::string& text, const std::string& origin);
ReaderRatings read_reader_ratings(const std::filesystem::path& path);
std::string format_reader_ratings(const ReaderRatings& ratings);

struct ComparisonRow {
  std::string name;
  RocCurve curve;
};

/// Per-reader AUCs and the model's fused AUC, sorted by descending AUC (name
/// breaks ties).
std::vector<ComparisonRow> compare_readers(const std::vector<ScoreRecord>& model,
                                           const ReaderRatings& ratings);

std::string format_comparison_csv(const std::vector<ComparisonRow>& rows);

/// Deterministic SVG: unit-square axes, one polyline per curve, legend with AUCs.
std::string emit_roc_svg(const std::vector<RocCurve>& curves, const std::vector<std::string>& labels);

struct MatrixRow {
  std::string method;
  std::string loss;
  std::string variant;
  AucTriple aucs;
};

/// Every method x loss (x variant) cell evaluated with loo_run.
std::vector<MatrixRow> run_matrix(const Dataset& ds, const TrainConfig& base, const std::vector<std::string>& variants,
                                  const LooOptions& options);

std::string format_matrix_csv(const std::vector<MatrixRow>& rows);

}  // namespace fuselab
