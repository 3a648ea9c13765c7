#include "fuselab/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include "fuselab/csv.hpp"
#include "fuselab/error.hpp"
#include "fuselab/ops.hpp"
#include "fuselab/rng.hpp"

namespace fuselab {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::vector<std::size_t>> assign_folds(const Dataset& ds, const TrainConfig& cfg,
                                                   const LooOptions& options) {
  const std::size_t n = ds.size();
  std::vector<std::vector<std::size_t>> folds;
  if (options.folds == 0) {
    for (std::size_t i = 0; i < n; ++i) folds.push_back({i});
    return folds;
  }
  if (options.folds < 2 || options.folds > n) {
    throw ContractError("k-fold evaluation needs 2 <= k <= " + std::to_string(n) + ", got " +
                        std::to_string(options.folds));
  }
  // Class-stratified round robin over a seeded shuffle.
  std::vector<std::size_t> order[2];
  for (std::size_t i = 0; i < n; ++i) order[ds.lesions[i].label].push_back(i);
  Rng rng = make_rng(derive_seed(cfg.seed, "kfold"));
  folds.resize(options.folds);
  std::size_t next = 0;
  for (auto& ids : order) {
    shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t i : ids) folds[next++ % options.folds].push_back(i);
  }
  for (auto& fold : folds) std::sort(fold.begin(), fold.end());
  return folds;
}

}  // namespace

RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("roc_auc: score and label counts differ");
  std::size_t positives = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ContractError("roc_auc: labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw ContractError("roc_auc: non-finite score");
    positives += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw ContractError("roc_auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  const auto p = static_cast<double>(positives);
  const auto q = static_cast<double>(negatives);
  double tp = 0.0;
  double fp = 0.0;
  double twice_area = 0.0;  // in units of pairs, exact for any realistic size
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    double group_tp = 0.0;
    double group_fp = 0.0;
    for (; i < order.size() && scores[order[i]] == threshold; ++i) {
      (labels[order[i]] == 1 ? group_tp : group_fp) += 1.0;
    }
    twice_area += group_fp * (2.0 * tp + group_tp);
    tp += group_tp;
    fp += group_fp;
    curve.points.push_back({threshold, fp / q, tp / p});
  }
  curve.auc = twice_area / (2.0 * p * q);
  return curve;
}

double trapezoid_area(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint& a = curve.points[i - 1];
    const RocPoint& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return area;
}

ScoreRecord score_lesion(const TrainedTriple& model, const LesionPair& lesion) {
  NoGradGuard no_grad;
  ScoreRecord rec{lesion.lesion_id, lesion.label, 0.0, 0.0, 0.0};
  std::vector<Tensor> mg_desc;
  std::vector<Tensor> us_desc;
  for (const Patch& p : lesion.mg) {
    const CnnOutput out = cnn_forward(model.mg, image_tensor(p));
    rec.score_mg += out.probs.at(1);
    mg_desc.push_back(out.descriptor);
  }
  for (const Patch& p : lesion.us) {
    const CnnOutput out = cnn_forward(model.us, image_tensor(p));
    rec.score_us += out.probs.at(1);
    us_desc.push_back(out.descriptor);
  }
  for (const Tensor& a : mg_desc) {
    for (const Tensor& b : us_desc) rec.score_fused += fusion_forward(a, b, model.fusion).probs.at(1);
  }
  rec.score_mg /= static_cast<double>(mg_desc.size());
  rec.score_us /= static_cast<double>(us_desc.size());
  rec.score_fused /= static_cast<double>(mg_desc.size() * us_desc.size());
  return rec;
}

LooResult loo_run(const Dataset& ds, const TrainConfig& cfg, const LooOptions& options) {
  validate(cfg);
  if (ds.size() < 3) throw ContractError("loo_run: needs at least 3 lesions, got " + std::to_string(ds.size()));
  const auto folds = assign_folds(ds, cfg, options);

  LooResult result;
  std::vector<std::vector<std::size_t>> train_sets;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<bool> held(ds.size(), false);
    for (std::size_t i : folds[f]) held[i] = true;
    std::vector<std::size_t> train;
    std::size_t per_class[2] = {0, 0};
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (held[i]) continue;
      train.push_back(i);
      ++per_class[ds.lesions[i].label];
    }
    if (per_class[0] == 0 || per_class[1] == 0) {
      throw ContractError("loo_run: fold " + std::to_string(f) + " (test " + ds.lesions[folds[f].front()].lesion_id +
                          ") has a single-class training set");
    }
    FoldAudit audit;
    audit.fold = f;
    for (std::size_t i : folds[f]) audit.test_ids.push_back(ds.lesions[i].lesion_id);
    for (std::size_t i : train) audit.train_ids.push_back(ds.lesions[i].lesion_id);
    const std::set<std::string> train_ids(audit.train_ids.begin(), audit.train_ids.end());
    audit.leak_free = std::none_of(audit.test_ids.begin(), audit.test_ids.end(),
                                   [&](const std::string& id) { return train_ids.count(id) > 0; });
    result.audits.push_back(std::move(audit));
    train_sets.push_back(std::move(train));
  }

  std::vector<std::vector<ScoreRecord>> fold_records(folds.size());
  std::vector<std::exception_ptr> errors(folds.size());
  auto run_fold = [&](std::size_t f) {
    try {
      TrainConfig fold_cfg = cfg;
      fold_cfg.seed = derive_seed(cfg.seed, "fold", f);
      const TrainedTriple model = train(subset(ds, train_sets[f]), fold_cfg);
      for (std::size_t i : folds[f]) fold_records[f].push_back(score_lesion(model, ds.lesions[i]));
    } catch (...) {
      errors[f] = std::current_exception();
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(options.parallel, 1, folds.size());
  if (workers == 1) {
    for (std::size_t f = 0; f < folds.size(); ++f) run_fold(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t f = next++; f < folds.size(); f = next++) run_fold(f);
      });
    }
  }
  for (const auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }

  std::vector<const ScoreRecord*> by_index(ds.size(), nullptr);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    for (std::size_t k = 0; k < folds[f].size(); ++k) by_index[folds[f][k]] = &fold_records[f][k];
  }
  for (const ScoreRecord* rec : by_index) result.records.push_back(*rec);
  return result;
}

AucTriple evaluate_records(const std::vector<ScoreRecord>& records) {
  std::vector<double> mg;
  std::vector<double> us;
  std::vector<double> fused;
  std::vector<int> labels;
  for (const ScoreRecord& r : records) {
    mg.push_back(r.score_mg);
    us.push_back(r.score_us);
    fused.push_back(r.score_fused);
    labels.push_back(r.label);
  }
  return {roc_auc(mg, labels), roc_auc(us, labels), roc_auc(fused, labels)};
}

std::string format_summary(const AucTriple& aucs) {
  return fixed(aucs.mg.auc, 2) + "/" + fixed(aucs.us.auc, 2) + "/" + fixed(aucs.fused.auc, 2);
}

std::string format_scores_csv(const std::vector<ScoreRecord>& records) {
  std::string out = "lesion_id,label,score_mg,score_us,score_fused\n";
  for (const ScoreRecord& r : records) {
    out += csv::join({r.lesion_id, std::to_string(r.label), csv::format_double(r.score_mg),
                      csv::format_double(r.score_us), csv::format_double(r.score_fused)}) +
           "\n";
  }
  return out;
}

std::vector<ScoreRecord> parse_scores_csv(const std::string& text, const std::string& origin) {
  const csv::Table table = csv::parse(text, origin);
  std::vector<ScoreRecord> records;
  if (table.header.empty()) return records;
  const std::size_t c_id = csv::column(table, "lesion_id", origin);
  const std::size_t c_label = csv::column(table, "label", origin);
  const std::size_t c_mg = csv::column(table, "score_mg", origin);
  const std::size_t c_us = csv::column(table, "score_us", origin);
  const std::size_t c_fused = csv::column(table, "score_fused", origin);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::string where = origin + " line " + std::to_string(table.line_numbers[i]);
    ScoreRecord r;
    r.lesion_id = row[c_id];
    const long long label = csv::parse_int(row[c_label], where);
    if (label != 0 && label != 1) throw ParseError(where + ": label must be 0 or 1");
    r.label = static_cast<int>(label);
    r.score_mg = csv::parse_double(row[c_mg], where);
    r.score_us = csv::parse_double(row[c_us], where);
    r.score_fused = csv::parse_double(row[c_fused], where);
    for (double s : {r.score_mg, r.score_us, r.score_fused}) {
      if (!(s >= 0.0 && s <= 1.0)) throw ParseError(where + ": scores must lie in [0,1]");
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path) {
  return parse_scores_csv(slurp(path), path.string());
}

std::string format_roc_csv(const RocCurve& curve) {
  std::string out = "threshold,fpr,tpr\n";
  for (const RocPoint& p : curve.points) {
    out += csv::join({std::isinf(p.threshold) ? std::string("inf") : csv::format_double(p.threshold),
                      csv::format_double(p.fpr), csv::format_double(p.tpr)}) +
           "\n";
  }
  return out;
}

ReaderRatings parse_reader_ratings(const std::string& text, const std::string& origin) {
  const csv::Table table = csv::parse(text, origin);
  if (table.header.size() < 3 || table.header[0] != "lesion_id" || table.header[1] != "label") {
    throw ParseError(origin + ": expected header lesion_id,label,reader_1[,reader_2...]");
  }
  ReaderRatings ratings;
  ratings.reader_names.assign(table.header.begin() + 2, table.header.end());
  ratings.ratings.resize(ratings.reader_names.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::string where = origin + " line " + std::to_string(table.line_numbers[i]);
    ratings.lesion_ids.push_back(row[0]);
    const long long label = csv::parse_int(row[1], where);
    if (label != 0 && label != 1) throw ParseError(where + ": label must be 0 or 1");
    ratings.labels.push_back(static_cast<int>(label));
    for (std::size_t r = 0; r < ratings.reader_names.size(); ++r) {
      const double v = csv::parse_double(row[2 + r], where);
      if (!(v >= 0.0 && v <= 10.0)) throw ParseError(where + ": ratings must lie in [0,10]");
      ratings.ratings[r].push_back(v);
    }
  }
  return ratings;
}

ReaderRatings read_reader_ratings(const std::filesystem::path& path) {
  return parse_reader_ratings(slurp(path), path.string());
}

std::string format_reader_ratings(const ReaderRatings& ratings) {
  std::vector<std::string> header{"lesion_id", "label"};
  header.insert(header.end(), ratings.reader_names.begin(), ratings.reader_names.end());
  std::string out = csv::join(header) + "\n";
  for (std::size_t i = 0; i < ratings.lesion_ids.size(); ++i) {
    std::vector<std::string> row{ratings.lesion_ids[i], std::to_string(ratings.labels[i])};
    for (const auto& reader : ratings.ratings) row.push_back(csv::format_double(reader[i]));
    out += csv::join(row) + "\n";
  }
  return out;
}

std::vector<ComparisonRow> compare_readers(const std::vector<ScoreRecord>& model, const ReaderRatings& ratings) {
  std::map<std::string, int> model_ids;
  for (const ScoreRecord& r : model) model_ids[r.lesion_id] = r.label;
  std::map<std::string, int> rating_ids;
  for (std::size_t i = 0; i < ratings.lesion_ids.size(); ++i) rating_ids[ratings.lesion_ids[i]] = ratings.labels[i];
  if (model_ids.size() != model.size() || rating_ids.size() != ratings.lesion_ids.size()) {
    throw ContractError("compare_readers: duplicate lesion ids");
  }
  std::vector<std::string> only_model;
  std::vector<std::string> only_ratings;
  for (const auto& [id, label] : model_ids) {
    if (!rating_ids.count(id)) only_model.push_back(id);
  }
  for (const auto& [id, label] : rating_ids) {
    if (!model_ids.count(id)) only_ratings.push_back(id);
  }
  if (!only_model.empty() || !only_ratings.empty()) {
    auto list = [](const std::vector<std::string>& ids) {
      std::string s;
      for (std::size_t i = 0; i < ids.size() && i < 5; ++i) s += (i ? " " : "") + ids[i];
      if (ids.size() > 5) s += " ...";
      return s.empty() ? std::string("none") : s;
    };
    throw ContractError("lesion sets differ: only in scores [" + list(only_model) + "], only in ratings [" +
                        list(only_ratings) + "]");
  }
  for (const auto& [id, label] : model_ids) {
    if (rating_ids[id] != label) throw ContractError("lesion " + id + " has different labels in scores and ratings");
  }

  std::vector<ComparisonRow> rows;
  for (std::size_t r = 0; r < ratings.reader_names.size(); ++r) {
    rows.push_back({ratings.reader_names[r], roc_auc(ratings.ratings[r], ratings.labels)});
  }
  std::vector<double> scores;
  std::vector<int> labels;
  for (const ScoreRecord& rec : model) {
    scores.push_back(rec.score_fused);
    labels.push_back(rec.label);
  }
  rows.push_back({"model", roc_auc(scores, labels)});
  std::stable_sort(rows.begin(), rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    if (a.curve.auc != b.curve.auc) return a.curve.auc > b.curve.auc;
    return a.name < b.name;
  });
  return rows;
}

std::string format_comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = "name,auc\n";
  for (const ComparisonRow& row : rows) out += row.name + "," + csv::format_double(row.curve.auc) + "\n";
  return out;
}

std::string emit_roc_svg(const std::vector<RocCurve>& curves, const std::vector<std::string>& labels) {
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                            "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  constexpr double kSize = 520.0;
  constexpr double kLeft = 60.0;
  constexpr double kTop = 20.0;
  constexpr double kPlot = 400.0;
  auto px = [&](double fpr) { return fixed(kLeft + fpr * kPlot, 2); };
  auto py = [&](double tpr) { return fixed(kTop + (1.0 - tpr) * kPlot, 2); };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(kSize, 0) + "\" height=\"" + fixed(kSize, 0) +
         "\" viewBox=\"0 0 " + fixed(kSize, 0) + " " + fixed(kSize, 0) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"520\" height=\"520\" fill=\"white\"/>\n";
  svg += "<rect x=\"" + px(0) + "\" y=\"" + py(1) + "\" width=\"" + fixed(kPlot, 2) + "\" height=\"" +
         fixed(kPlot, 2) + "\" fill=\"none\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + px(0) + "\" y1=\"" + py(0) + "\" x2=\"" + px(1) + "\" y2=\"" + py(1) +
         "\" stroke=\"#999999\" stroke-dasharray=\"4 4\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = t / 5.0;
    svg += "<text x=\"" + px(v) + "\" y=\"" + fixed(kTop + kPlot + 18.0, 2) +
           "\" font-size=\"12\" text-anchor=\"middle\">" + fixed(v, 1) + "</text>\n";
    svg += "<text x=\"" + fixed(kLeft - 8.0, 2) + "\" y=\"" + py(v) + "\" font-size=\"12\" text-anchor=\"end\">" +
           fixed(v, 1) + "</text>\n";
  }
  svg += "<text x=\"" + px(0.5) + "\" y=\"" + fixed(kTop + kPlot + 40.0, 2) +
         "\" font-size=\"14\" text-anchor=\"middle\">False positive rate</text>\n";
  svg += "<text x=\"16\" y=\"" + py(0.5) + "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         py(0.5) + ")\">True positive rate</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const char* color = kColors[i % std::size(kColors)];
    std::string points;
    for (std::size_t k = 0; k < curves[i].points.size(); ++k) {
      if (k) points += ' ';
      points += px(curves[i].points[k].fpr) + "," + py(curves[i].points[k].tpr);
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + points +
           "\"/>\n";
    const std::string name = i < labels.size() ? labels[i] : "curve " + std::to_string(i + 1);
    const std::string y = fixed(kTop + kPlot - 12.0 - 18.0 * static_cast<double>(curves.size() - 1 - i), 2);
    svg += "<text x=\"" + fixed(kLeft + kPlot - 8.0, 2) + "\" y=\"" + y + "\" font-size=\"12\" text-anchor=\"end\" fill=\"" +
           color + "\">" + name + " (AUC " + fixed(curves[i].auc, 3) + ")</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<MatrixRow> run_matrix(const Dataset& ds, const TrainConfig& base, const std::vector<std::string>& variants,
                                  const LooOptions& options) {
  std::vector<MatrixRow> rows;
  for (TrainMethod method : {TrainMethod::Separate, TrainMethod::EndToEnd}) {
    for (LossKind loss : {LossKind::Bce, LossKind::Lmcl}) {
      for (const std::string& variant : variants) {
        TrainConfig cfg = base;
        cfg.method = method;
        cfg.loss = loss;
        cfg.variant = variant;
        const LooResult result = loo_run(ds, cfg, options);
        rows.push_back({to_string(method), to_string(loss), variant, evaluate_records(result.records)});
      }
    }
  }
  return rows;
}

std::string format_matrix_csv(const std::vector<MatrixRow>& rows) {
  std::string out = "method,loss,variant,auc_mg,auc_us,auc_fused,summary\n";
  for (const MatrixRow& row : rows) {
    out += csv::join({row.method, row.loss, row.variant, csv::format_double(row.aucs.mg.auc),
                      csv::format_double(row.aucs.us.auc), csv::format_double(row.aucs.fused.auc),
                      format_summary(row.aucs)}) +
           "\n";
  }
  return out;
}

}  // namespace fuselab
