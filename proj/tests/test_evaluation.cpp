#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "fuselab/error.hpp"
#include "fuselab/evaluation.hpp"
#include "support.hpp"

using namespace fuselab;
using namespace fuselab::testing;

namespace {

double auc_of(std::vector<double> s, std::vector<int> y) { return roc_auc(s, y).auc; }

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

std::vector<ScoreRecord> toy_records() {
  return {{"A", 1, 0.9, 0.8, 0.95}, {"B", 0, 0.2, 0.6, 0.1}, {"C", 1, 0.4, 0.7, 0.6}, {"D", 0, 0.5, 0.3, 0.4}};
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("auc examples") {
  CHECK(auc_of({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  CHECK(auc_of({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0}) == 0.0);
  CHECK(auc_of({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
  CHECK(auc_of({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == 0.75);
}

TEST_CASE("roc curve shape") {
  const RocCurve c = roc_auc(std::vector<double>{0.1, 0.4, 0.4, 0.8}, std::vector<int>{0, 1, 0, 1});
  REQUIRE(c.points.size() == 4);
  CHECK(std::isinf(c.points.front().threshold));
  CHECK(c.points.front().fpr == 0.0);
  CHECK(c.points.front().tpr == 0.0);
  CHECK(c.points.back().fpr == 1.0);
  CHECK(c.points.back().tpr == 1.0);
  CHECK(c.points[2].threshold == 0.4);
  CHECK(c.points[2].fpr == 0.5);
  CHECK(c.points[2].tpr == 1.0);
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    CHECK(c.points[i].fpr >= c.points[i - 1].fpr);
    CHECK(c.points[i].tpr >= c.points[i - 1].tpr);
    CHECK(c.points[i].threshold < c.points[i - 1].threshold);
  }
}

TEST_CASE("auc input contracts") {
  CHECK_THROWS_AS(auc_of({0.1, 0.2}, {1, 1}), ContractError);
  CHECK_THROWS_AS(auc_of({0.1, 0.2}, {0, 2}), ContractError);
  CHECK_THROWS_AS(auc_of({0.1}, {0, 1}), DimensionError);
  CHECK_THROWS_AS(auc_of({0.1, std::numeric_limits<double>::quiet_NaN()}, {0, 1}), ContractError);
}

TEST_CASE("auc properties on random tied inputs") {
  Rng rng = make_rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 60);
    const std::uint64_t levels = 1 + uniform_index(rng, 12);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(uniform_index(rng, levels)) / 10.0;
      y[i] = static_cast<int>(uniform_index(rng, 2));
    }
    y[0] = 0;
    y[1] = 1;
    const RocCurve c = roc_auc(s, y);
    CHECK(c.auc == brute_force_auc(s, y));
    CHECK(std::abs(trapezoid_area(c) - c.auc) < 1e-12);
    CHECK((c.auc >= 0.0 && c.auc <= 1.0));

    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
    CHECK(roc_auc(t, y).auc == c.auc);

    std::vector<int> flipped(n);
    for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - y[i];
    CHECK(std::abs(roc_auc(s, flipped).auc - (1.0 - c.auc)) < 1e-12);

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> ps(n);
    std::vector<int> py(n);
    for (std::size_t i = 0; i < n; ++i) {
      ps[i] = s[perm[i]];
      py[i] = y[perm[i]];
    }
    CHECK(roc_auc(ps, py).auc == c.auc);
  }
}

TEST_CASE("summary and roc csv formats") {
  const AucTriple aucs = evaluate_records(toy_records());
  CHECK(aucs.mg.auc == 0.75);
  CHECK(aucs.us.auc == 1.0);
  CHECK(aucs.fused.auc == 1.0);
  CHECK(format_summary(aucs) == "0.75/1.00/1.00");
  const std::string roc = format_roc_csv(aucs.mg);
  CHECK(roc.rfind("threshold,fpr,tpr\ninf,0,0\n", 0) == 0);
  CHECK(count(roc, "\n") == aucs.mg.points.size() + 1);
}

TEST_CASE("scores csv round trip and validation") {
  const auto records = toy_records();
  const std::string text = format_scores_csv(records);
  CHECK(text.rfind("lesion_id,label,score_mg,score_us,score_fused\n", 0) == 0);
  CHECK(parse_scores_csv(text, "mem") == records);
  CHECK_THROWS_AS(parse_scores_csv("lesion_id,label,score_mg,score_us,score_fused\nA,2,0.1,0.1,0.1\n", "mem"),
                  ParseError);
  CHECK_THROWS_WITH_AS(parse_scores_csv("lesion_id,label,score_mg,score_us,score_fused\nA,1,0.1,1.5,0.1\n", "mem"),
                       doctest::Contains("line 2"), ParseError);
}

TEST_CASE("reader ratings and comparison") {
  const std::string text =
      "lesion_id,label,reader_1,reader_2\n"
      "A,1,10,3\n"
      "B,0,0,5\n"
      "C,1,7,5\n"
      "D,0,2,8\n";
  const ReaderRatings ratings = parse_reader_ratings(text, "mem");
  CHECK(ratings.reader_names == std::vector<std::string>{"reader_1", "reader_2"});
  CHECK(format_reader_ratings(ratings) == text);
  const auto rows = compare_readers(toy_records(), ratings);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].name == "model");
  CHECK(rows[1].name == "reader_1");
  CHECK(rows[0].curve.auc == 1.0);
  CHECK(rows[1].curve.auc == 1.0);
  CHECK(rows[2].curve.auc == 0.125);
  CHECK(format_comparison_csv(rows) == "name,auc\nmodel,1\nreader_1,1\nreader_2,0.125\n");

  CHECK_THROWS_AS(parse_reader_ratings("lesion_id,label,reader_1\nA,1,11\n", "mem"), ParseError);
  CHECK_THROWS_AS(parse_reader_ratings("id,label,reader_1\n", "mem"), ParseError);

  ReaderRatings other = ratings;
  other.lesion_ids[3] = "E";
  CHECK_THROWS_WITH_AS(compare_readers(toy_records(), other), doctest::Contains("only in scores [D]"), ContractError);
  other = ratings;
  other.labels[0] = 0;
  other.labels[1] = 1;
  CHECK_THROWS_AS(compare_readers(toy_records(), other), ContractError);
}

TEST_CASE("ordinal reader curves have at most twelve points") {
  Rng rng = make_rng(3);
  std::vector<double> s(200);
  std::vector<int> y(200);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = static_cast<double>(uniform_index(rng, 11));
    y[i] = static_cast<int>(i % 2);
  }
  CHECK(roc_auc(s, y).points.size() <= 12);
}

TEST_CASE("roc svg") {
  const AucTriple aucs = evaluate_records(toy_records());
  const std::vector<RocCurve> curves{aucs.mg, aucs.us, aucs.fused};
  const std::vector<std::string> names{"mg", "us", "fused"};
  const std::string svg = emit_roc_svg(curves, names);
  CHECK(svg == emit_roc_svg(curves, names));
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(count(svg, "<polyline") == 3);
  CHECK(svg.find("mg (AUC 0.750)") != std::string::npos);
  const auto start = svg.find("points=\"") + 8;
  const std::string pts = svg.substr(start, svg.find('"', start) - start);
  CHECK(count(pts, " ") + 1 == aucs.mg.points.size());
  CHECK(pts.rfind("60.00,420.00", 0) == 0);
  const std::string empty = emit_roc_svg({}, {});
  CHECK(count(empty, "<polyline") == 0);
  CHECK(empty.find("</svg>") != std::string::npos);
}

TEST_CASE("leave-one-out runs are leak free and independent of threads") {
  GenConfig g;
  g.n_lesions = 8;
  g.patch_size = 16;
  g.views_per_modality = 1;
  const Dataset ds = synth_generate(g);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.fusion_epochs = 1;
  cfg.batch_size = 8;
  cfg.seed = 5;
  const LooResult serial = loo_run(ds, cfg, {0, 1});
  REQUIRE(serial.records.size() == 8);
  REQUIRE(serial.audits.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    const FoldAudit& a = serial.audits[i];
    CHECK(a.leak_free);
    CHECK(a.test_ids.size() == 1);
    CHECK(a.train_ids.size() == 7);
    CHECK(std::find(a.train_ids.begin(), a.train_ids.end(), a.test_ids[0]) == a.train_ids.end());
    CHECK(serial.records[i].lesion_id == ds.lesions[i].lesion_id);
    CHECK(serial.records[i].label == ds.lesions[i].label);
  }
  const LooResult parallel = loo_run(ds, cfg, {0, 3});
  CHECK(parallel.records == serial.records);

  const LooResult kfold = loo_run(ds, cfg, {4, 2});
  CHECK(kfold.audits.size() == 4);
  std::set<std::string> covered;
  for (const FoldAudit& a : kfold.audits) {
    CHECK(a.leak_free);
    covered.insert(a.test_ids.begin(), a.test_ids.end());
  }
  CHECK(covered.size() == 8);
  CHECK_THROWS_AS(loo_run(ds, cfg, {9, 1}), ContractError);
}

TEST_CASE("leave-one-out rejects folds without both training classes") {
  GenConfig g;
  g.n_lesions = 4;
  g.patch_size = 16;
  g.views_per_modality = 1;
  Dataset ds = synth_generate(g);
  for (auto& l : ds.lesions) l.label = kBenign;
  ds.lesions[0].label = kMalignant;
  ds.latent.clear();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.fusion_epochs = 1;
  CHECK_THROWS_WITH_AS(loo_run(ds, cfg), doctest::Contains("fold 0"), ContractError);
  CHECK_THROWS_AS(loo_run(Dataset{}, cfg), ContractError);
}

TEST_CASE("matrix csv layout") {
  MatrixRow row{"separate", "bce", "basic", evaluate_records(toy_records())};
  const std::string csv = format_matrix_csv({row});
  CHECK(csv.rfind("method,loss,variant,auc_mg,auc_us,auc_fused,summary\n", 0) == 0);
  CHECK(csv.find("separate,bce,basic,0.75,1,1,0.75/1.00/1.00") != std::string::npos);
}

}  // TEST_SUITE
