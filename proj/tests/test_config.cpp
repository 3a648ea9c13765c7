#include <doctest.h>

#include <filesystem>

#include "fuselab/config.hpp"
#include "fuselab/error.hpp"

using namespace fuselab;

namespace {

void expect_key_error(const std::string& json, const std::string& key) {
  CAPTURE(json);
  CHECK_THROWS_WITH_AS(parse_run_config(json), doctest::Contains(key.c_str()), ConfigError);
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("empty document yields defaults") {
  const RunConfig c = parse_run_config("{}");
  CHECK(c.seed == 42);
  CHECK(c.data.n_lesions == 153);
  CHECK(c.data.patch_size == 64);
  CHECK(c.train.loss == LossKind::Bce);
  CHECK(c.train.method == TrainMethod::Separate);
  CHECK(c.eval.holdout == 33);
  CHECK(c.eval.folds == 0);
  CHECK(c.explain.target_class == 1);
  CHECK(c.data.seed == 42);
  CHECK(c.train.seed == 42);
}

TEST_CASE("serialization round trips") {
  RunConfig c;
  c.seed = 9;
  c.data.n_lesions = 30;
  c.data.fidelity_us = 0.7;
  c.train.loss = LossKind::Lmcl;
  c.train.method = TrainMethod::EndToEnd;
  c.train.lmcl_s = 16.0;
  c.train.adam.learning_rate = 3e-4;
  c.eval.variants = {"basic", "deeper"};
  c.explain.layer = "conv2";
  const std::string text = run_config_to_json(c);
  const RunConfig back = parse_run_config(text);
  CHECK(run_config_to_json(back) == text);
  CHECK(back.seed == 9);
  CHECK(back.data.seed == 9);
  CHECK(back.train.loss == LossKind::Lmcl);
  CHECK(back.train.adam.learning_rate == 3e-4);
  CHECK(back.eval.variants.size() == 2);
  CHECK(text.find("\"fusion_epochs\"") != std::string::npos);

  const auto path = std::filesystem::path(FUSELAB_TEST_TMP) / "config" / "run.json";
  std::filesystem::create_directories(path.parent_path());
  save_run_config(path, c);
  CHECK(run_config_to_json(load_run_config(path)) == text);
  CHECK_THROWS_AS(load_run_config(path.parent_path() / "absent.json"), ConfigError);
}

TEST_CASE("unknown keys are rejected") {
  expect_key_error(R"({"bogus": 1})", "bogus");
  expect_key_error(R"({"data": {"bogus": 1}})", "data.bogus");
  expect_key_error(R"({"model": {"lmcl": {"q": 1}}})", "model.lmcl.q");
}

TEST_CASE("wrong types name the key") {
  expect_key_error(R"({"seed": "x"})", "seed");
  expect_key_error(R"({"data": {"n_lesions": -3}})", "data.n_lesions");
  expect_key_error(R"({"data": {"n_lesions": 2.5}})", "data.n_lesions");
  expect_key_error(R"({"train": {"learning_rate": "fast"}})", "train.learning_rate");
  expect_key_error(R"({"model": {"normalize_descriptors": 1}})", "model.normalize_descriptors");
  expect_key_error(R"({"eval": {"variants": "basic"}})", "eval.variants");
  expect_key_error(R"({"data": 3})", "data");
  CHECK_THROWS_AS(parse_run_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[]"), ConfigError);
}

TEST_CASE("out-of-range values name the key") {
  expect_key_error(R"({"model": {"loss": "hinge"}})", "model.loss");
  expect_key_error(R"({"model": {"variant": "resnet"}})", "model.variant");
  expect_key_error(R"({"train": {"method": "joint"}})", "train.method");
  expect_key_error(R"({"train": {"epochs": 0}})", "train.epochs");
  expect_key_error(R"({"model": {"lmcl": {"m": 1.5}}})", "model.lmcl.m");
  expect_key_error(R"({"data": {"patch_size": 20}})", "data.patch_size");
  expect_key_error(R"({"data": {"fidelity_mg": 1.2}})", "data.fidelity_mg");
  expect_key_error(R"({"eval": {"folds": 1}})", "eval.folds");
  expect_key_error(R"({"eval": {"parallel": 0}})", "eval.parallel");
  expect_key_error(R"({"explain": {"target_class": 2}})", "explain.target_class");
}

}  // TEST_SUITE
