#include <doctest.h>

#include <cmath>

#include "fuselab/error.hpp"
#include "fuselab/losses.hpp"
#include "fuselab/ops.hpp"
#include "support.hpp"

using namespace fuselab;
using namespace fuselab::testing;

namespace {

// Two orthonormal anchors in 2-D.
LmclParams axis_anchors(double s, double m) { return {s, m, Tensor({2, 2}, std::vector<double>{1, 0, 0, 1})}; }

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("bce examples") {
  const std::vector<int> one{1};
  CHECK(std::abs(bce_loss(Tensor({1, 2}, std::vector<double>{0.5, 0.5}), one).item() - std::log(2.0)) <= 1e-15);
  CHECK(bce_loss(Tensor({1, 2}, std::vector<double>{0.0, 1.0}), one).item() == doctest::Approx(0.0).epsilon(1e-12));
  const std::vector<int> y{1, 0};
  Tensor batch({2, 2}, std::vector<double>{0.5, 0.5, 1.0, 0.0});
  CHECK(std::abs(bce_loss(batch, y).item() - 0.346574) <= 1e-6);
}

TEST_CASE("bce clamps instead of producing infinity") {
  const std::vector<int> y{0};
  const double loss = bce_loss(Tensor({1, 2}, std::vector<double>{0.0, 1.0}), y).item();
  CHECK(std::abs(loss + std::log(kProbClamp)) <= 1e-9);
}

TEST_CASE("bce is nonnegative and zero only at certainty") {
  Rng rng = make_rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = uniform(rng, 0.0, 1.0);
    const std::vector<int> y{static_cast<int>(uniform_index(rng, 2))};
    CHECK(bce_loss(Tensor({1, 2}, std::vector<double>{a, 1.0 - a}), y).item() > 0.0);
  }
}

TEST_CASE("bce label outside {0,1} is a contract error") {
  const std::vector<int> bad{2};
  CHECK_THROWS_AS(bce_loss(Tensor({1, 2}, 0.5), bad), ContractError);
  const std::vector<int> neg{-1};
  CHECK_THROWS_AS(bce_loss(Tensor({1, 2}, 0.5), neg), ContractError);
}

TEST_CASE("lmcl hand values") {
  const std::vector<int> y{0};
  // feature along anchor 0, orthogonal to anchor 1
  Tensor f({1, 2}, std::vector<double>{2.0, 0.0});
  const double a = lmcl_loss(f, axis_anchors(2.0, 0.5), y).item();
  CHECK(std::abs(a - std::log(1.0 + std::exp(-1.0))) <= 1e-12);
  CHECK(std::abs(a - 0.313262) <= 1e-6);
  // equal cosines
  Tensor g({1, 2}, std::vector<double>{1.0, 1.0});
  const double b = lmcl_loss(g, axis_anchors(4.0, 0.25), y).item();
  CHECK(std::abs(b - std::log(1.0 + std::exp(1.0))) <= 1e-12);
  CHECK(std::abs(b - 1.313262) <= 1e-6);
}

TEST_CASE("lmcl with zero margin is softmax cross-entropy on scaled cosines") {
  Rng rng = make_rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor f = random_tensor(rng, {5, 6}, -1, 1, false);
    LmclParams p{uniform(rng, 1.0, 40.0), 0.0, random_tensor(rng, {2, 6}, -1, 1, false)};
    std::vector<int> y(5);
    for (int& v : y) v = static_cast<int>(uniform_index(rng, 2));
    const double lmcl = lmcl_loss(f, p, y).item();
    const double ce = softmax_cross_entropy(scale(cosine_logits(f, p.anchors), p.s), y).item();
    CHECK(std::abs(lmcl - ce) <= 1e-12);
  }
}

TEST_CASE("lmcl is invariant to positive feature rescaling") {
  Rng rng = make_rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor f = random_tensor(rng, {3, 4}, -1, 1, false);
    LmclParams p{30.0, 0.35, random_tensor(rng, {2, 4}, -1, 1, false)};
    const std::vector<int> y{0, 1, 1};
    const double c = uniform(rng, 0.01, 100.0);
    CHECK(lmcl_loss(scale(f, c), p, y).item() == doctest::Approx(lmcl_loss(f, p, y).item()).epsilon(1e-12));
  }
}

TEST_CASE("lmcl degenerate inputs") {
  const std::vector<int> y{0};
  CHECK_THROWS_AS(lmcl_loss(Tensor({1, 2}, 0.0), axis_anchors(2, 0.1), y), DegenerateInputError);
  LmclParams zero_anchor{2.0, 0.1, Tensor({2, 2}, std::vector<double>{1, 0, 0, 0})};
  CHECK_THROWS_AS(lmcl_loss(Tensor({1, 2}, 1.0), zero_anchor, y), DegenerateInputError);
  CHECK_THROWS_AS(lmcl_loss(Tensor({1, 2}, 1.0), axis_anchors(0.0, 0.1), y), ContractError);
  CHECK_THROWS_AS(lmcl_loss(Tensor({1, 2}, 1.0), axis_anchors(2.0, 1.0), y), ContractError);
}

TEST_CASE("lmcl inference probabilities ignore the margin") {
  Tensor f({1, 2}, std::vector<double>{1.0, 1.0});
  Tensor p = lmcl_probs(f, axis_anchors(4.0, 0.25));
  CHECK(p.at(0) == doctest::Approx(0.5));
}

TEST_CASE("loss names") {
  CHECK(loss_kind_from_string("bce") == LossKind::Bce);
  CHECK(loss_kind_from_string("lmcl") == LossKind::Lmcl);
  CHECK(std::string(to_string(LossKind::Lmcl)) == "lmcl");
  CHECK_THROWS_AS(loss_kind_from_string("hinge"), ConfigError);
}

}  // TEST_SUITE
