#include <doctest.h>

#include <cmath>
#include <limits>
#include <thread>

#include "fuselab/error.hpp"
#include "fuselab/ops.hpp"
#include "fuselab/tensor.hpp"
#include "support.hpp"

using namespace fuselab;

TEST_SUITE("tensor") {

TEST_CASE("shape and storage agree") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.at(5) == 1.5);
  CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST_CASE("handles share storage, clone does not") {
  Tensor a({2}, 1.0);
  Tensor b = a;
  b.mutable_data()[0] = 7.0;
  CHECK(a.at(0) == 7.0);
  Tensor c = a.clone();
  c.mutable_data()[0] = 3.0;
  CHECK(a.at(0) == 7.0);
}

TEST_CASE("non-finite forward values are rejected") {
  Tensor x({2}, std::vector<double>{1.0, std::numeric_limits<double>::max()}, true);
  CHECK_THROWS_AS(scale(x, 10.0), NonFiniteError);
}

TEST_CASE("sum gradient is all ones") {
  Tensor x({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6}, true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("product of scalars swaps into the gradients") {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = Tensor::scalar(-2.0, true);
  backward(mul(x, y));
  CHECK(x.grad()[0] == -2.0);
  CHECK(y.grad()[0] == 3.0);
}

TEST_CASE("fan-out accumulates") {
  Tensor x({3}, std::vector<double>{1, 2, 3}, true);
  Tensor loss = sum(add(mul(x, x), x));  // d/dx = 2x + 1
  backward(loss);
  CHECK(x.grad()[0] == 3.0);
  CHECK(x.grad()[1] == 5.0);
  CHECK(x.grad()[2] == 7.0);
  // A second sweep adds on top of the first.
  backward(sum(x));
  CHECK(x.grad()[0] == 4.0);
}

TEST_CASE("diamond graph visits each node once") {
  Tensor x({2}, std::vector<double>{1, -1}, true);
  Tensor h = scale(x, 2.0);
  Tensor loss = sum(add(h, h));
  const Graph g = Graph::trace(loss);
  std::size_t scale_nodes = 0;
  for (const Node* n : g.nodes()) scale_nodes += std::string(n->op) == "scale";
  CHECK(scale_nodes == 1);
  backward(g, loss);
  CHECK(x.grad()[0] == 4.0);
}

TEST_CASE("non-scalar loss is a contract error") {
  Tensor x({2}, 1.0, true);
  CHECK_THROWS_AS(backward(scale(x, 2.0)), ContractError);
}

TEST_CASE("no-grad mode records nothing") {
  Tensor x({2}, 1.0, true);
  Tensor y;
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    y = scale(x, 2.0);
  }
  CHECK(grad_enabled());
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->inputs.empty());
}

TEST_CASE("no-grad mode is per thread") {
  NoGradGuard guard;
  bool other = false;
  std::thread([&] { other = grad_enabled(); }).join();
  CHECK(other);
  CHECK_FALSE(grad_enabled());
}

TEST_CASE("item needs exactly one element") {
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(Tensor({2}).item(), ContractError);
}

}  // TEST_SUITE
