#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fuselab/losses.hpp"
#include "fuselab/ops.hpp"
#include "support.hpp"

namespace fuselab::testing {

struct GradCase {
  std::string name;
  std::function<GradCheck(Rng&)> run;
};

inline std::vector<int> random_labels(Rng& rng, std::size_t n, int classes = 2) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(classes)));
  return y;
}

// Random softmax rows kept away from the BCE clamp.
inline Tensor random_probs(Rng& rng, std::size_t rows) {
  std::vector<double> p;
  for (std::size_t r = 0; r < rows; ++r) {
    const double a = uniform(rng, 0.05, 0.95);
    p.push_back(a);
    p.push_back(1.0 - a);
  }
  return Tensor({rows, 2}, p, true);
}

// One entry per differentiable op and loss; each call draws a fresh random instance.
inline std::vector<GradCase> gradient_cases() {
  std::vector<GradCase> cases;
  cases.push_back({"conv2d", [](Rng& rng) {
                     const std::size_t c_in = 1 + uniform_index(rng, 2);
                     const std::size_t c_out = 1 + uniform_index(rng, 3);
                     const bool batched = bernoulli(rng, 0.5);
                     const int stride = 1 + static_cast<int>(uniform_index(rng, 2));
                     const int pad = static_cast<int>(uniform_index(rng, 2));
                     Tensor x = batched ? random_tensor(rng, {2, c_in, 5, 5}) : random_tensor(rng, {c_in, 5, 5});
                     Tensor k = random_tensor(rng, {c_out, c_in, 3, 3});
                     Tensor b = random_tensor(rng, {c_out});
                     const Tensor probe = conv2d(x, k, b, stride, pad);
                     const auto w = random_weights(rng, probe.numel());
                     return check_gradients([&] { return weighted_sum(conv2d(x, k, b, stride, pad), w); }, {x, k, b});
                   }});
  cases.push_back({"maxpool2d", [](Rng& rng) {
                     Tensor x = spaced_tensor(rng, {2, 4, 4});
                     const auto w = random_weights(rng, 2 * 2 * 2);
                     return check_gradients([&] { return weighted_sum(maxpool2d(x, 2, 2), w); }, {x});
                   }});
  cases.push_back({"relu", [](Rng& rng) {
                     Tensor x = spaced_tensor(rng, {3, 4});
                     const auto w = random_weights(rng, 12);
                     return check_gradients([&] { return weighted_sum(relu(x), w); }, {x});
                   }});
  cases.push_back({"dense", [](Rng& rng) {
                     Tensor x = random_tensor(rng, {3, 4});
                     Tensor W = random_tensor(rng, {5, 4});
                     Tensor b = random_tensor(rng, {5});
                     const auto w = random_weights(rng, 15);
                     return check_gradients([&] { return weighted_sum(dense(x, W, b), w); }, {x, W, b});
                   }});
  cases.push_back({"linear", [](Rng& rng) {
                     Tensor x = random_tensor(rng, {4});
                     Tensor W = random_tensor(rng, {3, 4});
                     const auto w = random_weights(rng, 3);
                     return check_gradients([&] { return weighted_sum(linear(x, W), w); }, {x, W});
                   }});
  cases.push_back({"softmax", [](Rng& rng) {
                     Tensor x = random_tensor(rng, {3, 4}, -3.0, 3.0);
                     const auto w = random_weights(rng, 12);
                     return check_gradients([&] { return weighted_sum(softmax(x), w); }, {x});
                   }});
  cases.push_back({"concat", [](Rng& rng) {
                     const bool batched = bernoulli(rng, 0.5);
                     Tensor a = batched ? random_tensor(rng, {2, 3}) : random_tensor(rng, {3});
                     Tensor b = batched ? random_tensor(rng, {2, 2}) : random_tensor(rng, {2});
                     const auto w = random_weights(rng, batched ? 10 : 5);
                     return check_gradients([&] { return weighted_sum(concat(a, b), w); }, {a, b});
                   }});
  cases.push_back({"flatten", [](Rng& rng) {
                     Tensor x = random_tensor(rng, {2, 2, 3});
                     const auto w = random_weights(rng, 12);
                     return check_gradients([&] { return weighted_sum(flatten(x), w); }, {x});
                   }});
  cases.push_back({"reshape", [](Rng& rng) {
                     Tensor x = random_tensor(rng, {2, 6});
                     const auto w = random_weights(rng, 12);
                     return check_gradients([&] { return weighted_sum(reshape(x, {3, 4}), w); }, {x});
                   }});
  cases.push_back({"add", [](Rng& rng) {
                     Tensor a = random_tensor(rng, {2, 3});
                     Tensor b = random_tensor(rng, {2, 3});
                     const auto w = random_weights(rng, 6);
                     return check_gradients([&] { return weighted_sum(add(a, b), w); }, {a, b});
                   }});
  cases.push_back({"mul", [](Rng& rng) {
                     Tensor a = random_tensor(rng, {2, 3});
                     Tensor b = random_tensor(rng, {2, 3});
                     const auto w = random_weights(rng, 6);
                     return check_gradients([&] { return weighted_sum(mul(a, b), w); }, {a, b});
                   }});
  cases.push_back({"scale", [](Rng& rng) {
                     Tensor a = random_tensor(rng, {4});
                     const double c = uniform(rng, -3.0, 3.0);
                     const auto w = random_weights(rng, 4);
                     return check_gradients([&] { return weighted_sum(scale(a, c), w); }, {a});
                   }});
  cases.push_back({"sum", [](Rng& rng) {
                     Tensor a = random_tensor(rng, {2, 3});
                     return check_gradients([&] { return scale(sum(mul(a, a)), 0.5); }, {a});
                   }});
  cases.push_back({"mean", [](Rng& rng) {
                     Tensor a = random_tensor(rng, {5});
                     return check_gradients([&] { return mean(mul(a, a)); }, {a});
                   }});
  cases.push_back({"element", [](Rng& rng) {
                     Tensor a = random_tensor(rng, {2, 3});
                     const std::size_t idx = uniform_index(rng, 6);
                     return check_gradients([&] { return element(mul(a, a), idx); }, {a});
                   }});
  cases.push_back({"l2_normalize_rows", [](Rng& rng) {
                     Tensor a = random_tensor(rng, {3, 4}, 0.2, 1.0);
                     const auto w = random_weights(rng, 12);
                     return check_gradients([&] { return weighted_sum(l2_normalize_rows(a), w); }, {a});
                   }});
  cases.push_back({"bce_loss", [](Rng& rng) {
                     Tensor p = random_probs(rng, 4);
                     const auto y = random_labels(rng, 4);
                     return check_gradients([&] { return bce_loss(p, y); }, {p});
                   }});
  cases.push_back({"bce_loss(softmax)", [](Rng& rng) {
                     Tensor x = random_tensor(rng, {4, 2}, -2.0, 2.0);
                     const auto y = random_labels(rng, 4);
                     return check_gradients([&] { return bce_loss(softmax(x), y); }, {x});
                   }});
  cases.push_back({"softmax_cross_entropy", [](Rng& rng) {
                     Tensor x = random_tensor(rng, {4, 3}, -2.0, 2.0);
                     const auto y = random_labels(rng, 4, 3);
                     return check_gradients([&] { return softmax_cross_entropy(x, y); }, {x});
                   }});
  cases.push_back({"cosine_logits", [](Rng& rng) {
                     Tensor f = random_tensor(rng, {3, 4});
                     Tensor a = random_tensor(rng, {2, 4});
                     const auto w = random_weights(rng, 6);
                     return check_gradients([&] { return weighted_sum(cosine_logits(f, a), w); }, {f, a});
                   }});
  cases.push_back({"margin_scale", [](Rng& rng) {
                     Tensor c = random_tensor(rng, {3, 2});
                     const auto y = random_labels(rng, 3);
                     const auto w = random_weights(rng, 6);
                     return check_gradients([&] { return weighted_sum(margin_scale(c, y, 4.0, 0.3), w); }, {c});
                   }});
  cases.push_back({"lmcl_loss", [](Rng& rng) {
                     Tensor f = random_tensor(rng, {4, 5});
                     LmclParams params{uniform(rng, 1.0, 8.0), uniform(rng, 0.0, 0.5), random_tensor(rng, {2, 5})};
                     const auto y = random_labels(rng, 4);
                     return check_gradients([&] { return lmcl_loss(f, params, y); }, {f, params.anchors});
                   }});
  return cases;
}

}  // namespace fuselab::testing
