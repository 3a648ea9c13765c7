#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fuselab/rng.hpp"
#include "fuselab/tensor.hpp"

namespace fuselab::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = uniform(rng, lo, hi);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

// Values with pairwise gaps of at least `gap`, so that max/relu kinks stay
// further than a finite-difference step away.
inline Tensor spaced_tensor(Rng& rng, Shape shape, double gap = 0.01, bool requires_grad = true) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = (static_cast<double>(i) - static_cast<double>(n) / 2.0) * gap;
  shuffle(values.begin(), values.end(), rng);
  for (double& v : values) v += gap * 0.5 * (v >= 0 ? 1.0 : -1.0);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

struct GradCheck {
  double max_rel = 0.0;
  double max_abs_small = 0.0;  // absolute error where |analytic|,|numeric| < 1e-6
  bool ok(double rel_tol = 1e-4, double abs_tol = 1e-7) const { return max_rel <= rel_tol && max_abs_small <= abs_tol; }
};

// Central differences of a scalar function with respect to every entry of
// every input, compared against one reverse-mode sweep.
inline GradCheck check_gradients(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double eps = 1e-4) {
  for (Tensor& t : inputs) t.zero_grad();
  Tensor loss = f();
  backward(loss);
  GradCheck result;
  for (Tensor& t : inputs) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      double plus;
      double minus;
      {
        NoGradGuard guard;
        data[i] = saved + eps;
        plus = f().item();
        data[i] = saved - eps;
        minus = f().item();
      }
      data[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double denom = std::max(std::abs(analytic[i]), std::abs(numeric));
      const double err = std::abs(analytic[i] - numeric);
      if (denom < 1e-6) {
        result.max_abs_small = std::max(result.max_abs_small, err);
      } else {
        result.max_rel = std::max(result.max_rel, err / denom);
      }
    }
  }
  return result;
}

// sum(w * y) with fixed random weights, turning any output into a scalar that
// exercises every element of the output Jacobian.
inline Tensor weighted_sum(const Tensor& y, const std::vector<double>& w);

inline std::vector<double> random_weights(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  for (double& v : w) v = uniform(rng, -1.0, 1.0);
  return w;
}

}  // namespace fuselab::testing

#include "fuselab/ops.hpp"

namespace fuselab::testing {

inline Tensor weighted_sum(const Tensor& y, const std::vector<double>& w) {
  return sum(mul(y, Tensor(y.shape(), w)));
}

// Direct loop oracles.
inline std::vector<double> conv_oracle(const Tensor& x, const Tensor& k, const Tensor& b, int stride, int pad) {
  const std::size_t c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t c_out = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(c_out * oh * ow);
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        double acc = b.at(o);
        for (std::size_t c = 0; c < c_in; ++c)
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
              const long iy = static_cast<long>(y * stride + i) - pad;
              const long ix = static_cast<long>(xx * stride + j) - pad;
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
              acc += x.at((c * h + iy) * w + ix) * k.at(((o * c_in + c) * kh + i) * kw + j);
            }
        out[(o * oh + y) * ow + xx] = acc;
      }
  return out;
}

inline std::vector<double> pool_oracle(const Tensor& x, std::size_t window, std::size_t stride) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        double best = -1e300;
        for (std::size_t i = 0; i < window; ++i)
          for (std::size_t j = 0; j < window; ++j) best = std::max(best, x.at((ch * h + y * stride + i) * w + xx * stride + j));
        out[(ch * oh + y) * ow + xx] = best;
      }
  return out;
}

inline std::vector<double> dense_oracle(const Tensor& x, const Tensor& W, const Tensor& b) {
  const std::size_t m = W.dim(0), n = W.dim(1);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = b.at(i);
    for (std::size_t j = 0; j < n; ++j) acc += W.at(i * n + j) * x.at(j);
    out[i] = acc;
  }
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : 1e300;
}

// O(n^2) Mann-Whitney pair count.
inline double brute_force_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double concordant = 0.0;
  double ties = 0.0;
  double pos = 0.0;
  double neg = 0.0;
  for (int v : y) (v ? pos : neg) += 1.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      if (s[i] > s[j]) concordant += 1.0;
      else if (s[i] == s[j]) ties += 1.0;
    }
  }
  return (concordant + 0.5 * ties) / (pos * neg);
}

}  // namespace fuselab::testing
