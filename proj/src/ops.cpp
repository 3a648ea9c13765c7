#include "fuselab/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fuselab/error.hpp"

namespace fuselab {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

[[noreturn]] void dimension_error(const std::string& op, const Tensor& a, const Tensor& b) {
  throw DimensionError(op + ": incompatible shapes " + shape_to_string(a.shape()) + " and " +
                       shape_to_string(b.shape()));
}

bool wants_grad(const Node& node, std::size_t input) { return node.inputs[input]->requires_grad; }

// Batch view of a tensor whose trailing `sample_rank` axes form one sample.
struct BatchView {
  std::size_t batch;
  bool batched;
};

BatchView batch_view(const Tensor& t, std::size_t sample_rank, const char* op) {
  if (t.rank() == sample_rank) return {1, false};
  if (t.rank() == sample_rank + 1) return {t.dim(0), true};
  throw DimensionError(std::string(op) + ": expected rank " + std::to_string(sample_rank) +
                       " or " + std::to_string(sample_rank + 1) + ", got shape " +
                       shape_to_string(t.shape()));
}

}  // namespace

namespace {

// Output columns [lo, hi) whose input coordinate o*stride - padding + k lies in [0, extent).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t extent, long stride, long padding,
                                                long k) {
  const long first = padding - k;
  long lo = first <= 0 ? 0 : (first + stride - 1) / stride;
  long hi = (static_cast<long>(extent) - 1 + padding - k);
  hi = hi < 0 ? 0 : hi / stride + 1;
  lo = std::min<long>(lo, static_cast<long>(out));
  hi = std::clamp<long>(hi, lo, static_cast<long>(out));
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

struct ConvGeometry {
  std::size_t batch, in_c, in_h, in_w, out_c, kh, kw, out_h, out_w;
  long stride, padding;
  std::size_t patch() const { return in_c * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
  std::size_t width() const { return batch * pixels(); }  // columns of the batched im2col matrix
};

// cols is [patch, batch * pixels]; sample n owns columns [n*pixels, (n+1)*pixels).
void im2col(const ConvGeometry& g, const double* x, double* cols) {
  const std::size_t pixels = g.pixels();
  const std::size_t width = g.width();
  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* src = x + n * g.in_c * g.in_h * g.in_w;
    for (std::size_t c = 0; c < g.in_c; ++c) {
      for (std::size_t ki = 0; ki < g.kh; ++ki) {
        const auto [y_lo, y_hi] = valid_range(g.out_h, g.in_h, g.stride, g.padding, static_cast<long>(ki));
        for (std::size_t kj = 0; kj < g.kw; ++kj) {
          const auto [x_lo, x_hi] = valid_range(g.out_w, g.in_w, g.stride, g.padding, static_cast<long>(kj));
          double* row = cols + ((c * g.kh + ki) * g.kw + kj) * width + n * pixels;
          std::fill(row, row + y_lo * g.out_w, 0.0);
          for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
            const std::size_t iy = oy * g.stride - g.padding + ki;
            double* dst = row + oy * g.out_w;
            const double* line = src + (c * g.in_h + iy) * g.in_w;
            std::fill(dst, dst + x_lo, 0.0);
            for (std::size_t ox = x_lo; ox < x_hi; ++ox) dst[ox] = line[ox * g.stride - g.padding + kj];
            std::fill(dst + x_hi, dst + g.out_w, 0.0);
          }
          std::fill(row + y_hi * g.out_w, row + pixels, 0.0);
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* dx) {
  const std::size_t pixels = g.pixels();
  const std::size_t width = g.width();
  for (std::size_t n = 0; n < g.batch; ++n) {
    double* dst = dx + n * g.in_c * g.in_h * g.in_w;
    for (std::size_t c = 0; c < g.in_c; ++c) {
      for (std::size_t ki = 0; ki < g.kh; ++ki) {
        const auto [y_lo, y_hi] = valid_range(g.out_h, g.in_h, g.stride, g.padding, static_cast<long>(ki));
        for (std::size_t kj = 0; kj < g.kw; ++kj) {
          const auto [x_lo, x_hi] = valid_range(g.out_w, g.in_w, g.stride, g.padding, static_cast<long>(kj));
          const double* row = cols + ((c * g.kh + ki) * g.kw + kj) * width + n * pixels;
          for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
            const std::size_t iy = oy * g.stride - g.padding + ki;
            const double* from = row + oy * g.out_w;
            double* line = dst + (c * g.in_h + iy) * g.in_w;
            for (std::size_t ox = x_lo; ox < x_hi; ++ox) line[ox * g.stride - g.padding + kj] += from[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride,
              int padding) {
  const BatchView bv = batch_view(input, 3, "conv2d");
  if (kernels.rank() != 4 || bias.rank() != 1 || bias.dim(0) != kernels.dim(0)) {
    dimension_error("conv2d", kernels, bias);
  }
  ConvGeometry g{};
  g.batch = bv.batch;
  g.in_c = input.dim(input.rank() - 3);
  g.in_h = input.dim(input.rank() - 2);
  g.in_w = input.dim(input.rank() - 1);
  g.out_c = kernels.dim(0);
  g.kh = kernels.dim(2);
  g.kw = kernels.dim(3);
  if (kernels.dim(1) != g.in_c) dimension_error("conv2d", input, kernels);
  if (stride < 1 || padding < 0) {
    throw ContractError("conv2d: stride must be >= 1 and padding >= 0");
  }
  g.stride = stride;
  g.padding = padding;
  const long padded_h = static_cast<long>(g.in_h) + 2L * padding;
  const long padded_w = static_cast<long>(g.in_w) + 2L * padding;
  if (static_cast<long>(g.kh) > padded_h || static_cast<long>(g.kw) > padded_w) {
    dimension_error("conv2d", input, kernels);
  }
  g.out_h = static_cast<std::size_t>((padded_h - static_cast<long>(g.kh)) / stride + 1);
  g.out_w = static_cast<std::size_t>((padded_w - static_cast<long>(g.kw)) / stride + 1);
  const std::size_t patch = g.patch();
  const std::size_t pixels = g.pixels();
  const std::size_t width = g.width();
  const std::size_t out_sample = g.out_c * pixels;

  auto cols = std::make_shared<std::vector<double>>(patch * width);
  im2col(g, input.data().data(), cols->data());

  // One GEMM for the whole batch, then scatter [Cout, N*pixels] into [N, Cout, pixels].
  RowMatrix y(g.out_c, width);
  y.noalias() = ConstMatrixMap(kernels.data().data(), g.out_c, patch) * ConstMatrixMap(cols->data(), patch, width);
  std::vector<double> out(g.batch * out_sample);
  const auto b = bias.data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t c = 0; c < g.out_c; ++c) {
      const double* from = y.data() + c * width + n * pixels;
      double* to = out.data() + n * out_sample + c * pixels;
      for (std::size_t i = 0; i < pixels; ++i) to[i] = from[i] + b[c];
    }
  }

  Shape out_shape = bv.batched ? Shape{g.batch, g.out_c, g.out_h, g.out_w} : Shape{g.out_c, g.out_h, g.out_w};
  return Tensor::from_op(
      "conv2d", std::move(out_shape), std::move(out), {input, kernels, bias},
      [g, cols](Node& node) {
        const std::size_t patch = g.patch();
        const std::size_t pixels = g.pixels();
        const std::size_t width = g.width();
        const std::size_t out_sample = g.out_c * pixels;
        RowMatrix dy(g.out_c, width);
        for (std::size_t n = 0; n < g.batch; ++n) {
          for (std::size_t c = 0; c < g.out_c; ++c) {
            std::copy_n(node.grad.data() + n * out_sample + c * pixels, pixels, dy.data() + c * width + n * pixels);
          }
        }
        if (wants_grad(node, 1)) {
          MatrixMap(node.inputs[1]->grad_buffer().data(), g.out_c, patch).noalias() +=
              dy * ConstMatrixMap(cols->data(), patch, width).transpose();
        }
        if (wants_grad(node, 2)) {
          VectorMap(node.inputs[2]->grad_buffer().data(), g.out_c) += dy.rowwise().sum();
        }
        if (wants_grad(node, 0)) {
          RowMatrix dcol(patch, width);
          dcol.noalias() = ConstMatrixMap(node.inputs[1]->data.data(), g.out_c, patch).transpose() * dy;
          col2im_add(g, dcol.data(), node.inputs[0]->grad_buffer().data());
        }
      });
}

Tensor maxpool2d(const Tensor& input, int window, int stride) {
  const BatchView bv = batch_view(input, 3, "maxpool2d");
  if (window < 1 || stride < 1) throw ContractError("maxpool2d: window and stride must be >= 1");
  const std::size_t channels = input.dim(input.rank() - 3);
  const std::size_t in_h = input.dim(input.rank() - 2);
  const std::size_t in_w = input.dim(input.rank() - 1);
  const auto win = static_cast<std::size_t>(window);
  if (win > in_h || win > in_w) {
    throw DimensionError("maxpool2d: window " + std::to_string(window) + " exceeds input " +
                         shape_to_string(input.shape()));
  }
  const std::size_t out_h = (in_h - win) / static_cast<std::size_t>(stride) + 1;
  const std::size_t out_w = (in_w - win) / static_cast<std::size_t>(stride) + 1;
  const std::size_t planes = bv.batch * channels;
  std::vector<double> out(planes * out_h * out_w);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto x = input.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * in_h * in_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        std::size_t best = base + oy * stride * in_w + ox * stride;
        for (std::size_t dy = 0; dy < win; ++dy) {
          for (std::size_t dx = 0; dx < win; ++dx) {
            const std::size_t idx = base + (oy * stride + dy) * in_w + ox * stride + dx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (p * out_h + oy) * out_w + ox;
        out[o] = x[best];
        (*argmax)[o] = best;
      }
    }
  }
  Shape out_shape = bv.batched ? Shape{bv.batch, channels, out_h, out_w} : Shape{channels, out_h, out_w};
  return Tensor::from_op("maxpool2d", std::move(out_shape), std::move(out), {input},
                         [argmax](Node& node) {
                           auto& dx = node.inputs[0]->grad_buffer();
                           for (std::size_t o = 0; o < argmax->size(); ++o) {
                             dx[(*argmax)[o]] += node.grad[o];
                           }
                         });
}

Tensor relu(const Tensor& input) {
  std::vector<double> out(input.data().begin(), input.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return Tensor::from_op("relu", input.shape(), std::move(out), {input}, [](Node& node) {
    const auto& x = node.inputs[0]->data;
    auto& dx = node.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > 0.0) dx[i] += node.grad[i];
    }
  });
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (bias.rank() != 1 || weights.rank() != 2 || bias.dim(0) != weights.dim(0)) {
    dimension_error("dense", weights, bias);
  }
  Tensor y = linear(input, weights);
  const std::size_t m = weights.dim(0);
  const std::size_t rows = y.numel() / m;
  std::vector<double> out(y.data().begin(), y.data().end());
  const auto b = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < m; ++j) out[r * m + j] += b[j];
  }
  return Tensor::from_op("dense", y.shape(), std::move(out), {y, bias}, [rows, m](Node& node) {
    if (wants_grad(node, 0)) {
      auto& dy = node.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < dy.size(); ++i) dy[i] += node.grad[i];
    }
    if (wants_grad(node, 1)) {
      auto& db = node.inputs[1]->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < m; ++j) db[j] += node.grad[r * m + j];
      }
    }
  });
}

Tensor linear(const Tensor& input, const Tensor& weights) {
  const BatchView bv = batch_view(input, 1, "dense");
  if (weights.rank() != 2) dimension_error("dense", input, weights);
  const std::size_t n = input.dim(input.rank() - 1);
  const std::size_t m = weights.dim(0);
  if (weights.dim(1) != n) dimension_error("dense", input, weights);
  std::vector<double> out(bv.batch * m);
  const ConstMatrixMap x(input.data().data(), bv.batch, n);
  const ConstMatrixMap w(weights.data().data(), m, n);
  MatrixMap(out.data(), bv.batch, m).noalias() = x * w.transpose();
  Shape out_shape = bv.batched ? Shape{bv.batch, m} : Shape{m};
  const std::size_t batch = bv.batch;
  return Tensor::from_op("linear", std::move(out_shape), std::move(out), {input, weights},
                         [batch, n, m](Node& node) {
                           const ConstMatrixMap g(node.grad.data(), batch, m);
                           if (wants_grad(node, 0)) {
                             const ConstMatrixMap w(node.inputs[1]->data.data(), m, n);
                             MatrixMap(node.inputs[0]->grad_buffer().data(), batch, n).noalias() += g * w;
                           }
                           if (wants_grad(node, 1)) {
                             const ConstMatrixMap x(node.inputs[0]->data.data(), batch, n);
                             MatrixMap(node.inputs[1]->grad_buffer().data(), m, n).noalias() +=
                                 g.transpose() * x;
                           }
                         });
}

Tensor softmax(const Tensor& logits) {
  const BatchView bv = batch_view(logits, 1, "softmax");
  const std::size_t k = logits.dim(logits.rank() - 1);
  if (k < 2) throw DimensionError("softmax: needs at least 2 classes, got " + shape_to_string(logits.shape()));
  const auto x = logits.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < bv.batch; ++r) {
    const double* row = x.data() + r * k;
    double* y = out.data() + r * k;
    const double top = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += (y[j] = std::exp(row[j] - top));
    for (std::size_t j = 0; j < k; ++j) y[j] /= total;
  }
  const std::size_t rows = bv.batch;
  return Tensor::from_op("softmax", logits.shape(), std::move(out), {logits}, [rows, k](Node& node) {
    auto& dx = node.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = node.data.data() + r * k;
      const double* g = node.grad.data() + r * k;
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < k; ++j) dx[r * k + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (!b.defined()) return a;
  if (a.rank() != b.rank() || a.rank() < 1 || a.rank() > 2) {
    throw DimensionError("concat: expected two rank-1 or two rank-2 tensors, got " +
                         shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
  }
  const std::size_t rows = a.rank() == 1 ? 1 : a.dim(0);
  if (a.rank() == 2 && b.dim(0) != rows) dimension_error("concat", a, b);
  const std::size_t na = a.dim(a.rank() - 1);
  const std::size_t nb = b.dim(b.rank() - 1);
  std::vector<double> out(rows * (na + nb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().data() + r * na, na, out.data() + r * (na + nb));
    std::copy_n(b.data().data() + r * nb, nb, out.data() + r * (na + nb) + na);
  }
  Shape shape = a.rank() == 1 ? Shape{na + nb} : Shape{rows, na + nb};
  return Tensor::from_op("concat", std::move(shape), std::move(out), {a, b}, [rows, na, nb](Node& node) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* g = node.grad.data() + r * (na + nb);
      if (wants_grad(node, 0)) {
        double* da = node.inputs[0]->grad_buffer().data() + r * na;
        for (std::size_t i = 0; i < na; ++i) da[i] += g[i];
      }
      if (wants_grad(node, 1)) {
        double* db = node.inputs[1]->grad_buffer().data() + r * nb;
        for (std::size_t i = 0; i < nb; ++i) db[i] += g[na + i];
      }
    }
  });
}

Tensor reshape(const Tensor& input, Shape shape) {
  if (shape_numel(shape) != input.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(input.shape()) + " as " +
                         shape_to_string(shape));
  }
  std::vector<double> out(input.data().begin(), input.data().end());
  return Tensor::from_op("reshape", std::move(shape), std::move(out), {input}, [](Node& node) {
    auto& dx = node.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += node.grad[i];
  });
}

Tensor flatten(const Tensor& input) {
  if (input.rank() < 2) throw DimensionError("flatten: needs rank >= 2, got " + shape_to_string(input.shape()));
  return reshape(input, Shape{input.dim(0), input.numel() / input.dim(0)});
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) dimension_error("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor::from_op("add", a.shape(), std::move(out), {a, b}, [](Node& node) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants_grad(node, k)) continue;
      auto& d = node.inputs[k]->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += node.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) dimension_error("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor::from_op("mul", a.shape(), std::move(out), {a, b}, [](Node& node) {
    const auto& x = node.inputs[0]->data;
    const auto& y = node.inputs[1]->data;
    if (wants_grad(node, 0)) {
      auto& d = node.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += node.grad[i] * y[i];
    }
    if (wants_grad(node, 1)) {
      auto& d = node.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += node.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& input, double factor) {
  std::vector<double> out(input.data().begin(), input.data().end());
  for (double& v : out) v *= factor;
  return Tensor::from_op("scale", input.shape(), std::move(out), {input}, [factor](Node& node) {
    auto& d = node.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * node.grad[i];
  });
}

Tensor sum(const Tensor& input) {
  double total = 0.0;
  for (double v : input.data()) total += v;
  return Tensor::from_op("sum", Shape{1}, {total}, {input}, [](Node& node) {
    auto& d = node.inputs[0]->grad_buffer();
    for (double& v : d) v += node.grad[0];
  });
}

Tensor mean(const Tensor& input) { return scale(sum(input), 1.0 / static_cast<double>(input.numel())); }

Tensor element(const Tensor& input, std::size_t flat_index) {
  if (flat_index >= input.numel()) {
    throw DimensionError("element: index " + std::to_string(flat_index) + " outside " +
                         shape_to_string(input.shape()));
  }
  return Tensor::from_op("element", Shape{1}, {input.data()[flat_index]}, {input},
                         [flat_index](Node& node) { node.inputs[0]->grad_buffer()[flat_index] += node.grad[0]; });
}

Tensor l2_normalize_rows(const Tensor& input) {
  const BatchView bv = batch_view(input, 1, "l2_normalize_rows");
  const std::size_t d = input.dim(input.rank() - 1);
  const auto x = input.data();
  std::vector<double> out(x.size());
  auto norms = std::make_shared<std::vector<double>>(bv.batch);
  for (std::size_t r = 0; r < bv.batch; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += x[r * d + j] * x[r * d + j];
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0)) {
      throw DegenerateInputError("l2_normalize_rows: row " + std::to_string(r) + " has zero norm");
    }
    (*norms)[r] = norm;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x[r * d + j] / norm;
  }
  return Tensor::from_op("l2_normalize_rows", input.shape(), std::move(out), {input},
                         [norms, d](Node& node) {
                           auto& dx = node.inputs[0]->grad_buffer();
                           for (std::size_t r = 0; r < norms->size(); ++r) {
                             const double* y = node.data.data() + r * d;
                             const double* g = node.grad.data() + r * d;
                             double dot = 0.0;
                             for (std::size_t j = 0; j < d; ++j) dot += y[j] * g[j];
                             for (std::size_t j = 0; j < d; ++j) {
                               dx[r * d + j] += (g[j] - y[j] * dot) / (*norms)[r];
                             }
                           }
                         });
}

}  // namespace fuselab
