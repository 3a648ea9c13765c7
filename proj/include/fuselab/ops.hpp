#pragma once

#include <cstddef>

#include "fuselab/tensor.hpp"

namespace fuselab {

// Differentiable operations. Every op accepts a single sample (rank as
// documented) or a batch with one extra leading dimension; shapes are never
// broadcast.

/// Cross-correlation (no kernel flip) plus bias.
/// input [C,H,W] or [N,C,H,W]; kernels [Cout,C,kH,kW]; bias [Cout].
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride = 1,
              int padding = 0);

/// Max over window x window cells. Backward routes to the first row-major argmax.
Tensor maxpool2d(const Tensor& input, int window, int stride);

Tensor relu(const Tensor& input);

/// W x + b. input [n] or [N,n]; weights [m,n]; bias [m].
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

/// x W^T without bias. input [n] or [N,n]; weights [m,n].
Tensor linear(const Tensor& input, const Tensor& weights);

/// Max-subtracted softmax over the last axis of [k] or [N,k].
Tensor softmax(const Tensor& logits);

/// Rank-1: a followed by b. Rank-2: column-wise join of equal-row matrices.
/// An undefined b returns a unchanged.
Tensor concat(const Tensor& a, const Tensor& b);

/// Collapses everything after the first axis: [N,...] -> [N, rest].
Tensor flatten(const Tensor& input);
Tensor reshape(const Tensor& input, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& input, double factor);
Tensor sum(const Tensor& input);
Tensor mean(const Tensor& input);

/// Scalar view of one element (flat row-major index).
Tensor element(const Tensor& input, std::size_t flat_index);

/// Divides each row of [d] or [N,d] by its L2 norm. Zero rows throw
/// DegenerateInputError.
Tensor l2_normalize_rows(const Tensor& input);

}  // namespace fuselab
