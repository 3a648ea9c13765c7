#pragma once

#include <span>
#include <string>

#include "fuselab/tensor.hpp"

namespace fuselab {

enum class LossKind { Bce, Lmcl };

const char* to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before the log.
inline constexpr double kProbClamp = 1e-12;

/// Mean over the batch of -log p(true class). probs is [2] or [N,2].
Tensor bce_loss(const Tensor& probs, std::span<const int> labels);

/// Mean negative log-softmax of the true class, computed from logits directly.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Large-margin cosine loss settings plus the learnable class anchors [k,d].
struct LmclParams {
  double s = 30.0;
  double m = 0.35;
  Tensor anchors;
};

void validate(const LmclParams& params);

/// Cosines between L2-normalized feature rows and L2-normalized anchor rows.
/// features [d] or [N,d] -> [k] or [N,k].
Tensor cosine_logits(const Tensor& features, const Tensor& anchors);

/// s * (cos - m * onehot(label)).
Tensor margin_scale(const Tensor& cosines, std::span<const int> labels, double s, double m);

Tensor lmcl_loss(const Tensor& features, const LmclParams& params, std::span<const int> labels);

/// Inference-time class probabilities: softmax(s * cos), no margin.
Tensor lmcl_probs(const Tensor& features, const LmclParams& params);

}  // namespace fuselab
