#include "fuselab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fuselab/error.hpp"
#include "fuselab/ops.hpp"

namespace fuselab {

namespace {

std::size_t check_labels(const Tensor& scores, std::span<const int> labels, const char* op) {
  const std::size_t rows = scores.rank() == 1 ? 1 : scores.dim(0);
  const std::size_t k = scores.dim(scores.rank() - 1);
  if (scores.rank() > 2 || labels.size() != rows) {
    throw DimensionError(std::string(op) + ": " + std::to_string(labels.size()) +
                         " labels for scores of shape " + shape_to_string(scores.shape()));
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw ContractError(std::string(op) + ": label " + std::to_string(label) + " outside [0," +
                          std::to_string(k) + ")");
    }
  }
  return rows;
}

}  // namespace

const char* to_string(LossKind kind) { return kind == LossKind::Bce ? "bce" : "lmcl"; }

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "bce") return LossKind::Bce;
  if (name == "lmcl") return LossKind::Lmcl;
  throw ConfigError("loss must be \"bce\" or \"lmcl\", got \"" + name + "\"");
}

Tensor bce_loss(const Tensor& probs, std::span<const int> labels) {
  if (probs.dim(probs.rank() - 1) != 2) {
    throw DimensionError("bce_loss: expected two class probabilities, got " + shape_to_string(probs.shape()));
  }
  const std::size_t rows = check_labels(probs, labels, "bce_loss");
  const auto p = probs.data();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double q = std::clamp(p[r * 2 + static_cast<std::size_t>(labels[r])], kProbClamp, 1.0 - kProbClamp);
    total -= std::log(q);
  }
  std::vector<int> y(labels.begin(), labels.end());
  return Tensor::from_op("bce_loss", Shape{1}, {total / static_cast<double>(rows)}, {probs},
                         [y, rows](Node& node) {
                           const auto& p = node.inputs[0]->data;
                           auto& dp = node.inputs[0]->grad_buffer();
                           const double g = node.grad[0] / static_cast<double>(rows);
                           for (std::size_t r = 0; r < rows; ++r) {
                             const std::size_t idx = r * 2 + static_cast<std::size_t>(y[r]);
                             // Clamped probabilities have zero derivative.
                             if (p[idx] > kProbClamp && p[idx] < 1.0 - kProbClamp) dp[idx] -= g / p[idx];
                           }
                         });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const std::size_t rows = check_labels(logits, labels, "softmax_cross_entropy");
  const std::size_t k = logits.dim(logits.rank() - 1);
  const auto x = logits.data();
  auto probs = std::make_shared<std::vector<double>>(x.size());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data() + r * k;
    const double top = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - top);
    const double log_z = top + std::log(z);
    for (std::size_t j = 0; j < k; ++j) (*probs)[r * k + j] = std::exp(row[j] - log_z);
    total += log_z - row[labels[r]];
  }
  std::vector<int> y(labels.begin(), labels.end());
  return Tensor::from_op("softmax_cross_entropy", Shape{1}, {total / static_cast<double>(rows)}, {logits},
                         [probs, y, rows, k](Node& node) {
                           auto& dx = node.inputs[0]->grad_buffer();
                           const double g = node.grad[0] / static_cast<double>(rows);
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t j = 0; j < k; ++j) {
                               const double target = static_cast<int>(j) == y[r] ? 1.0 : 0.0;
                               dx[r * k + j] += g * ((*probs)[r * k + j] - target);
                             }
                           }
                         });
}

void validate(const LmclParams& params) {
  if (!(params.s > 0.0)) throw ContractError("lmcl: scale s must be positive");
  if (!(params.m >= 0.0 && params.m < 1.0)) throw ContractError("lmcl: margin m must lie in [0,1)");
  if (!params.anchors.defined() || params.anchors.rank() != 2) {
    throw ContractError("lmcl: anchors must be a [classes, features] matrix");
  }
}

Tensor cosine_logits(const Tensor& features, const Tensor& anchors) {
  if (anchors.rank() != 2 || features.dim(features.rank() - 1) != anchors.dim(1)) {
    throw DimensionError("cosine_logits: features " + shape_to_string(features.shape()) +
                         " incompatible with anchors " + shape_to_string(anchors.shape()));
  }
  return linear(l2_normalize_rows(features), l2_normalize_rows(anchors));
}

Tensor margin_scale(const Tensor& cosines, std::span<const int> labels, double s, double m) {
  const std::size_t rows = check_labels(cosines, labels, "margin_scale");
  const std::size_t k = cosines.dim(cosines.rank() - 1);
  std::vector<double> out(cosines.data().begin(), cosines.data().end());
  for (std::size_t r = 0; r < rows; ++r) out[r * k + static_cast<std::size_t>(labels[r])] -= m;
  for (double& v : out) v *= s;
  return Tensor::from_op("margin_scale", cosines.shape(), std::move(out), {cosines}, [s](Node& node) {
    auto& d = node.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * node.grad[i];
  });
}

Tensor lmcl_loss(const Tensor& features, const LmclParams& params, std::span<const int> labels) {
  validate(params);
  return softmax_cross_entropy(margin_scale(cosine_logits(features, params.anchors), labels, params.s, params.m),
                               labels);
}

Tensor lmcl_probs(const Tensor& features, const LmclParams& params) {
  validate(params);
  return softmax(scale(cosine_logits(features, params.anchors), params.s));
}

}  // namespace fuselab
