#include "fuselab/models.hpp"

#include <cmath>

#include "fuselab/error.hpp"
#include "fuselab/ops.hpp"
#include "fuselab/rng.hpp"

namespace fuselab {

namespace {

// Output heads start near zero so that fresh networks predict close to 0.5.
constexpr double kHeadGain = 0.1;

Tensor uniform_fan_in(Rng& rng, Shape shape, std::size_t fan_in, double gain = 1.0) {
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = uniform(rng, -bound, bound);
  return Tensor(std::move(shape), std::move(values), true);
}

DenseLayer init_dense(Rng& rng, std::size_t in, std::size_t out, double gain = 1.0) {
  return {uniform_fan_in(rng, {out, in}, in, gain), Tensor({out}, 0.0, true)};
}

Tensor copy_param(const Tensor& t) { return t.defined() ? t.clone() : Tensor(); }

DenseLayer clone_layer(const DenseLayer& layer) { return {copy_param(layer.weights), copy_param(layer.bias)}; }

LmclParams make_lmcl(Rng& rng, const HeadConfig& head, std::size_t width) {
  LmclParams lmcl;
  lmcl.s = head.lmcl_s;
  lmcl.m = head.lmcl_m;
  lmcl.anchors = uniform_fan_in(rng, {kClasses, width}, width);
  return lmcl;
}

}  // namespace

CnnArch CnnArch::named(const std::string& variant, std::size_t input_size) {
  CnnArch arch;
  arch.input_size = input_size;
  arch.variant = variant;
  if (variant == "basic") {
    arch.channels = {16, 32, 64};
  } else if (variant == "deeper") {
    arch.channels = {32, 64, 128};
  } else {
    throw ConfigError("model.variant must be \"basic\" or \"deeper\", got \"" + variant + "\"");
  }
  const std::size_t reduction = std::size_t{1} << arch.channels.size();
  if (input_size < reduction || input_size % reduction != 0) {
    throw ConfigError("patch size " + std::to_string(input_size) + " must be a positive multiple of " +
                      std::to_string(reduction));
  }
  return arch;
}

std::size_t CnnArch::flattened_width() const {
  const std::size_t side = input_size >> channels.size();
  return channels.back() * side * side;
}

std::vector<Tensor> CnnParams::trainable() const {
  std::vector<Tensor> out;
  for (const ConvLayer& conv : convs) {
    out.push_back(conv.kernels);
    out.push_back(conv.bias);
  }
  out.push_back(descriptor.weights);
  out.push_back(descriptor.bias);
  if (head_config.loss == LossKind::Bce) {
    out.push_back(head.weights);
    out.push_back(head.bias);
  } else {
    out.push_back(lmcl.anchors);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> CnnParams::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const std::string prefix = "conv" + std::to_string(i + 1);
    out.emplace_back(prefix + ".kernels", convs[i].kernels);
    out.emplace_back(prefix + ".bias", convs[i].bias);
  }
  out.emplace_back("descriptor.weights", descriptor.weights);
  out.emplace_back("descriptor.bias", descriptor.bias);
  out.emplace_back("head.weights", head.weights);
  out.emplace_back("head.bias", head.bias);
  out.emplace_back("lmcl.anchors", lmcl.anchors);
  return out;
}

std::vector<Tensor> FusionParams::trainable() const {
  std::vector<Tensor> out;
  for (const DenseLayer& layer : hidden) {
    out.push_back(layer.weights);
    out.push_back(layer.bias);
  }
  if (head_config.loss == LossKind::Bce) {
    out.push_back(head.weights);
    out.push_back(head.bias);
  } else {
    out.push_back(lmcl.anchors);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> FusionParams::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    const std::string prefix = "fc" + std::to_string(i + 1);
    out.emplace_back(prefix + ".weights", hidden[i].weights);
    out.emplace_back(prefix + ".bias", hidden[i].bias);
  }
  out.emplace_back("head.weights", head.weights);
  out.emplace_back("head.bias", head.bias);
  out.emplace_back("lmcl.anchors", lmcl.anchors);
  return out;
}

CnnParams init_cnn_params(std::uint64_t seed, const CnnArch& arch, const HeadConfig& head) {
  Rng rng = make_rng(seed);
  CnnParams params;
  params.arch = arch;
  params.head_config = head;
  params.seed = seed;
  std::size_t in_channels = 1;
  for (std::size_t out_channels : arch.channels) {
    params.convs.push_back({uniform_fan_in(rng, {out_channels, in_channels, 3, 3}, in_channels * 9),
                            Tensor({out_channels}, 0.0, true)});
    in_channels = out_channels;
  }
  params.descriptor = init_dense(rng, arch.flattened_width(), kDescriptorWidth);
  params.head = init_dense(rng, kDescriptorWidth, kClasses, kHeadGain);
  params.lmcl = make_lmcl(rng, head, kDescriptorWidth);
  return params;
}

FusionParams init_fusion_params(std::uint64_t seed, const HeadConfig& head, bool normalize_inputs) {
  Rng rng = make_rng(seed);
  FusionParams params;
  params.head_config = head;
  params.seed = seed;
  params.normalize_inputs = normalize_inputs;
  std::size_t in = kFusionInputWidth;
  for (std::size_t width : kFusionHiddenWidths) {
    params.hidden.push_back(init_dense(rng, in, width));
    in = width;
  }
  params.head = init_dense(rng, in, kClasses, kHeadGain);
  params.lmcl = make_lmcl(rng, head, in);
  return params;
}

CnnParams clone(const CnnParams& params) {
  CnnParams out = params;
  for (ConvLayer& conv : out.convs) conv = {copy_param(conv.kernels), copy_param(conv.bias)};
  out.descriptor = clone_layer(params.descriptor);
  out.head = clone_layer(params.head);
  out.lmcl.anchors = copy_param(params.lmcl.anchors);
  return out;
}

FusionParams clone(const FusionParams& params) {
  FusionParams out = params;
  for (DenseLayer& layer : out.hidden) layer = clone_layer(layer);
  out.head = clone_layer(params.head);
  out.lmcl.anchors = copy_param(params.lmcl.anchors);
  return out;
}

CnnOutput cnn_forward(const CnnParams& params, const Tensor& input) {
  const std::size_t size = params.arch.input_size;
  const bool batched = input.rank() == 4;
  if ((input.rank() != 3 && !batched) || input.dim(input.rank() - 3) != 1 ||
      input.dim(input.rank() - 2) != size || input.dim(input.rank() - 1) != size) {
    throw DimensionError("cnn_forward: expected a 1x" + std::to_string(size) + "x" + std::to_string(size) +
                         " patch, got " + shape_to_string(input.shape()));
  }
  CnnOutput out;
  Tensor x = input;
  for (const ConvLayer& conv : params.convs) {
    Tensor activation = relu(conv2d(x, conv.kernels, conv.bias, 1, 1));
    out.conv_activations.push_back(activation);
    x = maxpool2d(activation, 2, 2);
  }
  x = batched ? flatten(x) : reshape(x, Shape{x.numel()});
  out.descriptor = relu(dense(x, params.descriptor.weights, params.descriptor.bias));
  if (params.head_config.loss == LossKind::Bce) {
    out.logits = dense(out.descriptor, params.head.weights, params.head.bias);
  } else {
    out.logits = scale(cosine_logits(out.descriptor, params.lmcl.anchors), params.lmcl.s);
  }
  out.probs = softmax(out.logits);
  return out;
}

FusionOutput fusion_forward(const Tensor& desc_mg, const Tensor& desc_us, const FusionParams& params) {
  if (desc_mg.rank() != desc_us.rank() || desc_mg.dim(desc_mg.rank() - 1) != kDescriptorWidth ||
      desc_us.dim(desc_us.rank() - 1) != kDescriptorWidth) {
    throw DimensionError("fusion_forward: expected two 512-wide descriptors, got " +
                         shape_to_string(desc_mg.shape()) + " and " + shape_to_string(desc_us.shape()));
  }
  FusionOutput out;
  out.input = params.normalize_inputs ? concat(l2_normalize_rows(desc_mg), l2_normalize_rows(desc_us))
                                      : concat(desc_mg, desc_us);
  Tensor x = out.input;
  const bool lmcl = params.head_config.loss == LossKind::Lmcl;
  for (std::size_t i = 0; i < params.hidden.size(); ++i) {
    x = dense(x, params.hidden[i].weights, params.hidden[i].bias);
    // LMCL consumes the last hidden layer pre-activation: a 16-wide ReLU output
    // is zero often enough to make the cosine undefined.
    if (!(lmcl && i + 1 == params.hidden.size())) x = relu(x);
  }
  out.features = x;
  if (params.head_config.loss == LossKind::Bce) {
    out.logits = dense(x, params.head.weights, params.head.bias);
  } else {
    out.logits = scale(cosine_logits(x, params.lmcl.anchors), params.lmcl.s);
  }
  out.probs = softmax(out.logits);
  return out;
}

Tensor head_loss(const HeadConfig& head, const Tensor& probs, const Tensor& features, const LmclParams& lmcl,
                 std::span<const int> labels) {
  if (head.loss == LossKind::Bce) return bce_loss(probs, labels);
  return lmcl_loss(features, lmcl, labels);
}

}  // namespace fuselab
