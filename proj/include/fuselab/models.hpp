#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fuselab/losses.hpp"
#include "fuselab/tensor.hpp"

namespace fuselab {

inline constexpr std::size_t kDescriptorWidth = 512;
inline constexpr std::size_t kFusionInputWidth = 2 * kDescriptorWidth;
inline constexpr std::size_t kClasses = 2;
inline constexpr std::array<std::size_t, 6> kFusionHiddenWidths{512, 256, 128, 64, 32, 16};

struct ConvLayer {
  Tensor kernels;  // [out, in, 3, 3]
  Tensor bias;     // [out]
};

struct DenseLayer {
  Tensor weights;  // [out, in]
  Tensor bias;     // [out]
};

/// Conv stack shape of the single-modality network. Each stage is a 3x3
/// same-padded conv, ReLU and a 2x2 max pool.
struct CnnArch {
  std::string variant = "basic";
  std::size_t input_size = 64;
  std::vector<std::size_t> channels{16, 32, 64};

  /// "basic" (16/32/64) or "deeper" (doubled widths).
  static CnnArch named(const std::string& variant, std::size_t input_size);
  std::size_t flattened_width() const;
};

/// What a network trains against and how it turns features into probabilities.
struct HeadConfig {
  LossKind loss = LossKind::Bce;
  double lmcl_s = 30.0;
  double lmcl_m = 0.35;
};

struct CnnParams {
  CnnArch arch;
  HeadConfig head_config;
  std::uint64_t seed = 0;
  std::vector<ConvLayer> convs;
  DenseLayer descriptor;  // flattened -> 512, ReLU applied
  DenseLayer head;        // 512 -> 2 (bypassed when training with LMCL)
  LmclParams lmcl;        // anchors [2, 512]

  /// Tensors updated by the optimizer for the configured loss.
  std::vector<Tensor> trainable() const;
  /// Every tensor, with stable names, in checkpoint order.
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
};

struct FusionParams {
  HeadConfig head_config;
  std::uint64_t seed = 0;
  bool normalize_inputs = false;  // L2-normalize each descriptor before concat
  std::vector<DenseLayer> hidden;  // widths kFusionHiddenWidths
  DenseLayer head;                 // 16 -> 2
  LmclParams lmcl;                 // anchors [2, 16]

  std::vector<Tensor> trainable() const;
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
};

CnnParams init_cnn_params(std::uint64_t seed, const CnnArch& arch, const HeadConfig& head = {});
FusionParams init_fusion_params(std::uint64_t seed, const HeadConfig& head = {}, bool normalize_inputs = false);

/// Deep copy; the result shares no storage with the source.
CnnParams clone(const CnnParams& params);
FusionParams clone(const FusionParams& params);

struct CnnOutput {
  Tensor descriptor;  // [512] or [N,512], post-ReLU
  Tensor logits;      // head output, or s*cos under LMCL
  Tensor probs;       // softmax(logits)
  std::vector<Tensor> conv_activations;  // post-ReLU, pre-pool, one per conv stage
};

/// input: [1,S,S] for one patch or [N,1,S,S] for a batch.
CnnOutput cnn_forward(const CnnParams& params, const Tensor& input);

struct FusionOutput {
  Tensor input;     // concatenated [1024] or [N,1024]
  Tensor features;  // last hidden layer (16 wide; pre-ReLU under LMCL)
  Tensor logits;
  Tensor probs;
};

/// desc_mg occupies the first 512 input slots, desc_us the last 512.
FusionOutput fusion_forward(const Tensor& desc_mg, const Tensor& desc_us, const FusionParams& params);

/// Training loss of a head: BCE on probs or LMCL on features.
Tensor head_loss(const HeadConfig& head, const Tensor& probs, const Tensor& features, const LmclParams& lmcl,
                 std::span<const int> labels);

}  // namespace fuselab
