#pragma once

#include <string>

#include "fuselab/image.hpp"
#include "fuselab/models.hpp"

namespace fuselab {

struct Heatmap {
  Image coarse;     // conv layer resolution, values in [0,1]
  Image upsampled;  // patch resolution
  int target_class = 1;
  std::string layer;
};

/// ReLU(sum_c mean(grads_c) * activations_c) for one [C,H,W] activation and
/// its gradient. Not normalized.
Image grad_cam_map(const Tensor& activations, const Tensor& grads);

/// Scales to max 1; an all-zero map stays zero.
void normalize_max(Image& map);

/// Bilinear resize with half-pixel centres and edge clamping.
Image upsample_bilinear(const Image& src, std::size_t rows, std::size_t cols);

/// Conv layer ids are "conv1".."convK"; an empty id means the last one.
std::string resolve_layer(const CnnParams& params, const std::string& layer);

/// Gradients are taken of the target class logit (pre-softmax). The
/// parameters are not modified.
Heatmap grad_cam(const CnnParams& params, const Patch& patch, int target_class, const std::string& layer = "");

/// Red tint proportional to heat over the grayscale patch.
RgbImage overlay(const Patch& patch, const Heatmap& heatmap);

}  // namespace fuselab
