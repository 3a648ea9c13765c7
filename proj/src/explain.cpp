#include "fuselab/explain.hpp"

#include <algorithm>
#include <cmath>

#include "fuselab/error.hpp"
#include "fuselab/ops.hpp"

namespace fuselab {

Image grad_cam_map(const Tensor& activations, const Tensor& grads) {
  if (activations.rank() != 3 || grads.shape() != activations.shape()) {
    throw DimensionError("grad_cam_map: expected matching [C,H,W] activations and gradients, got " +
                         shape_to_string(activations.shape()) + " and " + shape_to_string(grads.shape()));
  }
  const std::size_t channels = activations.dim(0);
  const std::size_t rows = activations.dim(1);
  const std::size_t cols = activations.dim(2);
  const std::size_t plane = rows * cols;
  const auto a = activations.data();
  const auto g = grads.data();
  Image map(rows, cols);
  for (std::size_t c = 0; c < channels; ++c) {
    double weight = 0.0;
    for (std::size_t i = 0; i < plane; ++i) weight += g[c * plane + i];
    weight /= static_cast<double>(plane);
    if (weight == 0.0) continue;
    for (std::size_t i = 0; i < plane; ++i) map.pixels[i] += weight * a[c * plane + i];
  }
  for (double& v : map.pixels) v = std::max(v, 0.0);
  return map;
}

void normalize_max(Image& map) {
  const double peak = map.pixels.empty() ? 0.0 : *std::max_element(map.pixels.begin(), map.pixels.end());
  if (peak <= 0.0) return;
  for (double& v : map.pixels) v /= peak;
}

Image upsample_bilinear(const Image& src, std::size_t rows, std::size_t cols) {
  if (src.rows == 0 || src.cols == 0 || rows == 0 || cols == 0) {
    throw DimensionError("upsample_bilinear: empty image");
  }
  auto sample_axis = [](std::size_t dst, std::size_t out, std::size_t in, std::size_t& lo, std::size_t& hi,
                        double& frac) {
    double pos = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(in - 1));
    lo = static_cast<std::size_t>(std::floor(pos));
    hi = std::min(lo + 1, in - 1);
    frac = pos - static_cast<double>(lo);
  };
  Image out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t r0, r1;
    double fr;
    sample_axis(r, rows, src.rows, r0, r1, fr);
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t c0, c1;
      double fc;
      sample_axis(c, cols, src.cols, c0, c1, fc);
      const double top = src(r0, c0) * (1.0 - fc) + src(r0, c1) * fc;
      const double bottom = src(r1, c0) * (1.0 - fc) + src(r1, c1) * fc;
      out(r, c) = top * (1.0 - fr) + bottom * fr;
    }
  }
  return out;
}

std::string resolve_layer(const CnnParams& params, const std::string& layer) {
  const std::size_t count = params.convs.size();
  if (layer.empty()) return "conv" + std::to_string(count);
  for (std::size_t i = 1; i <= count; ++i) {
    if (layer == "conv" + std::to_string(i)) return layer;
  }
  throw ContractError("unknown Grad-CAM layer '" + layer + "' (model has conv1..conv" + std::to_string(count) + ")");
}

Heatmap grad_cam(const CnnParams& params, const Patch& patch, int target_class, const std::string& layer) {
  if (target_class != 0 && target_class != 1) {
    throw ContractError("grad_cam: target class must be 0 or 1, got " + std::to_string(target_class));
  }
  Heatmap heatmap;
  heatmap.target_class = target_class;
  heatmap.layer = resolve_layer(params, layer);
  const std::size_t index = std::stoul(heatmap.layer.substr(4)) - 1;

  // A private copy keeps gradient accumulation away from the caller's tensors.
  const CnnParams local = clone(params);
  const CnnOutput out = cnn_forward(local, image_tensor(patch));
  const Tensor& activation = out.conv_activations.at(index);
  const Tensor target = element(out.logits, static_cast<std::size_t>(target_class));
  backward(target);

  const Shape& shape = activation.shape();
  if (activation.requires_grad() && activation.has_grad()) {
    const Tensor grads(shape, std::vector<double>(activation.grad().begin(), activation.grad().end()));
    heatmap.coarse = grad_cam_map(activation, grads);
  } else {
    heatmap.coarse = Image(shape[1], shape[2]);
  }
  normalize_max(heatmap.coarse);
  heatmap.upsampled = upsample_bilinear(heatmap.coarse, patch.rows, patch.cols);
  return heatmap;
}

RgbImage overlay(const Patch& patch, const Heatmap& heatmap) {
  const Image heat = heatmap.upsampled.rows == patch.rows && heatmap.upsampled.cols == patch.cols
                         ? heatmap.upsampled
                         : upsample_bilinear(heatmap.coarse, patch.rows, patch.cols);
  constexpr double kAlpha = 0.6;
  RgbImage rgb{patch.rows, patch.cols, {}};
  rgb.pixels.reserve(patch.pixels.size());
  for (std::size_t i = 0; i < patch.pixels.size(); ++i) {
    const double g = std::clamp(patch.pixels[i], 0.0, 1.0);
    const double h = std::clamp(heat.pixels[i], 0.0, 1.0);
    const double base = (1.0 - kAlpha * h) * g;
    rgb.pixels.push_back({to_byte(base + kAlpha * h), to_byte(base), to_byte(base)});
  }
  return rgb;
}

}  // namespace fuselab
