#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fuselab/tensor.hpp"

namespace fuselab {

/// Grayscale raster, row-major, nominally in [0,1].
struct Image {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t rows, std::size_t cols, double fill = 0.0) : rows(rows), cols(cols), pixels(rows * cols, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return pixels[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return pixels[r * cols + c]; }
  bool operator==(const Image&) const = default;
};

/// A lesion appearance: square Image with values in [0,1].
using Patch = Image;

struct RgbImage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::array<std::uint8_t, 3>> pixels;
};

/// Nearest 8-bit level, v in [0,1] -> round(255 v).
std::uint8_t to_byte(double v);
/// Snaps every pixel to k/255 so that a PGM round trip is lossless.
void quantize_to_8bit(Image& image);

/// Binary P5, maxval 255: "P5\n<cols> <rows>\n255\n" followed by bytes.
std::string encode_pgm(const Image& image);
Image decode_pgm(const std::string& bytes, const std::string& origin = "<memory>");
void write_pgm(const std::filesystem::path& path, const Image& image);
Image read_pgm(const std::filesystem::path& path);

/// Binary P6, maxval 255.
std::string encode_ppm(const RgbImage& image);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

/// [1,rows,cols] tensor view of a patch.
Tensor image_tensor(const Image& image);
/// [N,1,rows,cols] batch; all images must share a size.
Tensor batch_tensor(const std::vector<const Image*>& images);

}  // namespace fuselab
