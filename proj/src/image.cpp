#include "fuselab/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fuselab/error.hpp"

namespace fuselab {

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void dump(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

// Reads one whitespace-delimited header integer, skipping '#' comments.
std::size_t header_int(const std::string& bytes, std::size_t& pos, const std::string& origin) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (start == pos) throw ParseError(origin + ": malformed PGM header");
  return std::stoul(bytes.substr(start, pos - start));
}

}  // namespace

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void quantize_to_8bit(Image& image) {
  for (double& v : image.pixels) v = to_byte(v) / 255.0;
}

std::string encode_pgm(const Image& image) {
  std::string out = "P5\n" + std::to_string(image.cols) + " " + std::to_string(image.rows) + "\n255\n";
  out.reserve(out.size() + image.pixels.size());
  for (double v : image.pixels) out.push_back(static_cast<char>(to_byte(v)));
  return out;
}

Image decode_pgm(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw ParseError(origin + ": not a binary PGM (P5)");
  std::size_t pos = 2;
  const std::size_t cols = header_int(bytes, pos, origin);
  const std::size_t rows = header_int(bytes, pos, origin);
  const std::size_t maxval = header_int(bytes, pos, origin);
  if (maxval != 255) throw ParseError(origin + ": only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw ParseError(origin + ": malformed PGM header");
  }
  ++pos;
  if (bytes.size() - pos != rows * cols) {
    throw ParseError(origin + ": expected " + std::to_string(rows * cols) + " pixel bytes, found " +
                     std::to_string(bytes.size() - pos));
  }
  Image image(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    image.pixels[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
  }
  return image;
}

void write_pgm(const std::filesystem::path& path, const Image& image) { dump(path, encode_pgm(image)); }

Image read_pgm(const std::filesystem::path& path) { return decode_pgm(slurp(path), path.string()); }

std::string encode_ppm(const RgbImage& image) {
  std::string out = "P6\n" + std::to_string(image.cols) + " " + std::to_string(image.rows) + "\n255\n";
  for (const auto& px : image.pixels) {
    for (std::uint8_t channel : px) out.push_back(static_cast<char>(channel));
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) { dump(path, encode_ppm(image)); }

Tensor image_tensor(const Image& image) { return Tensor({1, image.rows, image.cols}, image.pixels); }

Tensor batch_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw DimensionError("batch_tensor: empty batch");
  const std::size_t rows = images.front()->rows;
  const std::size_t cols = images.front()->cols;
  std::vector<double> data;
  data.reserve(images.size() * rows * cols);
  for (const Image* image : images) {
    if (image->rows != rows || image->cols != cols) {
      throw DimensionError("batch_tensor: mixed image sizes in one batch");
    }
    data.insert(data.end(), image->pixels.begin(), image->pixels.end());
  }
  return Tensor({images.size(), 1, rows, cols}, std::move(data));
}

}  // namespace fuselab
