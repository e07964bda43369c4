#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace facet {

// Raster shape. channels is 1 (gray) or 3 (RGB).
struct Geometry {
  int height = 0;
  int width = 0;
  int channels = 1;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  bool operator==(const Geometry&) const = default;

  // "WxHxC", e.g. "32x32x1".
  std::string to_string() const;
  static Geometry parse(const std::string& text);
};

// H x W x C raster of real intensities, nominally in [0,1]. Storage is row-major with
// channels interleaved per pixel; intensities are only quantized at file I/O.
class Image {
 public:
  Image() = default;
  explicit Image(Geometry geometry, double fill = 0.0);
  Image(Geometry geometry, std::vector<double> data);

  const Geometry& geometry() const noexcept { return geometry_; }
  int height() const noexcept { return geometry_.height; }
  int width() const noexcept { return geometry_.width; }
  int channels() const noexcept { return geometry_.channels; }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(int row, int col, int ch) { return data_[index(row, col, ch)]; }
  double at(int row, int col, int ch) const { return data_[index(row, col, ch)]; }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  double mean() const;

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int row, int col, int ch) const noexcept {
    return (static_cast<std::size_t>(row) * geometry_.width + col) * geometry_.channels + ch;
  }

  Geometry geometry_;
  std::vector<double> data_;
};

// Left-right mirror: out(r, c, ch) = in(r, width-1-c, ch).
Image reflect(const Image& img);

// reflect() expressed on flattened vectors: flat_reflected[i] = flat[perm[i]].
std::vector<Eigen::Index> reflection_permutation(const Geometry& geometry);

// (X + 2 R(X)) / 3, elementwise, unclipped.
Image symmetrize(const Image& img);

// Channel-major, then row-major: index = ch*H*W + r*W + c. This ordering is part of the
// basis file format.
Eigen::VectorXd flatten(const Image& img);
Image reshape(const Eigen::Ref<const Eigen::VectorXd>& v, const Geometry& geometry);

Image clip(const Image& img);
// Equal-weight channel average; requires 3 channels.
Image to_gray(const Image& img);

// Elementwise linear combination a*x + b*y.
Image axpby(double a, const Image& x, double b, const Image& y);

// Round-trips an image through 8-bit storage: b = round(255*clip(v)), v' = b/255.
Image quantize(const Image& img);

// Binary netpbm. Gray images are written as P5, RGB as P6, always maxval 255.
std::vector<unsigned char> encode_netpbm(const Image& img);
Image decode_netpbm(const unsigned char* bytes, std::size_t length);
inline Image decode_netpbm(const std::vector<unsigned char>& bytes) {
  return decode_netpbm(bytes.data(), bytes.size());
}

Image read_image(const std::filesystem::path& path);
void write_image(const Image& img, const std::filesystem::path& path);

// All .pgm/.ppm files in dir, in lexicographic filename order.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);
std::vector<Image> load_images(const std::filesystem::path& dir);

}  // namespace facet
