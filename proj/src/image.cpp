#include "facet/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "facet/error.hpp"

namespace facet {

std::string Geometry::to_string() const {
  return std::to_string(width) + "x" + std::to_string(height) + "x" + std::to_string(channels);
}

Geometry Geometry::parse(const std::string& text) {
  Geometry g;
  char x1 = 0, x2 = 0;
  std::istringstream in(text);
  if (!(in >> g.width >> x1 >> g.height >> x2 >> g.channels) || x1 != 'x' || x2 != 'x' ||
      in.peek() != std::char_traits<char>::eof()) {
    throw InputError("geometry must look like WxHxC, got '" + text + "'");
  }
  if (g.width <= 0 || g.height <= 0 || (g.channels != 1 && g.channels != 3)) {
    throw InputError("invalid geometry '" + text + "'");
  }
  return g;
}

Image::Image(Geometry geometry, double fill) : geometry_(geometry), data_(geometry.size(), fill) {
  if (geometry.channels != 1 && geometry.channels != 3) {
    throw ModeError("channels must be 1 or 3, got " + std::to_string(geometry.channels));
  }
}

Image::Image(Geometry geometry, std::vector<double> data)
    : geometry_(geometry), data_(std::move(data)) {
  if (geometry.channels != 1 && geometry.channels != 3) {
    throw ModeError("channels must be 1 or 3, got " + std::to_string(geometry.channels));
  }
  if (data_.size() != geometry.size()) {
    throw DimensionError("image data has " + std::to_string(data_.size()) +
                         " values, geometry " + geometry.to_string() + " needs " +
                         std::to_string(geometry.size()));
  }
}

double Image::mean() const {
  if (data_.empty()) return 0.0;
  return std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
}

Image reflect(const Image& img) {
  Image out(img.geometry());
  const int w = img.width();
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < img.channels(); ++ch) out.at(r, c, ch) = img.at(r, w - 1 - c, ch);
  return out;
}

std::vector<Eigen::Index> reflection_permutation(const Geometry& geometry) {
  const Eigen::Index h = geometry.height, w = geometry.width;
  std::vector<Eigen::Index> perm(geometry.size());
  for (Eigen::Index ch = 0; ch < geometry.channels; ++ch)
    for (Eigen::Index r = 0; r < h; ++r)
      for (Eigen::Index c = 0; c < w; ++c)
        perm[ch * h * w + r * w + c] = ch * h * w + r * w + (w - 1 - c);
  return perm;
}

Image symmetrize(const Image& img) {
  Image mirrored = reflect(img);
  auto& out = mirrored.data();
  const auto& in = img.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (in[i] + 2.0 * out[i]) / 3.0;
  return mirrored;
}

Eigen::VectorXd flatten(const Image& img) {
  const int h = img.height(), w = img.width(), ch_count = img.channels();
  Eigen::VectorXd v(static_cast<Eigen::Index>(img.size()));
  Eigen::Index plane = static_cast<Eigen::Index>(h) * w;
  for (int ch = 0; ch < ch_count; ++ch)
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) v(ch * plane + static_cast<Eigen::Index>(r) * w + c) = img.at(r, c, ch);
  return v;
}

Image reshape(const Eigen::Ref<const Eigen::VectorXd>& v, const Geometry& geometry) {
  if (static_cast<std::size_t>(v.size()) != geometry.size()) {
    throw DimensionError("cannot reshape vector of length " + std::to_string(v.size()) + " to " +
                         geometry.to_string());
  }
  Image img(geometry);
  const int h = geometry.height, w = geometry.width;
  Eigen::Index plane = static_cast<Eigen::Index>(h) * w;
  for (int ch = 0; ch < geometry.channels; ++ch)
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) img.at(r, c, ch) = v(ch * plane + static_cast<Eigen::Index>(r) * w + c);
  return img;
}

Image clip(const Image& img) {
  Image out = img;
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Image to_gray(const Image& img) {
  if (img.channels() != 3) {
    throw ModeError("to_gray needs a 3-channel image, got " + std::to_string(img.channels()));
  }
  Image out(Geometry{img.height(), img.width(), 1});
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c)
      out.at(r, c, 0) = (img.at(r, c, 0) + img.at(r, c, 1) + img.at(r, c, 2)) / 3.0;
  return out;
}

Image axpby(double a, const Image& x, double b, const Image& y) {
  if (x.geometry() != y.geometry()) {
    throw DimensionError("geometry mismatch: " + x.geometry().to_string() + " vs " +
                         y.geometry().to_string());
  }
  Image out(x.geometry());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a * x.data()[i] + b * y.data()[i];
  return out;
}

namespace {

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

class HeaderReader {
 public:
  HeaderReader(const unsigned char* bytes, std::size_t length) : p_(bytes), n_(length) {}

  void skip_space_and_comments() {
    while (pos_ < n_) {
      if (std::isspace(p_[pos_])) {
        ++pos_;
      } else if (p_[pos_] == '#') {
        while (pos_ < n_ && p_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  long read_number(const char* field) {
    skip_space_and_comments();
    if (pos_ >= n_ || !std::isdigit(p_[pos_])) {
      throw FormatError(std::string("netpbm header: missing or malformed ") + field);
    }
    long value = 0;
    while (pos_ < n_ && std::isdigit(p_[pos_])) {
      value = value * 10 + (p_[pos_] - '0');
      if (value > 1'000'000) throw FormatError(std::string("netpbm header: ") + field + " too large");
      ++pos_;
    }
    return value;
  }

  std::size_t& pos() { return pos_; }

 private:
  const unsigned char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_netpbm(const Image& img) {
  const char* magic = img.channels() == 1 ? "P5" : "P6";
  std::string header = std::string(magic) + "\n" + std::to_string(img.width()) + " " +
                       std::to_string(img.height()) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(header.size() + img.size());
  for (double v : img.data()) out.push_back(to_byte(v));
  return out;
}

Image decode_netpbm(const unsigned char* bytes, std::size_t length) {
  if (length < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    std::string seen = length >= 2 ? std::string(reinterpret_cast<const char*>(bytes), 2) : "";
    throw FormatError("netpbm header: unsupported magic '" + seen + "' (expected P5 or P6)");
  }
  const int channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader reader(bytes, length);
  reader.pos() = 2;
  const long width = reader.read_number("width");
  const long height = reader.read_number("height");
  const long maxval = reader.read_number("maxval");
  if (width <= 0) throw FormatError("netpbm header: width must be positive");
  if (height <= 0) throw FormatError("netpbm header: height must be positive");
  if (maxval != 255) {
    throw FormatError("netpbm header: unsupported maxval " + std::to_string(maxval) +
                      " (only 255)");
  }
  std::size_t& pos = reader.pos();
  if (pos >= length || !std::isspace(bytes[pos])) {
    throw FormatError("netpbm header: expected single whitespace after maxval");
  }
  ++pos;
  Geometry g{static_cast<int>(height), static_cast<int>(width), channels};
  const std::size_t expected = g.size();
  if (length - pos < expected) {
    throw FormatError("netpbm payload truncated: expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(length - pos));
  }
  std::vector<double> data(expected);
  for (std::size_t i = 0; i < expected; ++i) data[i] = bytes[pos + i] / 255.0;
  return Image(g, std::move(data));
}

Image quantize(const Image& img) {
  Image out(img.geometry());
  for (std::size_t i = 0; i < img.size(); ++i) out.data()[i] = to_byte(img.data()[i]) / 255.0;
  return out;
}

Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open image '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_netpbm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_image(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write image '" + path.string() + "'");
  auto bytes = encode_netpbm(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed for '" + path.string() + "'");
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw InputError("not a directory: '" + dir.string() + "'");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

std::vector<Image> load_images(const std::filesystem::path& dir) {
  std::vector<Image> images;
  for (const auto& p : list_images(dir)) images.push_back(read_image(p));
  return images;
}

}  // namespace facet
