#include "facet/synthetic.hpp"

#include <cmath>

#include "facet/error.hpp"

namespace facet {

namespace {

struct Blob {
  double row, col, sigma_row, sigma_col, amplitude;
};

double blob_value(const Blob& b, double y, double x) {
  const double dy = (y - b.row) / b.sigma_row;
  const double dx = (x - b.col) / b.sigma_col;
  return b.amplitude * std::exp(-0.5 * (dx * dx + dy * dy));
}

// Rasterizes f(y, x, ch) over normalized coordinates into the flattened ordering.
template <typename F>
Eigen::VectorXd rasterize(const Geometry& g, F&& f) {
  Image img(g);
  for (int r = 0; r < g.height; ++r) {
    const double y = (r + 0.5) / g.height;
    for (int c = 0; c < g.width; ++c) {
      const double x = (c + 0.5) / g.width;
      for (int ch = 0; ch < g.channels; ++ch) img.at(r, c, ch) = f(y, x, ch);
    }
  }
  return flatten(img);
}

constexpr double kSkin[3] = {0.92, 0.72, 0.62};

}  // namespace

FaceGenerator::FaceGenerator(Geometry geometry, std::uint64_t seed, FaceModelOptions options)
    : geometry_(geometry), options_(options) {
  if (options_.parts <= 0) throw UsageError("face model needs at least one part");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const bool rgb = geometry.channels == 3;

  oval_ = rasterize(geometry, [&](double y, double x, int ch) {
    const double ex = (x - 0.5) / 0.36, ey = (y - 0.52) / 0.46;
    const double inside = 1.0 / (1.0 + std::exp(-(1.0 - std::sqrt(ex * ex + ey * ey)) / 0.08));
    return inside * (rgb ? kSkin[ch] : 0.75);
  });

  parts_.resize(static_cast<Eigen::Index>(geometry.size()), options_.parts);
  for (int p = 0; p < options_.parts; ++p) {
    const double row = 0.2 + 0.65 * u(rng);
    const double sigma_row = 0.03 + 0.06 * u(rng);
    const double sigma_col = 0.03 + 0.08 * u(rng);
    const double amplitude = -0.5 + 0.85 * u(rng);
    std::vector<Blob> blobs;
    if (u(rng) < options_.asymmetry) {
      blobs.push_back({row, 0.2 + 0.6 * u(rng), sigma_row, sigma_col, amplitude});
    } else if (u(rng) < 0.3) {
      blobs.push_back({row, 0.5, sigma_row, sigma_col, amplitude});
    } else {
      const double offset = 0.08 + 0.24 * u(rng);
      blobs.push_back({row, 0.5 - offset, sigma_row, sigma_col, amplitude});
      blobs.push_back({row, 0.5 + offset, sigma_row, sigma_col, amplitude});
    }
    double tint[3] = {1.0, 1.0, 1.0};
    if (rgb)
      for (double& t : tint) t = 0.85 + 0.3 * u(rng);
    parts_.col(p) = rasterize(geometry, [&](double y, double x, int ch) {
      double v = 0.0;
      for (const auto& b : blobs) v += blob_value(b, y, x);
      return v * tint[ch];
    });
  }
}

Image FaceGenerator::sample(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> weight(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, options_.noise);
  Eigen::VectorXd weights(parts_.cols());
  for (Eigen::Index j = 0; j < weights.size(); ++j) weights(j) = weight(rng);
  Eigen::VectorXd flat = (0.1 + 0.75 * weight(rng)) * oval_ + parts_ * weights;
  flat.array() += 0.08;
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) += noise(rng);
  return clip(reshape(flat, geometry_));
}

std::vector<Image> FaceGenerator::sample_many(std::size_t count, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::vector<Image> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample(rng));
  return out;
}

std::vector<Image> augment_with_reflections(const std::vector<Image>& dataset) {
  std::vector<Image> out = dataset;
  out.reserve(2 * dataset.size());
  for (const auto& img : dataset) out.push_back(reflect(img));
  return out;
}

}  // namespace facet
