#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "facet/image.hpp"

namespace facet {

// Face-like test images without any dataset. A seeded bank of smooth parts (mostly
// mirror-symmetric blob pairs at eye/brow/cheek/mouth heights, plus a face oval) is
// combined with non-negative random weights, offset, and perturbed by pixel noise.
// Identities drawn from one generator share the bank but nothing else.
struct FaceModelOptions {
  int parts = 24;
  double noise = 0.02;       // pixel noise standard deviation
  double asymmetry = 0.15;   // fraction of parts that are single off-axis blobs
};

class FaceGenerator {
 public:
  FaceGenerator(Geometry geometry, std::uint64_t seed, FaceModelOptions options = {});

  const Geometry& geometry() const noexcept { return geometry_; }
  // d x parts, flattened part images (per channel tint already applied).
  const Eigen::MatrixXd& parts() const noexcept { return parts_; }

  Image sample(std::mt19937_64& rng) const;
  std::vector<Image> sample_many(std::size_t count, std::uint64_t seed) const;

 private:
  Geometry geometry_;
  FaceModelOptions options_;
  Eigen::MatrixXd parts_;
  Eigen::VectorXd oval_;
};

// The dataset followed by the mirror image of every element.
std::vector<Image> augment_with_reflections(const std::vector<Image>& dataset);

}  // namespace facet
