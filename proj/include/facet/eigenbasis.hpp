#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "facet/image.hpp"

namespace facet {

// Which terms of the autoencoder loss are active.
//   SL     plain reconstruction of x
//   SR     reconstruction of symmetrize(x)
//   GR     plus the generative term MSE(x_pair, w2 z)
//   SR+GR  both
struct LossTerms {
  bool symmetry = true;
  bool generative = true;

  static constexpr LossTerms sl() { return {false, false}; }
  static constexpr LossTerms sr() { return {true, false}; }
  static constexpr LossTerms gr() { return {false, true}; }
  static constexpr LossTerms sr_gr() { return {true, true}; }

  // "SL", "SR", "GR" or "SR+GR".
  const char* name() const;
  bool operator==(const LossTerms&) const = default;
};

// Bias-free linear autoencoder, y = w2 (w1^T x). Both matrices are d x k.
struct AutoencoderWeights {
  Eigen::MatrixXd w1;
  Eigen::MatrixXd w2;

  Eigen::Index d() const noexcept { return w1.rows(); }
  Eigen::Index k() const noexcept { return w1.cols(); }

  // Throws DimensionError if the matrices disagree in shape or with d.
  void check(Eigen::Index expected_d) const;
};

struct Gradients {
  Eigen::MatrixXd dw1;
  Eigen::MatrixXd dw2;
};

Eigen::VectorXd forward(const AutoencoderWeights& w, const Eigen::Ref<const Eigen::VectorXd>& x);

// Single-sample loss. MSE averages over the d components. When terms.generative is off,
// z and x_pair are ignored and may be empty.
double loss(const AutoencoderWeights& w, const Geometry& geometry,
            const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& z,
            const Eigen::Ref<const Eigen::VectorXd>& x_pair, LossTerms terms);

// Exact gradient of loss() with respect to w1 and w2. With r = forward(x) - target and
// g = w2 z - x_pair:  dw2 = (2/d)(r (w1^T x)^T + g z^T),  dw1 = (2/d) x (w2^T r)^T.
Gradients grad(const AutoencoderWeights& w, const Geometry& geometry,
               const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& z,
               const Eigen::Ref<const Eigen::VectorXd>& x_pair, LossTerms terms);

struct TrainConfig {
  Eigen::Index k = 64;
  double step_size = 1.0;
  int batch_size = 32;
  int epochs = 50;
  std::uint64_t seed = 0;
  bool symmetry_on = true;
  bool generative_on = true;

  LossTerms terms() const { return {symmetry_on, generative_on}; }
  // Throws UsageError on non-positive fields.
  void validate() const;
};

// Decoder columns of a trained autoencoder, bound to an image geometry. Immutable.
class EigenBasis {
 public:
  EigenBasis(Geometry geometry, Eigen::MatrixXd columns);

  const Geometry& geometry() const noexcept { return geometry_; }
  Eigen::Index d() const noexcept { return columns_.rows(); }
  Eigen::Index k() const noexcept { return columns_.cols(); }
  const Eigen::MatrixXd& matrix() const noexcept { return columns_; }
  const Eigen::VectorXd& column_norms() const noexcept { return norms_; }

  Image eigenface(Eigen::Index j) const;

  bool operator==(const EigenBasis& other) const {
    return geometry_ == other.geometry_ && columns_ == other.columns_;
  }

 private:
  Geometry geometry_;
  Eigen::MatrixXd columns_;
  Eigen::VectorXd norms_;
};

// reshape(E c), unclipped.
Image synthesize(const EigenBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& coeffs);

// Mean over columns of ||E_j - reflect(E_j)|| / ||E_j||.
double mean_column_asymmetry(const EigenBasis& basis);

struct TrainResult {
  AutoencoderWeights weights;
  EigenBasis basis;
  std::vector<double> epoch_loss;  // mean per-sample loss of each epoch
};

// Mini-batch SGD with constant step. Samples are the columns of `samples` (d x n);
// each epoch visits them in a seeded shuffled order, and every sample draws a fresh
// z ~ N(0, I_k) and an independent uniformly drawn x_pair. Deterministic in (seed, data).
TrainResult train_autoencoder(const Eigen::MatrixXd& samples, const Geometry& geometry,
                              const TrainConfig& cfg);
TrainResult train_autoencoder(std::span<const Image> dataset, const TrainConfig& cfg);
EigenBasis train(std::span<const Image> dataset, const TrainConfig& cfg);

// Stacks flattened images as columns. Throws on empty input or mixed geometry.
Eigen::MatrixXd stack_images(std::span<const Image> dataset);

// Mean over samples and components of (forward(x) - x)^2.
double reconstruction_mse(const AutoencoderWeights& w, const Eigen::MatrixXd& samples);

// Reference eigenfaces: top-k eigenvectors of the uncentered second-moment matrix
// (1/n) sum x x^T, i.e. the optimum for bias-free linear reconstruction.
struct PcaBasis {
  Geometry geometry;
  Eigen::MatrixXd components;   // d x k, orthonormal for the first `rank` columns
  Eigen::VectorXd eigenvalues;  // all d eigenvalues, descending
  Eigen::Index rank = 0;
  bool padded = false;          // k > rank; trailing columns are zero

  // Mean over samples of ||x - U U^T x||^2 (equals the sum of discarded eigenvalues).
  double projection_error(const Eigen::MatrixXd& samples) const;
  // projection_error / d, comparable with reconstruction_mse.
  double projection_mse(const Eigen::MatrixXd& samples) const;
  // Throws DegenerateInputError when padded.
  EigenBasis basis() const;
};

PcaBasis pca_basis(const Eigen::MatrixXd& samples, const Geometry& geometry, Eigen::Index k);
PcaBasis pca_basis(std::span<const Image> dataset, Eigen::Index k);

// EIGB v1: "EIGB", u16 version, u32 width/height/channels/k, then d*k little-endian
// float32 in column-major order.
inline constexpr std::uint16_t kBasisFormatVersion = 1;
std::vector<unsigned char> encode_basis(const EigenBasis& basis);
EigenBasis decode_basis(const std::vector<unsigned char>& bytes);
void save_basis(const EigenBasis& basis, const std::filesystem::path& path);
EigenBasis load_basis(const std::filesystem::path& path);

}  // namespace facet
