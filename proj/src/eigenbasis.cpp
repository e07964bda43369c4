#include "facet/eigenbasis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "facet/error.hpp"

namespace facet {

const char* LossTerms::name() const {
  if (symmetry && generative) return "SR+GR";
  if (symmetry) return "SR";
  if (generative) return "GR";
  return "SL";
}

void AutoencoderWeights::check(Eigen::Index expected_d) const {
  if (w1.rows() != w2.rows() || w1.cols() != w2.cols()) {
    throw DimensionError("encoder is " + std::to_string(w1.rows()) + "x" + std::to_string(w1.cols()) +
                         " but decoder is " + std::to_string(w2.rows()) + "x" +
                         std::to_string(w2.cols()));
  }
  if (w1.rows() != expected_d) {
    throw DimensionError("weights expect d=" + std::to_string(w1.rows()) + ", input has " +
                         std::to_string(expected_d));
  }
}

Eigen::VectorXd forward(const AutoencoderWeights& w, const Eigen::Ref<const Eigen::VectorXd>& x) {
  w.check(x.size());
  return w.w2 * (w.w1.transpose() * x);
}

namespace {

void check_geometry(const Geometry& geometry, Eigen::Index d) {
  if (static_cast<std::size_t>(d) != geometry.size()) {
    throw DimensionError("vector length " + std::to_string(d) + " does not match geometry " +
                         geometry.to_string());
  }
}

// Applies the reflection permutation to each column.
Eigen::MatrixXd reflect_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& perm) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

Eigen::MatrixXd reconstruction_target(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& perm,
                                      bool symmetry) {
  if (!symmetry) return x;
  return (x + 2.0 * reflect_rows(x, perm)) / 3.0;
}

void check_generative_inputs(const AutoencoderWeights& w, Eigen::Index z_len, Eigen::Index pair_len) {
  if (z_len != w.k()) {
    throw DimensionError("z has length " + std::to_string(z_len) + ", expected k=" +
                         std::to_string(w.k()));
  }
  if (pair_len != w.d()) {
    throw DimensionError("x_pair has length " + std::to_string(pair_len) + ", expected d=" +
                         std::to_string(w.d()));
  }
}

}  // namespace

double loss(const AutoencoderWeights& w, const Geometry& geometry,
            const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& z,
            const Eigen::Ref<const Eigen::VectorXd>& x_pair, LossTerms terms) {
  w.check(x.size());
  check_geometry(geometry, x.size());
  const double d = static_cast<double>(x.size());
  const Eigen::VectorXd target = reconstruction_target(x, reflection_permutation(geometry), terms.symmetry);
  double value = (forward(w, x) - target).squaredNorm() / d;
  if (terms.generative) {
    check_generative_inputs(w, z.size(), x_pair.size());
    value += (w.w2 * z - x_pair).squaredNorm() / d;
  }
  return value;
}

Gradients grad(const AutoencoderWeights& w, const Geometry& geometry,
               const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& z,
               const Eigen::Ref<const Eigen::VectorXd>& x_pair, LossTerms terms) {
  w.check(x.size());
  check_geometry(geometry, x.size());
  const double scale = 2.0 / static_cast<double>(x.size());
  const Eigen::VectorXd target = reconstruction_target(x, reflection_permutation(geometry), terms.symmetry);
  const Eigen::VectorXd code = w.w1.transpose() * x;
  const Eigen::VectorXd r = w.w2 * code - target;

  Gradients g;
  g.dw2 = scale * r * code.transpose();
  g.dw1 = scale * x * (w.w2.transpose() * r).transpose();
  if (terms.generative) {
    check_generative_inputs(w, z.size(), x_pair.size());
    const Eigen::VectorXd gen = w.w2 * z - x_pair;
    g.dw2.noalias() += scale * gen * z.transpose();
  }
  return g;
}

void TrainConfig::validate() const {
  if (k <= 0) throw UsageError("k must be positive");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw UsageError("step_size must be positive");
  if (batch_size <= 0) throw UsageError("batch_size must be positive");
  if (epochs <= 0) throw UsageError("epochs must be positive");
}

EigenBasis::EigenBasis(Geometry geometry, Eigen::MatrixXd columns)
    : geometry_(geometry), columns_(std::move(columns)) {
  if (static_cast<std::size_t>(columns_.rows()) != geometry_.size()) {
    throw DimensionError("basis has " + std::to_string(columns_.rows()) + " rows, geometry " +
                         geometry_.to_string() + " needs " + std::to_string(geometry_.size()));
  }
  if (columns_.cols() == 0) throw DimensionError("basis has no columns");
  norms_ = columns_.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < norms_.size(); ++j) {
    if (!std::isfinite(norms_(j)) || norms_(j) == 0.0) {
      throw DegenerateInputError("basis column " + std::to_string(j) + " has zero or non-finite norm");
    }
  }
}

Image EigenBasis::eigenface(Eigen::Index j) const {
  if (j < 0 || j >= k()) throw DimensionError("eigenface index out of range");
  return reshape(columns_.col(j), geometry_);
}

Image synthesize(const EigenBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& coeffs) {
  if (coeffs.size() != basis.k()) {
    throw DimensionError("coefficient vector has length " + std::to_string(coeffs.size()) +
                         ", basis has k=" + std::to_string(basis.k()));
  }
  return reshape(basis.matrix() * coeffs, basis.geometry());
}

double mean_column_asymmetry(const EigenBasis& basis) {
  const auto perm = reflection_permutation(basis.geometry());
  const Eigen::MatrixXd& e = basis.matrix();
  const Eigen::MatrixXd mirrored = reflect_rows(e, perm);
  double total = 0.0;
  for (Eigen::Index j = 0; j < e.cols(); ++j) total += (e.col(j) - mirrored.col(j)).norm() / e.col(j).norm();
  return total / static_cast<double>(e.cols());
}

Eigen::MatrixXd stack_images(std::span<const Image> dataset) {
  if (dataset.empty()) throw InputError("dataset is empty");
  const Geometry g = dataset.front().geometry();
  Eigen::MatrixXd samples(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(dataset.size()));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].geometry() != g) {
      throw DimensionError("dataset image " + std::to_string(i) + " has geometry " +
                           dataset[i].geometry().to_string() + ", expected " + g.to_string());
    }
    samples.col(static_cast<Eigen::Index>(i)) = flatten(dataset[i]);
  }
  return samples;
}

TrainResult train_autoencoder(const Eigen::MatrixXd& samples, const Geometry& geometry,
                              const TrainConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = samples.rows();
  const Eigen::Index n = samples.cols();
  if (n == 0) throw InputError("dataset is empty");
  if (n < 2) throw InputError("training needs at least 2 images");
  check_geometry(geometry, d);

  std::mt19937_64 rng(cfg.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::uniform_real_distribution<double> init(-bound, bound);
  AutoencoderWeights w;
  w.w1.resize(d, cfg.k);
  w.w2.resize(d, cfg.k);
  for (Eigen::Index j = 0; j < cfg.k; ++j)
    for (Eigen::Index i = 0; i < d; ++i) w.w1(i, j) = init(rng);
  for (Eigen::Index j = 0; j < cfg.k; ++j)
    for (Eigen::Index i = 0; i < d; ++i) w.w2(i, j) = init(rng);

  const auto perm = reflection_permutation(geometry);
  const Eigen::MatrixXd targets = reconstruction_target(samples, perm, cfg.symmetry_on);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  const double grad_scale = 2.0 / static_cast<double>(d);
  std::vector<double> epoch_loss;
  epoch_loss.reserve(static_cast<std::size_t>(cfg.epochs));

  Eigen::MatrixXd x, t, z, pair;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
      x.resize(d, b);
      t.resize(d, b);
      for (Eigen::Index s = 0; s < b; ++s) {
        const Eigen::Index idx = order[static_cast<std::size_t>(start + s)];
        x.col(s) = samples.col(idx);
        t.col(s) = targets.col(idx);
      }
      if (cfg.generative_on) {
        z.resize(cfg.k, b);
        pair.resize(d, b);
        for (Eigen::Index s = 0; s < b; ++s) {
          for (Eigen::Index j = 0; j < cfg.k; ++j) z(j, s) = normal(rng);
          pair.col(s) = samples.col(pick(rng));
        }
      }

      const Eigen::MatrixXd code = w.w1.transpose() * x;
      const Eigen::MatrixXd r = w.w2 * code - t;
      loss_sum += r.squaredNorm() / static_cast<double>(d);
      const double step = cfg.step_size * grad_scale / static_cast<double>(b);
      Eigen::MatrixXd dw2 = r * code.transpose();
      const Eigen::MatrixXd dw1 = x * (w.w2.transpose() * r).transpose();
      if (cfg.generative_on) {
        const Eigen::MatrixXd g = w.w2 * z - pair;
        loss_sum += g.squaredNorm() / static_cast<double>(d);
        dw2.noalias() += g * z.transpose();
      }
      w.w1.noalias() -= step * dw1;
      w.w2.noalias() -= step * dw2;
      if (!w.w1.allFinite() || !w.w2.allFinite()) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) +
                             "; reduce step_size (currently " + std::to_string(cfg.step_size) + ")");
      }
    }
    epoch_loss.push_back(loss_sum / static_cast<double>(n));
  }

  EigenBasis basis(geometry, w.w2);
  return TrainResult{std::move(w), std::move(basis), std::move(epoch_loss)};
}

TrainResult train_autoencoder(std::span<const Image> dataset, const TrainConfig& cfg) {
  if (dataset.empty()) throw InputError("dataset is empty");
  return train_autoencoder(stack_images(dataset), dataset.front().geometry(), cfg);
}

EigenBasis train(std::span<const Image> dataset, const TrainConfig& cfg) {
  return train_autoencoder(dataset, cfg).basis;
}

double reconstruction_mse(const AutoencoderWeights& w, const Eigen::MatrixXd& samples) {
  w.check(samples.rows());
  const Eigen::MatrixXd recon = w.w2 * (w.w1.transpose() * samples);
  return (recon - samples).squaredNorm() / static_cast<double>(samples.size());
}

double PcaBasis::projection_error(const Eigen::MatrixXd& samples) const {
  if (samples.rows() != components.rows()) throw DimensionError("sample length does not match basis");
  const Eigen::MatrixXd residual = samples - components * (components.transpose() * samples);
  return residual.squaredNorm() / static_cast<double>(samples.cols());
}

double PcaBasis::projection_mse(const Eigen::MatrixXd& samples) const {
  return projection_error(samples) / static_cast<double>(samples.rows());
}

EigenBasis PcaBasis::basis() const {
  if (padded) {
    throw DegenerateInputError("PCA basis has " + std::to_string(components.cols() - rank) +
                               " zero-padded columns (data rank " + std::to_string(rank) + ")");
  }
  return EigenBasis(geometry, components);
}

PcaBasis pca_basis(const Eigen::MatrixXd& samples, const Geometry& geometry, Eigen::Index k) {
  if (samples.cols() == 0) throw InputError("dataset is empty");
  if (k <= 0) throw UsageError("k must be positive");
  check_geometry(geometry, samples.rows());
  const Eigen::Index d = samples.rows();
  const Eigen::MatrixXd moment = samples * samples.transpose() / static_cast<double>(samples.cols());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(moment);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");

  PcaBasis out;
  out.geometry = geometry;
  out.eigenvalues = solver.eigenvalues().reverse();
  const Eigen::MatrixXd vectors = solver.eigenvectors().rowwise().reverse();
  const double top = std::max(out.eigenvalues(0), 0.0);
  const double tol = top * static_cast<double>(d) * 1e-13;
  out.rank = 0;
  while (out.rank < d && out.eigenvalues(out.rank) > tol && out.eigenvalues(out.rank) > 0.0) ++out.rank;

  out.components = Eigen::MatrixXd::Zero(d, k);
  const Eigen::Index kept = std::min(k, out.rank);
  for (Eigen::Index j = 0; j < kept; ++j) {
    Eigen::VectorXd v = vectors.col(j);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    out.components.col(j) = v;
  }
  out.padded = k > out.rank;
  return out;
}

PcaBasis pca_basis(std::span<const Image> dataset, Eigen::Index k) {
  if (dataset.empty()) throw InputError("dataset is empty");
  return pca_basis(stack_images(dataset), dataset.front().geometry(), k);
}

namespace {

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

constexpr std::size_t kHeaderBytes = 4 + 2 + 4 * 4;

}  // namespace

std::vector<unsigned char> encode_basis(const EigenBasis& basis) {
  std::vector<unsigned char> out{'E', 'I', 'G', 'B'};
  out.reserve(kHeaderBytes + 4 * static_cast<std::size_t>(basis.matrix().size()));
  put_u16(out, kBasisFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(basis.geometry().width));
  put_u32(out, static_cast<std::uint32_t>(basis.geometry().height));
  put_u32(out, static_cast<std::uint32_t>(basis.geometry().channels));
  put_u32(out, static_cast<std::uint32_t>(basis.k()));
  const Eigen::MatrixXd& e = basis.matrix();
  for (Eigen::Index j = 0; j < e.cols(); ++j)
    for (Eigen::Index i = 0; i < e.rows(); ++i)
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(e(i, j))));
  return out;
}

EigenBasis decode_basis(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "EIGB", 4) != 0) {
    throw FormatError("basis file: bad magic (expected EIGB)");
  }
  if (bytes.size() < kHeaderBytes) {
    throw FormatError("basis file truncated: expected at least " + std::to_string(kHeaderBytes) +
                      " header bytes, got " + std::to_string(bytes.size()));
  }
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version != kBasisFormatVersion) {
    throw FormatError("basis file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t width = get_u32(&bytes[6]);
  const std::uint32_t height = get_u32(&bytes[10]);
  const std::uint32_t channels = get_u32(&bytes[14]);
  const std::uint32_t k = get_u32(&bytes[18]);
  if (width == 0 || height == 0 || (channels != 1 && channels != 3) || k == 0 || width > 65536 ||
      height > 65536 || k > (1u << 20)) {
    throw FormatError("basis file: invalid header fields");
  }
  Geometry g{static_cast<int>(height), static_cast<int>(width), static_cast<int>(channels)};
  const std::size_t expected = kHeaderBytes + 4 * g.size() * k;
  if (bytes.size() != expected) {
    throw FormatError("basis file truncated or oversized: expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(bytes.size()));
  }
  const auto d = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd e(d, static_cast<Eigen::Index>(k));
  const unsigned char* p = bytes.data() + kHeaderBytes;
  for (Eigen::Index j = 0; j < e.cols(); ++j)
    for (Eigen::Index i = 0; i < d; ++i, p += 4) e(i, j) = std::bit_cast<float>(get_u32(p));
  return EigenBasis(g, std::move(e));
}

void save_basis(const EigenBasis& basis, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write basis '" + path.string() + "'");
  const auto bytes = encode_basis(basis);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed for '" + path.string() + "'");
}

EigenBasis load_basis(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open basis '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_basis(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace facet
