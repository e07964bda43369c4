#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "facet/image.hpp"

namespace facet {

struct Embedding {
  Eigen::VectorXd values;
  bool normalized = false;
};

// dot(a,b) / (|a| |b|), clamped to [-1,1]. Throws DegenerateInputError on a zero vector
// and DimensionError on unequal lengths.
double cosine(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);
double cosine(const Embedding& a, const Embedding& b);

// The black-box boundary: (images, id) -> similarity scores in [-1,1].
//
// score_batch advances queries_used() by exactly images.size() or throws without
// scoring anything. Implementations must be safe for concurrent score_batch callers;
// enroll may run concurrently with scoring of other ids.
class SimilarityOracle {
 public:
  virtual ~SimilarityOracle() = default;

  virtual Geometry geometry() const = 0;
  virtual void enroll(const std::string& id, const Image& image) = 0;
  virtual std::uint64_t queries_used() const = 0;
  // Remaining images this oracle will score, if it enforces a limit.
  virtual std::optional<std::uint64_t> budget_remaining() const { return std::nullopt; }
  virtual std::optional<std::uint64_t> budget() const { return std::nullopt; }

  // Validates geometry, scores, and enforces the [-1,1] range.
  std::vector<double> score_batch(std::span<const Image> images, const std::string& id);
  double score(const Image& image, const std::string& id);

 protected:
  virtual std::vector<double> do_score_batch(std::span<const Image> images, const std::string& id) = 0;
};

// Fixed seeded random projection d -> m applied to clip(image), optionally preceded by
// the input normalization u = 2x - 1 and followed by tanh(kTanhGain * y); the result is
// L2-normalized. Enrollment keeps one embedding per id.
struct EmbedderOptions {
  int dim = 128;
  bool nonlinear = true;
  bool centered = true;

  static EmbedderOptions linear(int dim = 128) { return {dim, false, false}; }
};

inline constexpr double kTanhGain = 2.0;

class RandomEmbedder final : public SimilarityOracle {
 public:
  RandomEmbedder(std::uint64_t seed, Geometry geometry, EmbedderOptions options = {});

  Geometry geometry() const override { return geometry_; }
  void enroll(const std::string& id, const Image& image) override;
  std::uint64_t queries_used() const override { return used_.load(); }

  // Not a query: embedding is local computation and is not counted.
  Embedding embed(const Image& image) const;
  const EmbedderOptions& options() const noexcept { return options_; }
  std::uint64_t seed() const noexcept { return seed_; }

 protected:
  std::vector<double> do_score_batch(std::span<const Image> images, const std::string& id) override;

 private:
  std::uint64_t seed_;
  Geometry geometry_;
  EmbedderOptions options_;
  Eigen::MatrixXd projection_;  // m x d
  mutable std::shared_mutex gallery_mutex_;
  std::map<std::string, Embedding> gallery_;
  std::atomic<std::uint64_t> used_{0};
};

std::unique_ptr<RandomEmbedder> make_random_embedder(std::uint64_t seed, Geometry geometry, int m,
                                                     bool nonlinear = true);

// Cosine of two embeddings where a degenerate (all-zero) embedding scores 0.
double embedding_similarity(const Embedding& a, const Embedding& b);

// Hard cap on submitted images. A batch that would exceed the limit is rejected whole
// with BudgetExhaustedError(used, limit, attempted); `used` is then unchanged.
class BudgetedOracle final : public SimilarityOracle {
 public:
  BudgetedOracle(std::shared_ptr<SimilarityOracle> inner, std::uint64_t limit);

  Geometry geometry() const override { return inner_->geometry(); }
  void enroll(const std::string& id, const Image& image) override { inner_->enroll(id, image); }
  std::uint64_t queries_used() const override;
  std::optional<std::uint64_t> budget_remaining() const override;
  std::optional<std::uint64_t> budget() const override { return limit_; }

 protected:
  std::vector<double> do_score_batch(std::span<const Image> images, const std::string& id) override;

 private:
  std::shared_ptr<SimilarityOracle> inner_;
  std::uint64_t limit_;
  mutable std::mutex mutex_;
  std::uint64_t used_ = 0;
};

std::shared_ptr<SimilarityOracle> with_budget(std::shared_ptr<SimilarityOracle> inner, std::uint64_t limit);

// Scores quantize(image) instead of image: the local equivalent of an oracle reached
// through 8-bit image files.
class QuantizingOracle final : public SimilarityOracle {
 public:
  explicit QuantizingOracle(std::shared_ptr<SimilarityOracle> inner) : inner_(std::move(inner)) {}

  Geometry geometry() const override { return inner_->geometry(); }
  void enroll(const std::string& id, const Image& image) override { inner_->enroll(id, image); }
  std::uint64_t queries_used() const override { return inner_->queries_used(); }
  std::optional<std::uint64_t> budget_remaining() const override { return inner_->budget_remaining(); }
  std::optional<std::uint64_t> budget() const override { return inner_->budget(); }

 protected:
  std::vector<double> do_score_batch(std::span<const Image> images, const std::string& id) override;

 private:
  std::shared_ptr<SimilarityOracle> inner_;
};

// Multimodal synthetic oracle. Each id has its true template plus optional decoy
// templates with a ceiling c < 1; the score is
//   max(cos(e(x), target), max_j c_j cos(e(x), decoy_j)),
// so ascent can lock onto a decoy whose best reachable score is c_j.
class AttractorOracle final : public SimilarityOracle {
 public:
  explicit AttractorOracle(std::shared_ptr<const RandomEmbedder> embedder);

  Geometry geometry() const override { return embedder_->geometry(); }
  void enroll(const std::string& id, const Image& image) override;
  void add_decoy(const std::string& id, const Image& decoy, double ceiling);
  std::uint64_t queries_used() const override { return used_.load(); }

 protected:
  std::vector<double> do_score_batch(std::span<const Image> images, const std::string& id) override;

 private:
  struct Entry {
    Embedding target;
    std::vector<std::pair<Embedding, double>> decoys;
  };
  std::shared_ptr<const RandomEmbedder> embedder_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Entry> gallery_;
  std::atomic<std::uint64_t> used_{0};
};

}  // namespace facet
