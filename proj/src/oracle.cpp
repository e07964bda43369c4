#include "facet/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "facet/error.hpp"

namespace facet {

double cosine(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine of vectors with lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine of a zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double cosine(const Embedding& a, const Embedding& b) { return cosine(a.values, b.values); }

double embedding_similarity(const Embedding& a, const Embedding& b) {
  if (a.values.squaredNorm() == 0.0 || b.values.squaredNorm() == 0.0) return 0.0;
  return cosine(a, b);
}

std::vector<double> SimilarityOracle::score_batch(std::span<const Image> images, const std::string& id) {
  const Geometry g = geometry();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].geometry() != g) {
      throw DimensionError("image " + std::to_string(i) + " has geometry " +
                           images[i].geometry().to_string() + ", oracle expects " + g.to_string());
    }
  }
  std::vector<double> scores = do_score_batch(images, id);
  if (scores.size() != images.size()) {
    throw Error("oracle returned " + std::to_string(scores.size()) + " scores for " +
                std::to_string(images.size()) + " images");
  }
  for (double& s : scores) {
    if (std::isnan(s)) throw NumericalError("oracle returned NaN score");
    s = std::clamp(s, -1.0, 1.0);
  }
  return scores;
}

double SimilarityOracle::score(const Image& image, const std::string& id) {
  return score_batch(std::span<const Image>(&image, 1), id).front();
}

RandomEmbedder::RandomEmbedder(std::uint64_t seed, Geometry geometry, EmbedderOptions options)
    : seed_(seed), geometry_(geometry), options_(options) {
  if (options_.dim < 2) throw UsageError("embedding dimension must be at least 2");
  if (geometry_.size() == 0) throw DimensionError("empty oracle geometry");
  const auto d = static_cast<Eigen::Index>(geometry_.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  projection_.resize(options_.dim, d);
  for (Eigen::Index i = 0; i < projection_.rows(); ++i)
    for (Eigen::Index j = 0; j < d; ++j) projection_(i, j) = normal(rng);
}

Embedding RandomEmbedder::embed(const Image& image) const {
  if (image.geometry() != geometry_) {
    throw DimensionError("image geometry " + image.geometry().to_string() + " does not match embedder " +
                         geometry_.to_string());
  }
  Eigen::VectorXd u = flatten(image).cwiseMax(0.0).cwiseMin(1.0);
  if (options_.centered) u = 2.0 * u.array() - 1.0;
  Embedding e;
  e.values = projection_ * u;
  if (options_.nonlinear) e.values = (kTanhGain * e.values.array()).tanh().matrix();
  const double n = e.values.norm();
  if (n > 0.0) {
    e.values /= n;
    e.normalized = true;
  }
  return e;
}

void RandomEmbedder::enroll(const std::string& id, const Image& image) {
  Embedding e = embed(image);
  std::unique_lock lock(gallery_mutex_);
  gallery_[id] = std::move(e);
}

std::vector<double> RandomEmbedder::do_score_batch(std::span<const Image> images, const std::string& id) {
  Embedding enrolled;
  {
    std::shared_lock lock(gallery_mutex_);
    auto it = gallery_.find(id);
    if (it == gallery_.end()) throw UnknownIdentityError(id);
    enrolled = it->second;
  }
  std::vector<double> scores;
  scores.reserve(images.size());
  for (const Image& img : images) scores.push_back(embedding_similarity(embed(img), enrolled));
  used_.fetch_add(images.size());
  return scores;
}

std::unique_ptr<RandomEmbedder> make_random_embedder(std::uint64_t seed, Geometry geometry, int m,
                                                     bool nonlinear) {
  EmbedderOptions options{m, nonlinear, nonlinear};
  return std::make_unique<RandomEmbedder>(seed, geometry, options);
}

BudgetedOracle::BudgetedOracle(std::shared_ptr<SimilarityOracle> inner, std::uint64_t limit)
    : inner_(std::move(inner)), limit_(limit) {
  if (!inner_) throw UsageError("budgeted oracle needs an inner oracle");
}

std::uint64_t BudgetedOracle::queries_used() const {
  std::lock_guard lock(mutex_);
  return used_;
}

std::optional<std::uint64_t> BudgetedOracle::budget_remaining() const {
  std::lock_guard lock(mutex_);
  return limit_ - used_;
}

std::vector<double> BudgetedOracle::do_score_batch(std::span<const Image> images, const std::string& id) {
  const std::uint64_t n = images.size();
  {
    std::lock_guard lock(mutex_);
    if (used_ + n > limit_) throw BudgetExhaustedError(used_, limit_, n);
    used_ += n;
  }
  try {
    return inner_->score_batch(images, id);
  } catch (...) {
    std::lock_guard lock(mutex_);
    used_ -= n;
    throw;
  }
}

std::shared_ptr<SimilarityOracle> with_budget(std::shared_ptr<SimilarityOracle> inner, std::uint64_t limit) {
  return std::make_shared<BudgetedOracle>(std::move(inner), limit);
}

std::vector<double> QuantizingOracle::do_score_batch(std::span<const Image> images, const std::string& id) {
  std::vector<Image> quantized;
  quantized.reserve(images.size());
  for (const Image& img : images) quantized.push_back(quantize(img));
  return inner_->score_batch(quantized, id);
}

AttractorOracle::AttractorOracle(std::shared_ptr<const RandomEmbedder> embedder)
    : embedder_(std::move(embedder)) {
  if (!embedder_) throw UsageError("attractor oracle needs an embedder");
}

void AttractorOracle::enroll(const std::string& id, const Image& image) {
  Embedding e = embedder_->embed(image);
  std::unique_lock lock(mutex_);
  gallery_[id] = Entry{std::move(e), {}};
}

void AttractorOracle::add_decoy(const std::string& id, const Image& decoy, double ceiling) {
  if (!(ceiling > 0.0 && ceiling <= 1.0)) throw UsageError("decoy ceiling must lie in (0,1]");
  Embedding e = embedder_->embed(decoy);
  std::unique_lock lock(mutex_);
  auto it = gallery_.find(id);
  if (it == gallery_.end()) throw UnknownIdentityError(id);
  it->second.decoys.emplace_back(std::move(e), ceiling);
}

std::vector<double> AttractorOracle::do_score_batch(std::span<const Image> images, const std::string& id) {
  Entry entry;
  {
    std::shared_lock lock(mutex_);
    auto it = gallery_.find(id);
    if (it == gallery_.end()) throw UnknownIdentityError(id);
    entry = it->second;
  }
  std::vector<double> scores;
  scores.reserve(images.size());
  for (const Image& img : images) {
    const Embedding e = embedder_->embed(img);
    double s = embedding_similarity(e, entry.target);
    for (const auto& [decoy, ceiling] : entry.decoys) s = std::max(s, ceiling * embedding_similarity(e, decoy));
    scores.push_back(s);
  }
  used_.fetch_add(images.size());
  return scores;
}

}  // namespace facet
