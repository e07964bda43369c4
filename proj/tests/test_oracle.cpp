#include <doctest.h>

#include <cmath>
#include <random>
#include <thread>

#include "facet/error.hpp"
#include "facet/oracle.hpp"
#include "test_util.hpp"

using namespace facet;

namespace {

const Geometry kGeom{6, 5, 1};

// Scores whatever it is told to, counting images like a real oracle.
class ScriptedOracle final : public SimilarityOracle {
 public:
  explicit ScriptedOracle(double value) : value_(value) {}
  Geometry geometry() const override { return kGeom; }
  void enroll(const std::string&, const Image&) override {}
  std::uint64_t queries_used() const override { return used_; }

 protected:
  std::vector<double> do_score_batch(std::span<const Image> images, const std::string&) override {
    used_ += images.size();
    return std::vector<double>(images.size(), value_);
  }

 private:
  double value_;
  std::uint64_t used_ = 0;
};

}  // namespace

TEST_CASE("cosine examples") {
  CHECK(cosine(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)) == doctest::Approx(0.0));
  CHECK(cosine(Eigen::Vector2d(1, 1), Eigen::Vector2d(2, 2)) == doctest::Approx(1.0));
  CHECK(cosine(Eigen::Vector2d(1, 1), Eigen::Vector2d(-3, -3)) == doctest::Approx(-1.0));
  CHECK(cosine(Eigen::Vector2d(3, 4), Eigen::Vector2d(4, 3)) == doctest::Approx(24.0 / 25.0));
  CHECK_THROWS_AS(cosine(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0)), DegenerateInputError);
  CHECK_THROWS_AS(cosine(Eigen::Vector2d(1, 0), Eigen::Vector3d(1, 0, 0)), DimensionError);
  CHECK(embedding_similarity(Embedding{Eigen::Vector2d(0, 0), false}, Embedding{Eigen::Vector2d(1, 0), true}) == 0.0);
}

TEST_CASE("an enrolled image scores one against itself") {
  std::mt19937_64 rng(1);
  for (bool nonlinear : {true, false}) {
    auto oracle = make_random_embedder(3, kGeom, 32, nonlinear);
    const Image img = testutil::random_image(kGeom, rng);
    oracle->enroll("a", img);
    CHECK(oracle->score(img, "a") == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(oracle->queries_used() == 1);
  }
}

TEST_CASE("embeddings are deterministic in seed and image") {
  std::mt19937_64 rng(2);
  const Image img = testutil::random_image(kGeom, rng);
  RandomEmbedder a(7, kGeom), b(7, kGeom), c(8, kGeom);
  CHECK(a.embed(img).values == b.embed(img).values);
  CHECK(a.embed(img).normalized);
  CHECK(a.embed(img).values.norm() == doctest::Approx(1.0));
  CHECK(a.queries_used() == 0);

  // different seeds give decorrelated embedders
  Eigen::VectorXd ea(0), ec(0);
  std::vector<double> sa, sc;
  a.enroll("t", img);
  c.enroll("t", img);
  for (int i = 0; i < 20; ++i) {
    const Image probe = testutil::random_image(kGeom, rng);
    sa.push_back(a.score(probe, "t"));
    sc.push_back(c.score(probe, "t"));
  }
  const Eigen::Map<Eigen::VectorXd> va(sa.data(), 20), vc(sc.data(), 20);
  const Eigen::VectorXd ca = va.array() - va.mean(), cc = vc.array() - vc.mean();
  CHECK(std::abs(cosine(ca, cc)) < 0.99);
}

TEST_CASE("the linear embedder ignores positive scaling") {
  std::mt19937_64 rng(3);
  RandomEmbedder oracle(5, kGeom, EmbedderOptions::linear(16));
  const Image img = testutil::random_image(kGeom, rng);
  oracle.enroll("a", img);
  Image half = img;
  for (double& v : half.data()) v *= 0.5;
  CHECK(oracle.score(half, "a") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(oracle.embed(Image(kGeom)).values.isZero());
  CHECK(oracle.score(Image(kGeom), "a") == 0.0);
}

TEST_CASE("score_batch validates ids, geometry and counts") {
  RandomEmbedder oracle(1, kGeom);
  oracle.enroll("a", Image(kGeom, 0.5));
  CHECK_THROWS_AS(oracle.score(Image(kGeom), "nobody"), UnknownIdentityError);
  CHECK_THROWS_AS(oracle.score(Image(Geometry{5, 6, 1}), "a"), DimensionError);
  CHECK_THROWS_AS(oracle.enroll("b", Image(Geometry{5, 6, 1})), DimensionError);
  std::vector<Image> batch(4, Image(kGeom, 0.3));
  CHECK(oracle.score_batch(batch, "a").size() == 4);
  CHECK(oracle.queries_used() == 4);
}

TEST_CASE("scores outside [-1,1] are clamped and NaN is refused") {
  ScriptedOracle high(1.0 + 1e-12);
  CHECK(high.score(Image(kGeom), "x") == 1.0);
  ScriptedOracle nan(std::nan(""));
  CHECK_THROWS_AS(nan.score(Image(kGeom), "x"), NumericalError);
}

TEST_CASE("enrollment stores a copy") {
  RandomEmbedder oracle(4, kGeom);
  Image img(kGeom, 0.2);
  img.at(0, 0, 0) = 0.9;
  oracle.enroll("a", img);
  const Image original = img;
  img.at(1, 1, 0) = 1.0;
  CHECK(oracle.score(original, "a") == doctest::Approx(1.0));
  CHECK(oracle.score(img, "a") < 1.0);
}

TEST_CASE("budget rejects a batch whole and keeps the count") {
  auto inner = std::make_shared<RandomEmbedder>(1, kGeom);
  inner->enroll("a", Image(kGeom, 0.5));
  auto oracle = with_budget(inner, 10);
  CHECK(oracle->budget() == 10u);
  std::vector<Image> five(5, Image(kGeom, 0.4));
  oracle->score_batch(five, "a");
  oracle->score_batch(five, "a");
  CHECK(oracle->queries_used() == 10);
  CHECK(oracle->budget_remaining() == 0u);
  try {
    oracle->score(Image(kGeom), "a");
    FAIL("expected rejection");
  } catch (const BudgetExhaustedError& e) {
    CHECK(e.used() == 10);
    CHECK(e.limit() == 10);
    CHECK(e.attempted() == 1);
  }
  CHECK(oracle->queries_used() == 10);
  CHECK(inner->queries_used() == 10);

  auto partial = with_budget(inner, 7);
  partial->score_batch(five, "a");
  CHECK_THROWS_AS(partial->score_batch(five, "a"), BudgetExhaustedError);
  CHECK(partial->queries_used() == 5);
  CHECK(partial->budget_remaining() == 2u);
}

TEST_CASE("a failed inner call is not billed") {
  auto inner = std::make_shared<RandomEmbedder>(1, kGeom);
  auto oracle = with_budget(inner, 10);
  CHECK_THROWS_AS(oracle->score(Image(kGeom), "missing"), UnknownIdentityError);
  CHECK(oracle->queries_used() == 0);
}

TEST_CASE("concurrent callers are counted exactly") {
  auto inner = std::make_shared<RandomEmbedder>(2, kGeom);
  inner->enroll("a", Image(kGeom, 0.5));
  auto oracle = with_budget(inner, 1000);
  std::vector<std::thread> threads;
  std::atomic<int> rejected{0};
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      std::mt19937_64 rng(t);
      for (int i = 0; i < 30; ++i) {
        std::vector<Image> batch(5, testutil::random_image(kGeom, rng));
        try {
          oracle->score_batch(batch, "a");
        } catch (const BudgetExhaustedError&) {
          ++rejected;
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(oracle->queries_used() == 1000);
  CHECK(inner->queries_used() == 1000);
  CHECK(rejected.load() == 8 * 30 - 200);
}

TEST_CASE("quantizing oracle scores the 8-bit image") {
  std::mt19937_64 rng(5);
  auto inner = std::make_shared<RandomEmbedder>(3, kGeom);
  const Image target = testutil::random_image(kGeom, rng);
  inner->enroll("a", target);
  QuantizingOracle q(inner);
  const Image probe = testutil::random_image(kGeom, rng);
  CHECK(q.score(probe, "a") == inner->score(quantize(probe), "a"));
  CHECK(q.queries_used() == 2);
}

TEST_CASE("attractor oracle takes the better of target and capped decoys") {
  std::mt19937_64 rng(6);
  auto embedder = std::make_shared<const RandomEmbedder>(9, kGeom);
  AttractorOracle oracle(embedder);
  const Image target = testutil::random_image(kGeom, rng);
  const Image decoy = testutil::random_image(kGeom, rng);
  oracle.enroll("a", target);
  CHECK_THROWS_AS(oracle.add_decoy("b", decoy, 0.8), UnknownIdentityError);
  CHECK_THROWS_AS(oracle.add_decoy("a", decoy, 1.5), UsageError);
  oracle.add_decoy("a", decoy, 0.8);

  CHECK(oracle.score(target, "a") == doctest::Approx(1.0));
  const double via_decoy = 0.8;
  const double direct = cosine(embedder->embed(decoy), embedder->embed(target));
  CHECK(oracle.score(decoy, "a") == doctest::Approx(std::max(direct, via_decoy)));
  CHECK(oracle.queries_used() == 2);
}
