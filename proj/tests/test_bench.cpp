#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "facet/bench.hpp"
#include "facet/error.hpp"
#include "facet/synthetic.hpp"
#include "test_util.hpp"

using namespace facet;

namespace {

const Geometry kGeom{8, 8, 1};

struct Scenario {
  EigenBasis basis;
  std::vector<NamedImage> targets;
};

// Targets that the basis can represent exactly: least-squares fits of synthetic faces.
Scenario solvable(int n_targets, Eigen::Index k) {
  const FaceGenerator faces(kGeom, 21);
  const PcaBasis pca = pca_basis(faces.sample_many(200, 1), k);
  EigenBasis basis = pca.basis();
  std::vector<NamedImage> targets;
  const auto raw = faces.sample_many(static_cast<std::size_t>(n_targets), 2);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const Eigen::VectorXd c = basis.matrix().colPivHouseholderQr().solve(flatten(raw[i]));
    targets.push_back({"t" + std::to_string(i), clip(synthesize(basis, c))});
  }
  return {std::move(basis), std::move(targets)};
}

RecoveryConfig small_config() {
  RecoveryConfig cfg;
  cfg.batch_size = 16;
  cfg.query_budget = 4000;
  cfg.restarts = 2;
  cfg.restart_iters = 20;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("a critic identical to the attacked oracle reports the attacked score") {
  auto s = solvable(3, 8);
  RandomEmbedder attacked(5, kGeom), critic(5, kGeom);
  const EvalReport report = evaluate(s.targets, attacked, critic, s.basis, small_config(), "fp");
  REQUIRE(report.rows.size() == 3);
  for (const auto& row : report.rows) {
    CHECK(row.critic_similarity == doctest::Approx(row.attacked_similarity).epsilon(1e-12));
    CHECK(row.queries == 4000);
  }
  CHECK(attacked.queries_used() == 3 * 4000);
  CHECK(critic.queries_used() == 3);
  CHECK(report.fingerprint == "fp");
}

TEST_CASE("targets inside the span are recovered against a linear oracle") {
  auto s = solvable(4, 12);
  RandomEmbedder attacked(7, kGeom, EmbedderOptions::linear(64));
  RandomEmbedder critic(8, kGeom, EmbedderOptions::linear(64));
  RecoveryConfig cfg = small_config();
  cfg.query_budget = 8000;
  cfg.sigma = 0.3;  // unit-norm columns: steps on the pixel scale
  std::vector<Image> recovered;
  const EvalReport report = evaluate(s.targets, attacked, critic, s.basis, cfg, "", &recovered);
  CHECK(recovered.size() == 4);
  for (const auto& row : report.rows) CHECK(row.attacked_similarity >= 0.99);
  CHECK(report.n_targets == 4);
}

TEST_CASE("report aggregates follow the rows") {
  std::vector<TargetRow> rows{{"b", 0.5, 0.25, 10}, {"a", 1.0, 0.75, 30}};
  const EvalReport r = EvalReport::from_rows(rows, "x");
  CHECK(r.rows.front().target == "a");
  CHECK(r.attacked_mean == doctest::Approx(0.75));
  CHECK(r.attacked_std == doctest::Approx(0.25));
  CHECK(r.critic_mean == doctest::Approx(0.5));
  CHECK(r.critic_std == doctest::Approx(0.25));
  CHECK(r.mean_queries == doctest::Approx(20.0));
}

TEST_CASE("report CSV regenerates the report") {
  std::vector<TargetRow> rows{{"face_01", 0.123456789012345678, -0.5, 50000}, {"face_00", 1.0 / 3.0, 0.2, 7}};
  const EvalReport r = EvalReport::from_rows(rows, "");
  const std::string csv = report_csv(r);
  CHECK(csv.rfind("target,attacked_similarity,critic_similarity,queries\n", 0) == 0);
  const EvalReport back = EvalReport::from_rows(parse_report_csv(csv), "");
  CHECK(back.rows == r.rows);
  CHECK(report_csv(back) == csv);
  CHECK(back.critic_mean == r.critic_mean);

  const auto dir = testutil::scratch_dir("bench_report");
  write_report_csv(r, dir / "report.csv");
  std::ifstream in(dir / "report.csv");
  std::stringstream buf;
  buf << in.rdbuf();
  CHECK(buf.str() == csv);

  CHECK_THROWS_AS(parse_report_csv("nope\n"), FormatError);
  CHECK_THROWS_AS(parse_report_csv(std::string(kReportCsvHeader) + "\na,b,c,d\n"), FormatError);
}

TEST_CASE("ablation produces one cell per variant and restart setting") {
  auto s = solvable(2, 6);
  RandomEmbedder attacked(1, kGeom), critic(2, kGeom);
  std::vector<std::pair<LossTerms, EigenBasis>> variants{{LossTerms::sl(), s.basis}, {LossTerms::sr_gr(), s.basis}};
  RecoveryConfig cfg = small_config();
  cfg.query_budget = 800;
  const auto cells = ablation(s.targets, variants, {0, 2}, attacked, critic, cfg);
  REQUIRE(cells.size() == 4);
  CHECK(cells[0].terms == LossTerms::sl());
  CHECK(cells[0].restarts == 0);
  CHECK(cells[3].terms == LossTerms::sr_gr());
  CHECK(cells[3].restarts == 2);
  for (const auto& c : cells) CHECK(c.report.rows.size() == 2);
  // same seeds and basis: the two variants see the same numbers
  CHECK(cells[0].report.critic_mean == cells[2].report.critic_mean);

  const std::string csv = ablation_csv(cells);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(csv.rfind("loss,restarts,attacked_mean,attacked_std,critic_mean,critic_std,mean_queries\nSL,0,", 0) == 0);
}

TEST_CASE("evaluation input errors") {
  auto s = solvable(1, 4);
  RandomEmbedder attacked(1, kGeom), critic(2, Geometry{8, 8, 3});
  CHECK_THROWS_AS(evaluate(s.targets, attacked, critic, s.basis, small_config()), DimensionError);
  RandomEmbedder critic_ok(2, kGeom);
  CHECK_THROWS_AS(evaluate({}, attacked, critic_ok, s.basis, small_config()), InputError);
  RecoveryConfig bad = small_config();
  bad.query_budget = 10;
  CHECK_THROWS_AS(evaluate(s.targets, attacked, critic_ok, s.basis, bad), UsageError);
  CHECK(attacked.queries_used() == 0);
}

TEST_CASE("verification accuracy examples") {
  CHECK(best_verification({0.9, 0.8, 0.95}, {0.1, 0.3, 0.2}).accuracy == 1.0);
  const auto r = best_verification({0.9, 0.8, 0.95}, {0.1, 0.3, 0.2});
  CHECK(r.threshold > 0.3);
  CHECK(r.threshold <= 0.8);
  CHECK(verification_accuracy_at({0.5}, {0.5}, 0.5) == 0.5);
  CHECK(best_verification({0.2}, {0.9}).accuracy == 0.5);
  CHECK_THROWS_AS(best_verification({}, {}), InputError);
}

TEST_CASE("verification on exchangeable scores is near chance") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> genuine, impostor;
  for (int i = 0; i < 100; ++i) {
    genuine.push_back(n(rng));
    impostor.push_back(n(rng));
  }
  const double acc = best_verification(genuine, impostor).accuracy;
  CHECK(acc >= 0.4);
  CHECK(acc <= 0.6);
}

TEST_CASE("verification accuracy is invariant to monotone rescaling") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> genuine, impostor;
  for (int i = 0; i < 40; ++i) {
    genuine.push_back(0.7 + n(rng));
    impostor.push_back(n(rng));
  }
  auto g2 = genuine, i2 = impostor;
  for (double& v : g2) v = std::exp(3.0 * v) - 2.0;
  for (double& v : i2) v = std::exp(3.0 * v) - 2.0;
  CHECK(best_verification(genuine, impostor).accuracy == best_verification(g2, i2).accuracy);
}

TEST_CASE("verification test pairs recovered images with their own targets") {
  std::mt19937_64 rng(14);
  std::vector<Image> targets;
  for (int i = 0; i < 6; ++i) targets.push_back(testutil::random_image(kGeom, rng));
  RandomEmbedder oracle(3, kGeom);
  CHECK(verification_test(targets, targets, oracle).accuracy == 1.0);
  CHECK(oracle.queries_used() == 12);
  CHECK_THROWS_AS(verification_test({targets[0]}, targets, oracle), DimensionError);
}

TEST_CASE("sign test p-values") {
  CHECK(sign_test_p_value(10, 10) == doctest::Approx(2.0 / 1024.0));
  CHECK(sign_test_p_value(0, 10) == doctest::Approx(2.0 / 1024.0));
  CHECK(sign_test_p_value(5, 10) == 1.0);
  // P(X >= 15 | n = 20) = 0.020694732666015625
  CHECK(sign_test_p_value(15, 20) == doctest::Approx(2 * 0.020694732666015625).epsilon(1e-12));
  CHECK(sign_test_p_value(0, 0) == 1.0);
}

TEST_CASE("targets load by file stem in order") {
  const auto dir = testutil::scratch_dir("bench_targets");
  write_image(Image(kGeom, 0.5), dir / "b.pgm");
  write_image(Image(kGeom, 0.25), dir / "a.pgm");
  const auto targets = load_targets(dir);
  REQUIRE(targets.size() == 2);
  CHECK(targets[0].name == "a");
  CHECK(targets[1].name == "b");
}
