#include "facet/recovery.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "facet/error.hpp"

namespace facet {

const char* to_string(AcceptMode mode) { return mode == AcceptMode::always ? "always" : "monotone"; }

AcceptMode parse_accept_mode(const std::string& text) {
  if (text == "always") return AcceptMode::always;
  if (text == "monotone") return AcceptMode::monotone;
  throw UsageError("accept mode must be 'always' or 'monotone', got '" + text + "'");
}

void RecoveryConfig::validate() const {
  if (batch_size <= 0) throw UsageError("batch_size must be positive");
  if (query_budget == 0) throw UsageError("query_budget must be positive");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw UsageError("sigma must be a finite non-negative number");
  if (restarts < 0) throw UsageError("restarts must be non-negative");
  if (restarts > 0 && restart_iters <= 0) throw UsageError("restart_iters must be positive");
  if (restarts > 0 && probe_queries() >= query_budget) {
    throw UsageError("probe phase (" + std::to_string(restarts) + " x " + std::to_string(restart_iters) +
                     " x " + std::to_string(batch_size) + " = " + std::to_string(probe_queries()) +
                     " queries) leaves no budget for continuation within " + std::to_string(query_budget));
  }
}

Eigen::MatrixXd sample_coeff_batch(Eigen::Index k, int batch_size, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd z(batch_size, k);
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < k; ++j) z(i, j) = sigma * normal(rng);
  return z;
}

int argmax_first(const std::vector<double>& scores) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (scores[static_cast<std::size_t>(i)] > scores[static_cast<std::size_t>(best)]) best = i;
  return best;
}

std::uint64_t derive_seed(std::uint64_t seed, int restart_id) {
  // splitmix64 finalizer over (seed, restart_id)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(restart_id) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

// One restart line: its generator and accumulator can be checkpointed and resumed.
struct Line {
  int restart_id = 0;
  std::mt19937_64 rng;
  Eigen::VectorXd coeffs;
  double best = -std::numeric_limits<double>::infinity();
  double current = std::numeric_limits<double>::quiet_NaN();
  int iteration = 0;
};

struct Segment {
  std::uint64_t queries = 0;
  bool exhausted = false;
};

void check_inputs(const SimilarityOracle& oracle, const EigenBasis& basis) {
  if (oracle.geometry() != basis.geometry()) {
    throw DimensionError("basis geometry " + basis.geometry().to_string() + " does not match oracle " +
                         oracle.geometry().to_string());
  }
}

// Advances `line` by up to `iters` iterations without spending more than `max_queries`.
Segment advance(SimilarityOracle& oracle, const std::string& id, const EigenBasis& basis,
                const RecoveryConfig& cfg, Line& line, int iters, std::uint64_t max_queries,
                std::uint64_t query_offset, std::vector<TrajectoryRecord>& trajectory,
                const IterationObserver& observer) {
  const auto batch = static_cast<std::uint64_t>(cfg.batch_size);
  const Eigen::MatrixXd& e = basis.matrix();
  Segment seg;
  std::vector<Image> candidates(static_cast<std::size_t>(cfg.batch_size));

  for (int it = 0; it < iters; ++it) {
    if (seg.queries + batch > max_queries) break;
    if (auto remaining = oracle.budget_remaining(); remaining && *remaining < batch) {
      seg.exhausted = true;
      break;
    }
    const Eigen::MatrixXd offsets = sample_coeff_batch(basis.k(), cfg.batch_size, cfg.sigma, line.rng);
    Eigen::MatrixXd coeff_batch = offsets.transpose();
    coeff_batch.colwise() += line.coeffs;
    const Eigen::MatrixXd pixels = e * coeff_batch;
    for (Eigen::Index j = 0; j < pixels.cols(); ++j) {
      candidates[static_cast<std::size_t>(j)] = clip(reshape(pixels.col(j), basis.geometry()));
    }

    std::vector<double> scores;
    try {
      scores = oracle.score_batch(candidates, id);
    } catch (const BudgetExhaustedError&) {
      seg.exhausted = true;
      break;
    }
    seg.queries += batch;
    ++line.iteration;

    const int chosen = argmax_first(scores);
    const double top = scores[static_cast<std::size_t>(chosen)];
    const bool accept = cfg.accept_mode == AcceptMode::always || top > line.best;
    if (observer) {
      observer(IterationTrace{line.restart_id, line.iteration, line.coeffs, offsets, scores, chosen, accept});
    }
    if (accept) {
      line.coeffs += offsets.row(chosen).transpose();
      line.current = top;
      line.best = std::max(line.best, top);
    }
    trajectory.push_back(
        TrajectoryRecord{line.restart_id, line.iteration, query_offset + seg.queries, line.best, accept});
  }
  return seg;
}

RecoveryResult finish(const EigenBasis& basis, const Line& line, std::vector<TrajectoryRecord> trajectory,
                      std::uint64_t total, bool exhausted) {
  RecoveryResult r;
  r.coeffs = line.coeffs;
  r.image = clip(synthesize(basis, line.coeffs));
  r.final_score = line.current;
  r.best_score = line.best;
  r.trajectory = std::move(trajectory);
  r.total_queries = total;
  r.budget_exhausted = exhausted;
  r.chosen_restart = line.restart_id;
  return r;
}

Line start_line(int restart_id, std::uint64_t seed, const Eigen::VectorXd& init) {
  Line line;
  line.restart_id = restart_id;
  line.rng.seed(seed);
  line.coeffs = init;
  return line;
}

}  // namespace

RecoveryResult recover_single(SimilarityOracle& oracle, const std::string& id, const EigenBasis& basis,
                              const RecoveryConfig& cfg, const Eigen::VectorXd& init_coeffs, int iters,
                              const IterationObserver& observer) {
  if (cfg.batch_size <= 0) throw UsageError("batch_size must be positive");
  if (!(cfg.sigma >= 0.0)) throw UsageError("sigma must be non-negative");
  check_inputs(oracle, basis);
  Eigen::VectorXd init = init_coeffs.size() == 0 ? Eigen::VectorXd::Zero(basis.k()) : init_coeffs;
  if (init.size() != basis.k()) {
    throw DimensionError("initial coefficients have length " + std::to_string(init.size()) + ", basis has k=" +
                         std::to_string(basis.k()));
  }
  Line line = start_line(0, cfg.seed, init);
  std::vector<TrajectoryRecord> trajectory;
  const Segment seg = advance(oracle, id, basis, cfg, line, iters, cfg.query_budget, 0, trajectory, observer);
  return finish(basis, line, std::move(trajectory), seg.queries, seg.exhausted);
}

RecoveryResult recover_multistart(SimilarityOracle& oracle, const std::string& id, const EigenBasis& basis,
                                  const RecoveryConfig& cfg, const IterationObserver& observer) {
  cfg.validate();
  check_inputs(oracle, basis);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(basis.k());
  const auto batch = static_cast<std::uint64_t>(cfg.batch_size);
  std::vector<TrajectoryRecord> trajectory;
  std::uint64_t spent = 0;

  Line chosen = start_line(0, derive_seed(cfg.seed, 0), zero);
  if (cfg.restarts > 0) {
    std::vector<Line> probes;
    probes.reserve(static_cast<std::size_t>(cfg.restarts));
    const std::uint64_t probe_budget = static_cast<std::uint64_t>(cfg.restart_iters) * batch;
    for (int r = 0; r < cfg.restarts; ++r) {
      Line line = start_line(r, derive_seed(cfg.seed, r), zero);
      const Segment seg =
          advance(oracle, id, basis, cfg, line, cfg.restart_iters, probe_budget, spent, trajectory, observer);
      spent += seg.queries;
      probes.push_back(std::move(line));
      if (seg.exhausted) break;
    }
    std::size_t best = 0;
    for (std::size_t r = 1; r < probes.size(); ++r)
      if (probes[r].best > probes[best].best) best = r;
    chosen = std::move(probes[best]);
    if (probes.size() < static_cast<std::size_t>(cfg.restarts) ||
        (oracle.budget_remaining() && *oracle.budget_remaining() < batch)) {
      return finish(basis, chosen, std::move(trajectory), spent, true);
    }
  }

  const std::uint64_t remaining = cfg.query_budget - spent;
  const int iters = static_cast<int>(remaining / batch);
  const Segment seg = advance(oracle, id, basis, cfg, chosen, iters, remaining, spent, trajectory, observer);
  spent += seg.queries;
  return finish(basis, chosen, std::move(trajectory), spent, seg.exhausted);
}

std::string trajectory_csv(const std::vector<TrajectoryRecord>& records) {
  std::string out = std::string(kTrajectoryCsvHeader) + "\n";
  char line[128];
  for (const auto& r : records) {
    std::snprintf(line, sizeof line, "%d,%d,%llu,%.17g,%d\n", r.restart_id, r.iteration,
                  static_cast<unsigned long long>(r.queries_used), r.best_score, r.accepted ? 1 : 0);
    out += line;
  }
  return out;
}

void write_trajectory_csv(const std::vector<TrajectoryRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write trajectory '" + path.string() + "'");
  out << trajectory_csv(records);
  if (!out) throw InputError("write failed for '" + path.string() + "'");
}

}  // namespace facet
