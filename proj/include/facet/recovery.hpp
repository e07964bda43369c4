#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "facet/eigenbasis.hpp"
#include "facet/image.hpp"
#include "facet/oracle.hpp"

namespace facet {

enum class AcceptMode {
  always,    // add the batch argmax every iteration, even if it scores lower
  monotone,  // add it only if it strictly beats the best score so far
};

const char* to_string(AcceptMode mode);
AcceptMode parse_accept_mode(const std::string& text);

struct RecoveryConfig {
  int batch_size = 16;
  std::uint64_t query_budget = 50'000;
  double sigma = 1.0;
  int restarts = 10;
  int restart_iters = 100;
  AcceptMode accept_mode = AcceptMode::monotone;
  std::uint64_t seed = 0;

  std::uint64_t probe_queries() const {
    return static_cast<std::uint64_t>(restarts) * static_cast<std::uint64_t>(restart_iters) *
           static_cast<std::uint64_t>(batch_size);
  }
  // Throws UsageError, including when the probe phase would not leave budget for the
  // continuation (restarts * restart_iters * batch_size >= query_budget).
  void validate() const;
};

struct TrajectoryRecord {
  int restart_id = 0;
  int iteration = 0;  // 1-based within the restart line, continued after the probe
  std::uint64_t queries_used = 0;  // cumulative since the start of the run
  double best_score = 0.0;
  bool accepted = false;

  bool operator==(const TrajectoryRecord&) const = default;
};

struct RecoveryResult {
  Image image;              // clip(synthesize(coeffs))
  Eigen::VectorXd coeffs;
  // Score of `image` as last reported by the oracle (NaN if nothing was scored). In
  // always mode this can be below the best score seen.
  double final_score = 0.0;
  double best_score = 0.0;
  std::vector<TrajectoryRecord> trajectory;
  std::uint64_t total_queries = 0;
  bool budget_exhausted = false;  // the oracle refused a batch; the result is partial
  int chosen_restart = 0;
};

// Everything an iteration saw, for replay and diagnostics.
struct IterationTrace {
  int restart_id = 0;
  int iteration = 0;
  Eigen::VectorXd base_coeffs;  // accumulator before the update
  Eigen::MatrixXd offsets;      // batch_size x k sampled coefficient offsets
  std::vector<double> scores;
  int chosen = 0;
  bool accepted = false;
};
using IterationObserver = std::function<void(const IterationTrace&)>;

// i.i.d. N(0, sigma^2) entries, drawn row by row.
Eigen::MatrixXd sample_coeff_batch(Eigen::Index k, int batch_size, double sigma, std::mt19937_64& rng);

// Index of the largest score; ties go to the lowest index.
int argmax_first(const std::vector<double>& scores);

// Seed of restart line r for a run seeded with `seed`.
std::uint64_t derive_seed(std::uint64_t seed, int restart_id);

// Best-of-batch ascent in coefficient space. Starts from init_coeffs (zero if empty) with
// a generator seeded by cfg.seed, and runs at most `iters` iterations, stopping early
// when the next batch would exceed cfg.query_budget or the oracle's remaining budget.
RecoveryResult recover_single(SimilarityOracle& oracle, const std::string& id, const EigenBasis& basis,
                              const RecoveryConfig& cfg, const Eigen::VectorXd& init_coeffs, int iters,
                              const IterationObserver& observer = {});

// cfg.restarts probe lines of cfg.restart_iters iterations each (seeds derive_seed(seed, r)),
// then continues the line with the highest best score (ties: lowest restart id) on the
// remaining budget. restarts == 0 is a single line over the whole budget; restarts == 1
// follows the same path.
RecoveryResult recover_multistart(SimilarityOracle& oracle, const std::string& id, const EigenBasis& basis,
                                  const RecoveryConfig& cfg, const IterationObserver& observer = {});

inline constexpr const char* kTrajectoryCsvHeader = "restart_id,iteration,queries_used,best_score,accepted";
std::string trajectory_csv(const std::vector<TrajectoryRecord>& records);
void write_trajectory_csv(const std::vector<TrajectoryRecord>& records, const std::filesystem::path& path);

}  // namespace facet
