#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "facet/eigenbasis.hpp"
#include "facet/image.hpp"
#include "facet/oracle.hpp"
#include "facet/recovery.hpp"

namespace facet {

struct NamedImage {
  std::string name;
  Image image;
};

// Files of a directory, named by their stem, in lexicographic order.
std::vector<NamedImage> load_targets(const std::filesystem::path& dir);

struct TargetRow {
  std::string target;
  double attacked_similarity = 0.0;
  double critic_similarity = 0.0;
  std::uint64_t queries = 0;

  bool operator==(const TargetRow&) const = default;
};

struct EvalReport {
  std::size_t n_targets = 0;
  double attacked_mean = 0.0;
  double attacked_std = 0.0;
  double critic_mean = 0.0;
  double critic_std = 0.0;
  double mean_queries = 0.0;
  std::vector<TargetRow> rows;  // sorted by target name
  std::string fingerprint;

  // Aggregates recomputed from rows (population standard deviation).
  static EvalReport from_rows(std::vector<TargetRow> rows, std::string fingerprint);
};

inline constexpr const char* kReportCsvHeader = "target,attacked_similarity,critic_similarity,queries";
std::string report_csv(const EvalReport& report);
std::vector<TargetRow> parse_report_csv(const std::string& text);
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);

// For every target: enroll it under its name in both oracles, attack `attacked` with
// recover_multistart, then record the attacked score of the recovered image (the score the
// attacked oracle already returned for it, so no extra query is spent) and one critic
// score. Critic queries never touch the attacked oracle's budget.
EvalReport evaluate(const std::vector<NamedImage>& targets, SimilarityOracle& attacked, SimilarityOracle& critic,
                    const EigenBasis& basis, const RecoveryConfig& cfg, const std::string& fingerprint = {},
                    std::vector<Image>* recovered = nullptr);

struct AblationCell {
  LossTerms terms;
  int restarts = 0;
  EvalReport report;
};

// Every (basis variant, restart setting) pair over the same targets, oracles and seeds.
// Cells are ordered variant-major in the order given.
std::vector<AblationCell> ablation(const std::vector<NamedImage>& targets,
                                   const std::vector<std::pair<LossTerms, EigenBasis>>& variants,
                                   const std::vector<int>& restart_settings, SimilarityOracle& attacked,
                                   SimilarityOracle& critic, const RecoveryConfig& cfg);

inline constexpr const char* kAblationCsvHeader =
    "loss,restarts,attacked_mean,attacked_std,critic_mean,critic_std,mean_queries";
std::string ablation_csv(const std::vector<AblationCell>& cells);

struct VerificationResult {
  double accuracy = 0.0;
  double threshold = 0.0;  // pairs scoring >= threshold are declared genuine
};

double verification_accuracy_at(const std::vector<double>& genuine, const std::vector<double>& impostor,
                                double threshold);
// Sweeps every threshold that changes a decision: midpoints between consecutive distinct
// scores, plus one below and one above the range. Best accuracy, lowest threshold on ties.
VerificationResult best_verification(const std::vector<double>& genuine, const std::vector<double>& impostor);

// Genuine pairs (recovered_i, target_i); impostor pairs (recovered_i, target_{i+1 mod n}).
// Targets are enrolled under scratch ids in `oracle`.
VerificationResult verification_test(const std::vector<Image>& recovered, const std::vector<Image>& targets,
                                     SimilarityOracle& oracle);

// Two-sided exact sign test p-value: `positive` wins out of `n` non-tied pairs.
double sign_test_p_value(int positive, int n);

}  // namespace facet
