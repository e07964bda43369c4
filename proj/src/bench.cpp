#include "facet/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

#include "facet/error.hpp"

namespace facet {

std::vector<NamedImage> load_targets(const std::filesystem::path& dir) {
  std::vector<NamedImage> out;
  for (const auto& p : list_images(dir)) out.push_back({p.stem().string(), read_image(p)});
  return out;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

EvalReport EvalReport::from_rows(std::vector<TargetRow> rows, std::string fingerprint) {
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.target < b.target; });
  std::vector<double> attacked, critic, queries;
  for (const auto& r : rows) {
    attacked.push_back(r.attacked_similarity);
    critic.push_back(r.critic_similarity);
    queries.push_back(static_cast<double>(r.queries));
  }
  EvalReport report;
  report.n_targets = rows.size();
  std::tie(report.attacked_mean, report.attacked_std) = mean_std(attacked);
  std::tie(report.critic_mean, report.critic_std) = mean_std(critic);
  report.mean_queries = mean_std(queries).first;
  report.rows = std::move(rows);
  report.fingerprint = std::move(fingerprint);
  return report;
}

std::string report_csv(const EvalReport& report) {
  std::string out = std::string(kReportCsvHeader) + "\n";
  for (const auto& r : report.rows) {
    out += r.target + "," + format_double(r.attacked_similarity) + "," + format_double(r.critic_similarity) + "," +
           std::to_string(r.queries) + "\n";
  }
  return out;
}

std::vector<TargetRow> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kReportCsvHeader) throw FormatError("report CSV: unexpected header");
  std::vector<TargetRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    TargetRow row;
    std::string attacked, critic, queries;
    if (!std::getline(fields, row.target, ',') || !std::getline(fields, attacked, ',') ||
        !std::getline(fields, critic, ',') || !std::getline(fields, queries)) {
      throw FormatError("report CSV: malformed row '" + line + "'");
    }
    try {
      row.attacked_similarity = std::stod(attacked);
      row.critic_similarity = std::stod(critic);
      row.queries = std::stoull(queries);
    } catch (const std::exception&) {
      throw FormatError("report CSV: bad number in row '" + line + "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write report '" + path.string() + "'");
  out << report_csv(report);
}

EvalReport evaluate(const std::vector<NamedImage>& targets, SimilarityOracle& attacked, SimilarityOracle& critic,
                    const EigenBasis& basis, const RecoveryConfig& cfg, const std::string& fingerprint,
                    std::vector<Image>* recovered) {
  if (targets.empty()) throw InputError("no targets to evaluate");
  if (critic.geometry() != attacked.geometry()) {
    throw DimensionError("critic geometry " + critic.geometry().to_string() + " differs from attacked oracle " +
                         attacked.geometry().to_string());
  }
  if (basis.geometry() != attacked.geometry()) {
    throw DimensionError("basis geometry " + basis.geometry().to_string() + " differs from attacked oracle " +
                         attacked.geometry().to_string());
  }
  cfg.validate();
  std::vector<TargetRow> rows;
  rows.reserve(targets.size());
  if (recovered) recovered->clear();
  for (const auto& target : targets) {
    attacked.enroll(target.name, target.image);
    critic.enroll(target.name, target.image);
    const RecoveryResult result = recover_multistart(attacked, target.name, basis, cfg);
    TargetRow row;
    row.target = target.name;
    row.attacked_similarity = result.final_score;
    row.critic_similarity = critic.score(result.image, target.name);
    row.queries = result.total_queries;
    rows.push_back(std::move(row));
    if (recovered) recovered->push_back(result.image);
  }
  return EvalReport::from_rows(std::move(rows), fingerprint);
}

std::vector<AblationCell> ablation(const std::vector<NamedImage>& targets,
                                   const std::vector<std::pair<LossTerms, EigenBasis>>& variants,
                                   const std::vector<int>& restart_settings, SimilarityOracle& attacked,
                                   SimilarityOracle& critic, const RecoveryConfig& cfg) {
  std::vector<AblationCell> cells;
  for (const auto& [terms, basis] : variants) {
    for (int restarts : restart_settings) {
      RecoveryConfig cell_cfg = cfg;
      cell_cfg.restarts = restarts;
      const std::string fp = std::string("loss=") + terms.name() + ";restarts=" + std::to_string(restarts) +
                             ";seed=" + std::to_string(cfg.seed) + ";budget=" + std::to_string(cfg.query_budget);
      cells.push_back({terms, restarts, evaluate(targets, attacked, critic, basis, cell_cfg, fp)});
    }
  }
  return cells;
}

std::string ablation_csv(const std::vector<AblationCell>& cells) {
  std::string out = std::string(kAblationCsvHeader) + "\n";
  for (const auto& c : cells) {
    out += std::string(c.terms.name()) + "," + std::to_string(c.restarts) + "," + format_double(c.report.attacked_mean) +
           "," + format_double(c.report.attacked_std) + "," + format_double(c.report.critic_mean) + "," +
           format_double(c.report.critic_std) + "," + format_double(c.report.mean_queries) + "\n";
  }
  return out;
}

double verification_accuracy_at(const std::vector<double>& genuine, const std::vector<double>& impostor,
                                double threshold) {
  const std::size_t total = genuine.size() + impostor.size();
  if (total == 0) throw InputError("verification needs at least one pair");
  std::size_t correct = 0;
  for (double s : genuine) correct += s >= threshold ? 1 : 0;
  for (double s : impostor) correct += s < threshold ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(total);
}

VerificationResult best_verification(const std::vector<double>& genuine, const std::vector<double>& impostor) {
  std::vector<double> all = genuine;
  all.insert(all.end(), impostor.begin(), impostor.end());
  if (all.empty()) throw InputError("verification needs at least one pair");
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  std::vector<double> thresholds;
  thresholds.push_back(all.front() - 1.0);
  for (std::size_t i = 0; i + 1 < all.size(); ++i) thresholds.push_back(0.5 * (all[i] + all[i + 1]));
  thresholds.push_back(all.back() + 1.0);

  VerificationResult best{-1.0, 0.0};
  for (double t : thresholds) {
    const double acc = verification_accuracy_at(genuine, impostor, t);
    if (acc > best.accuracy) best = {acc, t};
  }
  return best;
}

VerificationResult verification_test(const std::vector<Image>& recovered, const std::vector<Image>& targets,
                                     SimilarityOracle& oracle) {
  if (recovered.size() != targets.size()) throw DimensionError("recovered and target lists differ in length");
  if (targets.size() < 2) throw InputError("verification needs at least two targets");
  const std::size_t n = targets.size();
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = "__verify_" + std::to_string(i);
    oracle.enroll(ids[i], targets[i]);
  }
  std::vector<double> genuine, impostor;
  for (std::size_t i = 0; i < n; ++i) {
    genuine.push_back(oracle.score(recovered[i], ids[i]));
    impostor.push_back(oracle.score(recovered[i], ids[(i + 1) % n]));
  }
  return best_verification(genuine, impostor);
}

double sign_test_p_value(int positive, int n) {
  if (n <= 0) return 1.0;
  if (positive < 0 || positive > n) throw InputError("positive count out of range");
  const int extreme = std::min(positive, n - positive);
  // P(X <= extreme) for X ~ Binomial(n, 1/2), computed in log space.
  double tail = 0.0;
  for (int i = 0; i <= extreme; ++i) {
    const double log_term = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0);
    tail += std::exp(log_term);
  }
  return std::min(1.0, 2.0 * tail);
}

}  // namespace facet
