#pragma once

// Independent reference implementations used as test oracles. They share no code path
// with the library beyond the data types.

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "facet/image.hpp"
#include "facet/recovery.hpp"

namespace oracles {

// Mirror index in flattened channel-major/row-major order, written out longhand.
inline Eigen::Index mirrored_index(const facet::Geometry& g, Eigen::Index i) {
  const Eigen::Index plane = static_cast<Eigen::Index>(g.height) * g.width;
  const Eigen::Index ch = i / plane;
  const Eigen::Index r = (i % plane) / g.width;
  const Eigen::Index c = i % g.width;
  return ch * plane + r * g.width + (g.width - 1 - c);
}

// Loss by explicit loops: MSE(target, W2 (W1^T x)) [+ MSE(x_pair, W2 z)].
inline double naive_loss(const Eigen::MatrixXd& w1, const Eigen::MatrixXd& w2, const facet::Geometry& g,
                         const Eigen::VectorXd& x, const Eigen::VectorXd& z, const Eigen::VectorXd& x_pair,
                         bool symmetry, bool generative) {
  const Eigen::Index d = w1.rows(), k = w1.cols();
  std::vector<double> code(static_cast<std::size_t>(k), 0.0);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < d; ++i) code[static_cast<std::size_t>(j)] += w1(i, j) * x(i);
  double recon = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    double y = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) y += w2(i, j) * code[static_cast<std::size_t>(j)];
    const double target = symmetry ? (x(i) + 2.0 * x(mirrored_index(g, i))) / 3.0 : x(i);
    recon += (y - target) * (y - target);
  }
  double total = recon / static_cast<double>(d);
  if (generative) {
    double gen = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      double y = 0.0;
      for (Eigen::Index j = 0; j < k; ++j) y += w2(i, j) * z(j);
      gen += (x_pair(i) - y) * (x_pair(i) - y);
    }
    total += gen / static_cast<double>(d);
  }
  return total;
}

// Central finite differences of naive_loss with respect to every weight entry.
struct NumericGrad {
  Eigen::MatrixXd dw1, dw2;
};

inline NumericGrad finite_difference_grad(const Eigen::MatrixXd& w1, const Eigen::MatrixXd& w2,
                                          const facet::Geometry& g, const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& z, const Eigen::VectorXd& x_pair, bool symmetry,
                                          bool generative, double h = 1e-5) {
  NumericGrad out{Eigen::MatrixXd(w1.rows(), w1.cols()), Eigen::MatrixXd(w2.rows(), w2.cols())};
  auto f = [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return naive_loss(a, b, g, x, z, x_pair, symmetry, generative);
  };
  for (Eigen::Index i = 0; i < w1.size(); ++i) {
    Eigen::MatrixXd plus = w1, minus = w1;
    plus.data()[i] += h;
    minus.data()[i] -= h;
    out.dw1.data()[i] = (f(plus, w2) - f(minus, w2)) / (2 * h);
  }
  for (Eigen::Index i = 0; i < w2.size(); ++i) {
    Eigen::MatrixXd plus = w2, minus = w2;
    plus.data()[i] += h;
    minus.data()[i] -= h;
    out.dw2.data()[i] = (f(w1, plus) - f(w1, minus)) / (2 * h);
  }
  return out;
}

// ||a - b|| / max(||a||, ||b||, floor) over both gradient blocks.
inline double relative_error(const Eigen::MatrixXd& a1, const Eigen::MatrixXd& a2, const Eigen::MatrixXd& b1,
                             const Eigen::MatrixXd& b2, double floor = 1e-12) {
  const double diff = std::sqrt((a1 - b1).squaredNorm() + (a2 - b2).squaredNorm());
  const double scale = std::max({std::sqrt(a1.squaredNorm() + a2.squaredNorm()),
                                 std::sqrt(b1.squaredNorm() + b2.squaredNorm()), floor});
  return diff / scale;
}

// Replays recorded ascent iterations and lists every step where the recorded choice,
// acceptance or accumulator update differs from a brute-force recomputation. Iterations
// are grouped by restart line; `score` (optional) re-scores each candidate coefficient
// vector and is compared with the recorded scores at `score_tol`.
struct ReplayLine {
  Eigen::VectorXd coeffs;
  double best = -std::numeric_limits<double>::infinity();
  int iteration = 0;
};

inline std::vector<std::string> replay_violations(
    const std::vector<facet::IterationTrace>& traces, facet::AcceptMode mode,
    const std::function<double(const Eigen::VectorXd&)>& score = {}, double score_tol = 1e-9,
    std::map<int, ReplayLine>* lines_out = nullptr) {
  std::vector<std::string> problems;
  std::map<int, ReplayLine> lines;
  for (const auto& t : traces) {
    const std::string where = "restart " + std::to_string(t.restart_id) + " iteration " + std::to_string(t.iteration);
    auto found = lines.find(t.restart_id);
    if (found == lines.end()) {
      found = lines.emplace(t.restart_id, ReplayLine{Eigen::VectorXd::Zero(t.base_coeffs.size())}).first;
    }
    ReplayLine& line = found->second;
    if (t.iteration != line.iteration + 1) problems.push_back(where + ": iteration out of sequence");
    line.iteration = t.iteration;
    if (t.base_coeffs.size() != line.coeffs.size() || t.base_coeffs != line.coeffs) {
      problems.push_back(where + ": accumulator differs from replay");
      line.coeffs = t.base_coeffs;
    }

    std::size_t chosen = 0;
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < t.scores.size(); ++j) {
      if (t.scores[j] > top) {
        top = t.scores[j];
        chosen = j;
      }
    }
    if (static_cast<std::size_t>(t.chosen) != chosen) problems.push_back(where + ": wrong argmax");

    if (score) {
      for (Eigen::Index j = 0; j < t.offsets.rows(); ++j) {
        const Eigen::VectorXd candidate = line.coeffs + t.offsets.row(j).transpose();
        if (std::abs(score(candidate) - t.scores[static_cast<std::size_t>(j)]) > score_tol) {
          problems.push_back(where + ": recorded score differs for candidate " + std::to_string(j));
        }
      }
    }

    const bool accept = mode == facet::AcceptMode::always || top > line.best;
    if (t.accepted != accept) problems.push_back(where + ": wrong acceptance");
    if (accept) {
      for (Eigen::Index i = 0; i < line.coeffs.size(); ++i) line.coeffs(i) += t.offsets(static_cast<Eigen::Index>(chosen), i);
      line.best = std::max(line.best, top);
    }
  }
  if (lines_out) *lines_out = std::move(lines);
  return problems;
}

}  // namespace oracles
