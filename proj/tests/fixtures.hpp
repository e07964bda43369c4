#pragma once

#include <random>

#include <Eigen/Dense>

namespace fixtures {

// n samples (columns) of exact combinations of k orthonormal patterns in R^d with
// per-pattern scales 4, 3, 2.5, 2, 2, ..., plus optional isotropic noise.
inline Eigen::MatrixXd linear_dataset(Eigen::Index d, Eigen::Index k, Eigen::Index n, double noise,
                                      std::uint64_t seed, Eigen::MatrixXd* patterns = nullptr) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(d, k);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
  const double scales[] = {4.0, 3.0, 2.5, 2.0};
  Eigen::MatrixXd samples(d, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::VectorXd coeffs(k);
    for (Eigen::Index j = 0; j < k; ++j) coeffs(j) = (j < 4 ? scales[j] : 2.0) * normal(rng);
    samples.col(c) = q * coeffs;
    for (Eigen::Index i = 0; i < d; ++i) samples(i, c) += noise * normal(rng);
  }
  if (patterns) *patterns = q;
  return samples;
}

}  // namespace fixtures
