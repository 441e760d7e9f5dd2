#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace jnirm {

/// Seeded random stream. Streams with different indices under the same seed
/// are independent for practical purposes (seeded through std::seed_seq).
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// gamma with shape and rate (mean shape / rate).
  double gamma(double shape, double rate);
  double chi_squared(double df) { return gamma(0.5 * df, 0.5); }
  Eigen::VectorXd normal_vector(Eigen::Index n);
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Standard normal truncated to (lower, inf).
double std_normal_tail(double lower, Rng& rng);

/// N(mean, sd^2) truncated to (lower, inf).
double truncated_normal_above(double mean, double sd, double lower, Rng& rng);
/// N(mean, sd^2) truncated to (-inf, upper].
double truncated_normal_below(double mean, double sd, double upper, Rng& rng);

/// Draw from N(P^-1 b, P^-1) for an SPD precision P.
Eigen::VectorXd mvn_from_precision(const Eigen::VectorXd& b, const Eigen::MatrixXd& P, Rng& rng);
/// Draw from N(mean, cov).
Eigen::VectorXd mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng);

/// Draw from N(P^-1 b, P^-1) with P = diag(w) + gamma * v v^T in O(n).
/// Requires P positive definite.
Eigen::VectorXd mvn_diag_plus_rank1(const Eigen::VectorXd& w, double gamma, const Eigen::VectorXd& v,
                                    const Eigen::VectorXd& b, Rng& rng);

/// Wishart(scale, df) via the Bartlett decomposition.
Eigen::MatrixXd wishart(const Eigen::MatrixXd& scale, double df, Rng& rng);
/// Inverse-Wishart(scale, df): the inverse of a Wishart(scale^-1, df) draw.
Eigen::MatrixXd inverse_wishart(const Eigen::MatrixXd& scale, double df, Rng& rng);

double normal_cdf(double x);
double normal_quantile(double p);

}  // namespace jnirm
