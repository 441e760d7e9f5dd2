#include "jnirm/random.hpp"

#include "jnirm/linalg.hpp"
#include "jnirm/types.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>

namespace jnirm {

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x6a09e667u};
  engine_.seed(seq);
}

double Rng::gamma(double shape, double rate) {
  std::gamma_distribution<double> g(shape, 1.0 / rate);
  return g(engine_);
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index n) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = normal();
  return z;
}

Eigen::MatrixXd Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd z(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) z(i, j) = normal();
  return z;
}

// Robert (1995): exponential proposal for the far tail, naive rejection near
// the mode.
double std_normal_tail(double lower, Rng& rng) {
  if (lower <= 0.45) {
    for (;;) {
      const double z = rng.normal();
      if (z > lower) return z;
    }
  }
  const double alpha = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
  for (;;) {
    const double z = lower - std::log(1.0 - rng.uniform()) / alpha;
    const double d = z - alpha;
    if (std::log(rng.uniform()) <= -0.5 * d * d) return z;
  }
}

double truncated_normal_above(double mean, double sd, double lower, Rng& rng) {
  return mean + sd * std_normal_tail((lower - mean) / sd, rng);
}

double truncated_normal_below(double mean, double sd, double upper, Rng& rng) {
  return mean - sd * std_normal_tail((mean - upper) / sd, rng);
}

Eigen::VectorXd mvn_from_precision(const Eigen::VectorXd& b, const Eigen::MatrixXd& P, Rng& rng) {
  auto llt = robust_llt(P, "conditional precision");
  Eigen::VectorXd mean = llt.solve(b);
  Eigen::VectorXd z = rng.normal_vector(b.size());
  return mean + llt.matrixU().solve(z);
}

Eigen::VectorXd mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng) {
  auto llt = robust_llt(cov, "covariance");
  return mean + llt.matrixL() * rng.normal_vector(mean.size());
}

Eigen::VectorXd mvn_diag_plus_rank1(const Eigen::VectorXd& w, double gamma, const Eigen::VectorXd& v,
                                    const Eigen::VectorXd& b, Rng& rng) {
  // P = W^1/2 (I + gamma q q^T) W^1/2 with q = W^-1/2 v.
  if ((w.array() <= 0.0).any()) throw NumericalError("rank-one update: nonpositive diagonal");
  const Eigen::VectorXd wsqrt = w.cwiseSqrt();
  const Eigen::VectorXd q = v.cwiseQuotient(wsqrt);
  const double qq = q.squaredNorm();
  const double s = 1.0 + gamma * qq;
  if (!(s > 0.0)) throw NumericalError("rank-one update: precision is not positive definite");

  const Eigen::VectorXd bt = b.cwiseQuotient(wsqrt);
  // (I + gamma q q^T)^-1 = I - gamma / s q q^T
  Eigen::VectorXd mean_t = bt - (gamma / s) * q * q.dot(bt);

  // (I + gamma q q^T)^-1/2 = I + t q q^T with (1 + t qq)^2 = 1 / s
  const double t = qq > 0.0 ? (1.0 / std::sqrt(s) - 1.0) / qq : 0.0;
  Eigen::VectorXd z = rng.normal_vector(w.size());
  Eigen::VectorXd noise_t = z + t * q * q.dot(z);
  return (mean_t + noise_t).cwiseQuotient(wsqrt);
}

Eigen::MatrixXd wishart(const Eigen::MatrixXd& scale, double df, Rng& rng) {
  const Eigen::Index p = scale.rows();
  if (!(df > p - 1)) throw std::invalid_argument("wishart: df must exceed dimension - 1");
  auto llt = robust_llt(scale, "Wishart scale");
  Eigen::MatrixXd Bart = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    Bart(i, i) = std::sqrt(rng.chi_squared(df - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) Bart(i, j) = rng.normal();
  }
  Eigen::MatrixXd LA = llt.matrixL() * Bart;
  return symmetrize(LA * LA.transpose());
}

Eigen::MatrixXd inverse_wishart(const Eigen::MatrixXd& scale, double df, Rng& rng) {
  const Eigen::MatrixXd W = wishart(spd_inverse(scale, "inverse-Wishart scale"), df, rng);
  return spd_inverse(W, "Wishart draw");
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, p);
}

}  // namespace jnirm
