#include "jnirm/inference.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>

namespace jnirm {

double chi_square_upper(double statistic, double df) {
  if (!(df > 0)) throw std::invalid_argument("chi-square df must be positive");
  if (std::isinf(statistic)) return 0.0;
  if (statistic <= 0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), statistic));
}

namespace {

void check_blocks(const MatrixXd& X, const MatrixXd& Y) {
  if (X.rows() != Y.rows()) throw std::invalid_argument("blocks have different row counts");
  const Eigen::Index p = X.cols(), q = Y.cols();
  if (p < 1 || q < 1) throw std::invalid_argument("blocks must have at least one column");
  if (X.rows() <= p + q + 1) throw std::invalid_argument("need N > p + q + 1");
}

MatrixXd centered(const MatrixXd& X) { return X.rowwise() - X.colwise().mean(); }

MatrixXd mle_cov(const MatrixXd& Xc, const MatrixXd& Yc) {
  return Xc.transpose() * Yc / static_cast<double>(Xc.rows());
}

/// S^-1/2 of an SPD matrix; throws on a singular within-set covariance.
MatrixXd inv_sqrt(const MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
  const VectorXd ev = es.eigenvalues();
  if (!(ev.minCoeff() > 1e-12 * std::max(1.0, ev.maxCoeff())))
    throw NumericalError("singular within-set covariance");
  return es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

/// Rao's F approximation; `m` = N - 3/2 - (p0 + q0)/2 for the full problem.
double rao_pvalue(double lambda, double m, double p, double q, double& F, double& df1, double& df2) {
  const double den = p * p + q * q - 5.0;
  const double s = den > 0 ? std::sqrt((p * p * q * q - 4.0) / den) : 1.0;
  df1 = p * q;
  df2 = m * s - 0.5 * p * q + 1.0;
  if (lambda <= 0) {
    F = std::numeric_limits<double>::infinity();
    return 0.0;
  }
  const double root = std::pow(lambda, 1.0 / s);
  F = (1.0 - root) / root * df2 / df1;
  if (F <= 0) return 1.0;
  if (!(df2 > 0)) throw std::invalid_argument("too few observations for the F approximation");
  return boost::math::cdf(boost::math::complement(boost::math::fisher_f(df1, df2), F));
}

}  // namespace

IndependenceResult independence_test(const MatrixXd& X, const MatrixXd& Y, PValueMethod method) {
  check_blocks(X, Y);
  const Eigen::Index p = X.cols(), q = Y.cols();
  const double N = static_cast<double>(X.rows());
  MatrixXd Z(X.rows(), p + q);
  Z << X, Y;
  const MatrixXd Zc = centered(Z);
  const MatrixXd S = mle_cov(Zc, Zc);

  const Eigen::LLT<MatrixXd> lx(S.topLeftCorner(p, p)), ly(S.bottomRightCorner(q, q));
  if (lx.info() != Eigen::Success || ly.info() != Eigen::Success)
    throw NumericalError("singular block covariance");
  const double dx = lx.matrixL().toDenseMatrix().diagonal().prod();
  const double dy = ly.matrixL().toDenseMatrix().diagonal().prod();
  const double det = S.fullPivLu().determinant();

  IndependenceResult r;
  r.lambda = std::clamp(det / (dx * dx * dy * dy), 0.0, 1.0);
  if (method == PValueMethod::bartlett) {
    r.df1 = static_cast<double>(p * q);
    const double scale = N - 1.0 - 0.5 * static_cast<double>(p + q + 1);
    r.statistic = r.lambda > 0 ? -scale * std::log(r.lambda) : std::numeric_limits<double>::infinity();
    r.pvalue = chi_square_upper(r.statistic, r.df1);
  } else {
    const double m = N - 1.5 - 0.5 * static_cast<double>(p + q);
    r.pvalue = rao_pvalue(r.lambda, m, static_cast<double>(p), static_cast<double>(q), r.statistic, r.df1, r.df2);
  }
  return r;
}

SequentialTests sequential_tests(const VectorXd& R, int N, int p, int q, PValueMethod method) {
  const Eigen::Index I = R.size();
  SequentialTests t{VectorXd(I), VectorXd(I), VectorXd(I)};
  const double scale = N - 1.0 - 0.5 * (p + q + 1);
  for (Eigen::Index k = 0; k < I; ++k) {
    double lambda = 1.0;
    for (Eigen::Index i = k; i < I; ++i) lambda *= 1.0 - R(i) * R(i);
    lambda = std::clamp(lambda, 0.0, 1.0);
    const double pk = static_cast<double>(p - k), qk = static_cast<double>(q - k);
    t.df(k) = pk * qk;
    if (method == PValueMethod::bartlett) {
      t.statistics(k) = lambda > 0 ? -scale * std::log(lambda) : std::numeric_limits<double>::infinity();
      if (t.statistics(k) < 0) t.statistics(k) = 0;
      t.pvalues(k) = chi_square_upper(t.statistics(k), t.df(k));
    } else {
      double F = 0, df1 = 0, df2 = 0;
      t.pvalues(k) = rao_pvalue(lambda, N - 1.5 - 0.5 * (p + q), pk, qk, F, df1, df2);
      t.statistics(k) = F;
    }
  }
  return t;
}

DependenceReport cca(const MatrixXd& X, const MatrixXd& Y, PValueMethod method) {
  check_blocks(X, Y);
  const Eigen::Index p = X.cols(), q = Y.cols(), I = std::min(p, q);
  const MatrixXd Xc = centered(X), Yc = centered(Y);
  const MatrixXd Sxx = mle_cov(Xc, Xc), Syy = mle_cov(Yc, Yc), Sxy = mle_cov(Xc, Yc);
  const MatrixXd Wx = inv_sqrt(Sxx), Wy = inv_sqrt(Syy);
  Eigen::JacobiSVD<MatrixXd> svd(Wx * Sxy * Wy, Eigen::ComputeFullU | Eigen::ComputeFullV);

  DependenceReport r;
  r.n = static_cast<int>(X.rows());
  r.canonical_correlations = svd.singularValues().head(I).cwiseMin(1.0);
  r.raw_coefficients_network = Wx * svd.matrixU().leftCols(I);
  r.raw_coefficients_items = Wy * svd.matrixV().leftCols(I);
  const VectorXd sdx = Sxx.diagonal().cwiseSqrt(), sdy = Syy.diagonal().cwiseSqrt();
  r.std_coefficients_network = sdx.asDiagonal() * r.raw_coefficients_network;
  r.std_coefficients_items = sdy.asDiagonal() * r.raw_coefficients_items;
  for (Eigen::Index k = 0; k < I; ++k) {
    Eigen::Index at = 0;
    r.std_coefficients_network.col(k).cwiseAbs().maxCoeff(&at);
    if (r.std_coefficients_network(at, k) < 0) {
      r.raw_coefficients_network.col(k) *= -1;
      r.std_coefficients_network.col(k) *= -1;
      r.raw_coefficients_items.col(k) *= -1;
      r.std_coefficients_items.col(k) *= -1;
    }
  }

  const SequentialTests t =
      sequential_tests(r.canonical_correlations, r.n, static_cast<int>(p), static_cast<int>(q), method);
  r.sequential_statistics = t.statistics;
  r.sequential_pvalues = t.pvalues;
  r.wilks_lambda = (1.0 - r.canonical_correlations.array().square()).prod();
  r.wilks_pvalue = t.pvalues(0);
  return r;
}

}  // namespace jnirm
