#include "jnirm/inference.hpp"
#include "jnirm/random.hpp"

#include "oracles.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <doctest.h>

using namespace jnirm;

namespace {

MatrixXd nonsingular(int n, Rng& rng) {
  MatrixXd B = rng.normal_matrix(n, n);
  B.diagonal().array() += 3.0;
  return B;
}

// Blocks sharing one latent direction with the given canonical correlation.
std::pair<MatrixXd, MatrixXd> planted(int N, int p, int q, double r, Rng& rng) {
  MatrixXd X = rng.normal_matrix(N, p), Y = rng.normal_matrix(N, q);
  Y.col(0) = r * X.col(0) + std::sqrt(1 - r * r) * Y.col(0);
  return {X, Y};
}

double bartlett_oracle(double lambda, int N, int p, int q) {
  const double stat = -(N - 1 - (p + q + 1) / 2.0) * std::log(lambda);
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(p * q), stat));
}

}  // namespace

TEST_CASE("independence test under perfect dependence") {
  Rng rng(1);
  const MatrixXd X = rng.normal_matrix(50, 4);
  const MatrixXd Y = X.leftCols(2) + 1e-7 * rng.normal_matrix(50, 2);
  const IndependenceResult r = independence_test(X, Y);
  CHECK(r.lambda < 1e-10);
  CHECK(r.pvalue < 1e-12);
}

TEST_CASE("independence test: Lambda from determinants, Bartlett p-value") {
  Rng rng(2);
  const MatrixXd X = rng.normal_matrix(40, 3), Y = rng.normal_matrix(40, 2);
  MatrixXd Z(40, 5);
  Z << X, Y;
  const MatrixXd Zc = Z.rowwise() - Z.colwise().mean();
  const MatrixXd S = Zc.transpose() * Zc / 40.0;
  const double lambda = S.determinant() / (S.topLeftCorner(3, 3).determinant() * S.bottomRightCorner(2, 2).determinant());
  const IndependenceResult r = independence_test(X, Y);
  CHECK(r.lambda == doctest::Approx(lambda).epsilon(1e-10));
  CHECK(r.df1 == 6.0);
  CHECK(r.pvalue == doctest::Approx(bartlett_oracle(lambda, 40, 3, 2)).epsilon(1e-10));
  const IndependenceResult f = independence_test(X, Y, PValueMethod::rao_f);
  CHECK(f.lambda == doctest::Approx(lambda));
  CHECK(f.pvalue > 0.0);
  CHECK(f.pvalue < 1.0);
}

TEST_CASE("independence test preconditions") {
  Rng rng(3);
  CHECK_THROWS_AS(independence_test(rng.normal_matrix(10, 2), rng.normal_matrix(9, 2)), std::invalid_argument);
  CHECK_THROWS_AS(independence_test(rng.normal_matrix(6, 3), rng.normal_matrix(6, 2)), std::invalid_argument);
  MatrixXd X = rng.normal_matrix(30, 3);
  X.col(2) = X.col(0);
  CHECK_THROWS_AS(independence_test(X, rng.normal_matrix(30, 2)), NumericalError);
}

TEST_CASE("test statistic is invariant to nonsingular per-block transforms") {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const auto [X, Y] = planted(80, 4, 3, 0.5, rng);
    const IndependenceResult a = independence_test(X, Y);
    const IndependenceResult b = independence_test(X * nonsingular(4, rng), Y * nonsingular(3, rng));
    REQUIRE(std::abs(a.lambda - b.lambda) < 1e-8);
    REQUIRE(std::abs(a.statistic - b.statistic) < 1e-8 * (1 + a.statistic));
  }
}

TEST_CASE("Wilks Lambda equals the product over canonical correlations") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto [X, Y] = planted(60, 4, 3, 0.7, rng);
    const DependenceReport d = cca(X, Y);
    double prod = 1.0;
    for (Eigen::Index i = 0; i < d.canonical_correlations.size(); ++i)
      prod *= 1.0 - d.canonical_correlations(i) * d.canonical_correlations(i);
    REQUIRE(std::abs(independence_test(X, Y).lambda - prod) < 1e-10);
    REQUIRE(std::abs(d.wilks_lambda - prod) < 1e-10);
  }
}

TEST_CASE("cca: one-dimensional blocks give the absolute Pearson correlation") {
  Rng rng(6);
  const MatrixXd x = rng.normal_matrix(30, 1);
  const MatrixXd y = -0.4 * x + rng.normal_matrix(30, 1);
  const VectorXd xc = x.col(0).array() - x.mean(), yc = y.col(0).array() - y.mean();
  const double r = xc.dot(yc) / (xc.norm() * yc.norm());
  const DependenceReport d = cca(x, y);
  REQUIRE(d.canonical_correlations.size() == 1);
  CHECK(d.canonical_correlations(0) == doctest::Approx(std::abs(r)).epsilon(1e-12));
}

TEST_CASE("cca matches the eigen oracle and is rotation invariant") {
  Rng rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    const auto [X, Y] = planted(100, 4, 3, 0.6, rng);
    const DependenceReport d = cca(X, Y);
    const VectorXd want = oracle::canonical_correlations(X, Y);
    REQUIRE((d.canonical_correlations - want).cwiseAbs().maxCoeff() < 1e-8);
    for (Eigen::Index i = 1; i < want.size(); ++i)
      REQUIRE(d.canonical_correlations(i) <= d.canonical_correlations(i - 1));

    const Eigen::HouseholderQR<MatrixXd> qr(rng.normal_matrix(4, 4));
    const MatrixXd Q = qr.householderQ();
    const DependenceReport rot = cca(X * Q, Y);
    REQUIRE((rot.canonical_correlations - d.canonical_correlations).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("canonical variates are uncorrelated within and across sets") {
  Rng rng(8);
  const auto [X, Y] = planted(200, 4, 3, 0.8, rng);
  const DependenceReport d = cca(X, Y);
  const MatrixXd Xc = X.rowwise() - X.colwise().mean();
  const MatrixXd Yc = Y.rowwise() - Y.colwise().mean();
  MatrixXd W(200, 6);
  W << Xc * d.raw_coefficients_network, Yc * d.raw_coefficients_items;
  MatrixXd C = W.transpose() * W;
  const VectorXd s = C.diagonal().cwiseSqrt().cwiseInverse();
  C = s.asDiagonal() * C * s.asDiagonal();
  const MatrixXd want_cross = MatrixXd(d.canonical_correlations.asDiagonal());
  CHECK((C.topLeftCorner(3, 3) - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((C.bottomRightCorner(3, 3) - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((C.topRightCorner(3, 3) - want_cross).cwiseAbs().maxCoeff() < 1e-8);

  // standardized coefficients are the raw weights times the variable sd
  for (int j = 0; j < 4; ++j) {
    const double sd = std::sqrt(Xc.col(j).squaredNorm() / 200.0);
    const double ratio = d.std_coefficients_network(j, 0) / d.raw_coefficients_network(j, 0);
    CHECK(ratio / sd == doctest::Approx(std::sqrt(200.0 / 199.0)).epsilon(0.01));
  }
}

TEST_CASE("sequential tests: zero correlations and a hand chain") {
  const SequentialTests z = sequential_tests(VectorXd::Zero(3), 50, 4, 3);
  for (Eigen::Index k = 0; k < 3; ++k) {
    CHECK(z.statistics(k) == doctest::Approx(0.0));
    CHECK(z.pvalues(k) == doctest::Approx(1.0));
  }

  VectorXd R(3);
  R << 0.95, 0.55, 0.40;
  const int N = 26, p = 8, q = 3;
  const SequentialTests s = sequential_tests(R, N, p, q);
  for (int k = 0; k < 3; ++k) {
    double lam = 1.0;
    for (int i = k; i < 3; ++i) lam *= 1 - R(i) * R(i);
    const double stat = -(N - 1 - (p + q + 1) / 2.0) * std::log(lam);
    const double df = (p - k) * (q - k);
    CHECK(s.statistics(k) == doctest::Approx(stat));
    CHECK(s.df(k) == doctest::Approx(df));
    CHECK(s.pvalues(k) == doctest::Approx(chi_square_upper(stat, df)));
  }
  MESSAGE("sequential p-values " << s.pvalues.transpose());
  CHECK(s.pvalues(0) < 0.05);
  CHECK(s.pvalues(1) > 0.05);
  CHECK(s.pvalues(2) > 0.05);
  CHECK(s.pvalues(0) < s.pvalues(1));
  CHECK(s.pvalues(1) < s.pvalues(2));
}

TEST_CASE("sequential tests pick out a single planted correlation") {
  Rng rng(9);
  int hits = 0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    const auto [X, Y] = planted(500, 4, 3, 0.5, rng);
    const DependenceReport d = cca(X, Y);
    if (d.sequential_pvalues(0) < 0.01 && d.sequential_pvalues(1) > 0.05) ++hits;
  }
  CHECK(hits >= 0.9 * reps);
}

TEST_CASE("null p-values are uniform") {
  Rng rng(10);
  std::vector<double> p;
  for (int rep = 0; rep < 500; ++rep) p.push_back(independence_test(rng.normal_matrix(10000, 4), rng.normal_matrix(10000, 3)).pvalue);
  const double ks = oracle::ks_uniform(p);
  MESSAGE("KS p " << ks);
  CHECK(ks > 0.01);
}

TEST_CASE("power at a small sample with a strong planted correlation") {
  Rng rng(11);
  int rejections = 0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    const auto [X, Y] = planted(26, 8, 3, 0.9, rng);
    if (independence_test(X, Y).pvalue < 0.05) ++rejections;
  }
  MESSAGE("rejections " << rejections << " / " << reps);
  CHECK(rejections > reps / 2);
}

TEST_CASE("chi-square upper tail") {
  CHECK(chi_square_upper(3.841458820694124, 1) == doctest::Approx(0.05));
  CHECK(chi_square_upper(0.0, 4) == doctest::Approx(1.0));
  CHECK_THROWS_AS(chi_square_upper(1.0, 0.0), std::invalid_argument);
}
