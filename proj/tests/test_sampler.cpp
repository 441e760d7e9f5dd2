#include "jnirm/linalg.hpp"
#include "jnirm/model.hpp"
#include "jnirm/sampler.hpp"
#include "jnirm/simulate.hpp"

#include "oracles.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <doctest.h>

#include <numeric>

using namespace jnirm;

namespace {

std::vector<int> all_but(int n, const std::vector<int>& drop) {
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    if (std::find(drop.begin(), drop.end(), i) == drop.end()) out.push_back(i);
  return out;
}

LatentState random_state(int N, int K, int D, int M, Rng& rng) {
  LatentState s;
  s.U = rng.normal_matrix(N, K);
  s.V = rng.normal_matrix(N, K);
  s.Theta = rng.normal_matrix(N, D);
  s.Sigma_utheta = oracle::random_spd(2 * K + D, rng);
  s.A = rng.normal_matrix(M, D);
  s.Beta = rng.normal_vector(M);
  s.sigma2_eps = 0.7;
  return s;
}

}  // namespace

// -------------------------------------------------------------------------
// Decorrelation
// -------------------------------------------------------------------------

TEST_CASE("decorrelation coefficients") {
  const auto z = decorrelation_coeffs(0.0, 2.0);
  CHECK(z.c == doctest::Approx(0.5));
  CHECK(z.d == doctest::Approx(0.0));
  const auto k = decorrelation_coeffs(0.5, 1.0);
  CHECK(k.c == doctest::Approx(0.5 * (1 / std::sqrt(1.5) + 1 / std::sqrt(0.5))));
  CHECK(k.d == doctest::Approx(0.5 * (1 / std::sqrt(1.5) - 1 / std::sqrt(0.5))));
  CHECK_THROWS_AS(decorrelate(MatrixXd::Zero(2, 2), 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("decorrelate: identity at rho zero, scaling of symmetric input") {
  Rng rng(1);
  const MatrixXd R = rng.normal_matrix(6, 6);
  CHECK(decorrelate(R, 0.0, 1.0).isApprox(R));
  const MatrixXd S = R + R.transpose();
  const auto k = decorrelation_coeffs(-0.3, 1.7);
  CHECK(decorrelate(S, -0.3, 1.7).isApprox((k.c + k.d) * S));
}

TEST_CASE("decorrelate whitens correlated dyads") {
  Rng rng(2);
  const int n = 448;  // ~1e5 dyads
  const double rho = 0.5;
  const MatrixXd E = draw_dyadic_errors(n, rho, 1.0, rng);
  const MatrixXd W = decorrelate(E, rho, 1.0);
  double s11 = 0, s22 = 0, s12 = 0, m1 = 0, m2 = 0;
  long count = 0;
  for (int b = 0; b < n; ++b)
    for (int a = 0; a < b; ++a) {
      m1 += W(a, b);
      m2 += W(b, a);
      s11 += W(a, b) * W(a, b);
      s22 += W(b, a) * W(b, a);
      s12 += W(a, b) * W(b, a);
      ++count;
    }
  m1 /= count;
  m2 /= count;
  const double v1 = s11 / count - m1 * m1, v2 = s22 / count - m2 * m2;
  CHECK(v1 == doctest::Approx(1.0).epsilon(0.02));
  CHECK(v2 == doctest::Approx(1.0).epsilon(0.02));
  CHECK(std::abs((s12 / count - m1 * m2) / std::sqrt(v1 * v2)) < 0.02);
}

TEST_CASE("dyad quadratic form against dense 2x2 inverses") {
  Rng rng(3);
  const int n = 9;
  for (double rho : {0.0, 0.9, -0.6}) {
    const MatrixXd E = draw_dyadic_errors(n, rho, 1.0, rng) + 0.3 * rng.normal_matrix(n, n);
    double want = 0.0;
    for (int b = 0; b < n; ++b)
      for (int a = 0; a < b; ++a) {
        Eigen::Matrix2d C;
        C << 1, rho, rho, 1;
        const Eigen::Vector2d e(E(a, b), E(b, a));
        want += e.dot(C.inverse() * e);
      }
    CHECK(dyadic_quadratic_form(E, rho, false) == doctest::Approx(want).epsilon(1e-12));
    double diag = 0.0;
    for (int a = 0; a < n; ++a) diag += E(a, a) * E(a, a) / (1 + rho);
    CHECK(dyadic_quadratic_form(E, rho, true) == doctest::Approx(want + diag).epsilon(1e-12));

    // the whitened residual carries the same quadratic form
    const MatrixXd W = decorrelate(E, rho, 1.0);
    CHECK(std::abs(W.squaredNorm() - dyadic_quadratic_form(E, rho, true)) < 1e-10 * (1 + want));
    MatrixXd Woff = W;
    Woff.diagonal().setZero();
    CHECK(std::abs(Woff.squaredNorm() - want) < 1e-10 * (1 + want));
  }
}

// -------------------------------------------------------------------------
// Conditional prior blocks
// -------------------------------------------------------------------------

TEST_CASE("conditional block at identity covariance") {
  const ConditionalBlock b = conditional_block(MatrixXd::Identity(7, 7), 1, 2, 3);
  CHECK(b.q_target == doctest::Approx(1.0));
  CHECK(b.q_cross.isZero());
  CHECK(b.q_partners.isApprox(MatrixXd::Identity(3, 3)));
  CHECK(b.shift_at(VectorXd::Ones(3)).isZero());
}

TEST_CASE("conditional block closed form for one network and one item dimension") {
  MatrixXd S(3, 3);
  S << 1, 0, .6, 0, 1, 0, .6, 0, 1;
  const ConditionalBlock b = conditional_block(S, 0, 1, 1);
  CHECK(b.q_target == doctest::Approx(1.0 / (1.0 - 0.36)));
  CHECK(b.q_target == doctest::Approx(1.5625));
}

TEST_CASE("conditional block matches the dense-inverse oracle") {
  Rng rng(4);
  for (int rep = 0; rep < 100; ++rep) {
    const int K = rep % 2 ? 1 : 2, D = 3;
    const LatentLayout layout{K, D};
    const MatrixXd S = oracle::random_spd(layout.dim(), rng);
    const VectorXd x = rng.normal_vector(layout.dim());
    for (int target = 0; target < layout.dim(); ++target) {
      const ConditionalBlock b = conditional_block(S, target, layout);
      std::vector<int> block{target};
      block.insert(block.end(), b.partners.begin(), b.partners.end());
      const auto want = oracle::dense_conditional(S, block, b.context);
      const double scale = want.precision.cwiseAbs().maxCoeff();
      REQUIRE((b.precision() - want.precision).cwiseAbs().maxCoeff() < 1e-10 * scale);

      VectorXd xc(b.context.size());
      for (std::size_t i = 0; i < b.context.size(); ++i) xc(static_cast<Eigen::Index>(i)) = x(b.context[i]);
      const VectorXd s_want = want.precision * (want.regression * xc);
      REQUIRE((b.shift_at(xc) - s_want).cwiseAbs().maxCoeff() < 1e-10 * (1 + s_want.cwiseAbs().maxCoeff()) * scale);

      // linear term of the target in its full conditional: precision times
      // the conditional mean given every other coordinate
      const auto full = oracle::dense_conditional(S, {target}, all_but(layout.dim(), {target}));
      VectorXd rest(layout.dim() - 1);
      const auto others = all_but(layout.dim(), {target});
      for (std::size_t i = 0; i < others.size(); ++i) rest(static_cast<Eigen::Index>(i)) = x(others[i]);
      const double lin_want = full.precision(0, 0) * (full.regression * rest)(0);
      REQUIRE(b.linear_term(x) == doctest::Approx(lin_want).epsilon(1e-9));
      REQUIRE(b.q_target == doctest::Approx(full.precision(0, 0)).epsilon(1e-10));
    }
  }
}

TEST_CASE("conditional block rejects a non-SPD covariance") {
  MatrixXd S = MatrixXd::Identity(3, 3);
  S(0, 2) = S(2, 0) = 1.5;
  CHECK_THROWS(conditional_block(S, 0, 1, 1));
}

// -------------------------------------------------------------------------
// Latent column conditionals
// -------------------------------------------------------------------------

TEST_CASE("latent column conditional matches the dense Kronecker construction") {
  Rng rng(5);
  const int N = 6, K = 2, D = 1, M = 3;
  const LatentLayout layout{K, D};
  for (double rho : {0.0, 0.45, -0.7})
    for (bool diag : {true, false})
      for (Side side : {Side::sender, Side::receiver})
        for (int dim = 0; dim < K; ++dim) {
          LatentState s = random_state(N, K, D, M, rng);
          const double sigma2_e = 1.3;
          const MatrixXd R = rng.normal_matrix(N, N);
          const DyadicContext dc{rho, sigma2_e, diag};
          const LatentConditional lc = latent_dimension_conditional(s, R, dim, side, layout, dc);

          const auto k = decorrelation_coeffs(rho, std::sqrt(sigma2_e));
          const bool sender = side == Side::sender;
          const VectorXd partner = sender ? s.V.col(dim) : s.U.col(dim);
          MatrixXd Mx = oracle::dense_design(partner, k.c, k.d, sender);
          VectorXd r = oracle::vec(k.c * R + k.d * R.transpose());
          if (!diag)
            for (int a = 0; a < N; ++a) {
              Mx.row(a + N * a).setZero();
              r(a + N * a) = 0.0;
            }
          const int slot = sender ? layout.sender(dim) : layout.receiver(dim);
          const auto others = all_but(layout.dim(), {slot});
          const auto prior = oracle::dense_conditional(s.Sigma_utheta, {slot}, others);
          const MatrixXd F = stack_latents(s.U, s.V, s.Theta);

          MatrixXd P = Mx.transpose() * Mx;
          P.diagonal().array() += prior.precision(0, 0);
          VectorXd b = Mx.transpose() * r;
          for (int p = 0; p < N; ++p) {
            VectorXd rest(others.size());
            for (std::size_t i = 0; i < others.size(); ++i) rest(static_cast<Eigen::Index>(i)) = F(p, others[i]);
            b(p) += prior.precision(0, 0) * (prior.regression * rest)(0);
          }
          REQUIRE((lc.precision() - P).cwiseAbs().maxCoeff() < 1e-10 * P.cwiseAbs().maxCoeff());
          REQUIRE((lc.b - b).cwiseAbs().maxCoeff() < 1e-10 * (1 + b.cwiseAbs().maxCoeff()));
        }
}

TEST_CASE("latent column with a zero partner column draws from the conditional prior") {
  Rng rng(6);
  const LatentLayout layout{1, 1};
  LatentState s = random_state(5, 1, 1, 2, rng);
  s.V.setZero();
  const LatentConditional lc =
      latent_dimension_conditional(s, rng.normal_matrix(5, 5), 0, Side::sender, layout, {0.3, 1.0, true});
  const ConditionalBlock blk = conditional_block(s.Sigma_utheta, 0, layout);
  CHECK((lc.w.array() - blk.q_target).abs().maxCoeff() < 1e-12);
  const MatrixXd F = stack_latents(s.U, s.V, s.Theta);
  for (int p = 0; p < 5; ++p) CHECK(lc.b(p) == doctest::Approx(blk.linear_term(F.row(p).transpose())));
}

TEST_CASE("item factor conditional: conjugate normal example") {
  LatentState s;
  s.U = s.V = MatrixXd::Zero(1, 1);
  s.Theta = MatrixXd::Zero(1, 1);
  s.Sigma_utheta = MatrixXd::Identity(3, 3);
  s.A = MatrixXd::Ones(1, 1);
  s.Beta = VectorXd::Zero(1);
  s.sigma2_eps = 1.0;
  const ThetaConditional tc = theta_dimension_conditional(s, MatrixXd::Constant(1, 1, 2.0), 0, LatentLayout{1, 1});
  CHECK(tc.mean(0) == doctest::Approx(1.0));
  CHECK(1.0 / tc.precision == doctest::Approx(0.5));
}

TEST_CASE("item factor conditional with no network coupling matches the closed form") {
  Rng rng(7);
  const int N = 3, K = 1, D = 2, M = 4;
  const LatentLayout layout{K, D};
  LatentState s = random_state(N, K, D, M, rng);
  s.Sigma_utheta.topRightCorner(2, 2).setZero();
  s.Sigma_utheta.bottomLeftCorner(2, 2).setZero();
  const MatrixXd R = rng.normal_matrix(N, M);
  for (int d = 0; d < D; ++d) {
    const ThetaConditional tc = theta_dimension_conditional(s, R, d, layout);
    const MatrixXd L = s.Sigma_utheta.bottomRightCorner(2, 2);
    const auto prior = oracle::dense_conditional(L, {d}, {1 - d});
    for (int p = 0; p < N; ++p) {
      const double prior_mean = prior.regression(0, 0) * s.Theta(p, 1 - d);
      const double prec = s.A.col(d).squaredNorm() / s.sigma2_eps + prior.precision(0, 0);
      const double mean = (s.A.col(d).dot(R.row(p).transpose()) / s.sigma2_eps + prior.precision(0, 0) * prior_mean) / prec;
      CHECK(tc.precision == doctest::Approx(prec).epsilon(1e-10));
      CHECK(tc.mean(p) == doctest::Approx(mean).epsilon(1e-8));
    }
  }
  s.A.setZero();
  const ThetaConditional flat = theta_dimension_conditional(s, R, 0, layout);
  const ConditionalBlock blk = conditional_block(s.Sigma_utheta, layout.theta(0), layout);
  CHECK(flat.precision == doctest::Approx(blk.q_target));
}

// -------------------------------------------------------------------------
// Covariance and scale updates
// -------------------------------------------------------------------------

TEST_CASE("joint covariance update: prior mean with no persons") {
  Rng rng(8);
  ModelConfig c;
  c.K = 1;
  c.D = 1;
  const MatrixXd Z(0, 1);
  MatrixXd mean = MatrixXd::Zero(3, 3);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) mean += update_sigma_utheta(Z, Z, Z, c, rng);
  mean /= draws;
  // IW(I, 2K+D+2) mean = I / (5 - 3 - 1)
  CHECK((mean - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("joint covariance update concentrates with many zero rows") {
  Rng rng(9);
  ModelConfig c;
  c.K = 1;
  c.D = 1;
  const MatrixXd Z = MatrixXd::Zero(1000, 1);
  MatrixXd mean = MatrixXd::Zero(3, 3);
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    const MatrixXd S = update_sigma_utheta(Z, Z, Z, c, rng);
    REQUIRE(S.isApprox(S.transpose()));
    REQUIRE(is_spd(S));
    mean += S;
  }
  mean /= draws;
  const double want = 1.0 / (1000 + 5 - 3 - 1);
  for (int i = 0; i < 3; ++i) CHECK(mean(i, i) == doctest::Approx(want).epsilon(0.02));
}

TEST_CASE("zero cross covariance option keeps the blocks apart") {
  Rng rng(10);
  ModelConfig c;
  c.fix_cross_cov_zero = true;
  const MatrixXd S = update_sigma_utheta(rng.normal_matrix(20, 2), rng.normal_matrix(20, 2), rng.normal_matrix(20, 3), c, rng);
  CHECK((covariance_blocks(S, 2, 3).cross.array() == 0.0).all());
}

TEST_CASE("sigma_e posterior shape and rate") {
  const int N = 7;
  const GammaPosterior g = sigma_e_posterior(MatrixXd::Zero(N, N), 0.2, true);
  CHECK(g.shape == doctest::Approx((N * N + 1) / 2.0));
  CHECK(g.rate == doctest::Approx(0.5));
  const GammaPosterior h = sigma_e_posterior(MatrixXd::Zero(N, N), 0.2, false);
  CHECK(h.shape == doctest::Approx((N * (N - 1) + 1) / 2.0));
}

TEST_CASE("sigma_e recovers the residual variance") {
  Rng rng(11);
  const int N = 50;
  MatrixXd E = 2.0 * rng.normal_matrix(N, N);
  double sum = 0.0;
  const int draws = 2000;
  for (int i = 0; i < draws; ++i) sum += update_sigma_e(E, 0.0, true, rng);
  CHECK(sum / draws == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("sigma_eps posterior and recovery") {
  const GammaPosterior z = sigma_eps_posterior(MatrixXd::Zero(4, 5));
  CHECK(z.shape == doctest::Approx(10.5));
  CHECK(z.rate == doctest::Approx(0.5));
  const GammaPosterior one = sigma_eps_posterior(MatrixXd::Ones(1, 1));
  CHECK(one.shape == doctest::Approx(1.0));
  CHECK(one.rate == doctest::Approx(1.0));

  Rng rng(12);
  const MatrixXd R = 0.5 * rng.normal_matrix(400, 10);
  double sum = 0.0;
  const int draws = 2000;
  for (int i = 0; i < draws; ++i) sum += update_sigma_eps(R, rng);
  CHECK(sum / draws == doctest::Approx(0.25).epsilon(0.05));
}

// -------------------------------------------------------------------------
// rho and delta
// -------------------------------------------------------------------------

TEST_CASE("rho proposals outside the unit interval are rejected") {
  Rng rng(13);
  const MatrixXd E = rng.normal_matrix(10, 10);
  double rho = 0.999;
  int accepted = 0;
  for (int i = 0; i < 2000; ++i) {
    const RhoUpdate r = update_rho(E, 1.0, rho, 10.0, true, rng);
    REQUIRE(std::abs(r.rho) < 1.0);
    if (r.accepted) ++accepted;
    rho = r.rho;
  }
  CHECK(accepted < 2000 * 0.2);
}

TEST_CASE("rho recovery from correlated residuals") {
  Rng rng(14);
  const MatrixXd E = draw_dyadic_errors(100, 0.6, 1.0, rng);
  double rho = 0.0, sum = 0.0;
  const int burn = 500, keep = 3000;
  for (int i = 0; i < burn + keep; ++i) {
    rho = update_rho(E, 1.0, rho, 0.05, false, rng).rho;
    if (i >= burn) sum += rho;
  }
  const double mean = sum / keep;
  CHECK(mean > 0.5);
  CHECK(mean < 0.7);
}

TEST_CASE("symmetric residuals push rho toward one without reaching it") {
  Rng rng(15);
  MatrixXd E = rng.normal_matrix(20, 20);
  E = (E + E.transpose()).eval();
  double rho = 0.0;
  for (int i = 0; i < 3000; ++i) {
    rho = update_rho(E, 1.0, rho, 0.05, false, rng).rho;
    REQUIRE(rho < 1.0);
  }
  CHECK(rho > 0.95);
}

TEST_CASE("delta update: constant residual and dominant prior") {
  Rng rng(16);
  const int N = 60;
  const MatrixXd U = MatrixXd::Zero(N, 1);
  const MatrixXd Z = MatrixXd::Constant(N, N, 3.0);
  double sum = 0.0;
  for (int i = 0; i < 1000; ++i) sum += update_delta(Z, U, U, {0.0, 1.0, false}, 1e-4, rng);
  CHECK(sum / 1000 == doctest::Approx(3.0).epsilon(0.01));
  double strong = 0.0;
  for (int i = 0; i < 1000; ++i) strong += update_delta(Z, U, U, {0.0, 1.0, false}, 1e12, rng);
  CHECK(std::abs(strong / 1000) < 1e-4);
}

TEST_CASE("delta posterior mean on a simulated intercept-only network") {
  Rng rng(17);
  const int N = 100;
  const MatrixXd U = MatrixXd::Zero(N, 1);
  MatrixXd Z = MatrixXd::Constant(N, N, -2.0) + draw_dyadic_errors(N, 0.3, 1.0, rng);
  double sum = 0.0;
  for (int i = 0; i < 500; ++i) sum += update_delta(Z, U, U, {0.3, 1.0, false}, 0.01, rng);
  CHECK(sum / 500 == doctest::Approx(-2.0).epsilon(0.05));
}

// -------------------------------------------------------------------------
// Item parameters
// -------------------------------------------------------------------------

TEST_CASE("item parameters: two-person conjugate example") {
  Rng rng(18);
  MatrixXd Theta(2, 1), Y(2, 1);
  Theta << 1, -1;
  Y << 2, 0;
  VectorXd mu(2);
  mu << 1, 0;
  const MatrixXd cov = MatrixXd::Identity(2, 2);
  const int draws = 200000;
  VectorXd mean = VectorXd::Zero(2);
  MatrixXd second = MatrixXd::Zero(2, 2);
  for (int i = 0; i < draws; ++i) {
    const ItemParams p = update_item_params(Y, Theta, 1.0, mu, cov, rng);
    const Eigen::Vector2d xi(p.A(0, 0), p.Beta(0));
    mean += xi;
    second += xi * xi.transpose();
  }
  mean /= draws;
  const MatrixXd covd = second / draws - mean * mean.transpose();
  // (alpha, beta) posterior: Sigma* = I / 3, mu* = (1, 2/3)
  CHECK(mean(0) == doctest::Approx(1.0).epsilon(0.01));
  CHECK(mean(1) == doctest::Approx(2.0 / 3.0).epsilon(0.01));
  CHECK((covd - MatrixXd::Identity(2, 2) / 3.0).cwiseAbs().maxCoeff() < 0.005);
}

TEST_CASE("item parameters: zero factors and vanishing precision") {
  Rng rng(19);
  const MatrixXd Y = rng.normal_matrix(50, 1).array() + 2.0;
  VectorXd mu(2);
  mu << 1, 0;
  const int draws = 20000;
  double a = 0, b = 0;
  for (int i = 0; i < draws; ++i) {
    const ItemParams p = update_item_params(Y, MatrixXd::Zero(50, 1), 1.0, mu, MatrixXd::Identity(2, 2), rng);
    a += p.A(0, 0);
    b += p.Beta(0);
  }
  CHECK(a / draws == doctest::Approx(1.0).epsilon(0.02));
  CHECK(b / draws == doctest::Approx(Y.sum() / 51.0).epsilon(0.01));

  double a2 = 0, b2 = 0;
  for (int i = 0; i < draws; ++i) {
    const ItemParams p = update_item_params(Y, rng.normal_matrix(50, 1), 1e12, mu, MatrixXd::Identity(2, 2), rng);
    a2 += p.A(0, 0);
    b2 += p.Beta(0);
  }
  CHECK(a2 / draws == doctest::Approx(1.0).epsilon(0.03));
  CHECK(std::abs(b2 / draws) < 0.03);
}

// -------------------------------------------------------------------------
// Augmentation
// -------------------------------------------------------------------------

TEST_CASE("probit augmentation respects signs and leaves strong means alone") {
  Rng rng(20);
  MatrixXd X = MatrixXd::Ones(4, 4);
  X.diagonal().setZero();
  X(0, 1) = 0;
  const NetworkData net(X, DataKind::binary);
  const MatrixXd mu = MatrixXd::Constant(4, 4, 10.0);
  MatrixXd Z = X.array() - 0.5;
  double sum = 0.0;
  const int sweeps = 20000;
  for (int i = 0; i < sweeps; ++i) {
    augment_network(net, mu, {0.2, 1.0, true}, Z, rng);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        if (a != b) REQUIRE((X(a, b) == 1.0) == (Z(a, b) > 0.0));
    sum += Z(2, 3);
  }
  CHECK(sum / sweeps == doctest::Approx(10.0).epsilon(0.005));
}

TEST_CASE("dyad augmentation matches a rejection-sampling oracle") {
  Rng rng(21);
  const double rho = 0.8;
  MatrixXd X(2, 2);
  X << 0, 1, 1, 0;
  const NetworkData net(X, DataKind::binary);
  const MatrixXd mu = MatrixXd::Zero(2, 2);
  MatrixXd Z = MatrixXd::Constant(2, 2, 0.5);
  std::vector<double> x1, x2;
  for (int i = 0; i < 200000; ++i) {
    augment_network(net, mu, {rho, 1.0, false}, Z, rng);
    x1.push_back(Z(0, 1));
    x2.push_back(Z(1, 0));
  }
  std::vector<double> r1, r2;
  Rng rj(22);
  while (r1.size() < 200000) {
    const double a = rj.normal(), b = rho * a + std::sqrt(1 - rho * rho) * rj.normal();
    if (a > 0 && b > 0) {
      r1.push_back(a);
      r2.push_back(b);
    }
  }
  const auto corr = [](const std::vector<double>& a, const std::vector<double>& b) {
    const VectorXd x = Eigen::Map<const VectorXd>(a.data(), a.size());
    const VectorXd y = Eigen::Map<const VectorXd>(b.data(), b.size());
    const VectorXd xc = x.array() - x.mean(), yc = y.array() - y.mean();
    return xc.dot(yc) / std::sqrt(xc.squaredNorm() * yc.squaredNorm());
  };
  CHECK(std::abs(corr(x1, x2) - corr(r1, r2)) < 0.03);
  CHECK(std::abs(oracle::iid_mean(x1).mean - oracle::iid_mean(r1).mean) < 0.03);
}

TEST_CASE("missing cells are drawn untruncated, continuous cells kept") {
  Rng rng(23);
  MatrixXd X = MatrixXd::Zero(3, 3);
  BoolMatrix mask = BoolMatrix::Constant(3, 3, true);
  mask.diagonal().setConstant(false);
  mask(0, 1) = false;
  const NetworkData net(X, DataKind::binary, mask);
  MatrixXd Z = MatrixXd::Constant(3, 3, -0.5);
  int positive = 0;
  for (int i = 0; i < 4000; ++i) {
    augment_network(net, MatrixXd::Zero(3, 3), {0.0, 1.0, false}, Z, rng);
    positive += Z(0, 1) > 0;
  }
  CHECK(positive / 4000.0 == doctest::Approx(0.5).epsilon(0.1));

  MatrixXd Y(2, 2);
  Y << 1.5, -2.0, 0.25, 4.0;
  BoolMatrix im = BoolMatrix::Constant(2, 2, true);
  im(1, 1) = false;
  const ItemResponses items(Y, DataKind::continuous, im);
  MatrixXd Eta = Y;
  augment_items(items, MatrixXd::Zero(2, 2), 1.0, Eta, rng);
  CHECK(Eta(0, 0) == 1.5);
  CHECK(Eta(0, 1) == -2.0);
  CHECK(Eta(1, 0) == 0.25);
  CHECK(Eta(1, 1) != 4.0);
}

// -------------------------------------------------------------------------
// Chains
// -------------------------------------------------------------------------

namespace {

SimulatedData small_joint(int N, std::uint64_t seed) {
  GenerativeParams g = school56_like_params(N);
  Rng rng(seed);
  return simulate_joint(g, rng);
}

ModelConfig short_config(int iters, int burn, int thin) {
  ModelConfig c;
  c.iterations = iters;
  c.burn_in = burn;
  c.thin = thin;
  c.seed = 77;
  return c;
}

}  // namespace

TEST_CASE("an empty post-burn-in sample is an error") {
  const SimulatedData d = small_joint(10, 1);
  ModelConfig c = short_config(100, 100, 1);
  CHECK_THROWS_AS(run_chain(&d.network, &d.items, c), std::invalid_argument);
}

TEST_CASE("chains are reproducible and traces have the documented length") {
  const SimulatedData d = small_joint(15, 2);
  const ModelConfig c = short_config(300, 100, 4);
  const ChainOutput a = run_chain(&d.network, &d.items, c, 3);
  const ChainOutput b = run_chain(&d.network, &d.items, c, 3);
  CHECK(a.scalar_traces.size() == 50);
  CHECK(a.n_draws == 50);
  CHECK(a.mean_UVt == b.mean_UVt);
  CHECK(a.mean_ThetaAt == b.mean_ThetaAt);
  CHECK(a.scalar_traces.delta == b.scalar_traces.delta);
  CHECK(a.scalar_traces.rho == b.scalar_traces.rho);
  CHECK(a.accept_rate_rho >= 0.0);
  CHECK(a.accept_rate_rho <= 1.0);
  const ChainOutput other = run_chain(&d.network, &d.items, c, 4);
  CHECK(a.scalar_traces.delta != other.scalar_traces.delta);
}

TEST_CASE("parallel chains do not depend on the thread count") {
  const SimulatedData d = small_joint(12, 3);
  const ModelConfig c = short_config(150, 50, 2);
  const auto one = run_chains(&d.network, &d.items, c, 3, 1);
  const auto three = run_chains(&d.network, &d.items, c, 3, 3);
  for (int i = 0; i < 3; ++i) CHECK(one[i].scalar_traces.delta == three[i].scalar_traces.delta);
}

TEST_CASE("merging chain outputs is associative") {
  const SimulatedData d = small_joint(12, 4);
  const ModelConfig c = short_config(150, 50, 2);
  const auto ch = run_chains(&d.network, &d.items, c, 3, 1);
  ChainOutput left = ch[0];
  left.merge(ch[1]);
  left.merge(ch[2]);
  ChainOutput tail = ch[1];
  tail.merge(ch[2]);
  ChainOutput right = ch[0];
  right.merge(tail);
  CHECK(left.n_draws == right.n_draws);
  CHECK((left.mean_UVt - right.mean_UVt).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(left.scalar_traces.delta == right.scalar_traces.delta);
}

TEST_CASE("binary latent network stays consistent with the data through a chain") {
  const SimulatedData d = small_joint(12, 5);
  GibbsSampler s(d.network, d.items, short_config(50, 10, 1), 0);
  for (int i = 0; i < 30; ++i) {
    s.sweep();
    const MatrixXd& Phi = s.state().Phi;
    for (int a = 0; a < 12; ++a)
      for (int b = 0; b < 12; ++b)
        if (a != b) REQUIRE((d.network.edges(a, b) == 1.0) == (Phi(a, b) > 0.0));
    REQUIRE(std::abs(s.state().rho) < 1.0);
    REQUIRE(is_spd(s.state().Sigma_utheta));
  }
}

TEST_CASE("modes skip the blocks they do not use") {
  const SimulatedData d = small_joint(12, 6);
  ModelConfig c = short_config(60, 20, 2);
  c.mode = Mode::network_only;
  const ChainOutput net = run_chain(&d.network, nullptr, c);
  CHECK(net.mean_ThetaAt.size() == 0);
  CHECK(net.mean_Sigma.rows() == 4);
  c.mode = Mode::item_only;
  const ChainOutput items = run_chain(nullptr, &d.items, c);
  CHECK(items.mean_UVt.size() == 0);
  CHECK(items.mean_Sigma.rows() == 3);
  c.mode = Mode::joint;
  CHECK_THROWS_AS(run_chain(&d.network, nullptr, c), DataError);
}

TEST_CASE("network-only and zero-cross-covariance joint fits agree on the intercept when items are noise") {
  GenerativeParams g;
  g.N = 15;
  g.K = 1;
  g.D = 0;
  g.delta = -0.5;
  g.Sigma_utheta = MatrixXd::Identity(2, 2);
  Rng rng(31);
  const SimulatedData d = simulate_joint(g, rng);
  const ItemResponses noise(rng.normal_matrix(15, 4), DataKind::continuous);

  ModelConfig c;
  c.K = 1;
  c.D = 1;
  c.iterations = 42000;
  c.burn_in = 2000;
  c.thin = 40;
  c.seed = 5;
  c.fix_cross_cov_zero = true;
  c.mode = Mode::joint;
  const ChainOutput joint = run_chain(&d.network, &noise, c, 1);
  c.mode = Mode::network_only;
  const ChainOutput alone = run_chain(&d.network, nullptr, c, 2);
  const double p = oracle::ks_two_sample(joint.scalar_traces.delta, alone.scalar_traces.delta);
  MESSAGE("KS p-value " << p);
  CHECK(p > 0.01);
}

TEST_CASE("reconstruction error is stationary after burn-in") {
  const SimulatedData d = small_joint(10, 7);
  ModelConfig c = short_config(1, 0, 1);
  GibbsSampler s(d.network, d.items, c, 0);
  for (int i = 0; i < 2000; ++i) s.sweep(true);
  const int seg = 5, per = 4000;
  std::vector<double> means;
  for (int k = 0; k < seg; ++k) {
    double sum = 0.0;
    for (int i = 0; i < per; ++i) {
      s.sweep();
      const MatrixXd EX = expected_network(s.state().delta, s.state().U, s.state().V);
      sum += (EX - d.expected_network).squaredNorm() / 100.0;
    }
    means.push_back(sum / per);
  }
  // least-squares slope over segment index and its t statistic
  const double xbar = 2.0;
  double sxy = 0, sxx = 0, ybar = 0;
  for (int k = 0; k < seg; ++k) ybar += means[k] / seg;
  for (int k = 0; k < seg; ++k) {
    sxy += (k - xbar) * (means[k] - ybar);
    sxx += (k - xbar) * (k - xbar);
  }
  const double slope = sxy / sxx;
  double sse = 0;
  for (int k = 0; k < seg; ++k) {
    const double r = means[k] - ybar - slope * (k - xbar);
    sse += r * r;
  }
  const double se = std::sqrt(sse / (seg - 2) / sxx);
  const double t = se > 0 ? slope / se : 0.0;
  const boost::math::students_t dist(seg - 2);
  const double p = 2 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  MESSAGE("segment means " << means[0] << " " << means[1] << " " << means[2] << " " << means[3] << " " << means[4]
                            << ", slope t = " << t << ", p = " << p);
  CHECK(p > 0.01);
}
