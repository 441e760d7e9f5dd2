#include "jnirm/linalg.hpp"

#include "jnirm/types.hpp"

#include <cmath>
#include <string>

namespace jnirm {

bool is_spd(const Eigen::MatrixXd& A, double sym_tol) {
  if (A.rows() != A.cols() || A.rows() == 0) return false;
  if (!A.allFinite()) return false;
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > sym_tol * scale) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(symmetrize(A));
  return llt.info() == Eigen::Success;
}

Eigen::LLT<Eigen::MatrixXd> robust_llt(const Eigen::MatrixXd& A, const char* what) {
  Eigen::MatrixXd S = symmetrize(A);
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() == Eigen::Success && S.allFinite()) return llt;
  const double scale = std::max(1e-300, S.diagonal().cwiseAbs().mean());
  for (double jitter = 1e-10; jitter <= 1.0001e-6; jitter *= 10.0) {
    Eigen::MatrixXd J = S;
    J.diagonal().array() += jitter * scale;
    llt.compute(J);
    if (llt.info() == Eigen::Success) return llt;
  }
  throw NumericalError(std::string("Cholesky factorization failed for ") + what +
                       " (not positive definite after jitter 1e-6)");
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& A, const char* what) {
  auto llt = robust_llt(A, what);
  return symmetrize(llt.solve(Eigen::MatrixXd::Identity(A.rows(), A.cols())));
}

double spd_log_det(const Eigen::MatrixXd& A, const char* what) {
  auto llt = robust_llt(A, what);
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace jnirm
