#pragma once

#include <Eigen/Dense>

namespace jnirm {

bool is_spd(const Eigen::MatrixXd& A, double sym_tol = 1e-8);

/// Cholesky factor of a symmetric matrix. On failure retries with diagonal
/// jitter 1e-10, 1e-9, ..., 1e-6 (relative to the mean diagonal) and throws
/// NumericalError naming `what` if none succeeds.
Eigen::LLT<Eigen::MatrixXd> robust_llt(const Eigen::MatrixXd& A, const char* what = "matrix");

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& A, const char* what = "matrix");

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& A) { return 0.5 * (A + A.transpose()); }

/// log|A| for an SPD matrix.
double spd_log_det(const Eigen::MatrixXd& A, const char* what = "matrix");

}  // namespace jnirm
