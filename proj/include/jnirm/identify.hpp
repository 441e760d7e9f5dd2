#pragma once

#include "jnirm/types.hpp"

#include <vector>

namespace jnirm {

struct FactorEstimate {
  MatrixXd left;   // N x r
  MatrixXd right;  // N x r or M x r
  VectorXd singular_values;
  bool subspace_ill_determined = false;  // sigma_r within 1e-10 of sigma_{r+1}
};

/// Rank-r factorization of a posterior-mean product with the singular values
/// split evenly (sqrt to each side). Each left column is signed so that its
/// largest-magnitude entry is positive. Throws NumericalError on a zero
/// r-th singular value.
FactorEstimate svd_identify(const MatrixXd& product, int rank);

struct RotationResult {
  MatrixXd rotated_loadings;  // original * rotation_matrix
  MatrixXd rotation_matrix;
  MatrixXd target;
  BoolMatrix target_mask;     // true = cell enters the criterion
  MatrixXd factor_correlation;  // T^T T (identity for orthogonal)
  double criterion = 0.0;
  std::vector<double> criterion_trace;
  int iterations = 0;
  bool converged = false;
};

struct RotationOptions {
  bool oblique = true;
  int max_iterations = 10000;
  double tolerance = 1e-12;  // on the projected gradient norm
};

/// Targeted least squares over the masked cells: minimises
/// sum_{mask} (L - target)^2 by gradient projection, oblique by default
/// (L = A T^-T with unit-length columns of T). On non-convergence the best
/// iterate is returned with `converged` false.
RotationResult target_rotate(const MatrixXd& loadings, const MatrixXd& target, const BoolMatrix& mask,
                             const RotationOptions& options = {});

/// Zero target on every cell outside an item's subscale. `subscale[i]` is
/// the 0-based column item i belongs to.
RotationResult target_rotate(const MatrixXd& loadings, const std::vector<int>& subscale,
                             const RotationOptions& options = {});

/// Masked least-squares criterion sum_{mask} (L - target)^2.
double rotation_criterion(const MatrixXd& L, const MatrixXd& target, const BoolMatrix& mask);

/// Tucker congruence: cosines between columns of A and columns of B.
MatrixXd congruence(const MatrixXd& A, const MatrixXd& B);

/// sigma_k^2 / sum_j sigma_j^2 for k < max_rank, the sum running over all
/// singular values.
VectorXd variance_explained(const MatrixXd& product, int max_rank);

}  // namespace jnirm
