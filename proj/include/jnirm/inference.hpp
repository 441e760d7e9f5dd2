#pragma once

#include "jnirm/types.hpp"

namespace jnirm {

enum class PValueMethod { bartlett, rao_f };

struct IndependenceResult {
  double lambda = 1.0;     // Wilks' Lambda
  double statistic = 0.0;  // chi-square (Bartlett) or F (Rao)
  double df1 = 0.0;
  double df2 = 0.0;        // Rao F only
  double pvalue = 1.0;
};

/// Likelihood-ratio test that the cross covariance of two blocks of
/// variables is zero. Lambda = |S| / (|S_xx| |S_yy|) with divisor-N
/// covariances; Bartlett's chi-square approximation by default.
IndependenceResult independence_test(const MatrixXd& X, const MatrixXd& Y,
                                     PValueMethod method = PValueMethod::bartlett);

struct DependenceReport {
  double wilks_lambda = 1.0;
  double wilks_pvalue = 1.0;
  VectorXd canonical_correlations;  // nonincreasing
  MatrixXd raw_coefficients_network;  // p x I, unit-variance canonical variates
  MatrixXd raw_coefficients_items;    // q x I
  MatrixXd std_coefficients_network;  // raw scaled by variable sd
  MatrixXd std_coefficients_items;
  VectorXd sequential_statistics;
  VectorXd sequential_pvalues;  // entry k: correlations beyond the first k are zero
  int n = 0;
};

/// Canonical correlation analysis of two blocks (rows = persons).
DependenceReport cca(const MatrixXd& X, const MatrixXd& Y, PValueMethod method = PValueMethod::bartlett);

struct SequentialTests {
  VectorXd statistics;
  VectorXd df;
  VectorXd pvalues;
};

/// Tests on Lambda_k = prod_{i > k} (1 - R_i^2), k = 0 .. I-1.
SequentialTests sequential_tests(const VectorXd& correlations, int N, int p, int q,
                                 PValueMethod method = PValueMethod::bartlett);

/// Upper tail of the chi-square distribution.
double chi_square_upper(double statistic, double df);

}  // namespace jnirm
