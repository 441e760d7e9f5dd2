#pragma once

#include "jnirm/random.hpp"
#include "jnirm/types.hpp"

#include <string>
#include <vector>

namespace jnirm {

struct GenerativeParams {
  int N = 100;
  int K = 2;
  int D = 0;  // 0 => network only
  double delta = 0.0;
  double rho = 0.0;
  double sigma2_e = 1.0;
  double sigma2_eps = 1.0;
  MatrixXd Sigma_utheta;  // (2K + D) square
  VectorXd Beta;          // M, empty => no items
  MatrixXd A;             // M x D
  DataKind network_kind = DataKind::binary;
  DataKind item_kind = DataKind::continuous;
  std::vector<int> subscale;  // optional 0-based item -> factor map

  bool has_items() const { return D > 0 && Beta.size() > 0; }
  void validate() const;
};

struct SimulatedData {
  NetworkData network;
  ItemResponses items;  // empty when params carry no items
  MatrixXd U, V, Theta;
  MatrixXd expected_network;  // delta + U V^T
  MatrixXd expected_items;    // 1 Beta^T + Theta A^T
};

SimulatedData simulate_joint(const GenerativeParams& params, Rng& rng);

/// Synthetic stand-in for a fitted school: K=2, D=3, 16 items in subscales
/// of 5, 7 and 4 items. Mirrors data/school56_like.json.
GenerativeParams school56_like_params(int N = 100);

/// Realised density of one network per (intercept, variance) cell: K
/// independent dimensions with the given common variance, unit error
/// variance, no dyadic correlation.
MatrixXd density_table(const std::vector<double>& intercepts, const std::vector<double>& variances, int K, int N,
                       Rng& rng);

/// Fourth standardized moment (normal => 3).
double kurtosis(const VectorXd& sample);

struct ParameterRecovery {
  std::string name;
  double truth = 0.0;
  double bias = 0.0;
  double variance = 0.0;  // divisor R (so mse = bias^2 + variance)
  double mse = 0.0;
  int replications = 0;
};

struct RecoveryReport {
  int N = 0;
  std::vector<ParameterRecovery> parameters;
  std::vector<double> network_cell_errors;  // posterior mean E(X) - truth, off-diagonal
  std::vector<double> item_cell_errors;     // posterior mean E(Y) - truth
  VectorXd kurtosis_U, kurtosis_V, kurtosis_Theta;  // averaged over replications
  int failures = 0;
  std::vector<std::string> failure_messages;

  const ParameterRecovery& find(const std::string& name) const;
};

struct StudyOptions {
  std::uint64_t seed = 1;
  int threads = 1;
};

/// Bias, variance and MSE of posterior means over replications. Each
/// replication r simulates with stream 2r and fits with stream 2r + 1.
RecoveryReport recovery_study(const GenerativeParams& params, int n_replications, const ModelConfig& fit_config,
                              const StudyOptions& options = {});

struct SparsityRow {
  int N = 0;
  double intercept = 0.0;
  double bias_delta = 0.0;
  VectorXd bias_var_U;  // per dimension
  VectorXd bias_var_V;
  VectorXd kurtosis_U;
  VectorXd kurtosis_V;
  int replications = 0;
  int failures = 0;
};

/// Network-only fits to networks with identity latent covariance, K=2 and
/// rho=0. Latent variances come from the covariance of the identified
/// factors; biases are relative to 1.
std::vector<SparsityRow> sparsity_bias_study(const std::vector<double>& intercepts, const std::vector<int>& N_values,
                                             int n_replications, const ModelConfig& fit_config,
                                             const StudyOptions& options = {});

/// Sample covariance (divisor n - 1) of the columns.
MatrixXd column_covariance(const MatrixXd& X);

}  // namespace jnirm
