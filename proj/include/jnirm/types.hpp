#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace jnirm {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerically degenerate state (failed factorization, singular covariance).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataKind { binary, continuous };
enum class Mode { joint, network_only, item_only };

std::string to_string(DataKind kind);
std::string to_string(Mode mode);
DataKind parse_data_kind(const std::string& s);
Mode parse_mode(const std::string& s);

// -------------------------------------------------------------------------
// Observed data
// -------------------------------------------------------------------------

/// Directed network on N nodes. Diagonal cells are never observed.
struct NetworkData {
  MatrixXd edges;
  DataKind kind = DataKind::binary;
  BoolMatrix mask;  // true = observed

  NetworkData() = default;
  NetworkData(MatrixXd edges_, DataKind kind_);
  NetworkData(MatrixXd edges_, DataKind kind_, BoolMatrix mask_);

  int n_nodes() const { return static_cast<int>(edges.rows()); }
  /// Throws DataError if the invariants do not hold.
  void validate() const;
  /// Copy with node `row`'s outgoing cells hidden.
  NetworkData without_row(int row) const;
};

/// N persons by M items.
struct ItemResponses {
  MatrixXd values;
  DataKind kind = DataKind::continuous;
  BoolMatrix mask;
  std::vector<std::string> item_ids;

  ItemResponses() = default;
  ItemResponses(MatrixXd values_, DataKind kind_);
  ItemResponses(MatrixXd values_, DataKind kind_, BoolMatrix mask_);

  int n_persons() const { return static_cast<int>(values.rows()); }
  int n_items() const { return static_cast<int>(values.cols()); }
  void validate() const;
};

// -------------------------------------------------------------------------
// Configuration
// -------------------------------------------------------------------------

struct ModelConfig {
  int K = 2;
  int D = 3;
  Mode mode = Mode::joint;

  int iterations = 20000;
  int burn_in = 2000;
  int thin = 10;

  double prior_delta_precision = 0.01;
  VectorXd prior_xi_mean;  // empty => (1, ..., 1, 0)
  MatrixXd prior_xi_cov;   // empty => identity

  // Inverse-Wishart prior on the joint latent covariance; the precision
  // follows Wishart(wishart_scale^-1, wishart_df). NaN / empty => 2K+D+2, I.
  double wishart_df = std::numeric_limits<double>::quiet_NaN();
  MatrixXd wishart_scale;

  // gamma(shape, rate) priors on the error precisions.
  double prior_sigma_e_shape = 0.5;
  double prior_sigma_e_rate = 0.5;
  double prior_sigma_eps_shape = 0.5;
  double prior_sigma_eps_rate = 0.5;

  double rho_proposal_sd = 0.05;
  bool adapt_rho = true;

  bool center_theta = true;
  // Diagonal cells enter as imputed pseudo-observations with variance
  // sigma_e^2 (1 + rho), which makes the N^2 error-precision shape exact.
  // When false, every network sum runs over a != b only.
  bool paper_exact_shape = true;
  // Forces the network/item cross-covariance block to zero.
  bool fix_cross_cov_zero = false;
  bool generate_replicates = false;

  std::uint64_t seed = 1;

  bool uses_network() const { return mode != Mode::item_only; }
  bool uses_items() const { return mode != Mode::network_only; }
  /// Dimension of the joint latent vector for this mode.
  int latent_dim() const;
  double effective_wishart_df() const;
  MatrixXd effective_wishart_scale() const;
  VectorXd effective_xi_mean() const;
  MatrixXd effective_xi_cov() const;
  void validate() const;
};

// -------------------------------------------------------------------------
// Sampler state and output
// -------------------------------------------------------------------------

struct LatentState {
  MatrixXd U;      // N x K
  MatrixXd V;      // N x K
  MatrixXd Theta;  // N x D
  MatrixXd Sigma_utheta;
  double delta = 0.0;
  double rho = 0.0;
  double sigma2_e = 1.0;
  double sigma2_eps = 1.0;
  VectorXd Beta;  // M
  MatrixXd A;     // M x D
  MatrixXd Phi;   // latent / completed network
  MatrixXd Eta;   // latent / completed item responses
};

/// Network summaries shared by posterior predictive checks.
struct NetworkStats {
  VectorXd sender_degrees;
  VectorXd receiver_degrees;
  double density = 0.0;
  double dyadic_dependence = 0.0;
  double transitivity = 0.0;
  double balance = 0.0;
  bool dyadic_dependence_defined = true;
  bool transitivity_defined = true;
  bool balance_defined = true;
};

/// Statistics of one replicated dataset drawn at a retained iteration.
struct ReplicateSummary {
  std::optional<NetworkStats> network;
  VectorXd item_means;
  MatrixXd item_cov;
  MatrixXd item_category_freq;  // M x C, NaN where item has fewer categories
};

struct ScalarTraces {
  std::vector<double> delta;
  std::vector<double> rho;
  std::vector<double> sigma2_e;
  std::vector<double> sigma2_eps;
  std::vector<VectorXd> beta;

  std::size_t size() const { return delta.size(); }
};

struct ChainOutput {
  Mode mode = Mode::joint;
  int K = 0;
  int D = 0;
  long n_draws = 0;  // retained draws behind the running means

  MatrixXd mean_UVt;
  MatrixXd mean_ThetaAt;
  MatrixXd mean_edge_prob;  // binary networks only
  MatrixXd mean_Sigma;
  ScalarTraces scalar_traces;
  std::vector<ReplicateSummary> replicate_stats;

  long rho_proposals = 0;
  long rho_accepts = 0;
  double accept_rate_rho = 0.0;

  BoolMatrix network_mask_used;
  LatentState final_state;

  /// Pools two outputs from chains on the same data (running means are
  /// count-weighted, traces concatenated).
  void merge(const ChainOutput& other);
};

}  // namespace jnirm
