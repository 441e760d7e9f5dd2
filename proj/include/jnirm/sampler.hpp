#pragma once

#include "jnirm/random.hpp"
#include "jnirm/types.hpp"

#include <optional>
#include <vector>

namespace jnirm {

/// Which blocks of the stacked person vector (u, v, theta) are present.
/// K = 0 drops the network block, D = 0 the item block.
struct LatentLayout {
  int K = 0;
  int D = 0;

  int dim() const { return 2 * K + D; }
  int sender(int k) const { return k; }
  int receiver(int k) const { return K + k; }
  int theta(int d) const { return 2 * K + d; }
  bool is_network_slot(int slot) const { return slot < 2 * K; }

  static LatentLayout from(const ModelConfig& config);
};

// -------------------------------------------------------------------------
// Dyadic error decorrelation
// -------------------------------------------------------------------------

/// c R + d R^T whitens dyad pairs whose errors have variance sigma_e^2 and
/// within-dyad correlation rho.
struct DecorrelationCoeffs {
  double c = 1.0;
  double d = 0.0;
};

DecorrelationCoeffs decorrelation_coeffs(double rho, double sigma_e);
MatrixXd decorrelate(const MatrixXd& R, double rho, double sigma_e);

/// Sum of squared whitened residuals: the dyad quadratic forms with the
/// inverse 2x2 correlation matrix, plus (1 + rho)^-1 e_aa^2 over the diagonal
/// when `include_diagonal`. Unit error variance.
double dyadic_quadratic_form(const MatrixXd& E, double rho, bool include_diagonal);

// -------------------------------------------------------------------------
// Conditional prior of one latent coordinate
// -------------------------------------------------------------------------

/// Precision blocks of (target, partners) given the remaining (context)
/// coordinates of one person. Partners are the item dimensions when the
/// target is a network coordinate and the network coordinates when the
/// target is an item dimension.
struct ConditionalBlock {
  int target = 0;
  std::vector<int> partners;
  std::vector<int> context;

  double q_target = 1.0;        // Q_u
  Eigen::RowVectorXd q_cross;   // Q_{u theta}: target row against partners
  MatrixXd q_partners;          // Q_theta
  MatrixXd shift_map;           // (1 + |partners|) x |context|: S = shift_map * x_context
  VectorXd shift;               // S evaluated at the supplied context values (if any)

  double s_target() const { return shift.size() ? shift(0) : 0.0; }
  /// Full precision matrix of (target, partners).
  MatrixXd precision() const;
  /// S for a given context vector.
  VectorXd shift_at(const VectorXd& x_context) const;
  /// Linear coefficient of the target in its full conditional given a
  /// complete person vector x (in layout order).
  double linear_term(const VectorXd& x) const;
};

ConditionalBlock conditional_block(const MatrixXd& Sigma_utheta, int target, const LatentLayout& layout);
ConditionalBlock conditional_block(const MatrixXd& Sigma_utheta, int target, int K, int D);
ConditionalBlock conditional_block(const MatrixXd& Sigma_utheta, int target, const LatentLayout& layout,
                                   const VectorXd& x_context);

// -------------------------------------------------------------------------
// Full-conditional updates
// -------------------------------------------------------------------------

enum class Side { sender, receiver };

/// Network-side settings shared by the dyadic updates.
struct DyadicContext {
  double rho = 0.0;
  double sigma2_e = 1.0;
  bool include_diagonal = true;
};

/// Full conditional of one latent column: N(P^-1 b, P^-1) with
/// P = diag(w) + gamma v v^T.
struct LatentConditional {
  VectorXd w;
  double gamma = 0.0;
  VectorXd v;
  VectorXd b;

  MatrixXd precision() const;
};

LatentConditional latent_dimension_conditional(const LatentState& state, const MatrixXd& residual, int dim,
                                               Side side, const LatentLayout& layout, const DyadicContext& dyadic);

/// Persons are conditionally independent: common precision, per-person mean.
struct ThetaConditional {
  double precision = 1.0;
  VectorXd mean;
};

ThetaConditional theta_dimension_conditional(const LatentState& state, const MatrixXd& item_residual, int dim,
                                             const LatentLayout& layout);

/// Draws column `dim` of U (sender) or V (receiver). `residual` is
/// X - delta 11^T - sum_{k != dim} u_k v_k^T. The vectorised design
/// M = c (v (x) I) + d (I (x) v) is applied implicitly:
/// M^T M = (c^2 + d^2) |v|^2 I + 2cd v v^T.
VectorXd update_latent_dimension(const LatentState& state, const MatrixXd& residual, int dim, Side side,
                                 const LatentLayout& layout, const DyadicContext& dyadic, Rng& rng);

/// Draws column `dim` of Theta. `item_residual` is
/// Y - 1 Beta^T - sum_{d' != dim} theta_d' alpha_d'^T.
VectorXd update_theta_dimension(const LatentState& state, const MatrixXd& item_residual, int dim,
                                const LatentLayout& layout, Rng& rng);

/// Inverse-Wishart(scale + F^T F, N + df) with F rows (u_p, v_p, theta_p).
/// With `config.fix_cross_cov_zero` the network and item blocks are drawn
/// separately from their marginal priors' conjugate updates.
MatrixXd update_sigma_utheta(const MatrixXd& U, const MatrixXd& V, const MatrixXd& Theta,
                             const ModelConfig& config, Rng& rng);

struct GammaPosterior {
  double shape = 0.0;
  double rate = 0.0;
};

/// Posterior of sigma_e^-2 given the network residual E = X - delta - U V^T.
GammaPosterior sigma_e_posterior(const MatrixXd& E, double rho, bool include_diagonal, double prior_shape = 0.5,
                                 double prior_rate = 0.5);
/// Returns a draw of sigma_e^2 (the reciprocal of the precision draw).
double update_sigma_e(const MatrixXd& E, double rho, bool include_diagonal, Rng& rng, double prior_shape = 0.5,
                      double prior_rate = 0.5);

struct RhoUpdate {
  double rho = 0.0;
  bool accepted = false;
};

/// Log-likelihood of the dyadic errors as a function of rho (up to a constant).
double dyadic_log_likelihood(const MatrixXd& E, double sigma2_e, double rho, bool include_diagonal);

/// Random-walk Metropolis-Hastings step under a uniform(-1, 1) prior.
RhoUpdate update_rho(const MatrixXd& E, double sigma2_e, double current_rho, double proposal_sd,
                     bool include_diagonal, Rng& rng);

/// Conjugate normal draw of the intercept given Z - U V^T under the
/// decorrelated error metric; prior N(0, 1 / prior_precision).
double update_delta(const MatrixXd& Z, const MatrixXd& U, const MatrixXd& V, const DyadicContext& dyadic,
                    double prior_precision, Rng& rng);

struct ItemParams {
  VectorXd Beta;
  MatrixXd A;
};

/// Per-item conjugate draw of xi_i = (alpha_i, beta_i) with design G = (Theta, 1).
ItemParams update_item_params(const MatrixXd& Eta, const MatrixXd& Theta, double sigma2_eps,
                              const VectorXd& prior_mean, const MatrixXd& prior_cov, Rng& rng);

GammaPosterior sigma_eps_posterior(const MatrixXd& residual, double prior_shape = 0.5, double prior_rate = 0.5);
/// Returns a draw of sigma_eps^2.
double update_sigma_eps(const MatrixXd& residual, Rng& rng, double prior_shape = 0.5, double prior_rate = 0.5);

/// Refreshes the latent network in place. Observed binary cells are drawn
/// truncated to their sign; each dyad is updated by alternating univariate
/// conditionals through rho. Unobserved cells are drawn untruncated and
/// observed continuous cells keep their values. Diagonal pseudo-cells are
/// drawn from N(mean, sigma_e^2 (1 + rho)) when `dyadic.include_diagonal`.
void augment_network(const NetworkData& net, const MatrixXd& expected, const DyadicContext& dyadic, MatrixXd& Phi,
                     Rng& rng);

/// Refreshes the latent item responses in place.
void augment_items(const ItemResponses& items, const MatrixXd& expected, double sigma2_eps, MatrixXd& Eta,
                   Rng& rng);

// -------------------------------------------------------------------------
// Chain driver
// -------------------------------------------------------------------------

struct ProgressEvent {
  int iteration = 0;
  double log_likelihood = 0.0;
  double rho_accept_rate = 0.0;
};

class ProgressSink {
 public:
  virtual ~ProgressSink() = default;
  virtual void on_progress(const ProgressEvent& event) = 0;
  virtual int interval() const { return 1000; }
};

class GibbsSampler {
 public:
  GibbsSampler(std::optional<NetworkData> network, std::optional<ItemResponses> items, ModelConfig config,
               std::uint64_t stream = 0);

  /// One pass over every update step in the fixed order.
  void sweep(bool burn_in = false);

  const LatentState& state() const { return state_; }
  LatentState& mutable_state() { return state_; }
  const ModelConfig& config() const { return config_; }
  Rng& rng() { return rng_; }
  double rho_proposal_sd() const { return rho_sd_; }

  /// Replaces the observed data; used by successive-conditional simulation.
  void set_network(NetworkData network);
  void set_items(ItemResponses items);

  /// Complete-data log-likelihood of the latent network and item responses.
  double log_likelihood() const;

  /// Runs config.iterations sweeps and summarises the retained draws.
  ChainOutput run(ProgressSink* sink = nullptr);

 private:
  void initialize();
  void update_network_latents();
  void redraw_unobserved(Side side);
  void find_unobserved();
  void update_item_latents();
  void update_network_scalars(bool burn_in);
  void record(ChainOutput& out);
  ReplicateSummary draw_replicate();

  std::optional<NetworkData> network_;
  std::optional<ItemResponses> items_;
  ModelConfig config_;
  LatentLayout layout_;
  Rng rng_;
  LatentState state_;
  MatrixXd E_;  // network residual Phi - delta - U V^T
  std::vector<int> silent_rows_;  // no observed outgoing cell
  std::vector<int> silent_cols_;  // no observed incoming cell
  double rho_sd_ = 0.05;
  long window_proposals_ = 0;
  long window_accepts_ = 0;
  long rho_proposals_ = 0;
  long rho_accepts_ = 0;
  int iteration_ = 0;
  std::vector<std::vector<double>> item_categories_;
};

/// Convenience wrapper around GibbsSampler. Pass nullptr for the block the
/// mode does not use.
ChainOutput run_chain(const NetworkData* network, const ItemResponses* items, const ModelConfig& config,
                      std::uint64_t stream = 0, ProgressSink* sink = nullptr);

/// Runs independent chains (stream = first_stream + i) on a bounded pool.
std::vector<ChainOutput> run_chains(const NetworkData* network, const ItemResponses* items,
                                    const ModelConfig& config, int n_chains, int threads,
                                    std::uint64_t first_stream = 0);

/// Draws an N x N matrix of dyadic errors: (e_ab, e_ba) bivariate normal with
/// variance sigma2_e and correlation rho; zero diagonal.
MatrixXd draw_dyadic_errors(int n, double rho, double sigma2_e, Rng& rng);

}  // namespace jnirm
