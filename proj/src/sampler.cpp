#include "jnirm/sampler.hpp"

#include "jnirm/diagnostics.hpp"
#include "jnirm/linalg.hpp"
#include "jnirm/model.hpp"
#include "jnirm/parallel.hpp"

#include <cmath>

namespace jnirm {

LatentLayout LatentLayout::from(const ModelConfig& config) {
  LatentLayout l;
  l.K = config.uses_network() ? config.K : 0;
  l.D = config.uses_items() ? config.D : 0;
  return l;
}

// -------------------------------------------------------------------------
// Decorrelation
// -------------------------------------------------------------------------

DecorrelationCoeffs decorrelation_coeffs(double rho, double sigma_e) {
  if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("rho must lie in (-1, 1)");
  if (!(sigma_e > 0.0)) throw std::invalid_argument("sigma_e must be positive");
  const double p = 1.0 / std::sqrt(1.0 + rho);
  const double m = 1.0 / std::sqrt(1.0 - rho);
  return {0.5 * (p + m) / sigma_e, 0.5 * (p - m) / sigma_e};
}

MatrixXd decorrelate(const MatrixXd& R, double rho, double sigma_e) {
  const auto [c, d] = decorrelation_coeffs(rho, sigma_e);
  return c * R + d * R.transpose();
}

namespace {

struct DyadStats {
  double sum_sq = 0.0;     // sum over a != b of e_ab^2
  double sum_cross = 0.0;  // sum over a < b of e_ab e_ba
  double sum_diag = 0.0;   // sum of e_aa^2
  double n_dyads = 0.0;
  double n_diag = 0.0;
};

DyadStats dyad_stats(const MatrixXd& E, bool include_diagonal) {
  const Eigen::Index n = E.rows();
  DyadStats s;
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index a = 0; a < b; ++a) {
      const double x = E(a, b), y = E(b, a);
      s.sum_sq += x * x + y * y;
      s.sum_cross += x * y;
    }
  }
  s.n_dyads = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  if (include_diagonal) {
    s.sum_diag = E.diagonal().squaredNorm();
    s.n_diag = static_cast<double>(n);
  }
  return s;
}

double quad_form(const DyadStats& s, double rho) {
  return (s.sum_sq - 2.0 * rho * s.sum_cross) / (1.0 - rho * rho) + s.sum_diag / (1.0 + rho);
}

double rho_log_lik(const DyadStats& s, double sigma2_e, double rho) {
  return -0.5 * s.n_dyads * std::log1p(-rho * rho) - 0.5 * s.n_diag * std::log1p(rho) -
         0.5 * quad_form(s, rho) / sigma2_e;
}

}  // namespace

double dyadic_quadratic_form(const MatrixXd& E, double rho, bool include_diagonal) {
  return quad_form(dyad_stats(E, include_diagonal), rho);
}

// -------------------------------------------------------------------------
// Conditional prior blocks
// -------------------------------------------------------------------------

MatrixXd ConditionalBlock::precision() const {
  const Eigen::Index np = static_cast<Eigen::Index>(partners.size());
  MatrixXd Q(np + 1, np + 1);
  Q(0, 0) = q_target;
  if (np > 0) {
    Q.block(0, 1, 1, np) = q_cross;
    Q.block(1, 0, np, 1) = q_cross.transpose();
    Q.bottomRightCorner(np, np) = q_partners;
  }
  return Q;
}

VectorXd ConditionalBlock::shift_at(const VectorXd& x_context) const {
  if (static_cast<std::size_t>(x_context.size()) != context.size())
    throw std::invalid_argument("context vector has the wrong length");
  if (context.empty()) return VectorXd::Zero(shift_map.rows());
  return shift_map * x_context;
}

double ConditionalBlock::linear_term(const VectorXd& x) const {
  double s = 0.0;
  for (std::size_t j = 0; j < context.size(); ++j) s += shift_map(0, static_cast<Eigen::Index>(j)) * x(context[j]);
  for (std::size_t j = 0; j < partners.size(); ++j) s -= q_cross(static_cast<Eigen::Index>(j)) * x(partners[j]);
  return s;
}

ConditionalBlock conditional_block(const MatrixXd& Sigma, int target, const LatentLayout& layout) {
  const int p = layout.dim();
  if (Sigma.rows() != p || Sigma.cols() != p) throw std::invalid_argument("covariance does not match the layout");
  if (target < 0 || target >= p) throw std::out_of_range("target coordinate out of range");

  ConditionalBlock blk;
  blk.target = target;
  const bool net = layout.is_network_slot(target);
  for (int s = 0; s < p; ++s) {
    if (s == target) continue;
    if (layout.is_network_slot(s) != net)
      blk.partners.push_back(s);
    else
      blk.context.push_back(s);
  }

  std::vector<int> b{target};
  b.insert(b.end(), blk.partners.begin(), blk.partners.end());
  const auto nb = static_cast<Eigen::Index>(b.size());
  const auto nc = static_cast<Eigen::Index>(blk.context.size());

  MatrixXd S_bb(nb, nb), S_cb(nc, nb), S_cc(nc, nc);
  for (Eigen::Index i = 0; i < nb; ++i)
    for (Eigen::Index j = 0; j < nb; ++j) S_bb(i, j) = Sigma(b[i], b[j]);
  for (Eigen::Index i = 0; i < nc; ++i) {
    for (Eigen::Index j = 0; j < nb; ++j) S_cb(i, j) = Sigma(blk.context[i], b[j]);
    for (Eigen::Index j = 0; j < nc; ++j) S_cc(i, j) = Sigma(blk.context[i], blk.context[j]);
  }

  MatrixXd Q;
  if (nc > 0) {
    const MatrixXd X = robust_llt(S_cc, "context covariance").solve(S_cb);  // Sigma_cc^-1 Sigma_cb
    Q = spd_inverse(symmetrize(S_bb - S_cb.transpose() * X), "conditional covariance");
    blk.shift_map = Q * X.transpose();
  } else {
    Q = spd_inverse(S_bb, "conditional covariance");
    blk.shift_map = MatrixXd::Zero(nb, 0);
  }
  blk.q_target = Q(0, 0);
  blk.q_cross = Q.block(0, 1, 1, nb - 1);
  blk.q_partners = Q.bottomRightCorner(nb - 1, nb - 1);
  return blk;
}

ConditionalBlock conditional_block(const MatrixXd& Sigma, int target, int K, int D) {
  return conditional_block(Sigma, target, LatentLayout{K, D});
}

ConditionalBlock conditional_block(const MatrixXd& Sigma, int target, const LatentLayout& layout,
                                   const VectorXd& x_context) {
  ConditionalBlock blk = conditional_block(Sigma, target, layout);
  blk.shift = blk.shift_at(x_context);
  return blk;
}

namespace {

const MatrixXd& slot_matrix(const LatentState& s, const LatentLayout& l, int slot, int& col) {
  if (slot < l.K) {
    col = slot;
    return s.U;
  }
  if (slot < 2 * l.K) {
    col = slot - l.K;
    return s.V;
  }
  col = slot - 2 * l.K;
  return s.Theta;
}

/// Per-person linear prior term S_t - Q_{t,partners} x_partners.
VectorXd prior_linear(const LatentState& s, const LatentLayout& l, const ConditionalBlock& blk, Eigen::Index n) {
  VectorXd out = VectorXd::Zero(n);
  int col = 0;
  for (std::size_t j = 0; j < blk.context.size(); ++j) {
    const double w = blk.shift_map(0, static_cast<Eigen::Index>(j));
    if (w == 0.0) continue;
    const MatrixXd& M = slot_matrix(s, l, blk.context[j], col);
    out.noalias() += w * M.col(col);
  }
  for (std::size_t j = 0; j < blk.partners.size(); ++j) {
    const double w = blk.q_cross(static_cast<Eigen::Index>(j));
    if (w == 0.0) continue;
    const MatrixXd& M = slot_matrix(s, l, blk.partners[j], col);
    out.noalias() -= w * M.col(col);
  }
  return out;
}

}  // namespace

// -------------------------------------------------------------------------
// Latent coordinate updates
// -------------------------------------------------------------------------

LatentConditional latent_dimension_conditional(const LatentState& state, const MatrixXd& residual, int dim,
                                               Side side, const LatentLayout& layout, const DyadicContext& dyadic) {
  const Eigen::Index n = residual.rows();
  if (residual.cols() != n) throw std::invalid_argument("residual must be square");
  if (dim < 0 || dim >= layout.K) throw std::out_of_range("latent dimension out of range");
  const auto [c, d] = decorrelation_coeffs(dyadic.rho, std::sqrt(dyadic.sigma2_e));

  const bool sender = side == Side::sender;
  LatentConditional out;
  out.v = sender ? state.V.col(dim) : state.U.col(dim);
  const VectorXd& v = out.v;
  const double c2d2 = c * c + d * d;
  out.gamma = 2.0 * c * d;

  if (sender)
    out.b.noalias() = c2d2 * (residual * v) + out.gamma * (residual.transpose() * v);
  else
    out.b.noalias() = c2d2 * (residual.transpose() * v) + out.gamma * (residual * v);

  const int slot = sender ? layout.sender(dim) : layout.receiver(dim);
  const ConditionalBlock blk = conditional_block(state.Sigma_utheta, slot, layout);
  out.b += prior_linear(state, layout, blk, n);

  out.w = VectorXd::Constant(n, c2d2 * v.squaredNorm() + blk.q_target);
  if (!dyadic.include_diagonal) {
    const double cpd2 = (c + d) * (c + d);
    for (Eigen::Index a = 0; a < n; ++a) {
      out.w(a) -= cpd2 * v(a) * v(a);
      out.b(a) -= cpd2 * residual(a, a) * v(a);
    }
  }
  return out;
}

MatrixXd LatentConditional::precision() const {
  MatrixXd P = gamma * v * v.transpose();
  P.diagonal() += w;
  return P;
}

VectorXd update_latent_dimension(const LatentState& state, const MatrixXd& residual, int dim, Side side,
                                 const LatentLayout& layout, const DyadicContext& dyadic, Rng& rng) {
  const LatentConditional lc = latent_dimension_conditional(state, residual, dim, side, layout, dyadic);
  return mvn_diag_plus_rank1(lc.w, lc.gamma, lc.v, lc.b, rng);
}

ThetaConditional theta_dimension_conditional(const LatentState& state, const MatrixXd& item_residual, int dim,
                                             const LatentLayout& layout) {
  const Eigen::Index n = item_residual.rows();
  if (dim < 0 || dim >= layout.D) throw std::out_of_range("item dimension out of range");
  if (item_residual.cols() != state.A.rows()) throw std::invalid_argument("residual does not match loadings");
  const VectorXd alpha = state.A.col(dim);
  const double inv_s2 = 1.0 / state.sigma2_eps;

  const ConditionalBlock blk = conditional_block(state.Sigma_utheta, layout.theta(dim), layout);
  ThetaConditional out;
  out.precision = alpha.squaredNorm() * inv_s2 + blk.q_target;
  out.mean = (inv_s2 * (item_residual * alpha) + prior_linear(state, layout, blk, n)) / out.precision;
  return out;
}

VectorXd update_theta_dimension(const LatentState& state, const MatrixXd& item_residual, int dim,
                                const LatentLayout& layout, Rng& rng) {
  ThetaConditional tc = theta_dimension_conditional(state, item_residual, dim, layout);
  const double sd = 1.0 / std::sqrt(tc.precision);
  for (Eigen::Index p = 0; p < tc.mean.size(); ++p) tc.mean(p) += sd * rng.normal();
  return tc.mean;
}

MatrixXd update_sigma_utheta(const MatrixXd& U, const MatrixXd& V, const MatrixXd& Theta, const ModelConfig& config,
                             Rng& rng) {
  const MatrixXd F = stack_latents(U, V, Theta);
  const int p = static_cast<int>(F.cols());
  if (p != config.latent_dim()) throw std::invalid_argument("latent blocks do not match the configuration");
  const MatrixXd Psi = config.effective_wishart_scale();
  const double nu = config.effective_wishart_df();
  const double n = static_cast<double>(F.rows());

  const int q = static_cast<int>(U.cols() + V.cols());
  if (!config.fix_cross_cov_zero || q == 0 || q == p)
    return inverse_wishart(symmetrize(Psi + F.transpose() * F), n + nu, rng);

  // Marginal priors of the two blocks: IW(Psi_bb, nu - (p - dim_b)).
  const int r = p - q;
  const MatrixXd Fn = F.leftCols(q), Fi = F.rightCols(r);
  MatrixXd out = MatrixXd::Zero(p, p);
  out.topLeftCorner(q, q) =
      inverse_wishart(symmetrize(Psi.topLeftCorner(q, q) + Fn.transpose() * Fn), n + nu - r, rng);
  out.bottomRightCorner(r, r) =
      inverse_wishart(symmetrize(Psi.bottomRightCorner(r, r) + Fi.transpose() * Fi), n + nu - q, rng);
  return out;
}

// -------------------------------------------------------------------------
// Network scalars
// -------------------------------------------------------------------------

GammaPosterior sigma_e_posterior(const MatrixXd& E, double rho, bool include_diagonal, double a0, double b0) {
  const DyadStats s = dyad_stats(E, include_diagonal);
  return {a0 + s.n_dyads + 0.5 * s.n_diag, b0 + 0.5 * quad_form(s, rho)};
}

double update_sigma_e(const MatrixXd& E, double rho, bool include_diagonal, Rng& rng, double a0, double b0) {
  const GammaPosterior g = sigma_e_posterior(E, rho, include_diagonal, a0, b0);
  return 1.0 / rng.gamma(g.shape, g.rate);
}

double dyadic_log_likelihood(const MatrixXd& E, double sigma2_e, double rho, bool include_diagonal) {
  if (!(std::abs(rho) < 1.0)) return -std::numeric_limits<double>::infinity();
  return rho_log_lik(dyad_stats(E, include_diagonal), sigma2_e, rho);
}

RhoUpdate update_rho(const MatrixXd& E, double sigma2_e, double current, double sd, bool include_diagonal,
                     Rng& rng) {
  const double proposal = current + sd * rng.normal();
  if (!(std::abs(proposal) < 1.0)) return {current, false};
  const DyadStats s = dyad_stats(E, include_diagonal);
  const double log_ratio = rho_log_lik(s, sigma2_e, proposal) - rho_log_lik(s, sigma2_e, current);
  if (std::log(rng.uniform()) < log_ratio) return {proposal, true};
  return {current, false};
}

double update_delta(const MatrixXd& Z, const MatrixXd& U, const MatrixXd& V, const DyadicContext& dyadic,
                    double prior_precision, Rng& rng) {
  const auto [c, d] = decorrelation_coeffs(dyadic.rho, std::sqrt(dyadic.sigma2_e));
  const double cpd2 = (c + d) * (c + d);
  MatrixXd W = Z;
  if (U.cols() > 0) W.noalias() -= U * V.transpose();
  const double n = static_cast<double>(Z.rows());
  double total = W.sum();
  double cells = n * n;
  if (!dyadic.include_diagonal) {
    total -= W.diagonal().sum();
    cells -= n;
  }
  const double prec = prior_precision + cpd2 * cells;
  return cpd2 * total / prec + rng.normal() / std::sqrt(prec);
}

// -------------------------------------------------------------------------
// Item parameters
// -------------------------------------------------------------------------

ItemParams update_item_params(const MatrixXd& Eta, const MatrixXd& Theta, double sigma2_eps,
                              const VectorXd& prior_mean, const MatrixXd& prior_cov, Rng& rng) {
  const Eigen::Index n = Eta.rows(), m = Eta.cols(), D = Theta.cols();
  if (Theta.rows() != n) throw std::invalid_argument("Theta and responses disagree on persons");
  if (prior_mean.size() != D + 1 || prior_cov.rows() != D + 1)
    throw std::invalid_argument("item prior has the wrong dimension");
  MatrixXd G(n, D + 1);
  G << Theta, VectorXd::Ones(n);
  const MatrixXd prior_prec = spd_inverse(prior_cov, "item prior covariance");
  const MatrixXd P = symmetrize(G.transpose() * G / sigma2_eps + prior_prec);
  const auto llt = robust_llt(P, "item parameter precision");
  const MatrixXd L = llt.matrixL();
  const VectorXd prior_lin = prior_prec * prior_mean;
  const MatrixXd GtY = G.transpose() * Eta / sigma2_eps;

  ItemParams out{VectorXd(m), MatrixXd(m, D)};
  for (Eigen::Index i = 0; i < m; ++i) {
    const VectorXd mean = llt.solve(GtY.col(i) + prior_lin);
    const VectorXd z = rng.normal_vector(D + 1);
    const VectorXd xi = mean + L.transpose().triangularView<Eigen::Upper>().solve(z);
    out.A.row(i) = xi.head(D).transpose();
    out.Beta(i) = xi(D);
  }
  return out;
}

GammaPosterior sigma_eps_posterior(const MatrixXd& residual, double a0, double b0) {
  return {a0 + 0.5 * static_cast<double>(residual.size()), b0 + 0.5 * residual.squaredNorm()};
}

double update_sigma_eps(const MatrixXd& residual, Rng& rng, double a0, double b0) {
  const GammaPosterior g = sigma_eps_posterior(residual, a0, b0);
  return 1.0 / rng.gamma(g.shape, g.rate);
}

// -------------------------------------------------------------------------
// Augmentation
// -------------------------------------------------------------------------

namespace {

double draw_cell(bool observed, bool binary, double value, double mean, double sd, Rng& rng) {
  if (!observed) return mean + sd * rng.normal();
  if (!binary) return value;
  return value > 0.5 ? truncated_normal_above(mean, sd, 0.0, rng) : truncated_normal_below(mean, sd, 0.0, rng);
}

}  // namespace

void augment_network(const NetworkData& net, const MatrixXd& mu, const DyadicContext& dyadic, MatrixXd& Z,
                     Rng& rng) {
  const Eigen::Index n = net.edges.rows();
  if (mu.rows() != n || Z.rows() != n) throw std::invalid_argument("network sizes disagree");
  const bool binary = net.kind == DataKind::binary;
  const double rho = dyadic.rho;
  const double sd_c = std::sqrt(dyadic.sigma2_e * (1.0 - rho * rho));
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index a = 0; a < b; ++a) {
      Z(a, b) = draw_cell(net.mask(a, b), binary, net.edges(a, b), mu(a, b) + rho * (Z(b, a) - mu(b, a)), sd_c, rng);
      Z(b, a) = draw_cell(net.mask(b, a), binary, net.edges(b, a), mu(b, a) + rho * (Z(a, b) - mu(a, b)), sd_c, rng);
    }
  }
  const double sd_d = std::sqrt(dyadic.sigma2_e * (1.0 + rho));
  for (Eigen::Index a = 0; a < n; ++a) Z(a, a) = dyadic.include_diagonal ? mu(a, a) + sd_d * rng.normal() : mu(a, a);
}

void augment_items(const ItemResponses& items, const MatrixXd& mu, double sigma2_eps, MatrixXd& Eta, Rng& rng) {
  const bool binary = items.kind == DataKind::binary;
  const double sd = std::sqrt(sigma2_eps);
  for (Eigen::Index j = 0; j < mu.cols(); ++j)
    for (Eigen::Index i = 0; i < mu.rows(); ++i)
      Eta(i, j) = draw_cell(items.mask(i, j), binary, items.values(i, j), mu(i, j), sd, rng);
}

MatrixXd draw_dyadic_errors(int n, double rho, double sigma2_e, Rng& rng) {
  if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("rho must lie in (-1, 1)");
  MatrixXd E = MatrixXd::Zero(n, n);
  const double s = std::sqrt(sigma2_e), r = std::sqrt(1.0 - rho * rho);
  for (int b = 0; b < n; ++b) {
    for (int a = 0; a < b; ++a) {
      const double z1 = rng.normal(), z2 = rng.normal();
      E(a, b) = s * z1;
      E(b, a) = s * (rho * z1 + r * z2);
    }
  }
  return E;
}

// -------------------------------------------------------------------------
// GibbsSampler
// -------------------------------------------------------------------------

GibbsSampler::GibbsSampler(std::optional<NetworkData> network, std::optional<ItemResponses> items,
                           ModelConfig config, std::uint64_t stream)
    : network_(std::move(network)),
      items_(std::move(items)),
      config_(std::move(config)),
      layout_(LatentLayout::from(config_)),
      rng_(config_.seed, stream),
      rho_sd_(config_.rho_proposal_sd) {
  config_.validate();
  if (config_.uses_network()) {
    if (!network_) throw DataError("mode " + to_string(config_.mode) + " requires a network");
    network_->validate();
    if (network_->n_nodes() < 2) throw DataError("network needs at least two nodes");
  } else {
    network_.reset();
  }
  if (config_.uses_items()) {
    if (!items_) throw DataError("mode " + to_string(config_.mode) + " requires item responses");
    items_->validate();
    if (items_->n_persons() < 2 || items_->n_items() < 1) throw DataError("item responses are empty");
  } else {
    items_.reset();
  }
  if (network_ && items_ && network_->n_nodes() != items_->n_persons())
    throw DataError("network has " + std::to_string(network_->n_nodes()) + " nodes but item responses have " +
                    std::to_string(items_->n_persons()) + " persons");
  if (items_) item_categories_ = observed_categories(*items_);
  find_unobserved();
  initialize();
}

void GibbsSampler::find_unobserved() {
  silent_rows_.clear();
  silent_cols_.clear();
  if (!network_) return;
  const BoolMatrix& m = network_->mask;
  for (int a = 0; a < network_->n_nodes(); ++a) {
    if (!m.row(a).any()) silent_rows_.push_back(a);
    if (!m.col(a).any()) silent_cols_.push_back(a);
  }
}

// A node with no observed outgoing (incoming) cell: once those cells are
// integrated out, its sender (receiver) latents are left with the
// conditional prior. Drawing them from it and then redrawing the cells is a
// blocked step that avoids the slow random walk of imputed cells and
// latents updated one given the other.
void GibbsSampler::redraw_unobserved(Side side) {
  const std::vector<int>& nodes = side == Side::sender ? silent_rows_ : silent_cols_;
  if (nodes.empty()) return;
  LatentState& s = state_;
  const int n = network_->n_nodes();
  const double rho = s.rho;
  const double sd_c = std::sqrt(s.sigma2_e * (1.0 - rho * rho));
  const double sd_d = std::sqrt(s.sigma2_e * (1.0 + rho));
  const bool sender = side == Side::sender;
  for (int a : nodes) {
    VectorXd x(layout_.dim());
    x << s.U.row(a).transpose(), s.V.row(a).transpose(), s.Theta.row(a).transpose();
    for (int k = 0; k < layout_.K; ++k) {
      const int slot = sender ? layout_.sender(k) : layout_.receiver(k);
      const ConditionalBlock blk = conditional_block(s.Sigma_utheta, slot, layout_);
      x(slot) = blk.linear_term(x) / blk.q_target + rng_.normal() / std::sqrt(blk.q_target);
    }
    if (sender)
      s.U.row(a) = x.head(layout_.K).transpose();
    else
      s.V.row(a) = x.segment(layout_.K, layout_.K).transpose();

    for (int b = 0; b < n; ++b) {
      if (b == a) continue;
      const int i = sender ? a : b, j = sender ? b : a;  // redrawn cell (i, j)
      const double mu_ij = s.delta + s.U.row(i).dot(s.V.row(j));
      const double mu_ji = s.delta + s.U.row(j).dot(s.V.row(i));
      s.Phi(i, j) = mu_ij + rho * (s.Phi(j, i) - mu_ji) + sd_c * rng_.normal();
    }
    const double mu_aa = s.delta + s.U.row(a).dot(s.V.row(a));
    s.Phi(a, a) = config_.paper_exact_shape ? mu_aa + sd_d * rng_.normal() : mu_aa;
    if (sender)
      E_.row(a) = (s.Phi.row(a).array() - s.delta).matrix() - s.U.row(a) * s.V.transpose();
    else
      E_.col(a) = (s.Phi.col(a).array() - s.delta).matrix() - s.U * s.V.row(a).transpose();
  }
}

void GibbsSampler::initialize() {
  const int n = network_ ? network_->n_nodes() : items_->n_persons();
  const double init_sd = 0.1;
  LatentState& s = state_;
  s.U = init_sd * rng_.normal_matrix(n, layout_.K);
  s.V = init_sd * rng_.normal_matrix(n, layout_.K);
  s.Theta = init_sd * rng_.normal_matrix(n, layout_.D);
  s.Sigma_utheta = MatrixXd::Identity(layout_.dim(), layout_.dim());
  s.rho = 0.0;
  s.sigma2_e = 1.0;
  s.sigma2_eps = 1.0;

  if (network_) {
    const NetworkData& net = *network_;
    double total = 0.0, count = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        if (net.mask(i, j)) {
          total += net.edges(i, j);
          count += 1.0;
        }
    const double mean = count > 0 ? total / count : 0.0;
    s.delta = net.kind == DataKind::binary ? normal_quantile(std::clamp(mean, 1e-3, 1.0 - 1e-3)) : mean;
    s.Phi = MatrixXd::Constant(n, n, s.delta);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        if (net.mask(i, j))
          s.Phi(i, j) = net.kind == DataKind::binary ? (net.edges(i, j) > 0.5 ? 0.5 : -0.5) : net.edges(i, j);
    E_ = s.Phi - expected_network(s.delta, s.U, s.V);
  } else {
    s.delta = 0.0;
    s.Phi.resize(0, 0);
    E_.resize(0, 0);
  }

  if (items_) {
    const ItemResponses& it = *items_;
    const Eigen::Index m = it.n_items();
    s.Beta.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      double total = 0.0, count = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (it.mask(i, j)) {
          total += it.values(i, j);
          count += 1.0;
        }
      const double mean = count > 0 ? total / count : (it.kind == DataKind::binary ? 0.5 : 0.0);
      s.Beta(j) = it.kind == DataKind::binary ? normal_quantile(std::clamp(mean, 1e-3, 1.0 - 1e-3)) : mean;
    }
    s.A = MatrixXd::Constant(m, layout_.D, 0.1);
    s.Eta.resize(n, m);
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!it.mask(i, j))
          s.Eta(i, j) = s.Beta(j);
        else if (it.kind == DataKind::binary)
          s.Eta(i, j) = it.values(i, j) > 0.5 ? 0.5 : -0.5;
        else
          s.Eta(i, j) = it.values(i, j);
      }
  } else {
    s.Beta.resize(0);
    s.A.resize(0, 0);
    s.Eta.resize(0, 0);
  }
}

void GibbsSampler::set_network(NetworkData network) {
  if (!network_) throw std::logic_error("sampler has no network block");
  network.validate();
  if (network.n_nodes() != network_->n_nodes()) throw DataError("replacement network has a different size");
  network_ = std::move(network);
  find_unobserved();
}

void GibbsSampler::set_items(ItemResponses items) {
  if (!items_) throw std::logic_error("sampler has no item block");
  items.validate();
  if (items.n_persons() != items_->n_persons() || items.n_items() != items_->n_items())
    throw DataError("replacement item responses have a different shape");
  items_ = std::move(items);
}

void GibbsSampler::update_network_latents() {
  LatentState& s = state_;
  const DyadicContext dyadic{s.rho, s.sigma2_e, config_.paper_exact_shape};
  augment_network(*network_, expected_network(s.delta, s.U, s.V), dyadic, s.Phi, rng_);
  E_ = s.Phi - expected_network(s.delta, s.U, s.V);

  for (int k = 0; k < layout_.K; ++k) {
    E_.noalias() += s.U.col(k) * s.V.col(k).transpose();
    s.U.col(k) = update_latent_dimension(s, E_, k, Side::sender, layout_, dyadic, rng_);
    E_.noalias() -= s.U.col(k) * s.V.col(k).transpose();
  }
  redraw_unobserved(Side::sender);
  for (int k = 0; k < layout_.K; ++k) {
    E_.noalias() += s.U.col(k) * s.V.col(k).transpose();
    s.V.col(k) = update_latent_dimension(s, E_, k, Side::receiver, layout_, dyadic, rng_);
    E_.noalias() -= s.U.col(k) * s.V.col(k).transpose();
  }
  redraw_unobserved(Side::receiver);
}

void GibbsSampler::update_item_latents() {
  LatentState& s = state_;
  augment_items(*items_, expected_responses(s.Beta, s.A, s.Theta), s.sigma2_eps, s.Eta, rng_);
}

void GibbsSampler::update_network_scalars(bool burn_in) {
  LatentState& s = state_;
  const bool diag = config_.paper_exact_shape;
  if (network_->kind == DataKind::continuous)
    s.sigma2_e =
        update_sigma_e(E_, s.rho, diag, rng_, config_.prior_sigma_e_shape, config_.prior_sigma_e_rate);

  const RhoUpdate r = update_rho(E_, s.sigma2_e, s.rho, rho_sd_, diag, rng_);
  s.rho = r.rho;
  if (burn_in) {
    ++window_proposals_;
    window_accepts_ += r.accepted;
    if (config_.adapt_rho && window_proposals_ == 50) {
      const double rate = static_cast<double>(window_accepts_) / window_proposals_;
      if (rate < 0.30) rho_sd_ *= 0.8;
      if (rate > 0.45) rho_sd_ *= 1.25;
      rho_sd_ = std::clamp(rho_sd_, 1e-4, 1.0);
      window_proposals_ = window_accepts_ = 0;
    }
  } else {
    ++rho_proposals_;
    rho_accepts_ += r.accepted;
  }

  const double old_delta = s.delta;
  s.delta = update_delta(s.Phi, s.U, s.V, DyadicContext{s.rho, s.sigma2_e, diag}, config_.prior_delta_precision, rng_);
  E_.array() -= s.delta - old_delta;
}

void GibbsSampler::sweep(bool burn_in) {
  LatentState& s = state_;
  if (network_) update_network_latents();

  MatrixXd item_res;
  if (items_) {
    update_item_latents();
    item_res = s.Eta - expected_responses(s.Beta, s.A, s.Theta);
    for (int d = 0; d < layout_.D; ++d) {
      item_res.noalias() += s.Theta.col(d) * s.A.col(d).transpose();
      s.Theta.col(d) = update_theta_dimension(s, item_res, d, layout_, rng_);
      item_res.noalias() -= s.Theta.col(d) * s.A.col(d).transpose();
    }
  }

  s.Sigma_utheta = update_sigma_utheta(s.U, s.V, s.Theta, config_, rng_);

  if (network_) update_network_scalars(burn_in);

  if (items_) {
    if (items_->kind == DataKind::continuous)
      s.sigma2_eps = update_sigma_eps(item_res, rng_, config_.prior_sigma_eps_shape, config_.prior_sigma_eps_rate);
    ItemParams xi = update_item_params(s.Eta, s.Theta, s.sigma2_eps, config_.effective_xi_mean(),
                                       config_.effective_xi_cov(), rng_);
    s.Beta = std::move(xi.Beta);
    s.A = std::move(xi.A);
    if (config_.center_theta) {
      const VectorXd m = s.Theta.colwise().mean().transpose();
      s.Theta.rowwise() -= m.transpose();
      s.Beta += s.A * m;
    }
  }
  ++iteration_;
}

double GibbsSampler::log_likelihood() const {
  const LatentState& s = state_;
  constexpr double log2pi = 1.8378770664093453;
  double ll = 0.0;
  if (network_) {
    const DyadStats st = dyad_stats(E_, config_.paper_exact_shape);
    const double cells = 2.0 * st.n_dyads + st.n_diag;
    ll += -0.5 * cells * (log2pi + std::log(s.sigma2_e)) + rho_log_lik(st, s.sigma2_e, s.rho);
  }
  if (items_) {
    const MatrixXd r = s.Eta - expected_responses(s.Beta, s.A, s.Theta);
    ll += -0.5 * static_cast<double>(r.size()) * (log2pi + std::log(s.sigma2_eps)) - 0.5 * r.squaredNorm() / s.sigma2_eps;
  }
  return ll;
}

ReplicateSummary GibbsSampler::draw_replicate() {
  const LatentState& s = state_;
  ReplicateSummary rep;
  if (network_) {
    MatrixXd Z = expected_network(s.delta, s.U, s.V) + draw_dyadic_errors(network_->n_nodes(), s.rho, s.sigma2_e, rng_);
    if (network_->kind == DataKind::binary) Z = (Z.array() > 0.0).cast<double>().matrix();
    Z.diagonal().setZero();
    for (Eigen::Index j = 0; j < Z.cols(); ++j)
      for (Eigen::Index i = 0; i < Z.rows(); ++i)
        if (!network_->mask(i, j)) Z(i, j) = 0.0;
    rep.network = network_stats(NetworkData(std::move(Z), network_->kind, network_->mask));
  }
  if (items_) {
    MatrixXd Y = expected_responses(s.Beta, s.A, s.Theta);
    const double sd = std::sqrt(s.sigma2_eps);
    for (Eigen::Index j = 0; j < Y.cols(); ++j)
      for (Eigen::Index i = 0; i < Y.rows(); ++i) Y(i, j) += sd * rng_.normal();
    if (items_->kind == DataKind::binary) Y = (Y.array() > 0.0).cast<double>().matrix();
    rep.item_means = item_means(Y, items_->mask);
    rep.item_cov = item_covariance(Y, items_->mask);
    if (!item_categories_.empty()) rep.item_category_freq = category_frequencies(Y, items_->mask, item_categories_);
  }
  return rep;
}

void GibbsSampler::record(ChainOutput& out) {
  const LatentState& s = state_;
  ++out.n_draws;
  const double w = 1.0 / static_cast<double>(out.n_draws);
  if (network_) {
    const MatrixXd uv = s.U * s.V.transpose();
    out.mean_UVt += w * (uv - out.mean_UVt);
    if (network_->kind == DataKind::binary) {
      const MatrixXd p = (uv.array() + s.delta).unaryExpr([](double x) { return normal_cdf(x); }).matrix();
      out.mean_edge_prob += w * (p - out.mean_edge_prob);
    }
  }
  if (items_) {
    const MatrixXd ta = s.Theta * s.A.transpose();
    out.mean_ThetaAt += w * (ta - out.mean_ThetaAt);
  }
  out.mean_Sigma += w * (s.Sigma_utheta - out.mean_Sigma);
  out.scalar_traces.delta.push_back(s.delta);
  out.scalar_traces.rho.push_back(s.rho);
  out.scalar_traces.sigma2_e.push_back(s.sigma2_e);
  out.scalar_traces.sigma2_eps.push_back(s.sigma2_eps);
  out.scalar_traces.beta.push_back(s.Beta);
  if (config_.generate_replicates) out.replicate_stats.push_back(draw_replicate());
}

ChainOutput GibbsSampler::run(ProgressSink* sink) {
  ChainOutput out;
  out.mode = config_.mode;
  out.K = layout_.K;
  out.D = layout_.D;
  const int n = network_ ? network_->n_nodes() : items_->n_persons();
  if (network_) {
    out.mean_UVt = MatrixXd::Zero(n, n);
    if (network_->kind == DataKind::binary) out.mean_edge_prob = MatrixXd::Zero(n, n);
    out.network_mask_used = network_->mask;
  }
  if (items_) out.mean_ThetaAt = MatrixXd::Zero(n, items_->n_items());
  out.mean_Sigma = MatrixXd::Zero(layout_.dim(), layout_.dim());

  const int interval = sink ? std::max(1, sink->interval()) : 0;
  for (int it = 0; it < config_.iterations; ++it) {
    const bool burn = it < config_.burn_in;
    sweep(burn);
    if (!burn && (it - config_.burn_in) % config_.thin == config_.thin - 1) record(out);
    if (sink && (it + 1) % interval == 0) {
      const double rate = rho_proposals_ > 0 ? static_cast<double>(rho_accepts_) / rho_proposals_ : 0.0;
      sink->on_progress({it + 1, log_likelihood(), rate});
    }
  }
  out.rho_proposals = rho_proposals_;
  out.rho_accepts = rho_accepts_;
  out.accept_rate_rho = rho_proposals_ > 0 ? static_cast<double>(rho_accepts_) / rho_proposals_ : 0.0;
  out.final_state = state_;
  return out;
}

ChainOutput run_chain(const NetworkData* network, const ItemResponses* items, const ModelConfig& config,
                      std::uint64_t stream, ProgressSink* sink) {
  std::optional<NetworkData> net;
  std::optional<ItemResponses> it;
  if (network && config.uses_network()) net = *network;
  if (items && config.uses_items()) it = *items;
  GibbsSampler sampler(std::move(net), std::move(it), config, stream);
  return sampler.run(sink);
}

std::vector<ChainOutput> run_chains(const NetworkData* network, const ItemResponses* items,
                                    const ModelConfig& config, int n_chains, int threads,
                                    std::uint64_t first_stream) {
  if (n_chains < 1) throw std::invalid_argument("need at least one chain");
  std::vector<ChainOutput> out(static_cast<std::size_t>(n_chains));
  parallel_for(out.size(), threads, [&](std::size_t i) {
    out[i] = run_chain(network, items, config, first_stream + static_cast<std::uint64_t>(i));
  });
  return out;
}

}  // namespace jnirm
