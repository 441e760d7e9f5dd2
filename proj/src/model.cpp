#include "jnirm/model.hpp"

#include "jnirm/linalg.hpp"

#include <cmath>
#include <sstream>

namespace jnirm {

std::string to_string(DataKind kind) {
  return kind == DataKind::binary ? "binary" : "continuous";
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::joint: return "joint";
    case Mode::network_only: return "network-only";
    case Mode::item_only: return "item-only";
  }
  return "joint";
}

DataKind parse_data_kind(const std::string& s) {
  if (s == "binary") return DataKind::binary;
  if (s == "continuous") return DataKind::continuous;
  throw std::invalid_argument("unknown data kind '" + s + "'");
}

Mode parse_mode(const std::string& s) {
  if (s == "joint") return Mode::joint;
  if (s == "network-only" || s == "network_only") return Mode::network_only;
  if (s == "item-only" || s == "item_only") return Mode::item_only;
  throw std::invalid_argument("unknown mode '" + s + "'");
}

// -------------------------------------------------------------------------
// NetworkData / ItemResponses
// -------------------------------------------------------------------------

namespace {

BoolMatrix default_network_mask(const MatrixXd& edges) {
  BoolMatrix mask = BoolMatrix::Constant(edges.rows(), edges.cols(), true);
  for (Eigen::Index i = 0; i < edges.rows(); ++i) {
    for (Eigen::Index j = 0; j < edges.cols(); ++j) {
      if (i == j || std::isnan(edges(i, j))) mask(i, j) = false;
    }
  }
  return mask;
}

BoolMatrix default_item_mask(const MatrixXd& values) {
  BoolMatrix mask(values.rows(), values.cols());
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j) mask(i, j) = !std::isnan(values(i, j));
  return mask;
}

bool is_zero_one(double x) { return x == 0.0 || x == 1.0; }

}  // namespace

NetworkData::NetworkData(MatrixXd edges_, DataKind kind_)
    : edges(std::move(edges_)), kind(kind_), mask(default_network_mask(edges)) {
  for (Eigen::Index i = 0; i < edges.rows(); ++i)
    for (Eigen::Index j = 0; j < edges.cols(); ++j)
      if (!mask(i, j)) edges(i, j) = 0.0;
  validate();
}

NetworkData::NetworkData(MatrixXd edges_, DataKind kind_, BoolMatrix mask_)
    : edges(std::move(edges_)), kind(kind_), mask(std::move(mask_)) {
  for (Eigen::Index i = 0; i < std::min(mask.rows(), mask.cols()); ++i) mask(i, i) = false;
  for (Eigen::Index i = 0; i < std::min(edges.rows(), mask.rows()); ++i)
    for (Eigen::Index j = 0; j < std::min(edges.cols(), mask.cols()); ++j)
      if (!mask(i, j)) edges(i, j) = 0.0;
  validate();
}

void NetworkData::validate() const {
  if (edges.rows() == 0 || edges.rows() != edges.cols())
    throw DataError("network must be a non-empty square matrix");
  if (mask.rows() != edges.rows() || mask.cols() != edges.cols())
    throw DataError("network mask does not match the adjacency dimensions");
  for (Eigen::Index i = 0; i < edges.rows(); ++i) {
    if (mask(i, i)) throw DataError("network diagonal cannot be observed");
    for (Eigen::Index j = 0; j < edges.cols(); ++j) {
      if (!mask(i, j)) continue;
      if (!std::isfinite(edges(i, j))) throw DataError("non-finite observed network entry");
      if (kind == DataKind::binary && !is_zero_one(edges(i, j))) {
        std::ostringstream os;
        os << "binary network entry (" << i << "," << j << ") = " << edges(i, j) << " is not 0/1";
        throw DataError(os.str());
      }
    }
  }
}

NetworkData NetworkData::without_row(int row) const {
  if (row < 0 || row >= n_nodes()) throw std::out_of_range("holdout row out of range");
  NetworkData out = *this;
  out.mask.row(row).setConstant(false);
  out.edges.row(row).setZero();
  return out;
}

ItemResponses::ItemResponses(MatrixXd values_, DataKind kind_)
    : values(std::move(values_)), kind(kind_), mask(default_item_mask(values)) {
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      if (!mask(i, j)) values(i, j) = 0.0;
  validate();
}

ItemResponses::ItemResponses(MatrixXd values_, DataKind kind_, BoolMatrix mask_)
    : values(std::move(values_)), kind(kind_), mask(std::move(mask_)) {
  validate();
}

void ItemResponses::validate() const {
  if (values.rows() == 0 || values.cols() == 0) throw DataError("item response matrix is empty");
  if (mask.rows() != values.rows() || mask.cols() != values.cols())
    throw DataError("item mask does not match the response dimensions");
  if (!item_ids.empty() && static_cast<Eigen::Index>(item_ids.size()) != values.cols())
    throw DataError("item id count does not match the number of items");
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (!mask(i, j)) continue;
      if (!std::isfinite(values(i, j))) throw DataError("non-finite observed item response");
      if (kind == DataKind::binary && !is_zero_one(values(i, j)))
        throw DataError("binary item response is not 0/1");
    }
  }
}

// -------------------------------------------------------------------------
// ModelConfig
// -------------------------------------------------------------------------

int ModelConfig::latent_dim() const {
  switch (mode) {
    case Mode::joint: return 2 * K + D;
    case Mode::network_only: return 2 * K;
    case Mode::item_only: return D;
  }
  return 2 * K + D;
}

double ModelConfig::effective_wishart_df() const {
  return std::isnan(wishart_df) ? latent_dim() + 2.0 : wishart_df;
}

MatrixXd ModelConfig::effective_wishart_scale() const {
  if (wishart_scale.size() == 0) return MatrixXd::Identity(latent_dim(), latent_dim());
  return wishart_scale;
}

VectorXd ModelConfig::effective_xi_mean() const {
  if (prior_xi_mean.size() != 0) return prior_xi_mean;
  VectorXd mu = VectorXd::Ones(D + 1);
  mu(D) = 0.0;
  return mu;
}

MatrixXd ModelConfig::effective_xi_cov() const {
  if (prior_xi_cov.size() != 0) return prior_xi_cov;
  return MatrixXd::Identity(D + 1, D + 1);
}

void ModelConfig::validate() const {
  if (uses_network() && K < 1) throw std::invalid_argument("K must be >= 1");
  if (uses_items() && D < 1) throw std::invalid_argument("D must be >= 1");
  if (iterations < 1 || burn_in < 0 || thin < 1)
    throw std::invalid_argument("iterations and thin must be positive, burn_in nonnegative");
  if (iterations <= burn_in) throw std::invalid_argument("empty post-burn-in sample (iterations <= burn_in)");
  if (!(prior_delta_precision > 0.0)) throw std::invalid_argument("prior_delta_precision must be positive");
  if (!(rho_proposal_sd > 0.0)) throw std::invalid_argument("rho_proposal_sd must be positive");
  if (!(prior_sigma_e_shape > 0 && prior_sigma_e_rate > 0 && prior_sigma_eps_shape > 0 && prior_sigma_eps_rate > 0))
    throw std::invalid_argument("gamma prior parameters must be positive");
  const int p = latent_dim();
  if (!(effective_wishart_df() > p - 1)) throw std::invalid_argument("wishart_df must exceed latent dimension - 1");
  const MatrixXd scale = effective_wishart_scale();
  if (scale.rows() != p || scale.cols() != p || !is_spd(scale))
    throw std::invalid_argument("wishart_scale must be a symmetric positive definite (2K+D) matrix");
  if (uses_items()) {
    const VectorXd mu = effective_xi_mean();
    const MatrixXd cov = effective_xi_cov();
    if (mu.size() != D + 1) throw std::invalid_argument("prior_xi_mean must have length D+1");
    if (cov.rows() != D + 1 || cov.cols() != D + 1 || !is_spd(cov))
      throw std::invalid_argument("prior_xi_cov must be a symmetric positive definite (D+1) matrix");
  }
}

// -------------------------------------------------------------------------
// ChainOutput
// -------------------------------------------------------------------------

void ChainOutput::merge(const ChainOutput& other) {
  if (other.n_draws == 0) return;
  if (n_draws == 0) {
    *this = other;
    return;
  }
  if (mode != other.mode || K != other.K || D != other.D)
    throw std::invalid_argument("cannot merge chain outputs of different models");
  const double w1 = static_cast<double>(n_draws) / static_cast<double>(n_draws + other.n_draws);
  const double w2 = 1.0 - w1;
  auto blend = [&](MatrixXd& a, const MatrixXd& b) {
    if (a.size() == 0) return;
    a = w1 * a + w2 * b;
  };
  blend(mean_UVt, other.mean_UVt);
  blend(mean_ThetaAt, other.mean_ThetaAt);
  blend(mean_edge_prob, other.mean_edge_prob);
  blend(mean_Sigma, other.mean_Sigma);
  n_draws += other.n_draws;

  auto append = [](auto& a, const auto& b) { a.insert(a.end(), b.begin(), b.end()); };
  append(scalar_traces.delta, other.scalar_traces.delta);
  append(scalar_traces.rho, other.scalar_traces.rho);
  append(scalar_traces.sigma2_e, other.scalar_traces.sigma2_e);
  append(scalar_traces.sigma2_eps, other.scalar_traces.sigma2_eps);
  append(scalar_traces.beta, other.scalar_traces.beta);
  append(replicate_stats, other.replicate_stats);

  rho_proposals += other.rho_proposals;
  rho_accepts += other.rho_accepts;
  accept_rate_rho = rho_proposals > 0 ? static_cast<double>(rho_accepts) / rho_proposals : 0.0;
}

// -------------------------------------------------------------------------
// Expected-value maps
// -------------------------------------------------------------------------

MatrixXd expected_network(double delta, const MatrixXd& U, const MatrixXd& V) {
  if (U.rows() != V.rows() || U.cols() != V.cols())
    throw std::invalid_argument("expected_network: U and V must have the same shape");
  MatrixXd out = U * V.transpose();
  out.array() += delta;
  return out;
}

MatrixXd expected_responses(const VectorXd& Beta, const MatrixXd& A, const MatrixXd& Theta) {
  if (A.rows() != Beta.size() || A.cols() != Theta.cols())
    throw std::invalid_argument("expected_responses: dimension mismatch");
  MatrixXd out = Theta * A.transpose();
  out.rowwise() += Beta.transpose();
  return out;
}

CovarianceBlocks covariance_blocks(const MatrixXd& Sigma_utheta, int K, int D) {
  const int p = 2 * K + D;
  if (Sigma_utheta.rows() != p || Sigma_utheta.cols() != p)
    throw std::invalid_argument("covariance_blocks: expected a (2K+D) square matrix");
  if (!is_spd(Sigma_utheta)) throw NumericalError("covariance_blocks: matrix is not symmetric positive definite");
  CovarianceBlocks b;
  b.network = Sigma_utheta.topLeftCorner(2 * K, 2 * K);
  b.items = Sigma_utheta.bottomRightCorner(D, D);
  b.cross = Sigma_utheta.bottomLeftCorner(D, 2 * K);
  return b;
}

MatrixXd assemble_covariance(const CovarianceBlocks& blocks) {
  const auto q = blocks.network.rows();
  const auto d = blocks.items.rows();
  MatrixXd out(q + d, q + d);
  out.topLeftCorner(q, q) = blocks.network;
  out.bottomRightCorner(d, d) = blocks.items;
  out.bottomLeftCorner(d, q) = blocks.cross;
  out.topRightCorner(q, d) = blocks.cross.transpose();
  return out;
}

MatrixXd stack_latents(const MatrixXd& U, const MatrixXd& V, const MatrixXd& Theta) {
  const Eigen::Index n = U.size() ? U.rows() : Theta.rows();
  MatrixXd F(n, U.cols() + V.cols() + Theta.cols());
  Eigen::Index c = 0;
  if (U.size()) {
    F.middleCols(c, U.cols()) = U;
    c += U.cols();
  }
  if (V.size()) {
    F.middleCols(c, V.cols()) = V;
    c += V.cols();
  }
  if (Theta.size()) F.middleCols(c, Theta.cols()) = Theta;
  return F;
}

}  // namespace jnirm
