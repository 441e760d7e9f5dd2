#include "jnirm/simulate.hpp"

#include "jnirm/identify.hpp"
#include "jnirm/linalg.hpp"
#include "jnirm/model.hpp"
#include "jnirm/parallel.hpp"
#include "jnirm/sampler.hpp"

#include <cmath>

namespace jnirm {

void GenerativeParams::validate() const {
  if (N < 2) throw std::invalid_argument("N must be at least 2");
  if (K < 1) throw std::invalid_argument("K must be positive");
  if (D < 0) throw std::invalid_argument("D must be nonnegative");
  if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("rho must lie in (-1, 1)");
  if (!(sigma2_e > 0) || !(sigma2_eps > 0)) throw std::invalid_argument("error variances must be positive");
  const int p = 2 * K + D;
  if (Sigma_utheta.rows() != p || Sigma_utheta.cols() != p)
    throw std::invalid_argument("Sigma_utheta must be (2K+D) square");
  if (!is_spd(Sigma_utheta)) throw NumericalError("Sigma_utheta is not symmetric positive definite");
  if (D > 0) {
    if (Beta.size() < 1 || A.rows() != Beta.size() || A.cols() != D)
      throw std::invalid_argument("Beta and A must describe M items with D loadings");
    if (!subscale.empty() && static_cast<Eigen::Index>(subscale.size()) != Beta.size())
      throw std::invalid_argument("subscale map must list every item");
  }
}

SimulatedData simulate_joint(const GenerativeParams& p, Rng& rng) {
  p.validate();
  const int N = p.N, K = p.K, D = p.D;
  const MatrixXd L = robust_llt(p.Sigma_utheta, "Sigma_utheta").matrixL();
  const MatrixXd F = rng.normal_matrix(N, 2 * K + D) * L.transpose();

  SimulatedData out;
  out.U = F.leftCols(K);
  out.V = F.middleCols(K, K);
  out.Theta = F.rightCols(D);
  out.expected_network = expected_network(p.delta, out.U, out.V);
  MatrixXd Z = out.expected_network + draw_dyadic_errors(N, p.rho, p.sigma2_e, rng);
  if (p.network_kind == DataKind::binary) Z = (Z.array() > 0.0).cast<double>().matrix();
  Z.diagonal().setZero();
  out.network = NetworkData(std::move(Z), p.network_kind);

  if (p.has_items()) {
    out.expected_items = expected_responses(p.Beta, p.A, out.Theta);
    MatrixXd Y = out.expected_items + std::sqrt(p.sigma2_eps) * rng.normal_matrix(N, p.Beta.size());
    if (p.item_kind == DataKind::binary) Y = (Y.array() > 0.0).cast<double>().matrix();
    out.items = ItemResponses(std::move(Y), p.item_kind);
  }
  return out;
}

GenerativeParams school56_like_params(int N) {
  GenerativeParams p;
  p.N = N;
  p.K = 2;
  p.D = 3;
  p.delta = -1.2;
  p.rho = 0.3;
  p.sigma2_e = 1.0;
  p.sigma2_eps = 0.35;
  // (u1, u2, v1, v2, theta1, theta2, theta3)
  p.Sigma_utheta.resize(7, 7);
  p.Sigma_utheta << 1.00, 0.00, 0.30, 0.00, 0.60, 0.10, 0.00,  //
      0.00, 1.00, 0.00, 0.20, 0.00, 0.20, 0.10,                  //
      0.30, 0.00, 1.00, 0.00, 0.30, 0.00, 0.15,                  //
      0.00, 0.20, 0.00, 1.00, 0.00, 0.10, 0.00,                  //
      0.60, 0.00, 0.30, 0.00, 1.00, 0.30, 0.20,                  //
      0.10, 0.20, 0.00, 0.10, 0.30, 1.00, 0.25,                  //
      0.00, 0.10, 0.15, 0.00, 0.20, 0.25, 1.00;
  p.Beta.resize(16);
  p.Beta << 3.1, 2.8, 3.6, 4.2, 2.5, 3.9, 3.3, 2.9, 3.7, 4.0, 3.4, 2.7, 3.5, 3.0, 4.1, 3.8;
  const double primary[16] = {0.80, 0.70, 0.90, 0.60, 0.75, 0.85, 0.70, 0.65,
                              0.80, 0.90, 0.60, 0.75, 0.70, 0.85, 0.80, 0.65};
  p.subscale = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2};
  p.A = MatrixXd::Zero(16, 3);
  for (int i = 0; i < 16; ++i) p.A(i, p.subscale[static_cast<std::size_t>(i)]) = primary[i];
  p.network_kind = DataKind::binary;
  p.item_kind = DataKind::continuous;
  return p;
}

MatrixXd density_table(const std::vector<double>& intercepts, const std::vector<double>& variances, int K, int N,
                       Rng& rng) {
  if (K < 1 || N < 2) throw std::invalid_argument("density_table needs K >= 1 and N >= 2");
  MatrixXd out(static_cast<Eigen::Index>(intercepts.size()), static_cast<Eigen::Index>(variances.size()));
  for (std::size_t i = 0; i < intercepts.size(); ++i) {
    for (std::size_t j = 0; j < variances.size(); ++j) {
      if (!(variances[j] >= 0)) throw std::invalid_argument("variances must be nonnegative");
      const double sd = std::sqrt(variances[j]);
      const MatrixXd U = sd * rng.normal_matrix(N, K);
      const MatrixXd V = sd * rng.normal_matrix(N, K);
      const MatrixXd M = U * V.transpose();
      double edges = 0;
      for (int b = 0; b < N; ++b)
        for (int a = 0; a < N; ++a) {
          const double z = rng.normal();
          if (a != b && intercepts[i] + M(a, b) + z > 0) edges += 1;
        }
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          edges / (static_cast<double>(N) * static_cast<double>(N - 1));
    }
  }
  return out;
}

double kurtosis(const VectorXd& x) {
  if (x.size() < 4) throw std::invalid_argument("kurtosis needs at least four values");
  const VectorXd c = x.array() - x.mean();
  const double m2 = c.squaredNorm() / static_cast<double>(x.size());
  if (!(m2 > 0)) throw std::invalid_argument("kurtosis of a constant sample is undefined");
  const double m4 = c.array().pow(4).sum() / static_cast<double>(x.size());
  return m4 / (m2 * m2);
}

MatrixXd column_covariance(const MatrixXd& X) {
  if (X.rows() < 2) throw std::invalid_argument("covariance needs two rows");
  const MatrixXd c = X.rowwise() - X.colwise().mean();
  return c.transpose() * c / static_cast<double>(X.rows() - 1);
}

const ParameterRecovery& RecoveryReport::find(const std::string& name) const {
  for (const auto& p : parameters)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named " + name);
}

namespace {

ParameterRecovery summarize(const std::string& name, double truth, const std::vector<double>& est) {
  ParameterRecovery r;
  r.name = name;
  r.truth = truth;
  r.replications = static_cast<int>(est.size());
  if (est.empty()) {
    r.bias = r.variance = r.mse = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  const double R = static_cast<double>(est.size());
  double mean = 0;
  for (double e : est) mean += e;
  mean /= R;
  double var = 0, mse = 0;
  for (double e : est) {
    var += (e - mean) * (e - mean);
    mse += (e - truth) * (e - truth);
  }
  r.bias = mean - truth;
  r.variance = var / R;
  r.mse = mse / R;
  return r;
}

double trace_mean(const std::vector<double>& t) {
  double s = 0;
  for (double x : t) s += x;
  return t.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(t.size());
}

VectorXd column_kurtosis(const MatrixXd& X) {
  VectorXd k(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) k(j) = kurtosis(X.col(j));
  return k;
}

struct ReplicationResult {
  bool ok = false;
  std::string error;
  std::vector<double> values;  // in parameter order
  std::vector<double> net_err, item_err;
  VectorXd kU, kV, kT;
};

}  // namespace

RecoveryReport recovery_study(const GenerativeParams& params, int n_replications, const ModelConfig& fit_config,
                              const StudyOptions& options) {
  params.validate();
  if (n_replications < 1) throw std::invalid_argument("need at least one replication");
  const bool items = params.has_items();
  ModelConfig cfg = fit_config;
  cfg.K = params.K;
  cfg.D = items ? params.D : cfg.D;
  cfg.mode = items ? (cfg.mode == Mode::item_only ? Mode::item_only : cfg.mode) : Mode::network_only;
  cfg.seed = options.seed;
  cfg.generate_replicates = false;
  cfg.validate();
  const bool fit_net = cfg.uses_network();
  const bool fit_items = cfg.uses_items() && items;

  std::vector<std::string> names;
  std::vector<double> truth;
  if (fit_net) {
    names.push_back("delta");
    truth.push_back(params.delta);
    names.push_back("rho");
    truth.push_back(params.rho);
    if (params.network_kind == DataKind::continuous) {
      names.push_back("sigma2_e");
      truth.push_back(params.sigma2_e);
    }
  }
  if (fit_items) {
    if (params.item_kind == DataKind::continuous) {
      names.push_back("sigma2_eps");
      truth.push_back(params.sigma2_eps);
    }
    for (Eigen::Index i = 0; i < params.Beta.size(); ++i) {
      names.push_back("beta[" + std::to_string(i + 1) + "]");
      truth.push_back(params.Beta(i));
    }
  }

  std::vector<ReplicationResult> reps(static_cast<std::size_t>(n_replications));
  parallel_for(reps.size(), options.threads, [&](std::size_t r) {
    ReplicationResult& out = reps[r];
    try {
      Rng data_rng(options.seed, 2 * r);
      const SimulatedData sim = simulate_joint(params, data_rng);
      const ChainOutput chain =
          run_chain(fit_net ? &sim.network : nullptr, fit_items ? &sim.items : nullptr, cfg, 2 * r + 1);
      const ScalarTraces& t = chain.scalar_traces;
      if (fit_net) {
        const double d = trace_mean(t.delta);
        out.values.push_back(d);
        out.values.push_back(trace_mean(t.rho));
        if (params.network_kind == DataKind::continuous) out.values.push_back(trace_mean(t.sigma2_e));
        for (int b = 0; b < params.N; ++b)
          for (int a = 0; a < params.N; ++a)
            if (a != b) out.net_err.push_back(d + chain.mean_UVt(a, b) - sim.expected_network(a, b));
        const FactorEstimate f = svd_identify(chain.mean_UVt, cfg.K);
        out.kU = column_kurtosis(f.left);
        out.kV = column_kurtosis(f.right);
      }
      if (fit_items) {
        if (params.item_kind == DataKind::continuous) out.values.push_back(trace_mean(t.sigma2_eps));
        VectorXd beta = VectorXd::Zero(params.Beta.size());
        for (const auto& b : t.beta) beta += b;
        beta /= static_cast<double>(t.beta.size());
        for (Eigen::Index i = 0; i < beta.size(); ++i) out.values.push_back(beta(i));
        const MatrixXd ey = chain.mean_ThetaAt.rowwise() + beta.transpose();
        for (Eigen::Index j = 0; j < ey.cols(); ++j)
          for (Eigen::Index i = 0; i < ey.rows(); ++i) out.item_err.push_back(ey(i, j) - sim.expected_items(i, j));
        out.kT = column_kurtosis(svd_identify(chain.mean_ThetaAt, cfg.D).left);
      }
      out.ok = true;
    } catch (const std::exception& e) {
      out.error = "replication " + std::to_string(r) + ": " + e.what();
    }
  });

  RecoveryReport rep;
  rep.N = params.N;
  std::vector<std::vector<double>> est(names.size());
  int ok = 0;
  for (const auto& r : reps) {
    if (!r.ok) {
      ++rep.failures;
      rep.failure_messages.push_back(r.error);
      continue;
    }
    ++ok;
    for (std::size_t k = 0; k < names.size(); ++k) est[k].push_back(r.values[k]);
    rep.network_cell_errors.insert(rep.network_cell_errors.end(), r.net_err.begin(), r.net_err.end());
    rep.item_cell_errors.insert(rep.item_cell_errors.end(), r.item_err.begin(), r.item_err.end());
    auto acc = [&](VectorXd& dst, const VectorXd& src) {
      if (src.size() == 0) return;
      if (dst.size() == 0) dst = VectorXd::Zero(src.size());
      dst += src;
    };
    acc(rep.kurtosis_U, r.kU);
    acc(rep.kurtosis_V, r.kV);
    acc(rep.kurtosis_Theta, r.kT);
  }
  if (ok > 0) {
    rep.kurtosis_U /= ok;
    rep.kurtosis_V /= ok;
    rep.kurtosis_Theta /= ok;
  }
  for (std::size_t k = 0; k < names.size(); ++k) rep.parameters.push_back(summarize(names[k], truth[k], est[k]));
  return rep;
}

std::vector<SparsityRow> sparsity_bias_study(const std::vector<double>& intercepts, const std::vector<int>& N_values,
                                             int n_replications, const ModelConfig& fit_config,
                                             const StudyOptions& options) {
  if (n_replications < 1) throw std::invalid_argument("need at least one replication");
  ModelConfig cfg = fit_config;
  cfg.mode = Mode::network_only;
  cfg.K = 2;
  cfg.seed = options.seed;
  cfg.generate_replicates = false;
  cfg.validate();

  struct Cell {
    int N;
    double intercept;
  };
  std::vector<Cell> cells;
  for (int n : N_values)
    for (double d : intercepts) cells.push_back({n, d});
  const std::size_t R = static_cast<std::size_t>(n_replications);

  struct Rep {
    bool ok = false;
    double delta = 0;
    VectorXd vu, vv, ku, kv;
  };
  std::vector<Rep> reps(cells.size() * R);
  parallel_for(reps.size(), options.threads, [&](std::size_t idx) {
    const Cell& c = cells[idx / R];
    GenerativeParams p;
    p.N = c.N;
    p.K = 2;
    p.D = 0;
    p.delta = c.intercept;
    p.Sigma_utheta = MatrixXd::Identity(4, 4);
    Rng data_rng(options.seed, 2 * idx);
    try {
      const SimulatedData sim = simulate_joint(p, data_rng);
      const ChainOutput chain = run_chain(&sim.network, nullptr, cfg, 2 * idx + 1);
      const FactorEstimate f = svd_identify(chain.mean_UVt, 2);
      Rep& r = reps[idx];
      r.delta = trace_mean(chain.scalar_traces.delta);
      r.vu = column_covariance(f.left).diagonal();
      r.vv = column_covariance(f.right).diagonal();
      r.ku = column_kurtosis(f.left);
      r.kv = column_kurtosis(f.right);
      r.ok = true;
    } catch (const std::exception&) {
      reps[idx].ok = false;
    }
  });

  std::vector<SparsityRow> rows;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    SparsityRow row;
    row.N = cells[ci].N;
    row.intercept = cells[ci].intercept;
    row.bias_var_U = row.bias_var_V = row.kurtosis_U = row.kurtosis_V = VectorXd::Zero(2);
    double d = 0;
    for (std::size_t r = 0; r < R; ++r) {
      const Rep& x = reps[ci * R + r];
      if (!x.ok) {
        ++row.failures;
        continue;
      }
      ++row.replications;
      d += x.delta;
      row.bias_var_U += x.vu;
      row.bias_var_V += x.vv;
      row.kurtosis_U += x.ku;
      row.kurtosis_V += x.kv;
    }
    if (row.replications > 0) {
      const double n = row.replications;
      row.bias_delta = d / n - row.intercept;
      row.bias_var_U = (row.bias_var_U / n).array() - 1.0;
      row.bias_var_V = (row.bias_var_V / n).array() - 1.0;
      row.kurtosis_U /= n;
      row.kurtosis_V /= n;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace jnirm
