#include "jnirm/diagnostics.hpp"

#include "jnirm/parallel.hpp"
#include "jnirm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace jnirm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

NetworkStats network_stats(const NetworkData& net) {
  const Eigen::Index n = net.n_nodes();
  MatrixXd X = MatrixXd::Zero(n, n);
  double observed = 0.0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != j && net.mask(i, j)) {
        X(i, j) = net.edges(i, j);
        observed += 1.0;
      }

  NetworkStats s;
  s.sender_degrees = X.rowwise().sum();
  s.receiver_degrees = X.colwise().sum().transpose();
  s.density = observed > 0 ? X.sum() / observed : 0.0;

  // Dyadic dependence over ordered pairs with both directions observed.
  double sx = 0, sxx = 0, sxy = 0, cnt = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != j && net.mask(i, j) && net.mask(j, i)) {
        sx += X(i, j);
        sxx += X(i, j) * X(i, j);
        sxy += X(i, j) * X(j, i);
        cnt += 1.0;
      }
  const double var = cnt > 0 ? sxx / cnt - (sx / cnt) * (sx / cnt) : 0.0;
  if (cnt > 1 && var > 1e-14) {
    s.dyadic_dependence = (sxy / cnt - (sx / cnt) * (sx / cnt)) / var;
  } else {
    s.dyadic_dependence = 0.0;
    s.dyadic_dependence_defined = false;
  }

  if (net.kind != DataKind::binary) {
    s.transitivity = s.balance = 0.0;
    s.transitivity_defined = s.balance_defined = false;
    return s;
  }

  const MatrixXd X2 = X * X;
  double paths = 0, closed = 0;
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != k) {
        paths += X2(i, k);
        closed += X2(i, k) * X(i, k);
      }
  if (paths > 0) {
    s.transitivity = closed / paths;
  } else {
    s.transitivity_defined = false;
  }

  double mutual = 0, connected = 0;
  for (Eigen::Index b = 0; b < n; ++b)
    for (Eigen::Index a = 0; a < b; ++a) {
      const bool ab = X(a, b) > 0.5, ba = X(b, a) > 0.5;
      if (ab || ba) connected += 1;
      if (ab && ba) mutual += 1;
    }
  if (connected > 0) {
    s.balance = mutual / connected;
  } else {
    s.balance_defined = false;
  }
  return s;
}

VectorXd item_means(const MatrixXd& values, const BoolMatrix& mask) {
  VectorXd out(values.cols());
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    double t = 0, c = 0;
    for (Eigen::Index i = 0; i < values.rows(); ++i)
      if (mask(i, j)) {
        t += values(i, j);
        c += 1;
      }
    out(j) = c > 0 ? t / c : kNaN;
  }
  return out;
}

MatrixXd item_covariance(const MatrixXd& values, const BoolMatrix& mask) {
  const Eigen::Index m = values.cols();
  MatrixXd C(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = a; b < m; ++b) {
      double sa = 0, sb = 0, sab = 0, c = 0;
      for (Eigen::Index i = 0; i < values.rows(); ++i)
        if (mask(i, a) && mask(i, b)) {
          sa += values(i, a);
          sb += values(i, b);
          sab += values(i, a) * values(i, b);
          c += 1;
        }
      C(a, b) = C(b, a) = c > 1 ? (sab - sa * sb / c) / (c - 1) : kNaN;
    }
  return C;
}

std::vector<std::vector<double>> observed_categories(const ItemResponses& items, int max_categories) {
  std::vector<std::vector<double>> out;
  for (Eigen::Index j = 0; j < items.values.cols(); ++j) {
    std::set<double> seen;
    for (Eigen::Index i = 0; i < items.values.rows(); ++i)
      if (items.mask(i, j)) seen.insert(items.values(i, j));
    if (static_cast<int>(seen.size()) > max_categories) return {};
    out.emplace_back(seen.begin(), seen.end());
  }
  return out;
}

MatrixXd category_frequencies(const MatrixXd& values, const BoolMatrix& mask,
                              const std::vector<std::vector<double>>& categories) {
  std::size_t C = 0;
  for (const auto& c : categories) C = std::max(C, c.size());
  MatrixXd F = MatrixXd::Constant(values.cols(), static_cast<Eigen::Index>(C), kNaN);
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    const auto& cats = categories.at(static_cast<std::size_t>(j));
    if (cats.empty()) continue;
    VectorXd counts = VectorXd::Zero(static_cast<Eigen::Index>(cats.size()));
    double total = 0;
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      if (!mask(i, j)) continue;
      std::size_t best = 0;
      for (std::size_t c = 1; c < cats.size(); ++c)
        if (std::abs(values(i, j) - cats[c]) < std::abs(values(i, j) - cats[best])) best = c;
      counts(static_cast<Eigen::Index>(best)) += 1;
      total += 1;
    }
    for (Eigen::Index c = 0; c < counts.size(); ++c) F(j, c) = total > 0 ? counts(c) / total : kNaN;
  }
  return F;
}

double auc(const VectorXd& scores, const VectorXd& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
  const Eigen::Index n = scores.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores(a) < scores(b); });
  std::vector<double> rank(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores(idx[j + 1]) == scores(idx[i])) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[static_cast<std::size_t>(idx[k])] = mid;
    i = j + 1;
  }
  double n_pos = 0, rank_sum = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (labels(i) > 0.5) {
      n_pos += 1;
      rank_sum += rank[static_cast<std::size_t>(i)];
    }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("AUC needs both label classes");
  return (rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg);
}

double correlation(const VectorXd& x, const VectorXd& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("correlation needs equal lengths >= 2");
  const VectorXd a = x.array() - x.mean();
  const VectorXd b = y.array() - y.mean();
  const double den = std::sqrt(a.squaredNorm() * b.squaredNorm());
  if (den == 0) return kNaN;
  return a.dot(b) / den;
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

double quantile(std::vector<double> v, double p) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// -------------------------------------------------------------------------
// Posterior predictive checks
// -------------------------------------------------------------------------

ReplicateSummary observed_summary(const NetworkData* network, const ItemResponses* items) {
  ReplicateSummary s;
  if (network) s.network = network_stats(*network);
  if (items) {
    s.item_means = item_means(items->values, items->mask);
    s.item_cov = item_covariance(items->values, items->mask);
    const auto cats = observed_categories(*items);
    if (!cats.empty()) s.item_category_freq = category_frequencies(items->values, items->mask, cats);
  }
  return s;
}

namespace {

struct NamedStat {
  std::string name;
  double value;
  bool defined;
};

double sd_of(const VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
}

std::vector<NamedStat> flatten(const ReplicateSummary& s) {
  std::vector<NamedStat> out;
  if (s.network) {
    const NetworkStats& n = *s.network;
    out.push_back({"density", n.density, true});
    out.push_back({"sender_degree_sd", sd_of(n.sender_degrees), true});
    out.push_back({"receiver_degree_sd", sd_of(n.receiver_degrees), true});
    out.push_back({"dyadic_dependence", n.dyadic_dependence, n.dyadic_dependence_defined});
    out.push_back({"transitivity", n.transitivity, n.transitivity_defined});
    out.push_back({"balance", n.balance, n.balance_defined});
  }
  for (Eigen::Index i = 0; i < s.item_means.size(); ++i)
    out.push_back({"item_mean[" + std::to_string(i + 1) + "]", s.item_means(i), !std::isnan(s.item_means(i))});
  for (Eigen::Index a = 0; a < s.item_cov.rows(); ++a)
    for (Eigen::Index b = a; b < s.item_cov.cols(); ++b)
      out.push_back({"item_cov[" + std::to_string(a + 1) + "," + std::to_string(b + 1) + "]", s.item_cov(a, b),
                     !std::isnan(s.item_cov(a, b))});
  for (Eigen::Index a = 0; a < s.item_category_freq.rows(); ++a)
    for (Eigen::Index c = 0; c < s.item_category_freq.cols(); ++c)
      out.push_back({"item_category[" + std::to_string(a + 1) + "," + std::to_string(c + 1) + "]",
                     s.item_category_freq(a, c), !std::isnan(s.item_category_freq(a, c))});
  return out;
}

}  // namespace

double PPCResult::coverage_rate() const {
  if (coverage.empty()) return kNaN;
  double c = 0;
  for (const auto& f : coverage) c += f.covered;
  return c / static_cast<double>(coverage.size());
}

PPCResult posterior_predictive(const ChainOutput& chain, const NetworkData* network, const ItemResponses* items,
                               int n_replicates, Rng& rng) {
  if (chain.replicate_stats.empty())
    throw std::invalid_argument("chain has no stored replicates (run with generate_replicates)");
  if (n_replicates < 1) throw std::invalid_argument("n_replicates must be positive");
  PPCResult out;
  const std::size_t total = chain.replicate_stats.size();
  if (static_cast<std::size_t>(n_replicates) >= total) {
    out.replicated = chain.replicate_stats;
  } else {
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n_replicates); ++i) {
      const auto j = i + static_cast<std::size_t>(rng.uniform() * static_cast<double>(total - i));
      std::swap(idx[i], idx[std::min(j, total - 1)]);
    }
    idx.resize(static_cast<std::size_t>(n_replicates));
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) out.replicated.push_back(chain.replicate_stats[i]);
  }

  out.observed = observed_summary(chain.mode == Mode::item_only ? nullptr : network,
                                  chain.mode == Mode::network_only ? nullptr : items);
  const auto obs = flatten(out.observed);
  std::vector<std::vector<double>> reps(obs.size());
  for (const auto& r : out.replicated) {
    const auto f = flatten(r);
    for (std::size_t k = 0; k < std::min(f.size(), obs.size()); ++k)
      if (f[k].defined) reps[k].push_back(f[k].value);
  }
  for (std::size_t k = 0; k < obs.size(); ++k) {
    if (!obs[k].defined || reps[k].empty()) continue;
    CoverageFlag flag;
    flag.statistic = obs[k].name;
    flag.observed = obs[k].value;
    flag.lower = quantile(reps[k], 0.025);
    flag.upper = quantile(reps[k], 0.975);
    flag.covered = flag.observed >= flag.lower && flag.observed <= flag.upper;
    out.coverage.push_back(flag);
  }
  return out;
}

ItemPPCStats item_ppc_stats(const ItemResponses& items, const std::vector<ReplicateSummary>& replicates) {
  const Eigen::Index m = items.n_items();
  if (m < 2) throw std::invalid_argument("item covariance recovery needs at least two items");
  if (replicates.empty()) throw std::invalid_argument("no replicates");
  ItemPPCStats s;
  s.observed_means = item_means(items.values, items.mask);
  s.observed_cov = item_covariance(items.values, items.mask);
  const auto cats = observed_categories(items);
  if (!cats.empty()) s.observed_category_freq = category_frequencies(items.values, items.mask, cats);

  s.replicated_means = VectorXd::Zero(m);
  s.replicated_cov = MatrixXd::Zero(m, m);
  const double w = 1.0 / static_cast<double>(replicates.size());
  bool have_freq = s.observed_category_freq.size() > 0;
  for (const auto& r : replicates) {
    if (r.item_means.size() != m || r.item_cov.rows() != m) throw std::invalid_argument("replicate shape mismatch");
    s.replicated_means += w * r.item_means;
    s.replicated_cov += w * r.item_cov;
    if (r.item_category_freq.size() == 0) have_freq = false;
  }
  if (have_freq && s.observed_category_freq.size() > 0) {
    s.replicated_category_freq = MatrixXd::Zero(s.observed_category_freq.rows(), s.observed_category_freq.cols());
    for (const auto& r : replicates) s.replicated_category_freq += w * r.item_category_freq;
  }

  VectorXd a(m * (m - 1) / 2), b(m * (m - 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j, ++k) {
      a(k) = s.observed_cov(i, j);
      b(k) = s.replicated_cov(i, j);
    }
  s.cov_recovery_correlation = a.size() >= 2 ? correlation(a, b) : kNaN;
  return s;
}

// -------------------------------------------------------------------------
// Holdout
// -------------------------------------------------------------------------

VectorXd holdout_scores(const ChainOutput& chain, int row) {
  if (chain.mean_edge_prob.size() > 0) return chain.mean_edge_prob.row(row).transpose();
  VectorXd out = chain.mean_UVt.row(row).transpose();
  double delta = 0;
  for (double d : chain.scalar_traces.delta) delta += d;
  if (!chain.scalar_traces.delta.empty()) delta /= static_cast<double>(chain.scalar_traces.delta.size());
  return out.array() + delta;
}

HoldoutResult row_holdout_cv(const NetworkData& network, const ItemResponses* items, const ModelConfig& config,
                             const HoldoutOptions& options) {
  network.validate();
  const int n = network.n_nodes();
  if (n < 3) throw DataError("network too small for row holdout");
  if (!config.uses_network()) throw std::invalid_argument("row holdout needs a network mode");

  ModelConfig cfg = config;
  cfg.iterations = options.iterations > 0 ? options.iterations : std::max(2, config.iterations / 5);
  cfg.burn_in = options.burn_in >= 0 ? options.burn_in : config.burn_in / 5;
  if (options.thin > 0) cfg.thin = options.thin;
  cfg.generate_replicates = false;
  cfg.validate();

  HoldoutResult res;
  res.rows = options.rows;
  if (res.rows.empty()) {
    res.rows.resize(static_cast<std::size_t>(n));
    std::iota(res.rows.begin(), res.rows.end(), 0);
  }
  for (int r : res.rows)
    if (r < 0 || r >= n) throw std::out_of_range("holdout row out of range");
  const std::size_t R = res.rows.size();
  const bool binary = network.kind == DataKind::binary;
  res.auc = VectorXd::Constant(static_cast<Eigen::Index>(R), kNaN);
  res.rmse = VectorXd::Constant(static_cast<Eigen::Index>(R), kNaN);
  res.skipped.assign(R, false);

  auto score_row = [&](std::size_t idx) {
    const int row = res.rows[idx];
    std::vector<Eigen::Index> cols;
    for (int b = 0; b < n; ++b)
      if (b != row && network.mask(row, b)) cols.push_back(b);
    VectorXd labels(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) labels(static_cast<Eigen::Index>(k)) = network.edges(row, cols[k]);
    if (cols.empty() || (binary && (labels.sum() == 0 || labels.sum() == static_cast<double>(labels.size())))) {
      res.skipped[idx] = true;
      return;
    }
    const NetworkData masked = network.without_row(row);
    const ChainOutput chain = run_chain(&masked, items, cfg, 1000 + static_cast<std::uint64_t>(row));
    const VectorXd all = holdout_scores(chain, row);
    VectorXd scores(labels.size());
    for (std::size_t k = 0; k < cols.size(); ++k) scores(static_cast<Eigen::Index>(k)) = all(cols[k]);
    if (binary)
      res.auc(static_cast<Eigen::Index>(idx)) = auc(scores, labels);
    else
      res.rmse(static_cast<Eigen::Index>(idx)) = std::sqrt((scores - labels).squaredNorm() / labels.size());
  };

  parallel_for(R, options.threads, score_row);

  std::vector<double> vals;
  const VectorXd& metric = binary ? res.auc : res.rmse;
  for (Eigen::Index i = 0; i < metric.size(); ++i)
    if (!std::isnan(metric(i))) vals.push_back(metric(i));
  res.median = median(vals);
  return res;
}

ComparisonResult compare_joint_separate(const NetworkData& network, const ItemResponses& items,
                                        const ModelConfig& config, const HoldoutOptions& holdout) {
  ComparisonResult out;
  ModelConfig joint = config;
  joint.mode = Mode::joint;
  ModelConfig net_only = config;
  net_only.mode = Mode::network_only;
  ModelConfig item_only = config;
  item_only.mode = Mode::item_only;

  out.joint_holdout = row_holdout_cv(network, &items, joint, holdout);
  out.network_holdout = row_holdout_cv(network, nullptr, net_only, holdout);

  joint.generate_replicates = item_only.generate_replicates = true;
  std::vector<ChainOutput> fits(2);
  parallel_for(2, holdout.threads, [&](std::size_t i) {
    fits[i] = i == 0 ? run_chain(&network, &items, joint, 1) : run_chain(nullptr, &items, item_only, 2);
  });
  out.joint_cov_recovery = item_ppc_stats(items, fits[0].replicate_stats).cov_recovery_correlation;
  out.item_only_cov_recovery = item_ppc_stats(items, fits[1].replicate_stats).cov_recovery_correlation;
  return out;
}

double in_sample_auc(const ChainOutput& chain, const NetworkData& network) {
  if (chain.mean_edge_prob.size() == 0) throw std::invalid_argument("chain has no edge probabilities");
  std::vector<double> s, l;
  for (Eigen::Index j = 0; j < network.edges.cols(); ++j)
    for (Eigen::Index i = 0; i < network.edges.rows(); ++i)
      if (i != j && network.mask(i, j)) {
        s.push_back(chain.mean_edge_prob(i, j));
        l.push_back(network.edges(i, j));
      }
  return auc(Eigen::Map<VectorXd>(s.data(), static_cast<Eigen::Index>(s.size())),
             Eigen::Map<VectorXd>(l.data(), static_cast<Eigen::Index>(l.size())));
}

double gelman_rubin(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw std::invalid_argument("gelman_rubin needs at least two chains");
  const std::size_t len = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != len) throw std::invalid_argument("chains must have equal length");
  const std::size_t half = len / 2;
  if (half < 2) throw std::invalid_argument("chains too short");

  std::vector<double> means, vars;
  for (const auto& c : chains) {
    for (int part = 0; part < 2; ++part) {
      const auto begin = c.begin() + static_cast<std::ptrdiff_t>(part == 0 ? 0 : len - half);
      const double m = std::accumulate(begin, begin + static_cast<std::ptrdiff_t>(half), 0.0) / static_cast<double>(half);
      double v = 0;
      for (auto it = begin; it != begin + static_cast<std::ptrdiff_t>(half); ++it) v += (*it - m) * (*it - m);
      means.push_back(m);
      vars.push_back(v / static_cast<double>(half - 1));
    }
  }
  const double n = static_cast<double>(half);
  const double W = std::accumulate(vars.begin(), vars.end(), 0.0) / static_cast<double>(vars.size());
  if (!(W > 0)) throw std::invalid_argument("zero within-chain variance");
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
  double B = 0;
  for (double m : means) B += (m - grand) * (m - grand);
  B *= n / static_cast<double>(means.size() - 1);
  const double var_plus = (n - 1) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

}  // namespace jnirm
