#pragma once

#include "jnirm/random.hpp"
#include "jnirm/types.hpp"

#include <string>
#include <vector>

namespace jnirm {

/// Degrees, density, dyadic dependence, transitivity and balance over the
/// observed cells. Transitivity is the share of ordered two-paths i->j->k
/// (i != k) closed by i->k; balance is the share of mutual dyads among dyads
/// with at least one tie. Undefined statistics are reported as 0 with the
/// matching flag cleared.
NetworkStats network_stats(const NetworkData& net);

/// Column means over observed cells.
VectorXd item_means(const MatrixXd& values, const BoolMatrix& mask);
/// Pairwise-complete covariance (divisor n - 1).
MatrixXd item_covariance(const MatrixXd& values, const BoolMatrix& mask);
/// Sorted distinct observed values per item, or empty when some item has
/// more than `max_categories` of them (treated as a continuous scale).
std::vector<std::vector<double>> observed_categories(const ItemResponses& items, int max_categories = 10);
/// M x C share of observed cells falling on each category, with values
/// binned to the nearest category. NaN past an item's own category count.
MatrixXd category_frequencies(const MatrixXd& values, const BoolMatrix& mask,
                              const std::vector<std::vector<double>>& categories);

/// Mann-Whitney AUC; ties count one half.
double auc(const VectorXd& scores, const VectorXd& labels);

/// Pearson correlation.
double correlation(const VectorXd& x, const VectorXd& y);

// -------------------------------------------------------------------------
// Posterior predictive checks
// -------------------------------------------------------------------------

struct CoverageFlag {
  std::string statistic;
  double observed = 0.0;
  double lower = 0.0;  // 2.5% replicate quantile
  double upper = 0.0;  // 97.5% replicate quantile
  bool covered = false;
};

struct PPCResult {
  std::vector<ReplicateSummary> replicated;
  ReplicateSummary observed;
  std::vector<CoverageFlag> coverage;

  double coverage_rate() const;
};

/// Observed-data statistics computed exactly as for replicates.
ReplicateSummary observed_summary(const NetworkData* network, const ItemResponses* items);

/// Uses the replicates stored by a chain run with generate_replicates,
/// subsampled without replacement to `n_replicates` when there are more.
PPCResult posterior_predictive(const ChainOutput& chain, const NetworkData* network, const ItemResponses* items,
                               int n_replicates, Rng& rng);

struct ItemPPCStats {
  VectorXd observed_means;
  VectorXd replicated_means;  // average over replicates
  MatrixXd observed_cov;
  MatrixXd replicated_cov;    // average over replicates
  MatrixXd observed_category_freq;
  MatrixXd replicated_category_freq;
  double cov_recovery_correlation = 0.0;  // off-diagonal entries, Pearson
};

ItemPPCStats item_ppc_stats(const ItemResponses& items, const std::vector<ReplicateSummary>& replicates);

// -------------------------------------------------------------------------
// Out-of-sample fit and convergence
// -------------------------------------------------------------------------

struct HoldoutOptions {
  int iterations = 0;  // 0 => config.iterations / 5
  int burn_in = -1;    // negative => config.burn_in / 5
  int thin = 0;        // 0 => config.thin
  int threads = 1;
  std::vector<int> rows;  // empty => every row
};

struct HoldoutResult {
  std::vector<int> rows;
  VectorXd auc;          // binary networks; NaN for skipped rows
  VectorXd rmse;         // continuous networks
  std::vector<bool> skipped;  // degenerate labels
  double median = 0.0;   // median AUC (binary) or RMSE (continuous) over scored rows
};

/// Scores one held-out row from a chain fitted with that row masked.
VectorXd holdout_scores(const ChainOutput& chain, int row);

/// Refits with each listed node's outgoing row hidden and scores the hidden
/// cells by the posterior mean edge probability. Item responses stay
/// observed. Each row uses RNG stream 1000 + row.
HoldoutResult row_holdout_cv(const NetworkData& network, const ItemResponses* items, const ModelConfig& config,
                             const HoldoutOptions& options = {});

struct ComparisonResult {
  HoldoutResult joint_holdout;
  HoldoutResult network_holdout;
  double joint_cov_recovery = 0.0;      // item covariance recovery, joint fit
  double item_only_cov_recovery = 0.0;  // same, item-only fit
};

/// Joint versus separate fits on the same data: row-holdout AUC against the
/// network-only model and item-covariance recovery against the item-only
/// model (full-data fits with replicates). `config.mode` is ignored.
ComparisonResult compare_joint_separate(const NetworkData& network, const ItemResponses& items,
                                        const ModelConfig& config, const HoldoutOptions& holdout = {});

/// In-sample AUC of the posterior mean edge probabilities over observed cells.
double in_sample_auc(const ChainOutput& chain, const NetworkData& network);

/// Split-R-hat over equal-length traces.
double gelman_rubin(const std::vector<std::vector<double>>& chains);

double median(std::vector<double> values);
double quantile(std::vector<double> values, double p);

}  // namespace jnirm
