#include "commands.hpp"

#include "manifest.hpp"

#include "jnirm/diagnostics.hpp"
#include "jnirm/identify.hpp"
#include "jnirm/inference.hpp"
#include "jnirm/io.hpp"
#include "jnirm/sampler.hpp"
#include "jnirm/simulate.hpp"
#include "jnirm/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

namespace jnirm::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

int default_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// -------------------------------------------------------------------------
// Option groups
// -------------------------------------------------------------------------

struct CommonOptions {
  std::optional<std::uint64_t> seed;
  int threads = default_threads();
  std::string out = "jnirm_out";
};

void add_common(CLI::App* app, CommonOptions& c) {
  app->add_option("--seed", c.seed, "Random seed (generated and recorded when absent)");
  app->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
}

struct ModelOptions {
  ModelConfig config;
  std::string mode = "joint";
  bool no_adapt_rho = false;
  bool no_center_theta = false;
  bool exclude_diagonal = false;
};

void add_model(CLI::App* app, ModelOptions& m, bool with_dims = true, bool with_mode = true) {
  ModelConfig& c = m.config;
  if (with_dims) {
    app->add_option("--k", c.K, "Network latent dimensions")->capture_default_str();
    app->add_option("--d", c.D, "Item factors")->capture_default_str();
  }
  if (with_mode)
    app->add_option("--mode", m.mode, "joint | network-only | item-only")
        ->check(CLI::IsMember({"joint", "network-only", "network_only", "item-only", "item_only"}))
        ->capture_default_str();
  app->add_option("--iters", c.iterations, "Gibbs iterations")->capture_default_str();
  app->add_option("--burn", c.burn_in, "Burn-in iterations")->capture_default_str();
  app->add_option("--thin", c.thin, "Thinning interval")->capture_default_str();
  app->add_option("--delta-precision", c.prior_delta_precision, "Prior precision of the intercept")
      ->capture_default_str();
  app->add_option("--wishart-df", c.wishart_df, "Inverse-Wishart degrees of freedom (default 2K+D+2)");
  app->add_option("--sigma-e-shape", c.prior_sigma_e_shape)->capture_default_str();
  app->add_option("--sigma-e-rate", c.prior_sigma_e_rate)->capture_default_str();
  app->add_option("--sigma-eps-shape", c.prior_sigma_eps_shape)->capture_default_str();
  app->add_option("--sigma-eps-rate", c.prior_sigma_eps_rate)->capture_default_str();
  app->add_option("--rho-proposal-sd", c.rho_proposal_sd)->capture_default_str();
  app->add_flag("--no-adapt-rho", m.no_adapt_rho, "Keep the rho proposal scale fixed");
  app->add_flag("--no-center-theta", m.no_center_theta, "Skip recentring the item factors");
  app->add_flag("--exclude-diagonal", m.exclude_diagonal, "Leave diagonal cells out of the network likelihood");
  app->add_flag("--zero-cross-cov", c.fix_cross_cov_zero, "Fix the network/item cross covariance at zero");
}

ModelConfig finish_model(const ModelOptions& m, std::uint64_t seed) {
  ModelConfig c = m.config;
  c.mode = parse_mode(m.mode);
  c.adapt_rho = !m.no_adapt_rho;
  c.center_theta = !m.no_center_theta;
  c.paper_exact_shape = !m.exclude_diagonal;
  c.seed = seed;
  if (!c.uses_network()) c.K = 0;
  if (!c.uses_items()) c.D = 0;
  c.validate();
  return c;
}

struct DataOptions {
  std::string network;
  std::string items;
  std::string network_kind = "binary";
  std::string item_kind = "continuous";
  int nodes = 0;
};

void add_data(CLI::App* app, DataOptions& d) {
  app->add_option("--network", d.network, "Adjacency matrix or edge-list CSV");
  app->add_option("--network-kind", d.network_kind)->check(CLI::IsMember({"binary", "continuous"}))->capture_default_str();
  app->add_option("--items", d.items, "Item responses CSV (persons x items)");
  app->add_option("--item-kind", d.item_kind)->check(CLI::IsMember({"binary", "continuous"}))->capture_default_str();
  app->add_option("--nodes", d.nodes, "Node count for an edge list");
}

struct HoldoutCli {
  int rows = 0;
  int iterations = 0;
  int burn_in = -1;
};

void add_holdout(CLI::App* app, HoldoutCli& h) {
  app->add_option("--holdout-rows", h.rows, "Rows held out, chosen at random (0 = every row)")->capture_default_str();
  app->add_option("--holdout-iters", h.iterations, "Iterations per holdout fit (0 = iters / 5)")->capture_default_str();
  app->add_option("--holdout-burn", h.burn_in, "Burn-in per holdout fit (negative = burn / 5)")->capture_default_str();
}

HoldoutOptions finish_holdout(const HoldoutCli& h, int n_nodes, std::uint64_t seed, int threads) {
  HoldoutOptions o;
  o.iterations = h.iterations;
  o.burn_in = h.burn_in;
  o.threads = threads;
  if (h.rows < 0 || h.rows > n_nodes) throw std::invalid_argument("--holdout-rows must lie in [0, N]");
  if (h.rows > 0 && h.rows < n_nodes) {
    std::vector<int> all(static_cast<std::size_t>(n_nodes));
    for (int i = 0; i < n_nodes; ++i) all[static_cast<std::size_t>(i)] = i;
    Rng rng(seed, 7);
    for (int i = n_nodes - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.uniform() * (i + 1));
      std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(std::min(j, i))]);
    }
    o.rows.assign(all.begin(), all.begin() + h.rows);
    std::sort(o.rows.begin(), o.rows.end());
  }
  return o;
}

// -------------------------------------------------------------------------
// Run context
// -------------------------------------------------------------------------

struct RunContext {
  RunManifest manifest;
  std::string dir;
  std::uint64_t seed = 0;

  std::string output(const std::string& name) {
    manifest.add_output(name);
    return dir + "/" + name;
  }
  void finish() { manifest.write(dir); }
};

std::string g_command_line;

void begin(RunContext& ctx, const CLI::App* app, const CommonOptions& c) {
  ctx.dir = c.out;
  fs::create_directories(ctx.dir);
  bool generated = false;
  if (c.seed) {
    ctx.seed = *c.seed;
  } else {
    std::random_device rd;
    ctx.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    generated = true;
  }
  ctx.manifest.set_seed(ctx.seed, generated);
  ctx.manifest.set_command_line(g_command_line);
  ctx.manifest.set_config(app->config_to_str(true, false));
}

struct LoadedData {
  std::optional<NetworkData> network;
  std::optional<ItemResponses> items;
  const NetworkData* net() const { return network ? &*network : nullptr; }
  const ItemResponses* itm() const { return items ? &*items : nullptr; }
};

LoadedData load_data(const DataOptions& d, bool need_network, bool need_items, RunManifest* manifest) {
  LoadedData out;
  if (need_network) {
    if (d.network.empty()) throw std::invalid_argument("--network is required");
    out.network = read_network(d.network, parse_data_kind(d.network_kind), d.nodes);
    if (manifest) manifest->add_input(d.network);
  }
  if (need_items) {
    if (d.items.empty()) throw std::invalid_argument("--items is required");
    out.items = read_items(d.items, parse_data_kind(d.item_kind));
    if (manifest) manifest->add_input(d.items);
  }
  if (out.network && out.items && out.network->n_nodes() != out.items->n_persons())
    throw DataError("network has " + std::to_string(out.network->n_nodes()) + " nodes but " + d.items + " has " +
                    std::to_string(out.items->n_persons()) + " rows");
  return out;
}

// -------------------------------------------------------------------------
// JSON helpers
// -------------------------------------------------------------------------

json to_json(const VectorXd& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(std::isnan(v(i)) ? json(nullptr) : json(v(i)));
  return j;
}

json to_json(const MatrixXd& M) {
  json j = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) j.push_back(to_json(VectorXd(M.row(i).transpose())));
  return j;
}

double number(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

VectorXd vector_from(const json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i]);
  return v;
}

MatrixXd matrix_from(const json& j) {
  if (j.empty()) return MatrixXd();
  MatrixXd M(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t i = 0; i < j.size(); ++i) M.row(static_cast<Eigen::Index>(i)) = vector_from(j[i]).transpose();
  return M;
}

json to_json(const NetworkStats& s) {
  return json{{"sender_degrees", to_json(s.sender_degrees)},
              {"receiver_degrees", to_json(s.receiver_degrees)},
              {"density", s.density},
              {"dyadic_dependence", s.dyadic_dependence_defined ? json(s.dyadic_dependence) : json(nullptr)},
              {"transitivity", s.transitivity_defined ? json(s.transitivity) : json(nullptr)},
              {"balance", s.balance_defined ? json(s.balance) : json(nullptr)}};
}

NetworkStats network_stats_from(const json& j) {
  NetworkStats s;
  s.sender_degrees = vector_from(j.at("sender_degrees"));
  s.receiver_degrees = vector_from(j.at("receiver_degrees"));
  s.density = number(j.at("density"));
  s.dyadic_dependence_defined = !j.at("dyadic_dependence").is_null();
  s.dyadic_dependence = s.dyadic_dependence_defined ? number(j["dyadic_dependence"]) : 0.0;
  s.transitivity_defined = !j.at("transitivity").is_null();
  s.transitivity = s.transitivity_defined ? number(j["transitivity"]) : 0.0;
  s.balance_defined = !j.at("balance").is_null();
  s.balance = s.balance_defined ? number(j["balance"]) : 0.0;
  return s;
}

json to_json(const ReplicateSummary& r) {
  json j = json::object();
  if (r.network) j["network"] = to_json(*r.network);
  if (r.item_means.size()) {
    j["item_means"] = to_json(r.item_means);
    j["item_cov"] = to_json(r.item_cov);
    if (r.item_category_freq.size()) j["item_category_freq"] = to_json(r.item_category_freq);
  }
  return j;
}

ReplicateSummary replicate_from(const json& j) {
  ReplicateSummary r;
  if (j.contains("network")) r.network = network_stats_from(j["network"]);
  if (j.contains("item_means")) {
    r.item_means = vector_from(j["item_means"]);
    r.item_cov = matrix_from(j["item_cov"]);
    if (j.contains("item_category_freq")) r.item_category_freq = matrix_from(j["item_category_freq"]);
  }
  return r;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

json trace_summary(const std::vector<double>& draws) {
  if (draws.empty()) return nullptr;
  double mean = 0.0;
  for (double x : draws) mean += x;
  mean /= static_cast<double>(draws.size());
  double ss = 0.0;
  for (double x : draws) ss += (x - mean) * (x - mean);
  const double sd = draws.size() > 1 ? std::sqrt(ss / static_cast<double>(draws.size() - 1)) : 0.0;
  return json{{"mean", mean}, {"sd", sd}, {"q025", quantile(draws, 0.025)}, {"q975", quantile(draws, 0.975)}};
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw std::invalid_argument("not an integer list: " + s);
    }
  }
  return out;
}

// -------------------------------------------------------------------------
// fit
// -------------------------------------------------------------------------

class StderrProgress : public ProgressSink {
 public:
  void on_progress(const ProgressEvent& e) override {
    std::cerr << "iteration " << e.iteration << "  loglik " << e.log_likelihood << "  rho acceptance "
              << e.rho_accept_rate << '\n';
  }
};

struct FitOptions {
  CommonOptions common;
  ModelOptions model;
  DataOptions data;
  int chains = 1;
  bool replicates = false;
  bool progress = false;
  std::string subscales;
  int scree_rank = 10;
};

void write_traces(const std::string& path, const ChainOutput& out, const ModelConfig& cfg,
                  const LoadedData& data) {
  const ScalarTraces& t = out.scalar_traces;
  std::vector<std::string> header;
  std::vector<const std::vector<double>*> cols;
  if (cfg.uses_network()) {
    header.insert(header.end(), {"delta", "rho"});
    cols.insert(cols.end(), {&t.delta, &t.rho});
    if (data.network->kind == DataKind::continuous) {
      header.push_back("sigma2_e");
      cols.push_back(&t.sigma2_e);
    }
  }
  Eigen::Index M = 0;
  if (cfg.uses_items()) {
    if (data.items->kind == DataKind::continuous) {
      header.push_back("sigma2_eps");
      cols.push_back(&t.sigma2_eps);
    }
    M = data.items->n_items();
    for (Eigen::Index i = 0; i < M; ++i) header.push_back("beta" + std::to_string(i + 1));
  }
  const auto n = static_cast<Eigen::Index>(t.size());
  MatrixXd table(n, static_cast<Eigen::Index>(cols.size()) + M);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c)
      table(r, static_cast<Eigen::Index>(c)) = (*cols[c])[static_cast<std::size_t>(r)];
    if (M > 0) table.row(r).tail(M) = t.beta[static_cast<std::size_t>(r)].transpose();
  }
  write_csv(path, table, header);
}

std::vector<std::string> latent_labels(int K, int D) {
  std::vector<std::string> out;
  for (int k = 0; k < K; ++k) out.push_back("u" + std::to_string(k + 1));
  for (int k = 0; k < K; ++k) out.push_back("v" + std::to_string(k + 1));
  for (int d = 0; d < D; ++d) out.push_back("theta" + std::to_string(d + 1));
  return out;
}

void cmd_fit(CLI::App* app, const FitOptions& o) {
  RunContext ctx;
  begin(ctx, app, o.common);
  const ModelConfig cfg = finish_model(o.model, ctx.seed);
  if (o.chains < 1) throw std::invalid_argument("--chains must be positive");
  const LoadedData data =
      ctx.manifest.stage("load", [&] { return load_data(o.data, cfg.uses_network(), cfg.uses_items(), &ctx.manifest); });
  std::vector<int> subscale;
  if (!o.subscales.empty()) {
    if (!cfg.uses_items()) throw std::invalid_argument("--subscales needs item responses");
    subscale = parse_int_list(o.subscales);
    if (static_cast<int>(subscale.size()) != data.items->n_items())
      throw std::invalid_argument("--subscales lists " + std::to_string(subscale.size()) + " items, data has " +
                                  std::to_string(data.items->n_items()));
    for (int& s : subscale) {
      if (s < 1 || s > cfg.D) throw std::invalid_argument("--subscales entries must lie in 1..D");
      --s;
    }
  }

  ModelConfig run_cfg = cfg;
  run_cfg.generate_replicates = o.replicates;
  std::vector<ChainOutput> chains = ctx.manifest.stage("sample", [&] {
    if (o.chains == 1 && o.progress) {
      StderrProgress sink;
      return std::vector<ChainOutput>{run_chain(data.net(), data.itm(), run_cfg, 0, &sink)};
    }
    return run_chains(data.net(), data.itm(), run_cfg, o.chains, o.common.threads, 0);
  });
  ChainOutput out = chains.front();
  for (std::size_t i = 1; i < chains.size(); ++i) out.merge(chains[i]);

  json summary;
  summary["mode"] = to_string(cfg.mode);
  summary["K"] = cfg.K;
  summary["D"] = cfg.D;
  summary["chains"] = o.chains;
  summary["retained_draws"] = out.n_draws;
  summary["seed"] = ctx.seed;
  json scalars = json::object();
  const auto rhat = [&](auto member) -> json {
    if (chains.size() < 2) return nullptr;
    std::vector<std::vector<double>> traces;
    for (const auto& c : chains) traces.push_back(c.scalar_traces.*member);
    return gelman_rubin(traces);
  };
  const auto add_scalar = [&](const std::string& name, auto member) {
    json s = trace_summary(out.scalar_traces.*member);
    s["rhat"] = rhat(member);
    scalars[name] = s;
  };

  ctx.manifest.stage("identify", [&] {
    if (cfg.uses_network()) {
      add_scalar("delta", &ScalarTraces::delta);
      add_scalar("rho", &ScalarTraces::rho);
      if (data.network->kind == DataKind::continuous) add_scalar("sigma2_e", &ScalarTraces::sigma2_e);
      summary["rho_acceptance"] = out.accept_rate_rho;
      const FactorEstimate f = svd_identify(out.mean_UVt, cfg.K);
      write_csv(ctx.output("U_hat.csv"), f.left, numbered("u", cfg.K));
      write_csv(ctx.output("V_hat.csv"), f.right, numbered("v", cfg.K));
      summary["network_singular_values"] = to_json(f.singular_values);
      summary["network_subspace_ill_determined"] = f.subspace_ill_determined;
      const int r = std::min(o.scree_rank, data.network->n_nodes());
      const VectorXd ve = variance_explained(out.mean_UVt, r);
      MatrixXd scree(r, 2);
      for (int k = 0; k < r; ++k) scree.row(k) << k + 1, ve(k);
      write_csv(ctx.output("scree.csv"), scree, {"dimension", "proportion"});
      if (data.network->kind == DataKind::binary) {
        write_csv(ctx.output("edge_prob.csv"), out.mean_edge_prob, numbered("node", data.network->n_nodes()));
        summary["in_sample_auc"] = in_sample_auc(out, *data.network);
      } else {
        double delta = 0.0;
        for (double x : out.scalar_traces.delta) delta += x;
        delta /= static_cast<double>(out.scalar_traces.delta.size());
        write_csv(ctx.output("expected_network.csv"), (out.mean_UVt.array() + delta).matrix(),
                  numbered("node", data.network->n_nodes()));
      }
    }
    if (cfg.uses_items()) {
      if (data.items->kind == DataKind::continuous) add_scalar("sigma2_eps", &ScalarTraces::sigma2_eps);
      const auto M = data.items->n_items();
      json beta = json::array();
      for (Eigen::Index i = 0; i < M; ++i) {
        std::vector<double> draws;
        for (const auto& b : out.scalar_traces.beta) draws.push_back(b(i));
        json b = trace_summary(draws);
        b["item"] = data.items->item_ids[static_cast<std::size_t>(i)];
        beta.push_back(b);
      }
      summary["beta"] = beta;
      const FactorEstimate f = svd_identify(out.mean_ThetaAt, cfg.D);
      write_csv(ctx.output("theta_hat.csv"), f.left, numbered("theta", cfg.D));
      write_csv(ctx.output("A_hat.csv"), f.right, numbered("a", cfg.D), "item", data.items->item_ids);
      summary["item_singular_values"] = to_json(f.singular_values);
      summary["item_subspace_ill_determined"] = f.subspace_ill_determined;
      if (!subscale.empty()) {
        const RotationResult rot = target_rotate(f.right, subscale);
        write_csv(ctx.output("A_rotated.csv"), rot.rotated_loadings, numbered("a", cfg.D), "item",
                  data.items->item_ids);
        write_csv(ctx.output("factor_correlation.csv"), rot.factor_correlation, numbered("f", cfg.D));
        summary["rotation"] = json{{"criterion", rot.criterion}, {"iterations", rot.iterations},
                                   {"converged", rot.converged}};
      }
    }
    summary["scalars"] = scalars;
    const auto labels = latent_labels(cfg.K, cfg.D);
    write_csv(ctx.output("sigma_mean.csv"), out.mean_Sigma, labels, "latent", labels);
  });

  ctx.manifest.stage("write", [&] {
    write_traces(ctx.output("traces.csv"), out, cfg, data);
    if (o.replicates) {
      json reps = json::array();
      for (const auto& r : out.replicate_stats) reps.push_back(to_json(r));
      write_json(ctx.output("replicates.json"), reps);
    }
    json run;
    run["mode"] = to_string(cfg.mode);
    run["network"] = o.data.network.empty() ? json(nullptr) : json(fs::absolute(o.data.network).string());
    run["network_kind"] = o.data.network_kind;
    run["items"] = o.data.items.empty() ? json(nullptr) : json(fs::absolute(o.data.items).string());
    run["item_kind"] = o.data.item_kind;
    run["nodes"] = o.data.nodes;
    run["K"] = cfg.K;
    run["D"] = cfg.D;
    write_json(ctx.output("run.json"), run);
    write_json(ctx.output("summary.json"), summary);
  });
  ctx.finish();
}

// -------------------------------------------------------------------------
// test / cca
// -------------------------------------------------------------------------

struct DependenceOptions {
  CommonOptions common;
  std::string run;
  std::string network_factors;
  std::string item_factors;
  std::string method = "bartlett";
};

void add_dependence(CLI::App* app, DependenceOptions& o) {
  app->add_option("--out", o.common.out, "Output directory")->capture_default_str();
  app->add_option("--run", o.run, "Directory written by fit");
  app->add_option("--network-factors", o.network_factors, "CSV of network factors (U_hat and V_hat side by side)");
  app->add_option("--item-factors", o.item_factors, "CSV of item factors");
  app->add_option("--method", o.method, "bartlett | rao")->check(CLI::IsMember({"bartlett", "rao"}))->capture_default_str();
}

std::pair<MatrixXd, MatrixXd> load_factors(const DependenceOptions& o, RunManifest& manifest) {
  MatrixXd X, Y;
  if (!o.run.empty()) {
    const std::string u = o.run + "/U_hat.csv", v = o.run + "/V_hat.csv", t = o.run + "/theta_hat.csv";
    const MatrixXd U = read_csv(u).values, V = read_csv(v).values;
    Y = read_csv(t).values;
    for (const auto& p : {u, v, t}) manifest.add_input(p);
    if (U.rows() != V.rows()) throw DataError("U_hat and V_hat have different row counts");
    X.resize(U.rows(), U.cols() + V.cols());
    X << U, V;
  } else {
    if (o.network_factors.empty() || o.item_factors.empty())
      throw std::invalid_argument("give --run or both --network-factors and --item-factors");
    X = read_csv(o.network_factors).values;
    Y = read_csv(o.item_factors).values;
    manifest.add_input(o.network_factors);
    manifest.add_input(o.item_factors);
  }
  if (X.rows() != Y.rows())
    throw DataError("factor tables have different row counts (" + std::to_string(X.rows()) + " and " +
                    std::to_string(Y.rows()) + ")");
  return {X, Y};
}

json dependence_json(const DependenceReport& r) {
  return json{{"n", r.n},
              {"wilks_lambda", r.wilks_lambda},
              {"wilks_pvalue", r.wilks_pvalue},
              {"canonical_correlations", to_json(r.canonical_correlations)},
              {"sequential_statistics", to_json(r.sequential_statistics)},
              {"sequential_pvalues", to_json(r.sequential_pvalues)}};
}

DependenceReport run_cca(const MatrixXd& X, const MatrixXd& Y, PValueMethod method) {
  try {
    return cca(X, Y, method);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
}

void cmd_test(CLI::App* app, const DependenceOptions& o) {
  RunContext ctx;
  CommonOptions c = o.common;
  c.seed = 0;
  begin(ctx, app, c);
  const auto [X, Y] = ctx.manifest.stage("load", [&] { return load_factors(o, ctx.manifest); });
  const PValueMethod method = o.method == "rao" ? PValueMethod::rao_f : PValueMethod::bartlett;
  ctx.manifest.stage("test", [&] {
    IndependenceResult t;
    try {
      t = independence_test(X, Y, method);
    } catch (const std::invalid_argument& e) {
      throw DataError(e.what());
    }
    const DependenceReport r = run_cca(X, Y, method);
    json j = dependence_json(r);
    j["method"] = o.method;
    j["independence"] = json{{"lambda", t.lambda}, {"statistic", t.statistic}, {"df1", t.df1},
                             {"df2", method == PValueMethod::rao_f ? json(t.df2) : json(nullptr)},
                             {"pvalue", t.pvalue}};
    write_json(ctx.output("dependence.json"), j);
  });
  ctx.finish();
}

void cmd_cca(CLI::App* app, const DependenceOptions& o) {
  RunContext ctx;
  CommonOptions c = o.common;
  c.seed = 0;
  begin(ctx, app, c);
  const auto [X, Y] = ctx.manifest.stage("load", [&] { return load_factors(o, ctx.manifest); });
  const PValueMethod method = o.method == "rao" ? PValueMethod::rao_f : PValueMethod::bartlett;
  ctx.manifest.stage("cca", [&] {
    const DependenceReport r = run_cca(X, Y, method);
    json j = dependence_json(r);
    j["method"] = o.method;
    write_json(ctx.output("cca.json"), j);
    const auto I = r.canonical_correlations.size();
    const auto fn = numbered("function", I);
    const auto xl = numbered("network", X.cols()), yl = numbered("item", Y.cols());
    write_csv(ctx.output("cca_raw_network.csv"), r.raw_coefficients_network, fn, "variable", xl);
    write_csv(ctx.output("cca_raw_items.csv"), r.raw_coefficients_items, fn, "variable", yl);
    write_csv(ctx.output("cca_std_network.csv"), r.std_coefficients_network, fn, "variable", xl);
    write_csv(ctx.output("cca_std_items.csv"), r.std_coefficients_items, fn, "variable", yl);
  });
  ctx.finish();
}

// -------------------------------------------------------------------------
// select-dim / compare
// -------------------------------------------------------------------------

struct SelectDimOptions {
  CommonOptions common;
  ModelOptions model;
  DataOptions data;
  HoldoutCli holdout;
  int k_min = 1;
  int k_max = 5;
};

void cmd_select_dim(CLI::App* app, const SelectDimOptions& o) {
  RunContext ctx;
  begin(ctx, app, o.common);
  ModelConfig cfg = finish_model(o.model, ctx.seed);
  if (!cfg.uses_network()) throw std::invalid_argument("select-dim needs a network model");
  const LoadedData data =
      ctx.manifest.stage("load", [&] { return load_data(o.data, true, cfg.uses_items(), &ctx.manifest); });
  const int N = data.network->n_nodes();
  if (o.k_min < 1 || o.k_max < o.k_min) throw std::invalid_argument("need 1 <= --k-min <= --k-max");
  if (o.k_max >= N) throw std::invalid_argument("--k-max must be below the node count");
  const HoldoutOptions hold = finish_holdout(o.holdout, N, ctx.seed, o.common.threads);
  const bool binary = data.network->kind == DataKind::binary;

  const int n_k = o.k_max - o.k_min + 1;
  MatrixXd table(n_k, 4);
  VectorXd scree;
  ctx.manifest.stage("scan", [&] {
    for (int K = o.k_min; K <= o.k_max; ++K) {
      ModelConfig c = cfg;
      c.K = K;
      const ChainOutput full = run_chain(data.net(), data.itm(), c, 0);
      const VectorXd ve = variance_explained(full.mean_UVt, K);
      const HoldoutResult h = row_holdout_cv(*data.network, data.itm(), c, hold);
      int scored = 0;
      for (bool s : h.skipped) scored += s ? 0 : 1;
      table.row(K - o.k_min) << K, ve.sum(), h.median, scored;
      if (K == o.k_max) scree = variance_explained(full.mean_UVt, std::min(N, std::max(o.k_max, 10)));
    }
  });
  write_csv(ctx.output("select_dim.csv"), table,
            {"K", "variance_explained", binary ? "median_holdout_auc" : "median_holdout_rmse", "scored_rows"});
  MatrixXd s(scree.size(), 2);
  for (Eigen::Index k = 0; k < scree.size(); ++k) s.row(k) << static_cast<double>(k + 1), scree(k);
  write_csv(ctx.output("scree.csv"), s, {"dimension", "proportion"});
  ctx.finish();
}

struct CompareOptions {
  CommonOptions common;
  ModelOptions model;
  DataOptions data;
  HoldoutCli holdout;
};

json holdout_json(const HoldoutResult& h) {
  json rows = json::array();
  for (std::size_t i = 0; i < h.rows.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    rows.push_back(json{{"row", h.rows[i] + 1},
                        {"auc", h.auc.size() ? json(std::isnan(h.auc(idx)) ? json(nullptr) : json(h.auc(idx)))
                                             : json(nullptr)},
                        {"rmse", h.rmse.size() ? json(std::isnan(h.rmse(idx)) ? json(nullptr) : json(h.rmse(idx)))
                                               : json(nullptr)},
                        {"skipped", static_cast<bool>(h.skipped[i])}});
  }
  return json{{"median", h.median}, {"rows", rows}};
}

void cmd_compare(CLI::App* app, const CompareOptions& o) {
  RunContext ctx;
  begin(ctx, app, o.common);
  ModelOptions m = o.model;
  m.mode = "joint";
  const ModelConfig cfg = finish_model(m, ctx.seed);
  const LoadedData data = ctx.manifest.stage("load", [&] { return load_data(o.data, true, true, &ctx.manifest); });
  const HoldoutOptions hold = finish_holdout(o.holdout, data.network->n_nodes(), ctx.seed, o.common.threads);
  const ComparisonResult r =
      ctx.manifest.stage("compare", [&] { return compare_joint_separate(*data.network, *data.items, cfg, hold); });
  const bool binary = data.network->kind == DataKind::binary;
  write_json(ctx.output("compare.json"),
             json{{"metric", binary ? "auc" : "rmse"},
                  {"joint_holdout", holdout_json(r.joint_holdout)},
                  {"network_only_holdout", holdout_json(r.network_holdout)},
                  {"joint_cov_recovery", r.joint_cov_recovery},
                  {"item_only_cov_recovery", r.item_only_cov_recovery}});
  ctx.finish();
}

// -------------------------------------------------------------------------
// simulate / ppc
// -------------------------------------------------------------------------

struct ParamsOptions {
  std::string params;
  std::string preset = "school56";
  int nodes = 0;
};

void add_params(CLI::App* app, ParamsOptions& p) {
  app->add_option("--params", p.params, "Generative parameters JSON");
  app->add_option("--preset", p.preset, "Built-in parameters when --params is absent")
      ->check(CLI::IsMember({"school56"}))
      ->capture_default_str();
  app->add_option("--n,--nodes", p.nodes, "Override the number of persons");
}

GenerativeParams load_params(const ParamsOptions& p, RunManifest& manifest) {
  GenerativeParams g;
  if (!p.params.empty()) {
    g = read_generative_params(p.params);
    manifest.add_input(p.params);
  } else {
    g = school56_like_params();
  }
  if (p.nodes > 0) g.N = p.nodes;
  g.validate();
  return g;
}

struct SimulateOptions {
  CommonOptions common;
  ParamsOptions params;
};

void cmd_simulate(CLI::App* app, const SimulateOptions& o) {
  RunContext ctx;
  begin(ctx, app, o.common);
  const GenerativeParams g = load_params(o.params, ctx.manifest);
  Rng rng(ctx.seed, 0);
  const SimulatedData sim = ctx.manifest.stage("simulate", [&] { return simulate_joint(g, rng); });
  ctx.manifest.stage("write", [&] {
    MatrixXd X = sim.network.edges;
    X.diagonal().setConstant(std::numeric_limits<double>::quiet_NaN());
    write_csv(ctx.output("network.csv"), X, numbered("node", g.N));
    write_csv(ctx.output("U_true.csv"), sim.U, numbered("u", g.K));
    write_csv(ctx.output("V_true.csv"), sim.V, numbered("v", g.K));
    if (g.has_items()) {
      write_csv(ctx.output("items.csv"), sim.items.values, numbered("item", sim.items.n_items()));
      write_csv(ctx.output("theta_true.csv"), sim.Theta, numbered("theta", g.D));
    }
    write_generative_params(ctx.output("params.json"), g);
  });
  ctx.finish();
}

struct PpcOptions {
  CommonOptions common;
  std::string run;
  int replicates = 2000;
};

void cmd_ppc(CLI::App* app, const PpcOptions& o) {
  RunContext ctx;
  begin(ctx, app, o.common);
  if (o.replicates < 1) throw std::invalid_argument("--replicates must be positive");
  const std::string run_path = o.run + "/run.json", rep_path = o.run + "/replicates.json";
  const json run = read_json(run_path);
  ctx.manifest.add_input(run_path);
  if (!fs::exists(rep_path)) throw DataError(rep_path + " not found; fit with --replicates");
  ctx.manifest.add_input(rep_path);

  DataOptions d;
  d.network = run.value("network", json(nullptr)).is_null() ? "" : run["network"].get<std::string>();
  d.items = run.value("items", json(nullptr)).is_null() ? "" : run["items"].get<std::string>();
  d.network_kind = run.value("network_kind", std::string("binary"));
  d.item_kind = run.value("item_kind", std::string("continuous"));
  d.nodes = run.value("nodes", 0);
  const LoadedData data =
      ctx.manifest.stage("load", [&] { return load_data(d, !d.network.empty(), !d.items.empty(), &ctx.manifest); });

  ChainOutput chain;
  for (const auto& r : read_json(rep_path)) chain.replicate_stats.push_back(replicate_from(r));
  if (chain.replicate_stats.empty()) throw DataError(rep_path + " holds no replicates");

  Rng rng(ctx.seed, 0);
  const PPCResult ppc =
      ctx.manifest.stage("ppc", [&] { return posterior_predictive(chain, data.net(), data.itm(), o.replicates, rng); });
  json cov = json::array();
  for (const auto& f : ppc.coverage)
    cov.push_back(json{{"statistic", f.statistic}, {"observed", f.observed}, {"lower", f.lower},
                       {"upper", f.upper}, {"covered", f.covered}});
  json j{{"replicates", ppc.replicated.size()}, {"coverage_rate", ppc.coverage_rate()}, {"coverage", cov}};
  if (data.items) {
    const ItemPPCStats s = item_ppc_stats(*data.items, ppc.replicated);
    j["items"] = json{{"observed_means", to_json(s.observed_means)},
                      {"replicated_means", to_json(s.replicated_means)},
                      {"cov_recovery_correlation", s.cov_recovery_correlation}};
  }
  write_json(ctx.output("ppc.json"), j);
  ctx.finish();
}

// -------------------------------------------------------------------------
// study
// -------------------------------------------------------------------------

struct RecoveryOptions {
  CommonOptions common;
  ModelOptions model;
  ParamsOptions params;
  int reps = 100;
};

void cmd_recovery(CLI::App* app, const RecoveryOptions& o) {
  RunContext ctx;
  begin(ctx, app, o.common);
  const GenerativeParams g = load_params(o.params, ctx.manifest);
  ModelOptions m = o.model;
  m.config.K = g.K;
  m.config.D = g.has_items() ? g.D : 0;
  m.mode = g.has_items() ? "joint" : "network-only";
  const ModelConfig cfg = finish_model(m, ctx.seed);
  if (o.reps < 2) throw std::invalid_argument("--reps must be at least 2");
  const RecoveryReport r = ctx.manifest.stage("study", [&] {
    return recovery_study(g, o.reps, cfg, StudyOptions{ctx.seed, o.common.threads});
  });
  MatrixXd table(static_cast<Eigen::Index>(r.parameters.size()), 5);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < r.parameters.size(); ++i) {
    const auto& p = r.parameters[i];
    names.push_back(p.name);
    table.row(static_cast<Eigen::Index>(i)) << p.truth, p.bias, p.variance, p.mse, p.replications;
  }
  write_csv(ctx.output("recovery.csv"), table, {"truth", "bias", "variance", "mse", "replications"}, "parameter",
            names);
  write_json(ctx.output("recovery.json"), json{{"N", r.N},
                                               {"replications", o.reps},
                                               {"failures", r.failures},
                                               {"failure_messages", r.failure_messages},
                                               {"kurtosis_U", to_json(r.kurtosis_U)},
                                               {"kurtosis_V", to_json(r.kurtosis_V)},
                                               {"kurtosis_Theta", to_json(r.kurtosis_Theta)}});
  ctx.finish();
}

struct DensityOptions {
  CommonOptions common;
  std::vector<double> intercepts{0, -1, -2, -3, -4};
  std::vector<double> variances{1.0, 0.2};
  int K = 2;
  int nodes = 1000;
};

void cmd_density(CLI::App* app, const DensityOptions& o) {
  RunContext ctx;
  begin(ctx, app, o.common);
  if (o.K < 1 || o.nodes < 2) throw std::invalid_argument("need --k >= 1 and --nodes >= 2");
  Rng rng(ctx.seed, 0);
  const MatrixXd t =
      ctx.manifest.stage("simulate", [&] { return density_table(o.intercepts, o.variances, o.K, o.nodes, rng); });
  std::vector<std::string> header;
  for (double v : o.variances) header.push_back("var_" + format_number(v));
  std::vector<std::string> labels;
  for (double c : o.intercepts) labels.push_back(format_number(c));
  write_csv(ctx.output("density_table.csv"), t, header, "intercept", labels);
  ctx.finish();
}

struct SparsityOptions {
  CommonOptions common;
  ModelOptions model;
  std::vector<double> intercepts{0, -1, -2, -3, -4};
  std::vector<int> sizes{100};
  int reps = 20;
};

void cmd_sparsity(CLI::App* app, const SparsityOptions& o) {
  RunContext ctx;
  begin(ctx, app, o.common);
  ModelOptions m = o.model;
  m.mode = "network-only";
  m.config.D = 0;
  const ModelConfig cfg = finish_model(m, ctx.seed);
  if (o.reps < 2) throw std::invalid_argument("--reps must be at least 2");
  const auto rows = ctx.manifest.stage("study", [&] {
    return sparsity_bias_study(o.intercepts, o.sizes, o.reps, cfg, StudyOptions{ctx.seed, o.common.threads});
  });
  std::vector<std::string> header{"N", "intercept", "bias_delta"};
  for (int k = 0; k < cfg.K; ++k) header.push_back("bias_var_U" + std::to_string(k + 1));
  for (int k = 0; k < cfg.K; ++k) header.push_back("bias_var_V" + std::to_string(k + 1));
  for (int k = 0; k < cfg.K; ++k) header.push_back("kurtosis_U" + std::to_string(k + 1));
  for (int k = 0; k < cfg.K; ++k) header.push_back("kurtosis_V" + std::to_string(k + 1));
  header.insert(header.end(), {"replications", "failures"});
  MatrixXd t(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    VectorXd v(t.cols());
    v << r.N, r.intercept, r.bias_delta, r.bias_var_U, r.bias_var_V, r.kurtosis_U, r.kurtosis_V, r.replications,
        r.failures;
    t.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  write_csv(ctx.output("sparsity_bias.csv"), t, header);
  ctx.finish();
}

}  // namespace

int run(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_command_line += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"Joint network and item response model"};
  app.set_version_flag("--version", std::string(version()));
  app.set_config("--config", "", "Key-value config file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  FitOptions fit_o;
  auto* fit = app.add_subcommand("fit", "Fit the model and write identified factors");
  add_common(fit, fit_o.common);
  add_model(fit, fit_o.model);
  add_data(fit, fit_o.data);
  fit->add_option("--chains", fit_o.chains, "Independent chains (pooled)")->capture_default_str();
  fit->add_flag("--replicates", fit_o.replicates, "Store posterior predictive replicate summaries");
  fit->add_flag("--progress", fit_o.progress, "Report progress on stderr");
  fit->add_option("--subscales", fit_o.subscales, "Comma-separated 1-based factor per item, for target rotation");
  fit->add_option("--scree-rank", fit_o.scree_rank, "Dimensions in the scree table")->capture_default_str();

  DependenceOptions test_o;
  auto* test = app.add_subcommand("test", "Independence test between network and item factors");
  add_dependence(test, test_o);
  DependenceOptions cca_o;
  auto* cca_cmd = app.add_subcommand("cca", "Canonical correlation analysis of the factors");
  add_dependence(cca_cmd, cca_o);

  SelectDimOptions sel_o;
  auto* sel = app.add_subcommand("select-dim", "Scan network dimensions by holdout fit");
  add_common(sel, sel_o.common);
  add_model(sel, sel_o.model);
  add_data(sel, sel_o.data);
  add_holdout(sel, sel_o.holdout);
  sel->add_option("--k-min", sel_o.k_min)->capture_default_str();
  sel->add_option("--k-max", sel_o.k_max)->capture_default_str();

  CompareOptions cmp_o;
  auto* cmp = app.add_subcommand("compare", "Joint versus separate fits on the same data");
  add_common(cmp, cmp_o.common);
  add_model(cmp, cmp_o.model, true, false);
  add_data(cmp, cmp_o.data);
  add_holdout(cmp, cmp_o.holdout);

  SimulateOptions sim_o;
  auto* sim = app.add_subcommand("simulate", "Simulate a network and item responses");
  add_common(sim, sim_o.common);
  add_params(sim, sim_o.params);

  PpcOptions ppc_o;
  auto* ppc = app.add_subcommand("ppc", "Posterior predictive coverage for a fit run with --replicates");
  add_common(ppc, ppc_o.common);
  ppc->add_option("--run", ppc_o.run, "Directory written by fit")->required();
  ppc->add_option("--replicates", ppc_o.replicates, "Replicates used")->capture_default_str();

  auto* study = app.add_subcommand("study", "Simulation studies");
  study->require_subcommand(1);
  RecoveryOptions rec_o;
  auto* rec = study->add_subcommand("recovery", "Parameter recovery (bias, variance, MSE)");
  add_common(rec, rec_o.common);
  add_model(rec, rec_o.model, false, false);
  add_params(rec, rec_o.params);
  rec->add_option("--reps", rec_o.reps, "Replications")->capture_default_str();
  DensityOptions den_o;
  auto* den = study->add_subcommand("density-table", "Network density by intercept and latent variance");
  add_common(den, den_o.common);
  den->add_option("--intercepts", den_o.intercepts)->delimiter(',')->capture_default_str();
  den->add_option("--variances", den_o.variances)->delimiter(',')->capture_default_str();
  den->add_option("--k", den_o.K)->capture_default_str();
  den->add_option("--nodes", den_o.nodes)->capture_default_str();
  SparsityOptions spa_o;
  auto* spa = study->add_subcommand("sparsity-bias", "Estimation bias as networks get sparse");
  add_common(spa, spa_o.common);
  add_model(spa, spa_o.model, false, false);
  spa->add_option("--k", spa_o.model.config.K)->capture_default_str();
  spa->add_option("--intercepts", spa_o.intercepts)->delimiter(',')->capture_default_str();
  spa->add_option("--sizes", spa_o.sizes)->delimiter(',')->capture_default_str();
  spa->add_option("--reps", spa_o.reps)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ExitCode::ok : ExitCode::usage;
  }

  try {
    if (fit->parsed()) cmd_fit(fit, fit_o);
    else if (test->parsed()) cmd_test(test, test_o);
    else if (cca_cmd->parsed()) cmd_cca(cca_cmd, cca_o);
    else if (sel->parsed()) cmd_select_dim(sel, sel_o);
    else if (cmp->parsed()) cmd_compare(cmp, cmp_o);
    else if (sim->parsed()) cmd_simulate(sim, sim_o);
    else if (ppc->parsed()) cmd_ppc(ppc, ppc_o);
    else if (rec->parsed()) cmd_recovery(rec, rec_o);
    else if (den->parsed()) cmd_density(den, den_o);
    else if (spa->parsed()) cmd_sparsity(spa, spa_o);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return ExitCode::data_error;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return ExitCode::data_error;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return ExitCode::numerical_failure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return ExitCode::usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCode::numerical_failure;
  }
  return ExitCode::ok;
}

}  // namespace jnirm::cli
