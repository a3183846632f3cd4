#include "regimeclust/mixhmmr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

#include "regimeclust/errors.hpp"
#include "regimeclust/log.hpp"
#include "regimeclust/rng.hpp"

namespace regimeclust {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEmptyClusterFrac = 1e-8;  // of n
constexpr double kEmptyRegimeWeight = 1e-12;
constexpr double kLog2Pi = 1.8378770664093453;

double data_variance(const Eigen::MatrixXd& curves) {
  const double mean = curves.mean();
  return (curves.array() - mean).square().mean();
}

double variance_floor(const Dataset& data, const ModelConfig& config) {
  const double floor = config.variance_floor_factor * data_variance(data.curves);
  return floor > 0.0 ? floor : 1e-12;
}

// Per-cluster regime means evaluated on the grid: column k holds the
// k-th polynomial at every time point.
Eigen::MatrixXd regime_means(const ModelParams& params, const DesignMatrix& design, int g) {
  const int K = params.regimes();
  Eigen::MatrixXd means(design.num_points(), K);
  for (int k = 0; k < K; ++k) {
    means.col(k) = polyval(params.betas[g][k], design);
  }
  return means;
}

EmissionTable make_emissions(const Eigen::RowVectorXd& curve, const Eigen::MatrixXd& means,
                             const Eigen::VectorXd& sigma2_row) {
  const int m = static_cast<int>(curve.size());
  const int K = static_cast<int>(means.cols());
  EmissionTable table;
  table.logdens.resize(m, K);
  for (int k = 0; k < K; ++k) {
    const double c = -0.5 * (kLog2Pi + std::log(sigma2_row[k]));
    const double inv2s = 0.5 / sigma2_row[k];
    table.logdens.col(k) =
        (c - (curve.transpose() - means.col(k)).array().square() * inv2s).matrix();
  }
  return table;
}

ChainParams initial_chain(int regimes, Constraint constraint) {
  if (constraint == Constraint::LeftRight) return make_leftright_chain(regimes);
  ChainParams chain;
  chain.constraint = Constraint::Unconstrained;
  chain.pi = Eigen::VectorXd::Constant(regimes, 1.0 / regimes);
  chain.trans = Eigen::MatrixXd::Constant(regimes, regimes, 1.0 / regimes);
  return chain;
}

// Ordinary least-squares fit of K contiguous uniform time blocks over
// the given curves; the workhorse of both initialisation and
// empty-cluster recovery.
struct SegmentFit {
  std::vector<Eigen::VectorXd> betas;
  Eigen::VectorXd sigma2;
};

SegmentFit fit_uniform_segments(const Dataset& data, const std::vector<int>& curve_idx,
                                const DesignMatrix& design, int regimes, double var_floor,
                                int* ridge_events) {
  const int m = data.num_samples();
  const int rows = static_cast<int>(curve_idx.size());
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows) * m);
  for (int r = 0; r < rows; ++r) {
    y.segment(static_cast<Eigen::Index>(r) * m, m) = data.curves.row(curve_idx[r]);
  }

  SegmentFit fit;
  fit.betas.resize(regimes);
  fit.sigma2.resize(regimes);
  Eigen::VectorXd w(y.size());
  for (int k = 0; k < regimes; ++k) {
    const int j_first = k * m / regimes;
    const int j_last = (k + 1) * m / regimes;  // exclusive
    w.setZero();
    for (int r = 0; r < rows; ++r) {
      w.segment(static_cast<Eigen::Index>(r) * m + j_first, j_last - j_first).setOnes();
    }
    WlsResult wls = solve_wls(design, y, w);
    if (wls.ridge_applied && ridge_events != nullptr) ++(*ridge_events);
    fit.betas[k] = wls.beta;

    double rss = 0.0;
    int count = 0;
    for (int r = 0; r < rows; ++r) {
      for (int j = j_first; j < j_last; ++j) {
        const double res =
            data.curves(curve_idx[r], j) - design.rows.row(j).dot(wls.beta);
        rss += res * res;
        ++count;
      }
    }
    fit.sigma2[k] = std::max(count > 0 ? rss / count : var_floor, var_floor);
  }
  return fit;
}

}  // namespace

// --- validation -------------------------------------------------------

void Dataset::validate() const {
  grid.validate();
  if (curves.rows() < 1) {
    throw std::invalid_argument("Dataset: need at least one curve");
  }
  if (curves.cols() != grid.size()) {
    throw std::invalid_argument("Dataset: curves have " + std::to_string(curves.cols()) +
                                " samples but the grid has " + std::to_string(grid.size()));
  }
  if (!curves.allFinite()) {
    throw std::invalid_argument("Dataset: curves contain non-finite values");
  }
  if (truth_labels && truth_labels->size() != curves.rows()) {
    throw std::invalid_argument("Dataset: truth label count does not match curve count");
  }
  if (true_states &&
      (true_states->rows() != curves.rows() || true_states->cols() != curves.cols())) {
    throw std::invalid_argument("Dataset: true state shape does not match curves");
  }
}

void ModelConfig::validate() const {
  if (clusters < 1) throw std::invalid_argument("ModelConfig: clusters must be >= 1");
  if (regimes < 1) throw std::invalid_argument("ModelConfig: regimes must be >= 1");
  if (degree < 0) throw std::invalid_argument("ModelConfig: degree must be >= 0");
  if (max_iter < 1) throw std::invalid_argument("ModelConfig: max_iter must be >= 1");
  if (!(rel_tol > 0.0)) throw std::invalid_argument("ModelConfig: rel_tol must be positive");
  if (n_init < 1) throw std::invalid_argument("ModelConfig: n_init must be >= 1");
  if (threads < 1) throw std::invalid_argument("ModelConfig: threads must be >= 1");
  if (!(variance_floor_factor > 0.0)) {
    throw std::invalid_argument("ModelConfig: variance_floor_factor must be positive");
  }
}

int ModelParams::degree() const {
  if (betas.empty() || betas.front().empty()) {
    throw std::invalid_argument("ModelParams: no coefficients");
  }
  return static_cast<int>(betas.front().front().size()) - 1;
}

void ModelParams::validate() const {
  const int G = clusters();
  if (G < 1) throw std::invalid_argument("ModelParams: need at least one cluster");
  if (weights.minCoeff() < 0.0 || std::abs(weights.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("ModelParams: cluster weights must be a distribution");
  }
  if (static_cast<int>(chains.size()) != G || static_cast<int>(betas.size()) != G ||
      sigma2.rows() != G) {
    throw std::invalid_argument("ModelParams: per-cluster blocks must all have length G");
  }
  const int K = regimes();
  const int d = degree() + 1;
  for (int g = 0; g < G; ++g) {
    chains[g].validate();
    if (chains[g].num_states() != K) {
      throw std::invalid_argument("ModelParams: chains disagree on the state count");
    }
    if (static_cast<int>(betas[g].size()) != K) {
      throw std::invalid_argument("ModelParams: need one coefficient vector per regime");
    }
    for (int k = 0; k < K; ++k) {
      if (static_cast<int>(betas[g][k].size()) != d) {
        throw std::invalid_argument("ModelParams: inconsistent coefficient lengths");
      }
    }
  }
  if (sigma2.cols() != K || !(sigma2.minCoeff() > 0.0) || !sigma2.allFinite()) {
    throw std::invalid_argument("ModelParams: variances must be positive and finite");
  }
}

// --- generative sampler -----------------------------------------------

Dataset sample_dataset(const ModelParams& params, const TimeGrid& grid, int n,
                       std::uint64_t seed) {
  params.validate();
  if (n < 1) throw std::invalid_argument("sample_dataset: need n >= 1");
  const DesignMatrix design = build_design_matrix(grid, params.degree());
  const int m = grid.size();
  const int G = params.clusters();

  std::vector<Eigen::MatrixXd> means(G);
  for (int g = 0; g < G; ++g) means[g] = regime_means(params, design, g);

  std::mt19937_64 rng = seed_stream(seed, "sample");
  Dataset data;
  data.grid = grid;
  data.curves.resize(n, m);
  Eigen::VectorXi labels(n);
  Eigen::MatrixXi states(n, m);

  for (int i = 0; i < n; ++i) {
    const int g = draw_categorical(rng, params.weights);
    labels[i] = g;
    int z = draw_categorical(rng, params.chains[g].pi);
    for (int j = 0; j < m; ++j) {
      states(i, j) = z;
      data.curves(i, j) =
          means[g](j, z) + std::sqrt(params.sigma2(g, z)) * draw_normal(rng);
      if (j + 1 < m) {
        z = draw_categorical(rng,
                             Eigen::VectorXd(params.chains[g].trans.row(z).transpose()));
      }
    }
  }
  data.truth_labels = labels;
  data.true_states = states;
  return data;
}

// --- E-step -------------------------------------------------------------

Posteriors e_step(const Dataset& data, const ModelParams& params,
                  const DesignMatrix& design, int threads) {
  params.validate();
  const int n = data.num_curves();
  const int m = data.num_samples();
  const int G = params.clusters();
  if (design.num_points() != m) {
    throw std::invalid_argument("e_step: design does not match the dataset grid");
  }

  std::vector<Eigen::MatrixXd> means(G);
  for (int g = 0; g < G; ++g) means[g] = regime_means(params, design, g);

  Posteriors post;
  post.per_curve.assign(n, std::vector<ChainPosteriors>(G));
  post.cluster_logliks.resize(n, G);
  post.tau.resize(n, G);

  const auto process_range = [&](int i_first, int i_last) {
    for (int i = i_first; i < i_last; ++i) {
      for (int g = 0; g < G; ++g) {
        const EmissionTable emissions =
            make_emissions(data.curves.row(i), means[g], params.sigma2.row(g));
        post.per_curve[i][g] = forward_backward(params.chains[g], emissions);
        post.cluster_logliks(i, g) = post.per_curve[i][g].loglik;
      }
    }
  };

  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    process_range(0, n);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int i_first = w * chunk;
      const int i_last = std::min(n, i_first + chunk);
      if (i_first >= i_last) break;
      pool.emplace_back(process_range, i_first, i_last);
    }
    for (auto& t : pool) t.join();
  }

  // Reductions run single-threaded in curve order so the result does
  // not depend on the worker count.
  Eigen::VectorXd log_w(G);
  for (int g = 0; g < G; ++g) {
    log_w[g] = params.weights[g] > 0.0 ? std::log(params.weights[g]) : -kInf;
  }
  post.loglik = 0.0;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd row = log_w + post.cluster_logliks.row(i).transpose();
    const double shift = row.maxCoeff();
    if (!std::isfinite(shift)) {
      post.tau.row(i).setConstant(1.0 / G);
      post.loglik = -kInf;
      continue;
    }
    const Eigen::ArrayXd shifted = (row.array() - shift).exp();
    const double total = shifted.sum();
    post.tau.row(i) = (shifted / total).matrix().transpose();
    post.loglik += shift + std::log(total);
  }

  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < G; ++g) {
      if (post.per_curve[i][g].degenerate) ++post.degeneracy_events;
    }
  }
  return post;
}

double log_likelihood(const Dataset& data, const ModelParams& params,
                      const DesignMatrix& design) {
  return e_step(data, params, design, 1).loglik;
}

// --- M-step -------------------------------------------------------------

ModelParams m_step(const Dataset& data, const Posteriors& post,
                   const DesignMatrix& design, const ModelConfig& config,
                   std::mt19937_64& reseed_rng, MStepDiag* diag) {
  const int n = data.num_curves();
  const int m = data.num_samples();
  const int G = config.clusters;
  const int K = config.regimes;
  if (post.tau.rows() != n || post.tau.cols() != G) {
    throw std::invalid_argument("m_step: posteriors do not match the configuration");
  }
  const double var_floor = variance_floor(data, config);

  ModelParams params;
  params.weights.resize(G);
  params.chains.resize(G);
  params.betas.assign(G, std::vector<Eigen::VectorXd>(K));
  params.sigma2.resize(G, K);

  Eigen::VectorXd y(static_cast<Eigen::Index>(n) * m);
  for (int i = 0; i < n; ++i) {
    y.segment(static_cast<Eigen::Index>(i) * m, m) = data.curves.row(i);
  }
  Eigen::VectorXd w(y.size());

  std::vector<double> cluster_mass(G);
  for (int g = 0; g < G; ++g) cluster_mass[g] = post.tau.col(g).sum();

  for (int g = 0; g < G; ++g) {
    params.weights[g] = cluster_mass[g] / n;

    if (cluster_mass[g] < kEmptyClusterFrac * n) {
      // Empty cluster: restart it from one randomly chosen curve.
      const int pick = static_cast<int>(draw_index(reseed_rng, n));
      int ridge = 0;
      SegmentFit fit = fit_uniform_segments(data, {pick}, design, K, var_floor, &ridge);
      params.betas[g] = std::move(fit.betas);
      params.sigma2.row(g) = fit.sigma2.transpose();
      params.chains[g] = initial_chain(K, config.constraint);
      // A 1/n weight would hand the seed curve straight back to its old
      // cluster; 1/G lets the refit compete.
      params.weights[g] = 1.0 / G;
      if (diag != nullptr) {
        ++diag->degeneracy_events;
        diag->ridge_events += ridge;
      }
      log_info("m_step: re-seeded empty cluster " + std::to_string(g));
      continue;
    }

    // Initial distribution.
    ChainParams& chain = params.chains[g];
    chain.constraint = config.constraint;
    chain.pi = Eigen::VectorXd::Zero(K);
    for (int i = 0; i < n; ++i) {
      chain.pi += post.tau(i, g) * post.per_curve[i][g].gamma.row(0).transpose();
    }
    chain.pi /= chain.pi.sum();

    // Transition rows: expected pair counts over expected occupancy.
    Eigen::MatrixXd pair_counts = Eigen::MatrixXd::Zero(K, K);
    for (int i = 0; i < n; ++i) {
      const double tau_ig = post.tau(i, g);
      if (tau_ig == 0.0) continue;
      for (const Eigen::MatrixXd& slice : post.per_curve[i][g].xi) {
        pair_counts.noalias() += tau_ig * slice;
      }
    }
    if (config.constraint == Constraint::LeftRight) {
      for (int k = 0; k < K; ++k) {
        for (int l = 0; l < K; ++l) {
          if (l < k || l > k + 1) pair_counts(k, l) = 0.0;
        }
      }
    }
    chain.trans.resize(K, K);
    for (int k = 0; k < K; ++k) {
      const double row_total = pair_counts.row(k).sum();
      if (row_total > 0.0) {
        chain.trans.row(k) = pair_counts.row(k) / row_total;
      } else {
        // State never left (or never reached): fall back to the
        // structurally allowed uniform row.
        chain.trans.row(k).setZero();
        if (config.constraint == Constraint::LeftRight) {
          if (k + 1 < K) {
            chain.trans(k, k) = 0.5;
            chain.trans(k, k + 1) = 0.5;
          } else {
            chain.trans(k, k) = 1.0;
          }
        } else {
          chain.trans.row(k).setConstant(1.0 / K);
        }
      }
    }
    if (config.constraint == Constraint::LeftRight) {
      // Keep the final state absorbing exactly.
      chain.trans.row(K - 1).setZero();
      chain.trans(K - 1, K - 1) = 1.0;
    }

    // Regression blocks: one weighted least-squares problem per regime
    // over the stacked n*m points, then the matching variance.
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < n; ++i) {
        w.segment(static_cast<Eigen::Index>(i) * m, m) =
            post.tau(i, g) * post.per_curve[i][g].gamma.col(k);
      }
      const double total_weight = w.sum();
      if (total_weight < kEmptyRegimeWeight) {
        // Regime received no posterior mass; refit its uniform block.
        std::vector<int> all(n);
        for (int i = 0; i < n; ++i) all[i] = i;
        int ridge = 0;
        SegmentFit fit = fit_uniform_segments(data, all, design, K, var_floor, &ridge);
        params.betas[g][k] = fit.betas[k];
        params.sigma2(g, k) = fit.sigma2[k];
        if (diag != nullptr) {
          ++diag->degeneracy_events;
          diag->ridge_events += ridge;
        }
        continue;
      }
      WlsResult wls = solve_wls(design, y, w);
      if (wls.ridge_applied && diag != nullptr) ++diag->ridge_events;
      params.betas[g][k] = wls.beta;

      const Eigen::VectorXd fitted = design.rows * wls.beta;
      double rss = 0.0;
      for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd residual = data.curves.row(i).transpose() - fitted;
        rss += residual.cwiseProduct(residual)
                   .dot(w.segment(static_cast<Eigen::Index>(i) * m, m));
      }
      double s2 = rss / total_weight;
      if (s2 < var_floor) {
        s2 = var_floor;
        if (diag != nullptr) ++diag->floor_events;
      }
      params.sigma2(g, k) = s2;
    }
  }

  // Renormalise away rounding drift (and the floor applied on reseed).
  params.weights /= params.weights.sum();
  return params;
}

// --- initialisation -----------------------------------------------------

namespace {

// Short Lloyd pass on the raw curves, used only to seed EM restarts.
std::vector<int> lloyd_partition(const Dataset& data, int clusters,
                                 std::mt19937_64& rng) {
  const int n = data.num_curves();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int k = 0; k < clusters; ++k) {
    const int swap_with = k + static_cast<int>(draw_index(rng, n - k));
    std::swap(order[k], order[swap_with]);
  }
  Eigen::MatrixXd centroids(clusters, data.num_samples());
  for (int k = 0; k < clusters; ++k) centroids.row(k) = data.curves.row(order[k]);

  std::vector<int> labels(n, -1);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    Eigen::VectorXd nearest(n);
    for (int i = 0; i < n; ++i) {
      int arg = 0;
      double dmin = std::numeric_limits<double>::infinity();
      for (int k = 0; k < clusters; ++k) {
        const double d = (data.curves.row(i) - centroids.row(k)).squaredNorm();
        if (d < dmin) {
          dmin = d;
          arg = k;
        }
      }
      nearest[i] = dmin;
      if (labels[i] != arg) {
        labels[i] = arg;
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(clusters, data.num_samples());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(clusters);
    for (int i = 0; i < n; ++i) {
      sums.row(labels[i]) += data.curves.row(i);
      ++counts[labels[i]];
    }
    for (int k = 0; k < clusters; ++k) {
      if (counts[k] > 0) {
        centroids.row(k) = sums.row(k) / counts[k];
      } else {
        int farthest = 0;
        for (int i = 1; i < n; ++i) {
          if (nearest[i] > nearest[farthest]) farthest = i;
        }
        centroids.row(k) = data.curves.row(farthest);
        nearest[farthest] = 0.0;
      }
    }
  }
  return labels;
}

}  // namespace

ModelParams init_params(const Dataset& data, const ModelConfig& config,
                        std::uint64_t restart_seed, InitPartition partition) {
  data.validate();
  config.validate();
  const int n = data.num_curves();
  const int G = config.clusters;
  if (n < G) {
    throw std::invalid_argument("init_params: fewer curves than clusters");
  }
  const DesignMatrix design = build_design_matrix(data.grid, config.degree);
  const double var_floor = variance_floor(data, config);

  std::mt19937_64 rng(restart_seed);
  std::vector<std::vector<int>> members(G);
  bool ok = false;
  if (partition == InitPartition::KMeans) {
    const std::vector<int> labels = lloyd_partition(data, G, rng);
    for (int i = 0; i < n; ++i) members[labels[i]].push_back(i);
    ok = std::none_of(members.begin(), members.end(),
                      [](const std::vector<int>& c) { return c.empty(); });
  }
  constexpr int kMaxPartitionRetries = 64;
  for (int attempt = 0; attempt < kMaxPartitionRetries && !ok; ++attempt) {
    for (auto& cluster : members) cluster.clear();
    for (int i = 0; i < n; ++i) {
      members[draw_index(rng, G)].push_back(i);
    }
    ok = std::none_of(members.begin(), members.end(),
                      [](const std::vector<int>& c) { return c.empty(); });
  }
  if (!ok) {
    throw std::invalid_argument("init_params: could not draw a partition with "
                                "non-empty clusters");
  }

  ModelParams params;
  params.weights = Eigen::VectorXd::Constant(G, 1.0 / G);
  params.chains.resize(G);
  params.betas.resize(G);
  params.sigma2.resize(G, config.regimes);
  for (int g = 0; g < G; ++g) {
    SegmentFit fit =
        fit_uniform_segments(data, members[g], design, config.regimes, var_floor, nullptr);
    params.betas[g] = std::move(fit.betas);
    params.sigma2.row(g) = fit.sigma2.transpose();
    params.chains[g] = initial_chain(config.regimes, config.constraint);
  }
  return params;
}

// --- EM driver ----------------------------------------------------------

namespace {

struct RunOutput {
  ModelParams params;
  Posteriors post;
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
  MStepDiag diag;
};

bool stop_reached(double previous, double current, double rel_tol) {
  return std::abs(current - previous) <=
         rel_tol * std::max(std::abs(previous), 1e-10);
}

RunOutput run_em(const Dataset& data, const ModelConfig& config,
                 const DesignMatrix& design, ModelParams params,
                 std::uint64_t run_seed) {
  RunOutput out;
  std::mt19937_64 reseed_rng = seed_stream(run_seed, "reseed");

  Posteriors post = e_step(data, params, design, config.threads);
  out.diag.degeneracy_events += post.degeneracy_events;
  out.trace.push_back(post.loglik);

  while (out.iterations < config.max_iter) {
    params = m_step(data, post, design, config, reseed_rng, &out.diag);
    Posteriors next = e_step(data, params, design, config.threads);
    out.diag.degeneracy_events += next.degeneracy_events;
    out.trace.push_back(next.loglik);
    ++out.iterations;
    const double previous = post.loglik;
    post = std::move(next);
    if (std::isfinite(previous) && std::isfinite(post.loglik) &&
        stop_reached(previous, post.loglik, config.rel_tol)) {
      out.converged = true;
      break;
    }
  }

  out.params = std::move(params);
  out.post = std::move(post);
  return out;
}

FitResult assemble_result(const Dataset& data, const ModelConfig& config,
                          const DesignMatrix& design, RunOutput out) {
  const int n = data.num_curves();
  const int m = data.num_samples();
  const int G = config.clusters;

  FitResult result;
  result.loglik_trace = std::move(out.trace);
  result.iterations = out.iterations;
  result.converged = out.converged;
  result.degeneracy_events = out.diag.degeneracy_events;
  result.ridge_events = out.diag.ridge_events;

  result.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int g = 1; g < G; ++g) {
      if (out.post.tau(i, g) > out.post.tau(i, best)) best = g;
    }
    result.labels[i] = best;
  }

  std::vector<Eigen::MatrixXd> means(G);
  for (int g = 0; g < G; ++g) means[g] = regime_means(out.params, design, g);
  result.segmentations.resize(n, m);
  for (int i = 0; i < n; ++i) {
    const int g = result.labels[i];
    const EmissionTable emissions =
        make_emissions(data.curves.row(i), means[g], out.params.sigma2.row(g));
    const std::vector<int> path = viterbi(out.params.chains[g], emissions);
    for (int j = 0; j < m; ++j) result.segmentations(i, j) = path[j];
  }

  result.mean_curves = mean_curves(out.post, out.params, design);
  result.bic = bic_from_loglik(result.loglik_trace.back(), G, config.regimes,
                               config.degree, n);
  result.params = std::move(out.params);
  return result;
}

void check_fit_preconditions(const Dataset& data, const ModelConfig& config) {
  data.validate();
  config.validate();
  if (data.num_curves() < config.clusters) {
    throw std::invalid_argument("fit_em: need at least as many curves as clusters");
  }
  if (data.num_samples() < config.regimes * (config.degree + 1)) {
    log_info("fit: fewer samples per curve than regression parameters per cluster");
  }
}

}  // namespace

FitResult fit_em_with_init(const Dataset& data, const ModelConfig& config,
                           const ModelParams& init, std::uint64_t run_seed) {
  check_fit_preconditions(data, config);
  const DesignMatrix design = build_design_matrix(data.grid, config.degree);
  RunOutput out = run_em(data, config, design, init, run_seed);
  if (!std::isfinite(out.post.loglik)) {
    throw FitError("fit_em_with_init: run ended with non-finite log-likelihood", 1,
                   out.diag.degeneracy_events);
  }
  return assemble_result(data, config, design, std::move(out));
}

FitResult fit_em(const Dataset& data, const ModelConfig& config) {
  check_fit_preconditions(data, config);
  const DesignMatrix design = build_design_matrix(data.grid, config.degree);

  std::optional<RunOutput> best;
  int total_degeneracies = 0;
  for (int r = 0; r < config.n_init; ++r) {
    const std::uint64_t restart_seed =
        derive_seed(config.seed, "init/" + std::to_string(r));
    const InitPartition partition =
        r % 2 == 1 ? InitPartition::KMeans : InitPartition::Random;
    ModelParams init = init_params(data, config, restart_seed, partition);
    RunOutput out = run_em(data, config, design, std::move(init), restart_seed);
    total_degeneracies += out.diag.degeneracy_events;
    if (!std::isfinite(out.post.loglik)) continue;
    if (!best || out.post.loglik > best->post.loglik) {
      best = std::move(out);
    }
  }
  if (!best) {
    throw FitError("fit_em: all " + std::to_string(config.n_init) +
                       " restarts ended degenerate",
                   config.n_init, total_degeneracies);
  }
  return assemble_result(data, config, design, std::move(*best));
}

// --- derived quantities ---------------------------------------------------

Eigen::MatrixXd mean_curves(const Posteriors& post, const ModelParams& params,
                            const DesignMatrix& design, std::vector<bool>* empty_flags) {
  const int n = static_cast<int>(post.tau.rows());
  const int G = params.clusters();
  const int K = params.regimes();
  const int m = design.num_points();

  Eigen::MatrixXd curves(G, m);
  if (empty_flags != nullptr) empty_flags->assign(G, false);
  for (int g = 0; g < G; ++g) {
    const double mass = post.tau.col(g).sum();
    if (mass < 1e-12) {
      curves.row(g).setConstant(std::numeric_limits<double>::quiet_NaN());
      if (empty_flags != nullptr) (*empty_flags)[g] = true;
      log_info("mean_curves: cluster " + std::to_string(g) + " has no posterior mass");
      continue;
    }
    const Eigen::MatrixXd means = regime_means(params, design, g);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < n; ++i) {
      const double tau_ig = post.tau(i, g);
      if (tau_ig == 0.0) continue;
      const Eigen::MatrixXd& gamma = post.per_curve[i][g].gamma;
      for (int k = 0; k < K; ++k) {
        acc += tau_ig * gamma.col(k).cwiseProduct(means.col(k));
      }
    }
    curves.row(g) = (acc / mass).transpose();
  }
  return curves;
}

int free_parameters(int clusters, int regimes, int degree) {
  return (clusters - 1) + clusters * regimes + clusters * (2 * regimes - 1) +
         clusters * regimes * (degree + 1) + clusters * regimes;
}

int free_parameters_leftright(int clusters, int regimes, int degree) {
  // Fixed initial state and the absorbing last row leave K-1 free
  // transition entries per cluster.
  return (clusters - 1) + clusters * (regimes - 1) +
         clusters * regimes * (degree + 1) + clusters * regimes;
}

double bic_from_loglik(double loglik, int clusters, int regimes, int degree, int n) {
  return loglik - 0.5 * free_parameters(clusters, regimes, degree) * std::log(n);
}

double bic_score(const FitResult& result, const ModelConfig& config, int n) {
  if (result.loglik_trace.empty()) {
    throw std::invalid_argument("bic_score: empty log-likelihood trace");
  }
  return bic_from_loglik(result.loglik_trace.back(), config.clusters, config.regimes,
                         config.degree, n);
}

Eigen::VectorXd weighted_regime_gradient(const Dataset& data, const Posteriors& post,
                                         const DesignMatrix& design,
                                         const Eigen::VectorXd& beta, int g, int k) {
  const int n = data.num_curves();
  const int m = data.num_samples();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(design.num_coeffs());
  for (int i = 0; i < n; ++i) {
    const double tau_ig = post.tau(i, g);
    if (tau_ig == 0.0) continue;
    const Eigen::MatrixXd& gamma = post.per_curve[i][g].gamma;
    for (int j = 0; j < m; ++j) {
      const double weight = tau_ig * gamma(j, k);
      if (weight == 0.0) continue;
      const double residual = data.curves(i, j) - design.rows.row(j).dot(beta);
      grad += weight * residual * design.rows.row(j).transpose();
    }
  }
  return grad;
}

double weighted_regime_loglik(const Dataset& data, const Posteriors& post,
                              const DesignMatrix& design, const Eigen::VectorXd& beta,
                              double sigma2, int g, int k) {
  const int n = data.num_curves();
  const int m = data.num_samples();
  const double c = -0.5 * (kLog2Pi + std::log(sigma2));
  const double inv2s = 0.5 / sigma2;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double tau_ig = post.tau(i, g);
    if (tau_ig == 0.0) continue;
    const Eigen::MatrixXd& gamma = post.per_curve[i][g].gamma;
    for (int j = 0; j < m; ++j) {
      const double residual = data.curves(i, j) - design.rows.row(j).dot(beta);
      total += tau_ig * gamma(j, k) * (c - residual * residual * inv2s);
    }
  }
  return total;
}

}  // namespace regimeclust
