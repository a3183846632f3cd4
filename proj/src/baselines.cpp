#include "regimeclust/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "regimeclust/errors.hpp"
#include "regimeclust/log.hpp"
#include "regimeclust/rng.hpp"

namespace regimeclust {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093453;

double data_variance(const Eigen::MatrixXd& curves) {
  const double mean = curves.mean();
  return (curves.array() - mean).square().mean();
}

// Whole-curve Gaussian log-density per cluster: the emission model has
// no within-curve dynamics, so the curve factorises over time points.
Eigen::MatrixXd regmix_cluster_logliks(const Dataset& data, const RegMixParams& params,
                                       const DesignMatrix& design) {
  const int n = data.num_curves();
  const int m = data.num_samples();
  const int G = params.clusters();
  Eigen::MatrixXd logliks(n, G);
  for (int g = 0; g < G; ++g) {
    const Eigen::VectorXd fitted = design.rows * params.betas[g];
    const double c = -0.5 * m * (kLog2Pi + std::log(params.sigma2[g]));
    const double inv2s = 0.5 / params.sigma2[g];
    for (int i = 0; i < n; ++i) {
      const double rss =
          (data.curves.row(i).transpose() - fitted).squaredNorm();
      logliks(i, g) = c - rss * inv2s;
    }
  }
  return logliks;
}

struct RegMixEStep {
  Eigen::MatrixXd tau;
  Eigen::MatrixXd cluster_logliks;
  double loglik = 0.0;
};

RegMixEStep regmix_e_step(const Dataset& data, const RegMixParams& params,
                          const DesignMatrix& design) {
  const int n = data.num_curves();
  const int G = params.clusters();
  RegMixEStep step;
  step.cluster_logliks = regmix_cluster_logliks(data, params, design);
  step.tau.resize(n, G);
  Eigen::VectorXd log_alpha(G);
  for (int g = 0; g < G; ++g) {
    log_alpha[g] = params.alpha[g] > 0.0 ? std::log(params.alpha[g]) : -kInf;
  }
  step.loglik = 0.0;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd row = log_alpha + step.cluster_logliks.row(i).transpose();
    const double shift = row.maxCoeff();
    if (!std::isfinite(shift)) {
      step.tau.row(i).setConstant(1.0 / G);
      step.loglik = -kInf;
      continue;
    }
    const Eigen::ArrayXd shifted = (row.array() - shift).exp();
    const double total = shifted.sum();
    step.tau.row(i) = (shifted / total).matrix().transpose();
    step.loglik += shift + std::log(total);
  }
  return step;
}

RegMixParams regmix_m_step(const Dataset& data, const Eigen::MatrixXd& tau,
                           const DesignMatrix& design, double var_floor,
                           std::mt19937_64& reseed_rng, int* degeneracy_events) {
  const int n = data.num_curves();
  const int m = data.num_samples();
  const int G = static_cast<int>(tau.cols());

  RegMixParams params;
  params.alpha.resize(G);
  params.betas.resize(G);
  params.sigma2.resize(G);

  Eigen::VectorXd y(static_cast<Eigen::Index>(n) * m);
  for (int i = 0; i < n; ++i) {
    y.segment(static_cast<Eigen::Index>(i) * m, m) = data.curves.row(i);
  }
  Eigen::VectorXd w(y.size());

  for (int g = 0; g < G; ++g) {
    const double mass = tau.col(g).sum();
    params.alpha[g] = mass / n;

    if (mass < 1e-8 * n) {
      const int pick = static_cast<int>(draw_index(reseed_rng, n));
      w.setZero();
      w.segment(static_cast<Eigen::Index>(pick) * m, m).setOnes();
      WlsResult wls = solve_wls(design, y, w);
      params.betas[g] = wls.beta;
      const double rss =
          (data.curves.row(pick).transpose() - design.rows * wls.beta).squaredNorm();
      params.sigma2[g] = std::max(rss / m, var_floor);
      params.alpha[g] = 1.0 / G;
      if (degeneracy_events != nullptr) ++(*degeneracy_events);
      log_info("regression mixture: re-seeded empty cluster " + std::to_string(g));
      continue;
    }

    for (int i = 0; i < n; ++i) {
      w.segment(static_cast<Eigen::Index>(i) * m, m).setConstant(tau(i, g));
    }
    WlsResult wls = solve_wls(design, y, w);
    params.betas[g] = wls.beta;

    const Eigen::VectorXd fitted = design.rows * wls.beta;
    double rss = 0.0;
    for (int i = 0; i < n; ++i) {
      rss += tau(i, g) * (data.curves.row(i).transpose() - fitted).squaredNorm();
    }
    params.sigma2[g] = std::max(rss / (mass * m), var_floor);
  }
  params.alpha /= params.alpha.sum();
  return params;
}

int regmix_free_parameters(int clusters, int degree) {
  return (clusters - 1) + clusters * (degree + 1) + clusters;
}

struct RegMixRun {
  RegMixParams params;
  RegMixEStep final_step;
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
  int degeneracy_events = 0;
};

RegMixRun regmix_run(const Dataset& data, const ModelConfig& config,
                     const DesignMatrix& design, RegMixParams params,
                     std::uint64_t run_seed) {
  const double var_floor =
      std::max(config.variance_floor_factor * data_variance(data.curves), 1e-12);
  std::mt19937_64 reseed_rng = seed_stream(run_seed, "reseed");

  RegMixRun run;
  RegMixEStep step = regmix_e_step(data, params, design);
  run.trace.push_back(step.loglik);

  while (run.iterations < config.max_iter) {
    params = regmix_m_step(data, step.tau, design, var_floor, reseed_rng,
                           &run.degeneracy_events);
    RegMixEStep next = regmix_e_step(data, params, design);
    run.trace.push_back(next.loglik);
    ++run.iterations;
    const double previous = step.loglik;
    step = std::move(next);
    if (std::isfinite(previous) && std::isfinite(step.loglik) &&
        std::abs(step.loglik - previous) <=
            config.rel_tol * std::max(std::abs(previous), 1e-10)) {
      run.converged = true;
      break;
    }
  }
  run.params = std::move(params);
  run.final_step = std::move(step);
  return run;
}

RegMixResult regmix_assemble(const Dataset& data, int clusters, int degree,
                             const DesignMatrix& design, RegMixRun run) {
  const int n = data.num_curves();
  RegMixResult result;
  result.loglik_trace = std::move(run.trace);
  result.iterations = run.iterations;
  result.converged = run.converged;
  result.degeneracy_events = run.degeneracy_events;
  result.tau = std::move(run.final_step.tau);

  result.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int g = 1; g < clusters; ++g) {
      if (result.tau(i, g) > result.tau(i, best)) best = g;
    }
    result.labels[i] = best;
  }

  result.mean_curves.resize(clusters, data.num_samples());
  for (int g = 0; g < clusters; ++g) {
    result.mean_curves.row(g) = (design.rows * run.params.betas[g]).transpose();
  }
  result.bic = result.loglik_trace.back() -
               0.5 * regmix_free_parameters(clusters, degree) * std::log(n);
  result.params = std::move(run.params);
  return result;
}

}  // namespace

void RegMixParams::validate() const {
  const int G = clusters();
  if (G < 1) throw std::invalid_argument("RegMixParams: need at least one cluster");
  if (alpha.minCoeff() < 0.0 || std::abs(alpha.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("RegMixParams: mixing proportions must be a distribution");
  }
  if (static_cast<int>(betas.size()) != G || sigma2.size() != G) {
    throw std::invalid_argument("RegMixParams: per-cluster blocks must have length G");
  }
  if (!(sigma2.minCoeff() > 0.0)) {
    throw std::invalid_argument("RegMixParams: variances must be positive");
  }
}

RegMixParams regmix_init(const Dataset& data, int clusters, int degree,
                         const ModelConfig& config, std::uint64_t restart_seed) {
  ModelConfig nested = config;
  nested.clusters = clusters;
  nested.regimes = 1;
  nested.degree = degree;
  const ModelParams init = init_params(data, nested, restart_seed);

  RegMixParams params;
  params.alpha = init.weights;
  params.betas.resize(clusters);
  params.sigma2.resize(clusters);
  for (int g = 0; g < clusters; ++g) {
    params.betas[g] = init.betas[g][0];
    params.sigma2[g] = init.sigma2(g, 0);
  }
  return params;
}

RegMixResult fit_regression_mixture_with_init(const Dataset& data, int clusters,
                                              int degree, const ModelConfig& config,
                                              const RegMixParams& init) {
  data.validate();
  init.validate();
  if (data.num_curves() < clusters) {
    throw std::invalid_argument("fit_regression_mixture: need n >= clusters");
  }
  const DesignMatrix design = build_design_matrix(data.grid, degree);
  RegMixRun run = regmix_run(data, config, design, init, config.seed);
  if (!std::isfinite(run.final_step.loglik)) {
    throw FitError("fit_regression_mixture: run ended with non-finite log-likelihood",
                   1, run.degeneracy_events);
  }
  return regmix_assemble(data, clusters, degree, design, std::move(run));
}

RegMixResult fit_regression_mixture(const Dataset& data, int clusters, int degree,
                                    const ModelConfig& config) {
  data.validate();
  if (data.num_curves() < clusters) {
    throw std::invalid_argument("fit_regression_mixture: need n >= clusters");
  }
  const DesignMatrix design = build_design_matrix(data.grid, degree);

  std::optional<RegMixRun> best;
  int total_degeneracies = 0;
  for (int r = 0; r < config.n_init; ++r) {
    const std::uint64_t restart_seed =
        derive_seed(config.seed, "init/" + std::to_string(r));
    RegMixParams init = regmix_init(data, clusters, degree, config, restart_seed);
    RegMixRun run = regmix_run(data, config, design, std::move(init), restart_seed);
    total_degeneracies += run.degeneracy_events;
    if (!std::isfinite(run.final_step.loglik)) continue;
    if (!best || run.final_step.loglik > best->final_step.loglik) {
      best = std::move(run);
    }
  }
  if (!best) {
    throw FitError("fit_regression_mixture: all restarts ended degenerate",
                   config.n_init, total_degeneracies);
  }
  return regmix_assemble(data, clusters, degree, design, std::move(*best));
}

FitResult fit_mixhmm_constant(const Dataset& data, int clusters, int regimes,
                              const ModelConfig& config) {
  ModelConfig constant = config;
  constant.clusters = clusters;
  constant.regimes = regimes;
  constant.degree = 0;
  return fit_em(data, constant);
}

KMeansResult kmeans_curves(const Dataset& data, int clusters, const ModelConfig& config) {
  data.validate();
  const int n = data.num_curves();
  const int m = data.num_samples();
  if (n < clusters) {
    throw std::invalid_argument("kmeans_curves: need n >= clusters");
  }

  KMeansResult best;
  best.inertia = kInf;

  for (int r = 0; r < config.n_init; ++r) {
    std::mt19937_64 rng = seed_stream(config.seed, "kmeans/" + std::to_string(r));

    // Distinct starting centroids via a partial shuffle.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int k = 0; k < clusters; ++k) {
      const int swap_with = k + static_cast<int>(draw_index(rng, n - k));
      std::swap(order[k], order[swap_with]);
    }
    Eigen::MatrixXd centroids(clusters, m);
    for (int k = 0; k < clusters; ++k) centroids.row(k) = data.curves.row(order[k]);

    Eigen::VectorXi labels = Eigen::VectorXi::Constant(n, -1);
    Eigen::VectorXd nearest_dist(n);
    double inertia = kInf;
    std::vector<double> inertia_trace;

    for (int iter = 0; iter < config.max_iter; ++iter) {
      bool changed = false;
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        int arg = 0;
        double dmin = kInf;
        for (int k = 0; k < clusters; ++k) {
          const double d = (data.curves.row(i) - centroids.row(k)).squaredNorm();
          if (d < dmin) {
            dmin = d;
            arg = k;
          }
        }
        if (labels[i] != arg) {
          labels[i] = arg;
          changed = true;
        }
        nearest_dist[i] = dmin;
        total += dmin;
      }
      inertia = total;
      inertia_trace.push_back(total);
      if (!changed) break;

      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(clusters, m);
      Eigen::VectorXi counts = Eigen::VectorXi::Zero(clusters);
      for (int i = 0; i < n; ++i) {
        sums.row(labels[i]) += data.curves.row(i);
        ++counts[labels[i]];
      }
      for (int k = 0; k < clusters; ++k) {
        if (counts[k] > 0) {
          centroids.row(k) = sums.row(k) / counts[k];
        } else {
          // Empty cluster: restart it at the point farthest from its
          // current centroid.
          int farthest = 0;
          for (int i = 1; i < n; ++i) {
            if (nearest_dist[i] > nearest_dist[farthest]) farthest = i;
          }
          centroids.row(k) = data.curves.row(farthest);
          nearest_dist[farthest] = 0.0;
        }
      }
    }

    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.labels = labels;
      best.centroids = centroids;
      best.inertia_trace = std::move(inertia_trace);
    }
  }
  return best;
}

double misclassification_rate(const Eigen::VectorXi& pred, const Eigen::VectorXi& truth) {
  if (pred.size() != truth.size()) {
    throw std::invalid_argument("misclassification_rate: label vectors differ in length");
  }
  const int n = static_cast<int>(pred.size());
  if (n == 0) throw std::invalid_argument("misclassification_rate: empty labels");
  if (pred.minCoeff() < 0 || truth.minCoeff() < 0) {
    throw std::invalid_argument("misclassification_rate: labels must be non-negative");
  }
  const int G = std::max(pred.maxCoeff(), truth.maxCoeff()) + 1;
  if (G > 8) {
    throw std::invalid_argument("misclassification_rate: more than 8 clusters");
  }

  Eigen::MatrixXi confusion = Eigen::MatrixXi::Zero(G, G);
  for (int i = 0; i < n; ++i) ++confusion(pred[i], truth[i]);

  std::vector<int> perm(G);
  std::iota(perm.begin(), perm.end(), 0);
  int best_correct = 0;
  do {
    int correct = 0;
    for (int g = 0; g < G; ++g) correct += confusion(g, perm[g]);
    best_correct = std::max(best_correct, correct);
  } while (std::next_permutation(perm.begin(), perm.end()));

  return 1.0 - static_cast<double>(best_correct) / n;
}

double intra_cluster_inertia(const Dataset& data, const Eigen::VectorXi& labels,
                             const Eigen::MatrixXd& mean_curves) {
  if (labels.size() != data.num_curves()) {
    throw std::invalid_argument("intra_cluster_inertia: label count mismatch");
  }
  if (mean_curves.cols() != data.num_samples()) {
    throw std::invalid_argument("intra_cluster_inertia: mean curve length mismatch");
  }
  double total = 0.0;
  for (int i = 0; i < data.num_curves(); ++i) {
    const int g = labels[i];
    if (g < 0 || g >= mean_curves.rows()) {
      throw std::invalid_argument("intra_cluster_inertia: label out of range");
    }
    total += (data.curves.row(i) - mean_curves.row(g)).squaredNorm();
  }
  return total;
}

}  // namespace regimeclust
