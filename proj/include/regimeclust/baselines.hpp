#pragma once

#include <vector>

#include <Eigen/Core>

#include "regimeclust/mixhmmr.hpp"

namespace regimeclust {

// Polynomial regression mixture: one polynomial and one noise variance
// per cluster, no within-curve dynamics.
struct RegMixParams {
  Eigen::VectorXd alpha;                 // G mixing proportions, sum to 1
  std::vector<Eigen::VectorXd> betas;    // G coefficient vectors
  Eigen::VectorXd sigma2;                // G positive variances

  int clusters() const { return static_cast<int>(alpha.size()); }
  void validate() const;
};

struct RegMixResult {
  RegMixParams params;
  std::vector<double> loglik_trace;
  Eigen::VectorXi labels;
  Eigen::MatrixXd tau;          // n x G
  Eigen::MatrixXd mean_curves;  // G x m, the fitted polynomials
  double bic = 0.0;
  int iterations = 0;
  bool converged = false;
  int degeneracy_events = 0;
};

// EM for the regression mixture, same stopping rule and restart policy
// as fit_em. With one regime per cluster the two models coincide, and
// their traces are required to match; this implementation is kept
// independent of the HMM path so that equivalence stays a real check.
RegMixResult fit_regression_mixture(const Dataset& data, int clusters, int degree,
                                    const ModelConfig& config);
RegMixResult fit_regression_mixture_with_init(const Dataset& data, int clusters,
                                              int degree, const ModelConfig& config,
                                              const RegMixParams& init);

// Starting point equivalent to init_params with a single regime.
RegMixParams regmix_init(const Dataset& data, int clusters, int degree,
                         const ModelConfig& config, std::uint64_t restart_seed);

// Mixture of constant-emission HMMs: the degree-0 special case.
FitResult fit_mixhmm_constant(const Dataset& data, int clusters, int regimes,
                              const ModelConfig& config);

struct KMeansResult {
  Eigen::VectorXi labels;
  Eigen::MatrixXd centroids;           // G x m
  double inertia = 0.0;                // within-cluster sum of squares
  std::vector<double> inertia_trace;   // per Lloyd iteration, best run
};

// Lloyd's algorithm on the raw curve vectors with n_init restarts;
// the lowest-inertia run is kept. Deterministic given config.seed.
KMeansResult kmeans_curves(const Dataset& data, int clusters, const ModelConfig& config);

// Minimum disagreement over all relabellings of the predicted clusters
// (exhaustive; at most 8 distinct labels).
double misclassification_rate(const Eigen::VectorXi& pred, const Eigen::VectorXi& truth);

// sum_i ||x_i - mean_curve[label_i]||^2
double intra_cluster_inertia(const Dataset& data, const Eigen::VectorXi& labels,
                             const Eigen::MatrixXd& mean_curves);

}  // namespace regimeclust
