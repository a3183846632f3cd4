#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "regimeclust/hmm.hpp"
#include "regimeclust/regression.hpp"

namespace regimeclust {

// A set of curves sharing one time grid. Generators attach the latent
// cluster labels and state sequences they drew, which recovery tests
// and evaluation consume.
struct Dataset {
  Eigen::MatrixXd curves;  // n x m
  TimeGrid grid;
  std::optional<Eigen::VectorXi> truth_labels;  // n, values in [0, G_true)
  std::optional<Eigen::MatrixXi> true_states;   // n x m, -1 where undefined

  int num_curves() const { return static_cast<int>(curves.rows()); }
  int num_samples() const { return static_cast<int>(curves.cols()); }
  void validate() const;
};

struct ModelConfig {
  int clusters = 1;  // G
  int regimes = 1;   // K
  int degree = 0;    // p
  Constraint constraint = Constraint::LeftRight;
  int max_iter = 1000;
  double rel_tol = 1e-6;
  int n_init = 10;
  std::uint64_t seed = 0;
  double variance_floor_factor = 1e-6;
  int threads = 1;

  void validate() const;
};

// Full parameter vector: cluster weights, one chain per cluster, and
// per-regime polynomial coefficients and noise variances.
struct ModelParams {
  Eigen::VectorXd weights;                          // G, sums to 1
  std::vector<ChainParams> chains;                  // G
  std::vector<std::vector<Eigen::VectorXd>> betas;  // G x K, each degree+1
  Eigen::MatrixXd sigma2;                           // G x K, positive

  int clusters() const { return static_cast<int>(weights.size()); }
  int regimes() const { return chains.empty() ? 0 : chains.front().num_states(); }
  int degree() const;
  void validate() const;
};

// E-step output over the whole dataset.
struct Posteriors {
  Eigen::MatrixXd tau;                                  // n x G, rows sum to 1
  std::vector<std::vector<ChainPosteriors>> per_curve;  // n x G
  Eigen::MatrixXd cluster_logliks;                      // n x G, log p(x_i | cluster g)
  double loglik = 0.0;                                  // observed-data log-likelihood
  int degeneracy_events = 0;
};

struct FitResult {
  ModelParams params;
  std::vector<double> loglik_trace;  // one entry per E-step, non-decreasing
  Eigen::VectorXi labels;            // n, argmax of final tau (ties: lowest)
  Eigen::MatrixXi segmentations;     // n x m, Viterbi path under the MAP cluster
  Eigen::MatrixXd mean_curves;       // G x m
  double bic = 0.0;
  int iterations = 0;
  bool converged = false;
  int degeneracy_events = 0;
  int ridge_events = 0;
};

// Draws n curves from the generative model: cluster, then a chain walk,
// then one Gaussian observation per time point. Latent draws are kept
// in the returned dataset. Deterministic given the seed.
Dataset sample_dataset(const ModelParams& params, const TimeGrid& grid, int n,
                       std::uint64_t seed);

// Runs one forward-backward per (curve, cluster), then combines the
// per-cluster likelihoods with the weights in log space. Chains with no
// admissible path are counted as degeneracy events, not failures.
Posteriors e_step(const Dataset& data, const ModelParams& params,
                  const DesignMatrix& design, int threads = 1);

struct MStepDiag {
  int degeneracy_events = 0;
  int ridge_events = 0;
  int floor_events = 0;
};

// Closed-form updates for all parameter blocks. Empty clusters are
// re-seeded from a randomly chosen curve (drawn from reseed_rng) and
// recorded in the diagnostics.
ModelParams m_step(const Dataset& data, const Posteriors& post,
                   const DesignMatrix& design, const ModelConfig& config,
                   std::mt19937_64& reseed_rng, MStepDiag* diag = nullptr);

// How a restart draws its starting partition of the curves. Random
// partitions carry no cluster signal and on well-separated data EM can
// settle into a flat-regime optimum from them, so fit_em alternates
// them with partitions from a short k-means pass.
enum class InitPartition { Random, KMeans };

// Partition the curves (uniformly at random, or by Lloyd iterations),
// split each cluster's grid into K contiguous blocks, and give every
// block an ordinary least-squares polynomial fit. Chains start from
// make_leftright_chain (uniform rows when unconstrained).
ModelParams init_params(const Dataset& data, const ModelConfig& config,
                        std::uint64_t restart_seed,
                        InitPartition partition = InitPartition::Random);

// Full fit: n_init restarts of alternating E/M until the relative
// log-likelihood change drops below rel_tol or max_iter is reached;
// the restart with the highest final log-likelihood wins. Throws
// FitError when every restart degenerates.
FitResult fit_em(const Dataset& data, const ModelConfig& config);

// Single EM run from an explicit starting point (restart machinery and
// equivariance tests drive this directly).
FitResult fit_em_with_init(const Dataset& data, const ModelConfig& config,
                           const ModelParams& init, std::uint64_t run_seed);

// Posterior-weighted blend of the regime polynomials, one curve per
// cluster. Clusters with no posterior mass yield NaN rows and set their
// flag when empty_flags is provided.
Eigen::MatrixXd mean_curves(const Posteriors& post, const ModelParams& params,
                            const DesignMatrix& design,
                            std::vector<bool>* empty_flags = nullptr);

// Free-parameter count used by the BIC penalty, and the tighter count
// valid under the left-right constraint (reported for diagnostics).
int free_parameters(int clusters, int regimes, int degree);
int free_parameters_leftright(int clusters, int regimes, int degree);

// BIC = loglik - nu/2 * log(n); higher is better.
double bic_score(const FitResult& result, const ModelConfig& config, int n);
double bic_from_loglik(double loglik, int clusters, int regimes, int degree, int n);

double log_likelihood(const Dataset& data, const ModelParams& params,
                      const DesignMatrix& design);

// Diagnostics for the regression block of one regime: the weighted
// least-squares gradient sum_{i,j} tau*gamma*(x_ij - beta.t_j)*t_j, and
// the weighted Gaussian log-density the M-step maximises. Stationarity
// tests compare the two through finite differences.
Eigen::VectorXd weighted_regime_gradient(const Dataset& data, const Posteriors& post,
                                         const DesignMatrix& design,
                                         const Eigen::VectorXd& beta, int g, int k);
double weighted_regime_loglik(const Dataset& data, const Posteriors& post,
                              const DesignMatrix& design, const Eigen::VectorXd& beta,
                              double sigma2, int g, int k);

}  // namespace regimeclust
