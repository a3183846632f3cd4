#pragma once

#include <vector>

#include <Eigen/Core>

namespace regimeclust {

enum class Constraint { LeftRight, Unconstrained };

// Markov chain over K hidden states for one cluster.
// trans(k, l) = p(next = l | current = k). Under LeftRight, trans(k, l)
// is structurally zero unless l == k or l == k + 1, and the final state
// is absorbing.
struct ChainParams {
  Eigen::VectorXd pi;
  Eigen::MatrixXd trans;
  Constraint constraint = Constraint::Unconstrained;

  int num_states() const { return static_cast<int>(pi.size()); }
  void validate() const;  // throws std::invalid_argument
};

// Per-observation log emission densities, one column per state.
struct EmissionTable {
  Eigen::MatrixXd logdens;  // m x K

  int num_steps() const { return static_cast<int>(logdens.rows()); }
  int num_states() const { return static_cast<int>(logdens.cols()); }
};

// Smoothing output for one (curve, cluster) pair.
// xi[j](k, l) = p(z_j = k, z_{j+1} = l | x) for j = 0..m-2, so each
// slice marginalises over l to the gamma row at time j.
struct ChainPosteriors {
  Eigen::MatrixXd gamma;             // m x K, rows sum to 1
  std::vector<Eigen::MatrixXd> xi;   // m-1 slices of K x K, each sums to 1
  double loglik = 0.0;               // nats
  bool degenerate = false;           // no admissible path; uniform fallback
};

// Scaled forward-backward. Likelihood is accumulated as the sum of the
// per-step log normalisers, so sequences of any length are safe. When
// the constraint structure leaves no admissible path, the result is
// flagged degenerate with loglik = -inf and uniform posteriors.
ChainPosteriors forward_backward(const ChainParams& chain, const EmissionTable& emissions);

struct BruteForceResult {
  double loglik = 0.0;
  Eigen::MatrixXd gamma;  // m x K
};

// Direct enumeration of all K^m state sequences. Test oracle only;
// refuses instances with more than 10^7 paths.
BruteForceResult brute_force_loglik(const ChainParams& chain, const EmissionTable& emissions);

// Most probable state path (ties go to the lowest state index).
// Throws std::runtime_error when no path is admissible.
std::vector<int> viterbi(const ChainParams& chain, const EmissionTable& emissions);

// Canonical initial chain: starts in state 0, each state either holds
// or advances with probability 0.5, last state absorbing.
ChainParams make_leftright_chain(int num_states);

}  // namespace regimeclust
