#include "regimeclust/hmm.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace regimeclust {

namespace {

constexpr double kStochasticTol = 1e-12;
constexpr double kLogDensClamp = -745.0;  // smallest finite exp()
constexpr double kInf = std::numeric_limits<double>::infinity();

// exp of the row after shifting its maximum to zero; the shift is the
// returned log correction. Keeps every step of the scaled recursion in
// the normal floating-point range regardless of the density magnitudes.
Eigen::VectorXd shifted_dens(const Eigen::RowVectorXd& logdens_row, double& shift) {
  shift = logdens_row.maxCoeff();
  Eigen::VectorXd dens(logdens_row.size());
  for (int k = 0; k < logdens_row.size(); ++k) {
    dens[k] = std::exp(std::max(logdens_row[k] - shift, kLogDensClamp));
  }
  return dens;
}

ChainPosteriors degenerate_posteriors(const ChainParams& chain, int m) {
  const int K = chain.num_states();
  ChainPosteriors post;
  post.gamma = Eigen::MatrixXd::Constant(m, K, 1.0 / K);
  // Uniform over the structurally allowed transitions only.
  Eigen::MatrixXd slice(K, K);
  for (int k = 0; k < K; ++k) {
    for (int l = 0; l < K; ++l) {
      slice(k, l) = chain.trans(k, l) > 0.0 ? 1.0 : 0.0;
    }
  }
  slice /= slice.sum();
  post.xi.assign(std::max(m - 1, 0), slice);
  post.loglik = -kInf;
  post.degenerate = true;
  return post;
}

void check_dimensions(const ChainParams& chain, const EmissionTable& emissions) {
  if (emissions.num_states() != chain.num_states()) {
    throw std::invalid_argument("emission table has " +
                                std::to_string(emissions.num_states()) +
                                " states, chain has " +
                                std::to_string(chain.num_states()));
  }
  if (emissions.num_steps() < 1) {
    throw std::invalid_argument("emission table must cover at least one time step");
  }
}

}  // namespace

void ChainParams::validate() const {
  const int K = num_states();
  if (K < 1) throw std::invalid_argument("ChainParams: need at least one state");
  if (trans.rows() != K || trans.cols() != K) {
    throw std::invalid_argument("ChainParams: transition matrix must be KxK");
  }
  if (pi.minCoeff() < 0.0 || trans.minCoeff() < 0.0) {
    throw std::invalid_argument("ChainParams: probabilities must be non-negative");
  }
  if (std::abs(pi.sum() - 1.0) > kStochasticTol) {
    throw std::invalid_argument("ChainParams: initial distribution must sum to 1");
  }
  for (int k = 0; k < K; ++k) {
    if (std::abs(trans.row(k).sum() - 1.0) > kStochasticTol) {
      throw std::invalid_argument("ChainParams: transition row " + std::to_string(k) +
                                  " must sum to 1");
    }
  }
  if (constraint == Constraint::LeftRight) {
    for (int k = 0; k < K; ++k) {
      for (int l = 0; l < K; ++l) {
        if ((l < k || l > k + 1) && trans(k, l) != 0.0) {
          throw std::invalid_argument("ChainParams: left-right structure violated at (" +
                                      std::to_string(k) + "," + std::to_string(l) + ")");
        }
      }
    }
    if (trans(K - 1, K - 1) != 1.0) {
      throw std::invalid_argument("ChainParams: last left-right state must be absorbing");
    }
  }
}

ChainParams make_leftright_chain(int num_states) {
  if (num_states < 1) {
    throw std::invalid_argument("make_leftright_chain: need at least one state");
  }
  ChainParams chain;
  chain.constraint = Constraint::LeftRight;
  chain.pi = Eigen::VectorXd::Zero(num_states);
  chain.pi[0] = 1.0;
  chain.trans = Eigen::MatrixXd::Zero(num_states, num_states);
  for (int k = 0; k + 1 < num_states; ++k) {
    chain.trans(k, k) = 0.5;
    chain.trans(k, k + 1) = 0.5;
  }
  chain.trans(num_states - 1, num_states - 1) = 1.0;
  return chain;
}

ChainPosteriors forward_backward(const ChainParams& chain, const EmissionTable& emissions) {
  check_dimensions(chain, emissions);
  const int m = emissions.num_steps();
  const int K = chain.num_states();

  // Per-step max-shifted densities; shifts re-enter through the log
  // normalisers so the likelihood stays exact.
  std::vector<Eigen::VectorXd> dens_cache(m);
  std::vector<double> shift_cache(m);
  for (int j = 0; j < m; ++j) {
    dens_cache[j] = shifted_dens(emissions.logdens.row(j), shift_cache[j]);
  }

  Eigen::MatrixXd alpha(m, K);   // scaled forward variables
  Eigen::VectorXd log_norm(m);   // per-step log normalisers (incl. density shift)

  Eigen::VectorXd step = chain.pi.cwiseProduct(dens_cache[0]);
  double c = step.sum();
  if (!(c > 0.0) || !std::isfinite(c)) return degenerate_posteriors(chain, m);
  alpha.row(0) = step / c;
  log_norm[0] = std::log(c) + shift_cache[0];

  for (int j = 1; j < m; ++j) {
    step = (chain.trans.transpose() * alpha.row(j - 1).transpose())
               .cwiseProduct(dens_cache[j]);
    c = step.sum();
    if (!(c > 0.0) || !std::isfinite(c)) return degenerate_posteriors(chain, m);
    alpha.row(j) = step / c;
    log_norm[j] = std::log(c) + shift_cache[j];
  }

  // Scaled backward pass, reusing the forward normalisers.
  Eigen::MatrixXd beta(m, K);
  beta.row(m - 1).setOnes();
  for (int j = m - 2; j >= 0; --j) {
    const double cj = std::exp(log_norm[j + 1] - shift_cache[j + 1]);
    beta.row(j) = (chain.trans *
                   dens_cache[j + 1].cwiseProduct(beta.row(j + 1).transpose())) /
                  cj;
  }

  ChainPosteriors post;
  post.loglik = log_norm.sum();
  post.gamma = alpha.cwiseProduct(beta);
  for (int j = 0; j < m; ++j) {
    const double row_sum = post.gamma.row(j).sum();
    if (!(row_sum > 0.0) || !std::isfinite(row_sum)) return degenerate_posteriors(chain, m);
    post.gamma.row(j) /= row_sum;
  }

  post.xi.reserve(m - 1);
  for (int j = 0; j + 1 < m; ++j) {
    Eigen::MatrixXd slice(K, K);
    for (int k = 0; k < K; ++k) {
      for (int l = 0; l < K; ++l) {
        slice(k, l) = chain.trans(k, l) == 0.0
                          ? 0.0
                          : alpha(j, k) * chain.trans(k, l) * dens_cache[j + 1][l] *
                                beta(j + 1, l);
      }
    }
    const double total = slice.sum();
    if (!(total > 0.0) || !std::isfinite(total)) return degenerate_posteriors(chain, m);
    post.xi.push_back(slice / total);
  }
  return post;
}

BruteForceResult brute_force_loglik(const ChainParams& chain, const EmissionTable& emissions) {
  check_dimensions(chain, emissions);
  const int m = emissions.num_steps();
  const int K = chain.num_states();

  double paths = 1.0;
  for (int j = 0; j < m; ++j) {
    paths *= K;
    if (paths > 1e7) {
      throw std::invalid_argument("brute_force_loglik: more than 10^7 paths");
    }
  }
  const long total_paths = static_cast<long>(paths);

  Eigen::MatrixXd log_trans(K, K);
  Eigen::VectorXd log_pi(K);
  for (int k = 0; k < K; ++k) {
    log_pi[k] = chain.pi[k] > 0.0 ? std::log(chain.pi[k]) : -kInf;
    for (int l = 0; l < K; ++l) {
      log_trans(k, l) = chain.trans(k, l) > 0.0 ? std::log(chain.trans(k, l)) : -kInf;
    }
  }

  const auto path_logprob = [&](const std::vector<int>& z) {
    double lp = log_pi[z[0]] + emissions.logdens(0, z[0]);
    for (int j = 1; j < m; ++j) {
      lp += log_trans(z[j - 1], z[j]) + emissions.logdens(j, z[j]);
    }
    return lp;
  };

  // Two passes: locate the maximum, then accumulate shifted weights.
  std::vector<int> z(m, 0);
  double max_lp = -kInf;
  for (long p = 0; p < total_paths; ++p) {
    long rest = p;
    for (int j = 0; j < m; ++j) {
      z[j] = static_cast<int>(rest % K);
      rest /= K;
    }
    max_lp = std::max(max_lp, path_logprob(z));
  }

  BruteForceResult result;
  result.gamma = Eigen::MatrixXd::Zero(m, K);
  if (max_lp == -kInf) {
    result.loglik = -kInf;
    result.gamma.setConstant(1.0 / K);
    return result;
  }

  double weight_sum = 0.0;
  for (long p = 0; p < total_paths; ++p) {
    long rest = p;
    for (int j = 0; j < m; ++j) {
      z[j] = static_cast<int>(rest % K);
      rest /= K;
    }
    const double w = std::exp(path_logprob(z) - max_lp);
    if (w == 0.0) continue;
    weight_sum += w;
    for (int j = 0; j < m; ++j) result.gamma(j, z[j]) += w;
  }
  result.loglik = max_lp + std::log(weight_sum);
  result.gamma /= weight_sum;
  return result;
}

std::vector<int> viterbi(const ChainParams& chain, const EmissionTable& emissions) {
  check_dimensions(chain, emissions);
  const int m = emissions.num_steps();
  const int K = chain.num_states();

  Eigen::MatrixXd log_trans(K, K);
  for (int k = 0; k < K; ++k) {
    for (int l = 0; l < K; ++l) {
      log_trans(k, l) = chain.trans(k, l) > 0.0 ? std::log(chain.trans(k, l)) : -kInf;
    }
  }

  Eigen::MatrixXd score(m, K);
  Eigen::MatrixXi back(m, K);
  for (int k = 0; k < K; ++k) {
    score(0, k) = (chain.pi[k] > 0.0 ? std::log(chain.pi[k]) : -kInf) +
                  emissions.logdens(0, k);
  }
  for (int j = 1; j < m; ++j) {
    for (int l = 0; l < K; ++l) {
      double best = -kInf;
      int best_k = 0;
      for (int k = 0; k < K; ++k) {
        const double cand = score(j - 1, k) + log_trans(k, l);
        if (cand > best) {  // strict: ties keep the lowest predecessor
          best = cand;
          best_k = k;
        }
      }
      score(j, l) = best + emissions.logdens(j, l);
      back(j, l) = best_k;
    }
  }

  int last = 0;
  double best_final = -kInf;
  for (int k = 0; k < K; ++k) {
    if (score(m - 1, k) > best_final) {
      best_final = score(m - 1, k);
      last = k;
    }
  }
  if (best_final == -kInf) {
    throw std::runtime_error("viterbi: no admissible state path");
  }

  std::vector<int> path(m);
  path[m - 1] = last;
  for (int j = m - 1; j > 0; --j) {
    path[j - 1] = back(j, path[j]);
  }
  return path;
}

}  // namespace regimeclust
