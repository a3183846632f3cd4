#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "regimeclust/baselines.hpp"
#include "regimeclust/datasets.hpp"
#include "regimeclust/mixhmmr.hpp"
#include "regimeclust/rng.hpp"

using namespace regimeclust;

namespace {

Dataset constant_clusters(int n_per, double level0, double level1, double sigma,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset data;
  data.grid = TimeGrid::regular(0.0, 1.0, 15);
  data.curves.resize(2 * n_per, 15);
  Eigen::VectorXi labels(2 * n_per);
  for (int i = 0; i < 2 * n_per; ++i) {
    const double level = i < n_per ? level0 : level1;
    labels[i] = i < n_per ? 0 : 1;
    for (int j = 0; j < 15; ++j) {
      data.curves(i, j) = level + sigma * draw_normal(rng);
    }
  }
  data.truth_labels = labels;
  return data;
}

}  // namespace

TEST_CASE("regression mixture with one cluster is an OLS fit") {
  std::mt19937_64 rng(1);
  Dataset data;
  data.grid = TimeGrid::regular(0.0, 2.0, 18);
  data.curves.resize(6, 18);
  const DesignMatrix design = build_design_matrix(data.grid, 2);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 18; ++j) {
      const double t = design.rows(j, 1);
      data.curves(i, j) = 1.0 + 2.0 * t - 3.0 * t * t + 0.1 * draw_normal(rng);
    }
  }
  ModelConfig config;
  config.n_init = 1;
  const RegMixResult result = fit_regression_mixture(data, 1, 2, config);

  Eigen::VectorXd y(6 * 18);
  for (int i = 0; i < 6; ++i) y.segment(i * 18, 18) = data.curves.row(i);
  const WlsResult ols = solve_wls(design, y, Eigen::VectorXd::Ones(6 * 18));
  CHECK((result.params.betas[0] - ols.beta).lpNorm<Eigen::Infinity>() <= 1e-10);
  CHECK((result.labels.array() == 0).all());
}

TEST_CASE("regression mixture recovers well-separated constant clusters") {
  const Dataset data = constant_clusters(12, 0.0, 10.0, 0.2, 3);
  ModelConfig config;
  config.n_init = 4;
  config.seed = 2;
  const RegMixResult result = fit_regression_mixture(data, 2, 0, config);
  CHECK(misclassification_rate(result.labels, *data.truth_labels) == 0.0);
}

TEST_CASE("single-regime fits: HMM route equals the regression-mixture route") {
  // The two fitters share an init; their EM iterations are independent
  // implementations that must produce the same likelihood path.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset data = constant_clusters(8, 0.0, 2.5, 0.5, 100 + seed);
    ModelConfig config;
    config.clusters = 2;
    config.regimes = 1;
    config.degree = 1;
    config.seed = seed;
    config.max_iter = 80;

    const std::uint64_t restart_seed = derive_seed(seed, "nesting");
    const ModelParams hmm_init = init_params(data, config, restart_seed);
    RegMixParams reg_init;
    reg_init.alpha = hmm_init.weights;
    reg_init.sigma2.resize(2);
    for (int g = 0; g < 2; ++g) {
      reg_init.betas.push_back(hmm_init.betas[g][0]);
      reg_init.sigma2[g] = hmm_init.sigma2(g, 0);
    }

    const FitResult hmm = fit_em_with_init(data, config, hmm_init, restart_seed);
    const RegMixResult reg =
        fit_regression_mixture_with_init(data, 2, 1, config, reg_init);

    REQUIRE(hmm.loglik_trace.size() == reg.loglik_trace.size());
    for (std::size_t q = 0; q < hmm.loglik_trace.size(); ++q) {
      CHECK(std::abs(hmm.loglik_trace[q] - reg.loglik_trace[q]) <=
            1e-9 * (1.0 + std::abs(reg.loglik_trace[q])));
    }
  }
}

TEST_CASE("regmix_init mirrors the single-regime HMM init") {
  const Dataset data = constant_clusters(10, 0.0, 3.0, 0.4, 9);
  ModelConfig config;
  config.clusters = 2;
  config.regimes = 1;
  config.degree = 0;
  const ModelParams hmm_init = init_params(data, config, 555);
  const RegMixParams reg_init = regmix_init(data, 2, 0, config, 555);
  for (int g = 0; g < 2; ++g) {
    CHECK(reg_init.betas[g] == hmm_init.betas[g][0]);
    CHECK(reg_init.sigma2[g] == hmm_init.sigma2(g, 0));
  }
}

TEST_CASE("constant-emission mixture of HMMs is the degree-0 fit") {
  const Dataset data = gen_piecewise_sim(18, 77);
  ModelConfig config;
  config.clusters = 2;
  config.regimes = 2;
  config.degree = 0;
  config.n_init = 3;
  config.seed = 8;
  const FitResult direct = fit_em(data, config);
  const FitResult constant = fit_mixhmm_constant(data, 2, 2, config);
  REQUIRE(direct.loglik_trace.size() == constant.loglik_trace.size());
  for (std::size_t q = 0; q < direct.loglik_trace.size(); ++q) {
    CHECK(direct.loglik_trace[q] == constant.loglik_trace[q]);
  }
  CHECK(direct.labels == constant.labels);
}

TEST_CASE("flat clusters: regime count does not change the partition") {
  const Dataset data = constant_clusters(10, 0.0, 4.0, 0.3, 21);
  ModelConfig config;
  config.n_init = 3;
  config.seed = 4;
  const FitResult k1 = fit_mixhmm_constant(data, 2, 1, config);
  const FitResult k2 = fit_mixhmm_constant(data, 2, 2, config);
  CHECK(misclassification_rate(k1.labels, k2.labels) == 0.0);
}

TEST_CASE("k-means: degenerate and separated cases") {
  const Dataset data = constant_clusters(6, 0.0, 50.0, 0.2, 15);
  ModelConfig config;
  config.n_init = 3;
  config.seed = 19;

  const KMeansResult exact = kmeans_curves(data, data.num_curves(), config);
  CHECK(exact.inertia == doctest::Approx(0.0).epsilon(1e-12));

  const KMeansResult two = kmeans_curves(data, 2, config);
  CHECK(misclassification_rate(two.labels, *data.truth_labels) == 0.0);

  // Lloyd iterations never increase the objective.
  const Dataset pw = gen_piecewise_sim(40, 33);
  const KMeansResult run = kmeans_curves(pw, 3, config);
  for (std::size_t q = 0; q + 1 < run.inertia_trace.size(); ++q) {
    CHECK(run.inertia_trace[q + 1] <= run.inertia_trace[q] + 1e-9);
  }
  CHECK_THROWS_AS(kmeans_curves(data, data.num_curves() + 1, config),
                  std::invalid_argument);
}

TEST_CASE("misclassification rate is a permutation-invariant disagreement") {
  Eigen::VectorXi truth(6), pred(6);
  truth << 0, 0, 1, 1, 2, 2;

  CHECK(misclassification_rate(truth, truth) == 0.0);

  pred << 2, 2, 0, 0, 1, 1;  // relabelled only
  CHECK(misclassification_rate(pred, truth) == 0.0);

  Eigen::VectorXi sixty_truth(60), sixty_pred(60);
  for (int i = 0; i < 60; ++i) {
    sixty_truth[i] = i % 3;
    sixty_pred[i] = i % 3;
  }
  sixty_pred[0] = 1;
  sixty_pred[1] = 2;
  sixty_pred[3] = 2;
  CHECK(misclassification_rate(sixty_pred, sixty_truth) ==
        doctest::Approx(0.05).epsilon(1e-12));

  // Random labelings stay invariant under random relabelling, and the
  // best matching keeps the rate at or below (G-1)/G on balanced draws.
  std::mt19937_64 rng(5);
  double rate_sum = 0.0;
  for (int rep = 0; rep < 40; ++rep) {
    Eigen::VectorXi a(40), b(40);
    for (int i = 0; i < 40; ++i) {
      a[i] = static_cast<int>(draw_index(rng, 4));
      b[i] = static_cast<int>(draw_index(rng, 4));
    }
    int perm[4] = {1, 3, 0, 2};
    Eigen::VectorXi remapped(40);
    for (int i = 0; i < 40; ++i) remapped[i] = perm[b[i]];
    CHECK(misclassification_rate(b, a) ==
          doctest::Approx(misclassification_rate(remapped, a)).epsilon(1e-12));
    rate_sum += misclassification_rate(b, a);
  }
  CHECK(rate_sum / 40.0 <= 3.0 / 4.0);

  CHECK_THROWS_AS(misclassification_rate(truth, Eigen::VectorXi::Zero(5)),
                  std::invalid_argument);
  Eigen::VectorXi too_many(9);
  too_many << 0, 1, 2, 3, 4, 5, 6, 7, 8;
  CHECK_THROWS_AS(misclassification_rate(too_many, too_many), std::invalid_argument);
}

TEST_CASE("intra-cluster inertia sums squared distances to the assigned mean") {
  Dataset data;
  data.grid = TimeGrid::regular(0.0, 1.0, 4);
  data.curves.resize(2, 4);
  data.curves.row(0) << 1.0, 1.0, 1.0, 1.0;
  data.curves.row(1) << 2.5, 2.5, 2.5, 2.5;
  Eigen::MatrixXd means(2, 4);
  means.row(0) << 1.0, 1.0, 1.0, 1.0;
  means.row(1) << 2.0, 2.0, 2.0, 2.0;
  Eigen::VectorXi labels(2);
  labels << 0, 1;

  CHECK(intra_cluster_inertia(data, labels, means) ==
        doctest::Approx(4 * 0.25).epsilon(1e-12));

  labels << 0, 0;
  CHECK(intra_cluster_inertia(data, labels, means) ==
        doctest::Approx(4 * 1.5 * 1.5).epsilon(1e-12));

  Eigen::VectorXi bad(2);
  bad << 0, 5;
  CHECK_THROWS_AS(intra_cluster_inertia(data, bad, means), std::invalid_argument);
}
