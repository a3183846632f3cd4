#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "regimeclust/regression.hpp"
#include "regimeclust/rng.hpp"

using namespace regimeclust;

namespace {

TimeGrid grid_of(std::initializer_list<double> points) {
  TimeGrid grid;
  grid.points = Eigen::VectorXd(static_cast<Eigen::Index>(points.size()));
  int i = 0;
  for (double p : points) grid.points[i++] = p;
  return grid;
}

}  // namespace

TEST_CASE("design matrix rescales a linear grid to [0,1]") {
  const DesignMatrix design = build_design_matrix(grid_of({0.0, 1.0, 2.0}), 1);
  REQUIRE(design.rows.rows() == 3);
  REQUIRE(design.rows.cols() == 2);
  CHECK(design.rows(0, 0) == 1.0);
  CHECK(design.rows(0, 1) == 0.0);
  CHECK(design.rows(1, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(design.rows(2, 1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("design matrix rejects degenerate grids") {
  CHECK_THROWS_AS(build_design_matrix(grid_of({1.5}), 1), std::invalid_argument);
  CHECK_THROWS_AS(build_design_matrix(grid_of({}), 0), std::invalid_argument);
  CHECK_THROWS_AS(build_design_matrix(grid_of({0.0, 0.0, 1.0}), 1), std::invalid_argument);
  CHECK_THROWS_AS(build_design_matrix(grid_of({0.0, 1.0}), -1), std::invalid_argument);
}

TEST_CASE("cubic design over a dense grid") {
  const DesignMatrix design =
      build_design_matrix(TimeGrid::regular(0.0, 5.0, 100), 3);
  REQUIRE(design.rows.rows() == 100);
  REQUIRE(design.rows.cols() == 4);
  CHECK((design.rows.col(0).array() == 1.0).all());
}

TEST_CASE("Vandermonde structure holds on random grids") {
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 20; ++rep) {
    const int m = 2 + static_cast<int>(draw_index(rng, 30));
    TimeGrid grid;
    grid.points.resize(m);
    double t = -3.0 + 6.0 * draw_uniform(rng);
    for (int j = 0; j < m; ++j) {
      grid.points[j] = t;
      t += 0.05 + draw_uniform(rng);
    }
    const int degree = static_cast<int>(draw_index(rng, 5));
    const DesignMatrix design = build_design_matrix(grid, degree);
    for (int j = 0; j < m; ++j) {
      const double scaled = design.rows.cols() > 1 ? design.rows(j, 1) : 0.0;
      for (int k = 0; k + 1 <= degree; ++k) {
        CHECK(design.rows(j, k + 1) ==
              doctest::Approx(design.rows(j, k) * scaled).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("weighted least squares: weighted mean cases") {
  const DesignMatrix ones = build_design_matrix(grid_of({0.0, 1.0, 2.0}), 0);
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 3.0;

  Eigen::VectorXd w = Eigen::VectorXd::Ones(3);
  CHECK(solve_wls(ones, y, w).beta[0] == doctest::Approx(2.0).epsilon(1e-14));

  w << 1.0, 0.0, 0.0;
  CHECK(solve_wls(ones, y, w).beta[0] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("weighted least squares matches the closed-form 2x2 solve") {
  // Independent oracle: explicit inverse of the 2x2 normal equations.
  std::mt19937_64 rng(7);
  const DesignMatrix design = build_design_matrix(TimeGrid::regular(0.0, 4.0, 5), 1);
  for (int rep = 0; rep < 25; ++rep) {
    Eigen::VectorXd y(5), w(5);
    for (int j = 0; j < 5; ++j) {
      y[j] = -2.0 + 4.0 * draw_uniform(rng);
      w[j] = 0.05 + draw_uniform(rng);
    }
    double s00 = 0, s01 = 0, s11 = 0, b0 = 0, b1 = 0;
    for (int j = 0; j < 5; ++j) {
      const double t = design.rows(j, 1);
      s00 += w[j];
      s01 += w[j] * t;
      s11 += w[j] * t * t;
      b0 += w[j] * y[j];
      b1 += w[j] * y[j] * t;
    }
    const double det = s00 * s11 - s01 * s01;
    const double beta0 = (s11 * b0 - s01 * b1) / det;
    const double beta1 = (s00 * b1 - s01 * b0) / det;

    const WlsResult result = solve_wls(design, y, w);
    CHECK(result.beta[0] == doctest::Approx(beta0).epsilon(1e-10));
    CHECK(result.beta[1] == doctest::Approx(beta1).epsilon(1e-10));
    CHECK_FALSE(result.ridge_applied);
  }
}

TEST_CASE("weighted least squares error handling") {
  const DesignMatrix design = build_design_matrix(grid_of({0.0, 1.0, 2.0}), 0);
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 3.0;
  CHECK_THROWS_AS(solve_wls(design, y, Eigen::VectorXd::Zero(3)), std::invalid_argument);
  CHECK_THROWS_AS(solve_wls(design, y, Eigen::VectorXd::Ones(2)), std::invalid_argument);
  Eigen::VectorXd negative = Eigen::VectorXd::Ones(3);
  negative[1] = -0.5;
  CHECK_THROWS_AS(solve_wls(design, y, negative), std::invalid_argument);
  CHECK_THROWS_AS(solve_wls(design, Eigen::VectorXd::Ones(4), Eigen::VectorXd::Ones(4)),
                  std::invalid_argument);
}

TEST_CASE("rank-deficient system falls back to ridge") {
  // All weight on one point makes a degree-1 normal matrix singular.
  const DesignMatrix design = build_design_matrix(grid_of({0.0, 1.0, 2.0}), 1);
  Eigen::VectorXd y(3), w(3);
  y << 1.0, 5.0, 3.0;
  w << 0.0, 1.0, 0.0;
  const WlsResult result = solve_wls(design, y, w);
  CHECK(result.ridge_applied);
  CHECK(result.beta.allFinite());
}

TEST_CASE("normal-equation stationarity and weight-scale equivariance") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 30; ++rep) {
    const int m = 6 + static_cast<int>(draw_index(rng, 40));
    const int degree = static_cast<int>(draw_index(rng, 4));
    const DesignMatrix design =
        build_design_matrix(TimeGrid::regular(-1.0, 3.0, m), degree);
    const int blocks = 1 + static_cast<int>(draw_index(rng, 3));
    Eigen::VectorXd y(blocks * m), w(blocks * m);
    for (int i = 0; i < blocks * m; ++i) {
      y[i] = 10.0 * draw_uniform(rng) - 5.0;
      w[i] = draw_uniform(rng);
    }
    w[static_cast<int>(draw_index(rng, blocks * m))] = 0.0;
    if (!(w.sum() > 0.0)) w[0] = 0.5;

    const WlsResult result = solve_wls(design, y, w);

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(degree + 1);
    Eigen::VectorXd scale = Eigen::VectorXd::Zero(degree + 1);
    for (int i = 0; i < blocks * m; ++i) {
      const auto row = design.rows.row(i % m);
      grad += w[i] * (y[i] - row.dot(result.beta)) * row.transpose();
      scale += w[i] * y[i] * row.transpose();
    }
    CHECK(grad.lpNorm<Eigen::Infinity>() <=
          1e-8 * (1.0 + scale.lpNorm<Eigen::Infinity>()));

    // Power-of-two rescaling is exact in floating point, so the stated
    // tolerance applies directly; an arbitrary constant adds rounding
    // that the normal-equation conditioning can amplify.
    const WlsResult pow2 = solve_wls(design, y, Eigen::VectorXd(16.0 * w));
    CHECK((pow2.beta - result.beta).lpNorm<Eigen::Infinity>() <= 1e-12);
    const WlsResult scaled = solve_wls(design, y, Eigen::VectorXd(17.5 * w));
    CHECK((scaled.beta - result.beta).lpNorm<Eigen::Infinity>() <=
          1e-9 * (1.0 + result.beta.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("polyval evaluates against design rows") {
  const DesignMatrix design = build_design_matrix(TimeGrid::regular(0.0, 2.0, 7), 1);

  CHECK(polyval(Eigen::VectorXd::Zero(2), design).isZero(0.0));

  const DesignMatrix flat = build_design_matrix(TimeGrid::regular(0.0, 2.0, 7), 0);
  const Eigen::VectorXd constant = polyval(Eigen::VectorXd::Constant(1, 3.25), flat);
  CHECK((constant.array() == 3.25).all());

  Eigen::VectorXd beta(2);
  beta << 1.0, 1.0;
  const Eigen::VectorXd values = polyval(beta, design);
  for (int j = 0; j < 7; ++j) {
    CHECK(values[j] == doctest::Approx(1.0 + design.rows(j, 1)).epsilon(1e-15));
  }

  CHECK_THROWS_AS(polyval(Eigen::VectorXd::Ones(3), design), std::invalid_argument);
}
