#pragma once

#include <Eigen/Core>

namespace regimeclust {

// Shared sampling grid: strictly increasing time points, at least two.
struct TimeGrid {
  Eigen::VectorXd points;

  static TimeGrid regular(double t_first, double t_last, int num_points);

  int size() const { return static_cast<int>(points.size()); }
  void validate() const;  // throws std::invalid_argument
};

// Vandermonde basis over an affinely rescaled copy of the grid.
// Raw times are mapped to [0, 1] before powers are taken; high-degree
// monomials over wide raw ranges make the normal equations unusable.
// Coefficients produced against this matrix live in the rescaled
// coordinates recorded by (offset, scale).
struct DesignMatrix {
  Eigen::MatrixXd rows;  // m x (degree+1); column 0 is all ones
  int degree = 0;
  double offset = 0.0;   // rescaled t = (t - offset) / scale
  double scale = 1.0;

  int num_points() const { return static_cast<int>(rows.rows()); }
  int num_coeffs() const { return degree + 1; }
};

DesignMatrix build_design_matrix(const TimeGrid& grid, int degree);

struct WlsResult {
  Eigen::VectorXd beta;
  bool ridge_applied = false;
};

// Minimises sum_i w_i (y_i - beta . x_i)^2 via Cholesky on the normal
// equations. y and w may stack several per-curve blocks: their length
// must be a positive multiple of the design row count, entry i mapping
// to design row i % m. A singular normal matrix falls back to a small
// ridge (flagged in the result); all-zero weights are an error.
WlsResult solve_wls(const DesignMatrix& design, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& w);

// Evaluates the polynomial at every grid point: out[j] = beta . rows[j].
Eigen::VectorXd polyval(const Eigen::VectorXd& beta, const DesignMatrix& design);

}  // namespace regimeclust
