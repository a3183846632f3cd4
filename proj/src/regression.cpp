#include "regimeclust/regression.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>

#include "regimeclust/log.hpp"

namespace regimeclust {

TimeGrid TimeGrid::regular(double t_first, double t_last, int num_points) {
  if (num_points < 2) {
    throw std::invalid_argument("TimeGrid::regular: need at least two points");
  }
  if (!(t_last > t_first)) {
    throw std::invalid_argument("TimeGrid::regular: t_last must exceed t_first");
  }
  TimeGrid grid;
  grid.points = Eigen::VectorXd::LinSpaced(num_points, t_first, t_last);
  return grid;
}

void TimeGrid::validate() const {
  if (points.size() < 2) {
    throw std::invalid_argument("TimeGrid: need at least two time points");
  }
  for (int j = 0; j + 1 < points.size(); ++j) {
    if (!(points[j] < points[j + 1])) {
      throw std::invalid_argument("TimeGrid: points must be strictly increasing (index " +
                                  std::to_string(j) + ")");
    }
  }
  if (!points.allFinite()) {
    throw std::invalid_argument("TimeGrid: points must be finite");
  }
}

DesignMatrix build_design_matrix(const TimeGrid& grid, int degree) {
  grid.validate();
  if (degree < 0) {
    throw std::invalid_argument("build_design_matrix: degree must be non-negative");
  }
  const int m = grid.size();
  if (m < degree + 1) {
    log_info("design matrix has fewer rows (" + std::to_string(m) +
             ") than coefficients (" + std::to_string(degree + 1) + ")");
  }

  DesignMatrix design;
  design.degree = degree;
  design.offset = grid.points[0];
  design.scale = grid.points[m - 1] - grid.points[0];
  design.rows.resize(m, degree + 1);
  for (int j = 0; j < m; ++j) {
    const double t = (grid.points[j] - design.offset) / design.scale;
    design.rows(j, 0) = 1.0;
    for (int k = 1; k <= degree; ++k) {
      design.rows(j, k) = design.rows(j, k - 1) * t;
    }
  }
  return design;
}

WlsResult solve_wls(const DesignMatrix& design, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& w) {
  const int m = design.num_points();
  const int d = design.num_coeffs();
  const Eigen::Index n = y.size();
  if (n == 0 || n % m != 0) {
    throw std::invalid_argument("solve_wls: length of y must be a positive multiple of " +
                                std::to_string(m));
  }
  if (w.size() != n) {
    throw std::invalid_argument("solve_wls: y and w must have equal length");
  }
  if (w.minCoeff() < 0.0) {
    throw std::invalid_argument("solve_wls: weights must be non-negative");
  }
  if (!(w.sum() > 0.0)) {
    throw std::invalid_argument("solve_wls: degenerate all-zero weights");
  }

  // Stacked blocks all share the same m design rows, so the normal
  // equations collapse to per-grid-point weight and weighted-response
  // totals before any rank-one updates.
  Eigen::VectorXd w_per_row = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd wy_per_row = Eigen::VectorXd::Zero(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int j = static_cast<int>(i % m);
    w_per_row[j] += w[i];
    wy_per_row[j] += w[i] * y[i];
  }

  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  for (int j = 0; j < m; ++j) {
    if (w_per_row[j] == 0.0 && wy_per_row[j] == 0.0) continue;
    const auto row = design.rows.row(j);
    normal.noalias() += w_per_row[j] * row.transpose() * row;
    rhs.noalias() += wy_per_row[j] * row.transpose();
  }

  WlsResult result;
  Eigen::LLT<Eigen::MatrixXd> llt(normal);
  if (llt.info() == Eigen::Success) {
    result.beta = llt.solve(rhs);
  }
  if (llt.info() != Eigen::Success || !result.beta.allFinite()) {
    const double ridge = 1e-8 * normal.trace() / d;
    normal.diagonal().array() += ridge;
    llt.compute(normal);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("solve_wls: normal equations unsolvable even with ridge");
    }
    result.beta = llt.solve(rhs);
    result.ridge_applied = true;
    log_debug("solve_wls: singular normal matrix, ridge fallback applied");
  }
  return result;
}

Eigen::VectorXd polyval(const Eigen::VectorXd& beta, const DesignMatrix& design) {
  if (beta.size() != design.num_coeffs()) {
    throw std::invalid_argument("polyval: coefficient count " + std::to_string(beta.size()) +
                                " does not match design width " +
                                std::to_string(design.num_coeffs()));
  }
  return design.rows * beta;
}

}  // namespace regimeclust
