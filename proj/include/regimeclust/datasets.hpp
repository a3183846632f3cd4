#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "regimeclust/mixhmmr.hpp"

namespace regimeclust {

// Three-cluster piecewise-constant benchmark: m regular samples over
// [0, 5], three equal-length levels per cluster, Gaussian noise.
struct PiecewiseOverrides {
  std::array<std::array<double, 3>, 3> levels = {{{6.2, 5.5, 6.0},
                                                  {6.0, 5.3, 6.3},
                                                  {5.5, 6.0, 5.5}}};
  double sigma = 0.25;
  std::array<double, 2> boundaries = {1.0 / 3.0, 2.0 / 3.0};  // fractions of the range
  int num_samples = 100;
  double t_first = 0.0;
  double t_last = 5.0;
};

Dataset gen_piecewise_sim(int n, std::uint64_t seed,
                          const PiecewiseOverrides& overrides = {});

// Breiman's three-class waveform problem: 21 samples on t = 1..21,
// each class a random convex combination of two shifted triangles plus
// unit noise. Classes are assigned round-robin so counts stay balanced.
Dataset gen_waveform(int n, std::uint64_t seed);

// Two clusters of six-phase curves with left-right phase ordering and
// cubic within-phase shapes, standing in for power curves recorded
// during switch operations. separation = 0 collapses the clusters.
struct SwitchLikeOverrides {
  int num_samples = 120;
  double t_first = 0.0;
  double t_last = 6.0;
  double separation = 1.0;
  double sigma = 0.15;
  double boundary_jitter = 0.025;  // fraction of the range, per boundary
};

Dataset gen_switchlike(int n, std::uint64_t seed,
                       const SwitchLikeOverrides& overrides = {});

// --- File ingestion and output ---------------------------------------

// Rectangular numeric CSV, one curve per row. An optional single-row
// (or single-column) time file supplies the grid, otherwise 0..m-1.
// An optional single-column labels file attaches truth labels.
// Malformed content raises ParseError naming the row and column.
Dataset load_csv(const std::string& curves_path,
                 const std::optional<std::string>& time_path = std::nullopt,
                 const std::optional<std::string>& labels_path = std::nullopt);

// Writes curves.csv / time.csv / truth.csv / states.csv for a generated
// dataset (missing latent fields are written as -1 sentinels).
void save_dataset(const Dataset& data, const std::string& dir);

// Writes the full fit file set into dir:
//   labels.csv, means.csv, tau.csv, segmentation.csv, params.json,
//   loglik.csv, report.json (evaluation metrics when truth is present).
void save_outputs(const FitResult& result, const Posteriors& post,
                  const Dataset& data, const DesignMatrix& design,
                  const std::string& dir);

// params.json round trip.
void save_params_json(const ModelParams& params, const DesignMatrix& design,
                      const std::string& path);
ModelParams load_params_json(const std::string& path);

// CSV primitives shared by the writers above; values are printed with
// 17 significant digits so a load reproduces them exactly.
void write_matrix_csv(const Eigen::MatrixXd& values, const std::string& path);
void write_matrix_csv(const Eigen::MatrixXi& values, const std::string& path);
Eigen::MatrixXd read_matrix_csv(const std::string& path);
Eigen::VectorXi read_int_column_csv(const std::string& path);

}  // namespace regimeclust
