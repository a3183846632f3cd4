#include "regimeclust/datasets.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "regimeclust/baselines.hpp"
#include "regimeclust/errors.hpp"
#include "regimeclust/rng.hpp"

namespace regimeclust {

namespace {

using nlohmann::json;

// --- generators ---------------------------------------------------------

int segment_of(double fraction, const std::array<double, 2>& boundaries) {
  if (fraction < boundaries[0]) return 0;
  if (fraction < boundaries[1]) return 1;
  return 2;
}

double triangle(double t, double centre) {
  return std::max(6.0 - std::abs(t - centre), 0.0);
}

// Cubic through four (u, v) control points, coefficients in the same
// coordinate as u.
Eigen::Vector4d cubic_through(const std::array<double, 4>& u,
                              const std::array<double, 4>& v) {
  Eigen::Matrix4d vand;
  Eigen::Vector4d rhs;
  for (int r = 0; r < 4; ++r) {
    double power = 1.0;
    for (int c = 0; c < 4; ++c) {
      vand(r, c) = power;
      power *= u[r];
    }
    rhs[r] = v[r];
  }
  return vand.fullPivLu().solve(rhs);
}

double cubic_eval(const Eigen::Vector4d& coeffs, double u) {
  return ((coeffs[3] * u + coeffs[2]) * u + coeffs[1]) * u + coeffs[0];
}

constexpr int kSwitchRegimes = 6;

// Within-regime control values for the two switch-like cluster shapes.
// Cluster 1 is the base profile plus separation * delta; edges match so
// the noise-free curves stay continuous.
constexpr std::array<std::array<double, 4>, kSwitchRegimes> kSwitchBase = {{
    {0.3, 2.6, 4.4, 4.9},
    {4.9, 3.9, 3.1, 2.8},
    {2.8, 2.9, 3.0, 3.0},
    {3.0, 3.3, 3.5, 3.4},
    {3.4, 3.2, 3.0, 2.9},
    {2.9, 2.2, 1.0, 0.3},
}};
constexpr std::array<std::array<double, 4>, kSwitchRegimes> kSwitchDelta = {{
    {0.0, 0.0, 0.0, 0.0},
    {0.0, -0.3, -0.5, -0.6},
    {-0.6, -0.5, -0.4, -0.3},
    {-0.3, 0.6, 1.0, 0.8},
    {0.8, 0.6, 0.4, 0.2},
    {0.2, 0.0, -0.2, -0.1},
}};

// --- CSV helpers ----------------------------------------------------------

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  return out;
}

std::string_view trim(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) {
    text.remove_prefix(1);
  }
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' ||
                           text.back() == '\r')) {
    text.remove_suffix(1);
  }
  return text;
}

bool parse_cell(std::string_view cell, double& value) {
  cell = trim(cell);
  if (cell.empty()) return false;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last;
}

std::vector<std::string_view> split_line(const std::string& line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.emplace_back(line.data() + start, line.size() - start);
      break;
    }
    cells.emplace_back(line.data() + start, comma - start);
    start = comma + 1;
  }
  return cells;
}

Constraint constraint_from_string(const std::string& text) {
  if (text == "left-right") return Constraint::LeftRight;
  if (text == "full") return Constraint::Unconstrained;
  throw std::invalid_argument("unknown constraint '" + text + "'");
}

std::string constraint_to_string(Constraint constraint) {
  return constraint == Constraint::LeftRight ? "left-right" : "full";
}

}  // namespace

Dataset gen_piecewise_sim(int n, std::uint64_t seed, const PiecewiseOverrides& o) {
  if (n < 3) throw std::invalid_argument("gen_piecewise_sim: need n >= 3");
  const int m = o.num_samples;
  Dataset data;
  data.grid = TimeGrid::regular(o.t_first, o.t_last, m);
  data.curves.resize(n, m);
  Eigen::VectorXi labels(n);
  Eigen::MatrixXi states(n, m);

  std::mt19937_64 rng = seed_stream(seed, "gen/piecewise");
  const Eigen::VectorXd mixing = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  for (int i = 0; i < n; ++i) {
    const int c = draw_categorical(rng, mixing);
    labels[i] = c;
    for (int j = 0; j < m; ++j) {
      const double fraction = static_cast<double>(j) / (m - 1);
      const int s = segment_of(fraction, o.boundaries);
      states(i, j) = s;
      data.curves(i, j) = o.levels[c][s] + o.sigma * draw_normal(rng);
    }
  }
  data.truth_labels = labels;
  data.true_states = states;
  return data;
}

Dataset gen_waveform(int n, std::uint64_t seed) {
  if (n < 3) throw std::invalid_argument("gen_waveform: need n >= 3");
  const int m = 21;
  Dataset data;
  data.grid = TimeGrid::regular(1.0, 21.0, m);
  data.curves.resize(n, m);
  Eigen::VectorXi labels(n);

  // Class c mixes triangles (a, b): (h1,h2), (h1,h3), (h2,h3).
  constexpr double kCentres[3] = {11.0, 15.0, 7.0};  // h1, h2, h3
  constexpr int kPair[3][2] = {{0, 1}, {0, 2}, {1, 2}};

  std::mt19937_64 rng = seed_stream(seed, "gen/waveform");
  for (int i = 0; i < n; ++i) {
    const int c = i % 3;  // round-robin keeps the classes balanced
    labels[i] = c;
    const double u = draw_uniform(rng);
    for (int j = 0; j < m; ++j) {
      const double t = data.grid.points[j];
      const double ha = triangle(t, kCentres[kPair[c][0]]);
      const double hb = triangle(t, kCentres[kPair[c][1]]);
      data.curves(i, j) = u * ha + (1.0 - u) * hb + draw_normal(rng);
    }
  }
  data.truth_labels = labels;
  return data;
}

Dataset gen_switchlike(int n, std::uint64_t seed, const SwitchLikeOverrides& o) {
  if (n < 2) throw std::invalid_argument("gen_switchlike: need n >= 2");
  const int m = o.num_samples;
  Dataset data;
  data.grid = TimeGrid::regular(o.t_first, o.t_last, m);
  data.curves.resize(n, m);
  Eigen::VectorXi labels(n);
  Eigen::MatrixXi states(n, m);

  // Regime cubics per cluster, in rescaled time over [0, 1].
  std::array<std::array<Eigen::Vector4d, kSwitchRegimes>, 2> shapes;
  for (int k = 0; k < kSwitchRegimes; ++k) {
    const double a = static_cast<double>(k) / kSwitchRegimes;
    const double b = static_cast<double>(k + 1) / kSwitchRegimes;
    const std::array<double, 4> u = {a, a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0, b};
    std::array<double, 4> v0;
    std::array<double, 4> v1;
    for (int c = 0; c < 4; ++c) {
      v0[c] = kSwitchBase[k][c];
      v1[c] = kSwitchBase[k][c] + o.separation * kSwitchDelta[k][c];
    }
    shapes[0][k] = cubic_through(u, v0);
    shapes[1][k] = cubic_through(u, v1);
  }

  std::mt19937_64 rng = seed_stream(seed, "gen/switchlike");
  const Eigen::VectorXd mixing = Eigen::VectorXd::Constant(2, 0.5);
  for (int i = 0; i < n; ++i) {
    const int c = draw_categorical(rng, mixing);
    labels[i] = c;
    // Jittered phase boundaries; the jitter is small enough that the
    // phases stay ordered and every phase keeps some samples.
    std::array<double, kSwitchRegimes - 1> bounds;
    for (int b = 0; b < kSwitchRegimes - 1; ++b) {
      bounds[b] = static_cast<double>(b + 1) / kSwitchRegimes +
                  o.boundary_jitter * (2.0 * draw_uniform(rng) - 1.0);
    }
    for (int j = 0; j < m; ++j) {
      const double u = static_cast<double>(j) / (m - 1);
      int s = 0;
      while (s < kSwitchRegimes - 1 && u >= bounds[s]) ++s;
      states(i, j) = s;
      data.curves(i, j) = cubic_eval(shapes[c][s], u) + o.sigma * draw_normal(rng);
    }
  }
  data.truth_labels = labels;
  data.true_states = states;
  return data;
}

// --- CSV primitives -------------------------------------------------------

void write_matrix_csv(const Eigen::MatrixXd& values, const std::string& path) {
  std::ofstream out = open_for_write(path);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(values(i, j));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void write_matrix_csv(const Eigen::MatrixXi& values, const std::string& path) {
  std::ofstream out = open_for_write(path);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (j > 0) out << ',';
      out << values(i, j);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");

  std::vector<std::vector<double>> rows;
  std::string line;
  int line_number = 0;
  int expected_cols = -1;
  bool first_content_line = true;

  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    const std::vector<std::string_view> cells = split_line(line);

    std::vector<double> row(cells.size());
    bool all_numeric = true;
    int bad_col = -1;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!parse_cell(cells[c], row[c])) {
        all_numeric = false;
        bad_col = static_cast<int>(c) + 1;
        break;
      }
    }

    if (!all_numeric) {
      if (first_content_line) {
        first_content_line = false;  // header row, skip it
        continue;
      }
      throw ParseError("'" + path + "' line " + std::to_string(line_number) +
                           ", column " + std::to_string(bad_col) +
                           ": cell is not numeric",
                       line_number, bad_col);
    }
    first_content_line = false;

    if (expected_cols < 0) {
      expected_cols = static_cast<int>(row.size());
    } else if (static_cast<int>(row.size()) != expected_cols) {
      throw ParseError("'" + path + "' line " + std::to_string(line_number) + ": has " +
                           std::to_string(row.size()) + " columns, expected " +
                           std::to_string(expected_cols),
                       line_number, -1);
    }
    rows.push_back(std::move(row));
  }

  if (rows.empty()) {
    throw ParseError("'" + path + "': no numeric rows", -1, -1);
  }
  Eigen::MatrixXd values(rows.size(), expected_cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < expected_cols; ++j) {
      values(static_cast<Eigen::Index>(i), j) = rows[i][j];
    }
  }
  return values;
}

Eigen::VectorXi read_int_column_csv(const std::string& path) {
  const Eigen::MatrixXd values = read_matrix_csv(path);
  if (values.cols() != 1) {
    throw ParseError("'" + path + "': expected a single column, found " +
                         std::to_string(values.cols()),
                     -1, -1);
  }
  Eigen::VectorXi out(values.rows());
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    const double rounded = std::round(values(i, 0));
    if (std::abs(values(i, 0) - rounded) > 1e-9) {
      throw ParseError("'" + path + "' row " + std::to_string(i + 1) +
                           ": expected an integer",
                       static_cast<int>(i + 1), 1);
    }
    out[i] = static_cast<int>(rounded);
  }
  return out;
}

// --- dataset I/O ------------------------------------------------------------

Dataset load_csv(const std::string& curves_path,
                 const std::optional<std::string>& time_path,
                 const std::optional<std::string>& labels_path) {
  Dataset data;
  data.curves = read_matrix_csv(curves_path);
  const int m = static_cast<int>(data.curves.cols());

  if (time_path) {
    Eigen::MatrixXd t = read_matrix_csv(*time_path);
    if (t.rows() == 1) t.transposeInPlace();
    if (t.cols() != 1 || t.rows() != m) {
      throw ParseError("'" + *time_path + "': expected " + std::to_string(m) +
                           " time points in a single row or column",
                       -1, -1);
    }
    data.grid.points = t.col(0);
  } else {
    data.grid.points = Eigen::VectorXd::LinSpaced(m, 0.0, m - 1);
  }

  if (labels_path) {
    Eigen::VectorXi labels = read_int_column_csv(*labels_path);
    if (labels.size() != data.curves.rows()) {
      throw ParseError("'" + *labels_path + "': " + std::to_string(labels.size()) +
                           " labels for " + std::to_string(data.curves.rows()) +
                           " curves",
                       -1, -1);
    }
    data.truth_labels = labels;
  }

  data.validate();
  return data;
}

void save_dataset(const Dataset& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_matrix_csv(data.curves, (base / "curves.csv").string());
  write_matrix_csv(Eigen::MatrixXd(data.grid.points.transpose()),
                   (base / "time.csv").string());

  Eigen::MatrixXi truth(data.num_curves(), 1);
  if (data.truth_labels) {
    truth.col(0) = *data.truth_labels;
  } else {
    truth.setConstant(-1);
  }
  write_matrix_csv(truth, (base / "truth.csv").string());

  if (data.true_states) {
    write_matrix_csv(*data.true_states, (base / "states.csv").string());
  } else {
    const Eigen::MatrixXi sentinel =
        Eigen::MatrixXi::Constant(data.num_curves(), data.num_samples(), -1);
    write_matrix_csv(sentinel, (base / "states.csv").string());
  }
}

// --- parameter JSON -----------------------------------------------------------

void save_params_json(const ModelParams& params, const DesignMatrix& design,
                      const std::string& path) {
  json doc;
  doc["w"] = std::vector<double>(params.weights.data(),
                                 params.weights.data() + params.weights.size());
  doc["degree"] = design.degree;
  doc["constraint"] = constraint_to_string(params.chains.front().constraint);
  doc["time_rescale"] = {{"offset", design.offset}, {"scale", design.scale}};

  json clusters = json::array();
  for (int g = 0; g < params.clusters(); ++g) {
    json cluster;
    const ChainParams& chain = params.chains[g];
    cluster["pi"] = std::vector<double>(chain.pi.data(), chain.pi.data() + chain.pi.size());
    json trans = json::array();
    for (int k = 0; k < chain.num_states(); ++k) {
      trans.push_back(std::vector<double>(chain.trans.row(k).begin(),
                                          chain.trans.row(k).end()));
    }
    cluster["A"] = trans;
    json betas = json::array();
    for (const Eigen::VectorXd& beta : params.betas[g]) {
      betas.push_back(std::vector<double>(beta.data(), beta.data() + beta.size()));
    }
    cluster["betas"] = betas;
    cluster["sigma2"] = std::vector<double>(params.sigma2.row(g).begin(),
                                            params.sigma2.row(g).end());
    clusters.push_back(std::move(cluster));
  }
  doc["clusters"] = std::move(clusters);

  std::ofstream out = open_for_write(path);
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

ModelParams load_params_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  json doc = json::parse(in);

  ModelParams params;
  const std::vector<double> w = doc.at("w").get<std::vector<double>>();
  params.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
  const Constraint constraint = constraint_from_string(doc.at("constraint"));

  const json& clusters = doc.at("clusters");
  const int G = static_cast<int>(clusters.size());
  params.chains.resize(G);
  params.betas.resize(G);
  for (int g = 0; g < G; ++g) {
    const json& cluster = clusters.at(g);
    const std::vector<double> pi = cluster.at("pi").get<std::vector<double>>();
    const int K = static_cast<int>(pi.size());
    ChainParams& chain = params.chains[g];
    chain.constraint = constraint;
    chain.pi = Eigen::Map<const Eigen::VectorXd>(pi.data(), K);
    chain.trans.resize(K, K);
    for (int k = 0; k < K; ++k) {
      const std::vector<double> row = cluster.at("A").at(k).get<std::vector<double>>();
      chain.trans.row(k) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), K);
    }
    params.betas[g].resize(K);
    for (int k = 0; k < K; ++k) {
      const std::vector<double> beta =
          cluster.at("betas").at(k).get<std::vector<double>>();
      params.betas[g][k] = Eigen::Map<const Eigen::VectorXd>(beta.data(), beta.size());
    }
    const std::vector<double> sigma2 = cluster.at("sigma2").get<std::vector<double>>();
    if (g == 0) params.sigma2.resize(G, K);
    params.sigma2.row(g) = Eigen::Map<const Eigen::RowVectorXd>(sigma2.data(), K);
  }
  params.validate();
  return params;
}

// --- fit output bundle ----------------------------------------------------------

void save_outputs(const FitResult& result, const Posteriors& post, const Dataset& data,
                  const DesignMatrix& design, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);

  Eigen::MatrixXi labels(result.labels.size(), 1);
  labels.col(0) = result.labels;
  write_matrix_csv(labels, (base / "labels.csv").string());
  write_matrix_csv(result.mean_curves, (base / "means.csv").string());
  write_matrix_csv(post.tau, (base / "tau.csv").string());
  write_matrix_csv(result.segmentations, (base / "segmentation.csv").string());
  save_params_json(result.params, design, (base / "params.json").string());

  Eigen::MatrixXd trace(result.loglik_trace.size(), 1);
  for (std::size_t i = 0; i < result.loglik_trace.size(); ++i) {
    trace(static_cast<Eigen::Index>(i), 0) = result.loglik_trace[i];
  }
  write_matrix_csv(trace, (base / "loglik.csv").string());

  json report;
  report["loglik"] = result.loglik_trace.back();
  report["bic"] = result.bic;
  report["iterations"] = result.iterations;
  report["converged"] = result.converged;
  report["degeneracy_events"] = result.degeneracy_events;
  report["ridge_events"] = result.ridge_events;
  if (result.mean_curves.allFinite()) {
    report["intra_cluster_inertia"] =
        intra_cluster_inertia(data, result.labels, result.mean_curves);
  }
  if (data.truth_labels) {
    report["misclassification_rate"] =
        misclassification_rate(result.labels, *data.truth_labels);
  }
  std::ofstream out = open_for_write((base / "report.json").string());
  out << report.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for report.json");
}

}  // namespace regimeclust
