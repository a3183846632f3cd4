#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "regimeclust/baselines.hpp"
#include "regimeclust/datasets.hpp"
#include "regimeclust/errors.hpp"
#include "regimeclust/log.hpp"
#include "regimeclust/mixhmmr.hpp"
#include "regimeclust/rng.hpp"

namespace {

using nlohmann::json;
using namespace regimeclust;

constexpr const char* kVersion = "0.1.0";

constexpr int kExitUsage = 1;
constexpr int kExitFitFailure = 2;

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Written last, atomically, so a complete manifest implies a complete run.
void write_manifest(const std::string& dir, const std::string& command,
                    const json& config, std::uint64_t seed, double wall_clock,
                    int degeneracy_events, const std::vector<std::string>& outputs) {
  json manifest;
  manifest["command"] = command;
  manifest["config"] = config;
  manifest["seed"] = seed;
  manifest["versions"] = {{"regimeclust", kVersion}};
  manifest["wall_clock_seconds"] = wall_clock;
  manifest["degeneracy_events"] = degeneracy_events;
  manifest["outputs"] = outputs;

  const std::filesystem::path final_path = std::filesystem::path(dir) / "manifest.json";
  const std::filesystem::path tmp_path = final_path.string() + ".tmp";
  {
    std::ofstream out(tmp_path);
    if (!out) throw std::runtime_error("cannot write manifest to '" + dir + "'");
    out << manifest.dump(2) << '\n';
  }
  std::filesystem::rename(tmp_path, final_path);
}

Constraint parse_constraint(const std::string& text) {
  if (text == "left-right") return Constraint::LeftRight;
  if (text == "full") return Constraint::Unconstrained;
  throw CLI::ValidationError("--constraint", "must be 'left-right' or 'full'");
}

struct FitFlags {
  std::string input;
  std::string time;
  std::string truth;
  std::string model = "mixhmmr";
  int clusters = 1;
  int regimes = 1;
  int degree = 0;
  std::string constraint = "left-right";
  int max_iter = 1000;
  double tol = 1e-6;
  int runs = 10;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out;
};

struct SimulateFlags {
  std::string scenario;
  int n = 60;
  std::uint64_t seed = 0;
  std::string out;
  double sigma = -1.0;       // scenario default when negative
  double separation = 1.0;   // switchlike only
};

struct EvaluateFlags {
  std::string pred;
  std::string truth;
  std::string input;
  std::string means;
  std::string out;
};

struct SelectFlags {
  std::string input;
  std::string time;
  int gmax = 4;
  int kmax = 4;
  int pmax = 0;
  int runs = 10;
  int max_iter = 1000;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  int threads = 1;
  int grid_guard = 200;
  std::string out;
};

int run_simulate(const SimulateFlags& flags) {
  Stopwatch watch;
  Dataset data;
  if (flags.scenario == "piecewise") {
    PiecewiseOverrides o;
    if (flags.sigma >= 0.0) o.sigma = flags.sigma;
    data = gen_piecewise_sim(flags.n, flags.seed, o);
  } else if (flags.scenario == "waveform") {
    data = gen_waveform(flags.n, flags.seed);
  } else if (flags.scenario == "switchlike") {
    SwitchLikeOverrides o;
    if (flags.sigma >= 0.0) o.sigma = flags.sigma;
    o.separation = flags.separation;
    data = gen_switchlike(flags.n, flags.seed, o);
  } else {
    std::cerr << "unknown scenario '" << flags.scenario << "'\n";
    return kExitUsage;
  }

  save_dataset(data, flags.out);
  json config = {{"scenario", flags.scenario}, {"n", flags.n},
                 {"seed", flags.seed},         {"out", flags.out},
                 {"sigma", flags.sigma},       {"separation", flags.separation}};
  write_manifest(flags.out, "simulate", config, flags.seed, watch.seconds(), 0,
                 {"curves.csv", "time.csv", "truth.csv", "states.csv"});
  std::cout << "wrote " << flags.n << " curves to " << flags.out << "\n";
  return 0;
}

Dataset load_input(const std::string& curves, const std::string& time,
                   const std::string& truth) {
  std::optional<std::string> time_path;
  std::optional<std::string> truth_path;
  if (!time.empty()) time_path = time;
  if (!truth.empty()) truth_path = truth;
  return load_csv(curves, time_path, truth_path);
}

json fit_config_json(const FitFlags& flags) {
  return {{"input", flags.input},     {"time", flags.time},
          {"truth", flags.truth},     {"model", flags.model},
          {"clusters", flags.clusters}, {"regimes", flags.regimes},
          {"degree", flags.degree},   {"constraint", flags.constraint},
          {"max_iter", flags.max_iter}, {"tol", flags.tol},
          {"runs", flags.runs},       {"seed", flags.seed},
          {"threads", flags.threads}, {"out", flags.out}};
}

int run_fit(const FitFlags& flags) {
  Stopwatch watch;
  const Dataset data = load_input(flags.input, flags.time, flags.truth);

  ModelConfig config;
  config.clusters = flags.clusters;
  config.regimes = flags.regimes;
  config.degree = flags.degree;
  config.constraint = parse_constraint(flags.constraint);
  config.max_iter = flags.max_iter;
  config.rel_tol = flags.tol;
  config.n_init = flags.runs;
  config.seed = flags.seed;
  config.threads = flags.threads;

  std::vector<std::string> outputs;
  int degeneracy_events = 0;

  if (flags.model == "mixhmmr" || flags.model == "mixhmm") {
    const FitResult result = flags.model == "mixhmmr"
                                 ? fit_em(data, config)
                                 : fit_mixhmm_constant(data, flags.clusters,
                                                       flags.regimes, config);
    const DesignMatrix design =
        build_design_matrix(data.grid, flags.model == "mixhmmr" ? flags.degree : 0);
    const Posteriors post = e_step(data, result.params, design, config.threads);
    save_outputs(result, post, data, design, flags.out);
    degeneracy_events = result.degeneracy_events;
    outputs = {"labels.csv", "means.csv",  "tau.csv",     "segmentation.csv",
               "params.json", "loglik.csv", "report.json"};
  } else if (flags.model == "mixreg") {
    const RegMixResult result =
        fit_regression_mixture(data, flags.clusters, flags.degree, config);
    std::filesystem::create_directories(flags.out);
    const std::filesystem::path base(flags.out);
    Eigen::MatrixXi labels(result.labels.size(), 1);
    labels.col(0) = result.labels;
    write_matrix_csv(labels, (base / "labels.csv").string());
    write_matrix_csv(result.mean_curves, (base / "means.csv").string());
    write_matrix_csv(result.tau, (base / "tau.csv").string());
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
    report["intra_cluster_inertia"] =
        intra_cluster_inertia(data, result.labels, result.mean_curves);
    if (data.truth_labels) {
      report["misclassification_rate"] =
          misclassification_rate(result.labels, *data.truth_labels);
    }
    std::ofstream rep((base / "report.json").string());
    rep << report.dump(2) << '\n';
    degeneracy_events = result.degeneracy_events;
    outputs = {"labels.csv", "means.csv", "tau.csv", "loglik.csv", "report.json"};
  } else {  // kmeans
    const KMeansResult result = kmeans_curves(data, flags.clusters, config);
    std::filesystem::create_directories(flags.out);
    const std::filesystem::path base(flags.out);
    Eigen::MatrixXi labels(result.labels.size(), 1);
    labels.col(0) = result.labels;
    write_matrix_csv(labels, (base / "labels.csv").string());
    write_matrix_csv(result.centroids, (base / "means.csv").string());
    json report;
    report["inertia"] = result.inertia;
    if (data.truth_labels) {
      report["misclassification_rate"] =
          misclassification_rate(result.labels, *data.truth_labels);
    }
    std::ofstream rep((base / "report.json").string());
    rep << report.dump(2) << '\n';
    outputs = {"labels.csv", "means.csv", "report.json"};
  }

  write_manifest(flags.out, "fit", fit_config_json(flags), flags.seed, watch.seconds(),
                 degeneracy_events, outputs);
  std::cout << "fit complete; outputs in " << flags.out << "\n";
  return 0;
}

int run_evaluate(const EvaluateFlags& flags) {
  Stopwatch watch;
  const Eigen::VectorXi pred = read_int_column_csv(flags.pred);
  const Eigen::VectorXi truth = read_int_column_csv(flags.truth);
  if (pred.size() != truth.size()) {
    std::cerr << "evaluate: " << pred.size() << " predictions vs " << truth.size()
              << " truth labels\n";
    return kExitUsage;
  }
  const double rate = misclassification_rate(pred, truth);
  std::cout << "misclassification_rate " << rate << "\n";

  json report;
  report["misclassification_rate"] = rate;
  if (!flags.input.empty() && !flags.means.empty()) {
    const Dataset data = load_csv(flags.input);
    const Eigen::MatrixXd means = read_matrix_csv(flags.means);
    const double inertia = intra_cluster_inertia(data, pred, means);
    std::cout << "intra_cluster_inertia " << inertia << "\n";
    report["intra_cluster_inertia"] = inertia;
  }

  std::filesystem::create_directories(flags.out);
  std::ofstream out(std::filesystem::path(flags.out) / "evaluation.json");
  out << report.dump(2) << '\n';
  json config = {{"pred", flags.pred}, {"truth", flags.truth},
                 {"input", flags.input}, {"means", flags.means}, {"out", flags.out}};
  write_manifest(flags.out, "evaluate", config, 0, watch.seconds(), 0,
                 {"evaluation.json"});
  return 0;
}

int run_select(const SelectFlags& flags) {
  Stopwatch watch;
  const int cells = flags.gmax * flags.kmax * (flags.pmax + 1);
  if (cells > flags.grid_guard) {
    std::cerr << "select: grid has " << cells << " cells, guard is " << flags.grid_guard
              << "; narrow --gmax/--kmax/--pmax or raise --grid-guard\n";
    return kExitUsage;
  }
  const Dataset data = load_input(flags.input, flags.time, "");

  struct Row {
    int clusters, regimes, degree;
    double loglik, bic;
    int nu, nu_leftright;
  };
  std::vector<Row> rows;
  int best_index = -1;
  int total_degeneracies = 0;

  for (int g = 1; g <= flags.gmax; ++g) {
    for (int k = 1; k <= flags.kmax; ++k) {
      for (int p = 0; p <= flags.pmax; ++p) {
        ModelConfig config;
        config.clusters = g;
        config.regimes = k;
        config.degree = p;
        config.max_iter = flags.max_iter;
        config.rel_tol = flags.tol;
        config.n_init = flags.runs;
        config.threads = flags.threads;
        config.seed = derive_seed(flags.seed, "select/g" + std::to_string(g) + "/k" +
                                                  std::to_string(k) + "/p" +
                                                  std::to_string(p));
        const FitResult result = fit_em(data, config);
        total_degeneracies += result.degeneracy_events;
        Row row;
        row.clusters = g;
        row.regimes = k;
        row.degree = p;
        row.loglik = result.loglik_trace.back();
        row.bic = result.bic;
        row.nu = free_parameters(g, k, p);
        row.nu_leftright = free_parameters_leftright(g, k, p);
        rows.push_back(row);
        if (best_index < 0 || row.bic > rows[best_index].bic) {
          best_index = static_cast<int>(rows.size()) - 1;
        }
        log_info("select: G=" + std::to_string(g) + " K=" + std::to_string(k) +
                 " p=" + std::to_string(p) + " bic=" + std::to_string(row.bic));
      }
    }
  }

  std::filesystem::create_directories(flags.out);
  const std::filesystem::path path = std::filesystem::path(flags.out) / "selection.csv";
  std::ofstream out(path);
  if (!out) {
    std::cerr << "cannot write " << path << "\n";
    return kExitUsage;
  }
  out << "clusters,regimes,degree,loglik,nu,nu_leftright,bic,best\n";
  char buffer[64];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& row = rows[i];
    out << row.clusters << ',' << row.regimes << ',' << row.degree << ',';
    std::snprintf(buffer, sizeof(buffer), "%.17g", row.loglik);
    out << buffer << ',' << row.nu << ',' << row.nu_leftright << ',';
    std::snprintf(buffer, sizeof(buffer), "%.17g", row.bic);
    out << buffer << ',' << (static_cast<int>(i) == best_index ? 1 : 0) << '\n';
  }
  out.close();

  const Row& best = rows[best_index];
  std::cout << "best: clusters=" << best.clusters << " regimes=" << best.regimes
            << " degree=" << best.degree << " bic=" << best.bic << "\n";

  json config = {{"input", flags.input}, {"time", flags.time},   {"gmax", flags.gmax},
                 {"kmax", flags.kmax},   {"pmax", flags.pmax},   {"runs", flags.runs},
                 {"max_iter", flags.max_iter}, {"tol", flags.tol},
                 {"seed", flags.seed},   {"threads", flags.threads}, {"out", flags.out}};
  write_manifest(flags.out, "select", config, flags.seed, watch.seconds(),
                 total_degeneracies, {"selection.csv"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-based clustering of time series with regime changes"};
  app.require_subcommand(1);

  FitFlags fit_flags;
  SimulateFlags sim_flags;
  EvaluateFlags eval_flags;
  SelectFlags select_flags;

  CLI::App* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  sim->add_option("--scenario", sim_flags.scenario, "piecewise|waveform|switchlike")
      ->required();
  sim->add_option("--n", sim_flags.n, "number of curves")->required();
  sim->add_option("--seed", sim_flags.seed, "random seed");
  sim->add_option("--out", sim_flags.out, "output directory")->required();
  sim->add_option("--sigma", sim_flags.sigma, "noise level override");
  sim->add_option("--separation", sim_flags.separation,
                  "cluster separation (switchlike)");

  CLI::App* fit = app.add_subcommand("fit", "Fit a clustering model");
  fit->add_option("--input", fit_flags.input, "curves CSV, one curve per row")
      ->required();
  fit->add_option("--time", fit_flags.time, "time grid CSV (single row)");
  fit->add_option("--truth", fit_flags.truth, "true labels CSV (enables report metrics)");
  fit->add_option("--model", fit_flags.model, "mixhmmr|mixreg|mixhmm|kmeans");
  fit->add_option("--clusters", fit_flags.clusters, "number of clusters")->required();
  CLI::Option* regimes_opt =
      fit->add_option("--regimes", fit_flags.regimes, "regimes per cluster");
  CLI::Option* degree_opt =
      fit->add_option("--degree", fit_flags.degree, "polynomial degree");
  CLI::Option* constraint_opt =
      fit->add_option("--constraint", fit_flags.constraint, "left-right|full");
  fit->add_option("--max-iter", fit_flags.max_iter, "EM iteration cap");
  fit->add_option("--tol", fit_flags.tol, "relative log-likelihood tolerance");
  fit->add_option("--runs", fit_flags.runs, "EM restarts");
  fit->add_option("--seed", fit_flags.seed, "random seed");
  fit->add_option("--threads", fit_flags.threads, "worker threads (1 = reproducible)");
  fit->add_option("--out", fit_flags.out, "output directory")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "Score a predicted partition");
  evaluate->add_option("--pred", eval_flags.pred, "predicted labels CSV")->required();
  evaluate->add_option("--truth", eval_flags.truth, "true labels CSV")->required();
  evaluate->add_option("--input", eval_flags.input, "curves CSV (for inertia)");
  evaluate->add_option("--means", eval_flags.means, "mean curves CSV (for inertia)");
  evaluate->add_option("--out", eval_flags.out, "report directory")->default_val(".");

  CLI::App* select = app.add_subcommand("select", "BIC model selection over a grid");
  select->add_option("--input", select_flags.input, "curves CSV")->required();
  select->add_option("--time", select_flags.time, "time grid CSV");
  select->add_option("--gmax", select_flags.gmax, "max clusters");
  select->add_option("--kmax", select_flags.kmax, "max regimes");
  select->add_option("--pmax", select_flags.pmax, "max polynomial degree");
  select->add_option("--runs", select_flags.runs, "EM restarts per cell");
  select->add_option("--max-iter", select_flags.max_iter, "EM iteration cap");
  select->add_option("--tol", select_flags.tol, "relative log-likelihood tolerance");
  select->add_option("--seed", select_flags.seed, "random seed");
  select->add_option("--threads", select_flags.threads, "worker threads");
  select->add_option("--grid-guard", select_flags.grid_guard, "max grid cells");
  select->add_option("--out", select_flags.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (sim->parsed()) return run_simulate(sim_flags);
    if (fit->parsed()) {
      // Flag conflicts are rejected before anything is written.
      if (fit_flags.model == "kmeans" &&
          (regimes_opt->count() > 0 || degree_opt->count() > 0 ||
           constraint_opt->count() > 0)) {
        std::cerr << "fit: --regimes/--degree/--constraint do not apply to kmeans\n";
        return kExitUsage;
      }
      if (fit_flags.model == "mixreg" && regimes_opt->count() > 0) {
        std::cerr << "fit: --regimes does not apply to mixreg\n";
        return kExitUsage;
      }
      if (fit_flags.model == "mixhmm" && degree_opt->count() > 0 &&
          fit_flags.degree != 0) {
        std::cerr << "fit: mixhmm uses constant regimes; --degree must be 0\n";
        return kExitUsage;
      }
      if (fit_flags.model != "mixhmmr" && fit_flags.model != "mixreg" &&
          fit_flags.model != "mixhmm" && fit_flags.model != "kmeans") {
        std::cerr << "fit: unknown model '" << fit_flags.model << "'\n";
        return kExitUsage;
      }
      return run_fit(fit_flags);
    }
    if (evaluate->parsed()) return run_evaluate(eval_flags);
    if (select->parsed()) return run_select(select_flags);
  } catch (const FitError& e) {
    std::cerr << "fit failed: " << e.what() << " (degeneracy events: "
              << e.degeneracy_events << ")\n";
    return kExitFitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
