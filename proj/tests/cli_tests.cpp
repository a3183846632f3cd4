#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "regimeclust/datasets.hpp"
#include "regimeclust/regression.hpp"

using namespace regimeclust;
namespace fs = std::filesystem;

namespace {

const std::string kCli = REGIMECLUST_CLI_PATH;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("regimeclust_cli_" + std::to_string(::getpid()) +
                                        "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string sub(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int value = 0;
    return value;
  }
};

int run_cli(const std::string& args) {
  const std::string command = "REGIMECLUST_LOG=error " + kCli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string run_cli_stdout(const std::string& args) {
  TempDir scratch;
  const std::string capture = scratch.sub("stdout.txt");
  const std::string command =
      "REGIMECLUST_LOG=error " + kCli + " " + args + " >" + capture + " 2>/dev/null";
  if (std::system(command.c_str()) == -1) return {};
  std::ifstream in(capture);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

TEST_CASE("simulate writes the dataset file set deterministically") {
  TempDir dir;
  REQUIRE(run_cli("simulate --scenario piecewise --n 60 --seed 5 --out " +
                  dir.sub("a")) == 0);
  const Eigen::MatrixXd curves = read_matrix_csv(dir.sub("a") + "/curves.csv");
  CHECK(curves.rows() == 60);
  CHECK(curves.cols() == 100);

  REQUIRE(run_cli("simulate --scenario piecewise --n 60 --seed 5 --out " +
                  dir.sub("b")) == 0);
  CHECK(file_bytes(dir.sub("a") + "/curves.csv") ==
        file_bytes(dir.sub("b") + "/curves.csv"));
  CHECK(file_bytes(dir.sub("a") + "/truth.csv") ==
        file_bytes(dir.sub("b") + "/truth.csv"));

  REQUIRE(run_cli("simulate --scenario waveform --n 9 --seed 2 --out " +
                  dir.sub("w")) == 0);
  const Eigen::MatrixXd wave = read_matrix_csv(dir.sub("w") + "/curves.csv");
  CHECK(wave.rows() == 9);
  CHECK(wave.cols() == 21);
  const Eigen::VectorXi truth = read_int_column_csv(dir.sub("w") + "/truth.csv");
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 9; ++i) ++counts[truth[i]];
  CHECK(counts[0] == 3);
  CHECK(counts[1] == 3);
  CHECK(counts[2] == 3);

  CHECK(run_cli("simulate --scenario unknown --n 5 --seed 1 --out " + dir.sub("x")) == 1);
}

TEST_CASE("fit with one regression-mixture cluster is the OLS curve") {
  TempDir dir;
  REQUIRE(run_cli("simulate --scenario piecewise --n 12 --seed 9 --out " +
                  dir.sub("data")) == 0);
  REQUIRE(run_cli("fit --input " + dir.sub("data") + "/curves.csv --time " +
                  dir.sub("data") + "/time.csv --model mixreg --clusters 1 --degree 2 "
                  "--runs 1 --seed 3 --out " + dir.sub("fit")) == 0);

  const Dataset data = load_csv(dir.sub("data") + "/curves.csv",
                                dir.sub("data") + "/time.csv");
  const DesignMatrix design = build_design_matrix(data.grid, 2);
  Eigen::VectorXd y(data.num_curves() * data.num_samples());
  for (int i = 0; i < data.num_curves(); ++i) {
    y.segment(i * data.num_samples(), data.num_samples()) = data.curves.row(i);
  }
  const Eigen::VectorXd fitted =
      polyval(solve_wls(design, y, Eigen::VectorXd::Ones(y.size())).beta, design);

  const Eigen::MatrixXd means = read_matrix_csv(dir.sub("fit") + "/means.csv");
  REQUIRE(means.rows() == 1);
  CHECK((means.row(0).transpose() - fitted).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("fit runs are byte-reproducible for a fixed seed") {
  TempDir dir;
  REQUIRE(run_cli("simulate --scenario piecewise --n 24 --seed 4 --out " +
                  dir.sub("data")) == 0);
  const std::string flags = "fit --input " + dir.sub("data") + "/curves.csv --time " +
                            dir.sub("data") + "/time.csv --model mixhmmr --clusters 3 "
                            "--regimes 3 --degree 0 --runs 4 --seed 17 --threads 1 --out ";
  REQUIRE(run_cli(flags + dir.sub("f1")) == 0);
  REQUIRE(run_cli(flags + dir.sub("f2")) == 0);
  CHECK(file_bytes(dir.sub("f1") + "/labels.csv") ==
        file_bytes(dir.sub("f2") + "/labels.csv"));
  CHECK(file_bytes(dir.sub("f1") + "/params.json") ==
        file_bytes(dir.sub("f2") + "/params.json"));
}

TEST_CASE("conflicting flags fail fast without writing outputs") {
  TempDir dir;
  REQUIRE(run_cli("simulate --scenario piecewise --n 6 --seed 1 --out " +
                  dir.sub("data")) == 0);
  CHECK(run_cli("fit --input " + dir.sub("data") + "/curves.csv --model kmeans "
                "--clusters 2 --regimes 3 --out " + dir.sub("km")) == 1);
  CHECK_FALSE(fs::exists(dir.sub("km")));

  CHECK(run_cli("fit --input " + dir.sub("data") + "/curves.csv --model mixreg "
                "--clusters 2 --regimes 3 --out " + dir.sub("rm")) == 1);
  CHECK_FALSE(fs::exists(dir.sub("rm")));

  CHECK(run_cli("fit --input " + dir.sub("data") + "/missing.csv --model mixhmmr "
                "--clusters 2 --out " + dir.sub("nf")) == 1);
  CHECK_FALSE(fs::exists(dir.sub("nf")));

  CHECK(run_cli("fit --clusters 2 --out somewhere") == 1);  // missing --input
}

TEST_CASE("evaluate scores a partition and honours permutations") {
  TempDir dir;
  std::ofstream truth(dir.sub("truth.csv"));
  truth << "0\n0\n1\n1\n2\n2\n";
  truth.close();
  std::ofstream pred(dir.sub("pred.csv"));
  pred << "2\n2\n0\n0\n1\n1\n";
  pred.close();

  const std::string out = run_cli_stdout("evaluate --pred " + dir.sub("pred.csv") +
                                         " --truth " + dir.sub("truth.csv") + " --out " +
                                         dir.sub("eval"));
  CHECK(out.find("misclassification_rate 0") != std::string::npos);

  std::ofstream shorter(dir.sub("short.csv"));
  shorter << "0\n1\n";
  shorter.close();
  CHECK(run_cli("evaluate --pred " + dir.sub("short.csv") + " --truth " +
                dir.sub("truth.csv") + " --out " + dir.sub("bad")) == 1);
}

TEST_CASE("select writes the grid with the free-parameter column") {
  TempDir dir;
  REQUIRE(run_cli("simulate --scenario piecewise --n 15 --seed 6 --out " +
                  dir.sub("data")) == 0);
  REQUIRE(run_cli("select --input " + dir.sub("data") + "/curves.csv --time " +
                  dir.sub("data") + "/time.csv --gmax 2 --kmax 2 --pmax 0 --runs 2 "
                  "--seed 8 --out " + dir.sub("sel")) == 0);

  std::ifstream in(dir.sub("sel") + "/selection.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "clusters,regimes,degree,loglik,nu,nu_leftright,bic,best");
  std::string line;
  int rows = 0, best_rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    int g, k, p, nu;
    double loglik;
    std::sscanf(line.c_str(), "%d,%d,%d,%lf,%d", &g, &k, &p, &loglik, &nu);
    const int expected = (g - 1) + g * k + g * (2 * k - 1) + g * k * (p + 1) + g * k;
    CHECK(nu == expected);
    if (line.back() == '1') ++best_rows;
  }
  CHECK(rows == 4);
  CHECK(best_rows == 1);

  // Single-cell grid is trivially best.
  REQUIRE(run_cli("select --input " + dir.sub("data") + "/curves.csv --gmax 1 --kmax 1 "
                  "--pmax 0 --runs 1 --seed 8 --out " + dir.sub("one")) == 0);
  std::ifstream one(dir.sub("one") + "/selection.csv");
  std::getline(one, header);
  int count = 0;
  while (std::getline(one, line)) {
    if (!line.empty()) ++count;
  }
  CHECK(count == 1);

  // Grid guard rejects oversized sweeps.
  CHECK(run_cli("select --input " + dir.sub("data") + "/curves.csv --gmax 20 --kmax 20 "
                "--pmax 1 --out " + dir.sub("big")) == 1);
  CHECK_FALSE(fs::exists(dir.sub("big")));
}

TEST_CASE("constant-HMM and k-means models run through the CLI") {
  TempDir dir;
  REQUIRE(run_cli("simulate --scenario piecewise --n 15 --seed 12 --out " +
                  dir.sub("data")) == 0);
  REQUIRE(run_cli("fit --input " + dir.sub("data") + "/curves.csv --time " +
                  dir.sub("data") + "/time.csv --truth " + dir.sub("data") +
                  "/truth.csv --model mixhmm --clusters 3 --regimes 3 --runs 3 "
                  "--seed 2 --out " + dir.sub("hmm")) == 0);
  const Eigen::VectorXi hmm_labels = read_int_column_csv(dir.sub("hmm") + "/labels.csv");
  CHECK(hmm_labels.size() == 15);
  CHECK(fs::exists(dir.sub("hmm") + "/segmentation.csv"));

  REQUIRE(run_cli("fit --input " + dir.sub("data") + "/curves.csv --truth " +
                  dir.sub("data") + "/truth.csv --model kmeans --clusters 3 --runs 3 "
                  "--seed 2 --out " + dir.sub("km")) == 0);
  const Eigen::MatrixXd centroids = read_matrix_csv(dir.sub("km") + "/means.csv");
  CHECK(centroids.rows() == 3);
  CHECK(centroids.cols() == 100);
  std::ifstream rep(dir.sub("km") + "/report.json");
  const nlohmann::json report = nlohmann::json::parse(rep);
  CHECK(report.contains("inertia"));
  CHECK(report.contains("misclassification_rate"));
}

TEST_CASE("manifest lists every produced file") {
  TempDir dir;
  REQUIRE(run_cli("simulate --scenario switchlike --n 10 --seed 3 --out " +
                  dir.sub("data")) == 0);
  REQUIRE(run_cli("fit --input " + dir.sub("data") + "/curves.csv --time " +
                  dir.sub("data") + "/time.csv --truth " + dir.sub("data") +
                  "/truth.csv --model mixhmmr --clusters 2 --regimes 3 --degree 2 "
                  "--runs 2 --seed 5 --out " + dir.sub("fit")) == 0);

  std::ifstream in(dir.sub("fit") + "/manifest.json");
  REQUIRE(in.good());
  const nlohmann::json manifest = nlohmann::json::parse(in);
  CHECK(manifest.at("command") == "fit");
  CHECK(manifest.at("config").at("clusters") == 2);
  for (const auto& name : manifest.at("outputs")) {
    const fs::path file = fs::path(dir.sub("fit")) / name.get<std::string>();
    CHECK(fs::exists(file));
    CHECK(fs::file_size(file) > 0);
  }
  CHECK_FALSE(fs::exists(dir.sub("fit") + "/manifest.json.tmp"));
}
