#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "loal/dataset.hpp"
#include "loal/simulation.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LOAL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("list scenarios") {
  TempDir tmp("loal_cli_list");
  const std::string out = tmp.path.string() + "/scen.txt";
  const std::string cmd =
      std::string(LOAL_CLI_PATH) + " simulate --list-scenarios > " + out + " 2>/dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(slurp(out) == "1a\n1b\n1c\n2\n3\nsweep\n");
}

TEST_CASE("simulate smoke run writes reproducible outputs") {
  TempDir a("loal_cli_sim_a"), b("loal_cli_sim_b");
  const std::string base =
      "simulate --scenario 1a --n 200 --reps 4 --seed 3 "
      "--estimators gcomp,iptw_truth,iptw_loal --out ";
  REQUIRE(run_cli(base + a.path.string()) == 0);
  REQUIRE(run_cli(base + b.path.string()) == 0);
  for (const char* f : {"metrics.csv", "metrics.md", "selection.csv", "manifest.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(a.path / f));
    CHECK(slurp(a.path / f) == slurp(b.path / f));
  }
  CHECK(slurp(a.path / "metrics.csv").find("iptw_loal") != std::string::npos);
}

TEST_CASE("unknown scenario exits with the validation code") {
  TempDir tmp("loal_cli_bad");
  CHECK(run_cli("simulate --scenario 9z --n 50 --reps 2 --out " + tmp.path.string()) == 2);
}

TEST_CASE("estimate on panel-shaped data emits the full report set") {
  TempDir tmp("loal_cli_est");
  const loal::LongitudinalDataset d = loal::generate_panel_shaped(500, 99);
  const std::string csv = (tmp.path / "data.csv").string();
  const std::string schema = (tmp.path / "schema.json").string();
  loal::write_long_csv(d, csv, schema);

  // Full treatment model has 135 parameters for this shape.
  const loal::PooledDesign design = loal::build_pooled_treatment_design(d);
  REQUIRE(design.cols() == 135);

  std::ofstream cfg(tmp.path / "cfg.json");
  cfg << R"({"n_lambda": 5, "n_lambda1": 5, "graph": "lagged_clique"})";
  cfg.close();
  const int rc = run_cli("estimate --data " + csv + " --schema " + schema +
                         " --estimators iptw_full,iptw_loal,iptw_fused_loal"
                         " --msm-interaction --config " +
                         (tmp.path / "cfg.json").string() + " --out " +
                         tmp.path.string());
  REQUIRE(rc == 0);
  for (const char* f :
       {"estimates.csv", "estimates.md", "weights.csv", "balance.csv",
        "iptw_loal_treatment_coefficients.csv", "iptw_loal_censoring_coefficients.csv",
        "iptw_fused_loal_treatment_coefficients.csv", "manifest.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(tmp.path / f));
  }
  const std::string est = slurp(tmp.path / "estimates.csv");
  CHECK(est.find("iptw_full") != std::string::npos);
  CHECK(est.find("modifier_x_cum") != std::string::npos);
  // Three estimator rows.
  CHECK(std::count(est.begin(), est.end(), '\n') == 4);
}

TEST_CASE("estimate rejects missing outcome with exit code 2") {
  TempDir tmp("loal_cli_baddata");
  const std::string csv = (tmp.path / "d.csv").string();
  const std::string schema = (tmp.path / "s.json").string();
  {
    std::ofstream s(schema);
    s << R"({"T":0,"blocks":[["X0"]],"censoring":false})";
    std::ofstream c(csv);
    c << "id,time,X0,A,C,Y\n1,0,0.5,1,,\n2,0,0.1,0,,2.0\n";
  }
  CHECK(run_cli("estimate --data " + csv + " --schema " + schema + " --out " +
                tmp.path.string()) == 2);
}

TEST_CASE("bootstrap defaults echo q and K in the manifest") {
  TempDir tmp("loal_cli_boot");
  const int rc = run_cli(
      "bootstrap --scenario 1a --n 120 --estimator gcomp --seed 5 --B 40 --out " +
      tmp.path.string());
  REQUIRE(rc == 0);
  const std::string manifest = slurp(tmp.path / "manifest.json");
  CHECK(manifest.find("\"q\": 0.95") != std::string::npos);
  CHECK(manifest.find("\"K\": 14") != std::string::npos);
  CHECK(fs::exists(tmp.path / "ci.csv"));

  // Determinism of the interval file.
  TempDir tmp2("loal_cli_boot2");
  REQUIRE(run_cli(
              "bootstrap --scenario 1a --n 120 --estimator gcomp --seed 5 --B 40 --out " +
              tmp2.path.string()) == 0);
  CHECK(slurp(tmp.path / "ci.csv") == slurp(tmp2.path / "ci.csv"));
}

TEST_CASE("numeric failures exit with code 3") {
  TempDir tmp("loal_cli_numfail");
  const std::string csv = (tmp.path / "d.csv").string();
  const std::string schema = (tmp.path / "s.json").string();
  {
    std::ofstream s(schema);
    s << R"({"T":0,"blocks":[["X0","X1"]],"censoring":false})";
    std::ofstream c(csv);
    c << "id,time,X0,X1,A,C,Y\n";
    // X1 duplicates X0 exactly: the treatment model is rank deficient.
    for (int i = 1; i <= 30; ++i)
      c << i << ",0," << 0.1 * i << "," << 0.1 * i << "," << (i % 2) << ",,"
        << 1.0 + 0.05 * i << "\n";
  }
  CHECK(run_cli("estimate --data " + csv + " --schema " + schema +
                " --estimators iptw_full --out " + tmp.path.string()) == 3);
}

TEST_CASE("naive bootstrap method switch") {
  TempDir tmp("loal_cli_boot3");
  const int rc = run_cli(
      "bootstrap --scenario 1a --n 120 --estimator gcomp --method naive --B 40 --out " +
      tmp.path.string());
  REQUIRE(rc == 0);
  const std::string ci = slurp(tmp.path / "ci.csv");
  CHECK(ci.find("mu0") != std::string::npos);
}
