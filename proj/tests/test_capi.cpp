#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "npmlca.h"

// C-surface tests: everything here goes through the public header only.

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("npmlca_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string small_condition_json() {
  json j;
  j["n_indicators"] = 6;
  j["crp_quality"] = 0.8;
  j["n_sites"] = 50;
  j["site_size"] = 30;
  j["l1_effects"] = {1.0, 1.0};
  j["l2_effects"] = {1.0, 1.0};
  return j.dump();
}

}  // namespace

TEST_CASE("condition grid has 96 entries") {
  char* text = nullptr;
  REQUIRE(npmlca_condition_grid(&text) == NPMLCA_OK);
  const json grid = json::parse(text);
  npmlca_string_free(text);
  CHECK(grid.size() == 96);
  CHECK(grid[0]["n_indicators"] == 6);
}

TEST_CASE("simulate -> read -> fit -> outputs round trip") {
  const fs::path dir = fresh_dir("roundtrip");

  REQUIRE(npmlca_simulate(small_condition_json().c_str(), 11, dir.string().c_str()) == NPMLCA_OK);
  REQUIRE(fs::exists(dir / "dataset.csv"));
  REQUIRE(fs::exists(dir / "truth.csv"));

  npmlca_dataset* ds = nullptr;
  REQUIRE(npmlca_dataset_read_csv((dir / "dataset.csv").string().c_str(), &ds) == NPMLCA_OK);
  CHECK(npmlca_dataset_n_sites(ds) == 50);
  CHECK(npmlca_dataset_n_individuals(ds) == 1500);
  CHECK(npmlca_dataset_n_indicators(ds) == 6);
  CHECK(npmlca_dataset_n_level1_covariates(ds) == 1);
  CHECK(npmlca_dataset_n_level2_covariates(ds) == 1);

  npmlca_fit* fit = nullptr;
  const char* opts = R"({"seed": 3, "n_starts": 6, "n_refine": 2, "compute_se": false})";
  REQUIRE(npmlca_fit_run(ds, 3, 2, opts, &fit) == NPMLCA_OK);
  CHECK(npmlca_fit_converged(fit) == 1);
  CHECK(npmlca_fit_free_parameters(fit) == 27);
  CHECK(npmlca_fit_loglik(fit) < 0.0);
  CHECK(npmlca_fit_aic(fit) > 0.0);
  CHECK(npmlca_fit_bic(fit) > npmlca_fit_aic(fit));
  CHECK(npmlca_fit_entropy(fit) > 0.0);
  CHECK(npmlca_fit_entropy(fit) <= 1.0);

  const fs::path out = dir / "fit";
  REQUIRE(npmlca_fit_write_outputs(fit, ds, out.string().c_str(), 0.05) == NPMLCA_OK);
  CHECK(fs::exists(out / "fit.json"));
  CHECK(fs::exists(out / "odds_ratios.csv"));

  npmlca_fit_free(fit);
  npmlca_dataset_free(ds);
  fs::remove_all(dir);
}

TEST_CASE("fitting a simulated dataset recovers the truth after alignment (Table-1 style check)") {
  // the CRP table written by the fit should be within 0.05 of the generating
  // values once classes are matched; the canonical ordering already matches
  // the design's descending response pattern
  const fs::path dir = fresh_dir("recover");
  json cond = json::parse(small_condition_json());
  cond["n_sites"] = 150;
  cond["site_size"] = 60;
  REQUIRE(npmlca_simulate(cond.dump().c_str(), 21, dir.string().c_str()) == NPMLCA_OK);

  npmlca_dataset* ds = nullptr;
  REQUIRE(npmlca_dataset_read_csv((dir / "dataset.csv").string().c_str(), &ds) == NPMLCA_OK);
  npmlca_fit* fit = nullptr;
  REQUIRE(npmlca_fit_run(ds, 3, 2, R"({"seed": 5, "compute_se": false})", &fit) == NPMLCA_OK);
  const fs::path out = dir / "fit";
  REQUIRE(npmlca_fit_write_outputs(fit, ds, out.string().c_str(), 0.05) == NPMLCA_OK);

  const json fj = json::parse(slurp(out / "fit.json"));
  REQUIRE(fj["crp"].is_array());
  const int K = 6;
  const double q = 0.8;
  for (int k = 0; k < K; ++k) {
    const double want1 = q;
    const double want2 = (k < K / 2) ? q : 1.0 - q;
    const double want3 = 1.0 - q;
    CHECK(std::fabs(fj["crp"][k][1][0].get<double>() - want1) < 0.05);
    CHECK(std::fabs(fj["crp"][k][1][1].get<double>() - want2) < 0.05);
    CHECK(std::fabs(fj["crp"][k][1][2].get<double>() - want3) < 0.05);
  }
  npmlca_fit_free(fit);
  npmlca_dataset_free(ds);
  fs::remove_all(dir);
}

TEST_CASE("free-parameter count for a 10-indicator model with 4 + 1 covariates is 45") {
  // table-sized configuration: K=10 binary, L=3, M=2, P1=4, P2=1
  const fs::path dir = fresh_dir("freeparams");
  std::string csv = "site_id,y1,y2,y3,y4,y5,y6,y7,y8,y9,y10,x1,x2,x3,x4,z1\n";
  unsigned state = 12345;
  auto next01 = [&state]() {
    state = state * 1103515245u + 12345u;
    return (state >> 16) & 1u;
  };
  for (int site = 1; site <= 8; ++site)
    for (int i = 0; i < 12; ++i) {
      csv += std::to_string(site);
      for (int k = 0; k < 10; ++k) csv += "," + std::to_string(1 + next01());
      for (int p = 0; p < 4; ++p) csv += "," + std::to_string(next01());
      csv += "," + std::to_string(site % 3);
      csv += "\n";
    }
  {
    std::ofstream out(dir / "data.csv");
    out << csv;
  }
  npmlca_dataset* ds = nullptr;
  REQUIRE(npmlca_dataset_read_csv((dir / "data.csv").string().c_str(), &ds) == NPMLCA_OK);
  npmlca_fit* fit = nullptr;
  const char* opts = R"({"seed": 1, "n_starts": 2, "n_refine": 1, "burn_in": 5, "max_iterations": 30, "compute_se": false})";
  REQUIRE(npmlca_fit_run(ds, 3, 2, opts, &fit) == NPMLCA_OK);
  CHECK(npmlca_fit_free_parameters(fit) == 45);
  npmlca_fit_free(fit);
  npmlca_dataset_free(ds);
  fs::remove_all(dir);
}

TEST_CASE("error paths set codes and messages") {
  npmlca_dataset* ds = nullptr;
  CHECK(npmlca_dataset_read_csv("/nonexistent/file.csv", &ds) == NPMLCA_ERR_IO);
  CHECK(std::string(npmlca_last_error()).find("cannot open") != std::string::npos);

  CHECK(npmlca_simulate("{\"n_indicators\": 7}", 1, "/tmp") == NPMLCA_ERR_PARSE);

  const char* bad_cond =
      R"({"n_indicators": 7, "crp_quality": 0.8, "n_sites": 50, "site_size": 30,
          "l1_effects": [1,1], "l2_effects": [1,1]})";
  CHECK(npmlca_simulate(bad_cond, 1, "/tmp") == NPMLCA_ERR_INVALID_ARGUMENT);
  CHECK(std::string(npmlca_last_error()).find("n_indicators") != std::string::npos);

  CHECK(npmlca_report("/nonexistent/store", "all", "/tmp/out", 0.05) == NPMLCA_ERR_IO);
  CHECK(npmlca_report("/nonexistent/store", "bogus", "/tmp/out", 0.05) == NPMLCA_ERR_INVALID_ARGUMENT);
}

TEST_CASE("study run and report through the C API") {
  const fs::path dir = fresh_dir("study");
  json cfg;
  cfg["master_seed"] = 909;
  cfg["reps"] = 2;
  cfg["conditions"] = {0};
  cfg["jobs"] = 2;
  cfg["out_dir"] = dir.string();
  cfg["compute_se"] = false;
  cfg["fit"] = {{"n_starts", 4}, {"n_refine", 2}, {"burn_in", 8}, {"max_iterations", 150}};

  int n_new = -1;
  REQUIRE(npmlca_study_run(cfg.dump().c_str(), nullptr, nullptr, &n_new) == NPMLCA_OK);
  CHECK(n_new == 2);
  CHECK(fs::exists(dir / "records.jsonl"));

  const fs::path rep = dir / "reports";
  REQUIRE(npmlca_report(dir.string().c_str(), "all", rep.string().c_str(), 0.05) == NPMLCA_OK);
  CHECK(fs::exists(rep / "recovery.csv"));
  CHECK(fs::exists(rep / "diagnostics.csv"));
  fs::remove_all(dir);
}
