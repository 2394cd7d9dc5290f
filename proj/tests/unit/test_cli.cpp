#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "vreg/experiment.hpp"

using namespace vreg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("vreg_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config grammar: sections, comments, overrides, errors") {
  ExperimentConfig cfg = ExperimentConfig::parse_text(
      "# comment\n[experiment]\nkind = exponents\nseed = 3\n[scenario]\nn = 2\np = 3 ; trailing\n");
  CHECK(cfg.get("experiment.kind") == "exponents");
  CHECK(cfg.get_int("experiment.seed", 0) == 3);
  CHECK(cfg.get_num("scenario.p", 0) == 3.0);

  cfg.apply_assignment("scenario.p=4");  // command line wins
  CHECK(cfg.get_num("scenario.p", 0) == 4.0);
  CHECK_THROWS_AS(cfg.apply_assignment("nodots"), ConfigError);

  CHECK_THROWS_AS(ExperimentConfig::parse_text("[experiment\nkind = x\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse_text("just some words\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse_text("[s]\n= novalue\n"), ConfigError);

  // numbers are validated where they are read
  ExperimentConfig bad = ExperimentConfig::parse_text("[scenario]\np = abc\n");
  CHECK_THROWS_AS(bad.get_num("scenario.p", 0), ConfigError);
}

TEST_CASE("empty config fails naming the missing kind field, exit code 2") {
  ExperimentConfig cfg;
  RunResult res = run_experiment(cfg, fresh_dir("emptycfg").string());
  CHECK(res.exit_code == 2);
  CHECK(res.message.find("kind") != std::string::npos);
}

TEST_CASE("unknown preset and unknown kind are config errors") {
  ExperimentConfig cfg;
  cfg.kv["experiment.kind"] = "solve";
  cfg.kv["problem.preset"] = "not-a-preset";
  CHECK(run_experiment(cfg, fresh_dir("nopreset").string()).exit_code == 2);

  ExperimentConfig cfg2;
  cfg2.kv["experiment.kind"] = "frobnicate";
  CHECK(run_experiment(cfg2, fresh_dir("nokind").string()).exit_code == 2);
}

TEST_CASE("exponents experiment writes artifacts plus a manifest with hashes") {
  ExperimentConfig cfg;
  cfg.kv["experiment.kind"] = "exponents";
  cfg.kv["scenario.n"] = "2";
  cfg.kv["scenario.p"] = "3";
  cfg.kv["scenario.q"] = "3";
  cfg.kv["scenario.alpha"] = "1";
  const fs::path out = fresh_dir("expart");
  RunResult res = run_experiment(cfg, out.string());
  REQUIRE(res.exit_code == 0);
  CHECK(res.table.find("0.75") != std::string::npos);

  auto j = nlohmann::json::parse(slurp(out / "exponents.json"));
  CHECK(j["delta_predicted"].get<double>() == doctest::Approx(0.75));

  auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  REQUIRE(manifest.contains("files"));
  bool found = false;
  for (const auto& f : manifest["files"]) {
    if (f["name"] == "exponents.json") {
      found = true;
      CHECK(f["bytes"].get<std::size_t>() == slurp(out / "exponents.json").size());
      CHECK(f["fnv1a64"].get<std::string>().size() == 16);
    }
  }
  CHECK(found);
}

TEST_CASE("besov function sources run from config") {
  ExperimentConfig cfg;
  cfg.kv["experiment.kind"] = "besov";
  cfg.kv["besov.source"] = "abs-power:0.25";
  cfg.kv["besov.res"] = "2049";
  const fs::path out = fresh_dir("besovsrc");
  RunResult res = run_experiment(cfg, out.string());
  REQUIRE(res.exit_code == 0);
  auto j = nlohmann::json::parse(slurp(out / "besov.json"));
  CHECK(j["slope"].get<double>() == doctest::Approx(0.75).epsilon(0.12));
  const std::string csv = slurp(out / "seminorms.csv");
  CHECK(csv.rfind("direction,h,seminorm\n", 0) == 0);
}

TEST_CASE("identical config and seed produce byte-identical artifacts") {
  ExperimentConfig cfg;
  cfg.kv["experiment.kind"] = "solve";
  cfg.kv["problem.preset"] = "poisson1d-p2";
  cfg.kv["experiment.seed"] = "17";
  const fs::path a = fresh_dir("repA"), b = fresh_dir("repB");
  RunResult ra = run_experiment(cfg, a.string());
  RunResult rb = run_experiment(cfg, b.string());
  REQUIRE(ra.exit_code == 0);
  REQUIRE(rb.exit_code == 0);
  REQUIRE(ra.artifacts == rb.artifacts);
  for (const auto& name : ra.artifacts) {
    CHECK(slurp(a / name) == slurp(b / name));
  }
}

TEST_CASE("preset values are defaults; explicit config keys win") {
  ExperimentConfig cfg;
  cfg.kv["experiment.kind"] = "solve";
  cfg.kv["problem.preset"] = "poisson1d-p2";
  cfg.kv["problem.res"] = "65";  // override the preset's 257
  const fs::path out = fresh_dir("override");
  RunResult res = run_experiment(cfg, out.string());
  REQUIRE(res.exit_code == 0);
  // 65 nodes -> 65 CSV rows + header
  const std::string csv = slurp(out / "field.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 66);
}

TEST_CASE("solve report uses the fixed key names") {
  ExperimentConfig cfg;
  cfg.kv["experiment.kind"] = "solve";
  cfg.kv["problem.preset"] = "poisson1d-p2";
  const fs::path out = fresh_dir("keys");
  REQUIRE(run_experiment(cfg, out.string()).exit_code == 0);
  auto j = nlohmann::json::parse(slurp(out / "solve_report.json"));
  for (const char* key : {"final_energy", "el_residual", "epsilon_trace", "converged"}) {
    INFO(key);
    CHECK(j.contains(key));
  }
}

TEST_CASE("verify-integrand experiment emits the hypothesis table") {
  ExperimentConfig cfg;
  cfg.kv["experiment.kind"] = "verify-integrand";
  cfg.kv["problem.integrand"] = "p-energy";
  cfg.kv["problem.p"] = "3";
  cfg.kv["problem.q"] = "3";
  cfg.kv["problem.mu"] = "0.5";
  cfg.kv["problem.nu"] = "0.5";
  cfg.kv["problem.lambda"] = "2";
  cfg.kv["verify.samples"] = "300";
  const fs::path out = fresh_dir("verify");
  REQUIRE(run_experiment(cfg, out.string()).exit_code == 0);
  auto j = nlohmann::json::parse(slurp(out / "verification.json"));
  CHECK(j["all_pass"].get<bool>());
  CHECK(j["checks"].size() >= 6);
}

TEST_CASE("shipped preset files match the builtin registry") {
  // presets/ is the diffable fixture copy of the builtin map
  const fs::path dir = fs::path(PRESET_DIR);
  for (const auto& [name, text] : builtin_presets()) {
    const fs::path file = dir / (name + ".cfg");
    INFO(file.string());
    REQUIRE(fs::exists(file));
    CHECK(slurp(file) == text);
  }
}

TEST_CASE("excess and classify experiments run end to end") {
  ExperimentConfig cfg;
  cfg.kv["experiment.kind"] = "excess";
  cfg.kv["problem.preset"] = "poisson1d-p2";
  cfg.kv["excess.x"] = "0.25";
  cfg.kv["excess.steps"] = "2";
  const fs::path out = fresh_dir("excessrun");
  REQUIRE(run_experiment(cfg, out.string()).exit_code == 0);
  CHECK(slurp(out / "excess_profile.csv").rfind("R,excess,mean_grad_norm\n", 0) == 0);

  ExperimentConfig cfg2;
  cfg2.kv["experiment.kind"] = "classify";
  cfg2.kv["problem.preset"] = "poisson1d-p2";
  cfg2.kv["classify.samples"] = "9";
  const fs::path out2 = fresh_dir("classifyrun");
  REQUIRE(run_experiment(cfg2, out2.string()).exit_code == 0);
  auto j = nlohmann::json::parse(slurp(out2 / "classify.json"));
  CHECK(j["total"].get<int>() == 9);
}

TEST_CASE("solve preset JSON energy matches the closed-form quadrature") {
  ExperimentConfig cfg;
  cfg.kv["experiment.kind"] = "solve";
  cfg.kv["problem.preset"] = "pLaplace1d-p3";
  const fs::path out = fresh_dir("energyjson");
  REQUIRE(run_experiment(cfg, out.string()).exit_code == 0);
  auto j = nlohmann::json::parse(slurp(out / "solve_report.json"));
  const double exact_energy = -0.0942809041582063;  // quadrature of the closed form
  CHECK(std::abs(j["final_energy"].get<double>() - exact_energy) <= 1e-3 * std::abs(exact_energy));
  CHECK(j["converged"].get<bool>());
}

TEST_CASE("solver non-convergence is exit 0 with a flagged report") {
  ExperimentConfig cfg;
  cfg.kv["experiment.kind"] = "solve";
  cfg.kv["problem.preset"] = "pLaplace1d-p3";
  cfg.kv["solver.max_iterations"] = "1";
  cfg.kv["solver.gradient_tolerance"] = "1e-14";
  const fs::path out = fresh_dir("nonconv");
  RunResult res = run_experiment(cfg, out.string());
  CHECK(res.exit_code == 0);  // data is still science
  CHECK(res.message.find("converge") != std::string::npos);
  auto j = nlohmann::json::parse(slurp(out / "solve_report.json"));
  CHECK_FALSE(j["converged"].get<bool>());
}
