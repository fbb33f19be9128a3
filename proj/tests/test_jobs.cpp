#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "abc/diagrams.hpp"
#include "abc/io.hpp"
#include "abc/jobs.hpp"

using namespace abc;
namespace fs = std::filesystem;

namespace {

std::string pair_model_json(int d, int n, double lambda) {
  return R"({
    "family": "PairCreation",
    "d": )" + std::to_string(d) + R"(,
    "n": )" + std::to_string(n) + R"(,
    "dispersion": {"kind": "Relativistic", "params": {"m": 1.0}},
    "form_factor": {"kind": "IsotropicGaussian", "params": {"amplitude": 1.0, "width": 1.0}},
    "lambda": )" + std::to_string(lambda) + "}";
}

std::string linear_model_json(int d) {
  std::string s = pair_model_json(d, 1, 0.2);
  const std::string from = "\"PairCreation\"";
  s.replace(s.find(from), from.size(), "\"LinearSolvable\"");
  return s;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("abc_jobs_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
};

bool any_error_contains(const std::vector<std::string>& errors, const std::string& needle) {
  for (const auto& e : errors)
    if (e.find(needle) != std::string::npos) return true;
  return false;
}

nlohmann::json manifest_without_wall_time(const fs::path& dir) {
  nlohmann::json j = nlohmann::json::parse(read_text_file((dir / "manifest.json").string()));
  j.erase("wall_time_ms");
  return j;
}

}  // namespace

TEST_CASE("config validation collects every problem with suggestions") {
  const std::string text = R"({
    "job": "abc2",
    "output_dir": "",
    "model": {
      "family": "PairCreation", "d": 1, "n": 2,
      "dispersion": {"kind": "Relativistic", "params": {"m": 1.0}},
      "form_factor": {"kind": "IsotropicGaussian", "params": {"amplitude": 1.0, "width": 1.0}},
      "lamda": 0.1
    },
    "quadrature": {"mode": "TensorGaus"},
    "time_grid": {"t0": 0.0, "t1": 1.0, "steps": 3},
    "t_list": [0.0, 1.0]
  })";
  std::vector<std::string> errors;
  validate_config(text, errors);
  CHECK(errors.size() >= 4);
  CHECK(any_error_contains(errors, "did you mean \"lambda\""));
  CHECK(any_error_contains(errors, "did you mean \"TensorGauss\""));
  CHECK(any_error_contains(errors, "not both"));
  CHECK(any_error_contains(errors, "output_dir"));
}

TEST_CASE("unknown job names get suggestions") {
  std::vector<std::string> errors;
  validate_config(R"({"job": "abc_2", "output_dir": "x"})", errors);
  REQUIRE(!errors.empty());
  CHECK(any_error_contains(errors, "did you mean \"abc2\""));
}

TEST_CASE("canonical echo is idempotent and materializes defaults") {
  const std::string text = R"({
    "job": "abc2",
    "output_dir": "/tmp/echo_test",
    "model": )" + pair_model_json(1, 2, 0.1) + R"(,
    "time_grid": {"t0": 0.0, "t1": 2.0, "steps": 3}
  })";
  std::vector<std::string> errors;
  const JobConfig config = validate_config(text, errors);
  REQUIRE(errors.empty());
  const std::string echo = config.canonical_text();
  CHECK(echo.find("\"seed\": 20240901") != std::string::npos);
  CHECK(echo.find("\"t_list\"") != std::string::npos);
  CHECK(echo.find("time_grid") == std::string::npos);

  const JobConfig reparsed = validate_config(echo, errors);
  REQUIRE(errors.empty());
  CHECK(reparsed.canonical_text() == echo);
  CHECK(reparsed.time_grid == config.time_grid);
}

TEST_CASE("decay-case extrapolation configs need high dimension") {
  std::string model = linear_model_json(1);
  const std::string from = "\"Relativistic\"";
  model.replace(model.find(from), from.size(), "\"NonRelShifted\"");
  const std::string fromp = "{\"m\": 1.0}";
  model.replace(model.find(fromp), fromp.size(), "{\"omega0\": 1.0}");
  const std::string text =
      R"({"job": "ieps", "output_dir": "/tmp/x", "model": )" + model + "}";
  std::vector<std::string> errors;
  validate_config(text, errors);
  REQUIRE(!errors.empty());
  CHECK(any_error_contains(errors, "dn >= 5"));
  CHECK(any_error_contains(errors, "d*n = 1"));
}

TEST_CASE("jobs reject inputs they do not take") {
  const std::string text = R"({
    "job": "baker",
    "output_dir": "/tmp/x",
    "model": )" + pair_model_json(1, 2, 0.1) + R"(,
    "baker": {"N": 16, "q": 0.1, "p": 0.2, "T": 5}
  })";
  std::vector<std::string> errors;
  validate_config(text, errors);
  REQUIRE(!errors.empty());
  CHECK(any_error_contains(errors, "unknown key \"model\""));
}

TEST_CASE("time lists must increase strictly") {
  const std::string text = R"({
    "job": "solvable",
    "output_dir": "/tmp/x",
    "model": )" + linear_model_json(1) + R"(,
    "t_list": [0.0, 0.0, 1.0]
  })";
  std::vector<std::string> errors;
  validate_config(text, errors);
  CHECK(any_error_contains(errors, "strictly increasing"));
}

TEST_CASE("one-particle momentum must match the model dimension") {
  const std::string text = R"({
    "job": "one_particle",
    "output_dir": "/tmp/x",
    "model": {
      "family": "TranslationInvariantTrilinear", "d": 1, "n": 1,
      "dispersion": {"kind": "Relativistic", "params": {"m": 1.0}},
      "form_factor": {"kind": "IsotropicGaussian", "params": {"amplitude": 1.0, "width": 1.0}},
      "lambda": 0.01
    },
    "t_list": [0.0, 1.0],
    "momentum": [0.1, 0.2]
  })";
  std::vector<std::string> errors;
  validate_config(text, errors);
  CHECK(any_error_contains(errors, "length must equal the model dimension"));
}

TEST_CASE("abc2 job writes deterministic artifacts") {
  TempDir dir("abc2");
  const std::string text = R"({
    "job": "abc2",
    "output_dir": ")" + dir.str() + R"(",
    "model": )" + pair_model_json(1, 2, 0.1) + R"(,
    "quadrature": {"points_per_axis": 32},
    "t_list": [0.0, 1.0, 2.0]
  })";
  std::vector<std::string> errors;
  const JobConfig config = validate_config(text, errors);
  REQUIRE(errors.empty());

  const JobOutcome first = run_job(config);
  REQUIRE(first.exit_code == 0);
  REQUIRE(first.artifacts.size() == 3);
  CHECK(fs::path(first.artifacts[0]).filename() == "abc.csv");
  CHECK(fs::path(first.artifacts[1]).filename() == "summary.json");
  CHECK(fs::path(first.artifacts[2]).filename() == "manifest.json");

  const std::string csv1 = read_text_file(first.artifacts[0]);
  const std::string sum1 = read_text_file(first.artifacts[1]);
  const nlohmann::json man1 = manifest_without_wall_time(dir.path);

  const JobOutcome second = run_job(config);
  REQUIRE(second.exit_code == 0);
  CHECK(read_text_file(second.artifacts[0]) == csv1);
  CHECK(read_text_file(second.artifacts[1]) == sum1);
  CHECK(manifest_without_wall_time(dir.path) == man1);
  CHECK(man1.at("seed") == 20240901);
  CHECK(man1.at("config").at("job") == "abc2");
}

TEST_CASE("baker job emits the autocorrelation series and fit") {
  TempDir dir("baker");
  const std::string text = R"({
    "job": "baker",
    "output_dir": ")" + dir.str() + R"(",
    "baker": {"N": 16, "q": 0.1, "p": 0.2, "T": 5}
  })";
  std::vector<std::string> errors;
  const JobConfig config = validate_config(text, errors);
  REQUIRE(errors.empty());
  REQUIRE(config.baker.has_value());
  CHECK(config.baker->convention == BakerConvention::HalfInteger);

  const JobOutcome outcome = run_job(config);
  REQUIRE(outcome.exit_code == 0);

  const std::string csv = read_text_file((dir.path / "baker.csv").string());
  CHECK(csv.rfind("t,re_F,im_F,abs_F\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

  const nlohmann::json meta =
      nlohmann::json::parse(read_text_file((dir.path / "baker.json").string()));
  CHECK(meta.at("N") == 16);
  CHECK(meta.at("convention") == "HalfInteger");
  CHECK(meta.at("fit").contains("decay_rate"));
}

TEST_CASE("compare job classifies the generated series") {
  TempDir solv_dir("cmp_solv");
  TempDir baker_dir("cmp_baker");
  TempDir cmp_dir("cmp_out");

  const std::string solv_text = R"({
    "job": "solvable",
    "output_dir": ")" + solv_dir.str() + R"(",
    "model": )" + linear_model_json(3) + R"(,
    "quadrature": {"points_per_axis": 300},
    "time_grid": {"t0": 2.0, "t1": 200.0, "steps": 41}
  })";
  const std::string baker_text = R"({
    "job": "baker",
    "output_dir": ")" + baker_dir.str() + R"(",
    "baker": {"N": 128, "q": 0.0, "p": 0.0, "T": 12}
  })";
  std::vector<std::string> errors;
  REQUIRE(run_job(validate_config(solv_text, errors)).exit_code == 0);
  REQUIRE(errors.empty());
  REQUIRE(run_job(validate_config(baker_text, errors)).exit_code == 0);
  REQUIRE(errors.empty());

  const std::string cmp_text = R"({
    "job": "compare",
    "output_dir": ")" + cmp_dir.str() + R"(",
    "compare": {
      "first_csv": ")" + (solv_dir.path / "solvable.csv").string() + R"(",
      "second_csv": ")" + (baker_dir.path / "baker.csv").string() + R"("
    }
  })";
  const JobConfig config = validate_config(cmp_text, errors);
  REQUIRE(errors.empty());
  REQUIRE(config.compare.has_value());
  CHECK(config.compare->first_label == "solvable");
  CHECK(config.compare->second_label == "baker");

  const JobOutcome outcome = run_job(config);
  REQUIRE(outcome.exit_code == 0);
  const nlohmann::json report =
      nlohmann::json::parse(read_text_file((cmp_dir.path / "comparison.json").string()));
  CHECK(report.at("first").at("decay_class") == "power_law");
  const double alpha = report.at("first").at("power_alpha").get<double>();
  CHECK(alpha > 1.25);
  CHECK(alpha < 1.65);
  CHECK(report.at("second").at("decay_class") == "exponential");
  CHECK(report.at("second").at("exp_rate").get<double>() < -0.1);
}

TEST_CASE("run_job reports numeric failures with job context") {
  TempDir dir("numfail");
  const std::string text = R"({
    "job": "one_particle",
    "output_dir": ")" + dir.str() + R"(",
    "model": {
      "family": "TranslationInvariantTrilinear", "d": 1, "n": 1,
      "dispersion": {"kind": "NonRelShifted", "params": {"omega0": 1.0}},
      "form_factor": {"kind": "IsotropicGaussian", "params": {"amplitude": 1.0, "width": 1.0}},
      "lambda": 0.01
    },
    "t_list": [1.0],
    "momentum": [0.0]
  })";
  std::vector<std::string> errors;
  const JobConfig config = validate_config(text, errors);
  REQUIRE(errors.empty());
  const JobOutcome outcome = run_job(config);
  CHECK(outcome.exit_code == 3);
  CHECK(outcome.diagnostic.find("job one_particle") != std::string::npos);
}

TEST_CASE("run_job reports unreadable inputs as io failures") {
  TempDir dir("iofail");
  const std::string text = R"({
    "job": "compare",
    "output_dir": ")" + dir.str() + R"(",
    "compare": {"first_csv": "/nonexistent/a.csv", "second_csv": "/nonexistent/b.csv"}
  })";
  std::vector<std::string> errors;
  const JobConfig config = validate_config(text, errors);
  REQUIRE(errors.empty());
  const JobOutcome outcome = run_job(config);
  CHECK(outcome.exit_code == 1);
  CHECK(outcome.diagnostic.find("/nonexistent/a.csv") != std::string::npos);
}

TEST_CASE("asymptotics job pairs the sampled series with its leading term") {
  TempDir dir("asympt");
  const std::string text = R"({
    "job": "asymptotics",
    "output_dir": ")" + dir.str() + R"(",
    "model": )" + linear_model_json(3) + R"(,
    "time_grid": {"t0": 2.0, "t1": 90.0, "steps": 89}
  })";
  std::vector<std::string> errors;
  const JobConfig config = validate_config(text, errors);
  REQUIRE(errors.empty());
  const JobOutcome outcome = run_job(config);
  REQUIRE(outcome.exit_code == 0);

  const std::string csv = read_text_file((dir.path / "asymptotics.csv").string());
  CHECK(csv.rfind("t,re_C,im_C,re_C_stat,im_C_stat\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 90);

  const nlohmann::json fit =
      nlohmann::json::parse(read_text_file((dir.path / "fit.json").string()));
  CHECK(fit.at("alpha").get<double>() == doctest::Approx(1.5).epsilon(0.1));

  std::string bad = text;
  const std::string from = "\"LinearSolvable\"";
  bad.replace(bad.find(from), from.size(), "\"PairCreation\"");
  validate_config(bad, errors);
  CHECK(any_error_contains(errors, "requires \"LinearSolvable\""));
}

TEST_CASE("recursion job reproduces the ladder text") {
  TempDir dir("recursion");
  const std::string text = R"({
    "job": "recursion",
    "output_dir": ")" + dir.str() + R"(",
    "order": 2
  })";
  std::vector<std::string> errors;
  const JobConfig config = validate_config(text, errors);
  REQUIRE(errors.empty());
  REQUIRE(run_job(config).exit_code == 0);

  const RecursionLadder ladder = solve_recursion(2);
  const std::string expected =
      "Q1:\n" + ladder.Q[1].to_text() + "Q2:\n" + ladder.Q[2].to_text() + "M2:\n" +
      ladder.M[2].to_text();
  CHECK(read_text_file((dir.path / "recursion.txt").string()) == expected);

  const nlohmann::json meta =
      nlohmann::json::parse(read_text_file((dir.path / "recursion.json").string()));
  CHECK(meta.at("order") == 2);
  CHECK(meta.at("residual_empty") == nlohmann::json::array({true, true}));
}
