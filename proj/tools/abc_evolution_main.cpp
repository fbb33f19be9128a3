#include <CLI11.hpp>
#include <Eigen/Core>

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "abc/io.hpp"
#include "abc/jobs.hpp"

// Exit codes: 0 ok, 1 I/O failure, 2 config error, 3 numeric failure.
int main(int argc, char** argv) {
  CLI::App app{"Batch runner for evolution-operator decompositions"};
  app.require_subcommand(1);

  std::string run_config, out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  CLI::App* run = app.add_subcommand("run", "Validate a job config and execute it");
  run->add_option("config", run_config, "Job config JSON file")->required();
  run->add_option("--out", out_dir, "Override output_dir from the config");
  CLI::Option* seed_opt = run->add_option("--seed", seed, "Override the quadrature seed");
  run->add_option("--threads", threads, "Eigen thread count (default: library choice)");

  std::string validate_config_path;
  CLI::App* validate =
      app.add_subcommand("validate", "Validate a job config and print the canonical echo");
  validate->add_option("config", validate_config_path, "Job config JSON file")->required();

  CLI11_PARSE(app, argc, argv);

  const bool running = run->parsed();
  const std::string& path = running ? run_config : validate_config_path;

  std::string text;
  try {
    text = abc::read_text_file(path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }

  std::vector<std::string> errors;
  abc::JobConfig config = abc::validate_config(text, errors);
  if (!errors.empty()) {
    for (const std::string& err : errors) std::fprintf(stderr, "config error: %s\n", err.c_str());
    return 2;
  }

  if (!running) {
    std::fputs(config.canonical_text().c_str(), stdout);
    return 0;
  }

  if (!out_dir.empty()) config.output_dir = out_dir;
  if (seed_opt->count() > 0) config.quadrature.seed = seed;
  if (threads > 0) Eigen::setNbThreads(threads);

  const abc::JobOutcome outcome = abc::run_job(config);
  if (outcome.exit_code != 0) {
    std::fprintf(stderr, "%s\n", outcome.diagnostic.c_str());
    return outcome.exit_code;
  }
  for (const std::string& artifact : outcome.artifacts)
    std::printf("%s\n", artifact.c_str());
  return 0;
}
