#pragma once

// Batch job layer: strict JSON configuration, dispatch onto the library
// operations, and deterministic CSV/JSON artifacts plus a provenance
// manifest.  One job per call; output_dir is the only side effect.

#include <optional>
#include <string>
#include <vector>

#include "abc/baker.hpp"
#include "abc/model.hpp"
#include "abc/quad.hpp"

namespace abc {

inline constexpr const char* kToolVersion = "abc-evolution 1.0.0";

enum class JobKind {
  Abc2,
  Abc2Decay,
  IEps,
  Stochastic,
  Solvable,
  FockOracle,
  Asymptotics,
  Recursion,
  OneParticle,
  Baker,
  Compare,
};

const char* job_name(JobKind kind);

struct BakerJobParams {
  int N = 64;
  double q = 0.0;
  double p = 0.0;
  int T = 20;
  BakerConvention convention = BakerConvention::HalfInteger;
};

struct CompareJobParams {
  std::string first_csv;
  std::string second_csv;
  std::string first_label = "first";
  std::string second_label = "second";
};

struct FockJobParams {
  int modes = 24;
  int truncation = 12;
};

// Parsed and cross-checked job description.  Fields beyond the chosen job's
// input set keep their defaults and are omitted from the canonical echo.
struct JobConfig {
  JobKind job = JobKind::Abc2;
  std::string output_dir;
  std::optional<ModelSpec> model;
  QuadratureSettings quadrature;
  std::vector<double> time_grid;      // materialized sample times, ascending
  std::vector<double> eps_schedule;   // ieps: strictly decreasing, positive
  std::vector<double> lambda_list;    // stochastic couplings
  std::vector<double> momentum;       // one_particle external momentum, length d
  int recursion_order = 4;
  FockJobParams fock;
  std::optional<BakerJobParams> baker;
  std::optional<CompareJobParams> compare;

  // Canonical strict echo: every effective input materialized (grids expanded
  // to explicit lists, defaults filled in), keys in a fixed order.  Parsing
  // the echo yields the same config and the same echo.
  std::string canonical_text() const;
};

// Strict parse of a JSON config: unknown keys (with suggestions), type
// mismatches, and cross-field violations are all collected into `errors`
// with paths into the document; nothing stops at the first problem.  The
// returned config is meaningful only when `errors` stays empty.
JobConfig validate_config(const std::string& text, std::vector<std::string>& errors);

struct JobOutcome {
  int exit_code = 0;                   // 0 ok, 1 I/O failure, 3 numeric failure
  std::vector<std::string> artifacts;  // absolute or config-relative paths written
  std::string diagnostic;              // nonempty when exit_code != 0
};

// Executes a validated config: creates output_dir if needed, writes the
// operation's CSV/JSON artifacts and finally manifest.json {config echo,
// seed, wall time, tool version}.  Identical config and seed reproduce all
// result artifacts byte-for-byte (the manifest differs in wall time only).
JobOutcome run_job(const JobConfig& config);

}  // namespace abc
