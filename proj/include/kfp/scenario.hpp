#pragma once

// Scenario orchestration behind the command-line tool: one run directory per
// invocation holding the effective configuration, the certificate report,
// CSV series and a summary with one PASS/FAIL row per audited inequality.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "kfp/certificates.hpp"
#include "kfp/config.hpp"
#include "kfp/errors.hpp"

namespace kfp {

// Process exit codes.
enum ExitCode : int {
  exit_ok = 0,
  exit_audit_failed = 1,
  exit_invalid_input = 2,   // parse and validation errors, bad usage
  exit_ill_conditioned = 3,
  exit_numerical = 4,       // everything else raised by the numerics
  exit_io = 5,
};

int exit_code_for(ErrorKind kind);

// An audit passes when lhs <= rhs (1 + slack), unless `pass` was set by a
// test that is not of that form (the name then says what was checked).
struct AuditRow {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  bool pass = false;
};

AuditRow audit_leq(std::string name, double lhs, double rhs, double slack = 0.0);

struct RunContext {
  std::optional<std::string> out;    // overrides run.out
  std::optional<std::uint64_t> seed; // overrides run.seed
  bool quiet = false;
  std::ostream* log = nullptr;       // progress lines unless quiet
};

struct ScenarioResult {
  int exit_code = exit_ok;
  std::string run_dir;
  std::vector<AuditRow> audits;
  std::vector<std::string> artifacts;  // file names inside run_dir

  bool all_pass() const;
};

// Creates <base>/<command>-<YYYYMMDDTHHMMSS>-<seq>, seq counting up from 1
// until the name is free.
std::string create_run_dir(const std::string& base, Command command);

// `key = value` lines, each preceded by a `# provenance:` comment.
std::string certificate_report(const RateCertificate& cert, const AlgebraicEnvelope* envelope = nullptr);

std::string summary_text(const std::vector<AuditRow>& audits);

// Errors from the numerics propagate; the caller maps them with exit_code_for.
ScenarioResult run_scenario(ScenarioConfig config, const RunContext& context = {});

}  // namespace kfp
