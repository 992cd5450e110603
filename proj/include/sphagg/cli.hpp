#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "sphagg/kernels.hpp"

namespace sphagg::cli {

enum class Command { solve_ae, solve_ade, sweep_epsilon, jko, particles, checks };

std::string command_name(Command c);
/// Throws ConfigError for an unknown name.
Command parse_command(const std::string& name);

/// Malformed config text or flags. Carries the source and line when known.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  // [run]
  Command command = Command::solve_ae;
  std::string output;  // empty: $SPHAGG_OUTPUT_ROOT/<command>, else ./sphagg-out/<command>
  std::uint64_t seed = 42;
  int jobs = 1;
  bool plots = false;
  // [model]
  int n = 2;
  std::string W = "attract:beta=1:alpha=1";
  std::string V = "heat:eps=0.1";
  double amplitude = 0.5;  // rho_0 = 1 + amplitude cos(theta)
  // [solver]
  int L = 32;
  int M = 0;        // 0: discretization default
  double dt = 0.0;  // 0: command default
  double T = 0.0;   // 0: command default
  std::string scheme = "rk4";
  int diagnostics_every = 10;
  bool clip_negative = true;
  int max_halvings = 6;
  // [sweep]
  std::string family = "heat";
  std::vector<double> eps = {0.2, 0.1, 0.05, 0.025};
  // [jko]
  double tau = 1e-3;
  int K = 100;
  int grid = 128;
  double tol = 1e-6;
  int max_iter = 400;
  // [particles]
  int tokens = 32;
  std::string init = "hemisphere";
  double beta = 1.0;
  double repulsion_eps = 0.0;  // 0: attraction only
  int record_every = 100;
  // [checks]
  std::string suite = "all";
  long samples = 100000;
  int pairs = 100;
  int p = 2;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Sets one field from its textual value. Throws ConfigError for unknown keys
/// or unparsable values.
void set_field(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Flat `key = value` text with `[section]` headers and `#` comments. Every key
/// must appear under its own section, at most once.
ExperimentConfig parse_config_text(const std::string& text, const std::string& source = "<config>");
ExperimentConfig parse_config_file(const std::filesystem::path& path);

/// Canonical text form; parse_config_text(canonical(c)) == c.
std::string canonical(const ExperimentConfig& config, bool include_output = true);

/// Throws ParameterRangeError listing every violated field.
void validate(const ExperimentConfig& config);

/// Kernel spec strings: heat:eps=E, exp:eps=E, attract:beta=B:alpha=A, table:path=FILE.
kernels::KernelFamilySpec parse_kernel_spec(const std::string& spec, int n);

/// Documented defaults of every key, grouped by section.
std::string defaults_help();
/// Column documentation of every CSV the runner writes.
std::string schema_help();

std::string sha256_hex(const std::string& data);

struct Artifact {
  std::string path;  // relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct RunResult {
  int exit_code = 0;  // 0 ok, 2 validation, 3 numerical, 4 failed check
  std::filesystem::path directory;
  std::vector<Artifact> artifacts;
  std::vector<CheckOutcome> checks;
  std::string error;  // "<module>: message" when exit_code is 2 or 3
};

/// Validates, runs and writes artifacts plus manifest.json.
RunResult run(const ExperimentConfig& config);

/// Full command-line entry point; returns the process exit code.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sphagg::cli
