#pragma once

// Flat INI-style scenario files. Keys are written `section.key = value`, or
// as `key = value` under a `[section]` header. `#` and `;` start comments.
// Sections: spec (the Hamiltonian), numerics (grids, steps, ensembles) and
// run (friction, window, horizon, seed, output).

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kfp/langevin_sde.hpp"
#include "kfp/model.hpp"

namespace kfp {

enum class Command { certify, simulate_pde, simulate_sde, lions_check, sweep_friction };

const char* command_name(Command c);
// Throws ValidationError for an unknown name.
Command command_from_name(const std::string& name);

struct ScenarioConfig {
  Command command = Command::certify;
  HamiltonianSpec spec;

  // numerics
  int nx = 128;
  int nv = 128;
  std::optional<double> v_tail_mass;
  double cfl_fraction = 0.9;
  int samples_per_tau = 32;
  int certify_grid = 512;
  int lions_nodes = 64;
  int lions_times = 256;
  int lions_sources = 20;
  int lions_random_fields = 30;
  double sde_dt = 5e-3;
  int sde_paths = 20000;
  int sde_record_every = 10;
  int sde_blocks = 20;
  int audit_random_fields = 50;
  double dissipation_tol = 1e-4;  // relative to |h0|^2

  // run
  double xi = 1.0;
  double tau = 1.0;
  std::optional<double> sigma;  // algebraic route; needed when c_psi is unavailable
  double weight_exponent = 1.0;  // weight (1 + |v|^2)^weight_exponent
  double t_end = 20.0;
  std::uint64_t seed = 0;
  std::string out = "runs";
  Observable observable = Observable::energy;
  std::optional<Table1D> observable_table;
  InitialState initial = InitialState::dilated;
  std::vector<double> sweep_xi{0.1, 0.3, 1.0, 3.0, 10.0};

  // Every key with its effective value (defaults filled), in a fixed order.
  std::vector<std::pair<std::string, std::string>> effective;

  std::string echo() const;
};

// base_dir resolves relative table paths.
ScenarioConfig parse_config_text(const std::string& text, const std::string& base_dir = ".");
// Throws Io if the file cannot be read.
ScenarioConfig parse_config(const std::string& path);
// Defaults only, as for an empty file.
ScenarioConfig default_config();

}  // namespace kfp
