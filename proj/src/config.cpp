#include "kfp/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "kfp/errors.hpp"

namespace kfp {

const char* command_name(Command c) {
  switch (c) {
    case Command::certify: return "certify";
    case Command::simulate_pde: return "simulate-pde";
    case Command::simulate_sde: return "simulate-sde";
    case Command::lions_check: return "lions-check";
    case Command::sweep_friction: return "sweep-friction";
  }
  return "?";
}

Command command_from_name(const std::string& name) {
  for (Command c : {Command::certify, Command::simulate_pde, Command::simulate_sde, Command::lions_check,
                    Command::sweep_friction}) {
    if (name == command_name(c)) return c;
  }
  throw ValidationError("command", "unknown command '" + name + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ValidationError(key, "expected a number, got '" + v + "'");
  }
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ValidationError(key, "expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ValidationError(key, "expected an unsigned 64-bit integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ValidationError(key, "expected true or false, got '" + v + "'");
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ValidationError(key, what);
}

double positive(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  require(x > 0.0, key, "must be positive");
  return x;
}

int at_least(const std::string& key, const std::string& v, int lo) {
  const int n = to_int(key, v);
  require(n >= lo, key, "must be at least " + std::to_string(lo));
  return n;
}

struct Key {
  std::string name;
  std::string fallback;  // empty means unset
  std::function<void(ScenarioConfig&, const std::string&, const std::string&)> apply;
};

// Table paths are resolved against the directory of the config file.
struct Context {
  std::string base_dir;
  Table1D table(const std::string& key, const std::string& v) const {
    std::filesystem::path p(v);
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    try {
      return load_table(p.string());
    } catch (const ValidationError& e) {
      throw ValidationError(key, e.what());
    }
  }
};

std::vector<Key> registry(const Context& ctx) {
  using C = ScenarioConfig;
  using S = const std::string&;
  std::vector<Key> keys = {
      {"spec.potential", "quadratic",
       [](C& c, S k, S v) {
         auto& p = c.spec.potential;
         if (v == "quadratic") p.family = PotentialFamily::quadratic;
         else if (v == "cosine") p.family = PotentialFamily::cosine;
         else if (v == "double_well") p.family = PotentialFamily::double_well;
         else if (v == "tabulated") p.family = PotentialFamily::tabulated;
         else throw ValidationError(k, "unknown potential family '" + v + "'");
       }},
      {"spec.kinetic", "gaussian",
       [](C& c, S k, S v) {
         auto& q = c.spec.kinetic;
         if (v == "gaussian" || v == "quadratic") q.family = KineticFamily::quadratic;
         else if (v == "subexp") q.family = KineticFamily::subexp;
         else if (v == "heavytail") q.family = KineticFamily::heavytail;
         else if (v == "tensorised") q.family = KineticFamily::tensorised;
         else if (v == "tabulated") q.family = KineticFamily::tabulated;
         else throw ValidationError(k, "unknown kinetic family '" + v + "'");
       }},
      {"spec.factor", "gaussian",
       [](C& c, S k, S v) {
         auto& q = c.spec.kinetic;
         if (v == "gaussian" || v == "quadratic") q.factor = FactorShape::quadratic;
         else if (v == "subexp") q.factor = FactorShape::subexp;
         else if (v == "heavytail") q.factor = FactorShape::heavytail;
         else if (v == "tabulated") q.factor = FactorShape::tabulated;
         else throw ValidationError(k, "unknown factor shape '" + v + "'");
       }},
      {"spec.d", "1",
       [](C& c, S k, S v) {
         c.spec.dim = at_least(k, v, 1);
         require(c.spec.dim <= 100000, k, "must be at most 100000");
       }},
      {"spec.stiffness", "1", [](C& c, S k, S v) { c.spec.potential.stiffness = positive(k, v); }},
      {"spec.amplitude", "1",
       [](C& c, S k, S v) {
         c.spec.potential.amplitude = to_double(k, v);
         require(c.spec.potential.amplitude >= 0.0, k, "must be nonnegative");
       }},
      {"spec.period", "1", [](C& c, S k, S v) { c.spec.potential.period = positive(k, v); }},
      {"spec.well", "1", [](C& c, S k, S v) { c.spec.potential.well = positive(k, v); }},
      {"spec.potential_on_torus", "false",
       [](C& c, S k, S v) { c.spec.potential.tabulated_on_torus = to_bool(k, v); }},
      {"spec.potential_table", "", [&ctx](C& c, S k, S v) { c.spec.potential.table = ctx.table(k, v); }},
      {"spec.kinetic_table", "", [&ctx](C& c, S k, S v) { c.spec.kinetic.table = ctx.table(k, v); }},
      {"spec.alpha", "0.5",
       [](C& c, S k, S v) {
         c.spec.kinetic.alpha = to_double(k, v);
         require(c.spec.kinetic.alpha > 0.0 && c.spec.kinetic.alpha < 1.0, k, "alpha must lie in (0, 1)");
       }},
      {"spec.beta", "8", [](C& c, S k, S v) { c.spec.kinetic.beta = positive(k, v); }},
      {"spec.c_phi", "", [](C& c, S k, S v) { c.spec.c_phi = positive(k, v); }},
      {"spec.c1_phi", "",
       [](C& c, S k, S v) {
         c.spec.c1_phi = to_double(k, v);
         require(*c.spec.c1_phi >= 0.0, k, "must be nonnegative");
       }},
      {"spec.c2_phi", "",
       [](C& c, S k, S v) {
         c.spec.c2_phi = to_double(k, v);
         require(*c.spec.c2_phi >= 0.0, k, "must be nonnegative");
       }},
      {"spec.quad_tol", "1e-8",
       [](C& c, S k, S v) {
         c.spec.quad_tol = positive(k, v);
         require(c.spec.quad_tol < 1e-2, k, "must be below 1e-2");
       }},

      {"numerics.nx", "128", [](C& c, S k, S v) { c.nx = at_least(k, v, 8); }},
      {"numerics.nv", "128", [](C& c, S k, S v) { c.nv = at_least(k, v, 8); }},
      {"numerics.v_tail_mass", "",
       [](C& c, S k, S v) {
         c.v_tail_mass = positive(k, v);
         require(*c.v_tail_mass < 1e-2, k, "must be below 1e-2");
       }},
      {"numerics.cfl_fraction", "0.9",
       [](C& c, S k, S v) {
         c.cfl_fraction = positive(k, v);
         require(c.cfl_fraction <= 1.0, k, "must not exceed 1");
       }},
      {"numerics.samples_per_tau", "32", [](C& c, S k, S v) { c.samples_per_tau = at_least(k, v, 2); }},
      {"numerics.certify_grid", "512", [](C& c, S k, S v) { c.certify_grid = at_least(k, v, 32); }},
      {"numerics.lions_nodes", "64", [](C& c, S k, S v) { c.lions_nodes = at_least(k, v, 8); }},
      {"numerics.lions_times", "256", [](C& c, S k, S v) { c.lions_times = at_least(k, v, 8); }},
      {"numerics.lions_sources", "20", [](C& c, S k, S v) { c.lions_sources = at_least(k, v, 1); }},
      {"numerics.lions_random_fields", "30", [](C& c, S k, S v) { c.lions_random_fields = at_least(k, v, 0); }},
      {"numerics.audit_random_fields", "50", [](C& c, S k, S v) { c.audit_random_fields = at_least(k, v, 0); }},
      {"numerics.dissipation_tol", "1e-4", [](C& c, S k, S v) { c.dissipation_tol = positive(k, v); }},
      {"numerics.sde_dt", "0.005", [](C& c, S k, S v) { c.sde_dt = positive(k, v); }},
      {"numerics.sde_paths", "20000", [](C& c, S k, S v) { c.sde_paths = at_least(k, v, 1); }},
      {"numerics.sde_record_every", "10", [](C& c, S k, S v) { c.sde_record_every = at_least(k, v, 1); }},
      {"numerics.sde_blocks", "20", [](C& c, S k, S v) { c.sde_blocks = at_least(k, v, 1); }},

      {"run.xi", "1", [](C& c, S k, S v) { c.xi = positive(k, v); }},
      {"run.tau", "1", [](C& c, S k, S v) { c.tau = positive(k, v); }},
      {"run.sigma", "", [](C& c, S k, S v) { c.sigma = positive(k, v); }},
      {"run.weight_exponent", "1",
       [](C& c, S k, S v) {
         c.weight_exponent = to_double(k, v);
         require(c.weight_exponent >= 0.0, k, "must be nonnegative");
       }},
      {"run.t_end", "20", [](C& c, S k, S v) { c.t_end = positive(k, v); }},
      {"run.seed", "0", [](C& c, S k, S v) { c.seed = to_u64(k, v); }},
      {"run.out", "runs", [](C& c, S, S v) { c.out = v; }},
      {"run.observable", "energy",
       [](C& c, S k, S v) {
         if (v == "energy") c.observable = Observable::energy;
         else if (v == "second_moment_x") c.observable = Observable::second_moment_x;
         else if (v == "second_moment_v") c.observable = Observable::second_moment_v;
         else if (v == "tabulated_x") c.observable = Observable::tabulated_x;
         else throw ValidationError(k, "unknown observable '" + v + "'");
       }},
      {"run.observable_table", "", [&ctx](C& c, S k, S v) { c.observable_table = ctx.table(k, v); }},
      {"run.initial", "dilated",
       [](C& c, S k, S v) {
         if (v == "gibbs") c.initial = InitialState::gibbs;
         else if (v == "dilated") c.initial = InitialState::dilated;
         else throw ValidationError(k, "unknown initial state '" + v + "'");
       }},
      {"run.sweep_xi", "0.1, 0.3, 1, 3, 10",
       [](C& c, S k, S v) {
         c.sweep_xi.clear();
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ',')) c.sweep_xi.push_back(positive(k, trim(item)));
         require(c.sweep_xi.size() >= 2, k, "needs at least two friction values");
         for (std::size_t i = 1; i < c.sweep_xi.size(); ++i) {
           require(c.sweep_xi[i] > c.sweep_xi[i - 1], k, "friction values must increase");
         }
       }},
  };
  return keys;
}

// Checks that involve more than one key.
void cross_validate(const ScenarioConfig& c) {
  const auto& k = c.spec.kinetic;
  const bool heavy = k.family == KineticFamily::heavytail ||
                     (k.family == KineticFamily::tensorised && k.factor == FactorShape::heavytail);
  if (heavy) {
    const int d = k.family == KineticFamily::heavytail ? c.spec.dim : 1;
    if (!(k.beta > d + 4)) {
      throw ValidationError("spec.beta", "heavytail needs beta > d + 4; got beta = " + std::to_string(k.beta) +
                                             " with d = " + std::to_string(d));
    }
  }
  if (c.spec.potential.family == PotentialFamily::tabulated && !c.spec.potential.table) {
    throw ValidationError("spec.potential_table", "tabulated potential needs a table file");
  }
  const bool tab_kin = k.family == KineticFamily::tabulated ||
                       (k.family == KineticFamily::tensorised && k.factor == FactorShape::tabulated);
  if (tab_kin && !k.table) throw ValidationError("spec.kinetic_table", "tabulated kinetic energy needs a table file");
  if (c.observable == Observable::tabulated_x && !c.observable_table) {
    throw ValidationError("run.observable_table", "tabulated observable needs a table file");
  }
  if (c.t_end <= c.tau) throw ValidationError("run.t_end", "the horizon must exceed the averaging window");
}

}  // namespace

std::string ScenarioConfig::echo() const {
  std::ostringstream os;
  os << "# effective configuration, defaults filled\n";
  for (const auto& [k, v] : effective) os << k << " = " << v << '\n';
  return os.str();
}

ScenarioConfig parse_config_text(const std::string& text, const std::string& base_dir) {
  struct Entry {
    std::string value;
    std::size_t line;
  };
  std::map<std::string, Entry> given;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    // A comment starts at # or ; at the beginning or after whitespace.
    for (std::size_t i = 0; i < line.size(); ++i) {
      if ((line[i] == '#' || line[i] == ';') && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line.resize(i);
        break;
      }
    }
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const std::size_t col = first + 1;
    if (line[first] == '[') {
      const auto close = line.find(']', first);
      if (close == std::string::npos) throw ParseError(line_no, line.size() + 1, "missing ']' in section header");
      if (!trim(line.substr(close + 1)).empty()) {
        throw ParseError(line_no, close + 2, "unexpected text after section header");
      }
      section = trim(line.substr(first + 1, close - first - 1));
      if (section.empty() || section.find_first_of(" \t=.") != std::string::npos) {
        throw ParseError(line_no, first + 2, "invalid section name");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, col, "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(line_no, eq + 1, "missing key before '='");
    if (key.find_first_of(" \t") != std::string::npos) throw ParseError(line_no, col, "key contains whitespace");
    if (!section.empty()) key = section + "." + key;
    if (const auto it = given.find(key); it != given.end()) {
      throw ParseError(line_no, col,
                       "duplicate key '" + key + "' (first set on line " + std::to_string(it->second.line) + ")");
    }
    given[key] = {trim(line.substr(eq + 1)), line_no};
  }

  const Context ctx{base_dir};
  const std::vector<Key> keys = registry(ctx);
  for (const auto& [name, entry] : given) {
    const bool known = std::any_of(keys.begin(), keys.end(), [&](const Key& k) { return k.name == name; });
    if (!known) throw ValidationError(name, "unknown key '" + name + "' (line " + std::to_string(entry.line) + ")");
  }

  ScenarioConfig c;
  for (const Key& k : keys) {
    const auto it = given.find(k.name);
    const std::string value = it != given.end() ? it->second.value : k.fallback;
    if (!value.empty()) k.apply(c, k.name, value);
    c.effective.emplace_back(k.name, value);
  }
  cross_validate(c);
  return c;
}

ScenarioConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::Io, "cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string dir = std::filesystem::path(path).parent_path().string();
  return parse_config_text(ss.str(), dir.empty() ? "." : dir);
}

ScenarioConfig default_config() { return parse_config_text(""); }

}  // namespace kfp
