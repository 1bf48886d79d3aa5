#include "kfp/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "kfp/langevin_sde.hpp"
#include "kfp/lions_solver.hpp"
#include "kfp/spectral1d.hpp"
#include "kfp/vfp_pde.hpp"

namespace kfp {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse:
    case ErrorKind::Validation: return exit_invalid_input;
    case ErrorKind::IllConditioned: return exit_ill_conditioned;
    case ErrorKind::Io: return exit_io;
    default: return exit_numerical;
  }
}

AuditRow audit_leq(std::string name, double lhs, double rhs, double slack) {
  return {std::move(name), lhs, rhs, slack, lhs <= rhs * (1.0 + slack)};
}

bool ScenarioResult::all_pass() const {
  return std::all_of(audits.begin(), audits.end(), [](const AuditRow& a) { return a.pass; });
}

std::string create_run_dir(const std::string& base, Command command) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(base, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create output directory " + base + ": " + ec.message());
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream stamp;
  stamp << std::put_time(&tm, "%Y%m%dT%H%M%S");
  for (int seq = 1; seq < 100000; ++seq) {
    const fs::path dir = fs::path(base) / (std::string(command_name(command)) + "-" + stamp.str() + "-" + std::to_string(seq));
    if (fs::create_directory(dir, ec)) return dir.string();
    if (ec) throw Error(ErrorKind::Io, "cannot create run directory " + dir.string() + ": " + ec.message());
  }
  throw Error(ErrorKind::Io, "no free run directory name under " + base);
}

namespace {

std::string num(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorKind::Io, "cannot write " + path);
  f << text;
  if (!f) throw Error(ErrorKind::Io, "write failed for " + path);
}

struct Emitter {
  std::ostringstream os;
  void add(const std::string& key, double value, const std::string& provenance) {
    os << "# provenance: " << provenance << '\n' << key << " = " << num(value) << '\n';
  }
};

}  // namespace

std::string certificate_report(const RateCertificate& c, const AlgebraicEnvelope* env) {
  Emitter e;
  e.os << "# certificate at xi = " << num(c.xi) << ", tau = " << num(c.tau) << ", d = " << c.dim << '\n';
  e.add("xi", c.xi, "input");
  e.add("tau", c.tau, "input");
  e.add("d", c.dim, "input");
  for (const Provenance& p : c.entries) e.add(p.name, p.value, p.note);
  e.add("optimal_friction", c.has_c_psi ? optimal_friction(c.c_psi) : 0.0,
        c.has_c_psi ? "1 / sqrt(c_psi), maximiser of lambda_bar over xi" : "unavailable without c_psi");
  if (env) {
    e.os << "# algebraic envelope H0 / (1 + rate t)^sigma\n";
    e.add("sigma", env->sigma, "input");
    e.add("p", env->p, "(sigma + 1) / sigma");
    e.add("q", env->q, "sigma + 1");
    e.add("P_psi", env->P_psi, "weighted Poincare constant of the kinetic Gibbs measure, eigensolve");
    e.add("weight_moment", env->weight_moment, "L1(gamma) norm of the weight to the power sigma, quadrature");
    e.add("h0_sup", env->h0_sup, "sup norm of the initial datum");
    e.add("H0", env->H0, "time-averaged norm over the first window");
    e.add("lambda_P_envelope", env->lambda_P, "modified Poincare constant used by the envelope");
    e.add("M0", env->M0, "closed form in tau, lambda_P, P_psi, weight moment, h0_sup, sigma");
    e.add("y0", env->y0, "root of xi y / (2 lambda_P) + M0 (y / xi)^{sigma/(sigma+1)} = H0, Newton with bisection fallback");
    e.add("c1", env->c1, "closed form in M0, y0, lambda_P, sigma");
    e.add("c2", env->c2, "closed form in lambda_P");
    e.add("envelope_rate", env->rate, "(xi^{-sigma/(sigma+1)} c1 + xi c2)^{-(sigma+1)/sigma}");
  }
  return e.os.str();
}

std::string summary_text(const std::vector<AuditRow>& audits) {
  std::ostringstream os;
  int failed = 0;
  for (const AuditRow& a : audits) {
    failed += a.pass ? 0 : 1;
    os << (a.pass ? "PASS " : "FAIL ") << a.name << ": lhs = " << num(a.lhs) << ", rhs = " << num(a.rhs)
       << ", slack = " << num(a.slack) << '\n';
  }
  os << "# " << audits.size() - failed << " of " << audits.size() << " audits passed\n";
  return os.str();
}

namespace {

struct Runner {
  ScenarioConfig cfg;
  const RunContext& ctx;
  std::string dir;
  ScenarioResult result;

  void log(const std::string& line) const {
    if (!ctx.quiet && ctx.log) *ctx.log << line << '\n';
  }
  std::string path(const std::string& name) { return (std::filesystem::path(dir) / name).string(); }
  void artifact(const std::string& name) { result.artifacts.push_back(name); }
  void audit(AuditRow row) { result.audits.push_back(std::move(row)); }

  RateCertificate certificate(const HamiltonianSpec& spec, double xi) const {
    CertifyOptions o;
    o.grid = cfg.certify_grid;
    return certify(spec, xi, cfg.tau, o);
  }

  void write_certificate(const RateCertificate& cert, const AlgebraicEnvelope* env) {
    write_file(path("certificate.txt"), certificate_report(cert, env));
    artifact("certificate.txt");
  }

  void certify_command() {
    const RateCertificate cert = certificate(cfg.spec, cfg.xi);
    std::optional<AlgebraicEnvelope> env;
    if (!cert.has_c_psi && cfg.sigma) {
      // Unit initial data: the envelope scales with H0 and the sup norm.
      env = algebraic_certificate(cert_spec(), cert, cfg.weight_exponent, *cfg.sigma, 1.0, 1.0);
    }
    write_certificate(cert, env ? &*env : nullptr);
    audit(audit_leq("modified Poincare constant lambda_P <= 1", cert.lambda_P, 1.0));
    audit({"modified Poincare constant lambda_P > 0", 0.0, cert.lambda_P, 0.0, cert.lambda_P > 0.0});
    log("lambda_P = " + num(cert.lambda_P) + ", lambda_bar = " + num(cert.lambda_bar));
  }

  HamiltonianSpec cert_spec() const { return cfg.spec.normalized ? cfg.spec : normalize_gibbs(cfg.spec); }

  void simulate_pde_command() {
    PhaseGridOptions go;
    go.nx = cfg.nx;
    go.nv = cfg.nv;
    go.v_tail_mass = cfg.v_tail_mass;
    const PhaseGrid grid(cfg.spec, go);
    const RateCertificate cert = certificate(grid.spec(), cfg.xi);

    RunOptions ro;
    ro.tau = cfg.tau;
    ro.t_end = cfg.t_end;
    ro.samples_per_tau = cfg.samples_per_tau;
    ro.cfl_fraction = cfg.cfl_fraction;
    const double last = cfg.t_end - cfg.tau;
    for (int k = 0; k < 5; ++k) ro.snapshot_starts.push_back(last * k / 4.0);
    log("grid " + std::to_string(grid.nx()) + " x " + std::to_string(grid.nv()) + ", dt = " +
        num(choose_time_step(grid, ro)));
    DecaySeries series = run(grid, default_initial(grid), cfg.xi, ro);

    std::optional<AlgebraicEnvelope> env;
    BoundReport bound;
    std::string bound_name;
    if (cert.has_c_psi) {
      const double h0 = series.H_tau[0], lb = cert.lambda_bar;
      bound = check_decay_bound(series, [h0, lb](double t) { return h0 * std::exp(-2.0 * lb * t); },
                                exponential_pointwise(lb, cfg.tau, series.h0_norm_sq));
      bound_name = "H_tau(t) <= exp(-2 lambda_bar t) H_tau(0)";
    } else {
      if (!cfg.sigma) throw ValidationError("run.sigma", "the kinetic Gibbs measure has no spectral gap; set run.sigma");
      env = algebraic_certificate(grid.spec(), cert, cfg.weight_exponent, *cfg.sigma, series.h0_sup, series.H_tau[0]);
      bound = check_decay_bound(series, *env, algebraic_pointwise(*env, cfg.tau, series.h0_norm_sq));
      bound_name = "H_tau(t) <= H_tau(0) / (1 + rate t)^sigma";
    }
    write_certificate(cert, env ? &*env : nullptr);
    series.write_csv(path("series.csv"));
    artifact("series.csv");

    audit(audit_leq("dissipation identity residual max |r| <= tol |h0|^2", series.max_dissip_residual(),
                    cfg.dissipation_tol * series.h0_norm_sq));
    double rise = 0.0;
    for (std::size_t i = 1; i < series.norm_sq.size(); ++i) rise = std::max(rise, series.norm_sq[i] - series.norm_sq[i - 1]);
    audit(audit_leq("monotone |h(t)|^2: largest increase <= 1e-12 |h0|^2", rise, 1e-12 * series.h0_norm_sq));
    audit(audit_leq(bound_name + " (worst ratio)", bound.max_ratio, 1.0, bound.slack));
    audit(audit_leq("pointwise corollary |h(t)|^2 <= bound (worst ratio)", bound.pointwise_ratio, 1.0, bound.slack));
    if (cert.has_c_psi) {
      const double fitted = fitted_rate(series);
      audit(audit_leq("fitted decay rate of H_tau exceeds 2 lambda_bar", 2.0 * cert.lambda_bar, fitted));
      log("fitted rate " + num(fitted) + " vs 2 lambda_bar = " + num(2.0 * cert.lambda_bar));
    }
    if (grid.spec().potential.on_torus()) {
      const double top = *std::max_element(series.sup.begin(), series.sup.end());
      // The centred scheme has no discrete maximum principle; allow 1% overshoot.
      audit(audit_leq("maximum principle max |h(t)| <= max |h0|", top, series.h0_sup, 0.01));
    }

    const double K = cert.averaging.K_avg;
    auto add_pair = [&](const std::string& label, const Trajectory& tr) {
      const InequalityCheck a = averaging_lemma_check(grid, tr, cfg.xi, K);
      const InequalityCheck p = modified_poincare_check(grid, tr, cfg.xi, cert.lambda_P);
      audit({"averaging lemma, " + label, a.lhs, a.rhs, 0.0, a.ok});
      audit({"modified Poincare inequality, " + label, p.lhs, p.rhs, 0.0, p.ok});
    };
    for (const Trajectory& tr : series.snapshots) add_pair("window at t = " + num(tr.start), tr);
    for (int k = 0; k < cfg.audit_random_fields; ++k) {
      const auto seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(k);
      add_pair("random field " + std::to_string(k), random_smooth_trajectory(grid, cfg.tau, cfg.samples_per_tau + 1, seed));
    }
  }

  SdeConfig sde_config() const {
    SdeConfig s;
    s.spec = cfg.spec;
    s.xi = cfg.xi;
    s.dt = cfg.sde_dt;
    s.n_steps = static_cast<int>(std::lround(cfg.t_end / cfg.sde_dt));
    s.n_paths = cfg.sde_paths;
    s.seed = cfg.seed;
    s.observable = cfg.observable;
    s.g_table = cfg.observable_table;
    s.initial = cfg.initial;
    s.record_every = cfg.sde_record_every;
    s.blocks = cfg.sde_blocks;
    return s;
  }

  void simulate_sde_command() {
    const SdeSeries series = integrate(sde_config());
    series.write_csv(path("sde.csv"));
    artifact("sde.csv");
    if (cfg.initial == InitialState::gibbs) {
      int outside = 0;
      for (std::size_t i = 0; i < series.t.size(); ++i) {
        if (std::abs(series.mean[i] - series.equilibrium) > 3.5 * series.stderr_[i]) ++outside;
      }
      audit(audit_leq("stationary start: fraction of records beyond 3.5 standard errors <= 0.05",
                      static_cast<double>(outside) / static_cast<double>(series.t.size()), 0.05));
      return;
    }
    DecayFit fit;
    try {
      fit = empirical_decay(series);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoDecay) throw;
      audit({std::string("relaxation detected (") + e.what() + ")", 0.0, 0.0, 0.0, false});
      return;
    }
    log("empirical rate " + num(fit.rate) + " [" + num(fit.ci_lo) + ", " + num(fit.ci_hi) + "] over t in [" +
        num(fit.t_start) + ", " + num(fit.t_stop) + "]");
    audit({"relaxation rate interval excludes zero", 0.0, fit.ci_lo, 0.0, fit.ci_lo > 0.0});
    const RateCertificate cert = certificate(cert_spec(), cfg.xi);
    write_certificate(cert, nullptr);
    if (cert.has_c_psi) {
      // The deviation of a bounded observable is at most |g| |h(t)|.
      audit(audit_leq("empirical rate of the observable >= lambda_bar", cert.lambda_bar, fit.ci_hi));
    }
  }

  void lions_check_command() {
    const HamiltonianSpec spec = cert_spec();
    const auto [lo, hi] = x_domain(spec);
    const bool torus = spec.potential.on_torus();
    const SpectralOperator op(Grid1D{torus ? Boundary::torus : Boundary::line, lo, hi, cfg.lions_nodes},
                              [&spec](double x) { return density_x(spec, x); });
    const LionsSolver solver(op, cfg.tau, cfg.lions_times);
    const RateCertificate cert = certificate(spec, cfg.xi);
    write_certificate(cert, nullptr);
    const double c_div = std::sqrt(cert.lions.C_div_sq);

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal;
    const int m = solver.times(), n = op.size();
    std::ostringstream csv;
    csv << "source,source_norm,residual,boundary_trace,h1_norm,C_div\n" << std::setprecision(17);
    double worst_res = 0.0, worst_trace = 0.0, worst_h1 = 0.0;
    for (int s = 0; s < cfg.lions_sources; ++s) {
      Eigen::MatrixXd f = Eigen::MatrixXd::Zero(m, n);
      if (s % 2 == 0) {
        // Smooth: low cosine-in-time modes times low spatial eigenvectors.
        for (int j = 0; j < 10; ++j) {
          for (int k = 0; k < std::min(10, n); ++k) {
            const double c = normal(rng) / (1.0 + j * j + k);
            for (int i = 0; i < m; ++i) {
              f.row(i) += c * std::cos(j * std::numbers::pi * solver.time(i) / solver.tau()) * op.eigenvectors().col(k).transpose();
            }
          }
        }
      } else {
        for (int i = 0; i < m; ++i)
          for (int k = 0; k < n; ++k) f(i, k) = normal(rng);
      }
      const DivergenceSolution sol = solver.solve_divergence(f);
      csv << s << ',' << sol.source_norm << ',' << sol.residual << ',' << sol.boundary_trace << ',' << sol.h1_norm
          << ',' << c_div << '\n';
      worst_res = std::max(worst_res, sol.residual / sol.source_norm);
      worst_trace = std::max(worst_trace, sol.boundary_trace);
      worst_h1 = std::max(worst_h1, sol.h1_norm / sol.source_norm);
    }
    write_file(path("lions.csv"), csv.str());
    artifact("lions.csv");
    audit(audit_leq("divergence residual / |f| (worst source)", worst_res, 1e-6));
    audit(audit_leq("boundary traces of Z at t = 0 and tau (worst source)", worst_trace, 1e-8));
    audit(audit_leq("|Z|_H1 / |f| <= C_div (worst source)", worst_h1, c_div));
    const LionsAudit la = empirical_lions_constant(op, cfg.tau, cfg.lions_random_fields, cfg.seed, cfg.lions_times);
    audit(audit_leq("empirical Lions ratio <= C_lions", la.constant, cert.lions.C_lions));
  }

  void sweep_friction_command() {
    const SdeConfig base = sde_config();
    log("SDE ensembles over " + std::to_string(cfg.sweep_xi.size()) + " friction values");
    const FrictionSweep sweep = friction_sweep(base, cfg.sweep_xi, cfg.tau);

    PhaseGridOptions go;
    go.nx = cfg.nx;
    go.nv = cfg.nv;
    go.v_tail_mass = cfg.v_tail_mass;
    const PhaseGrid grid(cfg.spec, go);
    RunOptions ro;
    ro.tau = cfg.tau;
    ro.t_end = cfg.t_end;
    ro.samples_per_tau = cfg.samples_per_tau;
    ro.cfl_fraction = cfg.cfl_fraction;
    std::vector<double> pde;
    for (double xi : cfg.sweep_xi) {
      log("grid solver at xi = " + num(xi));
      pde.push_back(fitted_rate(run(grid, default_initial(grid), xi, ro)));
    }

    std::ostringstream csv;
    csv << "xi,sde_rate,sde_rate_CI_lo,sde_rate_CI_hi,pde_rate,certified_lambda_bar\n" << std::setprecision(17);
    for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
      const SweepRow& r = sweep.rows[i];
      csv << r.xi << ',' << r.empirical_rate << ',' << r.ci_lo << ',' << r.ci_hi << ',' << pde[i] << ','
          << r.certified_lambda_bar << '\n';
    }
    write_file(path("sweep.csv"), csv.str());
    artifact("sweep.csv");

    const RateCertificate cert = certificate(cert_spec(), 1.0);
    write_certificate(cert, nullptr);
    if (cert.has_c_psi) {
      // lambda_bar(xi) on a fine logarithmic grid spanning the sweep.
      const double a = std::log(cfg.sweep_xi.front()), b = std::log(cfg.sweep_xi.back());
      const int fine = 4001;
      std::vector<double> lb(fine);
      for (int i = 0; i < fine; ++i) {
        const double xi = std::exp(a + (b - a) * i / (fine - 1));
        lb[i] = exponential_rate(cert.lions.C_lions, cert.averaging.K_avg, cert.c_psi, xi).lambda_bar;
      }
      const auto top = std::max_element(lb.begin(), lb.end()) - lb.begin();
      bool unimodal = true;
      for (long i = 1; i < fine; ++i) unimodal = unimodal && (i <= top ? lb[i] > lb[i - 1] : lb[i] < lb[i - 1]);
      const double argmax = std::exp(a + (b - a) * static_cast<double>(top) / (fine - 1));
      const double target = optimal_friction(cert.c_psi);
      audit({"certified lambda_bar(xi) is unimodal", unimodal ? 1.0 : 0.0, 1.0, 0.0, unimodal});
      audit({"argmax of lambda_bar(xi) at c_psi^{-1/2} (relative gap)", std::abs(argmax / target - 1.0),
             2.0 * (b - a) / (fine - 1), 0.0, std::abs(std::log(argmax / target)) <= 2.0 * (b - a) / (fine - 1)});
    }
    // Middle member: the friction closest (in log scale) to the certified optimum, else the median entry.
    std::size_t mid = sweep.rows.size() / 2;
    if (cert.has_c_psi) {
      const double target = std::log(optimal_friction(cert.c_psi));
      for (std::size_t i = 0; i < cfg.sweep_xi.size(); ++i) {
        if (std::abs(std::log(cfg.sweep_xi[i]) - target) < std::abs(std::log(cfg.sweep_xi[mid]) - target)) mid = i;
      }
    }
    const std::size_t last = pde.size() - 1;
    const std::string at = " at xi = " + num(cfg.sweep_xi[mid]);
    audit(audit_leq("grid-solver rate at smallest xi < rate" + at, pde[0], pde[mid]));
    audit(audit_leq("grid-solver rate at largest xi < rate" + at, pde[last], pde[mid]));
    audit(audit_leq("|SDE rate - grid-solver rate| <= 0.2 grid-solver rate" + at,
                    std::abs(sweep.rows[mid].empirical_rate - pde[mid]), 0.2 * pde[mid]));
    audit({"SDE rate rises from the smallest friction", sweep.rows[0].empirical_rate, sweep.rows[1].empirical_rate, 0.0,
           sweep.rising_at_small_xi});
    audit({"SDE rate falls toward the largest friction", sweep.rows[last].empirical_rate,
           sweep.rows[last - 1].empirical_rate, 0.0, sweep.falling_at_large_xi});
  }
};

void set_effective(ScenarioConfig& c, const std::string& key, const std::string& value) {
  for (auto& [k, v] : c.effective) {
    if (k == key) v = value;
  }
}

}  // namespace

ScenarioResult run_scenario(ScenarioConfig config, const RunContext& context) {
  if (context.out) {
    config.out = *context.out;
    set_effective(config, "run.out", config.out);
  }
  if (context.seed) {
    config.seed = *context.seed;
    set_effective(config, "run.seed", std::to_string(config.seed));
  }
  Runner r{config, context, create_run_dir(config.out, config.command), {}};
  r.result.run_dir = r.dir;
  write_file(r.path("config.ini"), "# command: " + std::string(command_name(config.command)) + "\n" + config.echo());
  r.artifact("config.ini");
  r.log("run directory " + r.dir);

  switch (config.command) {
    case Command::certify: r.certify_command(); break;
    case Command::simulate_pde: r.simulate_pde_command(); break;
    case Command::simulate_sde: r.simulate_sde_command(); break;
    case Command::lions_check: r.lions_check_command(); break;
    case Command::sweep_friction: r.sweep_friction_command(); break;
  }

  write_file(r.path("summary.txt"), summary_text(r.result.audits));
  r.artifact("summary.txt");
  r.result.exit_code = r.result.all_pass() ? exit_ok : exit_audit_failed;
  return r.result;
}

}  // namespace kfp
