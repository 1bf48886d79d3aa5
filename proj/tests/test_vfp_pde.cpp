#include <cmath>
#include <numbers>

#include "doctest.h"
#include "kfp/certificates.hpp"
#include "kfp/errors.hpp"
#include "kfp/vfp_pde.hpp"

using namespace kfp;

namespace {

HamiltonianSpec torus_spec(double amplitude = 1.0 / (4.0 * std::numbers::pi * std::numbers::pi)) {
  HamiltonianSpec s;
  s.potential.family = PotentialFamily::cosine;
  s.potential.amplitude = amplitude;
  return s;
}

PhaseGridOptions small(int n) {
  PhaseGridOptions o;
  o.nx = o.nv = n;
  return o;
}

}  // namespace

TEST_CASE("transport matrix is antisymmetric and divergence free") {
  for (const HamiltonianSpec& s : {torus_spec(0.3), HamiltonianSpec{}}) {
    const PhaseGrid g(s, small(24));
    const Eigen::SparseMatrix<double> sum = g.flux() + Eigen::SparseMatrix<double>(g.flux().transpose());
    CHECK(sum.norm() == 0.0);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(g.flux().rows());
    CHECK((g.flux() * ones).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("transport is second-order consistent in the bulk") {
  // psi'(v) d_x h - phi'(x) d_v h for h = sin(k x) + v^2, over cells with
  // |x|, |v| < 2, where the truncation walls play no role. On the unit torus
  // k = 2 pi keeps h periodic.
  for (const HamiltonianSpec& s : {torus_spec(0.3), HamiltonianSpec{}}) {
    const double k = s.potential.on_torus() ? 2.0 * std::numbers::pi : 1.0;
    double prev = INFINITY;
    for (int n : {48, 96}) {
      const PhaseGrid g(s, small(n));
      const Eigen::MatrixXd th = g.transport(g.sample([k](double x, double v) { return std::sin(k * x) + v * v; }));
      const Profile pot = potential_profile(g.spec().potential);
      const Profile kin = kinetic_profile(g.spec());
      double err = 0.0;
      for (int i = 0; i < g.nx(); ++i) {
        for (int j = 0; j < g.nv(); ++j) {
          const double x = g.x_node(i), v = g.v_node(j);
          if (std::abs(x) > 2.0 || std::abs(v) > 2.0) continue;
          err = std::max(err, std::abs(th(i, j) - (kin.d1(v) * k * std::cos(k * x) - pot.d1(x) * 2.0 * v)));
        }
      }
      CHECK(err < 0.4 * prev);
      prev = err;
    }
    CHECK(prev < 0.05);
  }
}

TEST_CASE("constants are stationary and mass is conserved") {
  const PhaseGrid g(torus_spec(0.5), small(32));
  const KineticStepper st(g, 1.0, 0.5 * g.cfl_limit());
  Eigen::MatrixXd h = Eigen::MatrixXd::Constant(g.nx(), g.nv(), 3.0);
  for (int k = 0; k < 10; ++k) st.step(h);
  CHECK((h.array() - 3.0).abs().maxCoeff() < 1e-12);

  Eigen::MatrixXd r = default_initial(g);
  const double m0 = g.mass(r);
  for (int k = 0; k < 50; ++k) {
    const double before = g.mass(r);
    st.step(r);
    CHECK(std::abs(g.mass(r) - before) < 1e-12);
  }
  CHECK(std::abs(g.mass(r) - m0) < 1e-12);
}

TEST_CASE("transport alone conserves the weighted norm") {
  const PhaseGrid g(HamiltonianSpec{}, small(32));
  const KineticStepper st(g, 0.0, 0.9 * g.cfl_limit());
  Eigen::MatrixXd h = default_initial(g);
  const double n0 = g.norm_sq(h);
  for (int k = 0; k < 100; ++k) st.step(h);
  CHECK(g.norm_sq(h) == doctest::Approx(n0).epsilon(1e-12));
}

TEST_CASE("flat potential and x-independent data: pure velocity diffusion") {
  const PhaseGrid g(torus_spec(0.0), small(32));
  const double dt = 0.5 * g.cfl_limit();
  const KineticStepper st(g, 2.0, dt);
  Eigen::MatrixXd h = g.remove_mean(g.sample([](double, double v) { return std::tanh(v) + 0.3 * v * v; }));
  Eigen::VectorXd col = h.row(0).transpose();
  const Eigen::MatrixXd gamma = g.v().mass().asDiagonal();
  const Eigen::MatrixXd k = g.velocity_stiffness();
  const Eigen::MatrixXd prop = (gamma + dt * k).llt().solve(gamma - dt * k);  // CN with xi = 2
  double prev = g.norm_sq(h);
  for (int s = 0; s < 20; ++s) {
    st.step(h);
    col = prop * col;
    CHECK((h.rowwise() - h.row(0)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((h.row(0).transpose() - col).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(g.norm_sq(h) < prev);
    prev = g.norm_sq(h);
  }
}

TEST_CASE("time steps beyond the transport limit are refused") {
  const PhaseGrid g(HamiltonianSpec{}, small(16));
  try {
    KineticStepper(g, 1.0, 1.01 * g.cfl_limit());
    FAIL("expected CFLViolation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CFLViolation);
  }
  CHECK_NOTHROW(KineticStepper(g, 1.0, g.cfl_limit()));
}

TEST_CASE("zero and constant data give a zero series") {
  const PhaseGrid g(torus_spec(), small(16));
  RunOptions o;
  o.t_end = 2.0;
  o.samples_per_tau = 8;
  const DecaySeries z = run(g, Eigen::MatrixXd::Zero(g.nx(), g.nv()), 1.0, o);
  for (std::size_t i = 0; i < z.t.size(); ++i) {
    CHECK(z.norm_sq[i] == 0.0);
    if (std::isfinite(z.H_tau[i])) CHECK(z.H_tau[i] == 0.0);
  }
  const Eigen::MatrixXd c = g.remove_mean(Eigen::MatrixXd::Constant(g.nx(), g.nv(), 2.5));
  const DecaySeries cs = run(g, c, 1.0, o);
  for (double n : cs.norm_sq) CHECK(n < 1e-25);
}

TEST_CASE("decay run: energy identity, monotonicity and H_tau bookkeeping") {
  const PhaseGrid g(torus_spec(), small(48));
  RunOptions o;
  o.t_end = 3.0;
  const DecaySeries s = run(g, default_initial(g), 1.0, o);
  CHECK(s.max_dissip_residual() <= 1e-4 * s.h0_norm_sq);
  CHECK(s.monotone(0.0));
  for (double d : s.mass_drift) CHECK(d <= 1e-9);
  // H_tau is the trapezoid of the stored norms.
  const int per = o.samples_per_tau;
  double acc = 0.5 * (s.norm_sq[0] + s.norm_sq[per]);
  for (int k = 1; k < per; ++k) acc += s.norm_sq[k];
  CHECK(s.H_tau[0] == doctest::Approx(acc * o.tau / per).epsilon(1e-14));
  CHECK(std::isnan(s.H_tau.back()));
  // Corollary form: |h(t + tau)|^2 <= H_tau(t) / tau since the norm decreases.
  for (std::size_t i = 0; i + per < s.t.size(); ++i) CHECK(s.norm_sq[i + per] <= s.H_tau[i] / o.tau * (1 + 1e-12));
}

TEST_CASE("dissipation residual shrinks under refinement") {
  RunOptions o;
  o.t_end = 1.0;
  double prev = INFINITY;
  for (int n : {24, 48}) {
    const PhaseGrid g(torus_spec(), small(n));
    const DecaySeries s = run(g, default_initial(g), 1.0, o);
    const double r = s.max_dissip_residual() / s.h0_norm_sq;
    CHECK(r < 0.6 * prev);
    prev = r;
  }
}

TEST_CASE("maximum principle on the torus") {
  // The centred scheme only keeps max|h| in check where the Gibbs weight is
  // bounded below; on the torus that is every cell.
  const PhaseGrid g(torus_spec());
  RunOptions o;
  o.t_end = 1.0;
  const DecaySeries s = run(g, default_initial(g), 1.0, o);
  double worst = 0.0;
  for (double v : s.sup) worst = std::max(worst, v);
  CHECK(worst <= s.h0_sup + 1e-6);
}

TEST_CASE("bound checker: certified rate passes, inflated rate fails") {
  const PhaseGrid g(torus_spec(), small(32));
  const RateCertificate cert = certify(g.spec(), 1.0, 1.0);
  RunOptions o;
  o.t_end = 5.0;
  DecaySeries s = run(g, default_initial(g), 1.0, o);
  const double h0 = s.H_tau[0];
  const double lb = cert.lambda_bar;
  const BoundReport ok = check_decay_bound(
      s, [&](double t) { return h0 * std::exp(-2.0 * lb * t); }, exponential_pointwise(lb, 1.0, s.h0_norm_sq));
  CHECK(ok.pass);
  CHECK(ok.pointwise_pass);
  CHECK(std::isfinite(s.bound_value[0]));
  for (int v : s.violated) CHECK(v == 0);

  const double fitted = fitted_rate(s);
  CHECK(fitted > 2.0 * lb);
  const BoundReport bad = check_decay_bound(
      s, [&](double t) { return h0 * std::exp(-10.0 * fitted * t); }, {});
  CHECK_FALSE(bad.pass);
  CHECK(bad.max_ratio > 1.05);
  int flagged = 0;
  for (int v : s.violated) flagged += v;
  CHECK(flagged > 0);
}

TEST_CASE("fitted rate of a synthetic exponential") {
  DecaySeries s;
  for (int i = 0; i <= 400; ++i) {
    s.t.push_back(0.025 * i);
    s.H_tau.push_back(std::exp(-2.0 * 0.025 * i));
  }
  CHECK(fitted_rate(s) == doctest::Approx(2.0).epsilon(1e-10));
  DecaySeries flat;
  for (int i = 0; i < 10; ++i) {
    flat.t.push_back(i);
    flat.H_tau.push_back(1.0);
  }
  CHECK_THROWS_AS(fitted_rate(flat), Error);
}

TEST_CASE("velocity dual norm") {
  const PhaseGrid g(HamiltonianSpec{}, small(32));
  // Functions of x alone have H^-1(gamma) norm equal to their L2 norm.
  const Eigen::MatrixXd c = g.sample([](double x, double) { return std::cos(x); });
  CHECK(g.dual_v_norm_sq(c) == doctest::Approx(g.norm_sq(c)).epsilon(1e-12));
  // Discrete regularity estimate: |S h|_{-1} <= |grad_v h|.
  const Eigen::MatrixXd h = default_initial(g);
  CHECK(g.dual_v_norm_sq(g.collision(h)) <= g.grad_v_sq(h) * (1 + 1e-12));
  CHECK(g.dual_v_norm_sq(g.collision(h)) > 0.0);
}

TEST_CASE("averaging lemma and modified Poincare inequality") {
  const PhaseGrid g(torus_spec(), small(32));
  const RateCertificate cert = certify(g.spec(), 1.0, 1.0);
  const double K = cert.averaging.K_avg;

  SUBCASE("velocity average constant in space") {
    Trajectory tr;
    tr.tau = 1.0;
    for (int j = 0; j < 17; ++j) {
      const double t = j / 16.0;
      tr.fields.push_back(g.remove_mean(g.sample([&](double, double v) { return std::cos(t) * std::tanh(v); })));
    }
    const auto a = averaging_lemma_check(g, tr, 1.0, K);
    CHECK(a.lhs < 1e-20);
    CHECK(a.ok);
  }
  SUBCASE("local-equilibrium field G(v) z(t, x)") {
    // Pi h = z and (Id - Pi) h = (G - 1) z with G = 1 + tanh(v)^2 - <tanh^2>.
    const Eigen::VectorXd tv = g.sample([](double, double v) { return std::tanh(v) * std::tanh(v); }).row(0);
    const double mean_t2 = g.v().mass().dot(tv);
    Trajectory tr;
    tr.tau = 1.0;
    for (int j = 0; j < 33; ++j) {
      const double t = j / 32.0;
      tr.fields.push_back(g.sample([&](double x, double v) {
        const double G = 1.0 + std::tanh(v) * std::tanh(v) - mean_t2;
        return G * std::sin(std::numbers::pi * t) * std::cos(2.0 * std::numbers::pi * x);
      }));
      tr.time_derivative.push_back(g.sample([&](double x, double v) {
        const double G = 1.0 + std::tanh(v) * std::tanh(v) - mean_t2;
        return G * std::numbers::pi * std::cos(std::numbers::pi * t) * std::cos(2.0 * std::numbers::pi * x);
      }));
    }
    const auto a = averaging_lemma_check(g, tr, 1.0, K);
    CHECK(a.lhs > 0.0);
    CHECK(a.rhs > 0.0);
    CHECK(a.ok);
  }
  SUBCASE("zero field") {
    Trajectory tr;
    for (int j = 0; j < 5; ++j) tr.fields.push_back(Eigen::MatrixXd::Zero(g.nx(), g.nv()));
    const auto p = modified_poincare_check(g, tr, 1.0, cert.lambda_P);
    CHECK(p.lhs == 0.0);
    CHECK(p.rhs == 0.0);
    CHECK(p.ok);
  }
  SUBCASE("solution windows") {
    RunOptions o;
    o.t_end = 4.0;
    o.samples_per_tau = 16;
    o.snapshot_starts = {0.0, 1.0, 2.0};
    const DecaySeries s = run(g, default_initial(g), 1.0, o);
    REQUIRE(s.snapshots.size() == 3);
    for (const Trajectory& tr : s.snapshots) {
      CHECK(tr.fields.size() == 17);
      CHECK(averaging_lemma_check(g, tr, 1.0, K).ok);
      CHECK(modified_poincare_check(g, tr, 1.0, cert.lambda_P).ok);
    }
  }
  SUBCASE("random smooth fields") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Trajectory tr = random_smooth_trajectory(g, 1.0, 17, seed);
      double mean = 0.0;
      for (int j = 0; j < 17; ++j) mean += ((j == 0 || j == 16) ? 0.5 : 1.0) / 16.0 * g.mass(tr.fields[j]);
      CHECK(std::abs(mean) < 1e-12);
      CHECK(averaging_lemma_check(g, tr, 1.0, K).ok);
      CHECK(modified_poincare_check(g, tr, 1.0, cert.lambda_P).ok);
    }
  }
}

TEST_CASE("heavy-tail grid and algebraic envelope") {
  HamiltonianSpec s = torus_spec();
  s.kinetic.family = KineticFamily::heavytail;
  s.kinetic.beta = 8.0;
  const PhaseGrid g(s, small(32));
  // Tail mass 1e-8 for (1 + v^2)^-4.
  CHECK(g.spec().v_radius > 10.0);
  CHECK(g.spec().v_radius < 15.0);
  const RateCertificate cert = certify(g.spec(), 1.0, 1.0);
  RunOptions o;
  o.t_end = 3.0;
  o.samples_per_tau = 16;
  DecaySeries series = run(g, default_initial(g), 1.0, o);
  const AlgebraicEnvelope env = algebraic_certificate(g.spec(), cert, 1.0, 1.0, series.h0_sup, series.H_tau[0]);
  CHECK(env.P_psi > 0.0);
  CHECK(env.weight_moment == doctest::Approx(1.2).epsilon(1e-8));
  CHECK(env.H0 == series.H_tau[0]);
  const BoundReport rep = check_decay_bound(series, env, algebraic_pointwise(env, 1.0, series.h0_norm_sq));
  CHECK(rep.pass);
  CHECK(rep.pointwise_pass);
  CHECK_THROWS_AS(algebraic_certificate(g.spec(), cert, 1.0, 4.0, 1.0, 1.0), Error);
}
