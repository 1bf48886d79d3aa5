#include <cmath>
#include <vector>

#include "doctest.h"
#include "kfp/certificates.hpp"
#include "kfp/errors.hpp"
#include "kfp/langevin_sde.hpp"
#include "kfp/vfp_pde.hpp"

using namespace kfp;

namespace {

SdeConfig quick(double xi, double t_end, int paths) {
  SdeConfig c;
  c.xi = xi;
  c.dt = 5e-3;
  c.n_steps = static_cast<int>(std::lround(t_end / c.dt));
  c.n_paths = paths;
  c.seed = 7;
  return c;
}

double energy_drift(double dt) {
  SdeConfig c = quick(0.0, 2.0, 50);
  c.dt = dt;
  c.n_steps = static_cast<int>(std::lround(2.0 / dt));
  c.record_every = c.n_steps;
  c.initial = InitialState::dilated;
  const SdeSeries s = integrate(c);
  return std::abs(s.mean.back() - s.mean.front());
}

}  // namespace

TEST_CASE("equilibrium values of the standard Gaussian") {
  const HamiltonianSpec s;
  CHECK(equilibrium_value(s, Observable::second_moment_x) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(equilibrium_value(s, Observable::second_moment_v) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(equilibrium_value(s, Observable::energy) == doctest::Approx(1.0).epsilon(1e-8));
  HamiltonianSpec d3;
  d3.dim = 3;
  CHECK(equilibrium_value(d3, Observable::energy) == doctest::Approx(3.0).epsilon(1e-8));
  Table1D g{-20.0, 0.01, {}};
  for (int i = 0; i <= 4000; ++i) g.values.push_back(std::pow(-20.0 + 0.01 * i, 4));
  CHECK(equilibrium_value(s, Observable::tabulated_x, g) == doctest::Approx(3.0).epsilon(1e-4));
}

TEST_CASE("without friction the splitting conserves energy to second order") {
  const double coarse = energy_drift(0.02);
  const double fine = energy_drift(0.01);
  CHECK(coarse < 1e-3);
  CHECK(fine / coarse == doctest::Approx(0.25).epsilon(0.15));
}

TEST_CASE("a Gibbs start stays stationary") {
  SdeConfig c = quick(1.0, 4.0, 4000);
  c.observable = Observable::second_moment_x;
  const SdeSeries s = integrate(c);
  int outside = 0;
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    if (std::abs(s.mean[i] - s.equilibrium) > 3.5 * s.stderr_[i]) ++outside;
  }
  // A handful of excursions are expected among 81 correlated records.
  CHECK(outside <= 4);
  CHECK_THROWS_AS(empirical_decay(s), Error);
}

TEST_CASE("the ergodic average of x^2 matches quadrature on a cosine torus") {
  HamiltonianSpec torus;
  torus.potential.family = PotentialFamily::cosine;
  torus.potential.amplitude = 0.5;
  SdeConfig c = quick(1.0, 1.0, 4000);
  c.spec = torus;
  c.observable = Observable::second_moment_x;
  const SdeSeries s = integrate(c);
  CHECK(std::abs(s.mean.back() - s.equilibrium) < 3.0 * s.stderr_.back());
}

TEST_CASE("runs are reproducible and independent of the path count split") {
  SdeConfig c = quick(1.0, 0.5, 64);
  const SdeSeries a = integrate(c);
  const SdeSeries b = integrate(c);
  CHECK(a.mean == b.mean);
  CHECK(a.stderr_ == b.stderr_);
  c.seed = 8;
  CHECK(integrate(c).mean != a.mean);
  // Path p draws from its own stream, so a single path equals path 0 of a larger run.
  SdeConfig one = quick(1.0, 0.5, 1);
  one.blocks = 1;
  SdeConfig many = one;
  many.n_paths = 40;
  many.blocks = 40;
  const SdeSeries s1 = integrate(one);
  const SdeSeries s40 = integrate(many);
  for (std::size_t r = 0; r < s1.t.size(); ++r) CHECK(s40.block_means(static_cast<Eigen::Index>(r), 0) == s1.mean[r]);
}

TEST_CASE("decay fit on synthetic series") {
  SdeSeries s;
  s.equilibrium = 1.0;
  for (int i = 0; i <= 100; ++i) {
    s.t.push_back(0.05 * i);
    s.mean.push_back(1.0 + std::exp(-2.0 * s.t.back()));
    s.stderr_.push_back(0.0);
  }
  const DecayFit fit = empirical_decay(s);
  CHECK(fit.rate == doctest::Approx(2.0).epsilon(0.005));
  CHECK(fit.points == 101);

  SdeSeries flat = s;
  for (double& m : flat.mean) m = 1.5;
  CHECK_THROWS_AS(empirical_decay(flat), Error);

  // The fit stops where the deviation sinks into the noise.
  SdeSeries noisy = s;
  for (double& e : noisy.stderr_) e = 1e-3;
  const DecayFit cut = empirical_decay(noisy);
  CHECK(cut.t_stop < std::log(1.0 / 5e-3) / 2.0 + 0.05);
  CHECK(cut.rate == doctest::Approx(2.0).epsilon(0.005));
}

TEST_CASE("subexponential kinetic energy runs through the Euler-Maruyama branch") {
  HamiltonianSpec s;
  s.kinetic.family = KineticFamily::subexp;
  s.kinetic.alpha = 0.5;
  SdeConfig c = quick(1.0, 2.0, 2000);
  c.spec = s;
  c.dt = 2e-3;
  c.n_steps = 1000;
  c.observable = Observable::second_moment_v;
  const SdeSeries r = integrate(c);
  CHECK(std::abs(r.mean.back() - r.equilibrium) < 4.0 * r.stderr_.back() + 0.02 * r.equilibrium);
}

TEST_CASE("blow-up is reported") {
  HamiltonianSpec stiff;
  stiff.potential.stiffness = 1e4;
  SdeConfig c = quick(1.0, 10.0, 4);
  c.spec = stiff;
  c.dt = 0.05;
  try {
    integrate(c);
    FAIL("expected a blow-up");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Blowup);
  }
}

TEST_CASE("relaxation of the quadratic case at unit friction agrees with the grid solver") {
  SdeConfig c = quick(1.0, 8.0, 20000);
  c.initial = InitialState::dilated;
  const DecayFit fit = empirical_decay(integrate(c));
  CHECK(fit.ci_lo < fit.rate);
  CHECK(fit.rate < fit.ci_hi);
  // 2 |Re lambda| of the drift matrix is 1 at unit friction.
  CHECK(fit.rate == doctest::Approx(1.0).epsilon(0.2));

  const PhaseGrid g(HamiltonianSpec{}, [] {
    PhaseGridOptions o;
    o.nx = o.nv = 64;
    return o;
  }());
  RunOptions opt;
  opt.t_end = 12.0;
  const double pde = fitted_rate(run(g, default_initial(g), 1.0, opt));
  CHECK(std::abs(fit.rate - pde) < 0.2 * pde);
}

TEST_CASE("friction sweep rows carry the certified rate for each friction") {
  SdeConfig c = quick(1.0, 6.0, 3000);
  c.initial = InitialState::dilated;
  const std::vector<double> xis{0.3, 1.0, 3.0};
  const FrictionSweep sweep = friction_sweep(c, xis);
  REQUIRE(sweep.rows.size() == 3);
  const RateCertificate cert = certify(normalize_gibbs(HamiltonianSpec{}), 1.0, 1.0);
  for (const SweepRow& r : sweep.rows) {
    const double want = exponential_rate(cert.lions.C_lions, cert.averaging.K_avg, cert.c_psi, r.xi).lambda_bar;
    CHECK(r.certified_lambda_bar == want);
    CHECK(r.empirical_rate > 0.0);
  }
  CHECK(sweep.rising_at_small_xi);
  CHECK(sweep.falling_at_large_xi);
}
