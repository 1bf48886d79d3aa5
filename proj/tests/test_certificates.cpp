#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "doctest.h"
#include "kfp/certificates.hpp"
#include "kfp/errors.hpp"

using namespace kfp;

namespace {

constexpr double kPi = std::numbers::pi;

HamiltonianSpec tensorised(FactorShape shape, int d, double param = 0.0) {
  HamiltonianSpec s;
  s.dim = d;
  s.kinetic.family = KineticFamily::tensorised;
  s.kinetic.factor = shape;
  if (shape == FactorShape::subexp) s.kinetic.alpha = param;
  if (shape == FactorShape::heavytail) s.kinetic.beta = param;
  return s;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

TEST_CASE("Gaussian factor gives the closed-form averaging constants") {
  const auto t = moments(tensorised(FactorShape::quadratic, 1));
  const auto k = k_avg_tensorised(t, 1, t.grad_phi_norm.value, 1e-8);
  CHECK(k.C1 == doctest::Approx(1.0 + std::sqrt(2.0)).epsilon(1e-9));
  CHECK(k.C2 == doctest::Approx(4.0 + std::sqrt(2.0)).epsilon(1e-9));
  CHECK(std::abs(k.K_avg - (36.0 + 16.0 * std::sqrt(2.0))) < 1e-9);
  CHECK_FALSE(k.correction);
}

TEST_CASE("L_phi examples") {
  CHECK(l_phi(0.0, 1) == 4.0);
  CHECK(l_phi(16.0, 4) == 16.0);
  CHECK(l_phi(4.0, 1) == 4.0);
}

TEST_CASE("general averaging constant is at least 2 and never below the tensorised one") {
  for (int d : {1, 2, 3}) {
    const auto s = normalize_gibbs(tensorised(FactorShape::quadratic, d));
    const auto t = moments(s);
    const auto m = matrix_m(s, t);
    const auto g = k_avg_general(m, t, l_phi(0.0, d));
    const auto q = k_avg_tensorised(t, d, t.grad_phi_norm.value, s.quad_tol);
    CHECK(g.C1 >= 1.0);
    CHECK(g.C2 >= 1.0);
    CHECK(g.K_avg >= 2.0);
    CHECK(g.K_avg >= q.K_avg);
  }
  // Gaussian in d = 1 through the general formula: all moments are explicit.
  const auto s = normalize_gibbs(HamiltonianSpec{});
  const auto t = moments(s);
  const auto g = k_avg_general(matrix_m(s, t), t, 4.0);
  CHECK(g.C1 == doctest::Approx(1.0 + std::sqrt(2.0)).epsilon(1e-10));
  CHECK(g.C2 == doctest::Approx(3.0 + std::sqrt(3.0) + 4.0).epsilon(1e-10));
}

TEST_CASE("Lions constants: limits and special values") {
  const auto far = lions_constant(1.0, 0.0, 0.0, 1, 1e3);
  CHECK(far.C_N == doctest::Approx(498.0).epsilon(1e-12));
  CHECK(far.C_P == doctest::Approx(kPi * kPi / 1e6).epsilon(1e-14));
  CHECK(far.C_LM == doctest::Approx(2.0 + 1e6 / (kPi * kPi)).epsilon(1e-12));

  CHECK(lions_constant(1.0, 0.0, 0.0, 1, kPi).C_P == doctest::Approx(1.0).epsilon(1e-15));

  const auto c = lions_constant(0.7, 0.3, 2.0, 3, 1.5);
  CHECK(c.C_div_sq == 3.0 * (c.C_LM + 2.0 * c.C_N));
  CHECK(c.C_lions == c.C_div_sq);

  CHECK_THROWS_AS(lions_constant(0.0, 0.0, 0.0, 1, 1.0), Error);
  try {
    lions_constant(-1.0, 0.0, 0.0, 1, 1.0);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ZeroPoincare);
  }
}

TEST_CASE("Lions constant scales like 1/c_phi at tau = c_phi^{-1/2}") {
  std::vector<double> scaled;
  for (double cp : {1.0, 1e-2, 1e-4}) {
    scaled.push_back(lions_constant(cp, 0.0, 0.0, 1, 1.0 / std::sqrt(cp)).C_lions * cp);
  }
  // With tau sqrt(c_phi) fixed, C_lions c_phi decreases towards the limit
  // 3 (1 + 2 * 37) = 225 and stays bounded on both sides.
  for (double v : scaled) {
    CHECK(v > 225.0);
    CHECK(v < 5000.0);
  }
  CHECK(scaled[0] > scaled[1]);
  CHECK(scaled[1] > scaled[2]);
  CHECK(scaled[2] == doctest::Approx(225.0).epsilon(0.01));
}

TEST_CASE("Lions constant grows like tau^-2 and tau^2 at the two ends") {
  struct Case { double c, c1, c2; int d; };
  for (const Case k : {Case{1.0, 0.0, 0.0, 1}, Case{1.0, 1.0, 1.0, 4}, Case{4.0 * kPi * kPi, 0.5, 3.0, 10}}) {
    auto C = [&](double tau) { return lions_constant(k.c, k.c1, k.c2, k.d, tau).C_lions; };
    CHECK(C(0.5e-3) / C(1e-3) == doctest::Approx(4.0).epsilon(0.1));
    CHECK(C(2e3) / C(1e3) == doctest::Approx(4.0).epsilon(0.1));
  }
  // At large tau the leading term carries the sqrt(d) of the regularity part.
  const double r = lions_constant(1.0, 1.0, 0.0, 4000000, 1e3).C_lions /
                   lions_constant(1.0, 1.0, 0.0, 1000000, 1e3).C_lions;
  CHECK(r == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("exponential rate arithmetic and friction limits") {
  const auto r = exponential_rate(99.0, 1.0, 1.0, 1.0);
  CHECK(r.lambda_P == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(r.lambda_bar == doctest::Approx(0.005).epsilon(1e-15));

  const double cpsi = 2.5;
  const auto small = exponential_rate(9.0, 1.0, cpsi, 1e-4);
  CHECK(small.lambda_bar / 1e-4 == doctest::Approx(small.lambda_P * cpsi).epsilon(1e-7));
  const auto big = exponential_rate(9.0, 1.0, cpsi, 1e4);
  CHECK(big.lambda_bar * 1e4 == doctest::Approx(big.lambda_P).epsilon(1e-7));
}

TEST_CASE("optimal friction is the maximiser of the rate") {
  CHECK(optimal_friction(1.0) == 1.0);
  CHECK(optimal_friction(4.0) == 0.5);
  for (double cpsi : {0.01, 0.3, 1.0, 7.0, 250.0}) {
    const double xs = optimal_friction(cpsi);
    const double best = exponential_rate(10.0, 2.0, cpsi, xs).lambda_bar;
    CHECK(best >= exponential_rate(10.0, 2.0, cpsi, 0.5 * xs).lambda_bar);
    CHECK(best >= exponential_rate(10.0, 2.0, cpsi, 2.0 * xs).lambda_bar);
    // Unimodal on a log grid: increasing before the maximiser, decreasing after.
    double prev = 0.0;
    for (int i = -40; i <= 40; ++i) {
      const double xi = xs * std::pow(10.0, i / 10.0);
      const double v = exponential_rate(10.0, 2.0, cpsi, xi).lambda_bar;
      if (i <= 0) CHECK(v > prev);
      if (i > 0) CHECK(v < prev);
      prev = v;
    }
  }
}

TEST_CASE("M0 plug-in values and homogeneity") {
  CHECK(m0_constant(1.0, 1.0, 1.0, 1.0, 1.0, 1.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  for (double sigma : {0.5, 1.0, 3.0}) {
    const double q = sigma + 1.0;
    const double a = m0_constant(2.0, 0.1, 3.0, 1.7, 1.0, sigma);
    const double b = m0_constant(2.0, 0.1, 3.0, 1.7, 2.0, sigma);
    CHECK(b / a == doctest::Approx(std::pow(2.0, 2.0 / q)).epsilon(1e-13));
  }
  // Large sigma: finite, and moving towards the limit 2^{-1} P / lambda_P.
  const double limit = 0.5 * 3.0 / 0.1;
  const double m10 = m0_constant(2.0, 0.1, 3.0, 1.7, 1.5, 10.0);
  const double m100 = m0_constant(2.0, 0.1, 3.0, 1.7, 1.5, 100.0);
  CHECK(std::isfinite(m100));
  CHECK(std::abs(m100 - limit) < std::abs(m10 - limit));
}

TEST_CASE("y0 root: special cases and agreement of two solvers") {
  CHECK(y0_root(1.0, 1.0, 0.1, 0.0, 1.0) == 0.0);
  CHECK(y0_root(0.0, 2.0, 0.1, 3.0, 1.0) == doctest::Approx(2.0 * 0.1 * 3.0 / 2.0).epsilon(1e-15));
  struct Case { double M0, xi, lam, H0, sigma; };
  for (const Case c : {Case{1.0, 1.0, 0.01, 1.0, 1.0}, Case{50.0, 0.1, 1e-4, 3.0, 0.5},
                       Case{0.2, 10.0, 0.3, 1e-3, 2.0}, Case{1e3, 3.0, 1e-6, 1e4, 3.49}}) {
    const double a = y0_root(c.M0, c.xi, c.lam, c.H0, c.sigma);
    const double b = y0_bisection(c.M0, c.xi, c.lam, c.H0, c.sigma);
    CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)));
    const double theta = c.xi * a / (2.0 * c.lam) + c.M0 * std::pow(a / c.xi, c.sigma / (c.sigma + 1.0));
    CHECK(std::abs(theta - c.H0) <= 1e-10 * std::max(1.0, c.H0));
  }
}

TEST_CASE("algebraic envelope matches the Bihari-LaSalle bound and decays like t^-sigma") {
  for (double sigma : {0.5, 1.0, 2.0}) {
    const double H0 = 2.3, xi = 0.7, lam = 0.02;
    const double M0 = m0_constant(1.0, lam, 1.5, 1.2, 1.1, sigma);
    const double y0 = y0_root(M0, xi, lam, H0, sigma);
    const auto env = algebraic_envelope(H0, xi, sigma, M0, y0, lam);
    CHECK(env.p == doctest::Approx((sigma + 1.0) / sigma));
    CHECK(1.0 / env.p + 1.0 / env.q == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(env(0.0) == H0);
    const double p = env.p;
    const double a = std::pow(xi, -1.0 / p) * M0 + xi / (2.0 * lam) * std::pow(y0, (p - 1.0) / p);
    double prev = H0;
    for (double t : {0.1, 1.0, 10.0, 1e3, 1e6}) {
      const double bl = std::pow(std::pow(H0, 1.0 - p) + (p - 1.0) * std::pow(a, -p) * t, -1.0 / (p - 1.0));
      CHECK(env(t) == doctest::Approx(bl).epsilon(1e-12));
      CHECK(env(t) < prev);
      prev = env(t);
    }
    // Slope over two decades measured in units of the envelope's own rate.
    const double t1 = 1e2 / env.rate, t2 = 1e4 / env.rate;
    const double slope = std::log(env(t2) / env(t1)) / std::log(t2 / t1);
    CHECK(slope == doctest::Approx(-sigma).epsilon(0.05 / sigma));
  }
  const double c1 = 0.4, c2 = 0.9, xi = 2.0;
  AlgebraicEnvelope e;
  e.sigma = 1.0;
  e.H0 = 5.0;
  e.rate = std::pow(std::pow(xi, -0.5) * c1 + xi * c2, -2.0);
  CHECK(e(3.0) == doctest::Approx(5.0 / (1.0 + std::pow(std::pow(xi, -0.5) * c1 + xi * c2, -2.0) * 3.0)));

  const auto zero = algebraic_envelope(0.0, 1.0, 1.0, 1.0, 0.0, 0.1);
  CHECK(zero.zero_initial);
  CHECK(zero(0.0) == 0.0);
  CHECK(zero(10.0) == 0.0);
}

TEST_CASE("weight moments against closed forms") {
  HamiltonianSpec s;
  s.kinetic.family = KineticFamily::heavytail;
  s.kinetic.beta = 8.0;
  // int (1+v^2)^{-3} / int (1+v^2)^{-4} = (3 pi / 8) / (5 pi / 16).
  CHECK(weight_moment(s, 1.0, 1.0) == doctest::Approx(1.2).epsilon(1e-9));
  CHECK_THROWS_AS(weight_moment(s, 1.0, 3.5), Error);
  HamiltonianSpec g;
  CHECK(weight_moment(g, 1.0, 1.0) == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("tensorised constant is bitwise independent of the dimension when the cross term vanishes") {
  std::vector<double> k;
  for (int d : {1, 10, 100}) {
    const auto t = moments(tensorised(FactorShape::quadratic, d));
    k.push_back(k_avg_tensorised(t, d, t.grad_phi_norm.value, 1e-8).K_avg);
  }
  CHECK(same_bits(k[0], k[1]));
  CHECK(same_bits(k[0], k[2]));
}

TEST_CASE("subexponential factor carries the dimension-dependent correction") {
  const double a = 0.5;
  // Oracle: fourth derivative by central differences of the analytic q''.
  const Profile q = Profile::subexp(a);
  boost::math::quadrature::tanh_sinh<double> ts;
  const double inf = std::numeric_limits<double>::infinity();
  const double h = 1e-3;
  const double z = ts.integrate([&](double v) { return std::exp(-q.value(v)); }, -inf, inf);
  const double q4 = ts.integrate(
                        [&](double v) {
                          const double d4 = (q.d2(v + h) - 2.0 * q.d2(v) + q.d2(v - h)) / (h * h);
                          return d4 * std::exp(-q.value(v));
                        },
                        -inf, inf) /
                    z;
  const bool expect = std::abs(q4) > 1e-8;
  CHECK(expect);

  std::vector<double> coeff;
  for (int d : {1, 4, 16}) {
    const auto s = tensorised(FactorShape::subexp, d, a);
    const auto t = moments(s);
    const auto k = k_avg_tensorised(t, d, t.grad_phi_norm.value, s.quad_tol);
    CHECK(k.correction == expect);
    CHECK(k.sqrt_d_coefficient > 0.0);
    CHECK(k.correction_term == doctest::Approx(k.sqrt_d_coefficient * std::sqrt(d) + 2.0 * std::abs(t.int_q4->value)));
    coeff.push_back(k.sqrt_d_coefficient);
  }
  CHECK(coeff[0] == doctest::Approx(coeff[2]).epsilon(1e-12));

  const auto cert = certify(tensorised(FactorShape::subexp, 8, a), 1.0, 1.0);
  REQUIRE(cert.entry("correction") != nullptr);
  REQUIRE(cert.entry("sqrt_d_coefficient") != nullptr);
  CHECK(cert.entry("correction")->note.find("dimension-dependent") != std::string::npos);
  CHECK_FALSE(cert.has_c_psi);
}

TEST_CASE("certificate invariants on representative specs") {
  HamiltonianSpec gauss;
  HamiltonianSpec torus;
  torus.potential.family = PotentialFamily::cosine;
  torus.potential.amplitude = 1.0 / (4.0 * kPi * kPi);
  HamiltonianSpec heavy;
  heavy.kinetic.family = KineticFamily::heavytail;
  heavy.kinetic.beta = 8.0;
  for (const auto& s : {gauss, torus, heavy}) {
    const auto c = certify(s, 1.0, 1.0);
    CHECK(c.c_phi > 0.0);
    CHECK(c.L_phi > 0.0);
    CHECK(c.averaging.K_avg >= 2.0);
    CHECK(c.lions.C_P > 0.0);
    CHECK(c.lions.C_div_sq <= 3.0 * (c.lions.C_LM + 2.0 * c.lions.C_N));
    CHECK(c.lambda_P == 1.0 / (1.0 + c.lions.C_lions * c.averaging.K_avg));
    if (c.has_c_psi) {
      CHECK(c.lambda_bar == c.lambda_P / (1.0 / (c.xi * c.c_psi) + c.xi));
      CHECK(c.lambda_bar > 0.0);
    }
    for (const auto& e : c.entries) {
      if (e.name == "c_psi" || e.name == "lambda_bar") continue;
      CHECK_MESSAGE(e.value > 0.0, e.name);
      CHECK_FALSE(e.note.empty());
    }
  }
  const auto g = certify(gauss, 1.0, 1.0);
  CHECK(g.c_phi == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(g.c_psi == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(g.c_psi_source == ConstantSource::eigensolve);
  CHECK(g.averaging.K_avg == doctest::Approx(36.0 + 16.0 * std::sqrt(2.0)).epsilon(1e-9));
  CHECK_FALSE(certify(heavy, 1.0, 1.0).has_c_psi);

  HamiltonianSpec declared = gauss;
  declared.c_phi = 2.0;
  const auto d = certify(declared, 1.0, 1.0);
  CHECK(d.c_phi == 2.0);
  CHECK(d.c_phi_source == ConstantSource::declared);
}
