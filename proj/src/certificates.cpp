#include "kfp/certificates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "kfp/errors.hpp"
#include "kfp/spectral1d.hpp"
#include "quadrature.hpp"

namespace kfp {

const char* source_name(ConstantSource source) {
  switch (source) {
    case ConstantSource::declared: return "declared";
    case ConstantSource::eigensolve: return "eigensolve";
    case ConstantSource::empirical: return "empirical";
    case ConstantSource::closed_form: return "closed form";
  }
  return "unknown";
}

const Provenance* RateCertificate::entry(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

double l_phi(double c2_phi, int dim) { return 2.0 * std::max(2.0, std::sqrt(dim * c2_phi)); }

AveragingConstant k_avg_general(const MatrixM& matrix, const MomentTable& table, double L_phi) {
  const double g = std::sqrt(table.grad_psi_sq.value);
  AveragingConstant k;
  k.C1 = 1.0 + matrix.rho_scaled * std::sqrt(table.G_h1_sq.value) / g;
  k.C2 = 1.0 + std::sqrt(matrix.rho_second_moment) +
         (matrix.rho_scaled + std::sqrt(table.sum_GM_gradpsi_sq.value) +
          L_phi * std::sqrt(table.sum_grad_GM_sq.value)) /
             g;
  k.K_avg = 2.0 * std::pow(std::max(k.C1, k.C2), 2);
  return k;
}

AveragingConstant k_avg_tensorised(const MomentTable& table, int dim, double grad_phi_norm,
                                   double quad_tol) {
  if (!table.separable || !table.qp_sq) {
    throw ValidationError("spec.kinetic", "tensorised averaging constant needs a separable kinetic energy");
  }
  const double m2 = table.qp_sq->value;
  const double qp = std::sqrt(m2);
  const double qpp = std::sqrt(table.qpp_sq->value);
  const double Q = std::sqrt(table.Q_sq->value);
  const double h1 = std::sqrt(m2 + table.qpp_sq->value);

  AveragingConstant k;
  k.C1 = 1.0 + h1 / m2;
  // The cross term left over when the factor's fourth derivative has nonzero
  // mean is bounded by |int Q q''| (1 + |grad phi|), and |grad phi| grows like
  // sqrt(d) for a sum potential. It is added under the square root of the
  // squared H^{-1} bound before the division.
  const double cross = std::abs(table.int_q4->value);
  double t = Q + qpp;
  if (cross > quad_tol) {
    k.correction = true;
    k.correction_term = 2.0 * cross * (1.0 + grad_phi_norm);
    k.sqrt_d_coefficient = 2.0 * cross * grad_phi_norm / std::sqrt(static_cast<double>(dim));
    t = std::sqrt(t * t + k.correction_term);
  }
  k.C2 = 1.0 + qp + 1.0 / qp + t / m2;
  k.K_avg = 2.0 * std::pow(std::max(k.C1, k.C2), 2);
  return k;
}

LionsConstants lions_constant(double c_phi, double c1_phi, double c2_phi, int dim, double tau) {
  if (!(c_phi > 0.0)) {
    throw Error(ErrorKind::ZeroPoincare, "Poincare constant of the position marginal must be positive");
  }
  const double pi = std::numbers::pi;
  const double sd = std::sqrt(static_cast<double>(dim));
  const double reg = 2.0 * c1_phi * (sd + 2.0 * std::max(8.0 * c1_phi, std::sqrt(c2_phi * dim)));
  LionsConstants c;
  c.C_P = std::min(c_phi, pi * pi / (tau * tau));
  c.C_LM = 2.0 + (1.0 + reg) / c.C_P;
  const double edge = 1.0 + 2.0 / (-std::expm1(-tau * std::sqrt(c_phi)));
  c.C_N = 37.0 / c_phi + 65.0 + 36.0 * (2.0 + reg + edge * edge);
  c.C_div_sq = 3.0 * (c.C_LM + 2.0 * c.C_N);
  c.C_lions = c.C_div_sq;
  return c;
}

Rates exponential_rate(double C_lions, double K_avg, double c_psi, double xi) {
  Rates r;
  r.lambda_P = 1.0 / (1.0 + C_lions * K_avg);
  r.lambda_bar = r.lambda_P / (1.0 / (xi * c_psi) + xi);
  return r;
}

double optimal_friction(double c_psi) { return 1.0 / std::sqrt(c_psi); }

double m0_constant(double tau, double lambda_P, double P_psi, double weight_moment, double h0_sup,
                   double sigma) {
  const double p = (sigma + 1.0) / sigma;
  const double q = sigma + 1.0;
  return std::pow(2.0, (2.0 - sigma) / (1.0 + sigma)) * std::pow(tau, 1.0 / q) / lambda_P *
         std::pow(P_psi, 1.0 / p) * std::pow(weight_moment, 1.0 / q) * std::pow(h0_sup, 2.0 / q);
}

namespace {

struct Theta {
  double M0, xi, lambda_P, expo;
  double operator()(double y) const { return xi * y / (2.0 * lambda_P) + M0 * std::pow(y / xi, expo); }
  double slope(double y) const {
    return xi / (2.0 * lambda_P) + (y > 0.0 ? M0 * expo / xi * std::pow(y / xi, expo - 1.0)
                                            : std::numeric_limits<double>::infinity());
  }
};

}  // namespace

double y0_bisection(double M0, double xi, double lambda_P, double H0, double sigma) {
  if (H0 <= 0.0) return 0.0;
  const Theta th{M0, xi, lambda_P, sigma / (sigma + 1.0)};
  double lo = 0.0, hi = 2.0 * lambda_P * H0 / xi;
  for (int i = 0; i < 400 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (th(mid) < H0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double y0_root(double M0, double xi, double lambda_P, double H0, double sigma) {
  if (H0 <= 0.0) return 0.0;
  if (M0 == 0.0) return 2.0 * lambda_P * H0 / xi;
  const Theta th{M0, xi, lambda_P, sigma / (sigma + 1.0)};
  const double tol = 1e-10 * std::max(1.0, H0);
  // theta is increasing and dominates its linear part, so the root lies in
  // [0, 2 lambda_P H0 / xi]. Newton steps that leave the bracket fall back to
  // bisection.
  double lo = 0.0, hi = 2.0 * lambda_P * H0 / xi;
  double y = 0.5 * hi;
  for (int i = 0; i < 200; ++i) {
    const double r = th(y) - H0;
    if (std::abs(r) <= tol) return y;
    (r < 0.0 ? lo : hi) = y;
    const double step = y - r / th.slope(y);
    y = (step > lo && step < hi) ? step : 0.5 * (lo + hi);
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
  }
  return y;
}

double AlgebraicEnvelope::operator()(double t) const {
  if (zero_initial) return 0.0;
  return H0 / std::pow(1.0 + rate * t, sigma);
}

AlgebraicEnvelope algebraic_envelope(double H0, double xi, double sigma, double M0, double y0,
                                     double lambda_P) {
  AlgebraicEnvelope e;
  e.sigma = sigma;
  e.p = (sigma + 1.0) / sigma;
  e.q = sigma + 1.0;
  e.xi = xi;
  e.H0 = H0;
  e.lambda_P = lambda_P;
  e.M0 = M0;
  e.y0 = y0;
  if (H0 <= 0.0) {
    e.zero_initial = true;
    return e;
  }
  const double s = std::pow(sigma, sigma / (1.0 + sigma));
  const double hq = std::pow(H0, -1.0 / (1.0 + sigma));
  e.c1 = s * M0 * hq;
  // The friction enters the second term once, as the explicit factor in
  // the rate below; keeping it out of c2 makes the rate agree with the
  // Bihari-LaSalle bound it comes from.
  e.c2 = s * std::pow(y0, 1.0 / (1.0 + sigma)) * hq / (2.0 * lambda_P);
  e.rate = std::pow(std::pow(xi, -sigma / (sigma + 1.0)) * e.c1 + xi * e.c2, -(sigma + 1.0) / sigma);
  return e;
}

AlgebraicEnvelope algebraic_certificate(const HamiltonianSpec& in, const RateCertificate& cert,
                                        double weight_exponent, double sigma, double h0_sup, double H0,
                                        int grid) {
  const HamiltonianSpec spec = in.normalized ? in : normalize_gibbs(in);
  if (!(sigma > 0.0)) throw ValidationError("run.sigma", "sigma must be positive");
  const double cap = sigma_max(spec, weight_exponent);
  if (sigma >= cap) {
    std::ostringstream os;
    os << "sigma = " << sigma << " needs the moment of G^sigma, integrable only below " << cap;
    throw Error(ErrorKind::DivergentMoment, os.str());
  }
  const double moment = weight_moment(spec, weight_exponent, sigma);
  const auto [lo, hi] = v_domain(spec);
  const SpectralOperator op(Grid1D{Boundary::line, lo, hi, grid}, [&](double v) { return density_v(spec, v); });
  const WeightedPoincare wp = weighted_poincare_constant(
      op, [weight_exponent](double v) { return std::pow(1.0 + v * v, weight_exponent); }, cap);
  const double M0 = m0_constant(cert.tau, cert.lambda_P, wp.constant, moment, h0_sup, sigma);
  const double y0 = H0 > 0.0 ? y0_root(M0, cert.xi, cert.lambda_P, H0, sigma) : 0.0;
  AlgebraicEnvelope env = algebraic_envelope(H0, cert.xi, sigma, M0, y0, cert.lambda_P);
  env.P_psi = wp.constant;
  env.weight_moment = moment;
  env.h0_sup = h0_sup;
  return env;
}

double weight_moment(const HamiltonianSpec& in, double exponent, double sigma) {
  const HamiltonianSpec spec = in.normalized ? in : normalize_gibbs(in);
  const double power = sigma * exponent;
  const auto& k = spec.kinetic;
  const int d = spec.dim;
  const bool separable = kinetic_is_separable(spec);
  const bool radial = kinetic_is_radial(spec);
  if (!(radial || (separable && d == 1))) {
    throw ValidationError("weight", "weight moments need a one-dimensional or radial kinetic energy");
  }
  const bool heavy = k.family == KineticFamily::heavytail ||
                     (k.family == KineticFamily::tensorised && k.factor == FactorShape::heavytail);
  if (heavy && 2.0 * power >= k.beta - d) {
    throw Error(ErrorKind::DivergentMoment, "(1 + |v|^2)^{" + std::to_string(power) +
                                                "} is not integrable against the kinetic Gibbs measure");
  }
  double value = 0.0;
  if (!radial) {
    auto f = [&](double v) {
      const double w = density_v(spec, v);
      return w == 0.0 ? 0.0 : std::pow(1.0 + v * v, power) * w;
    };
    const Profile q = kinetic_profile(spec);
    value = q.bounded_support() ? detail::integrate(f, q.support_lo(), q.support_hi()).value
                                : detail::integrate_line(f).value;
  } else {
    const Profile f = kinetic_profile(spec);
    const double area = 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
    value = detail::integrate_half_line(
                [&](double r) {
                  const double w = std::exp(-f.value(r) - spec.psi_offset);
                  return w == 0.0 ? 0.0 : area * std::pow(r, d - 1) * std::pow(1.0 + r * r, power) * w;
                },
                0.0)
                .value;
  }
  if (!std::isfinite(value)) {
    throw Error(ErrorKind::DivergentMoment, "weight moment quadrature did not converge");
  }
  return value;
}

namespace {

// Richardson estimate of a one-dimensional Poincare constant. Densities with
// bounded support are solved on that support only.
double marginal_gap(const std::function<double(double)>& density, Boundary boundary, double lo, double hi,
                    int n, bool bounded) {
  if (!bounded) return poincare_constant(density, boundary, lo, hi, n).value;
  const double coarse = poincare_constant(SpectralOperator(Grid1D{boundary, lo, hi, n}, density, false));
  const double fine = poincare_constant(SpectralOperator(Grid1D{boundary, lo, hi, 2 * n}, density, false));
  return (4.0 * fine - coarse) / 3.0;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

RateCertificate certify(const HamiltonianSpec& raw, double xi, double tau, const CertifyOptions& options) {
  if (!(xi > 0.0)) throw ValidationError("run.xi", "friction must be positive");
  if (!(tau > 0.0)) throw ValidationError("run.tau", "averaging window must be positive");
  const HamiltonianSpec spec = raw.normalized ? raw : normalize_gibbs(raw);
  const int d = spec.dim;

  RateCertificate c;
  c.xi = xi;
  c.tau = tau;
  c.dim = d;
  auto note = [&](const std::string& name, double value, const std::string& text) {
    c.entries.push_back({name, value, text});
  };

  // Position marginal.
  if (spec.c_phi) {
    c.c_phi = *spec.c_phi;
    c.c_phi_source = ConstantSource::declared;
  } else {
    const auto [lo, hi] = x_domain(spec);
    const bool torus = spec.potential.on_torus();
    const bool bounded = spec.potential.family == PotentialFamily::tabulated;
    c.c_phi = marginal_gap([&](double x) { return density_x(spec, x); },
                           torus ? Boundary::torus : Boundary::line, lo, hi, options.grid, bounded && !torus);
    c.c_phi_source = ConstantSource::eigensolve;
  }
  note("c_phi", c.c_phi,
       std::string(source_name(c.c_phi_source)) +
           (c.c_phi_source == ConstantSource::eigensolve
                ? ": one-coordinate Poincare constant, Richardson over grids of " +
                      std::to_string(options.grid) + " and " + std::to_string(2 * options.grid) +
                      " cells; tensorisation makes it the d-dimensional constant"
                : ""));

  // Velocity marginal.
  const auto& k = spec.kinetic;
  const bool no_gap_family =
      k.family == KineticFamily::subexp || k.family == KineticFamily::heavytail ||
      (k.family == KineticFamily::tensorised &&
       (k.factor == FactorShape::subexp || k.factor == FactorShape::heavytail));
  if (options.c_psi) {
    c.c_psi = *options.c_psi;
    c.c_psi_source = ConstantSource::declared;
    c.has_c_psi = true;
  } else if (no_gap_family) {
    c.has_c_psi = false;
  } else if (!kinetic_is_separable(spec)) {
    // Gaussian with precision matrix A: the Poincare constant is lambda_min(A).
    Eigen::MatrixXd a = k.matrix.size() == 0 ? Eigen::MatrixXd::Identity(d, d) : k.matrix;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
    c.c_psi = es.eigenvalues().minCoeff();
    c.c_psi_source = ConstantSource::closed_form;
    c.has_c_psi = true;
  } else {
    const auto [lo, hi] = v_domain(spec);
    const bool bounded = kinetic_profile(spec).bounded_support();
    try {
      c.c_psi = marginal_gap([&](double v) { return density_v(spec, v); }, Boundary::line, lo, hi,
                             options.grid, bounded);
      c.c_psi_source = ConstantSource::eigensolve;
      c.has_c_psi = true;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoSpectralGap) throw;
      c.has_c_psi = false;
    }
  }
  note("c_psi", c.has_c_psi ? c.c_psi : 0.0,
       c.has_c_psi ? std::string(source_name(c.c_psi_source))
                   : "unavailable: the kinetic Gibbs measure has no spectral gap; only the algebraic route applies");

  const Regularity reg = regularity_constants(spec);
  c.c1_phi = reg.c1;
  c.c2_phi = reg.c2;
  c.c1_empirical = reg.c1_empirical;
  c.c2_empirical = reg.c2_empirical;
  note("c1_phi", c.c1_phi,
       c.c1_empirical ? "empirical: max |p''| / sqrt(1 + p'^2) on a dense grid" : "declared");
  note("c2_phi", c.c2_phi,
       c.c2_empirical ? "empirical: max p'' / (1 + p'^2) on a dense grid" : "declared");

  c.L_phi = l_phi(c.c2_phi, d);
  note("L_phi", c.L_phi, "2 max(2, sqrt(d c2_phi))");

  const MomentTable table = moments(spec);
  const MatrixM mm = matrix_m(spec, table);
  c.rho_scaled = mm.rho_scaled;
  c.rho_second = mm.rho_second_moment;
  note("rho_M", c.rho_scaled, "spectral radius of ||grad psi||^2 (int grad psi (x) grad psi)^{-1}");
  note("rho_second_moment", c.rho_second, "spectral radius of int grad psi (x) grad psi d gamma");

  c.averaging_general = k_avg_general(mm, table, c.L_phi);
  note("K_avg_general", c.averaging_general.K_avg, "general averaging route, 2 max(C1, C2)^2");
  if (table.separable) {
    c.averaging_tensorised = k_avg_tensorised(table, d, table.grad_phi_norm.value, spec.quad_tol);
    c.tensorised = true;
    c.averaging = *c.averaging_tensorised;
    note("K_avg_tensorised", c.averaging.K_avg,
         c.averaging.correction ? "tensorised route with the dimension-dependent cross term folded into C2"
                                : "tensorised route; independent of d");
    if (c.averaging.correction) {
      note("correction", c.averaging.correction_term,
           "dimension-dependent: 2 |int (q'^2 - q'') q'' e^{-q}| (1 + ||grad phi||)");
      note("sqrt_d_coefficient", c.averaging.sqrt_d_coefficient,
           "dimension-dependent: coefficient of sqrt(d) in the correction");
    }
  } else {
    c.averaging = c.averaging_general;
  }
  note("C1", c.averaging.C1, c.tensorised ? "1 + ||q'||_{H1} / ||q'||^2" : "general route");
  note("C2", c.averaging.C2, c.tensorised ? "1 + ||q'|| + 1/||q'|| + (||Q|| + ||q''||) / ||q'||^2" : "general route");
  note("K_avg", c.averaging.K_avg, "2 max(C1, C2)^2");

  c.lions = lions_constant(c.c_phi, c.c1_phi, c.c2_phi, d, tau);
  note("C_P", c.lions.C_P, "min(c_phi, pi^2 / tau^2)");
  note("C_LM", c.lions.C_LM, "2 + (1 + 2 c1 (sqrt d + 2 max(8 c1, sqrt(c2 d)))) / C_P");
  note("C_N", c.lions.C_N, "37 / c_phi + 65 + 36 (2 + regularity term + (1 + 2 / (1 - exp(-tau sqrt(c_phi))))^2)");
  note("C_div_sq", c.lions.C_div_sq, "3 (C_LM + 2 C_N)");
  note("C_lions", c.lions.C_lions, "set equal to C_div_sq");

  c.lambda_P = 1.0 / (1.0 + c.lions.C_lions * c.averaging.K_avg);
  note("lambda_P", c.lambda_P, "1 / (1 + C_lions K_avg)");
  if (c.has_c_psi) {
    c.lambda_bar = exponential_rate(c.lions.C_lions, c.averaging.K_avg, c.c_psi, xi).lambda_bar;
    note("lambda_bar", c.lambda_bar, "lambda_P / (1 / (xi c_psi) + xi) at xi = " + fmt(xi));
  } else {
    note("lambda_bar", 0.0, "not certified without a velocity spectral gap");
  }
  return c;
}

}  // namespace kfp
