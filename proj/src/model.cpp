#include "kfp/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "kfp/errors.hpp"
#include "quadrature.hpp"

namespace kfp {

namespace {

using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;
using detail::integrate;
using detail::integrate_half_line;
using detail::integrate_line;
constexpr double kPi = std::numbers::pi;

const Spline& as_spline(const std::shared_ptr<const void>& p) {
  return *static_cast<const Spline*>(p.get());
}

bool matrix_is_scalar(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return true;
  const double k = a(0, 0);
  return (a - k * Eigen::MatrixXd::Identity(a.rows(), a.cols())).cwiseAbs().maxCoeff() == 0.0;
}

double quadratic_scale(const KineticSpec& k) { return k.matrix.size() == 0 ? 1.0 : k.matrix(0, 0); }

Eigen::MatrixXd kinetic_matrix(const HamiltonianSpec& spec) {
  if (spec.kinetic.matrix.size() == 0) return Eigen::MatrixXd::Identity(spec.dim, spec.dim);
  return spec.kinetic.matrix;
}

double unit_sphere_area(int d) {
  return 2.0 * std::pow(kPi, 0.5 * d) / boost::math::tgamma(0.5 * d);
}

void check_heavytail_integrable(double beta, int d) {
  if (beta <= d) {
    throw Error(ErrorKind::NonIntegrable,
                "heavytail kinetic energy with beta = " + std::to_string(beta) +
                    " <= d = " + std::to_string(d) + " has no normalisable Gibbs density");
  }
}

// Smallest R (to within 1/8) with tail(R) below tail_mass, for a
// nonincreasing tail function: geometric bracketing then bisection.
template <class Tail>
double radius_for_tail(Tail tail, double tail_mass) {
  double lo = 0.0;
  double hi = 1.0;
  while (tail(hi) >= tail_mass) {
    lo = hi;
    hi *= 1.5;
    if (hi > 1e7) {
      throw Error(ErrorKind::NonIntegrable, "Gibbs tail mass does not fall below the truncation target");
    }
  }
  while (hi - lo > 0.125) {
    const double mid = 0.5 * (lo + hi);
    (tail(mid) < tail_mass ? hi : lo) = mid;
  }
  return hi;
}

template <class Density>
double truncation_radius(Density rho, double tail_mass) {
  auto tail = [&](double r) {
    return integrate_half_line(rho, r, 1e-10).value +
           integrate_half_line([&](double t) { return rho(-t); }, r, 1e-10).value;
  };
  return radius_for_tail(tail, tail_mass);
}

}  // namespace

Table1D load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open table file " + path);
  std::vector<double> xs, ys;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double x = 0, y = 0;
    if (!(ls >> x >> y)) throw ValidationError(path, "expected two numeric columns: " + line);
    xs.push_back(x);
    ys.push_back(y);
  }
  if (xs.size() < 4) throw ValidationError(path, "a tabulated profile needs at least 4 samples");
  const double step = xs[1] - xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (std::abs((xs[i] - xs[i - 1]) - step) > 1e-9 * std::max(1.0, std::abs(step))) {
      throw ValidationError(path, "abscissae must be uniformly spaced");
    }
  }
  if (step <= 0) throw ValidationError(path, "abscissae must increase");
  return Table1D{xs.front(), step, ys};
}

bool PotentialSpec::on_torus() const {
  return family == PotentialFamily::cosine ||
         (family == PotentialFamily::tabulated && tabulated_on_torus);
}

Profile Profile::quadratic(double k) {
  Profile p;
  p.shape_ = Shape::quadratic;
  p.a_ = k;
  return p;
}

Profile Profile::cosine(double amplitude, double period) {
  Profile p;
  p.shape_ = Shape::cosine;
  p.a_ = amplitude;
  p.b_ = 2.0 * kPi / period;
  return p;
}

Profile Profile::double_well(double a) {
  Profile p;
  p.shape_ = Shape::double_well;
  p.a_ = a;
  return p;
}

Profile Profile::subexp(double alpha) {
  Profile p;
  p.shape_ = Shape::subexp;
  p.a_ = alpha;
  return p;
}

Profile Profile::heavytail(double beta) {
  Profile p;
  p.shape_ = Shape::heavytail;
  p.a_ = beta;
  return p;
}

Profile Profile::tabulated(const Table1D& table) {
  Profile p;
  p.shape_ = Shape::tabulated;
  p.a_ = table.start;
  p.b_ = table.stop();
  p.spline_ = std::make_shared<const Spline>(table.values.begin(), table.values.end(),
                                             table.start, table.step);
  return p;
}

double Profile::support_lo() const {
  return bounded_support() ? a_ : -std::numeric_limits<double>::infinity();
}
double Profile::support_hi() const {
  return bounded_support() ? b_ : std::numeric_limits<double>::infinity();
}

double Profile::value(double x) const {
  switch (shape_) {
    case Shape::quadratic: return 0.5 * a_ * x * x;
    case Shape::cosine: return a_ * std::cos(b_ * x);
    case Shape::double_well: return 0.25 * x * x * x * x - 0.5 * a_ * x * x;
    case Shape::subexp: return std::pow(1.0 + x * x, 0.5 * a_);
    case Shape::heavytail: return 0.5 * a_ * std::log1p(x * x);
    case Shape::tabulated: return as_spline(spline_)(x);
  }
  return 0.0;
}

double Profile::d1(double x) const {
  switch (shape_) {
    case Shape::quadratic: return a_ * x;
    case Shape::cosine: return -a_ * b_ * std::sin(b_ * x);
    case Shape::double_well: return x * x * x - a_ * x;
    case Shape::subexp: return a_ * x * std::pow(1.0 + x * x, 0.5 * a_ - 1.0);
    case Shape::heavytail: return a_ * x / (1.0 + x * x);
    case Shape::tabulated: return as_spline(spline_).prime(x);
  }
  return 0.0;
}

double Profile::d2(double x) const {
  switch (shape_) {
    case Shape::quadratic: return a_;
    case Shape::cosine: return -a_ * b_ * b_ * std::cos(b_ * x);
    case Shape::double_well: return 3.0 * x * x - a_;
    case Shape::subexp: {
      const double s = 1.0 + x * x;
      return a_ * std::pow(s, 0.5 * a_ - 1.0) + a_ * (a_ - 2.0) * x * x * std::pow(s, 0.5 * a_ - 2.0);
    }
    case Shape::heavytail: {
      const double s = 1.0 + x * x;
      return a_ * (1.0 - x * x) / (s * s);
    }
    case Shape::tabulated: return as_spline(spline_).double_prime(x);
  }
  return 0.0;
}

Profile potential_profile(const PotentialSpec& spec) {
  switch (spec.family) {
    case PotentialFamily::quadratic: return Profile::quadratic(spec.stiffness);
    case PotentialFamily::cosine: return Profile::cosine(spec.amplitude, spec.period);
    case PotentialFamily::double_well: return Profile::double_well(spec.well);
    case PotentialFamily::tabulated:
      if (!spec.table) throw ValidationError("spec.potential_table", "tabulated potential without data");
      return Profile::tabulated(*spec.table);
  }
  return Profile::quadratic(1.0);
}

bool kinetic_is_separable(const HamiltonianSpec& spec) {
  switch (spec.kinetic.family) {
    case KineticFamily::quadratic: return matrix_is_scalar(spec.kinetic.matrix);
    case KineticFamily::subexp:
    case KineticFamily::heavytail: return spec.dim == 1;
    case KineticFamily::tensorised:
    case KineticFamily::tabulated: return true;
  }
  return false;
}

bool kinetic_is_radial(const HamiltonianSpec& spec) {
  return spec.dim > 1 && (spec.kinetic.family == KineticFamily::subexp ||
                          spec.kinetic.family == KineticFamily::heavytail);
}

Profile kinetic_profile(const HamiltonianSpec& spec) {
  const auto& k = spec.kinetic;
  switch (k.family) {
    case KineticFamily::quadratic: return Profile::quadratic(quadratic_scale(k));
    case KineticFamily::subexp: return Profile::subexp(k.alpha);
    case KineticFamily::heavytail: return Profile::heavytail(k.beta);
    case KineticFamily::tabulated:
      if (!k.table) throw ValidationError("spec.kinetic_table", "tabulated kinetic energy without data");
      return Profile::tabulated(*k.table);
    case KineticFamily::tensorised:
      switch (k.factor) {
        case FactorShape::quadratic: return Profile::quadratic(1.0);
        case FactorShape::subexp: return Profile::subexp(k.alpha);
        case FactorShape::heavytail: return Profile::heavytail(k.beta);
        case FactorShape::tabulated:
          if (!k.table) throw ValidationError("spec.kinetic_table", "tabulated factor without data");
          return Profile::tabulated(*k.table);
      }
  }
  return Profile::quadratic(1.0);
}

double phi(const HamiltonianSpec& spec, const Eigen::VectorXd& x) {
  const Profile p = potential_profile(spec.potential);
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += p.value(x[i]) + spec.phi_offset;
  return s;
}

Eigen::VectorXd grad_phi(const HamiltonianSpec& spec, const Eigen::VectorXd& x) {
  const Profile p = potential_profile(spec.potential);
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) g[i] = p.d1(x[i]);
  return g;
}

double psi(const HamiltonianSpec& spec, const Eigen::VectorXd& v) {
  if (kinetic_is_separable(spec)) {
    const Profile q = kinetic_profile(spec);
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += q.value(v[i]);
    return s + spec.psi_offset;
  }
  if (kinetic_is_radial(spec)) return kinetic_profile(spec).value(v.norm()) + spec.psi_offset;
  return 0.5 * v.dot(kinetic_matrix(spec) * v) + spec.psi_offset;
}

Eigen::VectorXd grad_psi(const HamiltonianSpec& spec, const Eigen::VectorXd& v) {
  if (kinetic_is_separable(spec)) {
    const Profile q = kinetic_profile(spec);
    Eigen::VectorXd g(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) g[i] = q.d1(v[i]);
    return g;
  }
  if (kinetic_is_radial(spec)) {
    const Profile f = kinetic_profile(spec);
    const double r = v.norm();
    if (r == 0.0) return Eigen::VectorXd::Zero(v.size());
    return (f.d1(r) / r) * v;
  }
  return kinetic_matrix(spec) * v;
}

Eigen::MatrixXd hess_psi(const HamiltonianSpec& spec, const Eigen::VectorXd& v) {
  const Eigen::Index d = v.size();
  if (kinetic_is_separable(spec)) {
    const Profile q = kinetic_profile(spec);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) h(i, i) = q.d2(v[i]);
    return h;
  }
  if (kinetic_is_radial(spec)) {
    const Profile f = kinetic_profile(spec);
    const double r = v.norm();
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
    if (r == 0.0) return f.d2(0.0) * id;
    const Eigen::VectorXd u = v / r;
    const Eigen::MatrixXd uu = u * u.transpose();
    return f.d2(r) * uu + (f.d1(r) / r) * (id - uu);
  }
  return kinetic_matrix(spec);
}

double density_x(const HamiltonianSpec& spec, double x) {
  return std::exp(-potential_profile(spec.potential).value(x) - spec.phi_offset);
}

double density_v(const HamiltonianSpec& spec, double v) {
  if (!kinetic_is_separable(spec)) {
    throw ValidationError("spec.kinetic", "one-dimensional velocity density needs a separable energy");
  }
  const Profile q = kinetic_profile(spec);
  if (q.bounded_support() && (v < q.support_lo() || v > q.support_hi())) return 0.0;
  return std::exp(-q.value(v) - spec.psi_offset / spec.dim);
}

std::pair<double, double> x_domain(const HamiltonianSpec& spec) {
  const auto& p = spec.potential;
  if (p.family == PotentialFamily::cosine) return {0.0, p.period};
  if (p.family == PotentialFamily::tabulated) return {p.table->start, p.table->stop()};
  return {-spec.x_radius, spec.x_radius};
}

std::pair<double, double> v_domain(const HamiltonianSpec& spec) {
  if (kinetic_is_separable(spec)) {
    const Profile q = kinetic_profile(spec);
    if (q.bounded_support()) return {q.support_lo(), q.support_hi()};
  }
  return {-spec.v_radius, spec.v_radius};
}

namespace {

// Integral of g(v) against the normalised one-dimensional velocity factor.
template <class G>
detail::QuadResult v_expect(const HamiltonianSpec& spec, const Profile& q, G g) {
  const double off = spec.psi_offset / spec.dim;
  auto f = [&](double v) {
    const double w = std::exp(-q.value(v) - off);
    return w == 0.0 ? 0.0 : g(v) * w;
  };
  if (q.bounded_support()) return integrate(f, q.support_lo(), q.support_hi());
  return integrate_line(f);
}

// Radial expectation S_{d-1} int_0^inf r^{d-1} g(r) exp(-f(r)) dr.
template <class G>
detail::QuadResult radial_expect(const HamiltonianSpec& spec, const Profile& f, G g) {
  const int d = spec.dim;
  const double area = unit_sphere_area(d);
  auto h = [&](double r) {
    const double w = std::exp(-f.value(r) - spec.psi_offset);
    return w == 0.0 ? 0.0 : area * std::pow(r, d - 1) * g(r) * w;
  };
  return integrate_half_line(h, 0.0);
}

template <class G>
detail::QuadResult x_expect(const HamiltonianSpec& spec, const Profile& p, G g) {
  auto f = [&](double x) {
    const double w = std::exp(-p.value(x) - spec.phi_offset);
    return w == 0.0 ? 0.0 : g(x) * w;
  };
  const auto& pot = spec.potential;
  if (pot.family == PotentialFamily::cosine) return integrate(f, 0.0, pot.period);
  if (pot.family == PotentialFamily::tabulated) return integrate(f, pot.table->start, pot.table->stop());
  return integrate_line(f);
}

// Tensor Gauss quadrature over [-R, R]^d for the general quadratic family.
struct TensorGrid {
  std::vector<Eigen::VectorXd> points;
  std::vector<double> weights;
};

TensorGrid tensor_grid(int d, double radius, int panels) {
  std::vector<double> n1, w1;
  detail::composite_gauss(-radius, radius, panels, n1, w1);
  TensorGrid g;
  const std::size_t m = n1.size();
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= m;
  g.points.reserve(total);
  g.weights.reserve(total);
  std::vector<std::size_t> idx(d, 0);
  for (std::size_t k = 0; k < total; ++k) {
    Eigen::VectorXd p(d);
    double w = 1.0;
    for (int i = 0; i < d; ++i) {
      p[i] = n1[idx[i]];
      w *= w1[idx[i]];
    }
    g.points.push_back(p);
    g.weights.push_back(w);
    for (int i = 0; i < d; ++i) {
      if (++idx[i] < m) break;
      idx[i] = 0;
    }
  }
  return g;
}

double general_radius(const HamiltonianSpec& spec) {
  const Eigen::MatrixXd a = kinetic_matrix(spec);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  // Standard-normal tail beyond 8.5 is below 1e-16 per axis.
  return 8.5 / std::sqrt(es.eigenvalues().minCoeff());
}

}  // namespace

HamiltonianSpec normalize_gibbs(const HamiltonianSpec& in, double tail_mass) {
  HamiltonianSpec spec = in;
  spec.phi_offset = 0.0;
  spec.psi_offset = 0.0;
  if (spec.dim < 1) throw ValidationError("spec.d", "dimension must be a positive integer");
  const auto& k = spec.kinetic;
  const bool subexp = k.family == KineticFamily::subexp ||
                      (k.family == KineticFamily::tensorised && k.factor == FactorShape::subexp);
  const bool heavy = k.family == KineticFamily::heavytail ||
                     (k.family == KineticFamily::tensorised && k.factor == FactorShape::heavytail);
  if (subexp && !(k.alpha > 0.0 && k.alpha < 1.0)) {
    throw ValidationError("spec.alpha", "subexponential family needs alpha in (0, 1)");
  }
  if (heavy) {
    // The radial density (1+r^2)^{-beta/2} r^{d-1} needs beta > d; a tensor
    // factor is a one-dimensional density.
    check_heavytail_integrable(k.beta, k.family == KineticFamily::heavytail ? spec.dim : 1);
  }

  // Potential, one coordinate.
  const Profile p = potential_profile(spec.potential);
  const auto zx = x_expect(spec, p, [](double) { return 1.0; });
  if (!std::isfinite(zx.value) || zx.value <= 0.0) {
    throw Error(ErrorKind::NonIntegrable, "exp(-phi) is not integrable");
  }
  spec.phi_offset = std::log(zx.value);
  if (!spec.potential.on_torus() && spec.potential.family != PotentialFamily::tabulated) {
    spec.x_radius = truncation_radius([&](double x) { return density_x(spec, x); }, tail_mass);
  } else {
    spec.x_radius = 0.0;
  }

  if (kinetic_is_separable(spec)) {
    const Profile q = kinetic_profile(spec);
    const auto zv = v_expect(spec, q, [](double) { return 1.0; });
    if (!std::isfinite(zv.value) || zv.value <= 0.0) {
      throw Error(ErrorKind::NonIntegrable, "exp(-psi) is not integrable");
    }
    spec.psi_offset = spec.dim * std::log(zv.value);
    if (!q.bounded_support()) {
      spec.v_radius = truncation_radius([&](double v) { return density_v(spec, v); }, tail_mass);
    }
  } else if (kinetic_is_radial(spec)) {
    const Profile f = kinetic_profile(spec);
    const auto z = radial_expect(spec, f, [](double) { return 1.0; });
    if (!std::isfinite(z.value) || z.value <= 0.0) {
      throw Error(ErrorKind::NonIntegrable, "exp(-psi) is not integrable");
    }
    spec.psi_offset = std::log(z.value);
    const double area = unit_sphere_area(spec.dim);
    auto shell = [&](double r) {
      return area * std::pow(r, spec.dim - 1) * std::exp(-f.value(r) - spec.psi_offset);
    };
    spec.v_radius = radius_for_tail([&](double r) { return integrate_half_line(shell, r, 1e-10).value; },
                                    tail_mass);
  } else {
    const Eigen::MatrixXd a = kinetic_matrix(spec);
    if (a.rows() != spec.dim || a.cols() != spec.dim) {
      throw ValidationError("spec.kinetic_matrix", "matrix size must equal the dimension");
    }
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-14) {
      throw ValidationError("spec.kinetic_matrix", "matrix must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.eigenvalues().minCoeff() <= 0.0) {
      throw Error(ErrorKind::NonIntegrable, "quadratic kinetic energy is not positive definite");
    }
    if (spec.dim > 3) {
      throw ValidationError("spec.d", "non-separable kinetic energies are supported for d <= 3 only");
    }
    const double radius = general_radius(spec);
    const TensorGrid g = tensor_grid(spec.dim, radius, 6);
    double z = 0.0;
    for (std::size_t i = 0; i < g.points.size(); ++i) {
      z += g.weights[i] * std::exp(-0.5 * g.points[i].dot(a * g.points[i]));
    }
    spec.psi_offset = std::log(z);
    spec.v_radius = radius;
  }
  spec.normalized = true;
  return spec;
}

MomentTable moments(const HamiltonianSpec& in) {
  {
    const auto& k = in.kinetic;
    const bool heavy = k.family == KineticFamily::heavytail ||
                       (k.family == KineticFamily::tensorised && k.factor == FactorShape::heavytail);
    if (heavy && k.beta <= in.dim + 4) {
      throw Error(ErrorKind::DivergentMoment,
                  "int_{|v|>R} |grad psi|^{-2} d gamma: heavytail needs beta > d + 4, got beta = " +
                      std::to_string(k.beta) + " with d = " + std::to_string(in.dim));
    }
  }
  const HamiltonianSpec spec = in.normalized ? in : normalize_gibbs(in);
  const int d = spec.dim;
  MomentTable t;
  t.separable = kinetic_is_separable(spec);
  t.radial = kinetic_is_radial(spec);

  const Profile p = potential_profile(spec.potential);
  const auto gp = x_expect(spec, p, [&](double x) { return p.d1(x) * p.d1(x); });
  t.grad_phi_norm = {std::sqrt(d * gp.value), 0.5 * d * gp.error / std::sqrt(std::max(d * gp.value, 1e-300))};

  auto check = [](const detail::QuadResult& r, const char* name) {
    if (!std::isfinite(r.value) || !std::isfinite(r.error)) {
      throw Error(ErrorKind::DivergentMoment, std::string(name) + " is not finite");
    }
    return Moment{r.value, r.error};
  };

  if (t.separable) {
    const Profile q = kinetic_profile(spec);
    const Moment m2 = check(v_expect(spec, q, [&](double v) { return q.d1(v) * q.d1(v); }), "||q'||^2");
    const Moment mpp = check(v_expect(spec, q, [&](double v) { return q.d2(v) * q.d2(v); }), "||q''||^2");
    const Moment m4 = check(v_expect(spec, q, [&](double v) { return std::pow(q.d1(v), 4); }), "int q'^4");
    const Moment qq = check(v_expect(spec, q, [&](double v) {
                              const double s = q.d1(v) * q.d1(v) - q.d2(v);
                              return s * s;
                            }),
                            "||Q||^2");
    // int q'''' e^{-q} equals int (q'^2 - q'') q'' e^{-q} after two
    // integrations by parts, which avoids a fourth derivative.
    const Moment q4 = check(v_expect(spec, q, [&](double v) {
                              return (q.d1(v) * q.d1(v) - q.d2(v)) * q.d2(v);
                            }),
                            "int q'''' e^{-q}");
    const Moment m1 = check(v_expect(spec, q, [&](double v) { return q.d1(v); }), "int q'");
    t.qp_sq = m2;
    t.qpp_sq = mpp;
    t.qp4 = m4;
    t.Q_sq = qq;
    t.int_q4 = q4;
    const double dd = d;
    t.grad_psi_sq = {dd * m2.value, dd * m2.error};
    t.G_h1_sq = {1.0 + mpp.value / m2.value, (mpp.error + mpp.value * m2.error / m2.value) / m2.value};
    t.sum_GM_gradpsi_sq = {dd * dd * (m4.value + (dd - 1.0) * m2.value * m2.value) / m2.value,
                           dd * dd * (m4.error + 2.0 * dd * m2.error) / m2.value};
    t.sum_grad_GM_sq = {dd * dd * mpp.value / m2.value, dd * dd * mpp.error / m2.value};
    t.mean_grad_psi = Eigen::VectorXd::Constant(d, m1.value);
    t.second_moment = m2.value * Eigen::MatrixXd::Identity(d, d);

    const double r0 = v_domain(spec).second;
    const std::array<double, 3> radii{0.25 * r0, 0.5 * r0, r0};
    for (int i = 0; i < 3; ++i) {
      t.tail_radii[i] = radii[i];
      const double off = spec.psi_offset / d;
      auto f = [&](double v) {
        const double g = q.d1(v);
        return std::exp(-q.value(v) - off) / (g * g);
      };
      if (q.bounded_support()) {
        t.tail_values[i] = 0.0;
      } else {
        t.tail_values[i] = integrate_half_line(f, radii[i]).value +
                           integrate_half_line([&](double v) { return f(-v); }, radii[i]).value;
      }
    }
  } else if (t.radial) {
    const Profile f = kinetic_profile(spec);
    const double dd = d;
    const Moment m2 = check(radial_expect(spec, f, [&](double r) { return f.d1(r) * f.d1(r); }), "E f'^2");
    const Moment m4 = check(radial_expect(spec, f, [&](double r) { return std::pow(f.d1(r), 4); }), "E f'^4");
    const Moment hf = check(radial_expect(spec, f, [&](double r) {
                              const double a = f.d2(r);
                              const double b = r > 0.0 ? f.d1(r) / r : f.d2(0.0);
                              return a * a + (dd - 1.0) * b * b;
                            }),
                            "E |Hess psi|^2");
    t.grad_psi_sq = m2;
    t.G_h1_sq = {1.0 + hf.value / m2.value, hf.error / m2.value};
    t.sum_GM_gradpsi_sq = {dd * dd * m4.value / m2.value, dd * dd * m4.error / m2.value};
    t.sum_grad_GM_sq = {dd * dd * hf.value / m2.value, dd * dd * hf.error / m2.value};
    t.mean_grad_psi = Eigen::VectorXd::Zero(d);  // odd integrand on a symmetric measure
    t.second_moment = (m2.value / dd) * Eigen::MatrixXd::Identity(d, d);
    const double r0 = spec.v_radius;
    const double area = unit_sphere_area(d);
    for (int i = 0; i < 3; ++i) {
      const double radius = r0 * std::ldexp(1.0, i - 2);
      t.tail_radii[i] = radius;
      t.tail_values[i] = integrate_half_line(
                             [&](double r) {
                               const double g = f.d1(r);
                               return area * std::pow(r, d - 1) * std::exp(-f.value(r) - spec.psi_offset) /
                                      (g * g);
                             },
                             radius)
                             .value;
    }
  } else {
    // General quadratic form: tensor quadrature, cross-checked at a coarser
    // panel count to produce an error estimate.
    const Eigen::MatrixXd a = kinetic_matrix(spec);
    const double radius = spec.v_radius;
    struct Acc {
      double mass = 0, grad_sq = 0, hess_sq = 0;
      Eigen::VectorXd mean;
      Eigen::MatrixXd mm, s1, s2;
    };
    auto run = [&](int panels) {
      const TensorGrid g = tensor_grid(d, radius, panels);
      Acc acc;
      acc.mean = Eigen::VectorXd::Zero(d);
      acc.mm = acc.s1 = acc.s2 = Eigen::MatrixXd::Zero(d, d);
      const Eigen::MatrixXd hh = a * a.transpose();
      for (std::size_t i = 0; i < g.points.size(); ++i) {
        const Eigen::VectorXd& v = g.points[i];
        const double w = g.weights[i] * std::exp(-psi(spec, v));
        const Eigen::VectorXd gr = a * v;
        acc.mass += w;
        acc.mean += w * gr;
        acc.mm += w * gr * gr.transpose();
        acc.s1 += (w * gr.squaredNorm()) * gr * gr.transpose();
        acc.s2 += w * hh;
        acc.hess_sq += w * a.squaredNorm();
      }
      return acc;
    };
    const Acc fine = run(6);
    const Acc coarse = run(4);
    auto assemble = [&](const Acc& acc, double& gsq, double& h1, double& sgm, double& sggm) {
      gsq = acc.mm.trace();
      const Eigen::MatrixXd m = gsq * acc.mm.inverse();
      const Eigen::MatrixXd mtm = m.transpose() * m;
      h1 = 1.0 + acc.hess_sq / gsq;
      sgm = (mtm.cwiseProduct(acc.s1)).sum() / gsq;
      sggm = (mtm.cwiseProduct(acc.s2)).sum() / gsq;
    };
    double g1, h1, s1, s2, g0, h0, s10, s20;
    assemble(fine, g1, h1, s1, s2);
    assemble(coarse, g0, h0, s10, s20);
    const double mass_err = std::abs(fine.mass - 1.0);
    t.grad_psi_sq = {g1, std::abs(g1 - g0) + mass_err};
    t.G_h1_sq = {h1, std::abs(h1 - h0) + mass_err};
    t.sum_GM_gradpsi_sq = {s1, std::abs(s1 - s10) + mass_err};
    t.sum_grad_GM_sq = {s2, std::abs(s2 - s20) + mass_err};
    t.mean_grad_psi = fine.mean;
    t.second_moment = fine.mm;
    // Tail of |grad psi|^{-2} by indicator quadrature on the same grid.
    const TensorGrid g = tensor_grid(d, radius, 6);
    for (int i = 0; i < 3; ++i) {
      const double rr = radius * std::ldexp(1.0, i - 3);
      t.tail_radii[i] = rr;
      double s = 0.0;
      for (std::size_t j = 0; j < g.points.size(); ++j) {
        const Eigen::VectorXd& v = g.points[j];
        if (v.norm() <= rr) continue;
        s += g.weights[j] * std::exp(-psi(spec, v)) / (a * v).squaredNorm();
      }
      t.tail_values[i] = s;
    }
  }
  return t;
}

MatrixM matrix_m(const HamiltonianSpec& spec, const MomentTable& table) {
  MatrixM m;
  m.second_moment = 0.5 * (table.second_moment + table.second_moment.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.second_moment);
  m.min_eigenvalue = es.eigenvalues().minCoeff();
  if (m.min_eigenvalue <= 1e-10) {
    throw Error(ErrorKind::Degenerate, "second-moment matrix of grad psi has smallest eigenvalue " +
                                           std::to_string(m.min_eigenvalue));
  }
  m.rho_second_moment = es.eigenvalues().maxCoeff();
  const double gsq = table.grad_psi_sq.value;
  if (table.separable || table.radial) {
    // Both matrices are multiples of the identity; use the exact form so the
    // spectral radius of the scaled matrix is exactly d.
    m.scaled = static_cast<double>(spec.dim) * Eigen::MatrixXd::Identity(spec.dim, spec.dim);
    m.rho_scaled = spec.dim;
  } else {
    m.scaled = gsq * m.second_moment.inverse();
    m.scaled = 0.5 * (m.scaled + m.scaled.transpose());
    m.rho_scaled = gsq / m.min_eigenvalue;
  }
  return m;
}

HessianReport hessian_rank_check(const HamiltonianSpec& spec,
                                 const std::vector<Eigen::VectorXd>& points, double tolerance) {
  HessianReport r;
  r.tolerance = tolerance;
  r.min_singular_value = std::numeric_limits<double>::infinity();
  for (const auto& v : points) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(hess_psi(spec, v));
    const double s = svd.singularValues().minCoeff();
    r.min_singular_value = std::min(r.min_singular_value, s);
    if (!(s > tolerance)) r.failing_points.push_back(v);
  }
  r.pass = r.failing_points.empty() && !points.empty();
  return r;
}

Regularity regularity_constants(const HamiltonianSpec& in) {
  const HamiltonianSpec spec = in.normalized ? in : normalize_gibbs(in);
  Regularity reg;
  const Profile p = potential_profile(spec.potential);
  auto [lo, hi] = x_domain(spec);
  if (!spec.potential.on_torus() && spec.potential.family != PotentialFamily::tabulated) {
    lo *= 2.0;
    hi *= 2.0;
  }
  const int n = 20001;
  double c1 = 0.0, c2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = lo + (hi - lo) * i / (n - 1);
    const double g = p.d1(x);
    const double h = p.d2(x);
    const double base = 1.0 + g * g;
    c1 = std::max(c1, std::abs(h) / std::sqrt(base));
    c2 = std::max(c2, h / base);
  }
  reg.c1 = spec.c1_phi.value_or(c1);
  reg.c2 = spec.c2_phi.value_or(c2);
  reg.c1_empirical = !spec.c1_phi.has_value();
  reg.c2_empirical = !spec.c2_phi.has_value();
  return reg;
}

}  // namespace kfp
