#pragma once

// Hamiltonians H(x, v) = phi(x) + psi(v), their Gibbs measures and the
// moment quadratures the certificate formulas consume.
//
// The potential is always a sum of one-dimensional profiles,
// phi(x) = sum_i p(x_i), on the line or on a torus of period L. The kinetic
// energy is either a sum of one-dimensional factors q(v_i), a radial
// function of |v|, or a quadratic form 0.5 v^T A v with a general matrix.

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace kfp {

// Uniformly spaced samples of a one-dimensional function.
struct Table1D {
  double start = 0.0;
  double step = 1.0;
  std::vector<double> values;

  double stop() const { return start + step * static_cast<double>(values.size() - 1); }
};

// Reads two-column text (abscissa, value). Blank lines and lines starting
// with '#' are skipped. Throws ValidationError if the spacing is not uniform.
Table1D load_table(const std::string& path);

enum class PotentialFamily { quadratic, cosine, double_well, tabulated };
enum class KineticFamily { quadratic, subexp, heavytail, tensorised, tabulated };
// Shape of the one-dimensional factor used by the tensorised family.
enum class FactorShape { quadratic, subexp, heavytail, tabulated };

struct PotentialSpec {
  PotentialFamily family = PotentialFamily::quadratic;
  double stiffness = 1.0;  // k in k x^2 / 2
  double amplitude = 1.0;  // A in A cos(2 pi x / L)
  double period = 1.0;     // torus period for cosine; tabulated on a torus uses it too
  double well = 1.0;       // a in x^4/4 - a x^2/2
  bool tabulated_on_torus = false;
  std::optional<Table1D> table;

  bool on_torus() const;
};

struct KineticSpec {
  KineticFamily family = KineticFamily::quadratic;
  double alpha = 0.5;  // subexp exponent
  double beta = 8.0;   // heavytail exponent
  FactorShape factor = FactorShape::quadratic;
  // Quadratic family only. Empty means the identity.
  Eigen::MatrixXd matrix;
  std::optional<Table1D> table;
};

struct HamiltonianSpec {
  PotentialSpec potential;
  KineticSpec kinetic;
  int dim = 1;
  double quad_tol = 1e-8;

  // Regularity constants of phi; unset means "estimate".
  std::optional<double> c_phi;
  std::optional<double> c1_phi;  // bound on |Hess phi| against sqrt(d + |grad phi|^2)
  std::optional<double> c2_phi;  // bound on Laplacian phi against d + |grad phi|^2

  // Filled by normalize_gibbs.
  bool normalized = false;
  double phi_offset = 0.0;  // per coordinate
  double psi_offset = 0.0;  // total
  double x_radius = 0.0;    // line truncation for one coordinate; 0 on a torus
  double v_radius = 0.0;    // truncation for one velocity coordinate
};

// A scalar function of one variable with two analytic derivatives.
class Profile {
 public:
  enum class Shape { quadratic, cosine, double_well, subexp, heavytail, tabulated };

  static Profile quadratic(double k);
  static Profile cosine(double amplitude, double period);
  static Profile double_well(double a);
  static Profile subexp(double alpha);
  static Profile heavytail(double beta);
  static Profile tabulated(const Table1D& table);

  double value(double x) const;
  double d1(double x) const;
  double d2(double x) const;

  Shape shape() const { return shape_; }
  // Tabulated profiles live on [lo, hi]; analytic ones on the whole line.
  bool bounded_support() const { return shape_ == Shape::tabulated; }
  double support_lo() const;
  double support_hi() const;

 private:
  Shape shape_ = Shape::quadratic;
  double a_ = 1.0;
  double b_ = 1.0;
  std::shared_ptr<const void> spline_;
};

Profile potential_profile(const PotentialSpec& spec);

// True when psi(v) = sum_i q(v_i). One-dimensional radial energies count as
// separable too.
bool kinetic_is_separable(const HamiltonianSpec& spec);
bool kinetic_is_radial(const HamiltonianSpec& spec);
// The factor q of a separable kinetic energy (or the radial profile f(r)).
Profile kinetic_profile(const HamiltonianSpec& spec);

// Un-normalised energies plus the normalisation offsets once set.
double phi(const HamiltonianSpec& spec, const Eigen::VectorXd& x);
double psi(const HamiltonianSpec& spec, const Eigen::VectorXd& v);
Eigen::VectorXd grad_phi(const HamiltonianSpec& spec, const Eigen::VectorXd& x);
Eigen::VectorXd grad_psi(const HamiltonianSpec& spec, const Eigen::VectorXd& v);
Eigen::MatrixXd hess_psi(const HamiltonianSpec& spec, const Eigen::VectorXd& v);

// One-dimensional normalised Gibbs densities of a single coordinate. The
// velocity version requires a separable kinetic energy.
double density_x(const HamiltonianSpec& spec, double x);
double density_v(const HamiltonianSpec& spec, double v);

// Adjusts the additive constants so exp(-phi) and exp(-psi) integrate to one
// and picks truncation radii with Gibbs tail mass below tail_mass.
HamiltonianSpec normalize_gibbs(const HamiltonianSpec& spec, double tail_mass = 1e-10);

struct Moment {
  double value = 0.0;
  double error = 0.0;
};

struct MomentTable {
  bool separable = false;
  bool radial = false;
  Moment grad_psi_sq;         // ||grad psi||^2 in L2(gamma)
  Moment grad_phi_norm;       // ||grad phi|| in L2(mu)
  // One-dimensional factor moments (separable kinetic energies only).
  std::optional<Moment> qp_sq;    // ||q'||^2
  std::optional<Moment> qpp_sq;   // ||q''||^2
  std::optional<Moment> qp4;      // int q'^4 e^{-q}
  std::optional<Moment> Q_sq;     // ||q'^2 - q''||^2
  std::optional<Moment> int_q4;   // int q'''' e^{-q}
  // Terms of the general averaging constant.
  Moment G_h1_sq;             // ||grad psi / ||grad psi|| ||^2 in H1(gamma)
  Moment sum_GM_gradpsi_sq;   // sum_i ||(M G)_i grad psi||^2
  Moment sum_grad_GM_sq;      // sum_i ||grad (M G)_i||^2
  Eigen::VectorXd mean_grad_psi;   // int grad psi d gamma
  Eigen::MatrixXd second_moment;   // int grad psi (x) grad psi d gamma
  // int_{|v| > R} |grad psi|^{-2} d gamma at three increasing radii.
  std::array<double, 3> tail_radii{};
  std::array<double, 3> tail_values{};
};

MomentTable moments(const HamiltonianSpec& spec);

struct MatrixM {
  Eigen::MatrixXd second_moment;  // int grad psi (x) grad psi d gamma
  Eigen::MatrixXd scaled;         // ||grad psi||^2 times the inverse of the above
  double rho_second_moment = 0.0;
  double rho_scaled = 0.0;
  double min_eigenvalue = 0.0;
};

// Integration domain of one position coordinate: [0, L) on a torus,
// otherwise the truncated line.
std::pair<double, double> x_domain(const HamiltonianSpec& spec);
// Integration domain of one velocity coordinate (separable energies).
std::pair<double, double> v_domain(const HamiltonianSpec& spec);

MatrixM matrix_m(const HamiltonianSpec& spec, const MomentTable& table);

struct HessianReport {
  double min_singular_value = 0.0;
  double tolerance = 1e-10;
  bool pass = false;
  std::vector<Eigen::VectorXd> failing_points;
};

HessianReport hessian_rank_check(const HamiltonianSpec& spec,
                                 const std::vector<Eigen::VectorXd>& sample_points,
                                 double tolerance = 1e-10);

struct Regularity {
  double c1 = 0.0;
  double c2 = 0.0;
  bool c1_empirical = false;
  bool c2_empirical = false;
};

// Declared constants are passed through; missing ones are fitted as the
// largest ratio of the Hessian terms to d + |grad phi|^2 on a dense grid.
Regularity regularity_constants(const HamiltonianSpec& spec);

}  // namespace kfp
