#include "kfp/vfp_pde.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/SparseLU>

#include "kfp/errors.hpp"

namespace kfp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool heavy_tailed(const HamiltonianSpec& spec) {
  const auto& k = spec.kinetic;
  return k.family == KineticFamily::heavytail ||
         (k.family == KineticFamily::tensorised && k.factor == FactorShape::heavytail);
}

Eigen::Map<const Eigen::VectorXd> flat(const Eigen::MatrixXd& h) { return {h.data(), h.size()}; }

}  // namespace

PhaseGrid::PhaseGrid(const HamiltonianSpec& in, const PhaseGridOptions& options) {
  if (in.dim != 1) throw ValidationError("spec.dim", "the phase-space solver is one-dimensional");
  if (!kinetic_is_separable(in)) {
    throw ValidationError("spec.kinetic", "the phase-space solver needs a separable kinetic energy");
  }
  if (options.nx < 8 || options.nv < 8) throw ValidationError("numerics.nx", "grids need at least 8 cells");
  const double tail = options.v_tail_mass.value_or(heavy_tailed(in) ? 1e-8 : 1e-10);
  spec_ = normalize_gibbs(in, tail);
  if (spec_.v_radius > 1e3) {
    throw Error(ErrorKind::IllConditioned, "velocity truncation radius " + std::to_string(spec_.v_radius) +
                                               " exceeds 1e3; the tail is too heavy for a grid solve");
  }

  const auto [xlo, xhi] = x_domain(spec_);
  const auto [vlo, vhi] = v_domain(spec_);
  const Boundary xb = spec_.potential.on_torus() ? Boundary::torus : Boundary::line;
  const HamiltonianSpec s = spec_;
  x_ = std::make_unique<SpectralOperator>(Grid1D{xb, xlo, xhi, options.nx},
                                          [s](double x) { return density_x(s, x); });
  v_ = std::make_unique<SpectralOperator>(Grid1D{Boundary::line, vlo, vhi, options.nv},
                                          [s](double v) { return density_v(s, v); });

  const Profile pot = potential_profile(spec_.potential);
  const Profile kin = kinetic_profile(spec_);
  for (int i = 0; i < nx(); ++i) max_dphi_ = std::max(max_dphi_, std::abs(pot.d1(x_node(i))));
  for (int j = 0; j < nv(); ++j) max_dpsi_ = std::max(max_dpsi_, std::abs(kin.d1(v_node(j))));

  // Stream function at cell corners: the edge weights already carry the
  // normalised density times the cell width. Corners on a wall stay zero.
  const int n = nx(), m = nv();
  const double hx = x_->grid().h(), hv = v_->grid().h();
  const Eigen::VectorXd& wx = x_->edge_weight();
  const Eigen::VectorXd& wv = v_->edge_weight();
  const int ex_count = x_->grid().edges();
  auto stream = [&](int ex, int ev) {
    // ex indexes x edges with -1 meaning the left wall; ev likewise in v.
    if (ev < 0 || ev >= m - 1) return 0.0;
    if (xb == Boundary::torus) ex = (ex + n) % n;
    if (ex < 0 || ex >= ex_count) return 0.0;
    return wx[ex] * wv[ev];
  };
  auto index = [n](int i, int j) { return i + j * n; };

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(4 * n * m));
  for (int ex = 0; ex < ex_count; ++ex) {
    const int i = ex, ip = (ex + 1) % n;
    for (int j = 0; j < m; ++j) {
      const double a = -(stream(ex, j) - stream(ex, j - 1)) / hv;
      const double c = a / (2.0 * hx);
      trip.emplace_back(index(i, j), index(ip, j), c);
      trip.emplace_back(index(ip, j), index(i, j), -c);
    }
  }
  for (int ev = 0; ev < m - 1; ++ev) {
    for (int i = 0; i < n; ++i) {
      const double b = (stream(i, ev) - stream(i - 1, ev)) / hx;
      const double c = b / (2.0 * hv);
      trip.emplace_back(index(i, ev), index(i, ev + 1), c);
      trip.emplace_back(index(i, ev + 1), index(i, ev), -c);
    }
  }
  flux_.resize(n * m, n * m);
  flux_.setFromTriplets(trip.begin(), trip.end());
  flux_.makeCompressed();

  kv_ = v_->stiffness();
  dual_factor_.compute(Eigen::MatrixXd(v_->mass().asDiagonal()) + kv_);
}

double PhaseGrid::cfl_limit() const {
  const double hx = x_->grid().h(), hv = v_->grid().h();
  const double ax = max_dpsi_ > 0 ? hx / max_dpsi_ : std::numeric_limits<double>::infinity();
  const double av = max_dphi_ > 0 ? hv / max_dphi_ : std::numeric_limits<double>::infinity();
  return std::min(ax, av);
}

Eigen::MatrixXd PhaseGrid::sample(const std::function<double(double, double)>& f) const {
  Eigen::MatrixXd h(nx(), nv());
  for (int j = 0; j < nv(); ++j)
    for (int i = 0; i < nx(); ++i) h(i, j) = f(x_node(i), v_node(j));
  return h;
}

double PhaseGrid::mass(const Eigen::MatrixXd& h) const { return x_->mass().dot(h * v_->mass()); }

double PhaseGrid::norm_sq(const Eigen::MatrixXd& h) const {
  return x_->mass().dot(h.cwiseProduct(h) * v_->mass());
}

double PhaseGrid::grad_v_sq(const Eigen::MatrixXd& h) const {
  return x_->mass().dot((h * kv_).cwiseProduct(h).rowwise().sum());
}

Eigen::MatrixXd PhaseGrid::remove_mean(const Eigen::MatrixXd& h) const {
  return h.array() - mass(h);
}

Eigen::VectorXd PhaseGrid::velocity_average(const Eigen::MatrixXd& h) const { return h * v_->mass(); }

Eigen::VectorXd PhaseGrid::cell_mass() const {
  Eigen::MatrixXd m = x_->mass() * v_->mass().transpose();
  return flat(m);
}

Eigen::MatrixXd PhaseGrid::velocity_stiffness() const { return kv_; }

Eigen::MatrixXd PhaseGrid::transport(const Eigen::MatrixXd& h) const {
  Eigen::VectorXd g = flux_ * flat(h);
  g.array() /= cell_mass().array();
  return Eigen::Map<Eigen::MatrixXd>(g.data(), nx(), nv());
}

Eigen::MatrixXd PhaseGrid::collision(const Eigen::MatrixXd& h) const {
  return -(h * kv_) * v_->mass().cwiseInverse().asDiagonal();
}

double PhaseGrid::dual_v_norm_sq(const Eigen::MatrixXd& g) const {
  // Per x node: (Gamma g)^T (Gamma + K)^{-1} (Gamma g).
  const Eigen::MatrixXd weighted = v_->mass().asDiagonal() * g.transpose();
  const Eigen::MatrixXd solved = dual_factor_.solve(weighted);
  return x_->mass().dot(weighted.cwiseProduct(solved).colwise().sum().transpose());
}

struct KineticStepper::Factors {
  Eigen::SparseLU<Eigen::SparseMatrix<double>> transport;
  Eigen::SparseMatrix<double> explicit_part;  // M - dt/4 G
  Eigen::MatrixXd diffusion_t;                // transpose of the CN propagator in v
};

KineticStepper::KineticStepper(const PhaseGrid& grid, double xi, double dt)
    : grid_(&grid), xi_(xi), dt_(dt), factors_(std::make_unique<Factors>()) {
  if (!(dt > 0.0) || dt > grid.cfl_limit()) {
    std::ostringstream os;
    os << "dt = " << dt << " exceeds the transport limit " << grid.cfl_limit();
    throw Error(ErrorKind::CFLViolation, os.str());
  }
  if (!(xi >= 0.0)) throw ValidationError("run.xi", "friction must be nonnegative");
  const Eigen::VectorXd m = grid.cell_mass();
  Eigen::SparseMatrix<double> mass(m.size(), m.size());
  mass.reserve(Eigen::VectorXi::Ones(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) mass.insert(i, i) = m[i];
  const Eigen::SparseMatrix<double> implicit_part = mass + (0.25 * dt) * grid.flux();
  factors_->explicit_part = mass - (0.25 * dt) * grid.flux();
  factors_->transport.analyzePattern(implicit_part);
  factors_->transport.factorize(implicit_part);
  if (factors_->transport.info() != Eigen::Success) {
    throw Error(ErrorKind::IllConditioned, "transport factorisation failed");
  }
  const Eigen::MatrixXd gamma = grid.v().mass().asDiagonal();
  const Eigen::MatrixXd k = grid.velocity_stiffness();
  const Eigen::MatrixXd lhs = gamma + (0.5 * xi * dt) * k;
  const Eigen::MatrixXd rhs = gamma - (0.5 * xi * dt) * k;
  factors_->diffusion_t = lhs.llt().solve(rhs).transpose();
}

KineticStepper::~KineticStepper() = default;

void KineticStepper::step(Eigen::MatrixXd& h) const {
  const Eigen::Index n = h.rows(), m = h.cols();
  auto half_transport = [&]() {
    const Eigen::VectorXd rhs = factors_->explicit_part * flat(h);
    const Eigen::VectorXd out = factors_->transport.solve(rhs);
    h = Eigen::Map<const Eigen::MatrixXd>(out.data(), n, m);
  };
  half_transport();
  h = h * factors_->diffusion_t;
  half_transport();
}

Eigen::MatrixXd default_initial(const PhaseGrid& grid) {
  const HamiltonianSpec& s = grid.spec();
  const auto [lo, hi] = x_domain(s);
  const bool torus = s.potential.on_torus();
  const double period = hi - lo;
  const Eigen::MatrixXd h = grid.sample([&](double x, double v) {
    const double gx = torus ? std::cos(2.0 * std::numbers::pi * (x - lo) / period) : std::tanh(x);
    return gx + std::tanh(v);
  });
  return grid.remove_mean(h);
}

double choose_time_step(const PhaseGrid& grid, const RunOptions& options) {
  const double target = options.cfl_fraction * grid.cfl_limit();
  const double base = options.tau / options.samples_per_tau;
  const double k = std::max(1.0, std::ceil(base / target - 1e-12));
  return base / k;
}

double DecaySeries::max_dissip_residual() const {
  double r = 0.0;
  for (double x : dissip_residual) r = std::max(r, x);
  return r;
}

bool DecaySeries::monotone(double tolerance) const {
  for (std::size_t i = 1; i < norm_sq.size(); ++i) {
    if (norm_sq[i] > norm_sq[i - 1] + tolerance) return false;
  }
  return true;
}

void DecaySeries::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << "t,norm_sq,grad_v_sq,H_tau,bound_value,dissip_residual,violated\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < t.size(); ++i) {
    out << t[i] << ',' << norm_sq[i] << ',' << grad_v_sq[i] << ',' << H_tau[i] << ',' << bound_value[i] << ','
        << dissip_residual[i] << ',' << violated[i] << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

DecaySeries run(const PhaseGrid& grid, const Eigen::MatrixXd& h0, double xi, const RunOptions& options) {
  if (h0.rows() != grid.nx() || h0.cols() != grid.nv()) {
    throw ValidationError("h0", "initial datum does not match the grid");
  }
  if (!h0.allFinite()) throw ValidationError("h0", "initial datum must be finite");
  if (!(options.tau > 0.0) || !(options.t_end >= options.tau) || options.samples_per_tau < 2) {
    throw ValidationError("run.tau", "need tau > 0, t_end >= tau and at least two samples per tau");
  }
  const double dt = choose_time_step(grid, options);
  const KineticStepper stepper(grid, xi, dt);
  const int stride = static_cast<int>(std::lround(options.tau / options.samples_per_tau / dt));
  const double row_dt = options.tau / options.samples_per_tau;
  const int rows = static_cast<int>(std::floor(options.t_end / row_dt + 1e-9)) + 1;

  DecaySeries s;
  s.xi = xi;
  s.tau = options.tau;
  s.dt = dt;
  s.h0_sup = h0.cwiseAbs().maxCoeff();
  s.h0_norm_sq = grid.norm_sq(h0);

  std::vector<int> window_first;
  for (double start : options.snapshot_starts) {
    const int first = static_cast<int>(std::lround(start / row_dt));
    if (start < 0 || first + options.samples_per_tau >= rows) {
      throw ValidationError("run.snapshots", "snapshot window leaves the run");
    }
    window_first.push_back(first);
    Trajectory tr;
    tr.start = first * row_dt;
    tr.tau = options.tau;
    s.snapshots.push_back(std::move(tr));
  }
  auto record_snapshots = [&](int row, const Eigen::MatrixXd& h) {
    for (std::size_t w = 0; w < window_first.size(); ++w) {
      if (row >= window_first[w] && row <= window_first[w] + options.samples_per_tau) {
        s.snapshots[w].fields.push_back(h);
      }
    }
  };

  Eigen::MatrixXd h = h0;
  const double mass0 = grid.mass(h0);
  double nrm = s.h0_norm_sq;
  double grad = grid.grad_v_sq(h0);
  auto push_row = [&](int row, double worst) {
    s.t.push_back(row * row_dt);
    s.norm_sq.push_back(nrm);
    s.grad_v_sq.push_back(grad);
    s.dissip_residual.push_back(worst);
    s.mass_drift.push_back(std::abs(grid.mass(h) - mass0));
    s.sup.push_back(h.cwiseAbs().maxCoeff());
    record_snapshots(row, h);
  };
  push_row(0, 0.0);
  for (int row = 1; row < rows; ++row) {
    double worst = 0.0;
    for (int k = 0; k < stride; ++k) {
      stepper.step(h);
      const double nrm_new = grid.norm_sq(h);
      const double grad_new = grid.grad_v_sq(h);
      // Discrete energy identity with the trapezoid rule for the dissipation.
      const double r = (nrm_new - nrm) / dt + xi * (grad + grad_new);
      worst = std::max(worst, std::abs(r));
      nrm = nrm_new;
      grad = grad_new;
    }
    if (!h.allFinite()) throw Error(ErrorKind::Blowup, "non-finite field at t = " + std::to_string(row * row_dt));
    push_row(row, worst);
  }

  const int per = options.samples_per_tau;
  s.H_tau.assign(rows, kNaN);
  for (int r = 0; r + per < rows; ++r) {
    double acc = 0.5 * (s.norm_sq[r] + s.norm_sq[r + per]);
    for (int k = 1; k < per; ++k) acc += s.norm_sq[r + k];
    s.H_tau[r] = acc * row_dt;
  }
  s.bound_value.assign(rows, kNaN);
  s.violated.assign(rows, 0);
  return s;
}

BoundReport check_decay_bound(DecaySeries& series, const std::function<double(double)>& bound,
                              const std::function<double(double)>& pointwise, double slack) {
  BoundReport rep;
  rep.slack = slack;
  double worst = -1.0;
  for (std::size_t i = 0; i < series.t.size(); ++i) {
    bool bad = false;
    if (bound && std::isfinite(series.H_tau[i])) {
      const double b = bound(series.t[i]);
      series.bound_value[i] = b;
      const double ratio = b > 0 ? series.H_tau[i] / b : (series.H_tau[i] > 0 ? INFINITY : 0.0);
      if (ratio > rep.max_ratio) rep.max_ratio = ratio;
      if (ratio > worst) {
        worst = ratio;
        rep.worst_row = static_cast<int>(i);
      }
      bad = bad || ratio > 1.0 + slack;
    }
    if (pointwise) {
      const double b = pointwise(series.t[i]);
      const double ratio = b > 0 ? series.norm_sq[i] / b : (series.norm_sq[i] > 0 ? INFINITY : 0.0);
      rep.pointwise_ratio = std::max(rep.pointwise_ratio, ratio);
      bad = bad || ratio > 1.0 + slack;
    }
    series.violated[i] = bad ? 1 : 0;
  }
  rep.pass = rep.max_ratio <= 1.0 + slack;
  rep.pointwise_pass = rep.pointwise_ratio <= 1.0 + slack;
  return rep;
}

std::function<double(double)> exponential_pointwise(double lambda_bar, double tau, double h0_norm_sq) {
  return [=](double t) { return t <= tau ? h0_norm_sq : h0_norm_sq * std::exp(-2.0 * lambda_bar * (t - tau)); };
}

std::function<double(double)> algebraic_pointwise(const AlgebraicEnvelope& env, double tau, double h0_norm_sq) {
  return [=](double t) {
    if (t <= tau) return h0_norm_sq;
    return h0_norm_sq / std::pow(1.0 + env.rate * (t - tau), env.sigma);
  };
}

namespace {

struct WindowNorms {
  double full = 0.0;       // |h|^2
  double micro = 0.0;      // |(Id - Pi) h|^2
  double transport = 0.0;  // |(d_t + T) h|^2 in L2(mu; H^-1(gamma)), or its xi |grad_v h| bound
  Eigen::MatrixXd average; // Pi h, rows = times
};

WindowNorms window_norms(const PhaseGrid& grid, const Trajectory& tr, double xi) {
  const int m = static_cast<int>(tr.fields.size());
  if (m < 3) throw ValidationError("trajectory", "a window needs at least three samples");
  const bool direct = !tr.time_derivative.empty();
  if (direct && static_cast<int>(tr.time_derivative.size()) != m) {
    throw ValidationError("trajectory", "time derivative samples do not match the fields");
  }
  WindowNorms w;
  w.average.resize(m, grid.nx());
  for (int j = 0; j < m; ++j) {
    const double weight = ((j == 0 || j == m - 1) ? 0.5 : 1.0) / (m - 1);
    const Eigen::MatrixXd& h = tr.fields[j];
    const Eigen::VectorXd avg = grid.velocity_average(h);
    w.average.row(j) = avg.transpose();
    w.full += weight * grid.norm_sq(h);
    w.micro += weight * grid.norm_sq(h.colwise() - avg);
    if (direct) {
      w.transport += weight * grid.dual_v_norm_sq(tr.time_derivative[j] + grid.transport(h));
    } else {
      w.transport += weight * xi * xi * grid.grad_v_sq(h);
    }
  }
  return w;
}

}  // namespace

InequalityCheck averaging_lemma_check(const PhaseGrid& grid, const Trajectory& tr, double xi, double K_avg) {
  const WindowNorms w = window_norms(grid, tr, xi);
  const DualNorm dual(grid.x(), tr.tau, static_cast<int>(tr.fields.size()));
  const double g = dual.gradient(w.average);
  InequalityCheck c;
  c.name = "averaging lemma";
  c.lhs = g * g;
  c.rhs = K_avg * (w.micro + w.transport);
  c.ok = c.lhs <= c.rhs;
  return c;
}

InequalityCheck modified_poincare_check(const PhaseGrid& grid, const Trajectory& tr, double xi,
                                        double lambda_P) {
  const WindowNorms w = window_norms(grid, tr, xi);
  InequalityCheck c;
  c.name = "modified Poincare";
  c.lhs = lambda_P * w.full;
  c.rhs = w.transport + w.micro;
  c.ok = c.lhs <= c.rhs;
  return c;
}

double fitted_rate(const DecaySeries& s, double ceiling, double floor) {
  if (s.H_tau.empty() || !(s.H_tau[0] > 0.0)) throw Error(ErrorKind::NoDecay, "H_tau(0) is zero");
  const double h0 = s.H_tau[0];
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    const double r = s.H_tau[i] / h0;
    if (!std::isfinite(r) || r > ceiling || r < floor) continue;
    const double y = std::log(s.H_tau[i]);
    sx += s.t[i];
    sy += y;
    sxx += s.t[i] * s.t[i];
    sxy += s.t[i] * y;
    ++n;
  }
  if (n < 3) throw Error(ErrorKind::NoDecay, "fewer than three rows inside the fit window");
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return -slope;
}

Trajectory random_smooth_trajectory(const PhaseGrid& grid, double tau, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const auto [xlo, xhi] = x_domain(grid.spec());
  const auto [vlo, vhi] = v_domain(grid.spec());
  const bool torus = grid.spec().potential.on_torus();
  const double pi = std::numbers::pi;

  struct Mode {
    double amp, omega, phase;
    Eigen::VectorXd bx, cv;
  };
  std::vector<Mode> modes;
  for (int kt = 0; kt <= 2; ++kt) {
    for (int kx = 0; kx <= 2; ++kx) {
      for (int kv = 0; kv <= 2; ++kv) {
        Mode md;
        md.amp = normal(rng) / (1.0 + kt + kx + kv);
        md.omega = kt * pi / tau;
        md.phase = phase(rng);
        const double px = phase(rng);
        md.bx.resize(grid.nx());
        for (int i = 0; i < grid.nx(); ++i) {
          const double s = (grid.x_node(i) - xlo) / (xhi - xlo);
          md.bx[i] = torus ? std::cos(2.0 * pi * kx * s + px) : std::cos(pi * kx * s);
        }
        md.cv.resize(grid.nv());
        for (int j = 0; j < grid.nv(); ++j) md.cv[j] = std::cos(pi * kv * (grid.v_node(j) - vlo) / (vhi - vlo));
        modes.push_back(std::move(md));
      }
    }
  }
  Trajectory tr;
  tr.tau = tau;
  for (int j = 0; j < samples; ++j) {
    const double t = tau * j / (samples - 1);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(grid.nx(), grid.nv());
    Eigen::MatrixXd dh = h;
    for (const Mode& md : modes) {
      const Eigen::MatrixXd sep = md.bx * md.cv.transpose();
      h += md.amp * std::cos(md.omega * t + md.phase) * sep;
      dh -= md.amp * md.omega * std::sin(md.omega * t + md.phase) * sep;
    }
    tr.fields.push_back(std::move(h));
    tr.time_derivative.push_back(std::move(dh));
  }
  // Remove the space-time mean (trapezoid in time); the derivative is unchanged.
  double mean = 0.0;
  for (int j = 0; j < samples; ++j) {
    const double weight = ((j == 0 || j == samples - 1) ? 0.5 : 1.0) / (samples - 1);
    mean += weight * grid.mass(tr.fields[j]);
  }
  for (auto& f : tr.fields) f.array() -= mean;
  return tr;
}

}  // namespace kfp
