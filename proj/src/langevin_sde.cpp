#include "kfp/langevin_sde.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "kfp/certificates.hpp"
#include "kfp/errors.hpp"
#include "quadrature.hpp"

namespace kfp {

const char* observable_name(Observable o) {
  switch (o) {
    case Observable::second_moment_x: return "second_moment_x";
    case Observable::second_moment_v: return "second_moment_v";
    case Observable::energy: return "energy";
    case Observable::tabulated_x: return "tabulated_x";
  }
  return "?";
}

namespace {

// Linear interpolation of a tabulated g, held constant outside its range.
double table_value(const Table1D& t, double x) {
  const double s = (x - t.start) / t.step;
  if (s <= 0.0) return t.values.front();
  const auto last = static_cast<double>(t.values.size() - 1);
  if (s >= last) return t.values.back();
  const auto i = static_cast<std::size_t>(s);
  const double f = s - static_cast<double>(i);
  return (1.0 - f) * t.values[i] + f * t.values[i + 1];
}

template <class F>
double expect_x(const HamiltonianSpec& spec, F g) {
  auto f = [&](double x) { return g(x) * density_x(spec, x); };
  if (spec.potential.on_torus() || spec.potential.family == PotentialFamily::tabulated) {
    const auto [lo, hi] = x_domain(spec);
    return detail::integrate(f, lo, hi).value;
  }
  return detail::integrate_line(f).value;
}

template <class F>
double expect_v(const HamiltonianSpec& spec, F g) {
  auto f = [&](double v) { return g(v) * density_v(spec, v); };
  const Profile q = kinetic_profile(spec);
  if (q.bounded_support()) return detail::integrate(f, q.support_lo(), q.support_hi()).value;
  return detail::integrate_line(f).value;
}

// Inverse-CDF sampler for a one-dimensional density on [lo, hi].
class InverseCdf {
 public:
  template <class F>
  InverseCdf(F density, double lo, double hi, int cells = 8192) : lo_(lo), h_((hi - lo) / cells) {
    cdf_.resize(cells + 1);
    cdf_[0] = 0.0;
    for (int i = 0; i < cells; ++i) cdf_[i + 1] = cdf_[i] + density(lo + (i + 0.5) * h_) * h_;
    for (double& c : cdf_) c /= cdf_.back();
  }
  double operator()(double u) const {
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    const auto i = std::clamp<std::ptrdiff_t>(it - cdf_.begin() - 1, 0, static_cast<std::ptrdiff_t>(cdf_.size()) - 2);
    const double a = cdf_[i], b = cdf_[i + 1];
    const double f = b > a ? (u - a) / (b - a) : 0.5;
    return lo_ + (static_cast<double>(i) + f) * h_;
  }

 private:
  double lo_, h_;
  std::vector<double> cdf_;
};

}  // namespace

double equilibrium_value(const HamiltonianSpec& in, Observable observable, const std::optional<Table1D>& g_table) {
  const HamiltonianSpec spec = in.normalized ? in : normalize_gibbs(in);
  if (!kinetic_is_separable(spec)) {
    throw ValidationError("spec.kinetic", "the Langevin module needs a separable kinetic energy");
  }
  const double d = spec.dim;
  const Profile p = potential_profile(spec.potential);
  const Profile q = kinetic_profile(spec);
  switch (observable) {
    case Observable::second_moment_x: return d * expect_x(spec, [](double x) { return x * x; });
    case Observable::second_moment_v: return d * expect_v(spec, [](double v) { return v * v; });
    case Observable::energy:
      return d * (expect_x(spec, [&](double x) { return p.value(x); }) +
                  expect_v(spec, [&](double v) { return q.value(v); }));
    case Observable::tabulated_x:
      if (!g_table) throw ValidationError("sde.observable_table", "tabulated observable without data");
      return d * expect_x(spec, [&](double x) { return table_value(*g_table, x); });
  }
  return 0.0;
}

SdeSeries integrate(const SdeConfig& cfg) {
  if (!(cfg.dt > 0.0)) throw ValidationError("sde.dt", "dt must be positive");
  if (cfg.n_paths < 1) throw ValidationError("sde.n_paths", "need at least one path");
  if (cfg.n_steps < 1 || cfg.record_every < 1) throw ValidationError("sde.n_steps", "need at least one step");
  if (!(cfg.xi >= 0.0)) throw ValidationError("run.xi", "friction must be nonnegative");
  const HamiltonianSpec spec = cfg.spec.normalized ? cfg.spec : normalize_gibbs(cfg.spec);
  if (!kinetic_is_separable(spec)) {
    throw ValidationError("spec.kinetic", "the Langevin module needs a separable kinetic energy");
  }
  const int d = spec.dim;
  const int blocks = std::clamp(cfg.blocks, 1, cfg.n_paths);
  const Profile pot = potential_profile(spec.potential);
  const Profile kin = kinetic_profile(spec);
  const bool torus = spec.potential.on_torus();
  const auto [xlo, xhi] = x_domain(spec);
  const auto [vlo, vhi] = v_domain(spec);
  const double period = xhi - xlo;

  // psi = c v^2 / 2 has an exact friction flow.
  const bool exact_ou = kin.shape() == Profile::Shape::quadratic;
  const double c = exact_ou ? kin.d1(1.0) : 0.0;
  const double decay = exact_ou ? std::exp(-cfg.xi * c * cfg.dt) : 0.0;
  const double ou_sd = exact_ou ? std::sqrt((1.0 - decay * decay) / c) : 0.0;
  const double em_sd = std::sqrt(2.0 * cfg.xi * cfg.dt);

  const InverseCdf sample_x([&](double x) { return density_x(spec, x); }, xlo, xhi);
  const InverseCdf sample_v([&](double v) { return density_v(spec, v); }, vlo, vhi);

  const int records = cfg.n_steps / cfg.record_every + 1;
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(records, blocks);
  std::vector<int> block_count(blocks, 0);

  auto observe = [&](const std::vector<double>& x, const std::vector<double>& v) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
      const double xi = torus ? xlo + std::fmod(std::fmod(x[i] - xlo, period) + period, period) : x[i];
      switch (cfg.observable) {
        case Observable::second_moment_x: s += xi * xi; break;
        case Observable::second_moment_v: s += v[i] * v[i]; break;
        case Observable::energy: s += pot.value(xi) + kin.value(v[i]); break;
        case Observable::tabulated_x: s += table_value(*cfg.g_table, xi); break;
      }
    }
    return s;
  };
  if (cfg.observable == Observable::tabulated_x && !cfg.g_table) {
    throw ValidationError("sde.observable_table", "tabulated observable without data");
  }

  std::vector<double> x(d), v(d);
  const double half = 0.5 * cfg.dt;
  for (int path = 0; path < cfg.n_paths; ++path) {
    const auto p64 = static_cast<std::uint64_t>(path);
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(p64), static_cast<std::uint32_t>(p64 >> 32)};
    std::mt19937_64 rng(seq);
    boost::random::normal_distribution<double> normal;
    boost::random::uniform_01<double> uniform;

    const double sx = (cfg.initial == InitialState::dilated && !torus) ? cfg.dilation : 1.0;
    const double sv = cfg.initial == InitialState::dilated ? cfg.dilation : 1.0;
    for (int i = 0; i < d; ++i) {
      x[i] = sx * sample_x(uniform(rng));
      v[i] = sv * sample_v(uniform(rng));
    }
    const int block = static_cast<int>(static_cast<long long>(path) * blocks / cfg.n_paths);
    ++block_count[block];
    sums(0, block) += observe(x, v);
    for (int step = 1; step <= cfg.n_steps; ++step) {
      for (int i = 0; i < d; ++i) {
        v[i] -= half * pot.d1(x[i]);
        x[i] += half * kin.d1(v[i]);
        if (exact_ou) {
          v[i] = decay * v[i] + ou_sd * normal(rng);
        } else {
          v[i] += -cfg.xi * kin.d1(v[i]) * cfg.dt + em_sd * normal(rng);
        }
        x[i] += half * kin.d1(v[i]);
        v[i] -= half * pot.d1(x[i]);
        if (!(std::abs(v[i]) <= 1e6)) {
          throw Error(ErrorKind::Blowup, "|V| exceeded 1e6 at t = " + std::to_string(step * cfg.dt) +
                                             "; reduce dt");
        }
      }
      if (step % cfg.record_every == 0) sums(step / cfg.record_every, block) += observe(x, v);
    }
  }

  SdeSeries out;
  out.observable = cfg.observable;
  out.equilibrium = equilibrium_value(spec, cfg.observable, cfg.g_table);
  out.block_means = sums;
  for (int b = 0; b < blocks; ++b) out.block_means.col(b) /= block_count[b];
  for (int r = 0; r < records; ++r) {
    out.t.push_back(r * cfg.record_every * cfg.dt);
    const double total = sums.row(r).sum();
    const double mean = total / cfg.n_paths;
    out.mean.push_back(mean);
    // Delete-one-block jackknife.
    double se = 0.0;
    if (blocks > 1) {
      std::vector<double> loo(blocks);
      double avg = 0.0;
      for (int b = 0; b < blocks; ++b) {
        loo[b] = (total - sums(r, b)) / (cfg.n_paths - block_count[b]);
        avg += loo[b] / blocks;
      }
      for (double l : loo) se += (l - avg) * (l - avg);
      se = std::sqrt(se * (blocks - 1.0) / blocks);
    }
    out.stderr_.push_back(se);
  }
  return out;
}

void SdeSeries::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw Error(ErrorKind::Io, "cannot write " + path);
  f << "t,mean_observable,stderr\n" << std::setprecision(17);
  for (std::size_t i = 0; i < t.size(); ++i) f << t[i] << ',' << mean[i] << ',' << stderr_[i] << '\n';
  if (!f) throw Error(ErrorKind::Io, "write failed for " + path);
}

namespace {

struct Line {
  double slope = 0.0;
  double slope_se = 0.0;
};

Line least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  Line l;
  l.slope = sxy / sxx;
  double rss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - my - l.slope * (x[i] - mx);
    rss += r * r;
  }
  l.slope_se = n > 2 ? std::sqrt(rss / (n - 2) / sxx) : 0.0;
  return l;
}

}  // namespace

DecayFit empirical_decay(const SdeSeries& s, std::uint64_t seed) {
  const std::size_t n = s.t.size();
  if (n < 3 || s.mean.size() != n) throw Error(ErrorKind::NoDecay, "series too short");
  std::size_t stop = 0;
  while (stop < n) {
    const double dev = std::abs(s.mean[stop] - s.equilibrium);
    const double se = stop < s.stderr_.size() ? s.stderr_[stop] : 0.0;
    if (!(dev > 5.0 * se) || dev == 0.0) break;
    ++stop;
  }
  if (stop < 3) throw Error(ErrorKind::NoDecay, "deviation from equilibrium is within noise from the start");

  std::vector<double> tt(s.t.begin(), s.t.begin() + static_cast<std::ptrdiff_t>(stop));
  auto fit = [&](const std::vector<double>& means) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < stop; ++i) {
      const double dev = std::abs(means[i] - s.equilibrium);
      if (dev > 0.0) {
        xs.push_back(tt[i]);
        ys.push_back(std::log(dev));
      }
    }
    if (xs.size() < 3) return Line{0.0, 0.0};
    return least_squares(xs, ys);
  };

  DecayFit out;
  out.t_start = tt.front();
  out.t_stop = tt.back();
  out.points = static_cast<int>(stop);
  const Line base = fit(s.mean);
  out.rate = -base.slope;
  const auto blocks = s.block_means.cols();
  if (blocks >= 2 && s.block_means.rows() == static_cast<Eigen::Index>(n)) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, blocks - 1);
    std::vector<double> rates;
    std::vector<double> means(n);
    for (int b = 0; b < 400; ++b) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
      for (Eigen::Index k = 0; k < blocks; ++k) acc += s.block_means.col(pick(rng));
      for (std::size_t i = 0; i < n; ++i) means[i] = acc[static_cast<Eigen::Index>(i)] / blocks;
      rates.push_back(-fit(means).slope);
    }
    std::sort(rates.begin(), rates.end());
    out.ci_lo = rates[static_cast<std::size_t>(0.025 * rates.size())];
    out.ci_hi = rates[static_cast<std::size_t>(0.975 * rates.size()) - 1];
  } else {
    out.ci_lo = out.rate - 1.96 * base.slope_se;
    out.ci_hi = out.rate + 1.96 * base.slope_se;
  }
  if (out.ci_lo <= 0.0 && out.ci_hi >= 0.0) {
    throw Error(ErrorKind::NoDecay, "the rate interval [" + std::to_string(out.ci_lo) + ", " +
                                        std::to_string(out.ci_hi) + "] contains zero");
  }
  return out;
}

FrictionSweep friction_sweep(const SdeConfig& base, const std::vector<double>& xis, double tau) {
  if (xis.empty()) throw ValidationError("sweep.xi", "empty friction list");
  const HamiltonianSpec spec = base.spec.normalized ? base.spec : normalize_gibbs(base.spec);
  const RateCertificate cert = certify(spec, 1.0, tau);
  FrictionSweep sweep;
  for (double xi : xis) {
    SdeConfig cfg = base;
    cfg.spec = spec;
    cfg.xi = xi;
    SweepRow row;
    row.xi = xi;
    try {
      const DecayFit fit = empirical_decay(integrate(cfg));
      row.empirical_rate = fit.rate;
      row.ci_lo = fit.ci_lo;
      row.ci_hi = fit.ci_hi;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoDecay) throw;
      row.empirical_rate = row.ci_lo = row.ci_hi = std::numeric_limits<double>::quiet_NaN();
    }
    row.certified_lambda_bar =
        cert.has_c_psi ? exponential_rate(cert.lions.C_lions, cert.averaging.K_avg, cert.c_psi, xi).lambda_bar : 0.0;
    sweep.rows.push_back(row);
  }
  const auto& r = sweep.rows;
  if (r.size() >= 2) {
    sweep.rising_at_small_xi = r[0].empirical_rate < r[1].empirical_rate;
    sweep.falling_at_large_xi = r[r.size() - 1].empirical_rate < r[r.size() - 2].empirical_rate;
  }
  return sweep;
}

void FrictionSweep::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw Error(ErrorKind::Io, "cannot write " + path);
  f << "xi,empirical_rate,rate_CI_lo,rate_CI_hi,certified_lambda_bar\n" << std::setprecision(17);
  for (const SweepRow& r : rows) {
    f << r.xi << ',' << r.empirical_rate << ',' << r.ci_lo << ',' << r.ci_hi << ',' << r.certified_lambda_bar << '\n';
  }
  if (!f) throw Error(ErrorKind::Io, "write failed for " + path);
}

}  // namespace kfp
