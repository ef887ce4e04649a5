#include "qnd/squeezing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qnd {

SpinMoments SpinMoments::from_sample(const MomentSample& s, int atoms) {
  SpinMoments m;
  m.first << s.jx, s.jy, s.jz;
  m.second << s.jxx, s.jxy, s.jxz,
              s.jxy, s.jyy, s.jyz,
              s.jxz, s.jyz, s.jzz;
  m.spin = 0.5 * atoms;
  return m;
}

Eigen::Matrix3d covariance_matrix(const SpinMoments& moments) {
  const Eigen::Matrix3d sym = 0.5 * (moments.second + moments.second.transpose());
  return sym - moments.first * moments.first.transpose();
}

Eigen::Matrix3d rotation_y(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Eigen::Matrix3d r;
  r << c, 0, s,
       0, 1, 0,
       -s, 0, c;
  return r;
}

Eigen::Matrix3d rotation_z(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Eigen::Matrix3d r;
  r << c, -s, 0,
       s, c, 0,
       0, 0, 1;
  return r;
}

MeanSpinFrame mean_spin_frame(const SpinMoments& moments) {
  const double length = moments.first.norm();
  if (!(length >= 1e-9 * moments.spin)) throw DegenerateFrame("mean spin vanished; contrast lost");
  MeanSpinFrame frame;
  frame.theta = std::acos(std::clamp(moments.first.z() / length, -1.0, 1.0));
  frame.phi = std::atan2(moments.first.y(), moments.first.x());
  frame.rotation = rotation_y(0.5 * kPi - frame.theta) * rotation_z(-frame.phi);
  return frame;
}

double squeezing_parameter(const SpinMoments& moments) {
  const MeanSpinFrame frame = mean_spin_frame(moments);
  const Eigen::Matrix3d cov = frame.rotation * covariance_matrix(moments) * frame.rotation.transpose();
  // Smallest eigenvalue of the tangential (rotated y-z) block.
  const double a = cov(1, 1);
  const double c = cov(2, 2);
  const double b = 0.5 * (cov(1, 2) + cov(2, 1));
  const double half_gap = 0.5 * (a - c);
  const double lambda = 0.5 * (a + c) - std::sqrt(half_gap * half_gap + b * b);
  const double j = moments.spin;
  const double contrast = moments.first.squaredNorm() / (j * j);
  return lambda / (0.5 * j * contrast);
}

void fill_squeezing(TrajectoryRecord& record) {
  record.xi2.resize(record.moments.size());
  for (std::size_t i = 0; i < record.moments.size(); ++i) {
    try {
      record.xi2[i] = squeezing_parameter(SpinMoments::from_sample(record.moments[i], record.atoms));
    } catch (const DegenerateFrame&) {
      record.xi2[i] = std::numeric_limits<double>::quiet_NaN();
    }
  }
}

namespace {

// Welford running mean and variance.
struct Accumulator {
  long count = 0;
  double mu = 0.0;
  double m2 = 0.0;

  void add(double v) {
    ++count;
    const double d = v - mu;
    mu += d / count;
    m2 += d * (v - mu);
  }
  double mean() const { return mu; }
  double standard_error() const {
    if (count < 2) return 0.0;
    return std::sqrt(std::max(0.0, m2 / (count - 1)) / count);
  }
};

}  // namespace

EnsembleSummary ensemble_average(const std::vector<TrajectoryRecord>& records) {
  if (records.empty()) throw std::invalid_argument("no trajectories to average");
  const auto& grid = records.front().times;
  for (const auto& r : records) {
    if (r.times != grid || r.moments.size() != grid.size())
      throw std::invalid_argument("trajectory records have mismatched time grids");
    if (r.atoms != records.front().atoms) throw std::invalid_argument("trajectory records mix atom numbers");
  }

  EnsembleSummary s;
  const int m = static_cast<int>(records.size());
  const std::size_t samples = grid.size();
  const double j = 0.5 * records.front().atoms;
  s.times = grid;
  s.trajectories = m;
  s.atoms = records.front().atoms;
  s.kappa_tilde = records.front().kappa_tilde;
  s.stderr_defined = m > 1;

  auto resize = [samples](std::initializer_list<std::vector<double>*> list) {
    for (auto* v : list) v->resize(samples);
  };
  resize({&s.mean_jx, &s.mean_jy, &s.mean_jz, &s.mean_n, &s.stderr_jx, &s.stderr_jy, &s.stderr_jz, &s.mean_var_x,
          &s.mean_var_y, &s.mean_var_z, &s.uncond_var_x, &s.uncond_var_y, &s.contrast, &s.mean_xi2, &s.stderr_xi2});

  std::vector<double> scratch;
  for (std::size_t t = 0; t < samples; ++t) {
    Accumulator jx, jy, jz, n, xi2;
    double var_x = 0, var_y = 0, var_z = 0, xx = 0, yy = 0;
    for (const auto& r : records) {
      const auto& q = r.moments[t];
      jx.add(q.jx);
      jy.add(q.jy);
      jz.add(q.jz);
      n.add(q.n);
      var_x += q.jxx - q.jx * q.jx;
      var_y += q.jyy - q.jy * q.jy;
      var_z += q.jzz - q.jz * q.jz;
      xx += q.jxx;
      yy += q.jyy;
      double x = 0.0;
      if (r.xi2.size() == samples) {
        x = r.xi2[t];
      } else {
        try {
          x = squeezing_parameter(SpinMoments::from_sample(q, r.atoms));
        } catch (const DegenerateFrame&) {
          x = std::numeric_limits<double>::quiet_NaN();
        }
      }
      xi2.add(x);
    }
    s.mean_jx[t] = jx.mean();
    s.mean_jy[t] = jy.mean();
    s.mean_jz[t] = jz.mean();
    s.mean_n[t] = n.mean();
    s.stderr_jx[t] = jx.standard_error();
    s.stderr_jy[t] = jy.standard_error();
    s.stderr_jz[t] = jz.standard_error();
    s.mean_var_x[t] = var_x / m;
    s.mean_var_y[t] = var_y / m;
    s.mean_var_z[t] = var_z / m;
    s.uncond_var_x[t] = xx / m - s.mean_jx[t] * s.mean_jx[t];
    s.uncond_var_y[t] = yy / m - s.mean_jy[t] * s.mean_jy[t];
    s.contrast[t] = (s.mean_jx[t] * s.mean_jx[t] + s.mean_jy[t] * s.mean_jy[t] + s.mean_jz[t] * s.mean_jz[t]) / (j * j);
    s.mean_xi2[t] = xi2.mean();
    s.stderr_xi2[t] = xi2.standard_error();
  }
  return s;
}

OptimalPoint optimal_point(const std::vector<double>& times, const std::vector<double>& values, bool refine) {
  if (times.size() != values.size()) throw std::invalid_argument("times and values differ in length");
  if (times.size() < 3) throw std::invalid_argument("need at least 3 samples to locate a minimum");
  std::size_t best = values.size();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) continue;
    if (best == values.size() || values[i] < values[best]) best = i;
  }
  if (best == values.size()) throw std::invalid_argument("no finite values");

  OptimalPoint p{best, times[best], values[best], false, std::nullopt, std::nullopt};
  p.monotone = best == 0 || best + 1 == values.size() || !std::isfinite(values[best - 1]) ||
               !std::isfinite(values[best + 1]);
  if (refine && !p.monotone) {
    const double x0 = times[best - 1], x1 = times[best], x2 = times[best + 1];
    const double y0 = values[best - 1], y1 = values[best], y2 = values[best + 1];
    const double d01 = (y1 - y0) / (x1 - x0);
    const double d12 = (y2 - y1) / (x2 - x1);
    const double curvature = (d12 - d01) / (x2 - x0);
    if (curvature > 0.0) {
      // Vertex of the interpolating parabola.
      const double slope = d01 - curvature * (x0 + x1);
      const double t = -slope / (2.0 * curvature);
      p.refined_t = t;
      p.refined_xi2 = y0 + d01 * (t - x0) + curvature * (t - x0) * (t - x1);
    }
  }
  return p;
}

OptimalPoint optimal_point(const EnsembleSummary& summary, bool refine) {
  return optimal_point(summary.times, summary.mean_xi2, refine);
}

TransientTime transient_time(const std::vector<double>& times, const std::vector<double>& mean_n, double n_steady,
                             double kappa, double fraction) {
  if (times.size() != mean_n.size() || times.empty()) throw std::invalid_argument("photon series is malformed");
  const double target = fraction * n_steady;
  for (std::size_t i = 0; i < mean_n.size(); ++i) {
    if (mean_n[i] < target) continue;
    double t = times[i];
    if (i > 0) {
      const double w = (target - mean_n[i - 1]) / (mean_n[i] - mean_n[i - 1]);
      t = times[i - 1] + w * (times[i] - times[i - 1]);
    }
    return {t, 0.5 * kappa * t};
  }
  throw std::domain_error("photon number never reaches the requested fraction of its steady value");
}

FitResult fit_power_law(const std::vector<PowerLawPoint>& points, bool weighted) {
  if (points.size() < 3) throw std::invalid_argument("power-law fit needs at least 3 points");
  bool all_sigmas = true;
  for (const auto& p : points) {
    if (!(p.x > 0.0) || !(p.y > 0.0)) throw std::invalid_argument("power-law fit needs positive x and y");
    if (!(p.sigma > 0.0)) all_sigmas = false;
  }
  const bool use_weights = weighted && all_sigmas;

  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd target(n);
  Eigen::VectorXd weight = Eigen::VectorXd::Ones(n);
  FitResult fit{};
  fit.x_min = std::numeric_limits<double>::infinity();
  fit.x_max = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = points[i];
    design(i, 0) = 1.0;
    design(i, 1) = -std::log(p.x);
    target[i] = std::log(p.y);
    if (use_weights) {
      const double rel = p.sigma / p.y;  // sigma of log y
      weight[i] = 1.0 / (rel * rel);
    }
    fit.x_min = std::min(fit.x_min, p.x);
    fit.x_max = std::max(fit.x_max, p.x);
  }

  const Eigen::MatrixXd normal = design.transpose() * weight.asDiagonal() * design;
  const Eigen::Vector2d rhs = design.transpose() * weight.asDiagonal() * target;
  const Eigen::LDLT<Eigen::MatrixXd> solver(normal);
  const Eigen::Vector2d beta = solver.solve(rhs);
  Eigen::Matrix2d cov = solver.solve(Eigen::MatrixXd::Identity(2, 2));

  const Eigen::VectorXd residual = target - design * beta;
  fit.residual_norm = residual.norm();
  if (!use_weights) {
    const double dof = static_cast<double>(n - 2);
    cov *= dof > 0 ? residual.squaredNorm() / dof : 0.0;
  }

  fit.prefactor = std::exp(beta[0]);
  fit.exponent = beta[1];
  fit.prefactor_sigma = fit.prefactor * std::sqrt(std::max(0.0, cov(0, 0)));
  fit.exponent_sigma = std::sqrt(std::max(0.0, cov(1, 1)));
  fit.weighted = use_weights;
  fit.points = static_cast<int>(n);
  return fit;
}

}  // namespace qnd
