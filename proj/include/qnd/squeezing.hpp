#pragma once

// Wineland squeezing parameter from collective-spin moments, ensemble
// statistics over trajectory records, optimal points and power-law fits.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qnd/dynamics.hpp"

namespace qnd {

/// Mean spin has (almost) vanished, so the squeezing frame is undefined.
class DegenerateFrame : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct SpinMoments {
  Eigen::Vector3d first;   // <Jx>, <Jy>, <Jz>
  Eigen::Matrix3d second;  // <Ji Jj + Jj Ji> / 2
  double spin;             // J = N / 2

  static SpinMoments from_sample(const MomentSample& sample, int atoms);
};

/// cov_ij = <Ji Jj + Jj Ji>/2 - <Ji><Jj>.
Eigen::Matrix3d covariance_matrix(const SpinMoments& moments);

struct MeanSpinFrame {
  double theta;
  double phi;
  Eigen::Matrix3d rotation;  // R_y(pi/2 - theta) R_z(-phi); maps <J> onto +x
};

MeanSpinFrame mean_spin_frame(const SpinMoments& moments);

Eigen::Matrix3d rotation_y(double angle);
Eigen::Matrix3d rotation_z(double angle);

/// xi^2 = lambda_min(tangential covariance) / (J C / 2), C = |<J>|^2 / J^2.
double squeezing_parameter(const SpinMoments& moments);

/// Fills record.xi2 from its moments. Samples with a degenerate frame get NaN.
void fill_squeezing(TrajectoryRecord& record);

struct EnsembleSummary {
  std::vector<double> times;
  std::vector<double> mean_jx, mean_jy, mean_jz, mean_n;
  std::vector<double> stderr_jx, stderr_jy, stderr_jz;
  // Ensemble mean of the conditional variances and the unconditional ones.
  std::vector<double> mean_var_x, mean_var_y, mean_var_z;
  std::vector<double> uncond_var_x, uncond_var_y;
  std::vector<double> contrast;  // |E<J>|^2 / J^2
  std::vector<double> mean_xi2, stderr_xi2;
  int trajectories = 0;
  int atoms = 0;
  double kappa_tilde = 0;
  bool stderr_defined = false;  // false for a single trajectory
};

/// Per-time means and standard errors. xi2 is averaged per trajectory, and
/// filled first if a record does not carry it yet.
EnsembleSummary ensemble_average(const std::vector<TrajectoryRecord>& records);

struct OptimalPoint {
  std::size_t index;
  double t_m;
  double xi2_m;
  bool monotone;  // no interior minimum; an endpoint was returned
  std::optional<double> refined_t;
  std::optional<double> refined_xi2;
};

OptimalPoint optimal_point(const std::vector<double>& times, const std::vector<double>& values,
                           bool refine = false);
OptimalPoint optimal_point(const EnsembleSummary& summary, bool refine = false);

struct TransientTime {
  double delta_t;
  double c;  // kappa * delta_t / 2
};

/// First time the photon number reaches fraction * n_steady, by linear interpolation.
TransientTime transient_time(const std::vector<double>& times, const std::vector<double>& mean_n, double n_steady,
                             double kappa, double fraction = 0.9);

struct PowerLawPoint {
  double x;
  double y;
  double sigma;  // absolute uncertainty on y; <= 0 means unknown
};

/// y = prefactor / x^exponent.
struct FitResult {
  double exponent;
  double exponent_sigma;
  double prefactor;
  double prefactor_sigma;
  double x_min;
  double x_max;
  double residual_norm;
  bool weighted;
  int points;
};

/// Least squares on log y = log a - alpha log x, weighted by sigma/y when every
/// point carries a positive sigma. Without weights the parameter covariance is
/// scaled by the residual variance.
FitResult fit_power_law(const std::vector<PowerLawPoint>& points, bool weighted = true);

}  // namespace qnd
