#pragma once

// Closed-form reference curves for the cavity-removed dynamics without
// feedback, feedback benchmarks, regime diagnostics and strontium design
// estimates. All functions are pure.

#include "qnd/operators.hpp"

namespace qnd::theory {

/// Steady photon number of the empty driven cavity, (2 eps / kappa)^2.
double steady_photons(double epsilon, double kappa);

/// Effective measurement rate after cavity removal, 4 (2 g^2/Delta)^2 n0 / kappa.
double kappa_eff(double g, double delta, double kappa, double mean_photons);

struct RegimeCheck {
  double ratio;
  bool pass;  // ratio <= 0.1
};

struct RegimeReport {
  double mean_photons;
  double kappa_tilde;
  double frequency_shift;  // delta_omega = g^2 N / Delta
  RegimeCheck bad_cavity;           // delta_omega / kappa
  RegimeCheck excited_elimination;  // n0 / (Delta/g)^2
  RegimeCheck cavity_removal;       // n0 / (kappa Delta / g^2)
};

RegimeReport regime_report(const ModelParams& params);

/// Unconditional moments for a CSS along +x at scaled time tau = kappa_tilde t.
/// Variances are normalized by J/2.
struct NoFeedbackMoments {
  double jx;
  double var_x;
  double var_y;
  double var_z;
};

NoFeedbackMoments moments_nofeedback(double tau, int atoms, double eta = 1.0);

/// <Jx^2> and <Jy^2> of the unconditional evolution.
double second_moment_x(double tau, int atoms);
double second_moment_y(double tau, int atoms);

enum class Contrast {
  refined,     // |<J>|^2 = J^2 e^{-tau} + jz^2
  asymptotic,  // |<J>|^2 = J^2 e^{-tau}
};

/// Conditional squeezing parameter as a function of <Jz>_c.
double xi2_conditional(double tau, double jz, int atoms, double eta = 1.0,
                       Contrast contrast = Contrast::refined);

/// Trajectory average of the conditional squeezing parameter without feedback.
double xi2_average_nofeedback(double tau, int atoms, double eta = 1.0);

struct Optimum {
  double tau;
  double xi2;
};

/// Numeric minimum of xi2_average_nofeedback: log-spaced scan then
/// golden-section refinement to 1e-10 in tau.
Optimum minimize_xi2_average(int atoms, double eta = 1.0);

/// Large-N asymptotics: tau = (eta N)^{-1/3}, xi2 = 1.5 (eta N)^{-2/3}.
Optimum asymptotic_optimum(double atoms, double eta = 1.0);

/// Feedback benchmark e^tau / (1 + eta N tau).
double xi2_feedback(double tau, int atoms, double eta = 1.0);

/// (xi2, tau) = (e / (eta N), 1).
Optimum feedback_optimum(int atoms, double eta = 1.0);

/// t_m = b / (kappa_tilde N^beta) + 2 c / kappa.
double t_opt_full(double atoms, double kappa_tilde, double kappa, double b = 0.9, double beta = 0.32,
                  double c = 3.0);

/// Zero-mean normal density of <Jz>_c with variance N/4.
double gaussian_jz_distribution(double q, int atoms);

struct SrEstimates {
  double optimal_detuning;  // g^2 N / kappa
  double photon_limit;      // (g N / kappa)^2
  double power_limit;       // g^2 N^2 hbar omega_D / (4 kappa), watts
  double optimal_time;      // f kappa / (4 g^2 N^{1/3}) + 6 / kappa
  double xi2;               // 1.5 / N^{2/3}
  double squeezing_db;      // -10 log10(xi2)
  double cooperativity;     // N 4 g^2 / (kappa gamma)
};

/// Angular frequencies in rad/s; times returned in seconds.
SrEstimates sr_estimates(double g, double kappa, double gamma, double drive_frequency, double atoms,
                         double attenuation);

/// Positive dB of squeezing, -10 log10(xi2).
double to_db(double xi2);

/// Scaling exponents of min_Q [Q^-delta + f Q^gamma / N^epsilon] with Q ~ N t.
struct Exponents {
  double alpha;  // xi2_m ~ N^-alpha
  double beta;   // t_m ~ N^-beta
};

Exponents scaling_exponents(double delta, double gamma, double epsilon);

struct GenericMinimum {
  double q;
  double value;
};

GenericMinimum generic_minimum(double delta, double gamma, double epsilon, double f, double atoms);

}  // namespace qnd::theory
