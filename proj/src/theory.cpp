#include "qnd/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qnd::theory {

double steady_photons(double epsilon, double kappa) {
  if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
  const double r = 2.0 * epsilon / kappa;
  return r * r;
}

double kappa_eff(double g, double delta, double kappa, double mean_photons) {
  if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
  const double shift = 2.0 * g * g / delta;
  return 4.0 * shift * shift * mean_photons / kappa;
}

RegimeReport regime_report(const ModelParams& params) {
  RegimeReport r{};
  r.mean_photons = params.kappa > 0.0 ? steady_photons(params.epsilon, params.kappa) : 0.0;
  r.kappa_tilde = params.kappa > 0.0 ? kappa_eff(params.g, params.delta, params.kappa, r.mean_photons) : 0.0;
  const double g2 = params.g * params.g / params.delta;
  r.frequency_shift = g2 * params.atoms;

  auto check = [](double ratio) { return RegimeCheck{ratio, ratio <= 0.1}; };
  const double inf = std::numeric_limits<double>::infinity();
  r.bad_cavity = check(params.kappa > 0.0 ? r.frequency_shift / params.kappa : (g2 > 0.0 ? inf : 0.0));
  r.excited_elimination = check(r.mean_photons * params.g * params.g / (params.delta * params.delta));
  r.cavity_removal = check(params.kappa > 0.0 ? r.mean_photons * g2 / params.kappa : 0.0);
  return r;
}

NoFeedbackMoments moments_nofeedback(double tau, int atoms, double eta) {
  const double j = 0.5 * atoms;
  const double e1 = std::exp(-tau);
  const double e2 = std::exp(-2.0 * tau);
  NoFeedbackMoments m{};
  m.jx = j * std::exp(-0.5 * tau);
  m.var_x = j * (1.0 - e1) * (1.0 - e1) + 0.5 * (1.0 - e2);
  m.var_y = j * (1.0 - e2) + 0.5 * (1.0 + e2);
  m.var_z = 1.0 / (1.0 + 2.0 * j * eta * tau);
  return m;
}

double second_moment_x(double tau, int atoms) {
  const double j = 0.5 * atoms;
  const double e2 = std::exp(-2.0 * tau);
  return 0.5 * j * j * (1.0 + e2) + 0.25 * j * (1.0 - e2);
}

double second_moment_y(double tau, int atoms) {
  const double j = 0.5 * atoms;
  const double e2 = std::exp(-2.0 * tau);
  return 0.5 * j * j * (1.0 - e2) + 0.25 * j * (1.0 + e2);
}

double xi2_conditional(double tau, double jz, int atoms, double eta, Contrast contrast) {
  const double j = 0.5 * atoms;
  const double et = std::exp(tau);
  double mean_sq = j * j * std::exp(-tau);
  if (contrast == Contrast::refined) mean_sq += jz * jz;
  const double cos2 = jz * jz / mean_sq;
  const double em = std::exp(-tau);
  const double var_x = j * (1.0 - em) * (1.0 - em) + 0.5 * (1.0 - em * em);
  return et / (1.0 + 2.0 * eta * j * tau) * (1.0 - cos2) + et * var_x * cos2;
}

double xi2_average_nofeedback(double tau, int atoms, double eta) {
  const double n = atoms;
  const double et = std::exp(tau);
  return (1.0 - et / n) * et / (1.0 + eta * n * tau) +
         (n * (et - 1.0) * (et - 1.0) + et * et - 1.0) / (2.0 * n);
}

Optimum minimize_xi2_average(int atoms, double eta) {
  auto f = [&](double tau) { return xi2_average_nofeedback(tau, atoms, eta); };

  // Log-spaced scan over [1e-6, 20].
  constexpr int kGrid = 4000;
  const double lo = std::log(1e-6);
  const double hi = std::log(20.0);
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kGrid; ++i) {
    const double v = f(std::exp(lo + (hi - lo) * i / kGrid));
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  double a = std::exp(lo + (hi - lo) * std::max(best - 1, 0) / kGrid);
  double b = std::exp(lo + (hi - lo) * std::min(best + 1, kGrid) / kGrid);

  const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > 1e-10) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double tau = 0.5 * (a + b);
  return {tau, f(tau)};
}

Optimum asymptotic_optimum(double atoms, double eta) {
  const double en = eta * atoms;
  return {std::cbrt(1.0 / en), 1.5 / std::cbrt(en * en)};
}

double xi2_feedback(double tau, int atoms, double eta) { return std::exp(tau) / (1.0 + eta * atoms * tau); }

Optimum feedback_optimum(int atoms, double eta) { return {1.0, std::exp(1.0) / (eta * atoms)}; }

double t_opt_full(double atoms, double kappa_tilde, double kappa, double b, double beta, double c) {
  return b / (kappa_tilde * std::pow(atoms, beta)) + 2.0 * c / kappa;
}

double gaussian_jz_distribution(double q, int atoms) {
  const double var = 0.25 * atoms;
  return std::exp(-q * q / (2.0 * var)) / std::sqrt(2.0 * kPi * var);
}

SrEstimates sr_estimates(double g, double kappa, double gamma, double drive_frequency, double atoms,
                         double attenuation) {
  if (!(g > 0.0 && kappa > 0.0 && gamma > 0.0 && drive_frequency > 0.0 && atoms > 0.0 && attenuation > 0.0))
    throw ConfigError("strontium estimates need positive rates");
  constexpr double kHbar = 1.054571817e-34;
  SrEstimates s{};
  s.optimal_detuning = g * g * atoms / kappa;
  const double r = g * atoms / kappa;
  s.photon_limit = r * r;
  s.power_limit = g * g * atoms * atoms * kHbar * drive_frequency / (4.0 * kappa);
  s.optimal_time = attenuation * kappa / (4.0 * g * g * std::cbrt(atoms)) + 6.0 / kappa;
  s.xi2 = 1.5 / std::cbrt(atoms * atoms);
  s.squeezing_db = to_db(s.xi2);
  s.cooperativity = atoms * 4.0 * g * g / (kappa * gamma);
  return s;
}

double to_db(double xi2) { return -10.0 * std::log10(xi2); }

Exponents scaling_exponents(double delta, double gamma, double epsilon) {
  const double sum = gamma + delta;
  return {delta * epsilon / sum, 1.0 - epsilon / sum};
}

GenericMinimum generic_minimum(double delta, double gamma, double epsilon, double f, double atoms) {
  const double sum = gamma + delta;
  const double base = delta / (f * gamma);
  const double q = std::pow(base, 1.0 / sum) * std::pow(atoms, epsilon / sum);
  const double value = (1.0 + delta / gamma) * std::pow(base, -delta / sum) * std::pow(atoms, -delta * epsilon / sum);
  return {q, value};
}

}  // namespace qnd::theory
