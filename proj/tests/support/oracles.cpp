#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

#include "qnd/theory.hpp"

namespace oracle {

using qnd::cplx;

double free_cavity_photons(double t, double epsilon, double kappa) {
  const double n0 = std::pow(2.0 * epsilon / kappa, 2);
  const double fill = 1.0 - std::exp(-0.5 * kappa * t);
  return n0 * fill * fill;
}

double free_cavity_fill_constant(double fraction) {
  // In units where kappa / 2 = 1 and n0 = 1.
  double lo = 0.0, hi = 100.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (free_cavity_photons(mid, 1.0, 2.0) < fraction ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

double real_expect(const qnd::Operator& op, const qnd::Vec& psi) { return op.expectation(psi).real(); }

double sym_expect(const qnd::Operator& a, const qnd::Operator& b, const qnd::Vec& psi) {
  const qnd::Vec ap = a.apply(psi);
  const qnd::Vec bp = b.apply(psi);
  // <a b + b a>/2 = Re <a psi | b psi> for Hermitian a, b.
  return ap.dot(bp).real();
}

// Least-squares slope of log error against log dt.
double log_slope(double T, const std::vector<int>& divisions, const std::vector<double>& error) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(divisions.size());
  for (std::size_t k = 0; k < divisions.size(); ++k) {
    const double x = std::log(T / divisions[k]);
    const double y = std::log(error[k]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

qnd::MomentSample dense_moments(const qnd::Vec& psi, const qnd::HilbertSpace& space) {
  const auto spin = qnd::dicke_spin_ops(space.atoms());
  qnd::Operator jx = spin.jx, jy = spin.jy, jz = spin.jz;
  qnd::Operator n = qnd::Operator::zero(space);
  if (space.kind() == qnd::HilbertSpace::Kind::product) {
    const auto f = qnd::fock_ops(space.cutoff());
    const auto id_fock = qnd::Operator::identity(qnd::HilbertSpace::fock(space.cutoff()));
    const auto id_spin = qnd::Operator::identity(spin.jz.space());
    jx = qnd::kron(id_fock, spin.jx);
    jy = qnd::kron(id_fock, spin.jy);
    jz = qnd::kron(id_fock, spin.jz);
    n = qnd::kron(f.n, id_spin);
  }
  qnd::MomentSample m;
  m.jx = real_expect(jx, psi);
  m.jy = real_expect(jy, psi);
  m.jz = real_expect(jz, psi);
  m.jxx = sym_expect(jx, jx, psi);
  m.jyy = sym_expect(jy, jy, psi);
  m.jzz = sym_expect(jz, jz, psi);
  m.jxy = sym_expect(jx, jy, psi);
  m.jxz = sym_expect(jx, jz, psi);
  m.jyz = sym_expect(jy, jz, psi);
  m.n = real_expect(n, psi);
  return m;
}

qnd::MomentSample dense_moments(const qnd::DenseMat& rho, int atoms) {
  const auto s = qnd::dicke_spin_ops(atoms);
  const qnd::DenseMat x = s.jx.dense(), y = s.jy.dense(), z = s.jz.dense();
  auto ev = [&rho](const qnd::DenseMat& a) { return (rho * a).trace().real(); };
  auto sym = [&](const qnd::DenseMat& a, const qnd::DenseMat& b) { return 0.5 * ev(a * b + b * a); };
  qnd::MomentSample m;
  m.jx = ev(x);
  m.jy = ev(y);
  m.jz = ev(z);
  m.jxx = sym(x, x);
  m.jyy = sym(y, y);
  m.jzz = sym(z, z);
  m.jxy = sym(x, y);
  m.jxz = sym(x, z);
  m.jyz = sym(y, z);
  return m;
}

double xi2_by_eigensolver(const qnd::SpinMoments& m) {
  const Eigen::Vector3d n = m.first.normalized();
  // Any axis not parallel to n seeds the Gram-Schmidt basis.
  Eigen::Vector3d seed = std::abs(n.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  const Eigen::Vector3d e1 = (seed - seed.dot(n) * n).normalized();
  const Eigen::Vector3d e2 = n.cross(e1);
  const Eigen::Matrix3d cov = m.second - m.first * m.first.transpose();
  Eigen::Matrix2d block;
  block << e1.dot(cov * e1), e1.dot(cov * e2), e2.dot(cov * e1), e2.dot(cov * e2);
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> solver(0.5 * (block + block.transpose()));
  const double contrast = m.first.squaredNorm() / (m.spin * m.spin);
  return solver.eigenvalues().minCoeff() / (0.5 * m.spin * contrast);
}

qnd::Vec qnd_posterior(int atoms, double tau, double y) {
  const auto css = qnd::coherent_spin_state(atoms, 0.5 * qnd::kPi, 0.0).vector();
  const double j = 0.5 * atoms;
  Eigen::VectorXd log_w(atoms + 1);
  for (int a = 0; a <= atoms; ++a) {
    const double m = j - a;
    const double mag = std::abs(css[a]);
    log_w[a] = (mag > 0 ? std::log(mag) : -std::numeric_limits<double>::infinity()) + m * y - m * m * tau;
  }
  const double top = log_w.maxCoeff();
  qnd::Vec psi(atoms + 1);
  for (int a = 0; a <= atoms; ++a) psi[a] = std::exp(log_w[a] - top) * (std::abs(css[a]) > 0 ? css[a] / std::abs(css[a]) : 1.0);
  psi.normalize();
  return psi;
}

double qnd_average_xi2(int atoms, double tau, int nodes) {
  const double j = 0.5 * atoms;
  const auto css = qnd::coherent_spin_state(atoms, 0.5 * qnd::kPi, 0.0).vector();
  const double spread = 10.0 * std::sqrt(0.25 * atoms);
  const double m_hi = std::min(j, spread);
  const double width = std::sqrt(tau);
  const double lo = -2.0 * tau * m_hi - 10.0 * width;
  const double hi = 2.0 * tau * m_hi + 10.0 * width;
  const double h = (hi - lo) / (nodes - 1);
  const auto space = qnd::HilbertSpace::dicke(atoms);

  double total = 0.0, weight = 0.0;
  for (int i = 0; i < nodes; ++i) {
    const double y = lo + h * i;
    double density = 0.0;
    for (int a = 0; a <= atoms; ++a) {
      const double m = j - a;
      const double p = std::norm(css[a]);
      const double d = y - 2.0 * m * tau;
      density += p * std::exp(-d * d / (2.0 * tau));
    }
    density /= std::sqrt(2.0 * qnd::kPi * tau);
    const double trap = (i == 0 || i == nodes - 1) ? 0.5 : 1.0;
    const auto moments = dense_moments(qnd_posterior(atoms, tau, y), space);
    const double xi2 = xi2_by_eigensolver(qnd::SpinMoments::from_sample(moments, atoms));
    total += trap * h * density * xi2;
    weight += trap * h * density;
  }
  return total / weight;
}

Scan scan_xi2_average(int atoms, double eta, double tau_lo, double tau_hi, int points) {
  Scan best{tau_lo, std::numeric_limits<double>::infinity()};
  for (int i = 0; i < points; ++i) {
    const double tau = tau_lo + (tau_hi - tau_lo) * i / (points - 1);
    const double v = qnd::theory::xi2_average_nofeedback(tau, atoms, eta);
    if (v < best.xi2) best = {tau, v};
  }
  return best;
}

cplx DrivenCavity::alpha(double t) const {
  const cplx steady(0.0, -2.0 * epsilon / kappa);
  return steady * (1.0 - std::exp(-0.5 * kappa * t));
}

qnd::Vec DrivenCavity::exact_state(double T, const std::vector<double>& fine_dw, double fine_dt) const {
  const auto steps = static_cast<std::size_t>(std::llround(T / fine_dt));
  double theta = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t0 = k * fine_dt;
    const double t1 = t0 + fine_dt;
    const double tm = t0 + 0.5 * fine_dt;
    auto rate = [&](double t) {
      const cplx a = alpha(t);
      return (cplx(0.0, -epsilon) * a - 0.5 * kappa * a * a + 2.0 * kappa * a * a.real()).imag();
    };
    theta += fine_dt * (rate(t0) + 4.0 * rate(tm) + rate(t1)) / 6.0;
    theta += std::sqrt(kappa) * alpha(t0).imag() * fine_dw.at(k);
  }
  const cplx a = alpha(T);
  qnd::Vec psi(cutoff);
  double log_fact = 0.0;
  for (int n = 0; n < cutoff; ++n) {
    if (n > 0) log_fact += std::log(static_cast<double>(n));
    const cplx an = n == 0 ? cplx(1.0) : std::pow(a, n);
    psi[n] = std::exp(-0.5 * std::norm(a) - 0.5 * log_fact) * an;
  }
  return std::polar(1.0, theta) * psi;
}

double strong_order(qnd::Scheme scheme, int paths, std::uint64_t seed) {
  const DrivenCavity cavity{0.5, 1.0, 30};
  const auto f = qnd::fock_ops(cavity.cutoff);
  const qnd::Operator h = (f.c + f.cdag) * cplx(cavity.epsilon);
  const qnd::MeasurementChannel channel{f.c, cavity.kappa, 1.0, 0.0};
  const double T = 2.0 / cavity.kappa;
  const std::vector<int> divisions{16, 32, 64, 128};
  const int fine_per_coarsest = 128 * 64;
  const double fine_dt = T / fine_per_coarsest;

  std::vector<double> error(divisions.size(), 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> fine(fine_per_coarsest);
  for (int p = 0; p < paths; ++p) {
    for (auto& x : fine) x = std::sqrt(fine_dt) * normal(rng);
    const qnd::Vec exact = cavity.exact_state(T, fine, fine_dt);
    for (std::size_t k = 0; k < divisions.size(); ++k) {
      const int steps = divisions[k];
      const int group = fine_per_coarsest / steps;
      qnd::SseStepper stepper(h, channel, T / steps, scheme);
      qnd::Vec psi = qnd::Vec::Zero(cavity.cutoff);
      psi[0] = 1.0;
      for (int s = 0; s < steps; ++s) {
        double dW = 0.0;
        for (int i = 0; i < group; ++i) dW += fine[s * group + i];
        stepper.step(psi, dW);
      }
      error[k] += (psi - exact).norm() / paths;
    }
  }
  return log_slope(T, divisions, error);
}

double qnd_strong_order(qnd::Scheme scheme, int paths, std::uint64_t seed) {
  const int atoms = 4;
  const double kt = 1.0;
  const double T = 1.0;
  const std::vector<int> divisions{16, 32, 64, 128};
  const int fine_per_coarsest = 128 * 64;
  const double fine_dt = T / fine_per_coarsest;
  const auto space = qnd::HilbertSpace::dicke(atoms);
  const qnd::Operator h = qnd::Operator::zero(space);
  const auto channel = qnd::cavity_removed_channel(atoms, kt, 1.0);
  const qnd::Vec start = qnd::coherent_spin_state(atoms, 0.5 * qnd::kPi, 0.0).vector();

  auto mean_jz = [&](double y, double tau) {
    double num = 0.0, den = 0.0;
    for (int a = 0; a <= atoms; ++a) {
      const double m = 0.5 * atoms - a;
      const double w = std::norm(start[a]) * std::exp(2.0 * (m * y - m * m * tau));
      num += m * w;
      den += w;
    }
    return num / den;
  };

  std::vector<double> error(divisions.size(), 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> fine(fine_per_coarsest);
  for (int p = 0; p < paths; ++p) {
    for (auto& x : fine) x = std::sqrt(fine_dt) * normal(rng);
    double record = 0.0;
    for (int k = 0; k < fine_per_coarsest; ++k) {
      const double t = k * fine_dt;
      record += 2.0 * std::sqrt(kt) * mean_jz(std::sqrt(kt) * record, kt * t) * fine_dt + fine[k];
    }
    const qnd::Vec exact = qnd_posterior(atoms, kt * T, std::sqrt(kt) * record);
    for (std::size_t k = 0; k < divisions.size(); ++k) {
      const int steps = divisions[k];
      const int group = fine_per_coarsest / steps;
      qnd::SseStepper stepper(h, channel, T / steps, scheme);
      qnd::Vec psi = start;
      for (int s = 0; s < steps; ++s) {
        double dW = 0.0;
        for (int i = 0; i < group; ++i) dW += fine[s * group + i];
        stepper.step(psi, dW);
      }
      error[k] += (psi - exact).norm() / paths;
    }
  }
  return log_slope(T, divisions, error);
}

}  // namespace oracle
