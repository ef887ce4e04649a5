#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "qnd/dynamics.hpp"
#include "qnd/squeezing.hpp"
#include "qnd/theory.hpp"

using namespace qnd;

namespace {

SimConfig removed_config(int atoms, Scheme scheme, double total_time) {
  SimConfig c;
  c.params.atoms = atoms;
  c.params.g = 0.05;
  c.params.kappa = 0.4;
  c.params.epsilon = 0.4;
  c.model = Model::cavity_removed;
  c.scheme = scheme;
  c.total_time = total_time;
  return c;
}

Vec random_state(Eigen::Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec v(dim);
  for (auto& x : v) x = cplx(n(rng), n(rng));
  return v.normalized();
}

void check_moments_close(const MomentSample& a, const MomentSample& b, double tol) {
  CHECK(a.jx == doctest::Approx(b.jx).epsilon(tol));
  CHECK(a.jy == doctest::Approx(b.jy).epsilon(tol));
  CHECK(a.jz == doctest::Approx(b.jz).epsilon(tol));
  CHECK(a.jxx == doctest::Approx(b.jxx).epsilon(tol));
  CHECK(a.jyy == doctest::Approx(b.jyy).epsilon(tol));
  CHECK(a.jzz == doctest::Approx(b.jzz).epsilon(tol));
  CHECK(a.jxy == doctest::Approx(b.jxy).epsilon(tol));
  CHECK(a.jxz == doctest::Approx(b.jxz).epsilon(tol));
  CHECK(a.jyz == doctest::Approx(b.jyz).epsilon(tol));
  CHECK(a.n == doctest::Approx(b.n).epsilon(tol));
}

}  // namespace

TEST_CASE("names round-trip") {
  for (auto s : {Scheme::euler_maruyama, Scheme::milstein, Scheme::implicit_milstein, Scheme::exact_qnd})
    CHECK(parse_scheme(to_string(s)) == s);
  CHECK(parse_model("cavity-removed") == Model::cavity_removed);
  CHECK(parse_model(to_string(Model::full)) == Model::full);
  CHECK(parse_repr("mixed_sme") == StateRepr::mixed_sme);
  CHECK_THROWS_AS(parse_scheme("rk4"), ConfigError);
}

TEST_CASE("configuration validation") {
  SimConfig c = removed_config(10, Scheme::implicit_milstein, 1.0);
  CHECK_NOTHROW(c.validate());
  c.resolution = 99;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.resolution = 1000;
  c.params.eta = 0.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.repr = StateRepr::mixed_sme;
  CHECK_NOTHROW(c.validate());
  c.model = Model::full;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  SimConfig e = removed_config(10, Scheme::exact_qnd, 1.0);
  CHECK_NOTHROW(e.validate());
  e.model = Model::full;
  CHECK_THROWS_AS(e.validate(), ConfigError);
}

TEST_CASE("time step rule") {
  SimConfig c;
  c.params.atoms = 45;
  c.params.g = 0.05;
  c.params.kappa = 0.4;
  c.params.epsilon = 0.4;
  c.total_time = 10.0;
  const auto plan = plan_steps(c);
  CHECK(plan.omega_max == doctest::Approx(5.0625));
  CHECK(plan.dt == doctest::Approx(2 * kPi / (1000 * 5.0625)));
  CHECK(plan.cutoff == 18);
  CHECK(plan.steps % plan.stride == 0);
  CHECK(plan.physical_time >= 10.0);

  SimConfig free = c;
  free.params.g = 0.0;
  CHECK(plan_steps(free).omega_max == doctest::Approx(0.4));

  SimConfig fine = c;
  fine.resolution = 2000;
  CHECK(select_timestep(fine) == doctest::Approx(0.5 * plan.dt));

  const SimConfig r = removed_config(45, Scheme::milstein, 1.0);
  const auto rp = plan_steps(r);
  CHECK(rp.kappa_tilde == doctest::Approx(1e-3));
  CHECK(rp.omega_max == doctest::Approx(45e-3));
  CHECK(rp.physical_time >= 1000.0 - 1e-9);

  SimConfig dead = c;
  dead.params.g = 0.0;
  dead.params.epsilon = 0.0;
  dead.params.kappa = 0.0;
  CHECK_THROWS_AS(plan_steps(dead), ConfigError);
}

TEST_CASE("fast moments agree with operator products") {
  std::mt19937_64 rng(11);
  for (int n : {1, 2, 7, 30}) {
    const auto space = HilbertSpace::dicke(n);
    const Vec psi = random_state(space.dim(), rng);
    check_moments_close(spin_moments(psi, space), oracle::dense_moments(psi, space), 1e-11);

    const Vec other = random_state(space.dim(), rng);
    const DenseMat rho = 0.3 * psi * psi.adjoint() + 0.7 * other * other.adjoint();
    check_moments_close(spin_moments(rho, n), oracle::dense_moments(rho, n), 1e-11);
  }
  const auto product = HilbertSpace::product(6, 5);
  const Vec psi = random_state(product.dim(), rng);
  check_moments_close(spin_moments(psi, product), oracle::dense_moments(psi, product), 1e-11);
}

TEST_CASE("closed-system limit of the SSE step") {
  const auto s = dicke_spin_ops(6);
  const Operator h = s.jx * cplx(0.7) + s.jz * s.jz * cplx(0.2);
  MeasurementChannel none{Operator::zero(h.space()), 1.0, 1.0, 0.0};
  const Vec psi = coherent_spin_state(6, 1.0, 0.4).vector();
  const double energy = h.expectation(psi).real();
  for (auto scheme : {Scheme::euler_maruyama, Scheme::milstein, Scheme::implicit_milstein}) {
    double last_drift = 0.0;
    for (double dt : {1e-2, 5e-3}) {
      const Vec next = sse_step(psi, h, none, dt, 0.0, scheme);
      CHECK(std::abs(next.norm() - 1.0) < 1e-12);
      const double drift = std::abs(h.expectation(next).real() - energy);
      CHECK(drift < 10 * dt * dt);
      if (last_drift > 0) CHECK(drift < last_drift);
      last_drift = drift;
    }
  }
}

TEST_CASE("norm preserved along trajectories") {
  ModelParams p;
  p.atoms = 6;
  p.g = 0.1;
  p.kappa = 0.5;
  p.epsilon = 0.3;
  const int cutoff = 8;
  const Operator h = build_lambda_hamiltonian(p, cutoff);
  const auto ch = cavity_channel(p, cutoff);
  for (auto scheme : {Scheme::euler_maruyama, Scheme::milstein, Scheme::implicit_milstein}) {
    SseStepper stepper(h, ch, 1e-2, scheme);
    Vec psi = with_vacuum(coherent_spin_state(p.atoms, 0.5 * kPi, 0.0), cutoff).vector();
    WienerSource w(3);
    for (int i = 0; i < 500; ++i) {
      stepper.step(psi, w.increment(1e-2));
      REQUIRE(std::abs(psi.norm() - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("implicit solve: fixed point and direct fallback agree") {
  ModelParams p;
  p.atoms = 4;
  p.g = 0.2;
  p.kappa = 4.0;
  p.epsilon = 2.0;
  const int cutoff = 10;
  const Operator h = build_lambda_hamiltonian(p, cutoff);
  const auto ch = cavity_channel(p, cutoff);
  const Vec start = with_vacuum(coherent_spin_state(p.atoms, 0.5 * kPi, 0.0), cutoff).vector();

  SseStepper small(h, ch, 1e-3, Scheme::implicit_milstein);
  Vec a = start;
  small.step(a, 0.01);
  CHECK_FALSE(small.used_direct_solve());
  CHECK(small.last_iterations() <= 50);

  // A step far beyond the contraction radius of the fixed-point map.
  const double dt = 1.0;
  SseStepper big(h, ch, dt, Scheme::implicit_milstein);
  Vec b = start;
  big.step(b, 0.3);
  CHECK(big.used_direct_solve());

  // Reference: build the same right-hand side and solve densely.
  const DenseMat l = ch.collapse().dense();
  const DenseMat drift = cplx(0, -1) * h.dense() - 0.5 * l.adjoint() * l;
  const Vec lp = l * start;
  const double ell = 2.0 * start.dot(lp).real();
  const Vec diff = lp - 0.5 * ell * start;
  const double dW = 0.3;
  Vec rhs = start + dt * 0.5 * ell * lp - dt * 0.125 * ell * ell * start + dW * diff;
  rhs += 0.5 * (dW * dW - dt) * (l * diff - 0.5 * ell * diff);
  const DenseMat system = DenseMat::Identity(drift.rows(), drift.cols()) - dt * drift;
  const Vec expected = system.partialPivLu().solve(rhs).normalized();
  CHECK((b - expected).norm() < 1e-10);
}

TEST_CASE("cavity-removed SME step") {
  const int n = 10;
  const double j = 0.5 * n;
  const double kt = 1e-3;
  SUBCASE("no detection gives deterministic dephasing") {
    DenseMat rho = coherent_spin_state(n, 0.5 * kPi, 0.0).to_density();
    const DenseMat start = rho;
    const double dt = 1.0;
    for (int i = 0; i < 500; ++i) rho = sme_step_cavity_removed(rho, n, kt, 0.0, dt, 0.37, Scheme::implicit_milstein);
    CHECK((rho.diagonal() - start.diagonal()).norm() < 1e-12);
    const double jx = spin_moments(rho, n).jx;
    CHECK(jx == doctest::Approx(j * std::exp(-0.5 * kt * 500)).epsilon(1e-3));
  }
  SUBCASE("conditional mean moves by 2 sqrt(kt) Var dW") {
    DenseMat rho = coherent_spin_state(n, 1.2, 0.3).to_density();
    const auto before = spin_moments(rho, n);
    const double var = before.jzz - before.jz * before.jz;
    const double dW = 0.013;
    rho = sme_step_cavity_removed(rho, n, kt, 1.0, 0.5, dW, Scheme::euler_maruyama);
    CHECK(spin_moments(rho, n).jz - before.jz == doctest::Approx(2 * std::sqrt(kt) * var * dW).epsilon(1e-10));
  }
  SUBCASE("trace, hermiticity and positivity along a trajectory") {
    DenseMat rho = coherent_spin_state(n, 0.5 * kPi, 0.0).to_density();
    WienerSource w(5);
    const double dt = 2 * kPi / (1000 * kt * n);
    for (int i = 0; i < 3000; ++i) {
      rho = sme_step_cavity_removed(rho, n, kt, 0.6, dt, w.increment(dt), Scheme::implicit_milstein);
      REQUIRE(std::abs(rho.trace().real() - 1.0) < 1e-10);
      REQUIRE((rho - rho.adjoint()).cwiseAbs().maxCoeff() < 1e-14);
      if (i % 500 == 0) {
        const Eigen::SelfAdjointEigenSolver<DenseMat> eig(rho);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-6);
      }
    }
  }
  SUBCASE("trace collapse aborts") {
    DenseMat rho = DenseMat::Zero(n + 1, n + 1);
    CHECK_THROWS_AS(sme_step_cavity_removed(rho, n, kt, 1.0, 1.0, 0.0, Scheme::milstein), NumericalError);
  }
}

TEST_CASE("photocurrent increments") {
  ModelParams p;
  p.atoms = 2;
  p.g = 0.05;
  p.kappa = 0.4;
  p.epsilon = 0.4;
  const auto vacuum = with_vacuum(coherent_spin_state(2, 0.5 * kPi, 0.0), 6);
  CHECK(photocurrent_increment(vacuum, cavity_channel(p, 6), 0.1, 0.0) == 0.0);

  const double kt = 2e-3;
  const auto top = coherent_spin_state(4, 0.0, 0.0);
  const auto ch = cavity_removed_channel(4, kt, 1.0);
  CHECK(photocurrent_increment(top, ch, 0.1, 0.02) == doctest::Approx(2 * std::sqrt(kt) * 2.0 * 0.1 + 0.02));
}

TEST_CASE("late photocurrent estimates the settled conditional Jz") {
  SimConfig c = removed_config(20, Scheme::implicit_milstein, 40.0);
  c.sample_stride = 0;
  const auto plan = plan_steps(c);
  int within = 0;
  const int runs = 20;
  for (int s = 0; s < runs; ++s) {
    const auto rec = run_trajectory(c, 1000 + s);
    const std::size_t half = rec.times.size() / 2;
    double sum = 0.0;
    for (std::size_t i = half + 1; i < rec.times.size(); ++i) sum += rec.current[i];
    const std::size_t count = rec.times.size() - half - 1;
    const double window = rec.times.back() - rec.times[half];
    const double estimate = sum / count / (2 * std::sqrt(plan.kappa_tilde));
    const double noise = 1.0 / (2 * std::sqrt(plan.kappa_tilde * window));
    within += std::abs(estimate - rec.moments.back().jz) < 3 * noise ? 1 : 0;
  }
  CHECK(within >= runs - 1);
}

TEST_CASE("trajectories are deterministic and well formed") {
  const SimConfig c = removed_config(12, Scheme::milstein, 0.5);
  const auto a = run_trajectory(c, 42);
  const auto b = run_trajectory(c, 42);
  REQUIRE(a.times.size() == b.times.size());
  for (std::size_t i = 0; i < a.times.size(); ++i) {
    CHECK(a.moments[i].jz == b.moments[i].jz);
    CHECK(a.current[i] == b.current[i]);
    if (i > 0) CHECK(a.times[i] > a.times[i - 1]);
  }
  const auto other = run_trajectory(c, 43);
  CHECK(other.moments.back().jz != a.moments.back().jz);

  std::ostringstream csv;
  write_trajectory_csv(a, csv);
  const std::string text = csv.str();
  CHECK(text.rfind("time,Jx,Jy,Jz,Jx2,Jy2,Jz2,JxJz_sym,n,I\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(a.times.size() + 1));
}

TEST_CASE("Wiener increments") {
  WienerSource w(123);
  const int m = 100'000;
  const double dt = 0.01;
  double sum = 0, sum_sq = 0;
  for (int i = 0; i < m; ++i) {
    const double x = w.increment(dt);
    sum += x;
    sum_sq += x * x;
  }
  CHECK(std::abs(sum / m) < 4 * std::sqrt(dt / m));
  CHECK(std::abs(sum_sq / m - dt) < 4 * dt * std::sqrt(2.0 / m));
}

TEST_CASE("empty cavity fills as the closed form") {
  SimConfig c;
  c.params.atoms = 1;
  c.params.g = 0.0;
  c.params.kappa = 0.4;
  c.params.epsilon = 0.4;
  c.total_time = 40.0;
  // The drift error is first order in dt; R = 4000 keeps it below 1e-3.
  c.resolution = 4000;
  const auto rec = run_trajectory(c, 9);
  for (std::size_t i = 0; i < rec.times.size(); i += 20) {
    const double expected = oracle::free_cavity_photons(rec.times[i], 0.4, 0.4);
    CHECK(rec.moments[i].n == doctest::Approx(expected).epsilon(2e-3).scale(1.0));
  }
  std::vector<double> n(rec.times.size());
  for (std::size_t i = 0; i < n.size(); ++i) n[i] = rec.moments[i].n;
  const auto tr = transient_time(rec.times, n, 4.0, 0.4);
  CHECK(tr.c == doctest::Approx(oracle::free_cavity_fill_constant(0.9)).epsilon(2e-3));
  CHECK(oracle::free_cavity_fill_constant(0.9) == doctest::Approx(-std::log(1 - std::sqrt(0.9))).epsilon(1e-12));
}

TEST_CASE("strong order on the driven cavity") {
  // On a coherent state the noise term is a pure phase, which renormalization
  // absorbs; every scheme converges at order one here.
  const double em = oracle::strong_order(Scheme::euler_maruyama, 60, 2024);
  const double mil = oracle::strong_order(Scheme::milstein, 60, 2024);
  const double imp = oracle::strong_order(Scheme::implicit_milstein, 60, 2024);
  MESSAGE("orders: euler ", em, ", milstein ", mil, ", implicit ", imp);
  CHECK(std::abs(em - 1.0) <= 0.2);
  CHECK(std::abs(mil - 1.0) <= 0.2);
  CHECK(std::abs(imp - 1.0) <= 0.2);
}

TEST_CASE("strong order on the QND posterior") {
  const double em = oracle::qnd_strong_order(Scheme::euler_maruyama, 60, 77);
  const double mil = oracle::qnd_strong_order(Scheme::milstein, 60, 77);
  const double imp = oracle::qnd_strong_order(Scheme::implicit_milstein, 60, 77);
  MESSAGE("orders: euler ", em, ", milstein ", mil, ", implicit ", imp);
  CHECK(std::abs(em - 0.5) <= 0.2);
  CHECK(std::abs(mil - 1.0) <= 0.2);
  CHECK(std::abs(imp - 1.0) <= 0.2);
}

TEST_CASE("QND martingale of the conditional second moment") {
  const SimConfig c = removed_config(16, Scheme::implicit_milstein, 1.0);
  const int m = 200;
  std::vector<TrajectoryRecord> recs;
  for (int s = 0; s < m; ++s) recs.push_back(run_trajectory(c, 500 + s));
  const double start = recs.front().moments.front().jzz;
  for (std::size_t t = 0; t < recs.front().times.size(); t += 40) {
    double sum = 0, sum_sq = 0;
    for (const auto& r : recs) {
      sum += r.moments[t].jzz;
      sum_sq += r.moments[t].jzz * r.moments[t].jzz;
    }
    const double mean = sum / m;
    const double se = std::sqrt(std::max(0.0, sum_sq / m - mean * mean) / (m - 1));
    CHECK(std::abs(mean - start) <= 4 * se + 1e-12);
  }
}

TEST_CASE("integrator follows the closed-form QND state on the same path") {
  const int n = 20;
  const double kt = 1e-3;
  const auto space = HilbertSpace::dicke(n);
  const Operator h = Operator::zero(space);
  const auto ch = cavity_removed_channel(n, kt, 1.0);
  const double tau_end = 0.3;
  auto error_at = [&](double dt, std::uint64_t seed) {
    SseStepper stepper(h, ch, dt, Scheme::implicit_milstein);
    Vec psi = coherent_spin_state(n, 0.5 * kPi, 0.0).vector();
    WienerSource w(seed);
    double y = 0.0;  // integrated signal, units of sqrt(kt)
    const auto steps = static_cast<long>(std::llround(tau_end / kt / dt));
    for (long k = 0; k < steps; ++k) {
      const double dW = w.increment(dt);
      const double ell = stepper.step(psi, dW);
      y += ell * dt + dW;
    }
    const Vec exact = oracle::qnd_posterior(n, tau_end, std::sqrt(kt) * y);
    return (psi - exact).norm();
  };
  const double dt = 2 * kPi / (1000 * kt * n);
  double coarse = 0, fine = 0;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    coarse += error_at(dt, s);
    fine += error_at(dt / 4, s);
  }
  CHECK(coarse / 5 < 2e-2);
  CHECK(fine < coarse);
}

TEST_CASE("exact sampler agrees with the quadrature average") {
  const int n = 45;
  const SimConfig c = removed_config(n, Scheme::exact_qnd, 0.5);
  const int m = 400;
  std::vector<TrajectoryRecord> recs;
  for (int s = 0; s < m; ++s) {
    auto r = run_trajectory(c, 77 + s);
    fill_squeezing(r);
    recs.push_back(std::move(r));
  }
  const auto summary = ensemble_average(recs);
  for (std::size_t t = 40; t < summary.times.size(); t += 80) {
    const double tau = summary.times[t] * summary.kappa_tilde;
    const double reference = oracle::qnd_average_xi2(n, tau, 2001);
    CHECK(std::abs(summary.mean_xi2[t] - reference) < 4 * summary.stderr_xi2[t]);
  }
}

TEST_CASE("exact sampler and integrator give the same ensemble") {
  const int n = 30;
  const int m = 300;
  const SimConfig exact = removed_config(n, Scheme::exact_qnd, 0.4);
  const SimConfig integ = removed_config(n, Scheme::implicit_milstein, 0.4);
  auto run = [m](const SimConfig& c, std::uint64_t base) {
    std::vector<TrajectoryRecord> recs;
    for (int s = 0; s < m; ++s) {
      auto r = run_trajectory(c, base + s);
      fill_squeezing(r);
      recs.push_back(std::move(r));
    }
    return ensemble_average(recs);
  };
  const auto a = run(exact, 1);
  const auto b = run(integ, 100'000);
  REQUIRE(a.times.size() == b.times.size());
  for (std::size_t t = 50; t < a.times.size(); t += 50) {
    CHECK(a.times[t] == doctest::Approx(b.times[t]));
    const double sigma = std::hypot(a.stderr_xi2[t], b.stderr_xi2[t]);
    CHECK(std::abs(a.mean_xi2[t] - b.mean_xi2[t]) < 4 * sigma);
    CHECK(std::abs(a.mean_var_z[t] - b.mean_var_z[t]) < 0.05 * a.mean_var_z[t]);
  }
}
