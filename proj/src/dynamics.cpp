#include "qnd/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "qnd/theory.hpp"

namespace qnd {

namespace {

constexpr double kImplicitTolerance = 1e-10;
constexpr int kImplicitMaxIterations = 50;
constexpr long long kTargetSamples = 400;

bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace

std::string to_string(Model model) { return model == Model::full ? "full" : "cavity-removed"; }

std::string to_string(StateRepr repr) { return repr == StateRepr::pure_sse ? "pure_sse" : "mixed_sme"; }

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::euler_maruyama: return "euler_maruyama";
    case Scheme::milstein: return "milstein";
    case Scheme::implicit_milstein: return "implicit_milstein";
    case Scheme::exact_qnd: return "exact_qnd";
  }
  return "?";
}

Model parse_model(const std::string& text) {
  if (text == "full") return Model::full;
  if (text == "cavity-removed" || text == "cavity_removed") return Model::cavity_removed;
  throw ConfigError("unknown model '" + text + "' (expected full or cavity-removed)");
}

StateRepr parse_repr(const std::string& text) {
  if (text == "pure_sse" || text == "sse") return StateRepr::pure_sse;
  if (text == "mixed_sme" || text == "sme") return StateRepr::mixed_sme;
  throw ConfigError("unknown state representation '" + text + "'");
}

Scheme parse_scheme(const std::string& text) {
  if (text == "euler_maruyama" || text == "euler") return Scheme::euler_maruyama;
  if (text == "milstein") return Scheme::milstein;
  if (text == "implicit_milstein") return Scheme::implicit_milstein;
  if (text == "exact_qnd" || text == "exact") return Scheme::exact_qnd;
  throw ConfigError("unknown scheme '" + text + "'");
}

void SimConfig::validate() const {
  params.validate();
  if (resolution < 100) throw ConfigError("resolution R must be >= 100");
  if (!(total_time > 0.0)) throw ConfigError("total time T must be positive");
  if (sample_stride < 0) throw ConfigError("sample stride must be non-negative");
  if (!(params.kappa > 0.0)) throw ConfigError("kappa must be positive");
  if (repr == StateRepr::pure_sse && params.eta != 1.0)
    throw ConfigError("pure-state SSE requires eta = 1; use mixed_sme for eta < 1");
  if (model == Model::full && repr != StateRepr::pure_sse)
    throw ConfigError("the full atom-cavity model runs as a pure-state SSE only");
  if (scheme == Scheme::exact_qnd && (model != Model::cavity_removed || repr != StateRepr::pure_sse))
    throw ConfigError("exact_qnd applies to the cavity-removed pure-state SSE only");
  if (model == Model::cavity_removed) {
    const double n0 = theory::steady_photons(params.epsilon, params.kappa);
    if (!(theory::kappa_eff(params.g, params.delta, params.kappa, n0) > 0.0))
      throw ConfigError("cavity-removed model needs a positive effective rate (g, epsilon > 0)");
  }
}

double select_timestep(const SimConfig& config) { return plan_steps(config).dt; }

StepPlan plan_steps(const SimConfig& config) {
  config.validate();
  const auto& p = config.params;
  StepPlan plan{};
  plan.mean_photons = theory::steady_photons(p.epsilon, p.kappa);
  plan.kappa_tilde = theory::kappa_eff(p.g, p.delta, p.kappa, plan.mean_photons);
  plan.cutoff = fock_cutoff(plan.mean_photons);

  double horizon = config.total_time;
  if (config.model == Model::full) {
    const double shift = p.g * p.g * p.atoms / p.delta;
    plan.omega_max = std::max({plan.mean_photons * shift, p.atoms * shift, p.kappa, p.epsilon});
  } else {
    plan.omega_max = std::max(plan.kappa_tilde * p.atoms, plan.kappa_tilde);
    horizon = config.total_time / plan.kappa_tilde;
  }
  if (!(plan.omega_max > 0.0)) throw ConfigError("maximum frequency is zero; nothing sets the time step");
  plan.dt = 2.0 * kPi / (config.resolution * plan.omega_max);

  const auto raw_steps = static_cast<long long>(std::ceil(horizon / plan.dt - 1e-9));
  plan.stride = config.sample_stride > 0 ? config.sample_stride
                                         : std::max<long long>(1, raw_steps / kTargetSamples);
  plan.steps = plan.stride * ((std::max<long long>(raw_steps, 1) + plan.stride - 1) / plan.stride);
  plan.physical_time = plan.steps * plan.dt;
  return plan;
}

Operator MeasurementChannel::collapse() const { return op * cplx(std::sqrt(rate), 0.0); }

MeasurementChannel cavity_channel(const ModelParams& params, int cutoff) {
  const auto f = fock_ops(cutoff);
  const auto spin = dicke_spin_ops(params.atoms);
  return {kron(f.c, Operator::identity(spin.jz.space())), params.kappa, params.eta, 0.0};
}

MeasurementChannel cavity_removed_channel(int atoms, double kappa_tilde, double eta) {
  if (!(kappa_tilde > 0.0)) throw ConfigError("measurement rate must be positive");
  return {dicke_spin_ops(atoms).jz, kappa_tilde, eta, 0.0};
}

SseStepper::SseStepper(const Operator& hamiltonian, const MeasurementChannel& channel, double dt,
                       Scheme scheme)
    : dt_(dt), scheme_(scheme) {
  if (!(hamiltonian.space() == channel.op.space())) throw ConfigError("H and L live on different spaces");
  if (scheme == Scheme::exact_qnd) throw ConfigError("exact_qnd is not a step scheme");
  if (channel.efficiency != 1.0) throw ConfigError("SSE steps require unit efficiency");
  collapse_ = channel.collapse().matrix();
  SparseMat ldl = collapse_.adjoint() * collapse_;
  linear_drift_ = hamiltonian.matrix() * cplx(0.0, -1.0) - ldl * cplx(0.5, 0.0);
  linear_drift_.makeCompressed();
}

double SseStepper::step(Vec& psi, double dW) {
  l_psi_.noalias() = collapse_ * psi;
  const double ell = 2.0 * psi.dot(l_psi_).real();  // <L + L^dag>

  // (L - ell/2) psi
  diff_ = l_psi_ - (0.5 * ell) * psi;

  // Expectation-dependent drift stays explicit in every scheme.
  rhs_ = psi + (dt_ * 0.5 * ell) * l_psi_ - (dt_ * 0.125 * ell * ell) * psi + dW * diff_;
  if (scheme_ == Scheme::milstein || scheme_ == Scheme::implicit_milstein) {
    work_.noalias() = collapse_ * diff_;
    work_ -= (0.5 * ell) * diff_;
    rhs_ += (0.5 * (dW * dW - dt_)) * work_;
  }

  last_iterations_ = 0;
  used_direct_solve_ = false;
  if (scheme_ != Scheme::implicit_milstein) {
    work_.noalias() = linear_drift_ * psi;
    psi = rhs_ + dt_ * work_;
  } else {
    // Solve (I - dt A) psi' = rhs by fixed-point iteration from the explicit guess.
    work_.noalias() = linear_drift_ * psi;
    next_ = rhs_ + dt_ * work_;
    bool converged = false;
    double previous_delta = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= kImplicitMaxIterations; ++it) {
      work_.noalias() = linear_drift_ * next_;
      work_ = rhs_ + dt_ * work_;
      const double delta = (work_ - next_).norm();
      next_.swap(work_);
      last_iterations_ = it;
      if (delta < kImplicitTolerance) {
        converged = true;
        break;
      }
      if (!std::isfinite(delta) || (it > 3 && delta > 0.9 * previous_delta)) break;  // stalled
      previous_delta = delta;
    }
    if (!converged) {
      solve_direct(rhs_, next_);
      used_direct_solve_ = true;
    }
    psi.swap(next_);
  }

  const double norm = psi.norm();
  if (!std::isfinite(norm) || norm == 0.0 || !all_finite(psi)) throw NumericalError("non-finite state in SSE step");
  psi /= norm;
  return ell;
}

void SseStepper::solve_direct(const Vec& rhs, Vec& out) {
  if (!lu_) {
    Eigen::SparseMatrix<cplx> system(linear_drift_.rows(), linear_drift_.cols());
    system.setIdentity();
    system = system - dt_ * Eigen::SparseMatrix<cplx>(linear_drift_);
    system.makeCompressed();
    lu_.emplace();
    lu_->compute(system);
    if (lu_->info() != Eigen::Success) throw NumericalError("implicit solve: factorization failed");
  }
  out = lu_->solve(rhs);
  if (lu_->info() != Eigen::Success || !all_finite(out)) throw NumericalError("implicit solve did not converge");
}

Vec sse_step(const Vec& psi, const Operator& hamiltonian, const MeasurementChannel& channel, double dt, double dW,
             Scheme scheme) {
  SseStepper stepper(hamiltonian, channel, dt, scheme);
  Vec out = psi;
  stepper.step(out, dW);
  return out;
}

namespace {

Eigen::VectorXd dicke_m_values(int atoms) {
  Eigen::VectorXd m(atoms + 1);
  for (int a = 0; a <= atoms; ++a) m[a] = 0.5 * atoms - a;
  return m;
}

// In-place SME step on the Dicke sector, with Jz = diag(m).
void sme_step_inplace(DenseMat& rho, const Eigen::VectorXd& m, double kappa_tilde, double eta, double dt,
                      double dW, Scheme scheme) {
  const Eigen::Index d = rho.rows();
  const double s = std::sqrt(eta * kappa_tilde);
  double mean = 0.0;
  double second = 0.0;
  for (Eigen::Index a = 0; a < d; ++a) {
    const double p = rho(a, a).real();
    mean += m[a] * p;
    second += m[a] * m[a] * p;
  }
  const double var = second - mean * mean;
  const bool milstein = scheme == Scheme::milstein || scheme == Scheme::implicit_milstein;
  const double correction = 0.5 * s * s * (dW * dW - dt);

  for (Eigen::Index b = 0; b < d; ++b) {
    for (Eigen::Index a = 0; a < d; ++a) {
      const double dm = m[a] - m[b];
      const double dephase = -0.5 * kappa_tilde * dm * dm;
      const double h = m[a] + m[b] - 2.0 * mean;
      const cplx r = rho(a, b);
      cplx next = r + s * h * dW * r;
      if (milstein) next += correction * (h * h - 4.0 * var) * r;
      if (scheme == Scheme::implicit_milstein) {
        next /= (1.0 - dephase * dt);
      } else {
        next += dephase * dt * r;
      }
      rho(a, b) = next;
    }
  }
  const DenseMat herm = 0.5 * (rho + rho.adjoint());
  rho = herm;
  const double tr = rho.trace().real();
  if (!std::isfinite(tr) || std::abs(tr) < 1e-12) throw NumericalError("trace collapse in SME step");
  rho /= tr;
  if (!rho.allFinite()) throw NumericalError("non-finite density matrix in SME step");
}

}  // namespace

DenseMat sme_step_cavity_removed(const DenseMat& rho, int atoms, double kappa_tilde, double eta, double dt,
                                 double dW, Scheme scheme) {
  if (rho.rows() != atoms + 1 || rho.cols() != atoms + 1) throw ConfigError("density matrix is not on the Dicke sector");
  if (scheme == Scheme::exact_qnd) throw ConfigError("exact_qnd is not a step scheme");
  DenseMat out = rho;
  sme_step_inplace(out, dicke_m_values(atoms), kappa_tilde, eta, dt, dW, scheme);
  return out;
}

double photocurrent_increment(const QuantumState& state, const MeasurementChannel& channel, double dt, double dW) {
  const Operator l = channel.collapse();
  const double ell = 2.0 * state.expectation(l).real();
  return std::sqrt(channel.efficiency) * ell * dt + dW;
}

namespace {

// Accumulates unnormalized Dicke moments of one block. coherence(a, b)
// returns rho_{ab} = psi_a conj(psi_b) (or the density-matrix entry).
template <typename Coherence>
void accumulate_dicke(int atoms, Coherence coherence, MomentSample& acc) {
  const double j = 0.5 * atoms;
  const double jj = j * (j + 1.0);
  auto raise = [&](int a) {  // <a-1| J+ |a>
    const double m = j - a;
    return std::sqrt(std::max(0.0, jj - m * (m + 1.0)));
  };
  cplx plus = 0.0, plus2 = 0.0, plus_z = 0.0;
  double z = 0.0, zz = 0.0, tangential = 0.0;
  for (int a = 0; a <= atoms; ++a) {
    const double m = j - a;
    const double p = coherence(a, a).real();
    z += m * p;
    zz += m * m * p;
    tangential += (jj - m * m) * p;
    if (a >= 1) {
      const cplx c1 = coherence(a, a - 1);
      const double s = raise(a);
      plus += s * c1;
      plus_z += s * (2.0 * m + 1.0) * c1;
    }
    if (a >= 2) plus2 += raise(a - 1) * raise(a) * coherence(a, a - 2);
  }
  acc.jx += plus.real();
  acc.jy += plus.imag();
  acc.jz += z;
  acc.jzz += zz;
  acc.jxx += 0.5 * plus2.real() + 0.5 * tangential;
  acc.jyy += -0.5 * plus2.real() + 0.5 * tangential;
  acc.jxy += 0.5 * plus2.imag();
  acc.jxz += 0.5 * plus_z.real();
  acc.jyz += 0.5 * plus_z.imag();
}

}  // namespace

MomentSample spin_moments(const Vec& psi, const HilbertSpace& space) {
  if (psi.size() != space.dim()) throw ConfigError("state does not match space");
  if (space.kind() == HilbertSpace::Kind::fock) throw ConfigError("no atoms in a pure Fock space");
  MomentSample acc;
  const int atoms = space.atoms();
  const Eigen::Index da = atoms + 1;
  const int blocks = space.kind() == HilbertSpace::Kind::product ? space.cutoff() : 1;
  for (int k = 0; k < blocks; ++k) {
    const cplx* block = psi.data() + k * da;
    accumulate_dicke(atoms, [block](int a, int b) { return block[a] * std::conj(block[b]); }, acc);
    if (k > 0) {
      double weight = 0.0;
      for (Eigen::Index a = 0; a < da; ++a) weight += std::norm(block[a]);
      acc.n += k * weight;
    }
  }
  return acc;
}

MomentSample spin_moments(const DenseMat& rho, int atoms) {
  if (rho.rows() != atoms + 1) throw ConfigError("density matrix is not on the Dicke sector");
  MomentSample acc;
  accumulate_dicke(atoms, [&rho](int a, int b) { return rho(a, b); }, acc);
  return acc;
}

namespace {

struct Sampler {
  const StepPlan& plan;
  TrajectoryRecord& record;
  double window_current = 0.0;

  void start(const MomentSample& m) {
    const auto samples = static_cast<std::size_t>(plan.steps / plan.stride + 1);
    record.times.reserve(samples);
    record.moments.reserve(samples);
    record.current.reserve(samples);
    record.times.push_back(0.0);
    record.moments.push_back(m);
    record.current.push_back(0.0);
  }

  bool due(long long step) const { return step % plan.stride == 0; }

  void take(long long step, const MomentSample& m) {
    record.times.push_back(step * plan.dt);
    record.moments.push_back(m);
    record.current.push_back(window_current / (plan.stride * plan.dt));
    window_current = 0.0;
  }
};

void check_moments(const MomentSample& m, std::uint64_t seed, long long step) {
  const bool ok = std::isfinite(m.jx) && std::isfinite(m.jy) && std::isfinite(m.jz) && std::isfinite(m.jxx) &&
                  std::isfinite(m.jyy) && std::isfinite(m.jzz) && std::isfinite(m.n);
  if (!ok) throw NumericalError("non-finite moments", seed, step);
}

void run_sse(const SimConfig& config, const StepPlan& plan, std::uint64_t seed, TrajectoryRecord& record) {
  const auto& p = config.params;
  const auto css = coherent_spin_state(p.atoms, 0.5 * kPi, 0.0);
  Operator hamiltonian = Operator::zero(css.space());
  const bool full = config.model == Model::full;
  MeasurementChannel channel =
      full ? cavity_channel(p, plan.cutoff) : cavity_removed_channel(p.atoms, plan.kappa_tilde, 1.0);
  HilbertSpace space = css.space();
  Vec psi = css.vector();
  double photons = plan.mean_photons;
  if (full) {
    const auto start = with_vacuum(css, plan.cutoff);
    space = start.space();
    psi = start.vector();
    hamiltonian = build_lambda_hamiltonian(p, plan.cutoff);
    photons = 0.0;
  }

  SseStepper stepper(hamiltonian, channel, plan.dt, config.scheme);
  WienerSource noise(seed);
  Sampler sampler{plan, record};

  auto moments = [&] {
    MomentSample m = spin_moments(psi, space);
    if (config.model == Model::cavity_removed) m.n = photons;
    return m;
  };
  sampler.start(moments());
  for (long long step = 1; step <= plan.steps; ++step) {
    const double dW = noise.increment(plan.dt);
    double ell = 0.0;
    try {
      ell = stepper.step(psi, dW);
    } catch (const NumericalError& e) {
      throw NumericalError(e.what(), seed, step);
    }
    sampler.window_current += ell * plan.dt + dW;
    if (sampler.due(step)) {
      const MomentSample m = moments();
      check_moments(m, seed, step);
      sampler.take(step, m);
    }
  }
}

void run_sme(const SimConfig& config, const StepPlan& plan, std::uint64_t seed, TrajectoryRecord& record) {
  const auto& p = config.params;
  const auto css = coherent_spin_state(p.atoms, 0.5 * kPi, 0.0);
  DenseMat rho = css.to_density();
  const Eigen::VectorXd m = dicke_m_values(p.atoms);
  WienerSource noise(seed);
  Sampler sampler{plan, record};
  const double gain = 2.0 * std::sqrt(p.eta * plan.kappa_tilde);

  auto moments = [&] {
    MomentSample s = spin_moments(rho, p.atoms);
    s.n = plan.mean_photons;
    return s;
  };
  sampler.start(moments());
  for (long long step = 1; step <= plan.steps; ++step) {
    const double dW = noise.increment(plan.dt);
    double mean = 0.0;
    for (int a = 0; a <= p.atoms; ++a) mean += m[a] * rho(a, a).real();
    try {
      sme_step_inplace(rho, m, plan.kappa_tilde, p.eta, plan.dt, dW, config.scheme);
    } catch (const NumericalError& e) {
      throw NumericalError(e.what(), seed, step);
    }
    sampler.window_current += gain * mean * plan.dt + dW;
    if (sampler.due(step)) {
      const MomentSample s = moments();
      check_moments(s, seed, step);
      sampler.take(step, s);
    }
  }
}

// Closed-form solution of the cavity-removed SSE (H = 0, L = sqrt(kt) Jz):
// psi_m(t) ~ psi_m(0) exp(sqrt(kt) m Y(t) - kt m^2 t), where the integrated
// photocurrent is Y(t) = 2 sqrt(kt) m* t + W(t) with m* drawn from the
// initial Jz distribution. Only the sample times need to be visited.
void run_exact(const SimConfig& config, const StepPlan& plan, std::uint64_t seed, TrajectoryRecord& record) {
  const auto& p = config.params;
  const auto css = coherent_spin_state(p.atoms, 0.5 * kPi, 0.0);
  const Vec& start = css.vector();
  const Eigen::Index dim = start.size();
  const Eigen::VectorXd m = dicke_m_values(p.atoms);
  const double rate = plan.kappa_tilde;
  const double root = std::sqrt(rate);

  Eigen::VectorXd log_mag(dim);
  Eigen::VectorXd probs(dim);
  Vec phase(dim);
  for (Eigen::Index a = 0; a < dim; ++a) {
    const double mag = std::abs(start[a]);
    probs[a] = mag * mag;
    log_mag[a] = mag > 0.0 ? std::log(mag) : -std::numeric_limits<double>::infinity();
    phase[a] = mag > 0.0 ? start[a] / mag : cplx(0.0);
  }

  WienerSource noise(seed);
  std::discrete_distribution<Eigen::Index> pick(probs.data(), probs.data() + dim);
  const double outcome = m[pick(noise.engine())];

  Vec psi(dim);
  auto evaluate = [&](double t, double y) {
    double top = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd lw(dim);
    for (Eigen::Index a = 0; a < dim; ++a) {
      lw[a] = log_mag[a] + root * m[a] * y - rate * m[a] * m[a] * t;
      top = std::max(top, lw[a]);
    }
    for (Eigen::Index a = 0; a < dim; ++a) psi[a] = std::exp(lw[a] - top) * phase[a];
    psi /= psi.norm();
    MomentSample s = spin_moments(psi, css.space());
    s.n = plan.mean_photons;
    return s;
  };

  Sampler sampler{plan, record};
  sampler.start(evaluate(0.0, 0.0));
  const double window = plan.stride * plan.dt;
  double y = 0.0;
  for (long long step = plan.stride; step <= plan.steps; step += plan.stride) {
    const double dy = 2.0 * root * outcome * window + noise.increment(window);
    y += dy;
    sampler.window_current = dy;
    const MomentSample s = evaluate(step * plan.dt, y);
    check_moments(s, seed, step);
    sampler.take(step, s);
  }
}

}  // namespace

TrajectoryRecord run_trajectory(const SimConfig& config, std::uint64_t seed) {
  const StepPlan plan = plan_steps(config);
  TrajectoryRecord record;
  record.seed = seed;
  record.atoms = config.params.atoms;
  record.kappa_tilde = plan.kappa_tilde;
  if (config.scheme == Scheme::exact_qnd) {
    run_exact(config, plan, seed, record);
  } else if (config.repr == StateRepr::mixed_sme) {
    run_sme(config, plan, seed, record);
  } else {
    run_sse(config, plan, seed, record);
  }
  return record;
}

void write_trajectory_csv(const TrajectoryRecord& record, std::ostream& out) {
  out << "time,Jx,Jy,Jz,Jx2,Jy2,Jz2,JxJz_sym,n,I\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < record.times.size(); ++i) {
    const auto& m = record.moments[i];
    out << record.times[i] << ',' << m.jx << ',' << m.jy << ',' << m.jz << ',' << m.jxx << ',' << m.jyy << ','
        << m.jzz << ',' << m.jxz << ',' << m.n << ',' << record.current[i] << '\n';
  }
}

}  // namespace qnd
