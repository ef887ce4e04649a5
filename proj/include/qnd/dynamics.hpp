#pragma once

// Conditional (homodyne) dynamics: the full atom-cavity SSE, the
// cavity-removed SSE/SME, photocurrent generation and single-trajectory
// records.

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SparseLU>

#include "qnd/operators.hpp"

namespace qnd {

enum class Model { full, cavity_removed };
enum class StateRepr { pure_sse, mixed_sme };
enum class Scheme { euler_maruyama, milstein, implicit_milstein, exact_qnd };

std::string to_string(Model model);
std::string to_string(StateRepr repr);
std::string to_string(Scheme scheme);
Model parse_model(const std::string& text);
StateRepr parse_repr(const std::string& text);
Scheme parse_scheme(const std::string& text);

/// Integration failure (NaN, trace collapse, implicit solve failure). Carries
/// the trajectory seed and the step index at which it happened.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::uint64_t seed = 0, long long step = -1)
      : std::runtime_error(what), seed_(seed), step_(step) {}
  std::uint64_t seed() const { return seed_; }
  long long step() const { return step_; }

 private:
  std::uint64_t seed_;
  long long step_;
};

struct SimConfig {
  ModelParams params;
  Model model = Model::full;
  StateRepr repr = StateRepr::pure_sse;
  Scheme scheme = Scheme::implicit_milstein;
  int resolution = 1000;     // steps per period of the fastest frequency
  double total_time = 1.0;   // units of 1/Delta (full) or 1/kappa_tilde (cavity removed)
  long long sample_stride = 0;  // 0 selects roughly 400 samples per run
  std::uint64_t seed = 0;

  void validate() const;
};

/// Quantities derived from a configuration that fix the time grid.
struct StepPlan {
  double mean_photons;  // n0
  double kappa_tilde;
  int cutoff;           // Fock cutoff (full model only)
  double omega_max;
  double dt;
  long long steps;
  long long stride;
  double physical_time;  // steps * dt, units of 1/Delta
};

/// dt = 2 pi / (R omega_max).
double select_timestep(const SimConfig& config);
StepPlan plan_steps(const SimConfig& config);

/// Homodyne channel with collapse operator sqrt(rate) * op at phase 0.
struct MeasurementChannel {
  Operator op;
  double rate;
  double efficiency = 1.0;
  double phase = 0.0;

  Operator collapse() const;
};

MeasurementChannel cavity_channel(const ModelParams& params, int cutoff);
MeasurementChannel cavity_removed_channel(int atoms, double kappa_tilde, double eta);

/// Stateful SSE integrator for a fixed (H, channel, dt, scheme); keeps
/// workspaces and the cached implicit factorization between steps.
class SseStepper {
 public:
  SseStepper(const Operator& hamiltonian, const MeasurementChannel& channel, double dt, Scheme scheme);

  /// Advances psi in place and renormalizes it. Returns <L + L^dag> evaluated
  /// on the incoming state, i.e. the photocurrent bias for this step.
  double step(Vec& psi, double dW);

  int last_iterations() const { return last_iterations_; }
  bool used_direct_solve() const { return used_direct_solve_; }
  double dt() const { return dt_; }

 private:
  void solve_direct(const Vec& rhs, Vec& out);

  SparseMat linear_drift_;  // -iH - L^dag L / 2
  SparseMat collapse_;
  double dt_;
  Scheme scheme_;
  Vec l_psi_, diff_, rhs_, work_, next_;
  std::optional<Eigen::SparseLU<Eigen::SparseMatrix<cplx>>> lu_;
  int last_iterations_ = 0;
  bool used_direct_solve_ = false;
};

/// One SSE step (normalized diffusive unraveling, efficiency 1).
Vec sse_step(const Vec& psi, const Operator& hamiltonian, const MeasurementChannel& channel, double dt,
             double dW, Scheme scheme);

/// One step of d rho = kt D[Jz] rho dt + sqrt(eta kt) H[Jz] rho dW on the
/// Dicke sector; the result is hermitized and trace-normalized.
DenseMat sme_step_cavity_removed(const DenseMat& rho, int atoms, double kappa_tilde, double eta, double dt,
                                 double dW, Scheme scheme);

/// I dt = sqrt(eta) <L + L^dag> dt + dW.
double photocurrent_increment(const QuantumState& state, const MeasurementChannel& channel, double dt,
                              double dW);

/// Collective-spin moments and photon number of one sample. Cross moments
/// are symmetrized: jxz = <Jx Jz + Jz Jx> / 2.
struct MomentSample {
  double jx = 0, jy = 0, jz = 0;
  double jxx = 0, jyy = 0, jzz = 0;
  double jxy = 0, jxz = 0, jyz = 0;
  double n = 0;
};

/// Moments of a normalized vector on a Dicke or product space.
MomentSample spin_moments(const Vec& psi, const HilbertSpace& space);
/// Moments of a normalized density matrix on the Dicke sector.
MomentSample spin_moments(const DenseMat& rho, int atoms);

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  int atoms = 0;
  double kappa_tilde = 0;
  std::vector<double> times;           // units of 1/Delta
  std::vector<MomentSample> moments;
  std::vector<double> current;         // photocurrent averaged over the preceding sample window
  std::vector<double> xi2;             // filled by fill_squeezing
};

/// Deterministic for fixed (config, seed). Initial state: CSS along +x, with
/// the cavity in vacuum for the full model.
TrajectoryRecord run_trajectory(const SimConfig& config, std::uint64_t seed);

/// Columns: time, Jx, Jy, Jz, Jx2, Jy2, Jz2, JxJz_sym, n, I.
void write_trajectory_csv(const TrajectoryRecord& record, std::ostream& out);

/// Gaussian Wiener increments from a seeded 64-bit Mersenne twister.
class WienerSource {
 public:
  explicit WienerSource(std::uint64_t seed) : engine_(seed) {}
  double increment(double dt) { return std::sqrt(dt) * normal_(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace qnd
