#pragma once

// Hilbert spaces, collective-spin and bosonic operators, initial states and
// the dispersive atom-cavity Hamiltonians.
//
// Basis conventions (fixed, so matrix fixtures are reproducible):
//   * Dicke sector of N atoms: index a = 0..N holds |J, m = J - a>, i.e. m
//     descending with m = J first.
//   * Fock space with cutoff d: index k = 0..d-1 holds |k>, photon number
//     ascending.
//   * Product space Fock (x) Dicke: index k * (N + 1) + a.
// Frequencies are expressed in units of the detuning Delta (Delta = 1).

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace qnd {

using cplx = std::complex<double>;
using SparseMat = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
using Vec = Eigen::VectorXcd;
using DenseMat = Eigen::MatrixXcd;

inline constexpr double kPi = 3.14159265358979323846;

/// Raised for invalid physical or numerical inputs (bad N, cutoffs, rates).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class HilbertSpace {
 public:
  enum class Kind { dicke, fock, product };

  static HilbertSpace dicke(int atoms);
  static HilbertSpace fock(int cutoff);
  static HilbertSpace product(int cutoff, int atoms);

  Kind kind() const { return kind_; }
  int atoms() const { return atoms_; }
  int cutoff() const { return cutoff_; }
  /// Total spin J = N/2 of the maximal Dicke sector (0 for a pure Fock space).
  double spin() const { return 0.5 * atoms_; }
  Eigen::Index dim() const;
  /// Dimension of the atomic factor (N + 1), 1 for a pure Fock space.
  Eigen::Index atomic_dim() const { return kind_ == Kind::fock ? 1 : atoms_ + 1; }

  bool operator==(const HilbertSpace&) const = default;

 private:
  HilbertSpace(Kind kind, int atoms, int cutoff) : kind_(kind), atoms_(atoms), cutoff_(cutoff) {}

  Kind kind_;
  int atoms_;
  int cutoff_;
};

std::string to_string(HilbertSpace::Kind kind);

/// Complex matrix on a Hilbert space, stored sparse (row-major).
class Operator {
 public:
  Operator(HilbertSpace space, SparseMat matrix);

  static Operator zero(const HilbertSpace& space);
  static Operator identity(const HilbertSpace& space);
  static Operator diagonal(const HilbertSpace& space, const Eigen::VectorXd& entries);

  const HilbertSpace& space() const { return space_; }
  const SparseMat& matrix() const { return matrix_; }
  Eigen::Index dim() const { return space_.dim(); }

  cplx entry(Eigen::Index row, Eigen::Index col) const { return matrix_.coeff(row, col); }
  DenseMat dense() const { return DenseMat(matrix_); }
  Operator adjoint() const;
  bool is_hermitian(double tol = 1e-12) const;
  /// Largest elementwise modulus.
  double max_abs() const;

  Vec apply(const Vec& psi) const { return matrix_ * psi; }
  cplx expectation(const Vec& psi) const;
  cplx expectation(const DenseMat& rho) const;

  Operator operator+(const Operator& rhs) const;
  Operator operator-(const Operator& rhs) const;
  Operator operator*(const Operator& rhs) const;
  Operator operator*(cplx scale) const;

 private:
  HilbertSpace space_;
  SparseMat matrix_;
};

inline Operator operator*(cplx scale, const Operator& op) { return op * scale; }

Operator commutator(const Operator& a, const Operator& b);

/// Lifts a Fock operator and a Dicke operator onto the product space.
Operator kron(const Operator& fock_op, const Operator& dicke_op);

struct SpinOperators {
  Operator jx, jy, jz, jplus, jminus, j2;
};

/// Collective spin operators on the (N+1)-dimensional maximal Dicke sector.
SpinOperators dicke_spin_ops(int atoms);

struct FockOperators {
  Operator c, cdag, n;
};

/// Truncated bosonic annihilation, creation and number operators.
FockOperators fock_ops(int cutoff);

/// Fock cutoff for an expected photon number: floor(3 n0 + 6).
int fock_cutoff(double mean_photons);

class QuantumState {
 public:
  explicit QuantumState(HilbertSpace space, Vec psi);
  explicit QuantumState(HilbertSpace space, DenseMat rho);

  const HilbertSpace& space() const { return space_; }
  bool is_pure() const { return std::holds_alternative<Vec>(repr_); }
  const Vec& vector() const;
  const DenseMat& density() const;
  /// Density matrix, built from the vector for a pure state.
  DenseMat to_density() const;
  /// Norm of the vector, or trace of the density matrix.
  double norm() const;
  cplx expectation(const Operator& op) const;

 private:
  HilbertSpace space_;
  std::variant<Vec, DenseMat> repr_;
};

/// Spin-coherent state |theta, phi> with J = N/2. The m = J amplitude is real
/// and non-negative.
QuantumState coherent_spin_state(int atoms, double theta, double phi);

/// Fock vacuum tensored with a Dicke-sector state.
QuantumState with_vacuum(const QuantumState& atomic, int cutoff);

struct ModelParams {
  int atoms = 1;
  double g = 0.0;
  double delta = 1.0;
  double kappa = 0.0;
  double epsilon = 0.0;
  double eta = 1.0;
  double homodyne_phase = 0.0;
  double drive_detuning = 0.0;

  /// Throws ConfigError on negative rates, eta outside [0, 1], N < 1, or a
  /// non-zero homodyne phase or drive detuning (unsupported).
  void validate() const;
};

/// Lambda configuration: H = (2 g^2 / Delta) n (x) Jz + epsilon (c + c^dag) (x) I.
Operator build_lambda_hamiltonian(const ModelParams& params, int cutoff);

/// V configuration: H = -(g^2/Delta) n (x) Jz + (g^2 N / 2 Delta) n (x) I
/// plus the same drive term.
Operator build_v_hamiltonian(const ModelParams& params, int cutoff);

struct ThreeLevelCoefficients {
  double sz_coefficient;     // multiplies c^dag c s_z
  double shift_coefficient;  // multiplies c^dag c (excited-state part omitted)
  bool balanced;             // shift coefficient vanishes
  bool far_detuned;          // |Delta_j| >= 10 |g_j| for every coupled leg
};

/// Coefficients of the time-averaged effective Hamiltonian after adiabatic
/// elimination of the excited level.
ThreeLevelCoefficients effective_coefficients_from_three_level(double g_up, double g_down,
                                                              double delta_up, double delta_down);

}  // namespace qnd
