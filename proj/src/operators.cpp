#include "qnd/operators.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace qnd {

namespace {

using Triplet = Eigen::Triplet<cplx>;

SparseMat from_triplets(Eigen::Index dim, const std::vector<Triplet>& entries) {
  SparseMat m(dim, dim);
  m.setFromTriplets(entries.begin(), entries.end());
  m.makeCompressed();
  return m;
}

void require_same_space(const Operator& a, const Operator& b) {
  if (!(a.space() == b.space())) throw ConfigError("operators act on different Hilbert spaces");
}

}  // namespace

HilbertSpace HilbertSpace::dicke(int atoms) {
  if (atoms < 1) throw ConfigError("Dicke sector needs N >= 1, got " + std::to_string(atoms));
  return HilbertSpace(Kind::dicke, atoms, 0);
}

HilbertSpace HilbertSpace::fock(int cutoff) {
  if (cutoff < 2) throw ConfigError("Fock cutoff must be >= 2, got " + std::to_string(cutoff));
  return HilbertSpace(Kind::fock, 0, cutoff);
}

HilbertSpace HilbertSpace::product(int cutoff, int atoms) {
  if (atoms < 1) throw ConfigError("Dicke sector needs N >= 1, got " + std::to_string(atoms));
  if (cutoff < 2) throw ConfigError("Fock cutoff must be >= 2, got " + std::to_string(cutoff));
  return HilbertSpace(Kind::product, atoms, cutoff);
}

Eigen::Index HilbertSpace::dim() const {
  switch (kind_) {
    case Kind::dicke: return atoms_ + 1;
    case Kind::fock: return cutoff_;
    case Kind::product: return static_cast<Eigen::Index>(cutoff_) * (atoms_ + 1);
  }
  return 0;
}

std::string to_string(HilbertSpace::Kind kind) {
  switch (kind) {
    case HilbertSpace::Kind::dicke: return "dicke";
    case HilbertSpace::Kind::fock: return "fock";
    case HilbertSpace::Kind::product: return "product";
  }
  return "?";
}

Operator::Operator(HilbertSpace space, SparseMat matrix) : space_(space), matrix_(std::move(matrix)) {
  if (matrix_.rows() != space_.dim() || matrix_.cols() != space_.dim())
    throw ConfigError("operator matrix does not match Hilbert space dimension");
  matrix_.makeCompressed();
}

Operator Operator::zero(const HilbertSpace& space) {
  return Operator(space, SparseMat(space.dim(), space.dim()));
}

Operator Operator::identity(const HilbertSpace& space) {
  SparseMat m(space.dim(), space.dim());
  m.setIdentity();
  return Operator(space, std::move(m));
}

Operator Operator::diagonal(const HilbertSpace& space, const Eigen::VectorXd& entries) {
  if (entries.size() != space.dim()) throw ConfigError("diagonal length does not match dimension");
  std::vector<Triplet> t;
  t.reserve(entries.size());
  for (Eigen::Index i = 0; i < entries.size(); ++i)
    if (entries[i] != 0.0) t.emplace_back(i, i, entries[i]);
  return Operator(space, from_triplets(space.dim(), t));
}

Operator Operator::adjoint() const { return Operator(space_, SparseMat(matrix_.adjoint())); }

bool Operator::is_hermitian(double tol) const {
  SparseMat diff = matrix_ - SparseMat(matrix_.adjoint());
  for (Eigen::Index k = 0; k < diff.outerSize(); ++k)
    for (SparseMat::InnerIterator it(diff, k); it; ++it)
      if (std::abs(it.value()) > tol) return false;
  return true;
}

double Operator::max_abs() const {
  double best = 0.0;
  for (Eigen::Index k = 0; k < matrix_.outerSize(); ++k)
    for (SparseMat::InnerIterator it(matrix_, k); it; ++it) best = std::max(best, std::abs(it.value()));
  return best;
}

cplx Operator::expectation(const Vec& psi) const { return psi.dot(matrix_ * psi); }

cplx Operator::expectation(const DenseMat& rho) const {
  // Tr(A rho) = sum_ij A_ij rho_ji
  cplx acc = 0.0;
  for (Eigen::Index i = 0; i < matrix_.outerSize(); ++i)
    for (SparseMat::InnerIterator it(matrix_, i); it; ++it) acc += it.value() * rho(it.col(), i);
  return acc;
}

Operator Operator::operator+(const Operator& rhs) const {
  require_same_space(*this, rhs);
  return Operator(space_, SparseMat(matrix_ + rhs.matrix_));
}

Operator Operator::operator-(const Operator& rhs) const {
  require_same_space(*this, rhs);
  return Operator(space_, SparseMat(matrix_ - rhs.matrix_));
}

Operator Operator::operator*(const Operator& rhs) const {
  require_same_space(*this, rhs);
  return Operator(space_, SparseMat(matrix_ * rhs.matrix_));
}

Operator Operator::operator*(cplx scale) const { return Operator(space_, SparseMat(matrix_ * scale)); }

Operator commutator(const Operator& a, const Operator& b) { return a * b - b * a; }

Operator kron(const Operator& fock_op, const Operator& dicke_op) {
  if (fock_op.space().kind() != HilbertSpace::Kind::fock ||
      dicke_op.space().kind() != HilbertSpace::Kind::dicke)
    throw ConfigError("kron expects a Fock operator and a Dicke operator");
  const auto space = HilbertSpace::product(fock_op.space().cutoff(), dicke_op.space().atoms());
  const Eigen::Index da = dicke_op.dim();
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(fock_op.matrix().nonZeros() * dicke_op.matrix().nonZeros()));
  const SparseMat& f = fock_op.matrix();
  const SparseMat& d = dicke_op.matrix();
  for (Eigen::Index i = 0; i < f.outerSize(); ++i)
    for (SparseMat::InnerIterator fi(f, i); fi; ++fi)
      for (Eigen::Index j = 0; j < d.outerSize(); ++j)
        for (SparseMat::InnerIterator dj(d, j); dj; ++dj)
          t.emplace_back(fi.row() * da + dj.row(), fi.col() * da + dj.col(), fi.value() * dj.value());
  return Operator(space, from_triplets(space.dim(), t));
}

SpinOperators dicke_spin_ops(int atoms) {
  const auto space = HilbertSpace::dicke(atoms);
  const double j = space.spin();
  const Eigen::Index dim = space.dim();

  std::vector<Triplet> plus;
  Eigen::VectorXd mz(dim);
  for (Eigen::Index a = 0; a < dim; ++a) {
    const double m = j - static_cast<double>(a);
    mz[a] = m;
    // J+ |m> = sqrt(J(J+1) - m(m+1)) |m+1>, and |m+1> sits at index a-1.
    if (a > 0) plus.emplace_back(a - 1, a, std::sqrt(j * (j + 1.0) - m * (m + 1.0)));
  }
  Operator jplus(space, from_triplets(dim, plus));
  Operator jminus = jplus.adjoint();
  Operator jz = Operator::diagonal(space, mz);
  Operator jx = (jplus + jminus) * cplx(0.5, 0.0);
  Operator jy = (jplus - jminus) * cplx(0.0, -0.5);
  Operator j2 = Operator::identity(space) * cplx(j * (j + 1.0), 0.0);
  return {std::move(jx), std::move(jy), std::move(jz), std::move(jplus), std::move(jminus), std::move(j2)};
}

FockOperators fock_ops(int cutoff) {
  const auto space = HilbertSpace::fock(cutoff);
  std::vector<Triplet> lower;
  Eigen::VectorXd count(cutoff);
  for (int k = 0; k < cutoff; ++k) {
    count[k] = k;
    if (k > 0) lower.emplace_back(k - 1, k, std::sqrt(static_cast<double>(k)));
  }
  Operator c(space, from_triplets(cutoff, lower));
  Operator cdag = c.adjoint();
  return {std::move(c), std::move(cdag), Operator::diagonal(space, count)};
}

int fock_cutoff(double mean_photons) {
  if (!(mean_photons >= 0.0)) throw ConfigError("mean photon number must be non-negative");
  return static_cast<int>(std::floor(3.0 * mean_photons + 6.0));
}

QuantumState::QuantumState(HilbertSpace space, Vec psi) : space_(space), repr_(std::move(psi)) {
  if (std::get<Vec>(repr_).size() != space_.dim()) throw ConfigError("state vector has wrong dimension");
}

QuantumState::QuantumState(HilbertSpace space, DenseMat rho) : space_(space), repr_(std::move(rho)) {
  const auto& m = std::get<DenseMat>(repr_);
  if (m.rows() != space_.dim() || m.cols() != space_.dim())
    throw ConfigError("density matrix has wrong dimension");
}

const Vec& QuantumState::vector() const {
  if (!is_pure()) throw std::logic_error("state is mixed");
  return std::get<Vec>(repr_);
}

const DenseMat& QuantumState::density() const {
  if (is_pure()) throw std::logic_error("state is pure");
  return std::get<DenseMat>(repr_);
}

DenseMat QuantumState::to_density() const {
  if (is_pure()) {
    const Vec& v = std::get<Vec>(repr_);
    return v * v.adjoint();
  }
  return std::get<DenseMat>(repr_);
}

double QuantumState::norm() const {
  if (is_pure()) return std::get<Vec>(repr_).norm();
  return std::get<DenseMat>(repr_).trace().real();
}

cplx QuantumState::expectation(const Operator& op) const {
  if (!(op.space() == space_)) throw ConfigError("operator and state live on different spaces");
  return is_pure() ? op.expectation(std::get<Vec>(repr_)) : op.expectation(std::get<DenseMat>(repr_));
}

QuantumState coherent_spin_state(int atoms, double theta, double phi) {
  const auto space = HilbertSpace::dicke(atoms);
  const double c = std::cos(0.5 * theta);
  const double s = std::sin(0.5 * theta);
  Vec psi(space.dim());
  for (int k = 0; k <= atoms; ++k) {
    // k = J - m spins flipped down: amplitude sqrt(C(N,k)) c^(N-k) s^k e^{i k phi}.
    const double log_binom = std::lgamma(atoms + 1.0) - std::lgamma(k + 1.0) - std::lgamma(atoms - k + 1.0);
    // Summed in log space; the binomial alone overflows for large N.
    double log_mag = 0.5 * log_binom;
    if (atoms - k > 0) log_mag += (atoms - k) * std::log(std::abs(c));
    if (k > 0) log_mag += k * std::log(std::abs(s));
    double sign = 1.0;
    if (c < 0.0 && (atoms - k) % 2 == 1) sign = -sign;
    if (s < 0.0 && k % 2 == 1) sign = -sign;
    psi[k] = sign * std::polar(std::exp(log_mag), static_cast<double>(k) * phi);
  }
  psi.normalize();
  return QuantumState(space, std::move(psi));
}

QuantumState with_vacuum(const QuantumState& atomic, int cutoff) {
  if (atomic.space().kind() != HilbertSpace::Kind::dicke || !atomic.is_pure())
    throw ConfigError("with_vacuum expects a pure Dicke-sector state");
  const auto space = HilbertSpace::product(cutoff, atomic.space().atoms());
  Vec psi = Vec::Zero(space.dim());
  psi.head(atomic.space().dim()) = atomic.vector();
  return QuantumState(space, std::move(psi));
}

void ModelParams::validate() const {
  if (atoms < 1) throw ConfigError("N must be >= 1");
  if (!(g >= 0.0)) throw ConfigError("g must be non-negative");
  if (!(delta > 0.0)) throw ConfigError("delta must be positive");
  if (!(kappa >= 0.0)) throw ConfigError("kappa must be non-negative");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");
  if (homodyne_phase != 0.0) throw ConfigError("only homodyne phase 0 is supported");
  if (drive_detuning != 0.0) throw ConfigError("only resonant driving (zero drive detuning) is supported");
}

namespace {

Operator drive_term(const ModelParams& params, int cutoff) {
  const auto f = fock_ops(cutoff);
  const auto spin = dicke_spin_ops(params.atoms);
  const auto id = Operator::identity(spin.jz.space());
  return kron(f.c + f.cdag, id) * cplx(params.epsilon, 0.0);
}

}  // namespace

Operator build_lambda_hamiltonian(const ModelParams& params, int cutoff) {
  params.validate();
  const auto f = fock_ops(cutoff);
  const auto spin = dicke_spin_ops(params.atoms);
  const double coupling = 2.0 * params.g * params.g / params.delta;
  return kron(f.n, spin.jz) * cplx(coupling, 0.0) + drive_term(params, cutoff);
}

Operator build_v_hamiltonian(const ModelParams& params, int cutoff) {
  params.validate();
  const auto f = fock_ops(cutoff);
  const auto spin = dicke_spin_ops(params.atoms);
  const auto id = Operator::identity(spin.jz.space());
  const double g2 = params.g * params.g / params.delta;
  return kron(f.n, spin.jz) * cplx(-g2, 0.0) + kron(f.n, id) * cplx(0.5 * g2 * params.atoms, 0.0) +
         drive_term(params, cutoff);
}

ThreeLevelCoefficients effective_coefficients_from_three_level(double g_up, double g_down,
                                                              double delta_up, double delta_down) {
  if (delta_up == 0.0 || delta_down == 0.0) throw ConfigError("detunings must be non-zero");
  const double up = g_up * g_up / (2.0 * delta_up);
  const double down = g_down * g_down / (2.0 * delta_down);

  // Balanced when Delta_down = -Delta_up |g_down|^2 / |g_up|^2; compared in
  // cross-multiplied form so g_up = 0 is handled.
  const double lhs = delta_down * g_up * g_up;
  const double rhs = -delta_up * g_down * g_down;
  const double scale = std::max(std::abs(lhs), std::abs(rhs));
  const bool balanced = g_up != 0.0 && scale > 0.0 && std::abs(lhs - rhs) <= 1e-9 * scale;

  bool far = true;
  if (g_up != 0.0) far = far && std::abs(delta_up) >= 10.0 * std::abs(g_up);
  if (g_down != 0.0) far = far && std::abs(delta_down) >= 10.0 * std::abs(g_down);

  return {2.0 * (up - down), balanced ? 0.0 : up + down, balanced, far};
}

}  // namespace qnd
