#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "epscpmg/errors.hpp"

namespace epscpmg {

using Complex = std::complex<double>;

// Largest supported cluster: 2^12 = 4096 amplitudes.
inline constexpr int kMaxSpins = 12;

// sigma_i^z eigenvalue of basis state `state` at spin `i` (bit 0 -> +1).
inline int z_sign(unsigned state, int i) {
  return 1 - 2 * static_cast<int>((state >> i) & 1u);
}

// Coefficients of
//   H = sum_i B_i sigma_i^z
//     + sum_{i<j} J_ij (sx sx + sy sy - sz sz)
//     + (drive_amplitude / 2) sum_i (drive_axis . sigma_i)
// with hbar = 1: energies in rad/us, times in us.
struct HamiltonianTerms {
  Eigen::VectorXd onsite_fields;   // length M
  Eigen::MatrixXd pair_couplings;  // M x M, symmetric, zero diagonal
  double drive_amplitude = 0.0;
  Eigen::Vector3d drive_axis = Eigen::Vector3d::UnitY();

  static HamiltonianTerms zero(int num_spins);
  int num_spins() const { return static_cast<int>(onsite_fields.size()); }
  void validate() const;
};

// Normalized pure state of M spins.  Basis index bit i is spin i; bit value
// 0 is the sigma_z = +1 state.
class StateVector {
 public:
  explicit StateVector(int num_spins);
  StateVector(int num_spins, Eigen::VectorXcd amplitudes);

  // Product state |+y>^M with <sigma_y> = +1 on every spin.  This is the
  // prepared state of an x-axis pi/2 pulse under the rotation convention
  // R_n(theta) = exp(-i theta (n.sigma)/2): R_x(-pi/2)|+z> = |+y>.
  static StateVector plus_y_product(int num_spins);
  static StateVector basis_state(int num_spins, unsigned index);

  int num_spins() const { return num_spins_; }
  int dim() const { return static_cast<int>(amplitudes_.size()); }
  Eigen::VectorXcd& amplitudes() { return amplitudes_; }
  const Eigen::VectorXcd& amplitudes() const { return amplitudes_; }

  double norm() const { return amplitudes_.norm(); }
  void check_valid(double norm_tolerance = 1e-9) const;

 private:
  int num_spins_;
  Eigen::VectorXcd amplitudes_;
};

// Matrix-free applicator for the Hamiltonian above.  The dipolar structure
// is fixed at construction; onsite fields are swappable so one instance can
// track a piecewise-constant bath; the drive amplitude is a per-call scale
// so pulse batches with different rotation rates share the structure.
class HamiltonianOperator {
 public:
  HamiltonianOperator(const Eigen::MatrixXd& pair_couplings,
                      const Eigen::Vector3d& drive_axis);
  static HamiltonianOperator from_terms(const HamiltonianTerms& terms);

  void set_onsite_fields(const Eigen::VectorXd& fields);

  int num_spins() const { return num_spins_; }
  int dim() const { return dim_; }
  double drive_amplitude() const { return drive_amplitude_; }
  void set_drive_amplitude(double amp) { drive_amplitude_ = amp; }

  // out = H * in for a block of row-states (rows = batch entries).
  void apply(const Eigen::MatrixXcd& in, Eigen::MatrixXcd& out) const;

  // Upper bound on the spectral radius, used to pick expansion substeps.
  double norm_bound() const;

  Eigen::MatrixXcd dense() const;

 private:
  int num_spins_;
  int dim_;
  Eigen::Vector3d drive_axis_;
  double drive_amplitude_ = 0.0;

  struct Hop {
    unsigned mask;  // bits i and j
    int bit_i;
    int bit_j;
    double amplitude;  // 2 J_ij
  };
  std::vector<Hop> hops_;
  Eigen::VectorXd diag_pair_;    // -sum J_ij z_i z_j
  Eigen::VectorXd diag_onsite_;  // sum B_i z_i
  Eigen::VectorXd diag_;         // pair + onsite
  Eigen::VectorXd zsum_;         // sum_i z_i(s), for the z part of the drive
  double abs_hop_sum_ = 0.0;
  double abs_field_sum_ = 0.0;
};

// Scratch buffers for the truncated-series propagator.
struct PropagatorWorkspace {
  Eigen::MatrixXcd term;
  Eigen::MatrixXcd h_term;
};

// block <- exp(-i H dt) block, exact to ~1e-14 per substep (adaptive
// scaled Taylor series; this is the vector-applied scaling-and-squaring
// route, and the only propagation path above the eigensolver size cap).
void evolve_block(const HamiltonianOperator& op, double dt,
                  Eigen::MatrixXcd& block, PropagatorWorkspace& ws);

// Cached eigendecomposition propagator; preferred when one Hamiltonian is
// reused across many evolution intervals.
class EigenPropagator {
 public:
  explicit EigenPropagator(const HamiltonianOperator& op);
  void apply(double dt, Eigen::MatrixXcd& block) const;

 private:
  Eigen::MatrixXcd vectors_;
  Eigen::VectorXd values_;
};

// Dense 2^M x 2^M matrix of the full Hamiltonian.
Eigen::MatrixXcd build_hamiltonian(const HamiltonianTerms& terms);

// state <- exp(-i H duration) state.
StateVector evolve(const StateVector& state, const HamiltonianTerms& terms,
                   double duration);

// Global instantaneous rotation of every spin:
//   (x)_i exp(-i (angle/2) (axis . sigma_i)).
StateVector apply_rotation(const StateVector& state,
                           const Eigen::Vector3d& axis, double angle);

// (1/M) sum_i <sigma_i^y>.
double mean_sigma_y(const StateVector& state);

// Block variants used by the pulse engine (rows = batch entries).
void apply_rotation_y_block(Eigen::MatrixXcd& block,
                            const Eigen::VectorXd& angles);
Eigen::VectorXd mean_sigma_y_block(const Eigen::MatrixXcd& block,
                                   int num_spins);

}  // namespace epscpmg
