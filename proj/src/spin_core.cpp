#include "epscpmg/spin_core.hpp"

#include <cmath>

namespace epscpmg {

namespace {

constexpr Complex kImag{0.0, 1.0};

void check_spin_count(int num_spins) {
  if (num_spins < 1) throw ContractError("spin count must be >= 1");
  if (num_spins > kMaxSpins) {
    throw CapacityError("spin count " + std::to_string(num_spins) +
                        " exceeds the capacity limit of " +
                        std::to_string(kMaxSpins));
  }
}

}  // namespace

HamiltonianTerms HamiltonianTerms::zero(int num_spins) {
  check_spin_count(num_spins);
  HamiltonianTerms t;
  t.onsite_fields = Eigen::VectorXd::Zero(num_spins);
  t.pair_couplings = Eigen::MatrixXd::Zero(num_spins, num_spins);
  return t;
}

void HamiltonianTerms::validate() const {
  const int m = num_spins();
  check_spin_count(m);
  if (pair_couplings.rows() != m || pair_couplings.cols() != m) {
    throw ContractError("pair_couplings must be M x M");
  }
  if ((pair_couplings - pair_couplings.transpose()).cwiseAbs().maxCoeff() >
      1e-12) {
    throw ContractError("pair_couplings must be symmetric");
  }
  if (pair_couplings.diagonal().cwiseAbs().maxCoeff() > 0.0) {
    throw ContractError("pair_couplings must have zero diagonal");
  }
  if (drive_amplitude != 0.0 &&
      std::abs(drive_axis.norm() - 1.0) > 1e-9) {
    throw ContractError("drive_axis must be a unit vector");
  }
  if (!onsite_fields.allFinite() || !pair_couplings.allFinite()) {
    throw NumericalError("non-finite Hamiltonian coefficients");
  }
}

StateVector::StateVector(int num_spins) : num_spins_(num_spins) {
  check_spin_count(num_spins);
  amplitudes_ = Eigen::VectorXcd::Zero(1 << num_spins);
  amplitudes_[0] = 1.0;
}

StateVector::StateVector(int num_spins, Eigen::VectorXcd amplitudes)
    : num_spins_(num_spins), amplitudes_(std::move(amplitudes)) {
  check_spin_count(num_spins);
  if (amplitudes_.size() != (1 << num_spins)) {
    throw ContractError("state length must be 2^M");
  }
}

StateVector StateVector::plus_y_product(int num_spins) {
  check_spin_count(num_spins);
  const int dim = 1 << num_spins;
  Eigen::VectorXcd amps(dim);
  // |+y> = (|0> + i |1>)/sqrt(2) per spin; the product amplitude picks up a
  // factor i per set bit.
  const double scale = std::pow(std::sqrt(0.5), num_spins);
  for (int s = 0; s < dim; ++s) {
    const int bits = __builtin_popcount(static_cast<unsigned>(s));
    Complex phase{1.0, 0.0};
    switch (bits & 3) {
      case 0: phase = {1.0, 0.0}; break;
      case 1: phase = {0.0, 1.0}; break;
      case 2: phase = {-1.0, 0.0}; break;
      case 3: phase = {0.0, -1.0}; break;
    }
    amps[s] = scale * phase;
  }
  return StateVector(num_spins, std::move(amps));
}

StateVector StateVector::basis_state(int num_spins, unsigned index) {
  check_spin_count(num_spins);
  const unsigned dim = 1u << num_spins;
  if (index >= dim) throw ContractError("basis index out of range");
  Eigen::VectorXcd amps = Eigen::VectorXcd::Zero(dim);
  amps[index] = 1.0;
  return StateVector(num_spins, std::move(amps));
}

void StateVector::check_valid(double norm_tolerance) const {
  if (!amplitudes_.allFinite()) {
    throw NumericalError("state amplitudes are not finite");
  }
  if (std::abs(amplitudes_.squaredNorm() - 1.0) > norm_tolerance) {
    throw NumericalError("state norm drifted beyond tolerance");
  }
}

// ---------------------------------------------------------------------------
// HamiltonianOperator
// ---------------------------------------------------------------------------

HamiltonianOperator::HamiltonianOperator(const Eigen::MatrixXd& pair_couplings,
                                         const Eigen::Vector3d& drive_axis)
    : num_spins_(static_cast<int>(pair_couplings.rows())),
      drive_axis_(drive_axis) {
  check_spin_count(num_spins_);
  dim_ = 1 << num_spins_;

  diag_pair_ = Eigen::VectorXd::Zero(dim_);
  for (int i = 0; i < num_spins_; ++i) {
    for (int j = i + 1; j < num_spins_; ++j) {
      const double coupling = pair_couplings(i, j);
      if (coupling == 0.0) continue;
      hops_.push_back({(1u << i) | (1u << j), i, j, 2.0 * coupling});
      abs_hop_sum_ += 2.0 * std::abs(coupling);
      for (int s = 0; s < dim_; ++s) {
        diag_pair_[s] -=
            coupling * z_sign(static_cast<unsigned>(s), i) *
            z_sign(static_cast<unsigned>(s), j);
      }
    }
  }

  zsum_ = Eigen::VectorXd::Zero(dim_);
  for (int s = 0; s < dim_; ++s) {
    for (int i = 0; i < num_spins_; ++i) {
      zsum_[s] += z_sign(static_cast<unsigned>(s), i);
    }
  }

  diag_onsite_ = Eigen::VectorXd::Zero(dim_);
  diag_ = diag_pair_;
}

HamiltonianOperator HamiltonianOperator::from_terms(
    const HamiltonianTerms& terms) {
  terms.validate();
  HamiltonianOperator op(terms.pair_couplings, terms.drive_axis);
  op.set_onsite_fields(terms.onsite_fields);
  op.set_drive_amplitude(terms.drive_amplitude);
  return op;
}

void HamiltonianOperator::set_onsite_fields(const Eigen::VectorXd& fields) {
  if (fields.size() != num_spins_) {
    throw ContractError("onsite field count mismatch");
  }
  diag_onsite_.setZero();
  for (int i = 0; i < num_spins_; ++i) {
    const double b = fields[i];
    if (b == 0.0) continue;
    const unsigned mask = 1u << i;
    for (int s = 0; s < dim_; ++s) {
      diag_onsite_[s] += (s & mask) ? -b : b;
    }
  }
  diag_ = diag_pair_ + diag_onsite_;
  abs_field_sum_ = fields.cwiseAbs().sum();
}

void HamiltonianOperator::apply(const Eigen::MatrixXcd& in,
                                Eigen::MatrixXcd& out) const {
  out.resize(in.rows(), in.cols());
  const double half_amp = 0.5 * drive_amplitude_;
  const double az = drive_axis_.z();
  if (half_amp != 0.0 && az != 0.0) {
    for (int s = 0; s < dim_; ++s) {
      out.col(s) = (diag_[s] + half_amp * az * zsum_[s]) * in.col(s);
    }
  } else {
    for (int s = 0; s < dim_; ++s) {
      out.col(s) = diag_[s] * in.col(s);
    }
  }
  for (const Hop& hop : hops_) {
    for (int s = 0; s < dim_; ++s) {
      const unsigned u = static_cast<unsigned>(s);
      if (((u >> hop.bit_i) ^ (u >> hop.bit_j)) & 1u) {
        out.col(s ^ static_cast<int>(hop.mask)) += hop.amplitude * in.col(s);
      }
    }
  }
  if (half_amp != 0.0) {
    // Transverse drive: <1|(ax sx + ay sy)|0> = ax + i ay.
    const Complex up = half_amp * Complex(drive_axis_.x(), drive_axis_.y());
    const Complex down = std::conj(up);
    if (up != Complex(0.0, 0.0)) {
      for (int i = 0; i < num_spins_; ++i) {
        const unsigned mask = 1u << i;
        for (int s = 0; s < dim_; ++s) {
          if (static_cast<unsigned>(s) & mask) continue;
          const int t = s | static_cast<int>(mask);
          out.col(t) += up * in.col(s);
          out.col(s) += down * in.col(t);
        }
      }
    }
  }
}

double HamiltonianOperator::norm_bound() const {
  double bound = diag_.cwiseAbs().maxCoeff() + abs_hop_sum_;
  if (drive_amplitude_ != 0.0) {
    bound += 0.5 * std::abs(drive_amplitude_) *
             (std::abs(drive_axis_.z()) * num_spins_ +
              num_spins_ * std::hypot(drive_axis_.x(), drive_axis_.y()));
  }
  return bound;
}

Eigen::MatrixXcd HamiltonianOperator::dense() const {
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim_, dim_);
  const double half_amp = 0.5 * drive_amplitude_;
  const double az = drive_axis_.z();
  for (int s = 0; s < dim_; ++s) {
    h(s, s) = diag_[s] + half_amp * az * zsum_[s];
  }
  for (const Hop& hop : hops_) {
    for (int s = 0; s < dim_; ++s) {
      const unsigned u = static_cast<unsigned>(s);
      if (((u >> hop.bit_i) ^ (u >> hop.bit_j)) & 1u) {
        h(s ^ static_cast<int>(hop.mask), s) += hop.amplitude;
      }
    }
  }
  if (half_amp != 0.0) {
    const Complex up = half_amp * Complex(drive_axis_.x(), drive_axis_.y());
    for (int i = 0; i < num_spins_; ++i) {
      const unsigned mask = 1u << i;
      for (int s = 0; s < dim_; ++s) {
        if (static_cast<unsigned>(s) & mask) continue;
        const int t = s | static_cast<int>(mask);
        h(t, s) += up;
        h(s, t) += std::conj(up);
      }
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Propagation
// ---------------------------------------------------------------------------

void evolve_block(const HamiltonianOperator& op, double dt,
                  Eigen::MatrixXcd& block, PropagatorWorkspace& ws) {
  if (dt < 0.0) throw ContractError("evolution duration must be >= 0");
  if (dt == 0.0) return;
  const double theta = op.norm_bound() * dt;
  const int substeps = std::max(1, static_cast<int>(std::ceil(theta / 2.0)));
  const double step = dt / substeps;
  constexpr int kMaxTerms = 40;
  for (int sub = 0; sub < substeps; ++sub) {
    ws.term = block;
    double block_scale = block.cwiseAbs().maxCoeff();
    if (block_scale == 0.0) block_scale = 1.0;
    for (int k = 1; k <= kMaxTerms; ++k) {
      op.apply(ws.term, ws.h_term);
      ws.term = (-kImag * (step / k)) * ws.h_term;
      block += ws.term;
      if (ws.term.cwiseAbs().maxCoeff() < 1e-16 * block_scale) break;
      if (k == kMaxTerms) {
        throw NumericalError("propagator series failed to converge");
      }
    }
  }
  if (!block.allFinite()) {
    throw NumericalError("non-finite amplitudes after evolution");
  }
}

EigenPropagator::EigenPropagator(const HamiltonianOperator& op) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(op.dense());
  if (solver.info() != Eigen::Success) {
    throw NumericalError("eigendecomposition failed");
  }
  vectors_ = solver.eigenvectors();
  values_ = solver.eigenvalues();
}

void EigenPropagator::apply(double dt, Eigen::MatrixXcd& block) const {
  if (dt == 0.0) return;
  // Row-state layout: psi' = psi V* diag(e^{-i w dt}) V^T.
  Eigen::MatrixXcd mixed = block * vectors_.conjugate();
  for (Eigen::Index j = 0; j < values_.size(); ++j) {
    mixed.col(j) *= std::exp(-kImag * (values_[j] * dt));
  }
  block = mixed * vectors_.transpose();
  if (!block.allFinite()) {
    throw NumericalError("non-finite amplitudes after evolution");
  }
}

Eigen::MatrixXcd build_hamiltonian(const HamiltonianTerms& terms) {
  return HamiltonianOperator::from_terms(terms).dense();
}

StateVector evolve(const StateVector& state, const HamiltonianTerms& terms,
                   double duration) {
  if (duration < 0.0) throw ContractError("evolution duration must be >= 0");
  if (state.num_spins() != terms.num_spins()) {
    throw ContractError("state/Hamiltonian size mismatch");
  }
  HamiltonianOperator op = HamiltonianOperator::from_terms(terms);
  Eigen::MatrixXcd block = state.amplitudes().transpose();
  if (state.dim() <= 256) {
    EigenPropagator prop(op);
    prop.apply(duration, block);
  } else {
    PropagatorWorkspace ws;
    evolve_block(op, duration, block, ws);
  }
  StateVector out(state.num_spins(), block.row(0).transpose());
  out.check_valid();
  return out;
}

StateVector apply_rotation(const StateVector& state,
                           const Eigen::Vector3d& axis, double angle) {
  if (std::abs(axis.norm() - 1.0) > 1e-9) {
    throw ContractError("rotation axis must be a unit vector");
  }
  const double c = std::cos(0.5 * angle);
  const double s = std::sin(0.5 * angle);
  // exp(-i (angle/2) n.sigma) = cos I - i sin (n.sigma)
  const Complex u00 = Complex(c, -s * axis.z());
  const Complex u01 = Complex(-s * axis.y(), -s * axis.x());
  const Complex u10 = Complex(s * axis.y(), -s * axis.x());
  const Complex u11 = Complex(c, s * axis.z());

  Eigen::VectorXcd amps = state.amplitudes();
  const int dim = state.dim();
  for (int i = 0; i < state.num_spins(); ++i) {
    const int mask = 1 << i;
    for (int s0 = 0; s0 < dim; ++s0) {
      if (s0 & mask) continue;
      const int s1 = s0 | mask;
      const Complex a = amps[s0];
      const Complex b = amps[s1];
      amps[s0] = u00 * a + u01 * b;
      amps[s1] = u10 * a + u11 * b;
    }
  }
  StateVector out(state.num_spins(), std::move(amps));
  out.check_valid();
  return out;
}

double mean_sigma_y(const StateVector& state) {
  Eigen::MatrixXcd block = state.amplitudes().transpose();
  return mean_sigma_y_block(block, state.num_spins())[0];
}

void apply_rotation_y_block(Eigen::MatrixXcd& block,
                            const Eigen::VectorXd& angles) {
  if (angles.size() != block.rows()) {
    throw ContractError("one rotation angle per block row required");
  }
  const Eigen::ArrayXd c = (0.5 * angles.array()).cos();
  const Eigen::ArrayXd s = (0.5 * angles.array()).sin();
  const int dim = static_cast<int>(block.cols());
  int num_spins = 0;
  while ((1 << num_spins) < dim) ++num_spins;
  Eigen::ArrayXcd a(block.rows()), b(block.rows());
  for (int i = 0; i < num_spins; ++i) {
    const int mask = 1 << i;
    for (int s0 = 0; s0 < dim; ++s0) {
      if (s0 & mask) continue;
      const int s1 = s0 | mask;
      a = block.col(s0).array();
      b = block.col(s1).array();
      block.col(s0) = (c * a - s * b).matrix();
      block.col(s1) = (s * a + c * b).matrix();
    }
  }
}

Eigen::VectorXd mean_sigma_y_block(const Eigen::MatrixXcd& block,
                                   int num_spins) {
  const int dim = static_cast<int>(block.cols());
  if (dim != (1 << num_spins)) {
    throw ContractError("block width must be 2^M");
  }
  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(block.rows());
  for (int i = 0; i < num_spins; ++i) {
    const int mask = 1 << i;
    for (int s0 = 0; s0 < dim; ++s0) {
      if (s0 & mask) continue;
      const int s1 = s0 | mask;
      acc += 2.0 *
             (block.col(s0).conjugate().array() * block.col(s1).array())
                 .imag();
    }
  }
  return (acc / num_spins).matrix();
}

}  // namespace epscpmg
