#include "epscpmg/pulse.hpp"

#include <algorithm>
#include <cmath>

namespace epscpmg {

namespace {

// Tolerance for matching pulse-grid times against segment boundaries.
constexpr double kTimeTolerance = 1e-9;

}  // namespace

std::string to_string(SequenceFamily family) {
  switch (family) {
    case SequenceFamily::kEpsCpmg: return "eps_cpmg";
    case SequenceFamily::kApcpmg: return "apcpmg";
    case SequenceFamily::kHahnEcho: return "hahn_echo";
    case SequenceFamily::kFreeEvolution: return "free_evolution";
  }
  throw ContractError("unknown sequence family");
}

SequenceFamily family_from_string(const std::string& name) {
  if (name == "eps_cpmg") return SequenceFamily::kEpsCpmg;
  if (name == "apcpmg") return SequenceFamily::kApcpmg;
  if (name == "hahn_echo") return SequenceFamily::kHahnEcho;
  if (name == "free_evolution") return SequenceFamily::kFreeEvolution;
  throw ConfigError("unknown sequence family '" + name + "'");
}

PropagationMode propagation_mode_from_string(const std::string& name) {
  if (name == "auto") return PropagationMode::kAuto;
  if (name == "series") return PropagationMode::kSeries;
  if (name == "eigen") return PropagationMode::kEigen;
  throw ConfigError("unknown propagation mode '" + name + "'");
}

std::string to_string(PropagationMode mode) {
  switch (mode) {
    case PropagationMode::kAuto: return "auto";
    case PropagationMode::kSeries: return "series";
    case PropagationMode::kEigen: return "eigen";
  }
  throw ContractError("unknown propagation mode");
}

void PulseSequenceSpec::validate() const {
  if (n_pulses < 0) throw ContractError("pulse count must be >= 0");
  if (tau_us <= 0.0) throw ContractError("tau must be positive");
  if (pulse_duration_us < 0.0) {
    throw ContractError("pulse duration must be >= 0");
  }
  if (2.0 * tau_us <= pulse_duration_us) {
    throw ContractError("pulse duration must fit inside the 2 tau window");
  }
  if (family == SequenceFamily::kHahnEcho && n_pulses != 1) {
    throw ContractError("Hahn echo requires exactly one pulse");
  }
}

double PulseSequenceSpec::pulse_angle() const {
  if (family == SequenceFamily::kFreeEvolution) return 0.0;
  return M_PI + epsilon_rad;
}

double PulseSequenceSpec::axis_sign(int pulse_index) const {
  if (family == SequenceFamily::kApcpmg) {
    return (pulse_index % 2 == 0) ? 1.0 : -1.0;
  }
  return 1.0;
}

double total_duration(const PulseSequenceSpec& spec) {
  spec.validate();
  return 2.0 * spec.tau_us * spec.n_pulses +
         spec.n_pulses * spec.pulse_duration_us;
}

// ---------------------------------------------------------------------------
// SequenceEngine
// ---------------------------------------------------------------------------

SequenceEngine::SequenceEngine(const SpinConfiguration& config,
                               const BathTrajectory& traj,
                               PropagationMode mode)
    : SequenceEngine(config, onsite_field_segments(config, traj), mode) {}

SequenceEngine::SequenceEngine(const SpinConfiguration& config,
                               std::vector<FieldSegment> segments,
                               PropagationMode mode)
    : num_spins_(config.num_system()),
      dim_(1 << config.num_system()),
      segments_(std::move(segments)),
      op_(config.system_couplings, Eigen::Vector3d::UnitY()) {
  if (segments_.empty()) throw ContractError("engine needs field segments");
  if (mode == PropagationMode::kAuto) {
    mode_ = (dim_ <= 256 && segments_.size() <= 64)
                ? PropagationMode::kEigen
                : PropagationMode::kSeries;
  } else {
    mode_ = mode;
  }
  if (mode_ == PropagationMode::kEigen) {
    propagator_cache_.resize(segments_.size());
  }
}

const FieldSegment& SequenceEngine::segment_at(Cursor& cursor) const {
  while (cursor.segment + 1 < segments_.size() &&
         segments_[cursor.segment].t_end_us <= cursor.time + kTimeTolerance) {
    ++cursor.segment;
  }
  return segments_[cursor.segment];
}

const EigenPropagator& SequenceEngine::cached_propagator(
    std::size_t segment_index) {
  auto& slot = propagator_cache_[segment_index];
  if (!slot) {
    op_.set_drive_amplitude(0.0);
    op_.set_onsite_fields(segments_[segment_index].fields);
    slot = std::make_unique<EigenPropagator>(op_);
  }
  return *slot;
}

void SequenceEngine::advance_free(Eigen::MatrixXcd& block, Cursor& cursor,
                                  double t_end) {
  while (cursor.time < t_end - kTimeTolerance) {
    const FieldSegment& seg = segment_at(cursor);
    if (seg.t_end_us < cursor.time - kTimeTolerance) {
      throw ContractError("bath trajectory does not cover the sequence");
    }
    const double piece_end = std::min(t_end, seg.t_end_us);
    const double dt = piece_end - cursor.time;
    if (dt > 0.0) {
      if (mode_ == PropagationMode::kEigen) {
        cached_propagator(cursor.segment).apply(dt, block);
      } else {
        op_.set_drive_amplitude(0.0);
        op_.set_onsite_fields(seg.fields);
        evolve_block(op_, dt, block, workspace_);
      }
    }
    cursor.time = piece_end;
    if (piece_end >= seg.t_end_us - kTimeTolerance &&
        cursor.segment + 1 < segments_.size()) {
      ++cursor.segment;
    }
  }
  cursor.time = t_end;
}

void SequenceEngine::advance_pulse(Eigen::MatrixXcd& block, Cursor& cursor,
                                   double t_end,
                                   const Eigen::VectorXd& rabi_rates) {
  // The Hamiltonian stays on during the pulse; each batch row carries its
  // own drive amplitude, so rows are propagated one at a time against the
  // shared bath segments.
  Eigen::MatrixXcd row(1, dim_);
  for (Eigen::Index r = 0; r < block.rows(); ++r) {
    Cursor row_cursor = cursor;
    row = block.row(r);
    op_.set_drive_amplitude(rabi_rates[r]);
    while (row_cursor.time < t_end - kTimeTolerance) {
      const FieldSegment& seg = segment_at(row_cursor);
      const double piece_end = std::min(t_end, seg.t_end_us);
      const double dt = piece_end - row_cursor.time;
      if (dt > 0.0) {
        op_.set_onsite_fields(seg.fields);
        evolve_block(op_, dt, row, row_workspace_);
      }
      row_cursor.time = piece_end;
      if (piece_end >= seg.t_end_us - kTimeTolerance &&
          row_cursor.segment + 1 < segments_.size()) {
        ++row_cursor.segment;
      }
    }
    block.row(r) = row;
    if (r + 1 == block.rows()) cursor = row_cursor;
  }
  op_.set_drive_amplitude(0.0);
  cursor.time = t_end;
}

Eigen::MatrixXd SequenceEngine::run_batch(
    const PulseSequenceSpec& spec, std::span<const double> epsilons,
    std::span<const int> readout_schedule) {
  spec.validate();
  if (epsilons.empty()) throw ContractError("need at least one epsilon");
  if (readout_schedule.empty()) {
    throw ContractError("need at least one readout");
  }
  for (std::size_t i = 0; i < readout_schedule.size(); ++i) {
    if (readout_schedule[i] < 0 || readout_schedule[i] > spec.n_pulses) {
      throw ContractError("readout pulse counts must lie in [0, N]");
    }
    if (i > 0 && readout_schedule[i] <= readout_schedule[i - 1]) {
      throw ContractError("readout schedule must be strictly ascending");
    }
  }
  PulseSequenceSpec max_spec = spec;
  const double duration = total_duration(max_spec);
  if (segments_.empty() ||
      segments_.back().t_end_us < duration - kTimeTolerance) {
    throw ContractError("bath trajectory horizon is shorter than the sequence");
  }

  const int n_eps = static_cast<int>(epsilons.size());
  const double t_p = spec.pulse_duration_us;
  const double tau = spec.tau_us;

  Eigen::VectorXd angles(n_eps);
  for (int k = 0; k < n_eps; ++k) {
    PulseSequenceSpec s = spec;
    s.epsilon_rad = epsilons[k];
    angles[k] = s.pulse_angle();
  }

  Eigen::MatrixXcd block(n_eps, dim_);
  const StateVector init = StateVector::plus_y_product(num_spins_);
  for (int k = 0; k < n_eps; ++k) {
    block.row(k) = init.amplitudes().transpose();
  }

  Eigen::MatrixXd result(n_eps, static_cast<int>(readout_schedule.size()));
  std::size_t next_readout = 0;
  if (readout_schedule[0] == 0) {
    result.col(0) = mean_sigma_y_block(block, num_spins_);
    ++next_readout;
  }

  Cursor cursor;
  for (int pulse = 1; pulse <= spec.n_pulses; ++pulse) {
    if (next_readout >= readout_schedule.size()) break;
    const double window_start = tau + (pulse - 1) * (2.0 * tau + t_p);
    advance_free(block, cursor, window_start);
    const double sign = spec.axis_sign(pulse - 1);
    if (t_p == 0.0) {
      apply_rotation_y_block(block, sign * angles);
    } else {
      advance_pulse(block, cursor, window_start + t_p,
                    (sign / t_p) * angles);
    }
    if (next_readout < readout_schedule.size() &&
        readout_schedule[next_readout] == pulse) {
      Eigen::MatrixXcd branch = block;
      Cursor branch_cursor = cursor;
      advance_free(branch, branch_cursor, cursor.time + tau);
      result.col(static_cast<int>(next_readout)) =
          mean_sigma_y_block(branch, num_spins_);
      ++next_readout;
    }
  }
  if (next_readout != readout_schedule.size()) {
    throw ContractError("unreached readouts in schedule");
  }
  if (!result.allFinite()) {
    throw NumericalError("non-finite coherence values");
  }
  final_block_ = std::move(block);
  return result;
}

std::vector<CoherencePoint> run_sequence(const SpinConfiguration& config,
                                         const BathTrajectory& traj,
                                         const PulseSequenceSpec& spec,
                                         const std::vector<int>& readout_schedule,
                                         PropagationMode mode) {
  SequenceEngine engine(config, traj, mode);
  const double eps[1] = {spec.epsilon_rad};
  const Eigen::MatrixXd values =
      engine.run_batch(spec, std::span<const double>(eps, 1),
                       std::span<const int>(readout_schedule.data(),
                                            readout_schedule.size()));
  std::vector<CoherencePoint> points;
  points.reserve(readout_schedule.size());
  for (std::size_t i = 0; i < readout_schedule.size(); ++i) {
    const int n = readout_schedule[i];
    points.push_back({n,
                      2.0 * spec.tau_us * n + n * spec.pulse_duration_us,
                      values(0, static_cast<int>(i))});
  }
  return points;
}

}  // namespace epscpmg
