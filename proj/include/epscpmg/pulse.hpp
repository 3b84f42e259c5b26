#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "epscpmg/bath.hpp"
#include "epscpmg/geometry.hpp"
#include "epscpmg/spin_core.hpp"

namespace epscpmg {

enum class SequenceFamily { kEpsCpmg, kApcpmg, kHahnEcho, kFreeEvolution };

std::string to_string(SequenceFamily family);
SequenceFamily family_from_string(const std::string& name);

// One pulse train: N rotations by pi + epsilon about +/-y on the grid
//   tau - pulse - 2 tau - pulse - ... - pulse - tau,
// where each pulse occupies pulse_duration (0 = instantaneous) and the free
// windows keep their full tau / 2 tau lengths, so pulse centers sit on a
// regular grid with period 2 tau + pulse_duration and readout n happens at
// elapsed time 2 tau n + n pulse_duration.
struct PulseSequenceSpec {
  SequenceFamily family = SequenceFamily::kEpsCpmg;
  int n_pulses = 0;
  double tau_us = 0.25;
  double epsilon_rad = 0.0;
  double pulse_duration_us = 0.0;

  void validate() const;
  // Rotation angle of every pulse: pi + epsilon (0 for free evolution).
  double pulse_angle() const;
  // +1 for +y, -1 for -y; alternates for APCPMG, +1 otherwise.
  double axis_sign(int pulse_index) const;
};

struct CoherencePoint {
  int n_pulses;
  double time_us;
  double coherence;
};

double total_duration(const PulseSequenceSpec& spec);

enum class PropagationMode { kAuto, kSeries, kEigen };
PropagationMode propagation_mode_from_string(const std::string& name);
std::string to_string(PropagationMode mode);

// Executes pulse sequences for one (configuration, trajectory) pair.  A
// whole batch of epsilon values shares the timeline walk, since the free
// segments do not depend on epsilon.  kEigen caches one eigendecomposition
// per bath segment and pays off when segments are reused many times
// (static or slow baths, small clusters); kSeries applies an adaptive
// truncated exponential series per interval and wins when flips are dense.
class SequenceEngine {
 public:
  SequenceEngine(const SpinConfiguration& config, const BathTrajectory& traj,
                 PropagationMode mode = PropagationMode::kAuto);
  // Same engine on an explicit segment list (segments must tile the needed
  // window); lets callers refine segment boundaries without changing physics.
  SequenceEngine(const SpinConfiguration& config,
                 std::vector<FieldSegment> segments,
                 PropagationMode mode = PropagationMode::kAuto);

  // Coherence (mean sigma_y) for every (epsilon, readout) pair.  Readouts
  // are pulse counts, ascending, each <= spec.n_pulses; readout n reports
  // the state after pulse n plus the trailing tau.
  Eigen::MatrixXd run_batch(const PulseSequenceSpec& spec,
                            std::span<const double> epsilons,
                            std::span<const int> readout_schedule);

  // Batch states right after the last scheduled readout's pulse (no
  // trailing tau); one row per epsilon.
  const Eigen::MatrixXcd& final_block() const { return final_block_; }

 private:
  struct Cursor {
    std::size_t segment = 0;
    double time = 0.0;
  };

  void advance_free(Eigen::MatrixXcd& block, Cursor& cursor, double t_end);
  void advance_pulse(Eigen::MatrixXcd& block, Cursor& cursor, double t_end,
                     const Eigen::VectorXd& rabi_rates);
  const FieldSegment& segment_at(Cursor& cursor) const;
  const EigenPropagator& cached_propagator(std::size_t segment_index);

  int num_spins_;
  int dim_;
  PropagationMode mode_;
  std::vector<FieldSegment> segments_;
  HamiltonianOperator op_;
  PropagatorWorkspace workspace_;
  PropagatorWorkspace row_workspace_;
  std::vector<std::unique_ptr<EigenPropagator>> propagator_cache_;
  Eigen::MatrixXcd final_block_;
};

// Single-epsilon convenience wrapper over SequenceEngine.
std::vector<CoherencePoint> run_sequence(
    const SpinConfiguration& config, const BathTrajectory& traj,
    const PulseSequenceSpec& spec, const std::vector<int>& readout_schedule,
    PropagationMode mode = PropagationMode::kAuto);

}  // namespace epscpmg
