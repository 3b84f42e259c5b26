#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "epscpmg/geometry.hpp"

namespace epscpmg {

// Telegraph sign processes for the bath spins: each spin starts at a random
// sign and flips at Poisson rate 1/tau_c, giving the autocorrelation
// <s(t) s(0)> = exp(-2 t / tau_c).
struct BathTrajectory {
  struct Flip {
    double time_us;
    int spin;
  };

  Eigen::VectorXi initial_signs;  // +/-1 per bath spin
  std::vector<Flip> flips;        // ascending in time, within [0, horizon]
  double horizon_us = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr double kInfiniteCorrelationTime =
    std::numeric_limits<double>::infinity();

// tau_c = kappa / n_bath; n_bath = 0 returns the static-bath sentinel (+inf).
// The default kappa is calibrated so a 23.2 ppm bath reproduces a ~3.5 us
// spin-echo T2; it is a model parameter, not a measured constant.
double correlation_time(double n_bath_ppm, double kappa_us_ppm = 800.0);

BathTrajectory sample_trajectory(const SpinConfiguration& config,
                                 double tau_c_us, double horizon_us,
                                 std::uint64_t seed);

// Piecewise-constant onsite field per system spin, B_i = sum_k c_ik s_k.
// Consecutive segments share their boundary times exactly and tile
// [0, horizon].
struct FieldSegment {
  double t_begin_us;
  double t_end_us;
  Eigen::VectorXd fields;  // length M, rad/us
};

std::vector<FieldSegment> onsite_field_segments(const SpinConfiguration& config,
                                                const BathTrajectory& traj);

}  // namespace epscpmg
