#include "epscpmg/bath.hpp"

#include <algorithm>
#include <cmath>

#include "epscpmg/rng.hpp"

namespace epscpmg {

double correlation_time(double n_bath_ppm, double kappa_us_ppm) {
  if (n_bath_ppm < 0.0) throw ConfigError("bath density must be >= 0");
  if (kappa_us_ppm <= 0.0) throw ConfigError("kappa must be positive");
  if (n_bath_ppm == 0.0) return kInfiniteCorrelationTime;
  return kappa_us_ppm / n_bath_ppm;
}

BathTrajectory sample_trajectory(const SpinConfiguration& config,
                                 double tau_c_us, double horizon_us,
                                 std::uint64_t seed) {
  if (horizon_us < 0.0) throw ContractError("horizon must be >= 0");
  if (tau_c_us <= 0.0) throw ContractError("correlation time must be > 0");

  rng::Random random(seed);
  BathTrajectory traj;
  traj.horizon_us = horizon_us;
  traj.seed = seed;

  const int bath_count = config.num_bath();
  traj.initial_signs.resize(bath_count);
  for (int k = 0; k < bath_count; ++k) traj.initial_signs[k] = random.sign();

  if (!std::isinf(tau_c_us)) {
    for (int k = 0; k < bath_count; ++k) {
      double t = random.exponential(tau_c_us);
      while (t < horizon_us) {
        traj.flips.push_back({t, k});
        t += random.exponential(tau_c_us);
      }
    }
    std::sort(traj.flips.begin(), traj.flips.end(),
              [](const BathTrajectory::Flip& a, const BathTrajectory::Flip& b) {
                if (a.time_us != b.time_us) return a.time_us < b.time_us;
                return a.spin < b.spin;
              });
  }
  return traj;
}

std::vector<FieldSegment> onsite_field_segments(const SpinConfiguration& config,
                                                const BathTrajectory& traj) {
  const int m = config.num_system();
  const int bath_count = config.num_bath();
  if (traj.initial_signs.size() != bath_count) {
    throw ContractError("trajectory/configuration bath count mismatch");
  }

  Eigen::VectorXd signs = traj.initial_signs.cast<double>();
  Eigen::VectorXd fields = bath_count > 0
                               ? (config.bath_couplings * signs).eval()
                               : Eigen::VectorXd::Zero(m).eval();

  std::vector<FieldSegment> segments;
  segments.reserve(traj.flips.size() + 1);
  double t_prev = 0.0;
  std::size_t idx = 0;
  while (idx < traj.flips.size()) {
    const double t_flip = traj.flips[idx].time_us;
    if (t_flip > t_prev) {
      segments.push_back({t_prev, t_flip, fields});
      t_prev = t_flip;
    }
    // Apply every flip that shares this timestamp before opening the next
    // segment, so simultaneous flips never create zero-length segments.
    while (idx < traj.flips.size() && traj.flips[idx].time_us == t_flip) {
      const int k = traj.flips[idx].spin;
      signs[k] = -signs[k];
      fields += 2.0 * signs[k] * config.bath_couplings.col(k);
      ++idx;
    }
  }
  segments.push_back({t_prev, traj.horizon_us, fields});
  return segments;
}

}  // namespace epscpmg
