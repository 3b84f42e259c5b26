#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "epscpmg/pulse.hpp"
#include "epscpmg/rng.hpp"
#include "oracle_utils.hpp"

using namespace epscpmg;

namespace {

SpinConfiguration lone_spin_with_field(double field) {
  SpinConfiguration config;
  config.system_positions = {Eigen::Vector3d::Zero()};
  config.bath_positions = {Eigen::Vector3d::UnitX()};
  config.quantization_axis = Eigen::Vector3d::UnitZ();
  config.system_couplings = Eigen::MatrixXd::Zero(1, 1);
  config.bath_couplings = Eigen::MatrixXd::Constant(1, 1, field);
  return config;
}

BathTrajectory static_trajectory(const SpinConfiguration& config,
                                 double horizon) {
  BathTrajectory traj;
  traj.initial_signs = Eigen::VectorXi::Ones(config.num_bath());
  traj.horizon_us = horizon;
  return traj;
}

PulseSequenceSpec cpmg_spec(int n, double eps, double t_p) {
  PulseSequenceSpec spec;
  spec.family = SequenceFamily::kEpsCpmg;
  spec.n_pulses = n;
  spec.tau_us = 0.25;
  spec.epsilon_rad = eps;
  spec.pulse_duration_us = t_p;
  return spec;
}

std::vector<int> all_readouts(int n) {
  std::vector<int> readouts(n);
  for (int i = 0; i < n; ++i) readouts[i] = i + 1;
  return readouts;
}

}  // namespace

TEST_CASE("total duration follows the pulse grid") {
  CHECK(total_duration(cpmg_spec(0, 0.0, 0.0)) == 0.0);
  CHECK(total_duration(cpmg_spec(10, 0.0, 0.0)) ==
        doctest::Approx(5.0).epsilon(1e-15));
  PulseSequenceSpec hahn;
  hahn.family = SequenceFamily::kHahnEcho;
  hahn.n_pulses = 1;
  hahn.tau_us = 1.7;
  CHECK(total_duration(hahn) == doctest::Approx(3.4).epsilon(1e-15));
  CHECK(total_duration(cpmg_spec(10, 0.0, 0.04)) ==
        doctest::Approx(5.4).epsilon(1e-15));
}

TEST_CASE("spec validation") {
  PulseSequenceSpec hahn;
  hahn.family = SequenceFamily::kHahnEcho;
  hahn.n_pulses = 2;
  CHECK_THROWS_AS(hahn.validate(), ContractError);

  PulseSequenceSpec fat = cpmg_spec(2, 0.0, 0.6);  // t_p >= 2 tau
  CHECK_THROWS_AS(fat.validate(), ContractError);

  PulseSequenceSpec bad_tau = cpmg_spec(2, 0.0, 0.0);
  bad_tau.tau_us = 0.0;
  CHECK_THROWS_AS(bad_tau.validate(), ContractError);

  CHECK(family_from_string("apcpmg") == SequenceFamily::kApcpmg);
  CHECK_THROWS_AS(family_from_string("nope"), ConfigError);
}

TEST_CASE("trivial spin: no couplings, no bath, coherence stays at one") {
  SpinConfiguration config;
  config.system_positions = {Eigen::Vector3d::Zero()};
  config.quantization_axis = Eigen::Vector3d::UnitZ();
  config.system_couplings = Eigen::MatrixXd::Zero(1, 1);
  config.bath_couplings = Eigen::MatrixXd::Zero(1, 0);

  for (const auto family :
       {SequenceFamily::kEpsCpmg, SequenceFamily::kApcpmg,
        SequenceFamily::kHahnEcho, SequenceFamily::kFreeEvolution}) {
    for (const double t_p : {0.0, 0.05}) {
      PulseSequenceSpec spec = cpmg_spec(4, 0.4, t_p);
      spec.family = family;
      if (family == SequenceFamily::kHahnEcho) spec.n_pulses = 1;
      const BathTrajectory traj =
          static_trajectory(config, total_duration(spec) + 1.0);
      const auto points =
          run_sequence(config, traj, spec, all_readouts(spec.n_pulses));
      for (const auto& point : points) {
        CHECK(point.coherence == doctest::Approx(1.0).epsilon(1e-11));
      }
    }
  }
}

TEST_CASE("static disorder is echoed exactly at zero offset") {
  const SpinConfiguration config = lone_spin_with_field(1.7);
  PulseSequenceSpec spec = cpmg_spec(64, 0.0, 0.0);
  const BathTrajectory traj =
      static_trajectory(config, total_duration(spec) + 1.0);
  for (const auto mode :
       {PropagationMode::kSeries, PropagationMode::kEigen}) {
    const auto points = run_sequence(config, traj, spec, all_readouts(64), mode);
    for (const auto& point : points) {
      CHECK(std::abs(point.coherence - 1.0) < 1e-9);
      CHECK(point.time_us ==
            doctest::Approx(0.5 * point.n_pulses).epsilon(1e-12));
    }
  }
}

TEST_CASE("engine matches the dense whole-sequence oracle") {
  // Random small clusters with a flipping bath, all families, both pulse
  // widths, both propagation routes.
  for (const int m : {1, 2, 3}) {
    const SpinConfiguration config =
        sample_configuration({50.0, 30.0}, m, 7000 + m, {});
    for (const auto family :
         {SequenceFamily::kEpsCpmg, SequenceFamily::kApcpmg,
          SequenceFamily::kFreeEvolution}) {
      for (const double t_p : {0.0, 0.04}) {
        PulseSequenceSpec spec = cpmg_spec(6, 0.23, t_p);
        spec.family = family;
        const double horizon = total_duration(spec) + 0.5;
        const BathTrajectory traj =
            sample_trajectory(config, 1.0, horizon, 8000 + m);
        const auto readouts = all_readouts(6);
        const auto oracle_run =
            oracle::sequence_oracle(config, traj, spec, readouts);

        for (const auto mode :
             {PropagationMode::kSeries, PropagationMode::kEigen}) {
          SequenceEngine engine(config, traj, mode);
          const double eps[1] = {spec.epsilon_rad};
          const Eigen::MatrixXd values = engine.run_batch(
              spec, std::span<const double>(eps, 1),
              std::span<const int>(readouts.data(), readouts.size()));
          for (std::size_t i = 0; i < readouts.size(); ++i) {
            CHECK(std::abs(values(0, static_cast<int>(i)) -
                           oracle_run.curve[i]) < 1e-8);
          }
          const Eigen::VectorXcd final_state =
              engine.final_block().row(0).transpose();
          CHECK(std::norm(final_state.dot(oracle_run.final_state)) >
                1.0 - 1e-8);
        }
      }
    }
  }
}

TEST_CASE("pi pulses are transparent to the dipolar interaction") {
  // eps = 0, instantaneous pulses, no bath: C(n) equals free evolution
  // under the dipolar term alone at the same times.
  for (const int m : {3, 4}) {
    const SpinConfiguration config =
        sample_configuration({80.0, 0.0}, m, 600 + m, {});
    PulseSequenceSpec spec = cpmg_spec(8, 0.0, 0.0);
    const BathTrajectory traj =
        static_trajectory(config, total_duration(spec) + 1.0);
    const auto points = run_sequence(config, traj, spec, all_readouts(8));

    HamiltonianTerms dipolar = HamiltonianTerms::zero(m);
    dipolar.pair_couplings = config.system_couplings;
    const StateVector init = StateVector::plus_y_product(m);
    for (const auto& point : points) {
      const StateVector free_state = evolve(init, dipolar, point.time_us);
      CHECK(std::abs(point.coherence - mean_sigma_y(free_state)) < 1e-8);
    }
  }
}

TEST_CASE("a quarter-turn offset averages the dipolar coupling away") {
  // With dipolar couplings only, the time-averaged coherence at
  // eps = pi/2 beats the eps = 0 sequence.
  double avg_eps0 = 0.0, avg_eps90 = 0.0;
  int count = 0;
  for (int seed = 0; seed < 3; ++seed) {
    const SpinConfiguration config =
        sample_configuration({20.0, 0.0}, 4, 910 + seed, {});
    PulseSequenceSpec spec = cpmg_spec(32, 0.0, 0.0);
    const BathTrajectory traj =
        static_trajectory(config, total_duration(spec) + 1.0);
    SequenceEngine engine(config, traj);
    const double eps[2] = {0.0, M_PI / 2.0};
    std::vector<int> readouts;
    for (int n = 8; n <= 32; n += 2) readouts.push_back(n);
    const Eigen::MatrixXd values = engine.run_batch(
        spec, std::span<const double>(eps, 2),
        std::span<const int>(readouts.data(), readouts.size()));
    avg_eps0 += values.row(0).mean();
    avg_eps90 += values.row(1).mean();
    ++count;
  }
  CHECK(avg_eps90 / count > avg_eps0 / count);
}

TEST_CASE("alternating-phase pairs cancel offsets to second order") {
  const SpinConfiguration config = lone_spin_with_field(1.1);
  PulseSequenceSpec proto = cpmg_spec(8, 0.0, 0.0);
  proto.family = SequenceFamily::kApcpmg;
  const BathTrajectory traj =
      static_trajectory(config, total_duration(proto) + 1.0);
  const std::vector<int> readouts = {2, 4, 6, 8};

  auto worst_deviation = [&](double eps_value) {
    PulseSequenceSpec spec = proto;
    spec.epsilon_rad = eps_value;
    const auto points = run_sequence(config, traj, spec, readouts);
    double worst = 0.0;
    for (const auto& point : points) {
      worst = std::max(worst, std::abs(point.coherence - 1.0));
    }
    return worst;
  };

  // Exact at zero offset, and still within 1e-9 for a vanishing offset.
  CHECK(worst_deviation(0.0) < 1e-9);
  CHECK(worst_deviation(1e-5) < 1e-9);

  // The residual is second order: quartering when eps halves.
  const double big = worst_deviation(0.02);
  const double half = worst_deviation(0.01);
  CHECK(big / half == doctest::Approx(4.0).epsilon(0.2));

  // With no field at all the cancellation is exact at any offset.
  SpinConfiguration bare = config;
  bare.bath_couplings.setZero();
  for (const double eps_value : {0.3, 1.0, M_PI / 2}) {
    PulseSequenceSpec spec = proto;
    spec.epsilon_rad = eps_value;
    const auto points = run_sequence(bare, traj, spec, readouts);
    for (const auto& point : points) {
      CHECK(std::abs(point.coherence - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("free evolution family reproduces plain evolution") {
  const SpinConfiguration config = sample_configuration({40.0, 20.0}, 2,
                                                        1234, {});
  PulseSequenceSpec spec = cpmg_spec(5, 0.0, 0.0);
  spec.family = SequenceFamily::kFreeEvolution;
  const BathTrajectory traj = static_trajectory(config,
                                                total_duration(spec) + 1.0);
  const auto points = run_sequence(config, traj, spec, all_readouts(5));

  HamiltonianTerms terms = HamiltonianTerms::zero(2);
  terms.pair_couplings = config.system_couplings;
  terms.onsite_fields =
      config.bath_couplings * traj.initial_signs.cast<double>();
  const StateVector init = StateVector::plus_y_product(2);
  for (const auto& point : points) {
    const StateVector state = evolve(init, terms, point.time_us);
    CHECK(std::abs(point.coherence - mean_sigma_y(state)) < 1e-9);
  }
}

TEST_CASE("inserting artificial segment boundaries changes nothing") {
  const SpinConfiguration config = sample_configuration({50.0, 30.0}, 3,
                                                        555, {});
  PulseSequenceSpec spec = cpmg_spec(6, 0.31, 0.04);
  const double horizon = total_duration(spec) + 0.5;
  const BathTrajectory traj = sample_trajectory(config, 1.2, horizon, 556);
  const auto segments = onsite_field_segments(config, traj);

  // Split every segment at an interior point.
  std::vector<FieldSegment> refined;
  for (const auto& seg : segments) {
    const double mid = 0.5 * (seg.t_begin_us + seg.t_end_us);
    refined.push_back({seg.t_begin_us, mid, seg.fields});
    refined.push_back({mid, seg.t_end_us, seg.fields});
  }

  const double eps[2] = {0.1, 0.9};
  const auto readouts = all_readouts(6);
  for (const auto mode :
       {PropagationMode::kSeries, PropagationMode::kEigen}) {
    SequenceEngine coarse(config, segments, mode);
    SequenceEngine fine(config, refined, mode);
    const Eigen::MatrixXd a = coarse.run_batch(
        spec, std::span<const double>(eps, 2),
        std::span<const int>(readouts.data(), readouts.size()));
    const Eigen::MatrixXd b = fine.run_batch(
        spec, std::span<const double>(eps, 2),
        std::span<const int>(readouts.data(), readouts.size()));
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("coherence is bounded and readout zero reports one") {
  const SpinConfiguration config = sample_configuration({30.0, 40.0}, 3,
                                                        31, {});
  PulseSequenceSpec spec = cpmg_spec(10, 0.2, 0.04);
  const BathTrajectory traj =
      sample_trajectory(config, 0.7, total_duration(spec) + 0.5, 32);
  SequenceEngine engine(config, traj);
  const double eps[3] = {-0.5, 0.0, 0.5};
  const std::vector<int> readouts = {0, 1, 5, 10};
  const Eigen::MatrixXd values = engine.run_batch(
      spec, std::span<const double>(eps, 3),
      std::span<const int>(readouts.data(), readouts.size()));
  for (int k = 0; k < 3; ++k) {
    CHECK(values(k, 0) == doctest::Approx(1.0).epsilon(1e-12));
    for (int c = 0; c < 4; ++c) {
      CHECK(values(k, c) >= -1.0 - 1e-9);
      CHECK(values(k, c) <= 1.0 + 1e-9);
    }
  }
}

TEST_CASE("contract violations are rejected") {
  const SpinConfiguration config = lone_spin_with_field(1.0);
  PulseSequenceSpec spec = cpmg_spec(8, 0.0, 0.0);
  const BathTrajectory short_traj = static_trajectory(config, 1.0);
  CHECK_THROWS_AS(run_sequence(config, short_traj, spec, all_readouts(8)),
                  ContractError);

  const BathTrajectory traj = static_trajectory(config, 10.0);
  CHECK_THROWS_AS(run_sequence(config, traj, spec, {3, 2}), ContractError);
  CHECK_THROWS_AS(run_sequence(config, traj, spec, {9}), ContractError);
  CHECK_THROWS_AS(run_sequence(config, traj, spec, {}), ContractError);
}
