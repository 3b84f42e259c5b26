#include "epscpmg/geometry.hpp"

#include <cmath>

#include "epscpmg/rng.hpp"
#include "epscpmg/spin_core.hpp"

namespace epscpmg {

namespace {

constexpr int kMaxPlacementRetries = 10000;

Eigen::Vector3d draw_position(rng::Random& random, double edge) {
  return {random.uniform(0.0, edge), random.uniform(0.0, edge),
          random.uniform(0.0, edge)};
}

bool respects_exclusion(const Eigen::Vector3d& candidate,
                        const std::vector<Eigen::Vector3d>& placed_a,
                        const std::vector<Eigen::Vector3d>& placed_b,
                        double radius) {
  const double r2 = radius * radius;
  for (const auto& p : placed_a) {
    if ((candidate - p).squaredNorm() < r2) return false;
  }
  for (const auto& p : placed_b) {
    if ((candidate - p).squaredNorm() < r2) return false;
  }
  return true;
}

Eigen::Vector3d place_spin(rng::Random& random, double edge,
                           const std::vector<Eigen::Vector3d>& placed_a,
                           const std::vector<Eigen::Vector3d>& placed_b,
                           double radius) {
  for (int attempt = 0; attempt < kMaxPlacementRetries; ++attempt) {
    Eigen::Vector3d candidate = draw_position(random, edge);
    if (respects_exclusion(candidate, placed_a, placed_b, radius)) {
      return candidate;
    }
  }
  throw SamplingError(
      "exclusion-radius rejection loop exceeded its retry budget; "
      "the requested density is unphysically high for this box");
}

}  // namespace

void GeometryParams::validate() const {
  if (carbon_site_density_nm3 <= 0.0 || coupling_system_rad_nm3 <= 0.0 ||
      coupling_bath_rad_nm3 <= 0.0 || exclusion_radius_nm <= 0.0) {
    throw ConfigError("geometry constants must be positive");
  }
  if (bath_coupling_cutoff < 0.0) {
    throw ConfigError("bath coupling cutoff must be >= 0");
  }
  if (std::abs(quantization_axis.norm() - 1.0) > 1e-9) {
    throw ConfigError("quantization axis must be a unit vector");
  }
}

void DensityPair::validate() const {
  if (n_system_ppm < 0.0 || n_bath_ppm < 0.0) {
    throw ConfigError("densities must be >= 0 ppm");
  }
}

double ppm_to_number_density(double ppm, double carbon_site_density_nm3) {
  if (ppm < 0.0) throw ConfigError("ppm value must be >= 0");
  return ppm * 1e-6 * carbon_site_density_nm3;
}

double dipolar_coupling(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                        const Eigen::Vector3d& axis, double prefactor,
                        double min_separation_nm) {
  const Eigen::Vector3d r = a - b;
  const double dist = r.norm();
  if (dist <= 0.0 || dist < min_separation_nm) {
    throw NumericalError("degenerate geometry: spins closer than allowed");
  }
  const double cos_theta = r.dot(axis) / dist;
  return prefactor * (1.0 - 3.0 * cos_theta * cos_theta) /
         (dist * dist * dist);
}

SpinConfiguration sample_configuration(const DensityPair& densities,
                                       int num_system, std::uint64_t seed,
                                       const GeometryParams& params) {
  params.validate();
  densities.validate();
  if (num_system < 1) throw ContractError("need at least one system spin");
  if (num_system > kMaxSpins) {
    throw CapacityError("cluster size exceeds the capacity limit");
  }
  if (densities.n_system_ppm <= 0.0) {
    throw ConfigError("system density must be positive for sampling");
  }

  const double n_sys =
      ppm_to_number_density(densities.n_system_ppm,
                            params.carbon_site_density_nm3);
  const double n_bath = ppm_to_number_density(
      densities.n_bath_ppm, params.carbon_site_density_nm3);
  const double volume = num_system / n_sys;
  const double edge = std::cbrt(volume);

  rng::Random random(seed);

  SpinConfiguration config;
  config.seed = seed;
  config.box_edge_nm = edge;
  config.quantization_axis = params.quantization_axis;

  for (int i = 0; i < num_system; ++i) {
    config.system_positions.push_back(
        place_spin(random, edge, config.system_positions,
                   config.bath_positions, params.exclusion_radius_nm));
  }

  const std::int64_t bath_count = random.poisson(n_bath * volume);
  std::vector<Eigen::Vector3d> raw_bath;
  raw_bath.reserve(static_cast<std::size_t>(bath_count));
  for (std::int64_t k = 0; k < bath_count; ++k) {
    raw_bath.push_back(place_spin(random, edge, config.system_positions,
                                  raw_bath, params.exclusion_radius_nm));
  }

  config.system_couplings =
      Eigen::MatrixXd::Zero(num_system, num_system);
  for (int i = 0; i < num_system; ++i) {
    for (int j = i + 1; j < num_system; ++j) {
      const double coupling = dipolar_coupling(
          config.system_positions[i], config.system_positions[j],
          config.quantization_axis, params.coupling_system_rad_nm3,
          params.exclusion_radius_nm);
      config.system_couplings(i, j) = coupling;
      config.system_couplings(j, i) = coupling;
    }
  }

  // Bath truncation: keep a bath spin only if it moves some system spin
  // harder than the cutoff.
  std::vector<Eigen::VectorXd> kept_columns;
  for (const auto& pos : raw_bath) {
    Eigen::VectorXd column(num_system);
    for (int i = 0; i < num_system; ++i) {
      column[i] = dipolar_coupling(config.system_positions[i], pos,
                                   config.quantization_axis,
                                   params.coupling_bath_rad_nm3,
                                   params.exclusion_radius_nm);
    }
    if (column.cwiseAbs().maxCoeff() > params.bath_coupling_cutoff) {
      config.bath_positions.push_back(pos);
      kept_columns.push_back(std::move(column));
    }
  }
  config.bath_couplings =
      Eigen::MatrixXd::Zero(num_system, config.num_bath());
  for (int k = 0; k < config.num_bath(); ++k) {
    config.bath_couplings.col(k) = kept_columns[static_cast<std::size_t>(k)];
  }

  return config;
}

}  // namespace epscpmg
