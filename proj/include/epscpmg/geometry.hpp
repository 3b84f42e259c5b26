#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "epscpmg/errors.hpp"

namespace epscpmg {

// Spatial-sampling and coupling constants.  Couplings use the secular
// dipolar kernel (1 - 3 cos^2 theta)/r^3 with configurable prefactors in
// rad nm^3 / us; the defaults correspond to 13 MHz nm^3 (like-spin flip-flop
// term) and 26 MHz nm^3 (bath sigma_z field) times 2 pi.
struct GeometryParams {
  double carbon_site_density_nm3 = 176.3;  // diamond lattice sites per nm^3
  double coupling_system_rad_nm3 = 2.0 * M_PI * 13.0;
  double coupling_bath_rad_nm3 = 2.0 * M_PI * 26.0;
  double exclusion_radius_nm = 0.5;
  double bath_coupling_cutoff = 1e-4;  // rad/us; weaker bath spins dropped
  Eigen::Vector3d quantization_axis =
      Eigen::Vector3d(1.0, 1.0, 1.0).normalized();

  void validate() const;
};

struct DensityPair {
  double n_system_ppm = 0.0;
  double n_bath_ppm = 0.0;

  void validate() const;
};

// ppm of carbon lattice sites -> number density in nm^-3.
double ppm_to_number_density(double ppm,
                             double carbon_site_density_nm3 = 176.3);

// Secular dipolar coefficient between positions a and b (nm) for the given
// quantization axis: prefactor (1 - 3 cos^2 theta) / r^3.
double dipolar_coupling(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                        const Eigen::Vector3d& axis, double prefactor,
                        double min_separation_nm = 0.0);

// One spatial disorder realization: system spins in a density-matched cubic
// box, a Poisson-distributed bath, and precomputed coupling tables.
struct SpinConfiguration {
  std::vector<Eigen::Vector3d> system_positions;
  std::vector<Eigen::Vector3d> bath_positions;
  Eigen::Vector3d quantization_axis;
  Eigen::MatrixXd system_couplings;  // M x M, J_ij in rad/us
  Eigen::MatrixXd bath_couplings;    // M x B, c_ik in rad/us
  double box_edge_nm = 0.0;
  std::uint64_t seed = 0;

  int num_system() const { return static_cast<int>(system_positions.size()); }
  int num_bath() const { return static_cast<int>(bath_positions.size()); }
};

// Deterministic in `seed`.  The box edge is (M / n_system)^(1/3); the bath
// count is Poisson with mean n_bath * volume; bath spins whose strongest
// field on any system spin falls below the cutoff are discarded.
SpinConfiguration sample_configuration(const DensityPair& densities,
                                       int num_system, std::uint64_t seed,
                                       const GeometryParams& params = {});

}  // namespace epscpmg
