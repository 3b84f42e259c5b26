#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "epscpmg/density_fit.hpp"

namespace epscpmg {

// Resolved tool configuration.  User-facing units (MHz, degrees) are stored
// verbatim and converted on access, so a config round-tripped through its
// JSON form reproduces runs byte-identically.
struct RunConfig {
  // physics
  double carbon_site_density_nm3 = 176.3;
  double coupling_system_mhz_nm3 = 13.0;
  double coupling_bath_mhz_nm3 = 26.0;
  double exclusion_radius_nm = 0.5;
  double bath_coupling_cutoff_rad_us = 1e-4;
  double kappa_us_ppm = 800.0;
  std::optional<double> tau_c_override_us;
  std::vector<double> quantization_axis = {1.0, 1.0, 1.0};

  // simulation
  int cluster_size = 6;
  int realizations = 64;
  double pulse_duration_us = 0.04;
  std::uint64_t master_seed = 1;
  int threads = 0;  // 0 = hardware concurrency
  std::string propagation = "auto";

  // sequence
  std::string family = "eps_cpmg";
  double tau_us = 0.25;
  std::vector<int> n_pulses = {2, 5, 10, 20, 30};
  std::vector<double> epsilon_grid_deg;  // default -90..90 step 5

  // densities
  double n_system_ppm = 2.1;
  double n_bath_ppm = 23.2;

  // fit
  std::vector<double> grid_n_system_ppm;  // default log 0.1..10, 7 points
  std::vector<double> grid_n_bath_ppm;    // default log 2..100, 7 points
  int n_min_pulses = 4;
  double smoothing_deg = 6.0;

  // synthetic
  double noise_sigma = 0.02;

  // output
  std::string output_directory = "out";

  RunConfig();

  GeometryParams geometry_params() const;
  SimulationSettings simulation_settings() const;
  SequenceTemplate sequence_template() const;
  DensityPair density_pair() const;
  Eigen::VectorXd epsilon_grid_rad() const;
  double smoothing_sigma_rad() const;

  void validate() const;
  nlohmann::json to_json() const;
};

RunConfig config_from_json(const nlohmann::json& j,
                           const std::string& source_name);
RunConfig load_config(const std::string& path);

// FNV-1a hash of the canonical JSON dump, as a hex string.
std::string config_hash(const RunConfig& config);

std::vector<double> log_spaced(double lo, double hi, int points);

}  // namespace epscpmg
