#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "epscpmg/analytic.hpp"
#include "epscpmg/bath.hpp"
#include "epscpmg/dataset.hpp"
#include "epscpmg/geometry.hpp"
#include "epscpmg/pulse.hpp"

namespace epscpmg {

// Sequence family, spacing and pulse width; epsilon and N come from grids.
struct SequenceTemplate {
  SequenceFamily family = SequenceFamily::kEpsCpmg;
  double tau_us = 0.25;
  double pulse_duration_us = 0.04;
};

struct SimulationSettings {
  int cluster_size = 6;
  int realizations = 64;
  std::uint64_t master_seed = 1;
  int threads = 1;
  GeometryParams geometry;
  double kappa_us_ppm = 800.0;
  std::optional<double> tau_c_override_us;
  PropagationMode propagation = PropagationMode::kAuto;

  void validate() const;
};

// Configurationally averaged coherence C(epsilon, N) with standard errors.
struct CoherenceSurface {
  Eigen::VectorXd epsilon_grid;     // rad, ascending
  std::vector<int> n_pulses_grid;   // ascending
  Eigen::MatrixXd values;           // rows = epsilon, cols = N
  Eigen::MatrixXd std_errors;
  int realization_count = 0;
  DensityPair densities;
  SequenceTemplate sequence;
};

// One disorder + noise realization; the unit of work behind all averaging.
// Deterministic in (settings.master_seed, realization_index).
Eigen::MatrixXd simulate_realization(const DensityPair& densities,
                                     const SequenceTemplate& sequence,
                                     const Eigen::VectorXd& epsilon_grid,
                                     const std::vector<int>& n_pulses_grid,
                                     const SimulationSettings& settings,
                                     int realization_index);

// Mean and standard error over `settings.realizations` realizations, all
// epsilon values sharing each realization (common random numbers).
// Realizations run concurrently; the reduction is in seed order.
CoherenceSurface average_surface(const DensityPair& densities,
                                 const SequenceTemplate& sequence,
                                 const Eigen::VectorXd& epsilon_grid,
                                 const std::vector<int>& n_pulses_grid,
                                 const SimulationSettings& settings);

struct AffineNuisance {
  double scale = 1.0;
  double offset = 0.0;
};

struct ChiSquaredResult {
  double value = 0.0;
  int points = 0;
  AffineNuisance nuisance;
};

// Weighted chi^2 between a smoothed simulated surface and measured data,
// restricted to n_pulses >= n_min_pulses, with the per-dataset affine
// nuisance (scale, offset) solved in closed form.  Epsilon values are
// linearly interpolated on the simulated grid; every retained data N must
// match a simulated N exactly.
ChiSquaredResult chi_squared(const CoherenceSurface& sim,
                             const ExperimentalDataset& data,
                             int n_min_pulses = 4,
                             double smoothing_sigma_rad =
                                 kDefaultSmoothingSigmaRad);

// Write-once cache of averaged surfaces keyed by the full parameter tuple.
class SurfaceCache {
 public:
  const CoherenceSurface* find(const std::string& key) const;
  const CoherenceSurface& insert(const std::string& key,
                                 CoherenceSurface surface);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, CoherenceSurface> surfaces_;
};

std::string surface_cache_key(const DensityPair& densities,
                              const SequenceTemplate& sequence,
                              const Eigen::VectorXd& epsilon_grid,
                              const std::vector<int>& n_pulses_grid,
                              const SimulationSettings& settings);

struct GridSearchSettings {
  SequenceTemplate sequence;
  Eigen::VectorXd epsilon_grid;     // rad
  std::vector<int> n_pulses_grid;
  SimulationSettings simulation;
  int n_min_pulses = 4;
  double smoothing_sigma_rad = kDefaultSmoothingSigmaRad;
};

struct DensityFitResult {
  std::vector<double> grid_n_system_ppm;
  std::vector<double> grid_n_bath_ppm;
  Eigen::MatrixXd chi2;         // rows = n_system, cols = n_bath
  Eigen::MatrixXi failed;       // 1 where the cell could not be evaluated
  std::vector<std::string> failure_messages;
  DensityPair best;
  AffineNuisance best_nuisance;
  double best_chi2 = 0.0;
  int n_min_pulses = 4;
};

// Evaluates chi^2 on the density grid.  Cells and realizations are
// flattened into one concurrent task pool; ties in the argmin break toward
// lower n_system, then lower n_bath (ascending scan with strict '<').
DensityFitResult grid_search(const ExperimentalDataset& data,
                             const std::vector<double>& grid_n_system_ppm,
                             const std::vector<double>& grid_n_bath_ppm,
                             const GridSearchSettings& settings,
                             SurfaceCache* cache = nullptr);

struct SyntheticDataSettings {
  SequenceTemplate sequence;
  Eigen::VectorXd epsilon_grid;    // default: -90..90 deg every 5 deg
  std::vector<int> n_pulses_grid = {2, 5, 10, 20, 30};
  SimulationSettings simulation;

  SyntheticDataSettings();
};

// Experiment-shaped dataset: the averaged surface plus i.i.d. Gaussian
// noise of width noise_sigma (written into the sigma column when > 0).
ExperimentalDataset generate_synthetic_dataset(
    const DensityPair& densities, double noise_sigma, std::uint64_t noise_seed,
    const SyntheticDataSettings& settings);

}  // namespace epscpmg
