#include "epscpmg/density_fit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "epscpmg/parallel.hpp"
#include "epscpmg/rng.hpp"

namespace epscpmg {

namespace {

void check_grids(const Eigen::VectorXd& epsilon_grid,
                 const std::vector<int>& n_pulses_grid) {
  if (epsilon_grid.size() == 0) throw ContractError("empty epsilon grid");
  for (Eigen::Index i = 1; i < epsilon_grid.size(); ++i) {
    if (epsilon_grid[i] <= epsilon_grid[i - 1]) {
      throw ContractError("epsilon grid must be strictly ascending");
    }
  }
  if (n_pulses_grid.empty()) throw ContractError("empty n_pulses grid");
  for (std::size_t i = 1; i < n_pulses_grid.size(); ++i) {
    if (n_pulses_grid[i] <= n_pulses_grid[i - 1]) {
      throw ContractError("n_pulses grid must be strictly ascending");
    }
  }
}

double resolve_tau_c(const DensityPair& densities,
                     const SimulationSettings& settings) {
  if (settings.tau_c_override_us.has_value()) {
    if (*settings.tau_c_override_us <= 0.0) {
      throw ConfigError("tau_c override must be positive");
    }
    return *settings.tau_c_override_us;
  }
  return correlation_time(densities.n_bath_ppm, settings.kappa_us_ppm);
}

}  // namespace

void SimulationSettings::validate() const {
  if (cluster_size < 1 || cluster_size > kMaxSpins) {
    throw ConfigError("cluster size must lie in [1, 12]");
  }
  if (realizations < 1) throw ConfigError("realizations must be >= 1");
  if (kappa_us_ppm <= 0.0) throw ConfigError("kappa must be positive");
  geometry.validate();
}

Eigen::MatrixXd simulate_realization(const DensityPair& densities,
                                     const SequenceTemplate& sequence,
                                     const Eigen::VectorXd& epsilon_grid,
                                     const std::vector<int>& n_pulses_grid,
                                     const SimulationSettings& settings,
                                     int realization_index) {
  check_grids(epsilon_grid, n_pulses_grid);
  settings.validate();

  const std::uint64_t config_seed =
      rng::derive_seed(settings.master_seed, rng::kStreamConfiguration,
                       static_cast<std::uint64_t>(realization_index));
  const SpinConfiguration config = sample_configuration(
      densities, settings.cluster_size, config_seed, settings.geometry);

  PulseSequenceSpec spec;
  spec.family = sequence.family;
  spec.tau_us = sequence.tau_us;
  spec.pulse_duration_us = sequence.pulse_duration_us;
  spec.n_pulses = n_pulses_grid.back();

  // Slack absorbs rounding in the pulse-grid arithmetic.
  const double horizon = total_duration(spec) * (1.0 + 1e-12) + 1e-9;
  const double tau_c = resolve_tau_c(densities, settings);
  const std::uint64_t traj_seed =
      rng::derive_seed(settings.master_seed, rng::kStreamTrajectory,
                       static_cast<std::uint64_t>(realization_index));
  const BathTrajectory traj =
      sample_trajectory(config, tau_c, horizon, traj_seed);

  SequenceEngine engine(config, traj, settings.propagation);
  return engine.run_batch(
      spec,
      std::span<const double>(epsilon_grid.data(),
                              static_cast<std::size_t>(epsilon_grid.size())),
      std::span<const int>(n_pulses_grid.data(), n_pulses_grid.size()));
}

CoherenceSurface average_surface(const DensityPair& densities,
                                 const SequenceTemplate& sequence,
                                 const Eigen::VectorXd& epsilon_grid,
                                 const std::vector<int>& n_pulses_grid,
                                 const SimulationSettings& settings) {
  check_grids(epsilon_grid, n_pulses_grid);
  settings.validate();

  const int realizations = settings.realizations;
  std::vector<Eigen::MatrixXd> blocks(
      static_cast<std::size_t>(realizations));
  parallel_for(static_cast<std::size_t>(realizations), settings.threads,
               [&](std::size_t r) {
                 try {
                   blocks[r] = simulate_realization(
                       densities, sequence, epsilon_grid, n_pulses_grid,
                       settings, static_cast<int>(r));
                 } catch (const std::exception& err) {
                   throw NumericalError(
                       "realization " + std::to_string(r) + " (seed stream " +
                       std::to_string(settings.master_seed) +
                       ") failed: " + err.what());
                 }
               });

  CoherenceSurface surface;
  surface.epsilon_grid = epsilon_grid;
  surface.n_pulses_grid = n_pulses_grid;
  surface.realization_count = realizations;
  surface.densities = densities;
  surface.sequence = sequence;

  const Eigen::Index rows = epsilon_grid.size();
  const Eigen::Index cols = static_cast<Eigen::Index>(n_pulses_grid.size());
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(rows, cols);
  for (const auto& block : blocks) mean += block;
  mean /= realizations;
  surface.values = mean;

  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(rows, cols);
  if (realizations >= 2) {
    for (const auto& block : blocks) {
      var += (block - mean).cwiseAbs2();
    }
    var /= static_cast<double>(realizations) * (realizations - 1);
  }
  surface.std_errors = var.cwiseSqrt();
  return surface;
}

ChiSquaredResult chi_squared(const CoherenceSurface& sim,
                             const ExperimentalDataset& data,
                             int n_min_pulses, double smoothing_sigma_rad) {
  if (sim.epsilon_grid.size() < 2) {
    throw ContractError("simulated surface needs at least two epsilon points");
  }
  // Smoothing assumes the uniform grid the simulator produces.
  const double step = sim.epsilon_grid[1] - sim.epsilon_grid[0];
  for (Eigen::Index i = 2; i < sim.epsilon_grid.size(); ++i) {
    if (std::abs(sim.epsilon_grid[i] - sim.epsilon_grid[i - 1] - step) >
        1e-9 * std::max(1.0, std::abs(step))) {
      throw ContractError("epsilon grid must be uniform for smoothing");
    }
  }
  Eigen::MatrixXd smoothed(sim.values.rows(), sim.values.cols());
  for (Eigen::Index c = 0; c < sim.values.cols(); ++c) {
    smoothed.col(c) =
        gaussian_smooth(sim.values.col(c), step, smoothing_sigma_rad);
  }

  const bool weighted = data.all_have_sigma();
  std::vector<double> s_vals, d_vals, w_vals;
  for (const auto& row : data.rows) {
    if (row.n_pulses < n_min_pulses) continue;
    const auto it = std::find(sim.n_pulses_grid.begin(),
                              sim.n_pulses_grid.end(), row.n_pulses);
    if (it == sim.n_pulses_grid.end()) {
      throw DataError("data point at N = " + std::to_string(row.n_pulses) +
                      " is not covered by the simulated pulse grid");
    }
    const Eigen::Index col = it - sim.n_pulses_grid.begin();
    const double eps = row.epsilon_deg * M_PI / 180.0;
    if (eps < sim.epsilon_grid[0] - 1e-12 ||
        eps > sim.epsilon_grid[sim.epsilon_grid.size() - 1] + 1e-12) {
      throw DataError("data epsilon outside the simulated grid");
    }
    const double x = (eps - sim.epsilon_grid[0]) / step;
    const Eigen::Index j = std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(std::floor(x)), 0,
        sim.epsilon_grid.size() - 2);
    const double frac = x - j;
    s_vals.push_back((1.0 - frac) * smoothed(j, col) +
                     frac * smoothed(j + 1, col));
    d_vals.push_back(row.coherence);
    w_vals.push_back(weighted ? 1.0 / (row.sigma * row.sigma) : 1.0);
  }
  if (s_vals.empty()) {
    throw DataError(
        "empty overlap: no data rows with n_pulses >= " +
        std::to_string(n_min_pulses) +
        " remain; lower n_min_pulses or supply higher-N data");
  }

  // Closed-form affine nuisance: minimize sum w (a s + b - d)^2.
  double sw = 0, sws = 0, swd = 0, swss = 0, swsd = 0;
  for (std::size_t i = 0; i < s_vals.size(); ++i) {
    sw += w_vals[i];
    sws += w_vals[i] * s_vals[i];
    swd += w_vals[i] * d_vals[i];
    swss += w_vals[i] * s_vals[i] * s_vals[i];
    swsd += w_vals[i] * s_vals[i] * d_vals[i];
  }
  const double det = sw * swss - sws * sws;
  AffineNuisance nuisance;
  if (std::abs(det) < 1e-12 * std::max(1.0, sw * swss)) {
    // Simulated values are (numerically) constant: scale is unidentifiable.
    nuisance.scale = 0.0;
    nuisance.offset = swd / sw;
  } else {
    nuisance.scale = (sw * swsd - sws * swd) / det;
    nuisance.offset = (swss * swd - sws * swsd) / det;
    if (nuisance.scale < 0.0) {
      // A negative readout contrast is unphysical; the constrained optimum
      // sits on the boundary.
      nuisance.scale = 0.0;
      nuisance.offset = swd / sw;
    }
  }

  double chi2 = 0.0;
  for (std::size_t i = 0; i < s_vals.size(); ++i) {
    const double r = nuisance.scale * s_vals[i] + nuisance.offset - d_vals[i];
    chi2 += w_vals[i] * r * r;
  }
  return {chi2, static_cast<int>(s_vals.size()), nuisance};
}

const CoherenceSurface* SurfaceCache::find(const std::string& key) const {
  std::lock_guard<std::mutex> lock(mutex_);
  const auto it = surfaces_.find(key);
  return it == surfaces_.end() ? nullptr : &it->second;
}

const CoherenceSurface& SurfaceCache::insert(const std::string& key,
                                             CoherenceSurface surface) {
  std::lock_guard<std::mutex> lock(mutex_);
  const auto [it, inserted] = surfaces_.emplace(key, std::move(surface));
  return it->second;
}

std::size_t SurfaceCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return surfaces_.size();
}

std::string surface_cache_key(const DensityPair& densities,
                              const SequenceTemplate& sequence,
                              const Eigen::VectorXd& epsilon_grid,
                              const std::vector<int>& n_pulses_grid,
                              const SimulationSettings& settings) {
  std::ostringstream key;
  key << std::setprecision(17);
  key << "ns=" << densities.n_system_ppm << ";nb=" << densities.n_bath_ppm
      << ";family=" << to_string(sequence.family)
      << ";tau=" << sequence.tau_us << ";tp=" << sequence.pulse_duration_us
      << ";M=" << settings.cluster_size << ";R=" << settings.realizations
      << ";seed=" << settings.master_seed
      << ";kappa=" << settings.kappa_us_ppm << ";tauc="
      << (settings.tau_c_override_us ? *settings.tau_c_override_us : -1.0)
      << ";prop=" << to_string(settings.propagation)
      << ";rhoC=" << settings.geometry.carbon_site_density_nm3
      << ";Csys=" << settings.geometry.coupling_system_rad_nm3
      << ";Cbath=" << settings.geometry.coupling_bath_rad_nm3
      << ";rex=" << settings.geometry.exclusion_radius_nm
      << ";cut=" << settings.geometry.bath_coupling_cutoff << ";axis="
      << settings.geometry.quantization_axis.transpose() << ";eps=";
  for (Eigen::Index i = 0; i < epsilon_grid.size(); ++i) {
    key << epsilon_grid[i] << ',';
  }
  key << ";N=";
  for (const int n : n_pulses_grid) key << n << ',';
  return key.str();
}

DensityFitResult grid_search(const ExperimentalDataset& data,
                             const std::vector<double>& grid_n_system_ppm,
                             const std::vector<double>& grid_n_bath_ppm,
                             const GridSearchSettings& settings,
                             SurfaceCache* cache) {
  if (grid_n_system_ppm.empty() || grid_n_bath_ppm.empty()) {
    throw ContractError("density grids must be non-empty");
  }
  check_grids(settings.epsilon_grid, settings.n_pulses_grid);
  settings.simulation.validate();
  if (data.rows.empty()) throw DataError("dataset is empty");

  SurfaceCache local_cache;
  SurfaceCache& surfaces = cache ? *cache : local_cache;

  const std::size_t n_sys = grid_n_system_ppm.size();
  const std::size_t n_bath = grid_n_bath_ppm.size();
  const std::size_t n_cells = n_sys * n_bath;
  const int realizations = settings.simulation.realizations;

  struct CellWork {
    std::size_t cell;
    DensityPair densities;
    std::string key;
    std::vector<Eigen::MatrixXd> blocks;
    std::string error;
  };
  std::vector<CellWork> pending;
  std::vector<const CoherenceSurface*> cell_surface(n_cells, nullptr);

  for (std::size_t c = 0; c < n_cells; ++c) {
    const DensityPair densities{grid_n_system_ppm[c / n_bath],
                                grid_n_bath_ppm[c % n_bath]};
    const std::string key = surface_cache_key(
        densities, settings.sequence, settings.epsilon_grid,
        settings.n_pulses_grid, settings.simulation);
    if (const CoherenceSurface* hit = surfaces.find(key)) {
      cell_surface[c] = hit;
    } else {
      CellWork work;
      work.cell = c;
      work.densities = densities;
      work.key = key;
      work.blocks.resize(static_cast<std::size_t>(realizations));
      pending.push_back(std::move(work));
    }
  }

  // Flattened (cell, realization) task pool: cells and realizations both
  // run concurrently, results land in per-index slots.
  const std::size_t n_tasks = pending.size() * realizations;
  std::mutex error_mutex;
  parallel_for(n_tasks, settings.simulation.threads, [&](std::size_t task) {
    CellWork& work = pending[task / realizations];
    const int r = static_cast<int>(task % realizations);
    try {
      work.blocks[static_cast<std::size_t>(r)] = simulate_realization(
          work.densities, settings.sequence, settings.epsilon_grid,
          settings.n_pulses_grid, settings.simulation, r);
    } catch (const std::exception& err) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (work.error.empty()) work.error = err.what();
    }
  });

  for (CellWork& work : pending) {
    if (!work.error.empty()) continue;
    CoherenceSurface surface;
    surface.epsilon_grid = settings.epsilon_grid;
    surface.n_pulses_grid = settings.n_pulses_grid;
    surface.realization_count = realizations;
    surface.densities = work.densities;
    surface.sequence = settings.sequence;
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(
        settings.epsilon_grid.size(),
        static_cast<Eigen::Index>(settings.n_pulses_grid.size()));
    for (const auto& block : work.blocks) mean += block;
    mean /= realizations;
    surface.values = mean;
    Eigen::MatrixXd var = Eigen::MatrixXd::Zero(mean.rows(), mean.cols());
    if (realizations >= 2) {
      for (const auto& block : work.blocks) var += (block - mean).cwiseAbs2();
      var /= static_cast<double>(realizations) * (realizations - 1);
    }
    surface.std_errors = var.cwiseSqrt();
    cell_surface[work.cell] = &surfaces.insert(work.key, std::move(surface));
  }

  DensityFitResult result;
  result.grid_n_system_ppm = grid_n_system_ppm;
  result.grid_n_bath_ppm = grid_n_bath_ppm;
  result.n_min_pulses = settings.n_min_pulses;
  result.chi2 = Eigen::MatrixXd::Constant(
      static_cast<Eigen::Index>(n_sys), static_cast<Eigen::Index>(n_bath),
      std::numeric_limits<double>::quiet_NaN());
  result.failed = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(n_sys),
                                        static_cast<Eigen::Index>(n_bath));

  bool have_best = false;
  for (std::size_t c = 0; c < n_cells; ++c) {
    const Eigen::Index i = static_cast<Eigen::Index>(c / n_bath);
    const Eigen::Index j = static_cast<Eigen::Index>(c % n_bath);
    std::string error;
    if (cell_surface[c] == nullptr) {
      for (const auto& work : pending) {
        if (work.cell == c) error = work.error;
      }
      result.failed(i, j) = 1;
      result.failure_messages.push_back(
          "cell (" + std::to_string(grid_n_system_ppm[c / n_bath]) + ", " +
          std::to_string(grid_n_bath_ppm[c % n_bath]) + "): " + error);
      continue;
    }
    const ChiSquaredResult cell = chi_squared(
        *cell_surface[c], data, settings.n_min_pulses,
        settings.smoothing_sigma_rad);
    result.chi2(i, j) = cell.value;
    if (!have_best || cell.value < result.best_chi2) {
      have_best = true;
      result.best_chi2 = cell.value;
      result.best = {grid_n_system_ppm[c / n_bath],
                     grid_n_bath_ppm[c % n_bath]};
      result.best_nuisance = cell.nuisance;
    }
  }
  if (!have_best) {
    throw NumericalError("every grid cell failed; no best fit available");
  }
  return result;
}

SyntheticDataSettings::SyntheticDataSettings() {
  const int n_eps = 37;
  epsilon_grid.resize(n_eps);
  for (int i = 0; i < n_eps; ++i) {
    epsilon_grid[i] = (-90.0 + 5.0 * i) * M_PI / 180.0;
  }
}

ExperimentalDataset generate_synthetic_dataset(
    const DensityPair& densities, double noise_sigma, std::uint64_t noise_seed,
    const SyntheticDataSettings& settings) {
  if (noise_sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
  const CoherenceSurface surface =
      average_surface(densities, settings.sequence, settings.epsilon_grid,
                      settings.n_pulses_grid, settings.simulation);

  ExperimentalDataset dataset;
  rng::Random noise(rng::derive_seed(noise_seed, rng::kStreamNoise, 0));
  for (std::size_t c = 0; c < surface.n_pulses_grid.size(); ++c) {
    for (Eigen::Index i = 0; i < surface.epsilon_grid.size(); ++i) {
      ExperimentalDataset::Row row{};
      row.epsilon_deg = surface.epsilon_grid[i] * 180.0 / M_PI;
      row.n_pulses = surface.n_pulses_grid[c];
      row.coherence = surface.values(i, static_cast<Eigen::Index>(c)) +
                      (noise_sigma > 0.0 ? noise_sigma * noise.normal() : 0.0);
      row.sigma = noise_sigma;
      row.has_sigma = noise_sigma > 0.0;
      dataset.rows.push_back(row);
    }
  }
  return dataset;
}

}  // namespace epscpmg
