#include "epscpmg/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "epscpmg/config.hpp"
#include "epscpmg/dataset.hpp"
#include "epscpmg/density_fit.hpp"
#include "epscpmg/version.hpp"

namespace epscpmg::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> realizations;
  std::optional<int> threads;
  std::optional<double> smoothing_deg;
  std::optional<std::string> out_dir;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Configuration file (JSON)");
  cmd->add_option("--seed", flags.seed, "Override the master seed");
  cmd->add_option("--realizations", flags.realizations,
                  "Override the realization count");
  cmd->add_option("--threads", flags.threads,
                  "Worker threads (0 = hardware concurrency)");
  cmd->add_option("--smoothing-deg", flags.smoothing_deg,
                  "Override the Gaussian smoothing width (degrees)");
  cmd->add_option("--out", flags.out_dir, "Override the output directory");
}

RunConfig resolve_config(const CommonFlags& flags) {
  RunConfig config =
      flags.config_path.empty() ? RunConfig{} : load_config(flags.config_path);
  if (flags.seed) config.master_seed = *flags.seed;
  if (flags.realizations) config.realizations = *flags.realizations;
  if (flags.threads) config.threads = *flags.threads;
  if (flags.smoothing_deg) config.smoothing_deg = *flags.smoothing_deg;
  if (flags.out_dir) config.output_directory = *flags.out_dir;
  config.validate();
  return config;
}

std::string format_double(double value) {
  std::ostringstream out;
  out << std::setprecision(12) << value;
  return out.str();
}

void write_text_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "."
                                                    : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << content;
}

// Sidecar files are themselves valid config files: the resolved config plus
// a provenance block the loader accepts and ignores.
void write_sidecar(const fs::path& path, const RunConfig& config,
                   const std::string& command,
                   const std::vector<std::string>& inputs,
                   const std::vector<std::string>& outputs) {
  json j = config.to_json();
  j["provenance"] = {{"command", command},
                     {"tool_version", kVersion},
                     {"config_hash", config_hash(config)},
                     {"master_seed", config.master_seed},
                     {"inputs", inputs},
                     {"outputs", outputs}};
  write_text_file(path, j.dump(2) + "\n");
}

std::vector<std::string> provenance_comments(const RunConfig& config) {
  return {"tool_version=" + std::string(kVersion),
          "config_hash=" + config_hash(config),
          "master_seed=" + std::to_string(config.master_seed)};
}

std::string surface_csv(const CoherenceSurface& surface,
                        const std::vector<std::string>& comments) {
  std::ostringstream out;
  for (const auto& comment : comments) out << "# " << comment << "\n";
  out << "epsilon_deg,n_pulses,coherence,stderr\n";
  out << std::setprecision(12);
  for (std::size_t c = 0; c < surface.n_pulses_grid.size(); ++c) {
    for (Eigen::Index i = 0; i < surface.epsilon_grid.size(); ++i) {
      out << surface.epsilon_grid[i] * 180.0 / M_PI << ','
          << surface.n_pulses_grid[c] << ','
          << surface.values(i, static_cast<Eigen::Index>(c)) << ','
          << surface.std_errors(i, static_cast<Eigen::Index>(c)) << '\n';
    }
  }
  return out.str();
}

int cmd_simulate(const CommonFlags& flags) {
  const RunConfig config = resolve_config(flags);
  const CoherenceSurface surface = average_surface(
      config.density_pair(), config.sequence_template(),
      config.epsilon_grid_rad(), config.n_pulses,
      config.simulation_settings());

  const fs::path dir(config.output_directory);
  const fs::path csv_path = dir / "surface.csv";
  const fs::path sidecar_path = dir / "surface.meta.json";
  write_text_file(csv_path, surface_csv(surface,
                                        provenance_comments(config)));
  write_sidecar(sidecar_path, config, "simulate", {},
                {csv_path.filename().string()});
  std::cout << "wrote " << csv_path.string() << " and "
            << sidecar_path.string() << "\n";
  return kExitOk;
}

int cmd_synth_data(const CommonFlags& flags) {
  const RunConfig config = resolve_config(flags);
  SyntheticDataSettings settings;
  settings.sequence = config.sequence_template();
  settings.epsilon_grid = config.epsilon_grid_rad();
  settings.n_pulses_grid = config.n_pulses;
  settings.simulation = config.simulation_settings();
  const ExperimentalDataset dataset = generate_synthetic_dataset(
      config.density_pair(), config.noise_sigma, config.master_seed,
      settings);

  const fs::path dir(config.output_directory);
  const fs::path csv_path = dir / "synthetic.csv";
  std::ostringstream out;
  write_dataset_csv(out, dataset, provenance_comments(config));
  write_text_file(csv_path, out.str());
  write_sidecar(dir / "synthetic.meta.json", config, "synth-data", {},
                {csv_path.filename().string()});
  std::cout << "wrote " << csv_path.string() << "\n";
  return kExitOk;
}

int cmd_fit_density(const CommonFlags& flags,
                    const std::vector<std::string>& data_paths) {
  const RunConfig config = resolve_config(flags);
  if (data_paths.empty()) throw ConfigError("fit-density requires --data");

  GridSearchSettings settings;
  settings.sequence = config.sequence_template();
  settings.epsilon_grid = config.epsilon_grid_rad();
  settings.n_pulses_grid = config.n_pulses;
  settings.simulation = config.simulation_settings();
  settings.n_min_pulses = config.n_min_pulses;
  settings.smoothing_sigma_rad = config.smoothing_sigma_rad();

  // One cache across datasets: every dataset reuses the same surfaces.
  SurfaceCache cache;
  const fs::path dir(config.output_directory);
  for (const std::string& data_path : data_paths) {
    const ExperimentalDataset data = read_dataset_csv(data_path);
    const DensityFitResult result =
        grid_search(data, config.grid_n_system_ppm, config.grid_n_bath_ppm,
                    settings, &cache);

    const std::string stem = fs::path(data_path).stem().string();
    const std::string suffix =
        data_paths.size() > 1 ? "_" + stem : std::string();

    json jr;
    jr["grid_n_system_ppm"] = result.grid_n_system_ppm;
    jr["grid_n_bath_ppm"] = result.grid_n_bath_ppm;
    // chi2 is row-major: rows indexed by n_system, columns by n_bath.
    std::vector<double> chi2_flat;
    std::vector<int> failed_flat;
    for (Eigen::Index i = 0; i < result.chi2.rows(); ++i) {
      for (Eigen::Index k = 0; k < result.chi2.cols(); ++k) {
        chi2_flat.push_back(result.chi2(i, k));
        failed_flat.push_back(result.failed(i, k));
      }
    }
    jr["chi2_row_major"] = chi2_flat;
    jr["failed_row_major"] = failed_flat;
    jr["best"] = {{"n_system_ppm", result.best.n_system_ppm},
                  {"n_bath_ppm", result.best.n_bath_ppm},
                  {"chi2", result.best_chi2}};
    jr["nuisance"] = {{"scale", result.best_nuisance.scale},
                      {"offset", result.best_nuisance.offset}};
    jr["n_min_pulses"] = result.n_min_pulses;
    jr["failures"] = result.failure_messages;
    jr["data_file"] = data_path;
    jr["provenance"] = {{"command", "fit-density"},
                        {"tool_version", kVersion},
                        {"config_hash", config_hash(config)},
                        {"master_seed", config.master_seed}};
    write_text_file(dir / ("density_fit" + suffix + ".json"),
                    jr.dump(2) + "\n");

    std::ostringstream grid_csv;
    for (const auto& comment : provenance_comments(config)) {
      grid_csv << "# " << comment << "\n";
    }
    grid_csv << "n_system_ppm,n_bath_ppm,chi2\n" << std::setprecision(12);
    for (std::size_t i = 0; i < result.grid_n_system_ppm.size(); ++i) {
      for (std::size_t k = 0; k < result.grid_n_bath_ppm.size(); ++k) {
        grid_csv << result.grid_n_system_ppm[i] << ','
                 << result.grid_n_bath_ppm[k] << ','
                 << result.chi2(static_cast<Eigen::Index>(i),
                                static_cast<Eigen::Index>(k))
                 << '\n';
      }
    }
    write_text_file(dir / ("chi2_grid" + suffix + ".csv"), grid_csv.str());

    std::cout << stem << ": best fit n_system = "
              << format_double(result.best.n_system_ppm)
              << " ppm, n_bath = " << format_double(result.best.n_bath_ppm)
              << " ppm, chi2 = " << format_double(result.best_chi2) << "\n";
  }
  write_sidecar(dir / "density_fit.meta.json", config, "fit-density",
                data_paths, {});
  return kExitOk;
}

int cmd_fit_analytic(const CommonFlags& flags, const std::string& data_path,
                     bool stretched, std::optional<double> fix_exponent) {
  const RunConfig config = resolve_config(flags);
  if (data_path.empty()) throw ConfigError("fit-analytic requires --data");
  const fs::path dir(config.output_directory);

  if (stretched) {
    const DecaySeries series = read_decay_csv(data_path);
    std::vector<CurvePoint> points;
    for (const auto& row : series.rows) {
      points.push_back({row.time_us, row.coherence,
                        row.has_sigma ? row.sigma : 0.0});
    }
    const StretchedExpReport report =
        fit_stretched_exponential(points, fix_exponent);
    json jr;
    jr["model"] = "amplitude * exp(-(t/T2)^n)";
    jr["parameters"] = {
        {{"name", "amplitude"},
         {"estimate", report.fit.amplitude},
         {"std_error", report.std_errors[0]}},
        {{"name", "t2_us"},
         {"estimate", report.fit.t2_us},
         {"std_error", report.std_errors[1]}},
        {{"name", "exponent"},
         {"estimate", report.fit.exponent},
         {"std_error", report.std_errors[2]},
         {"fixed", fix_exponent.has_value()}}};
    jr["chi2"] = report.chi2;
    jr["residual_norm"] = report.residual_norm;
    jr["points"] = report.points;
    jr["data_file"] = data_path;
    jr["provenance"] = {{"command", "fit-analytic"},
                        {"tool_version", kVersion},
                        {"config_hash", config_hash(config)}};
    write_text_file(dir / "stretched_exp_fit.json", jr.dump(2) + "\n");
    std::cout << "T2 = " << format_double(report.fit.t2_us)
              << " us, n = " << format_double(report.fit.exponent) << "\n";
    return kExitOk;
  }

  const ExperimentalDataset data = read_dataset_csv(data_path);
  int n_value = data.rows.front().n_pulses;
  for (const auto& row : data.rows) {
    if (row.n_pulses != n_value) {
      throw DataError(
          "fit-analytic expects a single-N dataset; found multiple pulse "
          "counts");
    }
  }
  std::vector<CurvePoint> points;
  for (const auto& row : data.rows) {
    points.push_back({row.epsilon_deg * M_PI / 180.0, row.coherence,
                      row.has_sigma ? row.sigma : 0.0});
  }
  const AnalyticFitReport report =
      fit_coherence_curve(points, config.smoothing_sigma_rad());

  json jr;
  jr["model"] =
      "A eps^2 / ((J/D1)^2 + eps^2 + (D2/D1)^2 eps^4 + (D3/D1)^2 eps^6), "
      "Gaussian-smoothed in eps";
  jr["parameters"] = {
      {{"name", "amplitude"},
       {"estimate", report.params.amplitude},
       {"std_error", report.std_errors[0]}},
      {{"name", "j_over_d1_rad"},
       {"estimate", report.params.j_over_d1},
       {"std_error", report.std_errors[1]}},
      {{"name", "d2_over_d1"},
       {"estimate", report.params.d2_over_d1},
       {"std_error", report.std_errors[2]}},
      {{"name", "d3_over_d1"},
       {"estimate", report.params.d3_over_d1},
       {"std_error", report.std_errors[3]}}};
  jr["smoothing_sigma_deg"] = config.smoothing_deg;
  jr["chi2"] = report.chi2;
  jr["residual_norm"] = report.residual_norm;
  jr["points"] = report.points;
  jr["n_pulses"] = n_value;
  // If the leading quadratic coefficient equals the spin-locking rate
  // 1/(2 tau), the fitted ratio implies this absolute coupling scale.
  jr["implied_j_rad_us_if_d1_is_inv_2tau"] =
      report.params.j_over_d1 / (2.0 * config.tau_us);
  jr["data_file"] = data_path;
  jr["provenance"] = {{"command", "fit-analytic"},
                      {"tool_version", kVersion},
                      {"config_hash", config_hash(config)}};
  write_text_file(dir / "analytic_fit.json", jr.dump(2) + "\n");

  // Smoothed model curve for plotting.
  std::ostringstream curve;
  for (const auto& comment : provenance_comments(config)) {
    curve << "# " << comment << "\n";
  }
  curve << "epsilon_deg,coherence\n" << std::setprecision(12);
  Eigen::VectorXd eps_grid(181);
  for (int i = 0; i <= 180; ++i) eps_grid[i] = (i - 90) * M_PI / 180.0;
  const Eigen::VectorXd model = smoothed_model(eps_grid, report.params);
  for (int i = 0; i <= 180; ++i) {
    curve << eps_grid[i] * 180.0 / M_PI << ',' << model[i] << '\n';
  }
  write_text_file(dir / "analytic_model.csv", curve.str());

  std::cout << "J/D1 = " << format_double(report.params.j_over_d1)
            << " rad (" << format_double(report.params.j_over_d1 * 180.0 / M_PI)
            << " deg), A = " << format_double(report.params.amplitude) << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{
      "Dipolar spin-ensemble pulse-sequence simulator and density-inversion "
      "toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CommonFlags simulate_flags, synth_flags, density_flags, analytic_flags;
  std::vector<std::string> density_data;
  std::string analytic_data;
  bool stretched = false;
  std::optional<double> fix_exponent;

  CLI::App* simulate =
      app.add_subcommand("simulate", "Average a coherence surface");
  add_common_flags(simulate, simulate_flags);

  CLI::App* synth = app.add_subcommand(
      "synth-data", "Generate a noisy synthetic dataset");
  add_common_flags(synth, synth_flags);

  CLI::App* fit_density = app.add_subcommand(
      "fit-density", "Invert measured coherence to spin densities");
  add_common_flags(fit_density, density_flags);
  fit_density->add_option("--data", density_data,
                          "Dataset CSV (repeatable)");

  CLI::App* fit_analytic = app.add_subcommand(
      "fit-analytic", "Fit the closed-form coherence or decay model");
  add_common_flags(fit_analytic, analytic_flags);
  fit_analytic->add_option("--data", analytic_data, "Dataset CSV");
  fit_analytic->add_flag("--stretched-exp", stretched,
                         "Fit a stretched exponential to a decay series");
  fit_analytic->add_option("--fix-exponent", fix_exponent,
                           "Fix the stretch exponent n");

  try {
    std::vector<std::string> cli_args(args.rbegin(), args.rend());
    app.parse(cli_args);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(simulate_flags);
    if (synth->parsed()) return cmd_synth_data(synth_flags);
    if (fit_density->parsed()) {
      return cmd_fit_density(density_flags, density_data);
    }
    if (fit_analytic->parsed()) {
      return cmd_fit_analytic(analytic_flags, analytic_data, stretched,
                              fix_exponent);
    }
    std::cerr << "no subcommand given\n";
    return kExitConfig;
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const FitError& err) {
    std::cerr << "fit error: " << err.what() << "\n";
    return kExitFit;
  } catch (const NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitNumerical;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace epscpmg::cli
