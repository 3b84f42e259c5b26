#include "epscpmg/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace epscpmg {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& source, const std::string& message) {
  throw ConfigError(source + ": " + message);
}

void check_keys(const json& object, const std::string& source,
                const std::string& path,
                const std::set<std::string>& allowed) {
  for (const auto& [key, value] : object.items()) {
    if (!allowed.count(key)) {
      fail(source, "unknown key '" + path + key + "'");
    }
  }
}

double get_number(const json& object, const std::string& source,
                  const std::string& path, const char* key,
                  double fallback) {
  if (!object.contains(key)) return fallback;
  const json& v = object.at(key);
  if (!v.is_number()) fail(source, "'" + path + key + "' must be a number");
  return v.get<double>();
}

int get_int(const json& object, const std::string& source,
            const std::string& path, const char* key, int fallback) {
  if (!object.contains(key)) return fallback;
  const json& v = object.at(key);
  if (!v.is_number_integer()) {
    fail(source, "'" + path + key + "' must be an integer");
  }
  return v.get<int>();
}

std::string get_string(const json& object, const std::string& source,
                       const std::string& path, const char* key,
                       const std::string& fallback) {
  if (!object.contains(key)) return fallback;
  const json& v = object.at(key);
  if (!v.is_string()) fail(source, "'" + path + key + "' must be a string");
  return v.get<std::string>();
}

// Grid entries are either an explicit array of values or an object with
// min/max plus either step or points (+ optional "spacing": "log").
std::vector<double> get_grid(const json& object, const std::string& source,
                             const std::string& path, const char* key,
                             std::vector<double> fallback) {
  if (!object.contains(key)) return fallback;
  const json& v = object.at(key);
  const std::string where = path + key;
  std::vector<double> values;
  if (v.is_array()) {
    for (const auto& item : v) {
      if (!item.is_number()) fail(source, "'" + where + "' must be numeric");
      values.push_back(item.get<double>());
    }
  } else if (v.is_object()) {
    check_keys(v, source, where + ".", {"min", "max", "step", "points",
                                        "spacing"});
    if (!v.contains("min") || !v.contains("max")) {
      fail(source, "'" + where + "' needs min and max");
    }
    const double lo = v.at("min").get<double>();
    const double hi = v.at("max").get<double>();
    const std::string spacing =
        get_string(v, source, where + ".", "spacing", "linear");
    if (v.contains("step")) {
      const double step = v.at("step").get<double>();
      if (step <= 0.0) fail(source, "'" + where + ".step' must be positive");
      const int count = static_cast<int>(std::round((hi - lo) / step)) + 1;
      for (int i = 0; i < count; ++i) values.push_back(lo + i * step);
    } else if (v.contains("points")) {
      const int points = v.at("points").get<int>();
      if (points < 1) fail(source, "'" + where + ".points' must be >= 1");
      if (spacing == "log") {
        values = log_spaced(lo, hi, points);
      } else {
        for (int i = 0; i < points; ++i) {
          values.push_back(points == 1
                               ? lo
                               : lo + (hi - lo) * i / (points - 1));
        }
      }
    } else {
      fail(source, "'" + where + "' needs step or points");
    }
  } else {
    fail(source, "'" + where + "' must be an array or a grid object");
  }
  if (values.empty()) fail(source, "'" + where + "' resolved to no values");
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] <= values[i - 1]) {
      fail(source, "'" + where + "' must be strictly ascending");
    }
  }
  return values;
}

std::vector<double> default_epsilon_grid_deg() {
  std::vector<double> grid;
  for (int i = 0; i <= 36; ++i) grid.push_back(-90.0 + 5.0 * i);
  return grid;
}

}  // namespace

std::vector<double> log_spaced(double lo, double hi, int points) {
  if (lo <= 0.0 || hi <= lo) throw ConfigError("log grid needs 0 < lo < hi");
  if (points < 2) throw ConfigError("log grid needs >= 2 points");
  std::vector<double> values(static_cast<std::size_t>(points));
  const double ratio = std::log(hi / lo) / (points - 1);
  for (int i = 0; i < points; ++i) values[i] = lo * std::exp(ratio * i);
  values.back() = hi;
  return values;
}

RunConfig::RunConfig()
    : epsilon_grid_deg(default_epsilon_grid_deg()),
      grid_n_system_ppm(log_spaced(0.1, 10.0, 7)),
      grid_n_bath_ppm(log_spaced(2.0, 100.0, 7)) {}

GeometryParams RunConfig::geometry_params() const {
  GeometryParams params;
  params.carbon_site_density_nm3 = carbon_site_density_nm3;
  params.coupling_system_rad_nm3 = 2.0 * M_PI * coupling_system_mhz_nm3;
  params.coupling_bath_rad_nm3 = 2.0 * M_PI * coupling_bath_mhz_nm3;
  params.exclusion_radius_nm = exclusion_radius_nm;
  params.bath_coupling_cutoff = bath_coupling_cutoff_rad_us;
  Eigen::Vector3d axis(quantization_axis[0], quantization_axis[1],
                       quantization_axis[2]);
  const double norm = axis.norm();
  if (norm <= 0.0) throw ConfigError("quantization axis must be nonzero");
  params.quantization_axis = axis / norm;
  return params;
}

SimulationSettings RunConfig::simulation_settings() const {
  SimulationSettings settings;
  settings.cluster_size = cluster_size;
  settings.realizations = realizations;
  settings.master_seed = master_seed;
  settings.threads = threads;
  settings.geometry = geometry_params();
  settings.kappa_us_ppm = kappa_us_ppm;
  settings.tau_c_override_us = tau_c_override_us;
  settings.propagation = propagation_mode_from_string(propagation);
  return settings;
}

SequenceTemplate RunConfig::sequence_template() const {
  SequenceTemplate tmpl;
  tmpl.family = family_from_string(family);
  tmpl.tau_us = tau_us;
  tmpl.pulse_duration_us = pulse_duration_us;
  return tmpl;
}

DensityPair RunConfig::density_pair() const {
  return {n_system_ppm, n_bath_ppm};
}

Eigen::VectorXd RunConfig::epsilon_grid_rad() const {
  Eigen::VectorXd grid(static_cast<Eigen::Index>(epsilon_grid_deg.size()));
  for (std::size_t i = 0; i < epsilon_grid_deg.size(); ++i) {
    grid[static_cast<Eigen::Index>(i)] = epsilon_grid_deg[i] * M_PI / 180.0;
  }
  return grid;
}

double RunConfig::smoothing_sigma_rad() const {
  return smoothing_deg * M_PI / 180.0;
}

void RunConfig::validate() const {
  if (carbon_site_density_nm3 <= 0.0 || coupling_system_mhz_nm3 <= 0.0 ||
      coupling_bath_mhz_nm3 <= 0.0 || exclusion_radius_nm <= 0.0 ||
      kappa_us_ppm <= 0.0) {
    throw ConfigError("physics constants must be positive");
  }
  if (bath_coupling_cutoff_rad_us < 0.0) {
    throw ConfigError("bath coupling cutoff must be >= 0");
  }
  if (tau_c_override_us && *tau_c_override_us <= 0.0) {
    throw ConfigError("tau_c override must be positive");
  }
  if (quantization_axis.size() != 3) {
    throw ConfigError("quantization axis must have three components");
  }
  if (cluster_size < 1 || cluster_size > kMaxSpins) {
    throw ConfigError("cluster_size must lie in [1, 12]");
  }
  if (realizations < 1) throw ConfigError("realizations must be >= 1");
  if (pulse_duration_us < 0.0) {
    throw ConfigError("pulse duration must be >= 0");
  }
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (tau_us <= 0.0) throw ConfigError("tau must be positive");
  if (2.0 * tau_us <= pulse_duration_us) {
    throw ConfigError("pulse duration must fit inside the 2 tau window");
  }
  if (n_pulses.empty()) throw ConfigError("n_pulses must be non-empty");
  for (std::size_t i = 0; i < n_pulses.size(); ++i) {
    if (n_pulses[i] < 0) throw ConfigError("n_pulses must be >= 0");
    if (i > 0 && n_pulses[i] <= n_pulses[i - 1]) {
      throw ConfigError("n_pulses must be strictly ascending");
    }
  }
  if (epsilon_grid_deg.size() < 1) {
    throw ConfigError("epsilon grid must be non-empty");
  }
  if (n_system_ppm < 0.0 || n_bath_ppm < 0.0) {
    throw ConfigError("densities must be >= 0");
  }
  if (n_min_pulses < 0) throw ConfigError("n_min_pulses must be >= 0");
  if (smoothing_deg < 0.0) throw ConfigError("smoothing must be >= 0");
  if (noise_sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
  if (output_directory.empty()) {
    throw ConfigError("output directory must be set");
  }
  family_from_string(family);
  propagation_mode_from_string(propagation);
  // Instantiating the derived structs runs their own validation.
  geometry_params().validate();
}

nlohmann::json RunConfig::to_json() const {
  json physics{{"carbon_site_density_nm3", carbon_site_density_nm3},
               {"coupling_system_mhz_nm3", coupling_system_mhz_nm3},
               {"coupling_bath_mhz_nm3", coupling_bath_mhz_nm3},
               {"exclusion_radius_nm", exclusion_radius_nm},
               {"bath_coupling_cutoff_rad_us", bath_coupling_cutoff_rad_us},
               {"kappa_us_ppm", kappa_us_ppm},
               {"quantization_axis", quantization_axis}};
  if (tau_c_override_us) {
    physics["tau_c_override_us"] = *tau_c_override_us;
  } else {
    physics["tau_c_override_us"] = nullptr;
  }
  json j;
  j["physics"] = physics;
  j["simulation"] = {{"cluster_size", cluster_size},
                     {"realizations", realizations},
                     {"pulse_duration_us", pulse_duration_us},
                     {"master_seed", master_seed},
                     {"threads", threads},
                     {"propagation", propagation}};
  j["sequence"] = {{"family", family},
                   {"tau_us", tau_us},
                   {"n_pulses", n_pulses},
                   {"epsilon_grid_deg", epsilon_grid_deg}};
  j["densities"] = {{"n_system_ppm", n_system_ppm},
                    {"n_bath_ppm", n_bath_ppm}};
  j["fit"] = {{"grid_n_system_ppm", grid_n_system_ppm},
              {"grid_n_bath_ppm", grid_n_bath_ppm},
              {"n_min_pulses", n_min_pulses},
              {"smoothing_deg", smoothing_deg}};
  j["synthetic"] = {{"noise_sigma", noise_sigma}};
  j["output"] = {{"directory", output_directory}};
  return j;
}

RunConfig config_from_json(const json& j, const std::string& source) {
  if (!j.is_object()) fail(source, "top level must be an object");
  check_keys(j, source, "",
             {"physics", "simulation", "sequence", "densities", "fit",
              "synthetic", "output", "provenance"});
  RunConfig config;

  if (j.contains("physics")) {
    const json& p = j.at("physics");
    check_keys(p, source, "physics.",
               {"carbon_site_density_nm3", "coupling_system_mhz_nm3",
                "coupling_bath_mhz_nm3", "exclusion_radius_nm",
                "bath_coupling_cutoff_rad_us", "kappa_us_ppm",
                "tau_c_override_us", "quantization_axis"});
    config.carbon_site_density_nm3 =
        get_number(p, source, "physics.", "carbon_site_density_nm3",
                   config.carbon_site_density_nm3);
    config.coupling_system_mhz_nm3 =
        get_number(p, source, "physics.", "coupling_system_mhz_nm3",
                   config.coupling_system_mhz_nm3);
    config.coupling_bath_mhz_nm3 =
        get_number(p, source, "physics.", "coupling_bath_mhz_nm3",
                   config.coupling_bath_mhz_nm3);
    config.exclusion_radius_nm = get_number(
        p, source, "physics.", "exclusion_radius_nm",
        config.exclusion_radius_nm);
    config.bath_coupling_cutoff_rad_us =
        get_number(p, source, "physics.", "bath_coupling_cutoff_rad_us",
                   config.bath_coupling_cutoff_rad_us);
    config.kappa_us_ppm = get_number(p, source, "physics.", "kappa_us_ppm",
                                     config.kappa_us_ppm);
    if (p.contains("tau_c_override_us") &&
        !p.at("tau_c_override_us").is_null()) {
      config.tau_c_override_us = p.at("tau_c_override_us").get<double>();
    }
    if (p.contains("quantization_axis")) {
      const json& axis = p.at("quantization_axis");
      if (!axis.is_array() || axis.size() != 3) {
        fail(source, "'physics.quantization_axis' must be a 3-vector");
      }
      config.quantization_axis = axis.get<std::vector<double>>();
    }
  }

  if (j.contains("simulation")) {
    const json& s = j.at("simulation");
    check_keys(s, source, "simulation.",
               {"cluster_size", "realizations", "pulse_duration_us",
                "master_seed", "threads", "propagation"});
    config.cluster_size = get_int(s, source, "simulation.", "cluster_size",
                                  config.cluster_size);
    config.realizations = get_int(s, source, "simulation.", "realizations",
                                  config.realizations);
    config.pulse_duration_us =
        get_number(s, source, "simulation.", "pulse_duration_us",
                   config.pulse_duration_us);
    if (s.contains("master_seed")) {
      const json& seed = s.at("master_seed");
      if (!seed.is_number_integer() && !seed.is_number_unsigned()) {
        fail(source, "'simulation.master_seed' must be an integer");
      }
      config.master_seed = seed.get<std::uint64_t>();
    }
    config.threads =
        get_int(s, source, "simulation.", "threads", config.threads);
    config.propagation = get_string(s, source, "simulation.", "propagation",
                                    config.propagation);
  }

  if (j.contains("sequence")) {
    const json& s = j.at("sequence");
    check_keys(s, source, "sequence.",
               {"family", "tau_us", "n_pulses", "epsilon_grid_deg"});
    config.family = get_string(s, source, "sequence.", "family",
                               config.family);
    config.tau_us = get_number(s, source, "sequence.", "tau_us",
                               config.tau_us);
    if (s.contains("n_pulses")) {
      const json& n = s.at("n_pulses");
      if (!n.is_array()) fail(source, "'sequence.n_pulses' must be an array");
      config.n_pulses = n.get<std::vector<int>>();
    }
    std::vector<double> eps_fallback = config.epsilon_grid_deg;
    config.epsilon_grid_deg = get_grid(s, source, "sequence.",
                                       "epsilon_grid_deg", eps_fallback);
  }

  if (j.contains("densities")) {
    const json& d = j.at("densities");
    check_keys(d, source, "densities.", {"n_system_ppm", "n_bath_ppm"});
    config.n_system_ppm = get_number(d, source, "densities.", "n_system_ppm",
                                     config.n_system_ppm);
    config.n_bath_ppm = get_number(d, source, "densities.", "n_bath_ppm",
                                   config.n_bath_ppm);
  }

  if (j.contains("fit")) {
    const json& f = j.at("fit");
    check_keys(f, source, "fit.",
               {"grid_n_system_ppm", "grid_n_bath_ppm", "n_min_pulses",
                "smoothing_deg"});
    config.grid_n_system_ppm = get_grid(f, source, "fit.",
                                        "grid_n_system_ppm",
                                        config.grid_n_system_ppm);
    config.grid_n_bath_ppm = get_grid(f, source, "fit.", "grid_n_bath_ppm",
                                      config.grid_n_bath_ppm);
    config.n_min_pulses = get_int(f, source, "fit.", "n_min_pulses",
                                  config.n_min_pulses);
    config.smoothing_deg = get_number(f, source, "fit.", "smoothing_deg",
                                      config.smoothing_deg);
  }

  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    check_keys(s, source, "synthetic.", {"noise_sigma"});
    config.noise_sigma = get_number(s, source, "synthetic.", "noise_sigma",
                                    config.noise_sigma);
  }

  if (j.contains("output")) {
    const json& o = j.at("output");
    check_keys(o, source, "output.", {"directory"});
    config.output_directory = get_string(o, source, "output.", "directory",
                                         config.output_directory);
  }

  config.validate();
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream input(path);
  if (!input) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << input.rdbuf();
  const std::string text = buffer.str();
  json parsed;
  try {
    parsed = json::parse(text);
  } catch (const json::parse_error& err) {
    // Convert the byte offset into a line:column position.
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < err.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ConfigError(path + ":" + std::to_string(line) + ":" +
                      std::to_string(column) + ": " + err.what());
  }
  return config_from_json(parsed, path);
}

std::string config_hash(const RunConfig& config) {
  // Hash of the computation inputs; where the outputs land is not part of
  // the computation's identity.
  json j = config.to_json();
  j.erase("output");
  const std::string dump = j.dump();
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const unsigned char c : dump) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << hash;
  return out.str();
}

}  // namespace epscpmg
