#include "epscpmg/dataset.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace epscpmg {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& field, const std::string& source,
                    int line_number, const char* what) {
  try {
    std::size_t used = 0;
    const double value = std::stod(field, &used);
    if (used != field.size() || !std::isfinite(value)) throw std::exception();
    return value;
  } catch (...) {
    throw DataError(source + ":" + std::to_string(line_number) +
                    ": cannot parse " + what + " from '" + field + "'");
  }
}

int parse_int(const std::string& field, const std::string& source,
              int line_number, const char* what) {
  try {
    std::size_t used = 0;
    const int value = std::stoi(field, &used);
    if (used != field.size()) throw std::exception();
    return value;
  } catch (...) {
    throw DataError(source + ":" + std::to_string(line_number) +
                    ": cannot parse " + what + " from '" + field + "'");
  }
}

bool read_content_line(std::istream& input, std::string& line,
                       int& line_number) {
  while (std::getline(input, line)) {
    ++line_number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    line = t;
    return true;
  }
  return false;
}

}  // namespace

bool ExperimentalDataset::all_have_sigma() const {
  for (const auto& row : rows) {
    if (!row.has_sigma) return false;
  }
  return !rows.empty();
}

ExperimentalDataset parse_dataset_csv(std::istream& input,
                                      const std::string& source_name) {
  std::string line;
  int line_number = 0;
  if (!read_content_line(input, line, line_number)) {
    throw DataError(source_name + ": empty dataset (no header)");
  }
  const auto header = split_csv_line(line);
  if (header.size() < 3 || trim(header[0]) != "epsilon_deg" ||
      trim(header[1]) != "n_pulses" || trim(header[2]) != "coherence" ||
      (header.size() == 4 && trim(header[3]) != "sigma" &&
       trim(header[3]) != "stderr") ||
      header.size() > 4) {
    throw DataError(source_name +
                    ": header must be epsilon_deg,n_pulses,coherence[,sigma]");
  }

  ExperimentalDataset dataset;
  std::vector<std::string> bad_rows;
  while (read_content_line(input, line, line_number)) {
    try {
      const auto fields = split_csv_line(line);
      if (fields.size() < 3 || fields.size() > 4) {
        throw DataError(source_name + ":" + std::to_string(line_number) +
                        ": expected 3 or 4 fields");
      }
      ExperimentalDataset::Row row{};
      row.epsilon_deg =
          parse_double(trim(fields[0]), source_name, line_number, "epsilon");
      row.n_pulses =
          parse_int(trim(fields[1]), source_name, line_number, "n_pulses");
      row.coherence =
          parse_double(trim(fields[2]), source_name, line_number, "coherence");
      const std::string sigma_field =
          fields.size() == 4 ? trim(fields[3]) : "";
      if (sigma_field.empty()) {
        row.sigma = 0.0;
        row.has_sigma = false;
      } else {
        row.sigma =
            parse_double(sigma_field, source_name, line_number, "sigma");
        if (row.sigma < 0.0) {
          throw DataError(source_name + ":" + std::to_string(line_number) +
                          ": sigma must be >= 0");
        }
        row.has_sigma = row.sigma > 0.0;
      }
      if (row.n_pulses < 0) {
        throw DataError(source_name + ":" + std::to_string(line_number) +
                        ": n_pulses must be >= 0");
      }
      dataset.rows.push_back(row);
    } catch (const DataError& err) {
      bad_rows.push_back(err.what());
      if (bad_rows.size() >= 10) break;
    }
  }
  if (!bad_rows.empty()) {
    std::string message = source_name + ": schema violations:";
    for (const auto& msg : bad_rows) message += "\n  " + msg;
    throw DataError(message);
  }
  if (dataset.rows.empty()) {
    throw DataError(source_name + ": dataset contains no data rows");
  }
  return dataset;
}

ExperimentalDataset read_dataset_csv(const std::string& path) {
  std::ifstream input(path);
  if (!input) throw ConfigError("cannot open data file '" + path + "'");
  return parse_dataset_csv(input, path);
}

void write_dataset_csv(std::ostream& out, const ExperimentalDataset& dataset,
                       const std::vector<std::string>& comment_lines) {
  for (const auto& comment : comment_lines) out << "# " << comment << "\n";
  out << "epsilon_deg,n_pulses,coherence,sigma\n";
  out << std::setprecision(12);
  for (const auto& row : dataset.rows) {
    out << row.epsilon_deg << ',' << row.n_pulses << ',' << row.coherence
        << ',';
    if (row.has_sigma) out << row.sigma;
    out << '\n';
  }
}

DecaySeries parse_decay_csv(std::istream& input,
                            const std::string& source_name) {
  std::string line;
  int line_number = 0;
  if (!read_content_line(input, line, line_number)) {
    throw DataError(source_name + ": empty dataset (no header)");
  }
  const auto header = split_csv_line(line);
  if (header.size() < 2 || trim(header[0]) != "time_us" ||
      trim(header[1]) != "coherence" ||
      (header.size() == 3 && trim(header[2]) != "sigma") ||
      header.size() > 3) {
    throw DataError(source_name + ": header must be time_us,coherence[,sigma]");
  }
  DecaySeries series;
  while (read_content_line(input, line, line_number)) {
    const auto fields = split_csv_line(line);
    if (fields.size() < 2 || fields.size() > 3) {
      throw DataError(source_name + ":" + std::to_string(line_number) +
                      ": expected 2 or 3 fields");
    }
    DecaySeries::Row row{};
    row.time_us =
        parse_double(trim(fields[0]), source_name, line_number, "time");
    row.coherence =
        parse_double(trim(fields[1]), source_name, line_number, "coherence");
    const std::string sigma_field = fields.size() == 3 ? trim(fields[2]) : "";
    if (sigma_field.empty()) {
      row.sigma = 0.0;
      row.has_sigma = false;
    } else {
      row.sigma = parse_double(sigma_field, source_name, line_number, "sigma");
      row.has_sigma = row.sigma > 0.0;
    }
    series.rows.push_back(row);
  }
  if (series.rows.empty()) {
    throw DataError(source_name + ": dataset contains no data rows");
  }
  return series;
}

DecaySeries read_decay_csv(const std::string& path) {
  std::ifstream input(path);
  if (!input) throw ConfigError("cannot open data file '" + path + "'");
  return parse_decay_csv(input, path);
}

}  // namespace epscpmg
