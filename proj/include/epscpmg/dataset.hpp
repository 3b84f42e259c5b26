#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "epscpmg/errors.hpp"

namespace epscpmg {

// Measured (or synthetic) coherence points in the ingestion schema
//   epsilon_deg,n_pulses,coherence,sigma
// with sigma optional (blank -> uniform weighting).  Lines starting with
// '#' are provenance comments and are skipped.
struct ExperimentalDataset {
  struct Row {
    double epsilon_deg;
    int n_pulses;
    double coherence;
    double sigma;    // meaningful only when has_sigma
    bool has_sigma;
  };

  std::vector<Row> rows;

  bool all_have_sigma() const;
};

ExperimentalDataset parse_dataset_csv(std::istream& input,
                                      const std::string& source_name);
ExperimentalDataset read_dataset_csv(const std::string& path);
void write_dataset_csv(std::ostream& out, const ExperimentalDataset& dataset,
                       const std::vector<std::string>& comment_lines = {});

// Two-column (plus optional sigma) time series used by the decay fitter:
//   time_us,coherence,sigma
struct DecaySeries {
  struct Row {
    double time_us;
    double coherence;
    double sigma;
    bool has_sigma;
  };
  std::vector<Row> rows;
};

DecaySeries parse_decay_csv(std::istream& input,
                            const std::string& source_name);
DecaySeries read_decay_csv(const std::string& path);

}  // namespace epscpmg
