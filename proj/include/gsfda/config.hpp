#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gsfda/dataset.hpp"
#include "gsfda/pipeline.hpp"

namespace gsfda {

// [data] section: which datasets a run trains and evaluates on. Rotations
// are the domain-shift knob for the built-in generator; the csv generator
// ingests precomputed feature files instead.
struct DataConfig {
  std::string generator = "two_moons";  // two_moons | csv
  std::size_t n_per_domain = 1000;
  double noise_sd = 0.1;
  double source_rotation_deg = 0.0;
  std::vector<double> target_rotation_degs = {45.0};
  double train_fraction = 0.9;
  bool stratified = true;
  bool standardize = false;  // z-score with SOURCE statistics only
  std::string source_csv;
  std::vector<std::string> target_csvs;
};

struct FullConfig {
  RunConfig run;
  DataConfig data;
};

// INI-style text: [section] headers, key = value lines, '#' comments.
// Sections are [run], [network] and [data]; every key maps to one field and
// unknown keys or sections are hard errors. run.n_targets is derived from
// the target list.
FullConfig parse_config(std::istream& in, const std::string& origin);
FullConfig load_config(const std::string& path);

// All datasets for a run: deterministic generation (or CSV load), per-domain
// train/test split, optional source-statistics standardization. Train splits
// double as the unlabeled adaptation sets; their labels are only read by
// diagnostics and evaluation.
struct DataBundle {
  Dataset source_train, source_test;
  std::vector<Dataset> target_trains, target_tests;

  std::vector<Dataset> train_sets() const;  // source first, then targets
  std::vector<Dataset> test_sets() const;
};

// The full (pre-split) dataset per domain, source first.
std::vector<Dataset> build_domains(const FullConfig& cfg);

DataBundle build_data(const FullConfig& cfg);

}  // namespace gsfda
