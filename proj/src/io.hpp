#pragma once

// File formats. Dataset CSV: header site_id,y1..yK,x1..xP1,z1..zP2 with
// indicator codes 1..S_k and the level-2 covariates repeated per row (and
// validated constant within a site). Truth CSV: an individual section
// (site_id,row,true_c) followed by a site section (site_id,true_w). Structured
// configs and results are JSON with a schema_version field. All files are
// UTF-8 with \n newlines; doubles are written in shortest round-trip form so
// outputs are byte-stable.

#include <optional>
#include <string>
#include <vector>

#include "estimator.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "simulator.hpp"

namespace npmlca {

struct LoadedDataset {
  Dataset data;
  ModelSpec dims;  // K, S_k (from observed codes), P1, P2; class counts unset
};

void write_dataset_csv(const std::string& path, const Dataset& data);
LoadedDataset read_dataset_csv(const std::string& path);

void write_truth_csv(const std::string& path, const Dataset& data);
void read_truth_csv(const std::string& path, Dataset& data);

// Drops sites smaller than min_size; returns the number removed.
int filter_small_sites(Dataset& data, int min_size);

// JSON (de)serialization. Strings returned are compact single-line dumps.
std::string condition_to_json(const Condition& cond);
Condition condition_from_json(const std::string& text);

std::string record_to_json(const ReplicationRecord& rec);
ReplicationRecord record_from_json(const std::string& text);

struct StudyConfig {
  uint64_t master_seed = 1;
  int reps = 500;
  std::vector<int> condition_indices;  // into condition_grid()
  int jobs = 0;                        // 0 = hardware concurrency
  std::string out_dir;
  double alpha = 0.05;
  bool compute_se = true;
  FitOptions fit;  // per-replication seeds are derived, fit.seed is ignored
};

std::string study_config_to_json(const StudyConfig& config);
StudyConfig study_config_from_json(const std::string& text);

// Atomic file write: temp file in the same directory, then rename.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace npmlca
