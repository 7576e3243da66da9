#pragma once

// Replication study runner and report generation. Each (condition,
// replication) pair is an independent unit of work with its own RNG
// substreams derived from the master seed, so results are identical for any
// parallelism degree. Records land in an append-only store: one JSON file per
// key under <out>/records/, committed by write-then-rename, plus a canonical
// sorted records.jsonl compacted after a run completes. Present keys are
// skipped on rerun (resumability).

#include <functional>
#include <string>
#include <vector>

#include "alignment.hpp"
#include "io.hpp"
#include "metrics.hpp"

namespace npmlca {

// Generate, fit, align, and score one replication.
ReplicationRecord run_replication(const Condition& cond, int condition_index, int rep,
                                  uint64_t master_seed, const FitOptions& fit_options, bool compute_se);

using ProgressFn = std::function<void(int done, int total)>;

// Runs all missing (condition, rep) pairs of the study, up to config.jobs at
// a time; returns the number of records computed in this call. Verifies that
// an existing store was produced under a compatible configuration.
int run_study(const StudyConfig& config, const ProgressFn& progress = {});

std::vector<ReplicationRecord> load_records(const std::string& store_dir);

// Report kinds: recovery, power, classification, eta2, diagnostics, or all.
void write_reports(const std::string& store_dir, const std::string& kind, const std::string& out_dir,
                   double alpha);
std::vector<std::string> report_kinds();

// Human- and machine-readable outputs of a single model fit (fit.json plus
// response-probability, fit-statistics, odds-ratio, and composition tables).
void write_fit_outputs(const FitResult& fit, const Dataset& data, const std::string& out_dir,
                       double alpha);

}  // namespace npmlca
