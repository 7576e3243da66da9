// C API layer: thin extern-C wrappers around the core library. Exceptions are
// caught at the boundary and mapped to status codes plus a thread-local error
// message.

#include "npmlca.h"

#include <json.hpp>

#include <cstring>
#include <string>

#include "estimator.hpp"
#include "io.hpp"
#include "model.hpp"
#include "simulator.hpp"
#include "study.hpp"

using nlohmann::json;

struct npmlca_dataset {
  npmlca::LoadedDataset loaded;
};

struct npmlca_fit {
  npmlca::FitResult result;
  npmlca::ModelSpec spec;
};

namespace {

thread_local std::string g_last_error = "";

npmlca_status status_from(npmlca::ErrorCategory cat) {
  using npmlca::ErrorCategory;
  switch (cat) {
    case ErrorCategory::invalid_argument: return NPMLCA_ERR_INVALID_ARGUMENT;
    case ErrorCategory::dimension: return NPMLCA_ERR_DIMENSION;
    case ErrorCategory::parse: return NPMLCA_ERR_PARSE;
    case ErrorCategory::io: return NPMLCA_ERR_IO;
    case ErrorCategory::numeric: return NPMLCA_ERR_NUMERIC;
    case ErrorCategory::internal: return NPMLCA_ERR_INTERNAL;
  }
  return NPMLCA_ERR_INTERNAL;
}

template <typename Fn>
npmlca_status guarded(Fn&& fn) {
  try {
    fn();
    return NPMLCA_OK;
  } catch (const npmlca::Error& e) {
    g_last_error = e.what();
    return status_from(e.category());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NPMLCA_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return NPMLCA_ERR_INTERNAL;
  }
}

npmlca::FitOptions fit_options_from_json(const char* options_json) {
  npmlca::FitOptions opts;
  if (options_json == nullptr || std::strlen(options_json) == 0) return opts;
  json j;
  try {
    j = json::parse(options_json);
  } catch (const json::exception& e) {
    npmlca::fail(npmlca::ErrorCategory::parse, std::string("fit options JSON: ") + e.what());
  }
  opts.seed = j.value("seed", opts.seed);
  opts.n_starts = j.value("n_starts", opts.n_starts);
  opts.n_refine = j.value("n_refine", opts.n_refine);
  opts.burn_in = j.value("burn_in", opts.burn_in);
  opts.max_iterations = j.value("max_iterations", opts.max_iterations);
  opts.rel_tol = j.value("rel_tol", opts.rel_tol);
  opts.compute_se = j.value("compute_se", opts.compute_se);
  return opts;
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* npmlca_version(void) { return "1.0.0"; }

const char* npmlca_last_error(void) { return g_last_error.c_str(); }

void npmlca_string_free(char* s) { std::free(s); }

npmlca_status npmlca_dataset_read_csv(const char* path, npmlca_dataset** out) {
  if (path == nullptr || out == nullptr) {
    g_last_error = "null argument";
    return NPMLCA_ERR_INVALID_ARGUMENT;
  }
  *out = nullptr;
  return guarded([&] { *out = new npmlca_dataset{npmlca::read_dataset_csv(path)}; });
}

void npmlca_dataset_free(npmlca_dataset* ds) { delete ds; }

int npmlca_dataset_n_sites(const npmlca_dataset* ds) { return ds->loaded.data.n_sites(); }
int npmlca_dataset_n_individuals(const npmlca_dataset* ds) { return ds->loaded.data.n_individuals(); }
int npmlca_dataset_n_indicators(const npmlca_dataset* ds) { return ds->loaded.dims.n_indicators; }
int npmlca_dataset_n_level1_covariates(const npmlca_dataset* ds) {
  return ds->loaded.dims.n_level1_covariates;
}
int npmlca_dataset_n_level2_covariates(const npmlca_dataset* ds) {
  return ds->loaded.dims.n_level2_covariates;
}

npmlca_status npmlca_dataset_filter_small_sites(npmlca_dataset* ds, int min_size, int* n_removed) {
  if (ds == nullptr) {
    g_last_error = "null dataset";
    return NPMLCA_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    const int removed = npmlca::filter_small_sites(ds->loaded.data, min_size);
    if (ds->loaded.data.sites.empty())
      npmlca::fail(npmlca::ErrorCategory::invalid_argument,
                   "all sites fall below the minimum size of " + std::to_string(min_size));
    if (n_removed != nullptr) *n_removed = removed;
  });
}

npmlca_status npmlca_fit_run(const npmlca_dataset* ds, int n_level1_classes, int n_level2_classes,
                             const char* options_json, npmlca_fit** out) {
  if (ds == nullptr || out == nullptr) {
    g_last_error = "null argument";
    return NPMLCA_ERR_INVALID_ARGUMENT;
  }
  *out = nullptr;
  return guarded([&] {
    npmlca::ModelSpec spec = ds->loaded.dims;
    spec.n_level1_classes = n_level1_classes;
    spec.n_level2_classes = n_level2_classes;
    spec.validate();
    const npmlca::FitOptions opts = fit_options_from_json(options_json);
    npmlca::FitResult result = npmlca::fit(ds->loaded.data, spec, opts);
    *out = new npmlca_fit{std::move(result), spec};
  });
}

void npmlca_fit_free(npmlca_fit* fit) { delete fit; }

double npmlca_fit_loglik(const npmlca_fit* fit) { return fit->result.loglik; }
int npmlca_fit_converged(const npmlca_fit* fit) { return fit->result.converged ? 1 : 0; }
int npmlca_fit_iterations(const npmlca_fit* fit) { return fit->result.iterations; }
long npmlca_fit_free_parameters(const npmlca_fit* fit) { return fit->result.fit_stats.free_parameters; }
double npmlca_fit_aic(const npmlca_fit* fit) { return fit->result.fit_stats.aic; }
double npmlca_fit_bic(const npmlca_fit* fit) { return fit->result.fit_stats.bic; }
double npmlca_fit_entropy(const npmlca_fit* fit) { return fit->result.fit_stats.entropy; }
int npmlca_fit_se_available(const npmlca_fit* fit) { return fit->result.se_available ? 1 : 0; }

npmlca_status npmlca_fit_write_outputs(const npmlca_fit* fit, const npmlca_dataset* ds,
                                       const char* out_dir, double alpha) {
  if (fit == nullptr || ds == nullptr || out_dir == nullptr) {
    g_last_error = "null argument";
    return NPMLCA_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] { npmlca::write_fit_outputs(fit->result, ds->loaded.data, out_dir, alpha); });
}

npmlca_status npmlca_condition_grid(char** json_out) {
  if (json_out == nullptr) {
    g_last_error = "null argument";
    return NPMLCA_ERR_INVALID_ARGUMENT;
  }
  *json_out = nullptr;
  return guarded([&] {
    json arr = json::array();
    for (const npmlca::Condition& c : npmlca::condition_grid())
      arr.push_back(json::parse(npmlca::condition_to_json(c)));
    *json_out = copy_string(arr.dump());
  });
}

npmlca_status npmlca_simulate(const char* condition_json, unsigned long long seed, const char* out_dir) {
  if (condition_json == nullptr || out_dir == nullptr) {
    g_last_error = "null argument";
    return NPMLCA_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    const npmlca::Condition cond = npmlca::condition_from_json(condition_json);
    const npmlca::Parameters truth = npmlca::build_true_parameters(cond);
    const npmlca::Dataset data = npmlca::generate_dataset(cond, truth, seed);
    const std::string dir(out_dir);
    npmlca::write_dataset_csv(dir + "/dataset.csv", data);
    npmlca::write_truth_csv(dir + "/truth.csv", data);
  });
}

npmlca_status npmlca_study_run(const char* study_json, npmlca_progress_fn progress, void* user,
                               int* n_new_records) {
  if (study_json == nullptr) {
    g_last_error = "null argument";
    return NPMLCA_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    const npmlca::StudyConfig config = npmlca::study_config_from_json(study_json);
    npmlca::ProgressFn fn;
    if (progress != nullptr)
      fn = [progress, user](int done, int total) { progress(done, total, user); };
    const int n = npmlca::run_study(config, fn);
    if (n_new_records != nullptr) *n_new_records = n;
  });
}

npmlca_status npmlca_report(const char* store_dir, const char* kind, const char* out_dir, double alpha) {
  if (store_dir == nullptr || kind == nullptr || out_dir == nullptr) {
    g_last_error = "null argument";
    return NPMLCA_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] { npmlca::write_reports(store_dir, kind, out_dir, alpha); });
}

}  // extern "C"
