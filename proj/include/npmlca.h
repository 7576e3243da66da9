/* C interface to the npmlca library: estimation of conditional nonparametric
 * multilevel latent class models, dataset simulation, replication studies,
 * and report generation.
 *
 * All functions returning npmlca_status use 0 for success; on failure the
 * thread-local message from npmlca_last_error() describes what went wrong.
 * Objects are opaque handles owned by the caller and released with the
 * matching *_free function. Strings returned through char** are heap
 * allocated and released with npmlca_string_free. */

#ifndef NPMLCA_H
#define NPMLCA_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum npmlca_status {
  NPMLCA_OK = 0,
  NPMLCA_ERR_INVALID_ARGUMENT = 1,
  NPMLCA_ERR_DIMENSION = 2,
  NPMLCA_ERR_PARSE = 3,
  NPMLCA_ERR_IO = 4,
  NPMLCA_ERR_NUMERIC = 5,
  NPMLCA_ERR_INTERNAL = 6
} npmlca_status;

typedef struct npmlca_dataset npmlca_dataset;
typedef struct npmlca_fit npmlca_fit;

const char* npmlca_version(void);

/* Message for the most recent failure on this thread; never NULL. */
const char* npmlca_last_error(void);

void npmlca_string_free(char* s);

/* ---- datasets ---------------------------------------------------------- */

/* Reads a dataset CSV (header: site_id,y1..yK,x1..xP1,z1..zP2). */
npmlca_status npmlca_dataset_read_csv(const char* path, npmlca_dataset** out);
void npmlca_dataset_free(npmlca_dataset* ds);

int npmlca_dataset_n_sites(const npmlca_dataset* ds);
int npmlca_dataset_n_individuals(const npmlca_dataset* ds);
int npmlca_dataset_n_indicators(const npmlca_dataset* ds);
int npmlca_dataset_n_level1_covariates(const npmlca_dataset* ds);
int npmlca_dataset_n_level2_covariates(const npmlca_dataset* ds);

/* Drops sites with fewer than min_size members; reports how many. */
npmlca_status npmlca_dataset_filter_small_sites(npmlca_dataset* ds, int min_size, int* n_removed);

/* ---- model fitting ----------------------------------------------------- */

/* options_json (may be NULL or "{}"): {"seed":u64, "n_starts":int,
 * "n_refine":int, "burn_in":int, "max_iterations":int, "rel_tol":double,
 * "compute_se":bool}. */
npmlca_status npmlca_fit_run(const npmlca_dataset* ds, int n_level1_classes, int n_level2_classes,
                             const char* options_json, npmlca_fit** out);
void npmlca_fit_free(npmlca_fit* fit);

double npmlca_fit_loglik(const npmlca_fit* fit);
int npmlca_fit_converged(const npmlca_fit* fit);
int npmlca_fit_iterations(const npmlca_fit* fit);
long npmlca_fit_free_parameters(const npmlca_fit* fit);
double npmlca_fit_aic(const npmlca_fit* fit);
double npmlca_fit_bic(const npmlca_fit* fit);
double npmlca_fit_entropy(const npmlca_fit* fit);
int npmlca_fit_se_available(const npmlca_fit* fit);

/* Writes fit.json plus the response-probability, fit-statistics, odds-ratio
 * and composition tables into out_dir. */
npmlca_status npmlca_fit_write_outputs(const npmlca_fit* fit, const npmlca_dataset* ds,
                                       const char* out_dir, double alpha);

/* ---- simulation -------------------------------------------------------- */

/* JSON array (length 96) of the full condition grid. */
npmlca_status npmlca_condition_grid(char** json_out);

/* Writes dataset.csv and truth.csv for one condition. condition_json:
 * {"n_indicators":6|12, "crp_quality":0.7|0.8|0.9, "n_sites":50|150,
 * "site_size":30|60, "l1_effects":[a,b], "l2_effects":[a,b]}. */
npmlca_status npmlca_simulate(const char* condition_json, unsigned long long seed, const char* out_dir);

/* ---- replication studies ---------------------------------------------- */

typedef void (*npmlca_progress_fn)(int done, int total, void* user);

/* study_json: {"master_seed":u64, "reps":int, "conditions":[int...],
 * "jobs":int, "out_dir":str, "alpha":double, "compute_se":bool,
 * "fit":{...}}. An empty "conditions" array means the full 96-cell grid.
 * Present (condition, rep) keys are skipped, so interrupted studies resume.
 * Returns the number of records computed in this call via n_new_records. */
npmlca_status npmlca_study_run(const char* study_json, npmlca_progress_fn progress, void* user,
                               int* n_new_records);

/* kind: recovery | power | classification | eta2 | diagnostics | all. */
npmlca_status npmlca_report(const char* store_dir, const char* kind, const char* out_dir, double alpha);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* NPMLCA_H */
