// Command-line front end. Talks to the library exclusively through the C API
// in npmlca.h; exit codes mirror the npmlca_status categories.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "npmlca.h"

using nlohmann::json;

namespace {

int fail_with(npmlca_status status) {
  std::fprintf(stderr, "error: %s\n", npmlca_last_error());
  return static_cast<int>(status);
}

// "all", or a comma list of indices and ranges into the 96-cell grid
// ("0-3,17,40-47").
std::vector<int> parse_conditions(const std::string& spec, bool* ok) {
  std::vector<int> out;
  *ok = true;
  if (spec.empty() || spec == "all") return out;
  size_t pos = 0;
  while (pos < spec.size()) {
    size_t comma = spec.find(',', pos);
    if (comma == std::string::npos) comma = spec.size();
    const std::string tok = spec.substr(pos, comma - pos);
    const size_t dash = tok.find('-');
    try {
      if (dash == std::string::npos) {
        out.push_back(std::stoi(tok));
      } else {
        const int lo = std::stoi(tok.substr(0, dash));
        const int hi = std::stoi(tok.substr(dash + 1));
        if (hi < lo) throw std::invalid_argument("range");
        for (int i = lo; i <= hi; ++i) out.push_back(i);
      }
    } catch (const std::exception&) {
      *ok = false;
      return {};
    }
    pos = comma + 1;
  }
  return out;
}

struct FitFlags {
  uint64_t seed = 1;
  int n_starts = 20;
  int n_refine = 5;
  int burn_in = 30;
  int max_iterations = 1000;
  double rel_tol = 1e-7;
  bool no_se = false;
};

void add_fit_flags(CLI::App* cmd, FitFlags& flags) {
  cmd->add_option("--starts", flags.n_starts, "Random starts");
  cmd->add_option("--refine", flags.n_refine, "Starts refined to convergence");
  cmd->add_option("--burn-in", flags.burn_in, "Burn-in iterations per start");
  cmd->add_option("--max-iterations", flags.max_iterations, "EM iteration cap");
  cmd->add_option("--rel-tol", flags.rel_tol, "Relative log-likelihood tolerance");
  cmd->add_flag("--no-se", flags.no_se, "Skip standard errors");
}

json fit_options_json(const FitFlags& flags) {
  json j;
  j["seed"] = flags.seed;
  j["n_starts"] = flags.n_starts;
  j["n_refine"] = flags.n_refine;
  j["burn_in"] = flags.burn_in;
  j["max_iterations"] = flags.max_iterations;
  j["rel_tol"] = flags.rel_tol;
  j["compute_se"] = !flags.no_se;
  return j;
}

void progress_line(int done, int total, void*) {
  if (total == 0) return;
  std::fprintf(stderr, "\r%d/%d replications", done, total);
  if (done == total) std::fprintf(stderr, "\n");
  std::fflush(stderr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional nonparametric multilevel latent class analysis"};
  app.require_subcommand(1);

  // ---- fit -------------------------------------------------------------
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a dataset CSV");
  std::string fit_data, fit_out = "fit_out";
  int classes1 = 3, classes2 = 2;
  double fit_alpha = 0.05;
  int min_site_size = 5;
  bool keep_small_sites = false;
  FitFlags fit_flags;
  fit_cmd->add_option("--data", fit_data, "Dataset CSV (site_id,y1..yK,x1..xP1,z1..zP2)")->required();
  fit_cmd->add_option("--classes1", classes1, "Level-1 latent classes")->required();
  fit_cmd->add_option("--classes2", classes2, "Level-2 latent classes")->required();
  fit_cmd->add_option("--seed", fit_flags.seed, "Random-start seed");
  fit_cmd->add_option("--out", fit_out, "Output directory");
  fit_cmd->add_option("--alpha", fit_alpha, "Significance level for CIs and stars");
  fit_cmd->add_option("--min-site-size", min_site_size, "Drop sites smaller than this");
  fit_cmd->add_flag("--keep-small-sites", keep_small_sites, "Keep sites below the minimum size");
  add_fit_flags(fit_cmd, fit_flags);

  // ---- simulate ----------------------------------------------------------
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a dataset and its truth file for one condition");
  std::string sim_condition_file, sim_out = "sim_out";
  int sim_condition_index = -1;
  uint64_t sim_seed = 1;
  sim_cmd->add_option("--condition", sim_condition_file, "Condition JSON file");
  sim_cmd->add_option("--condition-index", sim_condition_index, "Index into the 96-cell grid (0-95)");
  sim_cmd->add_option("--seed", sim_seed, "Generation seed");
  sim_cmd->add_option("--out", sim_out, "Output directory");

  // ---- replicate ---------------------------------------------------------
  auto* rep_cmd = app.add_subcommand("replicate", "Run a replication study (resumable, parallel)");
  std::string rep_config_file, rep_conditions = "all", rep_out = "study_out";
  uint64_t rep_seed = 1;
  int rep_reps = 500, rep_jobs = 0;
  double rep_alpha = 0.05;
  FitFlags rep_flags;
  rep_cmd->add_option("--config", rep_config_file, "Study config JSON (flags override it)");
  rep_cmd->add_option("--seed", rep_seed, "Master seed");
  rep_cmd->add_option("--reps", rep_reps, "Replications per condition");
  rep_cmd->add_option("--conditions", rep_conditions, "'all' or grid indices like 0-3,17");
  rep_cmd->add_option("--jobs", rep_jobs, "Parallel workers (0 = all cores)");
  rep_cmd->add_option("--out", rep_out, "Record store directory");
  rep_cmd->add_option("--alpha", rep_alpha, "Significance level");
  add_fit_flags(rep_cmd, rep_flags);

  // ---- report ------------------------------------------------------------
  auto* report_cmd = app.add_subcommand("report", "Aggregate a record store into result tables");
  std::string report_store, report_kind = "all", report_out = "report_out";
  double report_alpha = 0.05;
  report_cmd->add_option("--store", report_store, "Record store directory")->required();
  report_cmd->add_option("--kind", report_kind, "recovery|power|classification|eta2|diagnostics|all");
  report_cmd->add_option("--out", report_out, "Output directory");
  report_cmd->add_option("--alpha", report_alpha, "Significance level");

  CLI11_PARSE(app, argc, argv);

  if (fit_cmd->parsed()) {
    npmlca_dataset* ds = nullptr;
    npmlca_status st = npmlca_dataset_read_csv(fit_data.c_str(), &ds);
    if (st != NPMLCA_OK) return fail_with(st);

    if (!keep_small_sites) {
      int removed = 0;
      st = npmlca_dataset_filter_small_sites(ds, min_site_size, &removed);
      if (st != NPMLCA_OK) {
        npmlca_dataset_free(ds);
        return fail_with(st);
      }
      if (removed > 0)
        std::fprintf(stderr, "warning: removed %d site(s) with fewer than %d members (use --keep-small-sites to keep them)\n",
                     removed, min_site_size);
    }
    std::fprintf(stderr, "fitting: %d individuals in %d sites, %d indicators, %d + %d covariates\n",
                 npmlca_dataset_n_individuals(ds), npmlca_dataset_n_sites(ds),
                 npmlca_dataset_n_indicators(ds), npmlca_dataset_n_level1_covariates(ds),
                 npmlca_dataset_n_level2_covariates(ds));

    npmlca_fit* fit = nullptr;
    st = npmlca_fit_run(ds, classes1, classes2, fit_options_json(fit_flags).dump().c_str(), &fit);
    if (st != NPMLCA_OK) {
      npmlca_dataset_free(ds);
      return fail_with(st);
    }
    if (!npmlca_fit_converged(fit)) std::fprintf(stderr, "warning: estimation did not converge\n");
    if (!npmlca_fit_se_available(fit) && !fit_flags.no_se)
      std::fprintf(stderr, "warning: standard errors unavailable (information matrix not positive definite)\n");

    st = npmlca_fit_write_outputs(fit, ds, fit_out.c_str(), fit_alpha);
    if (st == NPMLCA_OK) {
      std::printf("loglik %.6f | free parameters %ld | AIC %.3f | BIC %.3f | entropy %.3f\n",
                  npmlca_fit_loglik(fit), npmlca_fit_free_parameters(fit), npmlca_fit_aic(fit),
                  npmlca_fit_bic(fit), npmlca_fit_entropy(fit));
      std::printf("wrote %s/{fit.json,crp.csv,fit_stats.csv,odds_ratios.csv,composition.csv}\n",
                  fit_out.c_str());
    }
    npmlca_fit_free(fit);
    npmlca_dataset_free(ds);
    return st == NPMLCA_OK ? 0 : fail_with(st);
  }

  if (sim_cmd->parsed()) {
    std::string condition_json;
    if (!sim_condition_file.empty()) {
      FILE* f = std::fopen(sim_condition_file.c_str(), "rb");
      if (f == nullptr) {
        std::fprintf(stderr, "error: cannot open %s\n", sim_condition_file.c_str());
        return NPMLCA_ERR_IO;
      }
      char buf[4096];
      size_t n;
      while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) condition_json.append(buf, n);
      std::fclose(f);
    } else if (sim_condition_index >= 0) {
      char* grid_json = nullptr;
      const npmlca_status st = npmlca_condition_grid(&grid_json);
      if (st != NPMLCA_OK) return fail_with(st);
      const json grid = json::parse(grid_json);
      npmlca_string_free(grid_json);
      if (sim_condition_index >= static_cast<int>(grid.size())) {
        std::fprintf(stderr, "error: condition index %d outside 0-%zu\n", sim_condition_index,
                     grid.size() - 1);
        return NPMLCA_ERR_INVALID_ARGUMENT;
      }
      condition_json = grid[sim_condition_index].dump();
    } else {
      std::fprintf(stderr, "error: provide --condition FILE or --condition-index I\n");
      return NPMLCA_ERR_INVALID_ARGUMENT;
    }
    const npmlca_status st = npmlca_simulate(condition_json.c_str(), sim_seed, sim_out.c_str());
    if (st != NPMLCA_OK) return fail_with(st);
    std::printf("wrote %s/dataset.csv and %s/truth.csv\n", sim_out.c_str(), sim_out.c_str());
    return 0;
  }

  if (rep_cmd->parsed()) {
    json cfg;
    if (!rep_config_file.empty()) {
      FILE* f = std::fopen(rep_config_file.c_str(), "rb");
      if (f == nullptr) {
        std::fprintf(stderr, "error: cannot open %s\n", rep_config_file.c_str());
        return NPMLCA_ERR_IO;
      }
      std::string text;
      char buf[4096];
      size_t n;
      while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) text.append(buf, n);
      std::fclose(f);
      try {
        cfg = json::parse(text);
      } catch (const json::exception& e) {
        std::fprintf(stderr, "error: %s: %s\n", rep_config_file.c_str(), e.what());
        return NPMLCA_ERR_PARSE;
      }
    }
    // explicit flags override the config file; untouched flags only fill gaps
    auto given = [&](const char* flag) { return rep_cmd->count(flag) > 0; };
    if (given("--seed") || !cfg.contains("master_seed")) cfg["master_seed"] = rep_seed;
    if (given("--reps") || !cfg.contains("reps")) cfg["reps"] = rep_reps;
    if (given("--jobs") || !cfg.contains("jobs")) cfg["jobs"] = rep_jobs;
    if (given("--out") || !cfg.contains("out_dir")) cfg["out_dir"] = rep_out;
    if (given("--alpha") || !cfg.contains("alpha")) cfg["alpha"] = rep_alpha;
    if (given("--conditions") || !cfg.contains("conditions")) {
      bool ok = true;
      cfg["conditions"] = parse_conditions(rep_conditions, &ok);
      if (!ok) {
        std::fprintf(stderr, "error: cannot parse --conditions '%s'\n", rep_conditions.c_str());
        return NPMLCA_ERR_INVALID_ARGUMENT;
      }
    }
    if (!cfg.contains("fit")) cfg["fit"] = fit_options_json(rep_flags);
    if (rep_flags.no_se) cfg["compute_se"] = false;
    else if (!cfg.contains("compute_se")) cfg["compute_se"] = true;

    int n_new = 0;
    const npmlca_status st = npmlca_study_run(cfg.dump().c_str(), progress_line, nullptr, &n_new);
    if (st != NPMLCA_OK) return fail_with(st);
    std::printf("computed %d new record(s) in %s\n", n_new, cfg["out_dir"].get<std::string>().c_str());
    return 0;
  }

  if (report_cmd->parsed()) {
    const npmlca_status st =
        npmlca_report(report_store.c_str(), report_kind.c_str(), report_out.c_str(), report_alpha);
    if (st != NPMLCA_OK) return fail_with(st);
    std::printf("wrote report tables to %s\n", report_out.c_str());
    return 0;
  }

  return 0;
}
