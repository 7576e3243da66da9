#include "study.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace npmlca {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr uint64_t kGenStream = 0x67656e00;  // dataset generation substream tag
constexpr uint64_t kFitStream = 0x66697400;  // fit start substream tag

std::string record_filename(int condition_index, int rep) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "rec_c%03d_r%05d.json", condition_index, rep);
  return buf;
}

std::string effect_tag(const EffectPair& e) { return e.or1 == 1.0 && e.or2 == 1.0 ? "n" : "s"; }

std::string csv_num(double v) { return format_double(v); }

struct ConditionKey {
  int indicators;
  double quality;
  int sites;
  int size;
  auto operator<=>(const ConditionKey&) const = default;
};

ConditionKey condition_key(const Condition& c) {
  return {c.n_indicators, c.crp_quality, c.n_sites, c.site_size};
}

}  // namespace

ReplicationRecord run_replication(const Condition& cond, int condition_index, int rep,
                                  uint64_t master_seed, const FitOptions& fit_options, bool compute_se) {
  cond.validate();
  const ModelSpec spec = condition_spec(cond);
  const int L = spec.n_level1_classes;
  const int M = spec.n_level2_classes;

  ReplicationRecord rec;
  rec.condition_index = condition_index;
  rec.condition = cond;
  rec.rep = rep;
  rec.gen_seed = derive_seed(master_seed, kGenStream, static_cast<uint64_t>(condition_index),
                             static_cast<uint64_t>(rep));
  rec.fit_seed = derive_seed(master_seed, kFitStream, static_cast<uint64_t>(condition_index),
                             static_cast<uint64_t>(rep));

  const Parameters truth = build_true_parameters(cond);
  const Dataset data = generate_dataset(cond, truth, rec.gen_seed);

  FitOptions opts = fit_options;
  opts.seed = rec.fit_seed;
  opts.compute_se = compute_se;
  FitResult fitted = fit(data, spec, opts);

  // level-1 alignment against the generating CRPs, then level-2 by
  // composition
  Relabeling r1 = Relabeling::identity(L, M);
  r1.perm1 = find_level1_permutation(crp_matrix(fitted.params), crp_matrix(truth));
  FitResult aligned1 = relabel(fitted, r1);
  Relabeling r2 = Relabeling::identity(L, M);
  r2.perm2 = find_level2_permutation(aligned1, truth, data);
  FitResult aligned = relabel(aligned1, r2);

  rec.converged = aligned.converged;
  rec.switched = r1.switched() || r2.switched();
  rec.iterations = aligned.iterations;
  rec.loglik = aligned.loglik;
  rec.newton_fallbacks = aligned.diagnostics.newton_fallbacks;

  rec.class_error1 = classification_error(aligned.modal1, data.true_c_flat());
  rec.class_error2 = classification_error(aligned.modal2, data.true_w);

  rec.alpha = aligned.params.alpha;
  rec.gamma0 = aligned.params.gamma0;
  rec.crp = crp_matrix(aligned.params);
  rec.gamma1 = aligned.params.gamma1;
  rec.gamma2 = aligned.params.gamma2;

  rec.se_usable = aligned.se_available && rec.converged && !rec.switched;
  if (rec.se_usable) {
    rec.crp_se = Matrix(spec.n_indicators, L);
    for (int k = 0; k < spec.n_indicators; ++k)
      for (int c = 0; c < L; ++c) rec.crp_se(k, c) = aligned.crp_se[k](spec.n_categories[k] - 1, c);
    rec.gamma1_se = Matrix(L, spec.n_level1_covariates);
    rec.gamma2_se = Matrix(L, spec.n_level2_covariates);
    for (int c = 0; c + 1 < L; ++c) {
      for (int p = 0; p < spec.n_level1_covariates; ++p)
        rec.gamma1_se(c, p) = aligned.se[packed_index_gamma1(spec, c, p)];
      for (int p = 0; p < spec.n_level2_covariates; ++p)
        rec.gamma2_se(c, p) = aligned.se[packed_index_gamma2(spec, c, p)];
    }
  }
  return rec;
}

namespace {

// Configuration fields that must agree for records to live in one store.
json store_signature(const StudyConfig& config) {
  json j;
  j["master_seed"] = config.master_seed;
  j["compute_se"] = config.compute_se;
  json f;
  f["n_starts"] = config.fit.n_starts;
  f["n_refine"] = config.fit.n_refine;
  f["burn_in"] = config.fit.burn_in;
  f["max_iterations"] = config.fit.max_iterations;
  f["rel_tol"] = config.fit.rel_tol;
  j["fit"] = f;
  return j;
}

void compact_store(const fs::path& store_dir) {
  const fs::path rec_dir = store_dir / "records";
  std::vector<fs::path> files;
  if (fs::exists(rec_dir))
    for (const auto& entry : fs::directory_iterator(rec_dir))
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::string out;
  for (const fs::path& f : files) {
    std::string line = read_file(f.string());
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
    out += line;
    out += '\n';
  }
  write_file_atomic((store_dir / "records.jsonl").string(), out);
}

}  // namespace

int run_study(const StudyConfig& config, const ProgressFn& progress) {
  if (config.out_dir.empty()) fail(ErrorCategory::invalid_argument, "run_study: output directory not set");
  if (config.reps < 1) fail(ErrorCategory::invalid_argument, "run_study: reps must be >= 1");

  const std::vector<Condition> grid = condition_grid();
  std::vector<int> cond_idx = config.condition_indices;
  if (cond_idx.empty()) {
    cond_idx.resize(grid.size());
    std::iota(cond_idx.begin(), cond_idx.end(), 0);
  }
  for (int ci : cond_idx)
    if (ci < 0 || ci >= static_cast<int>(grid.size()))
      fail(ErrorCategory::invalid_argument, "run_study: condition index " + std::to_string(ci) +
                                                " outside 0.." + std::to_string(grid.size() - 1));

  const fs::path store_dir(config.out_dir);
  const fs::path rec_dir = store_dir / "records";
  std::error_code ec;
  fs::create_directories(rec_dir, ec);
  if (ec) fail(ErrorCategory::io, "cannot create " + rec_dir.string() + ": " + ec.message());

  // refuse to mix records produced under different estimation settings
  const fs::path sig_path = store_dir / "study.json";
  const std::string signature = store_signature(config).dump();
  if (fs::exists(sig_path)) {
    if (read_file(sig_path.string()) != signature)
      fail(ErrorCategory::invalid_argument,
           "run_study: existing store " + config.out_dir + " was built with different settings");
  } else {
    write_file_atomic(sig_path.string(), signature);
  }

  struct Task {
    int condition_index;
    int rep;
  };
  std::vector<Task> tasks;
  for (int ci : cond_idx)
    for (int rep = 0; rep < config.reps; ++rep)
      if (!fs::exists(rec_dir / record_filename(ci, rep))) tasks.push_back({ci, rep});

  const int total = static_cast<int>(tasks.size());
  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::mutex mu;
  std::exception_ptr first_error;

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int jobs = std::max(1, std::min<int>(config.jobs > 0 ? config.jobs : static_cast<int>(hw), total > 0 ? total : 1));

  auto worker = [&] {
    while (true) {
      const int t = next.fetch_add(1);
      if (t >= total) return;
      const Task task = tasks[static_cast<size_t>(t)];
      try {
        const ReplicationRecord rec = run_replication(grid[static_cast<size_t>(task.condition_index)],
                                                      task.condition_index, task.rep, config.master_seed,
                                                      config.fit, config.compute_se);
        write_file_atomic((rec_dir / record_filename(task.condition_index, task.rep)).string(),
                          record_to_json(rec) + "\n");
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
      const int d = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard<std::mutex> lock(mu);
        progress(d, total);
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(jobs));
  for (int w = 0; w < jobs; ++w) pool.emplace_back(worker);
  for (std::thread& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);

  compact_store(store_dir);
  return done.load();
}

std::vector<ReplicationRecord> load_records(const std::string& store_dir) {
  const fs::path dir(store_dir);
  std::vector<ReplicationRecord> records;

  const fs::path rec_dir = dir / "records";
  if (fs::exists(rec_dir)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(rec_dir))
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) records.push_back(record_from_json(read_file(f.string())));
  } else if (fs::exists(dir / "records.jsonl")) {
    std::istringstream in(read_file((dir / "records.jsonl").string()));
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) records.push_back(record_from_json(line));
  } else {
    fail(ErrorCategory::io, "no record store found under " + store_dir);
  }

  std::sort(records.begin(), records.end(), [](const ReplicationRecord& a, const ReplicationRecord& b) {
    if (a.condition_index != b.condition_index) return a.condition_index < b.condition_index;
    return a.rep < b.rep;
  });
  return records;
}

namespace {

using RecordGroups = std::map<int, std::vector<ReplicationRecord>>;

RecordGroups group_by_condition(std::vector<ReplicationRecord>&& records) {
  RecordGroups groups;
  for (ReplicationRecord& r : records) groups[r.condition_index].push_back(std::move(r));
  return groups;
}

std::string condition_csv_prefix(const Condition& c) {
  return std::to_string(c.n_indicators) + "," + csv_num(c.crp_quality) + "," + std::to_string(c.n_sites) +
         "," + std::to_string(c.site_size);
}

void write_recovery_csv(const RecordGroups& groups, const fs::path& out) {
  // Table layout: one row per (indicators, quality, sites, size, class);
  // bias/SE/SD/ratio column block per effect-pair cell.
  static const char* tags[] = {"nn", "ns", "sn", "ss"};

  struct Cell {
    ClassRecovery agg;
    int n_used = 0;
    bool present = false;
  };
  std::map<std::pair<ConditionKey, int>, std::map<std::string, Cell>> rows;

  for (const auto& [ci, recs] : groups) {
    const Condition& cond = recs.front().condition;
    const Parameters truth = build_true_parameters(cond);
    RecoverySummary summary;
    try {
      summary = parameter_recovery(recs, truth);
    } catch (const Error&) {
      continue;  // fewer than two converged records
    }
    const std::string tag = effect_tag(cond.l1_effects) + effect_tag(cond.l2_effects);
    for (int c = 0; c < truth.spec.n_level1_classes; ++c) {
      Cell cell;
      cell.agg = summary.crp_by_class[static_cast<size_t>(c)];
      cell.n_used = summary.crp.front().n_used;
      cell.present = true;
      rows[{condition_key(cond), c}][tag] = cell;
    }
  }

  std::string csv = "n_indicators,crp_quality,n_sites,site_size,latent_class";
  for (const char* tag : tags) {
    const std::string t(tag);
    csv += ",bias_" + t + ",se_" + t + ",sd_" + t + ",se_sd_" + t + ",n_used_" + t;
  }
  csv += "\n";
  for (const auto& [key, cells] : rows) {
    const auto& [ck, cls] = key;
    csv += std::to_string(ck.indicators) + "," + csv_num(ck.quality) + "," + std::to_string(ck.sites) + "," +
           std::to_string(ck.size) + "," + std::to_string(cls + 1);
    for (const char* tag : tags) {
      auto it = cells.find(tag);
      if (it == cells.end() || !it->second.present) {
        csv += ",,,,,";
        continue;
      }
      const Cell& cell = it->second;
      csv += "," + csv_num(cell.agg.bias) + "," + csv_num(cell.agg.se_mean) + "," + csv_num(cell.agg.sd) + ",";
      csv += cell.agg.ratio_available ? csv_num(cell.agg.ratio) : std::string("NA");
      csv += "," + std::to_string(cell.n_used);
    }
    csv += "\n";
  }
  write_file_atomic(out.string(), csv);
}

void write_power_csv(const RecordGroups& groups, const fs::path& out, double alpha) {
  std::string csv =
      "n_indicators,crp_quality,n_sites,site_size,l1_effects,l2_effects,family,true_slope,kind,bias,"
      "rate,n_used,rate_all_converged,n_converged\n";
  struct Family {
    const char* name;
    int level;
    int cls;
  };
  static const Family families[] = {
      {"cw1_on_x", 1, 0}, {"cw2_on_x", 1, 1}, {"cw1_on_w", 2, 0}, {"cw2_on_w", 2, 1}};

  for (const auto& [ci, recs] : groups) {
    const Condition& cond = recs.front().condition;
    const Parameters truth = build_true_parameters(cond);
    RecoverySummary summary;
    bool have_summary = true;
    try {
      summary = parameter_recovery(recs, truth, alpha);
    } catch (const Error&) {
      have_summary = false;
    }
    for (const Family& fam : families) {
      const double true_slope = fam.level == 1 ? truth.gamma1(fam.cls, 0) : truth.gamma2(fam.cls, 0);
      const RejectionRate rr = rejection_rate(recs, fam.level, fam.cls, 0, alpha);
      double bias = 0.0;
      if (have_summary) {
        const auto& stats = fam.level == 1 ? summary.slopes1 : summary.slopes2;
        bias = stats[static_cast<size_t>(fam.cls)].bias;
      }
      csv += condition_csv_prefix(cond) + "," + effect_tag(cond.l1_effects) + "," + effect_tag(cond.l2_effects) +
             "," + fam.name + "," + csv_num(true_slope) + "," + (true_slope == 0.0 ? "type1" : "power") + "," +
             csv_num(bias) + "," + (rr.available ? csv_num(rr.rate) : std::string("NA")) + "," +
             std::to_string(rr.n_used) + "," + (rr.available ? csv_num(rr.rate_all) : std::string("NA")) + "," +
             std::to_string(rr.n_converged) + "\n";
    }
  }
  write_file_atomic(out.string(), csv);
}

// condition-level mean classification errors; shared by the classification
// table and the eta-squared summary
struct ClassMeans {
  std::vector<Condition> conditions;
  std::vector<double> level1;
  std::vector<double> level2;
  std::vector<int> n;
};

ClassMeans classification_means(const RecordGroups& groups) {
  ClassMeans out;
  for (const auto& [ci, recs] : groups) {
    double e1 = 0.0, e2 = 0.0;
    int n = 0;
    for (const ReplicationRecord& r : recs) {
      if (!r.converged) continue;
      e1 += r.class_error1;
      e2 += r.class_error2;
      ++n;
    }
    if (n == 0) continue;
    out.conditions.push_back(recs.front().condition);
    out.level1.push_back(e1 / n);
    out.level2.push_back(e2 / n);
    out.n.push_back(n);
  }
  return out;
}

void write_classification_csv(const RecordGroups& groups, const fs::path& out) {
  const ClassMeans means = classification_means(groups);
  std::string csv = "n_indicators,crp_quality,n_sites,site_size,l1_effects,l2_effects,level,mean_error,n\n";
  for (size_t i = 0; i < means.conditions.size(); ++i) {
    const Condition& cond = means.conditions[i];
    const std::string prefix = condition_csv_prefix(cond) + "," + effect_tag(cond.l1_effects) + "," +
                               effect_tag(cond.l2_effects);
    csv += prefix + ",1," + csv_num(means.level1[i]) + "," + std::to_string(means.n[i]) + "\n";
    csv += prefix + ",2," + csv_num(means.level2[i]) + "," + std::to_string(means.n[i]) + "\n";
  }
  write_file_atomic(out.string(), csv);
}

void write_eta2_csv(const RecordGroups& groups, const fs::path& out) {
  const ClassMeans means = classification_means(groups);
  std::string csv = "level,factor,eta_squared,n_conditions\n";
  for (int level = 1; level <= 2; ++level) {
    const std::vector<double>& y = level == 1 ? means.level1 : means.level2;
    for (StudyFactor f : all_study_factors()) {
      const double eta = means.conditions.empty() ? 0.0 : eta_squared(means.conditions, y, f);
      csv += std::to_string(level) + "," + study_factor_name(f) + "," + csv_num(eta) + "," +
             std::to_string(means.conditions.size()) + "\n";
    }
  }
  write_file_atomic(out.string(), csv);
}

void write_diagnostics_csv(const RecordGroups& groups, const fs::path& out) {
  std::string csv =
      "n_indicators,crp_quality,n_sites,site_size,l1_effects,l2_effects,n_records,n_converged,"
      "converged_rate,switched_rate,se_usable_rate,mean_iterations,newton_fallback_rate\n";
  for (const auto& [ci, recs] : groups) {
    const Condition& cond = recs.front().condition;
    int conv = 0, sw = 0, usable = 0, fallbacks = 0;
    double iters = 0.0;
    for (const ReplicationRecord& r : recs) {
      conv += r.converged ? 1 : 0;
      sw += r.switched ? 1 : 0;
      usable += r.se_usable ? 1 : 0;
      fallbacks += r.newton_fallbacks > 0 ? 1 : 0;
      iters += r.iterations;
    }
    const double n = static_cast<double>(recs.size());
    csv += condition_csv_prefix(cond) + "," + effect_tag(cond.l1_effects) + "," + effect_tag(cond.l2_effects) +
           "," + std::to_string(recs.size()) + "," + std::to_string(conv) + "," + csv_num(conv / n) + "," +
           csv_num(sw / n) + "," + csv_num(usable / n) + "," + csv_num(iters / n) + "," +
           csv_num(fallbacks / n) + "\n";
  }
  write_file_atomic(out.string(), csv);
}

}  // namespace

std::vector<std::string> report_kinds() {
  return {"recovery", "power", "classification", "eta2", "diagnostics", "all"};
}

void write_reports(const std::string& store_dir, const std::string& kind, const std::string& out_dir,
                   double alpha) {
  const auto kinds = report_kinds();
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
    std::string valid;
    for (const auto& k : kinds) valid += (valid.empty() ? "" : ", ") + k;
    fail(ErrorCategory::invalid_argument, "unknown report kind '" + kind + "' (valid: " + valid + ")");
  }
  std::vector<ReplicationRecord> records = load_records(store_dir);
  if (records.empty()) fail(ErrorCategory::invalid_argument, "record store is empty: " + store_dir);
  const RecordGroups groups = group_by_condition(std::move(records));

  const fs::path out(out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);

  const bool all = kind == "all";
  if (all || kind == "recovery") write_recovery_csv(groups, out / "recovery.csv");
  if (all || kind == "power") write_power_csv(groups, out / "power.csv", alpha);
  if (all || kind == "classification") write_classification_csv(groups, out / "classification.csv");
  if (all || kind == "eta2") write_eta2_csv(groups, out / "eta_squared.csv");
  if (all || kind == "diagnostics") write_diagnostics_csv(groups, out / "diagnostics.csv");
}

namespace {

std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

json params_to_json(const Parameters& p) {
  json j;
  j["alpha"] = p.alpha;
  json g0 = json::array(), g1 = json::array(), g2 = json::array(), betas = json::array();
  for (int c = 0; c < p.spec.n_level1_classes; ++c) {
    json r0 = json::array(), r1 = json::array(), r2 = json::array();
    for (int m = 0; m < p.spec.n_level2_classes; ++m) r0.push_back(p.gamma0(c, m));
    for (int q = 0; q < p.spec.n_level1_covariates; ++q) r1.push_back(p.gamma1(c, q));
    for (int q = 0; q < p.spec.n_level2_covariates; ++q) r2.push_back(p.gamma2(c, q));
    g0.push_back(r0);
    g1.push_back(r1);
    g2.push_back(r2);
  }
  for (int k = 0; k < p.spec.n_indicators; ++k) {
    json b = json::array();
    for (int s = 0; s < p.spec.n_categories[k]; ++s) {
      json row = json::array();
      for (int c = 0; c < p.spec.n_level1_classes; ++c) row.push_back(p.beta[k](s, c));
      b.push_back(row);
    }
    betas.push_back(b);
  }
  j["gamma0"] = g0;
  j["gamma1"] = g1;
  j["gamma2"] = g2;
  j["beta"] = betas;
  return j;
}

// posterior-mean level-1 composition of each level-2 class over its modal
// sites
Matrix modal_composition(const FitResult& fit, const Dataset& data) {
  const int L = fit.params.spec.n_level1_classes;
  const int M = fit.params.spec.n_level2_classes;
  Matrix comp(M, L);
  std::vector<int> counts(static_cast<size_t>(M), 0);
  const std::vector<int> offsets = data.site_offsets();
  for (int j = 0; j < data.n_sites(); ++j) {
    const int m = fit.modal2[static_cast<size_t>(j)] - 1;
    for (size_t i = 0; i < data.sites[j].members.size(); ++i) {
      for (int c = 0; c < L; ++c) comp(m, c) += fit.posteriors.c_marg(offsets[j] + static_cast<int>(i), c);
      ++counts[static_cast<size_t>(m)];
    }
  }
  for (int m = 0; m < M; ++m)
    if (counts[static_cast<size_t>(m)] > 0)
      for (int c = 0; c < L; ++c) comp(m, c) /= counts[static_cast<size_t>(m)];
  return comp;
}

}  // namespace

void write_fit_outputs(const FitResult& fit, const Dataset& data, const std::string& out_dir,
                       double alpha) {
  const ModelSpec& spec = fit.params.spec;
  const int K = spec.n_indicators;
  const int L = spec.n_level1_classes;
  const int M = spec.n_level2_classes;
  const fs::path out(out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorCategory::io, "cannot create " + out_dir + ": " + ec.message());

  const std::vector<Matrix> crp = fit.params.crp();
  const Matrix composition = modal_composition(fit, data);

  std::vector<int> class_counts(static_cast<size_t>(L), 0);
  for (int code : fit.modal1) ++class_counts[static_cast<size_t>(code - 1)];
  std::vector<int> site_counts(static_cast<size_t>(M), 0);
  for (int code : fit.modal2) ++site_counts[static_cast<size_t>(code - 1)];

  // machine-readable result
  {
    json j;
    j["schema_version"] = 1;
    json model;
    model["n_indicators"] = K;
    model["n_categories"] = spec.n_categories;
    model["n_level1_classes"] = L;
    model["n_level2_classes"] = M;
    model["n_level1_covariates"] = spec.n_level1_covariates;
    model["n_level2_covariates"] = spec.n_level2_covariates;
    j["model"] = model;
    j["loglik"] = fit.loglik;
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["n_starts_used"] = fit.n_starts_used;
    j["free_parameters"] = fit.fit_stats.free_parameters;
    j["aic"] = fit.fit_stats.aic;
    j["bic"] = fit.fit_stats.bic;
    j["entropy"] = fit.fit_stats.entropy;
    j["params"] = params_to_json(fit.params);
    json crp_j = json::array();
    for (int k = 0; k < K; ++k) {
      json b = json::array();
      for (int s = 0; s < spec.n_categories[k]; ++s) {
        json row = json::array();
        for (int c = 0; c < L; ++c) row.push_back(crp[k](s, c));
        b.push_back(row);
      }
      crp_j.push_back(b);
    }
    j["crp"] = crp_j;
    j["se_available"] = fit.se_available;
    if (fit.se_available) j["se"] = fit.se;
    j["level2_class_probs"] = fit.params.level2_class_probs();
    j["modal_class_counts"] = class_counts;
    j["modal_site_counts"] = site_counts;
    json comp = json::array();
    for (int m = 0; m < M; ++m) {
      json row = json::array();
      for (int c = 0; c < L; ++c) row.push_back(composition(m, c));
      comp.push_back(row);
    }
    j["composition"] = comp;
    write_file_atomic((out / "fit.json").string(), j.dump(2) + "\n");
  }

  // response probability table: wide for all-binary models, long otherwise
  {
    const bool all_binary =
        std::all_of(spec.n_categories.begin(), spec.n_categories.end(), [](int s) { return s == 2; });
    std::string csv;
    if (all_binary) {
      csv = "indicator";
      for (int c = 1; c <= L; ++c) csv += ",class" + std::to_string(c);
      csv += "\n";
      for (int k = 0; k < K; ++k) {
        csv += "y" + std::to_string(k + 1);
        for (int c = 0; c < L; ++c) csv += "," + csv_num(crp[k](1, c));
        csv += "\n";
      }
    } else {
      csv = "indicator,category,class,probability\n";
      for (int k = 0; k < K; ++k)
        for (int s = 0; s < spec.n_categories[k]; ++s)
          for (int c = 0; c < L; ++c)
            csv += "y" + std::to_string(k + 1) + "," + std::to_string(s + 1) + "," + std::to_string(c + 1) +
                   "," + csv_num(crp[k](s, c)) + "\n";
    }
    write_file_atomic((out / "crp.csv").string(), csv);
  }

  // fit statistics
  {
    std::string csv = "statistic,value\n";
    csv += "free_parameters," + std::to_string(fit.fit_stats.free_parameters) + "\n";
    csv += "loglik," + csv_num(fit.loglik) + "\n";
    csv += "aic," + csv_num(fit.fit_stats.aic) + "\n";
    csv += "bic," + csv_num(fit.fit_stats.bic) + "\n";
    csv += "entropy," + csv_num(fit.fit_stats.entropy) + "\n";
    csv += "converged," + std::string(fit.converged ? "true" : "false") + "\n";
    csv += "iterations," + std::to_string(fit.iterations) + "\n";
    csv += "n_individuals," + std::to_string(data.n_individuals()) + "\n";
    csv += "n_sites," + std::to_string(data.n_sites()) + "\n";
    write_file_atomic((out / "fit_stats.csv").string(), csv);
  }

  // odds-ratio table for the covariate effects
  {
    std::string csv = "level,covariate,class,reference_class,estimate,se,z,p,odds_ratio,ci_low,ci_high,stars\n";
    auto emit = [&](int level, int p_idx, int c) {
      const double est = level == 1 ? fit.params.gamma1(c, p_idx) : fit.params.gamma2(c, p_idx);
      double se = 0.0;
      if (fit.se_available)
        se = fit.se[level == 1 ? packed_index_gamma1(spec, c, p_idx) : packed_index_gamma2(spec, c, p_idx)];
      const auto tests = wald_tests(std::vector<double>{est}, std::vector<double>{se}, alpha);
      const WaldTest& t = tests[0];
      csv += std::to_string(level) + "," + (level == 1 ? "x" : "z") + std::to_string(p_idx + 1) + "," +
             std::to_string(c + 1) + "," + std::to_string(L);
      if (t.available)
        csv += "," + csv_num(t.estimate) + "," + csv_num(t.se) + "," + csv_num(t.z) + "," + csv_num(t.p_value) +
               "," + csv_num(t.odds_ratio) + "," + csv_num(t.ci_low) + "," + csv_num(t.ci_high) + "," +
               significance_stars(t.p_value);
      else
        csv += "," + csv_num(t.estimate) + ",NA,NA,NA," + csv_num(t.odds_ratio) + ",NA,NA,";
      csv += "\n";
    };
    for (int p_idx = 0; p_idx < spec.n_level1_covariates; ++p_idx)
      for (int c = 0; c + 1 < L; ++c) emit(1, p_idx, c);
    for (int p_idx = 0; p_idx < spec.n_level2_covariates; ++p_idx)
      for (int c = 0; c + 1 < L; ++c) emit(2, p_idx, c);
    write_file_atomic((out / "odds_ratios.csv").string(), csv);
  }

  // level-2 class composition of level-1 classes (posterior means over modal
  // sites)
  {
    std::string csv = "level2_class,share_sites_modal,prob_level2_class";
    for (int c = 1; c <= L; ++c) csv += ",class" + std::to_string(c);
    csv += "\n";
    const std::vector<double> pi = fit.params.level2_class_probs();
    for (int m = 0; m < M; ++m) {
      csv += std::to_string(m + 1) + "," +
             csv_num(static_cast<double>(site_counts[static_cast<size_t>(m)]) / data.n_sites()) + "," +
             csv_num(pi[static_cast<size_t>(m)]);
      for (int c = 0; c < L; ++c) csv += "," + csv_num(composition(m, c));
      csv += "\n";
    }
    write_file_atomic((out / "composition.csv").string(), csv);
  }
}

}  // namespace npmlca
