#include "io.hpp"

#include <json.hpp>

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace npmlca {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& tok, int line_no, const char* what) {
  double v = 0.0;
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end)
    fail(ErrorCategory::parse,
         std::string("line ") + std::to_string(line_no) + ": cannot parse " + what + " value '" + tok + "'");
  return v;
}

int parse_int(const std::string& tok, int line_no, const char* what) {
  int v = 0;
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end)
    fail(ErrorCategory::parse,
         std::string("line ") + std::to_string(line_no) + ": cannot parse " + what + " value '" + tok + "'");
  return v;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  if (!j.is_array()) fail(ErrorCategory::parse, "expected a matrix (array of arrays)");
  const int rows = static_cast<int>(j.size());
  if (rows == 0) return Matrix();
  const int cols = static_cast<int>(j[0].size());
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols) fail(ErrorCategory::parse, "ragged matrix in JSON");
    for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

json effect_to_json(const EffectPair& e) { return json::array({e.or1, e.or2}); }

EffectPair effect_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) fail(ErrorCategory::parse, "effect pair must be a 2-element array");
  return EffectPair{j[0].get<double>(), j[1].get<double>()};
}

json condition_to_json_obj(const Condition& cond) {
  json j;
  j["schema_version"] = 1;
  j["n_indicators"] = cond.n_indicators;
  j["crp_quality"] = cond.crp_quality;
  j["n_sites"] = cond.n_sites;
  j["site_size"] = cond.site_size;
  j["l1_effects"] = effect_to_json(cond.l1_effects);
  j["l2_effects"] = effect_to_json(cond.l2_effects);
  return j;
}

Condition condition_from_json_obj(const json& j) {
  Condition cond;
  try {
    cond.n_indicators = j.at("n_indicators").get<int>();
    cond.crp_quality = j.at("crp_quality").get<double>();
    cond.n_sites = j.at("n_sites").get<int>();
    cond.site_size = j.at("site_size").get<int>();
    cond.l1_effects = effect_from_json(j.at("l1_effects"));
    cond.l2_effects = effect_from_json(j.at("l2_effects"));
  } catch (const json::exception& e) {
    fail(ErrorCategory::parse, std::string("condition JSON: ") + e.what());
  }
  cond.validate();
  return cond;
}

}  // namespace

void write_dataset_csv(const std::string& path, const Dataset& data) {
  if (data.sites.empty()) fail(ErrorCategory::invalid_argument, "write_dataset_csv: empty dataset");
  const int K = static_cast<int>(data.sites[0].members[0].y.size());
  const int P1 = static_cast<int>(data.sites[0].members[0].x.size());
  const int P2 = static_cast<int>(data.sites[0].z.size());

  std::string out;
  out += "site_id";
  for (int k = 1; k <= K; ++k) out += ",y" + std::to_string(k);
  for (int p = 1; p <= P1; ++p) out += ",x" + std::to_string(p);
  for (int p = 1; p <= P2; ++p) out += ",z" + std::to_string(p);
  out += "\n";
  for (const Site& site : data.sites) {
    for (const Individual& ind : site.members) {
      out += site.id;
      for (int v : ind.y) out += "," + std::to_string(v);
      for (double v : ind.x) out += "," + format_double(v);
      for (double v : site.z) out += "," + format_double(v);
      out += "\n";
    }
  }
  write_file_atomic(path, out);
}

LoadedDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open dataset file: " + path);

  std::string line;
  if (!std::getline(in, line)) fail(ErrorCategory::parse, path + ": empty file");
  const std::vector<std::string> header = split_csv_line(line);
  if (header.empty() || header[0] != "site_id")
    fail(ErrorCategory::parse, path + " line 1: header must start with site_id");

  int K = 0, P1 = 0, P2 = 0;
  for (size_t i = 1; i < header.size(); ++i) {
    const std::string& h = header[i];
    if (h.rfind('y', 0) == 0 && P1 == 0 && P2 == 0)
      ++K;
    else if (h.rfind('x', 0) == 0 && P2 == 0)
      ++P1;
    else if (h.rfind('z', 0) == 0)
      ++P2;
    else
      fail(ErrorCategory::parse, path + " line 1: unexpected column '" + h + "' (want y*, then x*, then z*)");
  }
  if (K == 0) fail(ErrorCategory::parse, path + " line 1: no indicator columns (y1..yK)");

  LoadedDataset out;
  std::map<std::string, int> site_index;
  std::vector<int> max_code(static_cast<size_t>(K), 2);

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> tok = split_csv_line(line);
    if (static_cast<int>(tok.size()) != 1 + K + P1 + P2)
      fail(ErrorCategory::parse, path + " line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(1 + K + P1 + P2) + " fields, found " +
                                     std::to_string(tok.size()));
    Individual ind;
    ind.y.reserve(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
      const int code = parse_int(tok[1 + k], line_no, "indicator");
      if (code < 1)
        fail(ErrorCategory::parse,
             path + " line " + std::to_string(line_no) + ": indicator codes start at 1, found " + tok[1 + k]);
      max_code[k] = std::max(max_code[k], code);
      ind.y.push_back(code);
    }
    for (int p = 0; p < P1; ++p) ind.x.push_back(parse_double(tok[1 + K + p], line_no, "level-1 covariate"));
    std::vector<double> z;
    for (int p = 0; p < P2; ++p) z.push_back(parse_double(tok[1 + K + P1 + p], line_no, "level-2 covariate"));

    const std::string& id = tok[0];
    auto it = site_index.find(id);
    if (it == site_index.end()) {
      site_index.emplace(id, static_cast<int>(out.data.sites.size()));
      Site site;
      site.id = id;
      site.z = std::move(z);
      site.members.push_back(std::move(ind));
      out.data.sites.push_back(std::move(site));
    } else {
      Site& site = out.data.sites[static_cast<size_t>(it->second)];
      if (site.z != z)
        fail(ErrorCategory::parse, path + " line " + std::to_string(line_no) +
                                       ": level-2 covariates differ within site '" + id + "'");
      site.members.push_back(std::move(ind));
    }
  }
  if (out.data.sites.empty()) fail(ErrorCategory::parse, path + ": no data rows");

  out.dims.n_indicators = K;
  out.dims.n_categories.assign(max_code.begin(), max_code.end());
  out.dims.n_level1_covariates = P1;
  out.dims.n_level2_covariates = P2;
  return out;
}

void write_truth_csv(const std::string& path, const Dataset& data) {
  if (!data.has_truth()) fail(ErrorCategory::invalid_argument, "write_truth_csv: dataset carries no truth");
  std::string out;
  out += "site_id,row,true_c\n";
  for (size_t j = 0; j < data.sites.size(); ++j)
    for (size_t i = 0; i < data.true_c[j].size(); ++i)
      out += data.sites[j].id + "," + std::to_string(i + 1) + "," + std::to_string(data.true_c[j][i]) + "\n";
  out += "site_id,true_w\n";
  for (size_t j = 0; j < data.sites.size(); ++j)
    out += data.sites[j].id + "," + std::to_string(data.true_w[j]) + "\n";
  write_file_atomic(path, out);
}

void read_truth_csv(const std::string& path, Dataset& data) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open truth file: " + path);
  std::map<std::string, int> site_index;
  for (size_t j = 0; j < data.sites.size(); ++j) site_index[data.sites[j].id] = static_cast<int>(j);

  data.true_c.assign(data.sites.size(), {});
  data.true_w.assign(data.sites.size(), 0);

  std::string line;
  int line_no = 0;
  bool site_section = false;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line == "site_id,row,true_c") {
      saw_header = true;
      site_section = false;
      continue;
    }
    if (line == "site_id,true_w") {
      site_section = true;
      continue;
    }
    if (!saw_header) fail(ErrorCategory::parse, path + ": missing individual-section header");
    const std::vector<std::string> tok = split_csv_line(line);
    auto it = site_index.find(tok[0]);
    if (it == site_index.end())
      fail(ErrorCategory::parse, path + " line " + std::to_string(line_no) + ": unknown site '" + tok[0] + "'");
    if (!site_section) {
      if (tok.size() != 3) fail(ErrorCategory::parse, path + " line " + std::to_string(line_no) + ": want 3 fields");
      auto& rows = data.true_c[static_cast<size_t>(it->second)];
      const int row = parse_int(tok[1], line_no, "row");
      if (row != static_cast<int>(rows.size()) + 1)
        fail(ErrorCategory::parse, path + " line " + std::to_string(line_no) + ": rows of site '" + tok[0] +
                                       "' out of order (found row " + tok[1] + ", expected " +
                                       std::to_string(rows.size() + 1) + ")");
      rows.push_back(parse_int(tok[2], line_no, "true_c"));
    } else {
      if (tok.size() != 2) fail(ErrorCategory::parse, path + " line " + std::to_string(line_no) + ": want 2 fields");
      data.true_w[static_cast<size_t>(it->second)] = parse_int(tok[1], line_no, "true_w");
    }
  }
  for (size_t j = 0; j < data.sites.size(); ++j) {
    if (data.true_c[j].size() != data.sites[j].members.size())
      fail(ErrorCategory::parse, path + ": truth rows for site '" + data.sites[j].id +
                                     "' do not match the dataset");
    if (data.true_w[j] < 1) fail(ErrorCategory::parse, path + ": missing true_w for site '" + data.sites[j].id + "'");
  }
}

int filter_small_sites(Dataset& data, int min_size) {
  const bool truth = data.has_truth();
  int removed = 0;
  Dataset kept;
  for (size_t j = 0; j < data.sites.size(); ++j) {
    if (static_cast<int>(data.sites[j].members.size()) < min_size) {
      ++removed;
      continue;
    }
    kept.sites.push_back(std::move(data.sites[j]));
    if (truth) {
      kept.true_c.push_back(std::move(data.true_c[j]));
      kept.true_w.push_back(data.true_w[j]);
    }
  }
  data = std::move(kept);
  return removed;
}

std::string condition_to_json(const Condition& cond) { return condition_to_json_obj(cond).dump(); }

Condition condition_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCategory::parse, std::string("condition JSON: ") + e.what());
  }
  return condition_from_json_obj(j);
}

std::string record_to_json(const ReplicationRecord& rec) {
  json j;
  j["schema_version"] = 1;
  j["condition_index"] = rec.condition_index;
  j["condition"] = condition_to_json_obj(rec.condition);
  j["rep"] = rec.rep;
  j["gen_seed"] = rec.gen_seed;
  j["fit_seed"] = rec.fit_seed;
  j["converged"] = rec.converged;
  j["switched"] = rec.switched;
  j["se_usable"] = rec.se_usable;
  j["iterations"] = rec.iterations;
  j["loglik"] = rec.loglik;
  j["newton_fallbacks"] = rec.newton_fallbacks;
  j["class_error1"] = rec.class_error1;
  j["class_error2"] = rec.class_error2;
  j["alpha"] = rec.alpha;
  j["gamma0"] = matrix_to_json(rec.gamma0);
  j["crp"] = matrix_to_json(rec.crp);
  j["gamma1"] = matrix_to_json(rec.gamma1);
  j["gamma2"] = matrix_to_json(rec.gamma2);
  j["crp_se"] = matrix_to_json(rec.crp_se);
  j["gamma1_se"] = matrix_to_json(rec.gamma1_se);
  j["gamma2_se"] = matrix_to_json(rec.gamma2_se);
  return j.dump();
}

ReplicationRecord record_from_json(const std::string& text) {
  ReplicationRecord rec;
  try {
    const json j = json::parse(text);
    rec.condition_index = j.at("condition_index").get<int>();
    rec.condition = condition_from_json_obj(j.at("condition"));
    rec.rep = j.at("rep").get<int>();
    rec.gen_seed = j.at("gen_seed").get<uint64_t>();
    rec.fit_seed = j.at("fit_seed").get<uint64_t>();
    rec.converged = j.at("converged").get<bool>();
    rec.switched = j.at("switched").get<bool>();
    rec.se_usable = j.at("se_usable").get<bool>();
    rec.iterations = j.at("iterations").get<int>();
    rec.loglik = j.at("loglik").get<double>();
    rec.newton_fallbacks = j.at("newton_fallbacks").get<int>();
    rec.class_error1 = j.at("class_error1").get<double>();
    rec.class_error2 = j.at("class_error2").get<double>();
    rec.alpha = j.at("alpha").get<std::vector<double>>();
    rec.gamma0 = matrix_from_json(j.at("gamma0"));
    rec.crp = matrix_from_json(j.at("crp"));
    rec.gamma1 = matrix_from_json(j.at("gamma1"));
    rec.gamma2 = matrix_from_json(j.at("gamma2"));
    rec.crp_se = matrix_from_json(j.at("crp_se"));
    rec.gamma1_se = matrix_from_json(j.at("gamma1_se"));
    rec.gamma2_se = matrix_from_json(j.at("gamma2_se"));
  } catch (const json::exception& e) {
    fail(ErrorCategory::parse, std::string("record JSON: ") + e.what());
  }
  return rec;
}

std::string study_config_to_json(const StudyConfig& config) {
  json j;
  j["schema_version"] = 1;
  j["master_seed"] = config.master_seed;
  j["reps"] = config.reps;
  j["conditions"] = config.condition_indices;
  j["jobs"] = config.jobs;
  j["out_dir"] = config.out_dir;
  j["alpha"] = config.alpha;
  j["compute_se"] = config.compute_se;
  json f;
  f["n_starts"] = config.fit.n_starts;
  f["n_refine"] = config.fit.n_refine;
  f["burn_in"] = config.fit.burn_in;
  f["max_iterations"] = config.fit.max_iterations;
  f["rel_tol"] = config.fit.rel_tol;
  j["fit"] = f;
  return j.dump();
}

StudyConfig study_config_from_json(const std::string& text) {
  StudyConfig config;
  try {
    const json j = json::parse(text);
    config.master_seed = j.at("master_seed").get<uint64_t>();
    config.reps = j.value("reps", 500);
    if (j.contains("conditions")) config.condition_indices = j["conditions"].get<std::vector<int>>();
    config.jobs = j.value("jobs", 0);
    config.out_dir = j.value("out_dir", std::string());
    config.alpha = j.value("alpha", 0.05);
    config.compute_se = j.value("compute_se", true);
    if (j.contains("fit")) {
      const json& f = j["fit"];
      config.fit.n_starts = f.value("n_starts", config.fit.n_starts);
      config.fit.n_refine = f.value("n_refine", config.fit.n_refine);
      config.fit.burn_in = f.value("burn_in", config.fit.burn_in);
      config.fit.max_iterations = f.value("max_iterations", config.fit.max_iterations);
      config.fit.rel_tol = f.value("rel_tol", config.fit.rel_tol);
    }
  } catch (const json::exception& e) {
    fail(ErrorCategory::parse, std::string("study config JSON: ") + e.what());
  }
  if (config.reps < 1) fail(ErrorCategory::invalid_argument, "study config: reps must be >= 1");
  return config;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  static std::atomic<uint64_t> tmp_counter{0};
  const fs::path tmp = target.parent_path() /
                       (target.filename().string() + ".tmp." + std::to_string(::getpid()) + "." +
                        std::to_string(tmp_counter.fetch_add(1)));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCategory::io, "cannot write " + tmp.string());
    out << content;
    if (!out.good()) fail(ErrorCategory::io, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) fail(ErrorCategory::io, "cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace npmlca
