#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace npmlca {

namespace {

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) fail(ErrorCategory::numeric, std::string(what) + " contains a non-finite entry");
  }
}

// log-softmax of the class-c column of a beta block, written into out.
void log_softmax_column(const Matrix& beta_k, int c, std::span<double> out) {
  const int S = beta_k.rows();
  double m = beta_k(0, c);
  for (int s = 1; s < S; ++s) m = std::max(m, beta_k(s, c));
  double acc = 0.0;
  for (int s = 0; s < S; ++s) acc += std::exp(beta_k(s, c) - m);
  const double lse = m + std::log(acc);
  for (int s = 0; s < S; ++s) out[s] = beta_k(s, c) - lse;
}

}  // namespace

ModelSpec ModelSpec::binary(int n_indicators, int n_level1_classes, int n_level2_classes,
                            int n_level1_covariates, int n_level2_covariates) {
  ModelSpec spec;
  spec.n_indicators = n_indicators;
  spec.n_categories.assign(static_cast<size_t>(n_indicators), 2);
  spec.n_level1_classes = n_level1_classes;
  spec.n_level2_classes = n_level2_classes;
  spec.n_level1_covariates = n_level1_covariates;
  spec.n_level2_covariates = n_level2_covariates;
  spec.validate();
  return spec;
}

void ModelSpec::validate() const {
  if (n_indicators < 1) fail(ErrorCategory::invalid_argument, "model needs at least one indicator");
  if (static_cast<int>(n_categories.size()) != n_indicators)
    fail(ErrorCategory::dimension, "n_categories has " + std::to_string(n_categories.size()) +
                                       " entries, expected one per indicator (" + std::to_string(n_indicators) + ")");
  for (int k = 0; k < n_indicators; ++k) {
    if (n_categories[k] < 2)
      fail(ErrorCategory::invalid_argument,
           "indicator " + std::to_string(k + 1) + " has " + std::to_string(n_categories[k]) +
               " categories, need at least 2");
  }
  // L = 1 is a degenerate but well-defined model (closed-form reductions)
  if (n_level1_classes < 1) fail(ErrorCategory::invalid_argument, "need at least one level-1 class");
  if (n_level2_classes < 1) fail(ErrorCategory::invalid_argument, "need at least one level-2 class");
  if (n_level1_covariates < 0 || n_level2_covariates < 0)
    fail(ErrorCategory::invalid_argument, "covariate counts must be nonnegative");
}

Parameters Parameters::zeros(const ModelSpec& spec) {
  spec.validate();
  Parameters p;
  p.spec = spec;
  p.alpha.assign(static_cast<size_t>(spec.n_level2_classes), 0.0);
  p.gamma0 = Matrix(spec.n_level1_classes, spec.n_level2_classes);
  p.gamma1 = Matrix(spec.n_level1_classes, spec.n_level1_covariates);
  p.gamma2 = Matrix(spec.n_level1_classes, spec.n_level2_covariates);
  p.beta.reserve(static_cast<size_t>(spec.n_indicators));
  for (int k = 0; k < spec.n_indicators; ++k) p.beta.emplace_back(spec.n_categories[k], spec.n_level1_classes);
  return p;
}

void Parameters::validate() const {
  spec.validate();
  const int L = spec.n_level1_classes;
  const int M = spec.n_level2_classes;
  if (static_cast<int>(alpha.size()) != M)
    fail(ErrorCategory::dimension, "alpha has " + std::to_string(alpha.size()) + " entries, expected " + std::to_string(M));
  if (gamma0.rows() != L || gamma0.cols() != M) fail(ErrorCategory::dimension, "gamma0 shape mismatch");
  if (gamma1.rows() != L || gamma1.cols() != spec.n_level1_covariates)
    fail(ErrorCategory::dimension, "gamma1 shape mismatch");
  if (gamma2.rows() != L || gamma2.cols() != spec.n_level2_covariates)
    fail(ErrorCategory::dimension, "gamma2 shape mismatch");
  if (static_cast<int>(beta.size()) != spec.n_indicators) fail(ErrorCategory::dimension, "beta block count mismatch");
  for (int k = 0; k < spec.n_indicators; ++k) {
    if (beta[k].rows() != spec.n_categories[k] || beta[k].cols() != L)
      fail(ErrorCategory::dimension, "beta block " + std::to_string(k + 1) + " shape mismatch");
  }

  if (alpha[0] != 0.0) fail(ErrorCategory::invalid_argument, "alpha reference cell (class 1) must be exactly 0");
  for (int m = 0; m < M; ++m)
    if (gamma0(L - 1, m) != 0.0) fail(ErrorCategory::invalid_argument, "gamma0 reference row must be exactly 0");
  for (int p = 0; p < spec.n_level1_covariates; ++p)
    if (gamma1(L - 1, p) != 0.0) fail(ErrorCategory::invalid_argument, "gamma1 reference row must be exactly 0");
  for (int p = 0; p < spec.n_level2_covariates; ++p)
    if (gamma2(L - 1, p) != 0.0) fail(ErrorCategory::invalid_argument, "gamma2 reference row must be exactly 0");
  for (int k = 0; k < spec.n_indicators; ++k)
    for (int c = 0; c < L; ++c)
      if (beta[k](0, c) != 0.0) fail(ErrorCategory::invalid_argument, "beta reference category must be exactly 0");

  check_finite(alpha, "alpha");
  check_finite(gamma0.data(), "gamma0");
  check_finite(gamma1.data(), "gamma1");
  check_finite(gamma2.data(), "gamma2");
  for (const Matrix& b : beta) check_finite(b.data(), "beta");
}

int Parameters::n_free() const { return static_cast<int>(count_free_parameters(spec)); }

int packed_index_alpha(const ModelSpec& spec, int m) {
  (void)spec;
  return m - 1;  // m in 1..M-1
}

int packed_index_gamma0(const ModelSpec& spec, int c, int m) {
  return (spec.n_level2_classes - 1) + c * spec.n_level2_classes + m;
}

int packed_index_gamma1(const ModelSpec& spec, int c, int p) {
  const int L1 = spec.n_level1_classes - 1;
  return (spec.n_level2_classes - 1) + L1 * spec.n_level2_classes + c * spec.n_level1_covariates + p;
}

int packed_index_gamma2(const ModelSpec& spec, int c, int p) {
  const int L1 = spec.n_level1_classes - 1;
  return (spec.n_level2_classes - 1) + L1 * (spec.n_level2_classes + spec.n_level1_covariates) +
         c * spec.n_level2_covariates + p;
}

int packed_index_beta(const ModelSpec& spec, int k, int s, int c) {
  const int L = spec.n_level1_classes;
  const int L1 = L - 1;
  int base = (spec.n_level2_classes - 1) +
             L1 * (spec.n_level2_classes + spec.n_level1_covariates + spec.n_level2_covariates);
  for (int kk = 0; kk < k; ++kk) base += (spec.n_categories[kk] - 1) * L;
  return base + c * (spec.n_categories[k] - 1) + (s - 1);
}

std::vector<double> Parameters::pack() const {
  const int L = spec.n_level1_classes;
  const int M = spec.n_level2_classes;
  std::vector<double> theta;
  theta.reserve(static_cast<size_t>(n_free()));
  for (int m = 1; m < M; ++m) theta.push_back(alpha[m]);
  for (int c = 0; c + 1 < L; ++c)
    for (int m = 0; m < M; ++m) theta.push_back(gamma0(c, m));
  for (int c = 0; c + 1 < L; ++c)
    for (int p = 0; p < spec.n_level1_covariates; ++p) theta.push_back(gamma1(c, p));
  for (int c = 0; c + 1 < L; ++c)
    for (int p = 0; p < spec.n_level2_covariates; ++p) theta.push_back(gamma2(c, p));
  for (int k = 0; k < spec.n_indicators; ++k)
    for (int c = 0; c < L; ++c)
      for (int s = 1; s < spec.n_categories[k]; ++s) theta.push_back(beta[k](s, c));
  return theta;
}

Parameters Parameters::unpack(const ModelSpec& spec, std::span<const double> theta) {
  Parameters p = Parameters::zeros(spec);
  p.unpack_into(theta);
  return p;
}

void Parameters::unpack_into(std::span<const double> theta) {
  if (static_cast<int>(theta.size()) != n_free())
    fail(ErrorCategory::dimension, "packed parameter vector has length " + std::to_string(theta.size()) +
                                       ", expected " + std::to_string(n_free()));
  const int L = spec.n_level1_classes;
  const int M = spec.n_level2_classes;
  size_t i = 0;
  for (int m = 1; m < M; ++m) alpha[m] = theta[i++];
  for (int c = 0; c + 1 < L; ++c)
    for (int m = 0; m < M; ++m) gamma0(c, m) = theta[i++];
  for (int c = 0; c + 1 < L; ++c)
    for (int p = 0; p < spec.n_level1_covariates; ++p) gamma1(c, p) = theta[i++];
  for (int c = 0; c + 1 < L; ++c)
    for (int p = 0; p < spec.n_level2_covariates; ++p) gamma2(c, p) = theta[i++];
  for (int k = 0; k < spec.n_indicators; ++k)
    for (int c = 0; c < L; ++c)
      for (int s = 1; s < spec.n_categories[k]; ++s) beta[k](s, c) = theta[i++];
}

std::vector<double> Parameters::level2_class_probs() const {
  std::vector<double> out(alpha.size());
  softmax(alpha, out);
  return out;
}

std::vector<Matrix> Parameters::crp() const {
  const int L = spec.n_level1_classes;
  std::vector<Matrix> out;
  out.reserve(beta.size());
  std::vector<double> lsm;
  for (int k = 0; k < spec.n_indicators; ++k) {
    const int S = spec.n_categories[k];
    Matrix m(S, L);
    lsm.resize(static_cast<size_t>(S));
    for (int c = 0; c < L; ++c) {
      log_softmax_column(beta[k], c, lsm);
      for (int s = 0; s < S; ++s) m(s, c) = std::exp(lsm[s]);
    }
    out.push_back(std::move(m));
  }
  return out;
}

int Dataset::n_individuals() const {
  int n = 0;
  for (const Site& s : sites) n += static_cast<int>(s.members.size());
  return n;
}

std::vector<int> Dataset::site_offsets() const {
  std::vector<int> off;
  off.reserve(sites.size());
  int acc = 0;
  for (const Site& s : sites) {
    off.push_back(acc);
    acc += static_cast<int>(s.members.size());
  }
  return off;
}

std::vector<int> Dataset::true_c_flat() const {
  std::vector<int> out;
  for (const auto& v : true_c) out.insert(out.end(), v.begin(), v.end());
  return out;
}

void Dataset::validate(const ModelSpec& spec) const {
  for (size_t j = 0; j < sites.size(); ++j) {
    const Site& site = sites[j];
    const std::string where = "site " + (site.id.empty() ? std::to_string(j + 1) : site.id);
    if (site.members.empty()) fail(ErrorCategory::invalid_argument, where + " has no individuals");
    if (static_cast<int>(site.z.size()) != spec.n_level2_covariates)
      fail(ErrorCategory::dimension, where + ": level-2 covariate vector has length " +
                                         std::to_string(site.z.size()) + ", model expects " +
                                         std::to_string(spec.n_level2_covariates));
    check_finite(site.z, (where + " level-2 covariates").c_str());
    for (const Individual& ind : site.members) {
      if (static_cast<int>(ind.y.size()) != spec.n_indicators)
        fail(ErrorCategory::dimension, where + ": response vector has length " + std::to_string(ind.y.size()) +
                                           ", model expects " + std::to_string(spec.n_indicators));
      if (static_cast<int>(ind.x.size()) != spec.n_level1_covariates)
        fail(ErrorCategory::dimension, where + ": level-1 covariate vector has length " +
                                           std::to_string(ind.x.size()) + ", model expects " +
                                           std::to_string(spec.n_level1_covariates));
      check_finite(ind.x, (where + " level-1 covariates").c_str());
      for (int k = 0; k < spec.n_indicators; ++k) {
        if (ind.y[k] < 1 || ind.y[k] > spec.n_categories[k])
          fail(ErrorCategory::invalid_argument,
               where + ": indicator " + std::to_string(k + 1) + " has category code " + std::to_string(ind.y[k]) +
                   " outside 1.." + std::to_string(spec.n_categories[k]));
      }
    }
  }
  if (!true_w.empty()) {
    if (true_w.size() != sites.size())
      fail(ErrorCategory::dimension, "true_w length does not match the number of sites");
    for (int w : true_w)
      if (w < 1 || w > spec.n_level2_classes)
        fail(ErrorCategory::invalid_argument, "true_w contains a class code outside 1.." +
                                                  std::to_string(spec.n_level2_classes));
  }
  if (!true_c.empty()) {
    if (true_c.size() != sites.size())
      fail(ErrorCategory::dimension, "true_c site count does not match the dataset");
    for (size_t j = 0; j < sites.size(); ++j) {
      if (true_c[j].size() != sites[j].members.size())
        fail(ErrorCategory::dimension, "true_c row count does not match site " + std::to_string(j + 1));
      for (int c : true_c[j])
        if (c < 1 || c > spec.n_level1_classes)
          fail(ErrorCategory::invalid_argument, "true_c contains a class code outside 1.." +
                                                    std::to_string(spec.n_level1_classes));
    }
  }
}

Relabeling Relabeling::identity(int n_level1, int n_level2) {
  Relabeling r;
  r.perm1.resize(static_cast<size_t>(n_level1));
  r.perm2.resize(static_cast<size_t>(n_level2));
  std::iota(r.perm1.begin(), r.perm1.end(), 0);
  std::iota(r.perm2.begin(), r.perm2.end(), 0);
  return r;
}

bool Relabeling::is_identity() const {
  for (size_t i = 0; i < perm1.size(); ++i)
    if (perm1[i] != static_cast<int>(i)) return false;
  for (size_t i = 0; i < perm2.size(); ++i)
    if (perm2[i] != static_cast<int>(i)) return false;
  return true;
}

Relabeling Relabeling::inverse() const {
  Relabeling inv;
  inv.perm1.resize(perm1.size());
  inv.perm2.resize(perm2.size());
  for (size_t i = 0; i < perm1.size(); ++i) inv.perm1[perm1[i]] = static_cast<int>(i);
  for (size_t i = 0; i < perm2.size(); ++i) inv.perm2[perm2[i]] = static_cast<int>(i);
  return inv;
}

void Relabeling::validate() const {
  auto check = [](const std::vector<int>& p, const char* name) {
    std::vector<bool> seen(p.size(), false);
    for (int v : p) {
      if (v < 0 || v >= static_cast<int>(p.size()) || seen[v])
        fail(ErrorCategory::invalid_argument, std::string(name) + " is not a permutation");
      seen[v] = true;
    }
  };
  check(perm1, "perm1");
  check(perm2, "perm2");
}

Parameters permute_parameters(const Parameters& params, const Relabeling& r) {
  r.validate();
  const ModelSpec& spec = params.spec;
  const int L = spec.n_level1_classes;
  const int M = spec.n_level2_classes;
  if (static_cast<int>(r.perm1.size()) != L || static_cast<int>(r.perm2.size()) != M)
    fail(ErrorCategory::dimension, "relabeling permutation sizes do not match the model");

  Parameters out = Parameters::zeros(spec);

  // alpha: reference is class 1 (index 0).
  for (int m = 0; m < M; ++m) out.alpha[m] = params.alpha[r.perm2[m]] - params.alpha[r.perm2[0]];
  out.alpha[0] = 0.0;

  // gamma blocks: rows permuted by perm1 and re-expressed against the new
  // reference class L; columns of gamma0 permuted by perm2.
  const int ref = r.perm1[L - 1];
  for (int c = 0; c < L; ++c) {
    for (int m = 0; m < M; ++m) out.gamma0(c, m) = params.gamma0(r.perm1[c], r.perm2[m]) - params.gamma0(ref, r.perm2[m]);
    for (int p = 0; p < spec.n_level1_covariates; ++p)
      out.gamma1(c, p) = params.gamma1(r.perm1[c], p) - params.gamma1(ref, p);
    for (int p = 0; p < spec.n_level2_covariates; ++p)
      out.gamma2(c, p) = params.gamma2(r.perm1[c], p) - params.gamma2(ref, p);
  }
  for (int m = 0; m < M; ++m) out.gamma0(L - 1, m) = 0.0;
  for (int p = 0; p < spec.n_level1_covariates; ++p) out.gamma1(L - 1, p) = 0.0;
  for (int p = 0; p < spec.n_level2_covariates; ++p) out.gamma2(L - 1, p) = 0.0;

  // beta: class columns permuted; the per-category reference is untouched.
  for (int k = 0; k < spec.n_indicators; ++k)
    for (int s = 0; s < spec.n_categories[k]; ++s)
      for (int c = 0; c < L; ++c) out.beta[k](s, c) = params.beta[k](s, r.perm1[c]);

  return out;
}

std::vector<double> class_membership_probs(const Parameters& params, int m, std::span<const double> x,
                                           std::span<const double> z) {
  const ModelSpec& spec = params.spec;
  const int L = spec.n_level1_classes;
  if (m < 0 || m >= spec.n_level2_classes)
    fail(ErrorCategory::invalid_argument,
         "level-2 class index " + std::to_string(m) + " outside 0.." + std::to_string(spec.n_level2_classes - 1));
  if (static_cast<int>(x.size()) != spec.n_level1_covariates)
    fail(ErrorCategory::dimension, "level-1 covariate vector has length " + std::to_string(x.size()) +
                                       ", model expects " + std::to_string(spec.n_level1_covariates));
  if (static_cast<int>(z.size()) != spec.n_level2_covariates)
    fail(ErrorCategory::dimension, "level-2 covariate vector has length " + std::to_string(z.size()) +
                                       ", model expects " + std::to_string(spec.n_level2_covariates));

  std::vector<double> logits(static_cast<size_t>(L));
  for (int c = 0; c < L; ++c) {
    double t = params.gamma0(c, m);
    for (size_t p = 0; p < x.size(); ++p) t += params.gamma1(c, static_cast<int>(p)) * x[p];
    for (size_t p = 0; p < z.size(); ++p) t += params.gamma2(c, static_cast<int>(p)) * z[p];
    logits[c] = t;
  }
  std::vector<double> probs(static_cast<size_t>(L));
  softmax(logits, probs);
  return probs;
}

double response_loglik(std::span<const int> y, const Parameters& params, int c) {
  const ModelSpec& spec = params.spec;
  if (c < 0 || c >= spec.n_level1_classes)
    fail(ErrorCategory::invalid_argument, "level-1 class index " + std::to_string(c) + " out of range");
  if (static_cast<int>(y.size()) != spec.n_indicators)
    fail(ErrorCategory::dimension, "response vector has length " + std::to_string(y.size()) + ", model expects " +
                                       std::to_string(spec.n_indicators));
  double ll = 0.0;
  std::vector<double> lsm;
  for (int k = 0; k < spec.n_indicators; ++k) {
    if (y[k] < 1 || y[k] > spec.n_categories[k])
      fail(ErrorCategory::invalid_argument, "indicator " + std::to_string(k + 1) + ": category code " +
                                                std::to_string(y[k]) + " outside 1.." +
                                                std::to_string(spec.n_categories[k]));
    lsm.resize(static_cast<size_t>(spec.n_categories[k]));
    log_softmax_column(params.beta[k], c, lsm);
    ll += lsm[y[k] - 1];
  }
  return ll;
}

double group_loglik(const Site& site, const Parameters& params) {
  if (site.members.empty()) fail(ErrorCategory::invalid_argument, "group_loglik: site has no individuals");
  Dataset one;
  one.sites.push_back(site);
  LoglikEvaluator eval(one, params.spec);
  return eval(params);
}

double total_loglik(const Dataset& data, const Parameters& params) {
  LoglikEvaluator eval(data, params.spec);
  return eval(params);
}

LoglikEvaluator::LoglikEvaluator(const Dataset& data, const ModelSpec& spec) : data_(&data) {
  data.validate(spec);
  params_buf_ = Parameters::zeros(spec);
  lsm_beta_.reserve(static_cast<size_t>(spec.n_indicators));
  for (int k = 0; k < spec.n_indicators; ++k) lsm_beta_.emplace_back(spec.n_categories[k], spec.n_level1_classes);
  log_pi_.resize(static_cast<size_t>(spec.n_level2_classes));
  site_acc_.resize(static_cast<size_t>(spec.n_level2_classes));
  resp_.resize(static_cast<size_t>(spec.n_level1_classes));
  memb_.resize(static_cast<size_t>(spec.n_level1_classes));
  q_.resize(static_cast<size_t>(spec.n_level1_classes));
}

double LoglikEvaluator::operator()(const Parameters& params) {
  const ModelSpec& spec = params.spec;
  const int K = spec.n_indicators;
  const int L = spec.n_level1_classes;
  const int M = spec.n_level2_classes;
  ++n_evals_;

  // log response probabilities per indicator, and log level-2 class probs
  for (int k = 0; k < K; ++k) {
    const int S = spec.n_categories[k];
    for (int c = 0; c < L; ++c) {
      double mx = params.beta[k](0, c);
      for (int s = 1; s < S; ++s) mx = std::max(mx, params.beta[k](s, c));
      double acc = 0.0;
      for (int s = 0; s < S; ++s) acc += std::exp(params.beta[k](s, c) - mx);
      const double lse = mx + std::log(acc);
      for (int s = 0; s < S; ++s) lsm_beta_[k](s, c) = params.beta[k](s, c) - lse;
    }
  }
  {
    const double lse = log_sum_exp(params.alpha);
    for (int m = 0; m < M; ++m) log_pi_[m] = params.alpha[m] - lse;
  }

  double ll = 0.0;
  for (const Site& site : data_->sites) {
    for (int m = 0; m < M; ++m) site_acc_[m] = log_pi_[m];
    for (const Individual& ind : site.members) {
      for (int c = 0; c < L; ++c) {
        double r = 0.0;
        for (int k = 0; k < K; ++k) r += lsm_beta_[k](ind.y[k] - 1, c);
        resp_[c] = r;
        double t = 0.0;
        for (int p = 0; p < spec.n_level1_covariates; ++p) t += params.gamma1(c, p) * ind.x[p];
        for (int p = 0; p < spec.n_level2_covariates; ++p) t += params.gamma2(c, p) * site.z[p];
        memb_[c] = t;
      }
      for (int m = 0; m < M; ++m) {
        for (int c = 0; c < L; ++c) q_[c] = params.gamma0(c, m) + memb_[c];
        const double norm = log_sum_exp(q_);
        for (int c = 0; c < L; ++c) q_[c] += resp_[c] - norm;
        site_acc_[m] += log_sum_exp(q_);
      }
    }
    ll += log_sum_exp(site_acc_);
  }
  return ll;
}

double LoglikEvaluator::eval_packed(std::span<const double> theta) {
  params_buf_.unpack_into(theta);
  return (*this)(params_buf_);
}

long count_free_parameters(const ModelSpec& spec) {
  spec.validate();
  const long L = spec.n_level1_classes;
  const long M = spec.n_level2_classes;
  long n = (M - 1) + (L - 1) * M + (L - 1) * spec.n_level1_covariates + (L - 1) * spec.n_level2_covariates;
  for (int k = 0; k < spec.n_indicators; ++k) n += (spec.n_categories[k] - 1) * L;
  return n;
}

InformationCriteria information_criteria(double loglik, long n_free, long n_individuals) {
  if (n_free < 1) fail(ErrorCategory::invalid_argument, "information_criteria: need at least one free parameter");
  if (n_individuals < 1) fail(ErrorCategory::invalid_argument, "information_criteria: need at least one individual");
  InformationCriteria ic;
  ic.aic = -2.0 * loglik + 2.0 * static_cast<double>(n_free);
  ic.bic = -2.0 * loglik + static_cast<double>(n_free) * std::log(static_cast<double>(n_individuals));
  return ic;
}

double relative_entropy(const Matrix& c_marg) {
  const int n = c_marg.rows();
  const int L = c_marg.cols();
  if (n == 0) fail(ErrorCategory::invalid_argument, "relative_entropy: empty posterior matrix");
  if (L == 1) return 1.0;
  double h = 0.0;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < L; ++c) {
      const double p = c_marg(i, c);
      if (p > 0.0) h -= p * std::log(p);
    }
  return 1.0 - h / (static_cast<double>(n) * std::log(static_cast<double>(L)));
}

}  // namespace npmlca
