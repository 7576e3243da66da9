#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace npmlca {

namespace {

struct Accum {
  std::vector<double> values;
  int n = 0;
  void add(double v) {
    values.push_back(v);
    ++n;
  }
  double mean() const {
    if (n == 0) return 0.0;
    double s = 0.0;
    for (double v : values) s += v;
    return s / n;
  }
  // two-pass sample SD; exact zero for identical inputs
  double sd() const {
    if (n < 2) return 0.0;
    const double m = mean();
    double acc = 0.0;
    for (double v : values) acc += (v - m) * (v - m);
    return std::sqrt(acc / (n - 1));
  }
};

// Collects one scalar parameter's statistics across records.
ParamStat collect_stat(std::span<const ReplicationRecord> records, double truth, double zcrit,
                       double (*get_est)(const ReplicationRecord&, int, int), int a, int b,
                       double (*get_se)(const ReplicationRecord&, int, int), bool with_rejection) {
  ParamStat st;
  st.truth = truth;
  Accum est_all, est_used, se_used;
  int rejections = 0;
  for (const ReplicationRecord& r : records) {
    if (!r.converged) continue;
    ++st.n_converged;
    const double est = get_est(r, a, b);
    est_all.add(est);
    if (r.se_usable) {
      ++st.n_used;
      est_used.add(est);
      const double se = get_se(r, a, b);
      se_used.add(se);
      if (with_rejection && se > 0.0 && std::fabs(est / se) > zcrit) ++rejections;
    }
  }
  st.bias = est_all.mean() - truth;
  st.sd = est_all.sd();
  st.se_mean = se_used.mean();
  st.sd_used = est_used.sd();
  if (st.n_used >= 2 && st.sd_used > 1e-12 * (1.0 + std::fabs(est_used.mean()))) {
    st.ratio = st.se_mean / st.sd_used;
    st.ratio_available = true;
  }
  if (with_rejection && st.n_used > 0) {
    st.rejection_rate = static_cast<double>(rejections) / st.n_used;
    st.rejection_rate_all = st.n_converged > 0 ? static_cast<double>(rejections) / st.n_converged : 0.0;
    st.rejection_available = true;
  }
  return st;
}

}  // namespace

RecoverySummary parameter_recovery(std::span<const ReplicationRecord> records, const Parameters& truth,
                                   double alpha) {
  const ModelSpec& spec = truth.spec;
  const int K = spec.n_indicators;
  const int L = spec.n_level1_classes;
  RecoverySummary out;
  out.n_records = static_cast<int>(records.size());
  for (const auto& r : records) {
    out.n_converged += r.converged ? 1 : 0;
    out.n_switched += r.switched ? 1 : 0;
  }
  if (out.n_converged < 2)
    fail(ErrorCategory::invalid_argument, "parameter_recovery: need at least two converged records");

  const double zcrit = normal_quantile(1.0 - alpha / 2.0);
  const Matrix true_crp = [&] {
    const std::vector<Matrix> crp = truth.crp();
    Matrix m(K, L);
    for (int k = 0; k < K; ++k)
      for (int c = 0; c < L; ++c) m(k, c) = crp[k](spec.n_categories[k] - 1, c);
    return m;
  }();

  out.crp.reserve(static_cast<size_t>(K) * L);
  for (int k = 0; k < K; ++k)
    for (int c = 0; c < L; ++c)
      out.crp.push_back(collect_stat(
          records, true_crp(k, c), zcrit,
          [](const ReplicationRecord& r, int a, int b) { return r.crp(a, b); }, k, c,
          [](const ReplicationRecord& r, int a, int b) { return r.crp_se(a, b); }, false));

  out.crp_by_class.resize(static_cast<size_t>(L));
  for (int c = 0; c < L; ++c) {
    ClassRecovery agg;
    int n_ratio = 0;
    for (int k = 0; k < K; ++k) {
      const ParamStat& st = out.crp[static_cast<size_t>(k) * L + c];
      agg.bias += st.bias;
      agg.se_mean += st.se_mean;
      agg.sd += st.sd;
      if (st.ratio_available) {
        agg.ratio += st.ratio;
        ++n_ratio;
      }
    }
    agg.bias /= K;
    agg.se_mean /= K;
    agg.sd /= K;
    if (n_ratio > 0) {
      agg.ratio /= n_ratio;
      agg.ratio_available = true;
    }
    out.crp_by_class[c] = agg;
  }

  for (int c = 0; c + 1 < L; ++c)
    for (int p = 0; p < spec.n_level1_covariates; ++p)
      out.slopes1.push_back(collect_stat(
          records, truth.gamma1(c, p), zcrit,
          [](const ReplicationRecord& r, int a, int b) { return r.gamma1(a, b); }, c, p,
          [](const ReplicationRecord& r, int a, int b) { return r.gamma1_se(a, b); }, true));
  for (int c = 0; c + 1 < L; ++c)
    for (int p = 0; p < spec.n_level2_covariates; ++p)
      out.slopes2.push_back(collect_stat(
          records, truth.gamma2(c, p), zcrit,
          [](const ReplicationRecord& r, int a, int b) { return r.gamma2(a, b); }, c, p,
          [](const ReplicationRecord& r, int a, int b) { return r.gamma2_se(a, b); }, true));
  return out;
}

RejectionRate rejection_rate(std::span<const ReplicationRecord> records, int level, int c, int p,
                             double alpha) {
  if (level != 1 && level != 2) fail(ErrorCategory::invalid_argument, "rejection_rate: level must be 1 or 2");
  const double zcrit = normal_quantile(1.0 - alpha / 2.0);
  RejectionRate out;
  int rejections = 0;
  for (const ReplicationRecord& r : records) {
    if (!r.converged) continue;
    ++out.n_converged;
    if (!r.se_usable) continue;
    const double est = (level == 1) ? r.gamma1(c, p) : r.gamma2(c, p);
    const double se = (level == 1) ? r.gamma1_se(c, p) : r.gamma2_se(c, p);
    ++out.n_used;
    if (se > 0.0 && std::fabs(est / se) > zcrit) ++rejections;
  }
  if (out.n_used > 0) {
    out.rate = static_cast<double>(rejections) / out.n_used;
    out.rate_all = out.n_converged > 0 ? static_cast<double>(rejections) / out.n_converged : 0.0;
    out.available = true;
  }
  return out;
}

double classification_error(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size())
    fail(ErrorCategory::dimension, "classification_error: assignment vectors have lengths " +
                                       std::to_string(predicted.size()) + " and " + std::to_string(truth.size()));
  if (predicted.empty()) fail(ErrorCategory::invalid_argument, "classification_error: empty assignment vectors");
  int mismatches = 0;
  for (size_t i = 0; i < predicted.size(); ++i) mismatches += (predicted[i] != truth[i]) ? 1 : 0;
  return static_cast<double>(mismatches) / static_cast<double>(predicted.size());
}

const char* study_factor_name(StudyFactor f) {
  switch (f) {
    case StudyFactor::indicators: return "n_indicators";
    case StudyFactor::quality: return "crp_quality";
    case StudyFactor::sites: return "n_sites";
    case StudyFactor::site_size: return "site_size";
    case StudyFactor::l1_effect: return "l1_effects";
    case StudyFactor::l2_effect: return "l2_effects";
  }
  return "unknown";
}

std::vector<StudyFactor> all_study_factors() {
  return {StudyFactor::indicators, StudyFactor::quality,   StudyFactor::sites,
          StudyFactor::site_size,  StudyFactor::l1_effect, StudyFactor::l2_effect};
}

namespace {

double factor_level(const Condition& c, StudyFactor f) {
  switch (f) {
    case StudyFactor::indicators: return c.n_indicators;
    case StudyFactor::quality: return c.crp_quality;
    case StudyFactor::sites: return c.n_sites;
    case StudyFactor::site_size: return c.site_size;
    case StudyFactor::l1_effect: return c.l1_effects.or1 + 10.0 * c.l1_effects.or2;
    case StudyFactor::l2_effect: return c.l2_effects.or1 + 10.0 * c.l2_effects.or2;
  }
  return 0.0;
}

}  // namespace

double eta_squared(std::span<const Condition> conditions, std::span<const double> outcome,
                   StudyFactor factor) {
  if (conditions.size() != outcome.size())
    fail(ErrorCategory::dimension, "eta_squared: conditions and outcomes differ in length");
  if (conditions.empty()) fail(ErrorCategory::invalid_argument, "eta_squared: empty grid");

  const double n = static_cast<double>(outcome.size());
  double grand = 0.0;
  for (double v : outcome) grand += v;
  grand /= n;

  double ss_total = 0.0;
  for (double v : outcome) ss_total += (v - grand) * (v - grand);
  // a constant outcome accumulates only rounding noise; call that zero
  if (ss_total <= 1e-20 * n * (1.0 + grand * grand)) return 0.0;

  std::map<double, Accum> groups;
  for (size_t i = 0; i < conditions.size(); ++i) groups[factor_level(conditions[i], factor)].add(outcome[i]);

  double ss_factor = 0.0;
  for (const auto& [level, acc] : groups) {
    const double d = acc.mean() - grand;
    ss_factor += acc.n * d * d;
  }
  return ss_factor / ss_total;
}

}  // namespace npmlca
