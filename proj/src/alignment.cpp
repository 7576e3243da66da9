#include "alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace npmlca {

Matrix crp_matrix(const Parameters& params) {
  const ModelSpec& spec = params.spec;
  const std::vector<Matrix> crp = params.crp();
  Matrix out(spec.n_indicators, spec.n_level1_classes);
  for (int k = 0; k < spec.n_indicators; ++k)
    for (int c = 0; c < spec.n_level1_classes; ++c) out(k, c) = crp[k](spec.n_categories[k] - 1, c);
  return out;
}

std::vector<int> find_level1_permutation(const Matrix& est_crp, const Matrix& true_crp) {
  if (est_crp.rows() != true_crp.rows() || est_crp.cols() != true_crp.cols())
    fail(ErrorCategory::dimension, "find_level1_permutation: CRP matrices differ in shape");
  const int K = est_crp.rows();
  const int L = est_crp.cols();
  if (L > 8) fail(ErrorCategory::invalid_argument, "find_level1_permutation: exhaustive search limited to L <= 8");

  std::vector<int> perm(static_cast<size_t>(L));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (int c = 0; c < L; ++c)
      for (int k = 0; k < K; ++k) {
        const double d = est_crp(k, perm[c]) - true_crp(k, c);
        cost += d * d;
      }
    // strict inequality keeps the lexicographically smallest tie
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

namespace {

// Mean model-implied membership P(C = . | W = m) over the dataset covariates.
std::vector<double> implied_composition(const Parameters& params, const Dataset& data, int m) {
  const int L = params.spec.n_level1_classes;
  std::vector<double> comp(static_cast<size_t>(L), 0.0);
  int n = 0;
  for (const Site& site : data.sites)
    for (const Individual& ind : site.members) {
      const std::vector<double> p = class_membership_probs(params, m, ind.x, site.z);
      for (int c = 0; c < L; ++c) comp[c] += p[c];
      ++n;
    }
  for (double& v : comp) v /= n;
  return comp;
}

}  // namespace

std::vector<int> find_level2_permutation(const FitResult& fit_aligned1, const Parameters& truth,
                                         const Dataset& data) {
  const int M = truth.spec.n_level2_classes;
  const int L = truth.spec.n_level1_classes;
  if (M > 8) fail(ErrorCategory::invalid_argument, "find_level2_permutation: exhaustive search limited to M <= 8");

  // estimated side: average c_marg over the individuals of each class's modal
  // sites
  std::vector<std::vector<double>> est_comp(static_cast<size_t>(M), std::vector<double>(L, 0.0));
  std::vector<int> est_n(static_cast<size_t>(M), 0);
  const std::vector<int> offsets = data.site_offsets();
  for (int j = 0; j < data.n_sites(); ++j) {
    const int m = fit_aligned1.modal2[j] - 1;
    for (size_t i = 0; i < data.sites[j].members.size(); ++i) {
      for (int c = 0; c < L; ++c)
        est_comp[m][c] += fit_aligned1.posteriors.c_marg(offsets[j] + static_cast<int>(i), c);
      ++est_n[m];
    }
  }
  for (int m = 0; m < M; ++m) {
    if (est_n[m] > 0) {
      for (double& v : est_comp[m]) v /= est_n[m];
    } else {
      est_comp[m] = implied_composition(fit_aligned1.params, data, m);
    }
  }

  std::vector<std::vector<double>> true_comp(static_cast<size_t>(M));
  for (int m = 0; m < M; ++m) true_comp[m] = implied_composition(truth, data, m);

  std::vector<int> perm(static_cast<size_t>(M));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (int m = 0; m < M; ++m)
      for (int c = 0; c < L; ++c) {
        const double d = est_comp[perm[m]][c] - true_comp[m][c];
        cost += d * d;
      }
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

FitResult relabel(const FitResult& fit, const Relabeling& r) {
  r.validate();
  const int L = static_cast<int>(r.perm1.size());
  const int M = static_cast<int>(r.perm2.size());
  if (fit.params.spec.n_level1_classes != L || fit.params.spec.n_level2_classes != M)
    fail(ErrorCategory::dimension, "relabel: permutation sizes do not match the fitted model");

  FitResult out = fit;
  out.params = permute_parameters(fit.params, r);

  const Relabeling inv = r.inverse();

  // posterior columns
  const int N = fit.posteriors.c_marg.rows();
  const int J = fit.posteriors.w_post.rows();
  for (int i = 0; i < N; ++i)
    for (int c = 0; c < L; ++c) out.posteriors.c_marg(i, c) = fit.posteriors.c_marg(i, r.perm1[c]);
  for (int j = 0; j < J; ++j)
    for (int m = 0; m < M; ++m) out.posteriors.w_post(j, m) = fit.posteriors.w_post(j, r.perm2[m]);
  for (int i = 0; i < N; ++i)
    for (int m = 0; m < M; ++m)
      for (int c = 0; c < L; ++c) out.posteriors.cc(i, m, c) = fit.posteriors.cc(i, r.perm2[m], r.perm1[c]);

  // modal assignments move through the inverse map
  for (int i = 0; i < N; ++i) out.modal1[i] = inv.perm1[fit.modal1[i] - 1] + 1;
  for (int j = 0; j < J; ++j) out.modal2[j] = inv.perm2[fit.modal2[j] - 1] + 1;

  // SEs cannot be permuted; keep them only under the identity
  if (r.switched()) {
    out.se_available = false;
    out.se.clear();
    out.covariance = Matrix();
    out.crp_se.clear();
  }
  return out;
}

}  // namespace npmlca
