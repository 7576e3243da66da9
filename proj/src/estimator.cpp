#include "estimator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace npmlca {

namespace {

constexpr double kTinyCountFloor = 1e-14;  // relative floor for empty weighted category counts

struct GammaLayout {
  int n_cls;  // L - 1 free classes
  int dim;    // M + P1 + P2 features per class
  int size() const { return n_cls * dim; }
};

GammaLayout gamma_layout(const ModelSpec& spec) {
  return {spec.n_level1_classes - 1,
          spec.n_level2_classes + spec.n_level1_covariates + spec.n_level2_covariates};
}

// Free gamma parameters as one vector: class-major, features ordered as
// [gamma0 over m, gamma1 over p, gamma2 over p].
Eigen::VectorXd gamma_to_vector(const Parameters& params) {
  const ModelSpec& spec = params.spec;
  const GammaLayout lay = gamma_layout(spec);
  Eigen::VectorXd v(lay.size());
  int i = 0;
  for (int c = 0; c < lay.n_cls; ++c) {
    for (int m = 0; m < spec.n_level2_classes; ++m) v[i++] = params.gamma0(c, m);
    for (int p = 0; p < spec.n_level1_covariates; ++p) v[i++] = params.gamma1(c, p);
    for (int p = 0; p < spec.n_level2_covariates; ++p) v[i++] = params.gamma2(c, p);
  }
  return v;
}

void gamma_from_vector(Parameters& params, const Eigen::VectorXd& v) {
  const ModelSpec& spec = params.spec;
  const GammaLayout lay = gamma_layout(spec);
  int i = 0;
  for (int c = 0; c < lay.n_cls; ++c) {
    for (int m = 0; m < spec.n_level2_classes; ++m) params.gamma0(c, m) = v[i++];
    for (int p = 0; p < spec.n_level1_covariates; ++p) params.gamma1(c, p) = v[i++];
    for (int p = 0; p < spec.n_level2_covariates; ++p) params.gamma2(c, p) = v[i++];
  }
}

// Shared scaffolding for the weighted multinomial-logit objective: iterates
// over (individual, m) cells with weight w_post[j][m], soft targets
// c_cond[i][m][.], and feature vector phi = (one-hot m, x_i, z_j).
template <typename CellFn>
void for_each_gamma_cell(const Dataset& data, const Posteriors& post, const Parameters& params,
                         CellFn&& cell) {
  const ModelSpec& spec = params.spec;
  const int L = spec.n_level1_classes;
  const int M = spec.n_level2_classes;
  std::vector<double> logits(static_cast<size_t>(L));
  std::vector<double> probs(static_cast<size_t>(L));
  std::vector<double> base(static_cast<size_t>(L));
  int i = 0;
  for (int j = 0; j < data.n_sites(); ++j) {
    const Site& site = data.sites[j];
    for (const Individual& ind : site.members) {
      for (int c = 0; c < L; ++c) {
        double t = 0.0;
        for (int p = 0; p < spec.n_level1_covariates; ++p) t += params.gamma1(c, p) * ind.x[p];
        for (int p = 0; p < spec.n_level2_covariates; ++p) t += params.gamma2(c, p) * site.z[p];
        base[c] = t;
      }
      for (int m = 0; m < M; ++m) {
        const double w = post.w_post(j, m);
        if (w <= 0.0) continue;
        for (int c = 0; c < L; ++c) logits[c] = params.gamma0(c, m) + base[c];
        const double lse = log_sum_exp(logits);
        for (int c = 0; c < L; ++c) probs[c] = std::exp(logits[c] - lse);
        cell(i, j, m, w, ind, site, logits, lse, probs);
      }
      ++i;
    }
  }
}

// phi for cell (m, x, z) written into a dense buffer of length lay.dim.
void fill_phi(const ModelSpec& spec, int m, const Individual& ind, const Site& site,
              std::span<double> phi) {
  const int M = spec.n_level2_classes;
  std::fill(phi.begin(), phi.begin() + M, 0.0);
  phi[m] = 1.0;
  int d = M;
  for (int p = 0; p < spec.n_level1_covariates; ++p) phi[d++] = ind.x[p];
  for (int p = 0; p < spec.n_level2_covariates; ++p) phi[d++] = site.z[p];
}

}  // namespace

// Validation is the caller's job (fit() and LoglikEvaluator validate once);
// e_step runs in the inner loop and only guards against an empty dataset.
Posteriors e_step(const Dataset& data, const Parameters& params, double* loglik) {
  const ModelSpec& spec = params.spec;
  if (data.sites.empty()) fail(ErrorCategory::invalid_argument, "e_step: empty dataset");

  const int K = spec.n_indicators;
  const int L = spec.n_level1_classes;
  const int M = spec.n_level2_classes;
  const int J = data.n_sites();
  const int N = data.n_individuals();

  Posteriors post;
  post.n_level1 = L;
  post.n_level2 = M;
  post.w_post = Matrix(J, M);
  post.c_cond.assign(static_cast<size_t>(N) * M * L, 0.0);
  post.c_marg = Matrix(N, L);

  // log response probabilities per indicator
  std::vector<Matrix> lsm_beta;
  lsm_beta.reserve(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) {
    const int S = spec.n_categories[k];
    Matrix lsm(S, L);
    for (int c = 0; c < L; ++c) {
      double mx = params.beta[k](0, c);
      for (int s = 1; s < S; ++s) mx = std::max(mx, params.beta[k](s, c));
      double acc = 0.0;
      for (int s = 0; s < S; ++s) acc += std::exp(params.beta[k](s, c) - mx);
      const double lse = mx + std::log(acc);
      for (int s = 0; s < S; ++s) lsm(s, c) = params.beta[k](s, c) - lse;
    }
    lsm_beta.push_back(std::move(lsm));
  }

  std::vector<double> log_pi(static_cast<size_t>(M));
  {
    const double lse = log_sum_exp(params.alpha);
    for (int m = 0; m < M; ++m) log_pi[m] = params.alpha[m] - lse;
  }

  std::vector<double> resp(static_cast<size_t>(L)), base(static_cast<size_t>(L)), q(static_cast<size_t>(L));
  std::vector<double> site_acc(static_cast<size_t>(M));
  double ll = 0.0;
  int i0 = 0;
  for (int j = 0; j < J; ++j) {
    const Site& site = data.sites[j];
    for (int m = 0; m < M; ++m) site_acc[m] = log_pi[m];
    int i = i0;
    for (const Individual& ind : site.members) {
      for (int c = 0; c < L; ++c) {
        double r = 0.0;
        for (int k = 0; k < K; ++k) r += lsm_beta[k](ind.y[k] - 1, c);
        resp[c] = r;
        double t = 0.0;
        for (int p = 0; p < spec.n_level1_covariates; ++p) t += params.gamma1(c, p) * ind.x[p];
        for (int p = 0; p < spec.n_level2_covariates; ++p) t += params.gamma2(c, p) * site.z[p];
        base[c] = t;
      }
      for (int m = 0; m < M; ++m) {
        for (int c = 0; c < L; ++c) q[c] = params.gamma0(c, m) + base[c];
        const double memb_norm = log_sum_exp(q);
        for (int c = 0; c < L; ++c) q[c] += resp[c] - memb_norm;
        const double a = log_sum_exp(q);
        for (int c = 0; c < L; ++c) post.cc(i, m, c) = std::exp(q[c] - a);
        site_acc[m] += a;
      }
      ++i;
    }
    const double site_lse = log_sum_exp(site_acc);
    ll += site_lse;
    for (int m = 0; m < M; ++m) post.w_post(j, m) = std::exp(site_acc[m] - site_lse);
    for (i = i0; i < i0 + static_cast<int>(site.members.size()); ++i)
      for (int c = 0; c < L; ++c) {
        double acc = 0.0;
        for (int m = 0; m < M; ++m) acc += post.w_post(j, m) * post.cc(i, m, c);
        post.c_marg(i, c) = acc;
      }
    i0 += static_cast<int>(site.members.size());
  }
  if (loglik) *loglik = ll;
  return post;
}

double gamma_objective(const Dataset& data, const Posteriors& post, const Parameters& params) {
  double obj = 0.0;
  const int L = params.spec.n_level1_classes;
  for_each_gamma_cell(data, post, params,
                      [&](int i, int, int m, double w, const Individual&, const Site&,
                          const std::vector<double>& logits, double lse, const std::vector<double>&) {
                        double q = 0.0;
                        for (int c = 0; c < L; ++c) q += post.cc(i, m, c) * (logits[c] - lse);
                        obj += w * q;
                      });
  return obj;
}

std::vector<double> gamma_gradient(const Dataset& data, const Posteriors& post, const Parameters& params) {
  const ModelSpec& spec = params.spec;
  const GammaLayout lay = gamma_layout(spec);
  std::vector<double> grad(static_cast<size_t>(lay.size()), 0.0);
  std::vector<double> phi(static_cast<size_t>(lay.dim));
  for_each_gamma_cell(data, post, params,
                      [&](int i, int, int m, double w, const Individual& ind, const Site& site,
                          const std::vector<double>&, double, const std::vector<double>& probs) {
                        fill_phi(spec, m, ind, site, phi);
                        for (int c = 0; c < lay.n_cls; ++c) {
                          const double r = w * (post.cc(i, m, c) - probs[c]);
                          double* g = grad.data() + static_cast<size_t>(c) * lay.dim;
                          for (int d = 0; d < lay.dim; ++d) g[d] += r * phi[d];
                        }
                      });
  return grad;
}

namespace {

// Negative Hessian of the weighted multinomial-logit objective (positive
// semidefinite).
Eigen::MatrixXd gamma_neg_hessian(const Dataset& data, const Posteriors& post, const Parameters& params) {
  const ModelSpec& spec = params.spec;
  const GammaLayout lay = gamma_layout(spec);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(lay.size(), lay.size());
  std::vector<double> phi(static_cast<size_t>(lay.dim));
  for_each_gamma_cell(data, post, params,
                      [&](int, int, int m, double w, const Individual& ind, const Site& site,
                          const std::vector<double>&, double, const std::vector<double>& probs) {
                        fill_phi(spec, m, ind, site, phi);
                        for (int c = 0; c < lay.n_cls; ++c) {
                          for (int c2 = c; c2 < lay.n_cls; ++c2) {
                            const double coef =
                                w * (probs[c] * ((c == c2 ? 1.0 : 0.0) - probs[c2]));
                            if (coef == 0.0) continue;
                            for (int d = 0; d < lay.dim; ++d) {
                              const double cp = coef * phi[d];
                              if (cp == 0.0) continue;
                              for (int d2 = 0; d2 < lay.dim; ++d2)
                                H(c * lay.dim + d, c2 * lay.dim + d2) += cp * phi[d2];
                            }
                          }
                        }
                      });
  // off-diagonal class blocks were accumulated on the upper side only
  for (int a = 0; a < lay.size(); ++a)
    for (int b = 0; b < a; ++b) {
      const int ca = a / lay.dim, cb = b / lay.dim;
      if (ca != cb) H(a, b) = H(b, a);
    }
  return H;
}

}  // namespace

Parameters m_step(const Dataset& data, const Posteriors& post, const Parameters& params,
                  EmDiagnostics* diag) {
  const ModelSpec& spec = params.spec;
  const int K = spec.n_indicators;
  const int L = spec.n_level1_classes;
  const int M = spec.n_level2_classes;
  const int J = data.n_sites();

  Parameters next = params;

  // alpha: logits of the average level-2 posterior
  {
    std::vector<double> pi(static_cast<size_t>(M), 0.0);
    for (int j = 0; j < J; ++j)
      for (int m = 0; m < M; ++m) pi[m] += post.w_post(j, m);
    double tot = 0.0;
    for (double& v : pi) tot += v;
    bool floored = false;
    for (double& v : pi)
      if (v <= 0.0) {
        v = tot * kTinyCountFloor;
        floored = true;
      }
    if (floored) {
      tot = 0.0;
      for (double v : pi) tot += v;
    }
    for (int m = 0; m < M; ++m) next.alpha[m] = std::log(pi[m]) - std::log(pi[0]);
    next.alpha[0] = 0.0;
  }

  // beta: logits of the c_marg-weighted category proportions per (k, c)
  {
    for (int k = 0; k < K; ++k) {
      const int S = spec.n_categories[k];
      Matrix counts(S, L);
      int i = 0;
      for (const Site& site : data.sites)
        for (const Individual& ind : site.members) {
          for (int c = 0; c < L; ++c) counts(ind.y[k] - 1, c) += post.c_marg(i, c);
          ++i;
        }
      for (int c = 0; c < L; ++c) {
        double tot = 0.0;
        for (int s = 0; s < S; ++s) tot += counts(s, c);
        if (tot <= 0.0) continue;  // class carries no weight; keep old logits
        for (int s = 0; s < S; ++s)
          if (counts(s, c) <= 0.0) counts(s, c) = tot * kTinyCountFloor;
        const double ref = std::log(counts(0, c));
        for (int s = 1; s < S; ++s) next.beta[k](s, c) = std::log(counts(s, c)) - ref;
        next.beta[k](0, c) = 0.0;
      }
    }
  }

  // gamma: one damped Newton step on the weighted multinomial-logit objective
  const GammaLayout lay = gamma_layout(spec);
  if (lay.size() > 0) {
    const Eigen::VectorXd theta0 = gamma_to_vector(next);
    const std::vector<double> grad_v = gamma_gradient(data, post, next);
    const Eigen::Map<const Eigen::VectorXd> grad(grad_v.data(), static_cast<Eigen::Index>(grad_v.size()));

    Eigen::VectorXd direction;
    bool newton_ok = false;
    {
      Eigen::MatrixXd A = gamma_neg_hessian(data, post, next);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        direction = ldlt.solve(grad);
        newton_ok = direction.allFinite();
      }
    }
    if (!newton_ok) {
      // gradient ascent with a bounded first trial step
      direction = grad / std::max(1.0, grad.lpNorm<Eigen::Infinity>());
      if (diag) ++diag->newton_fallbacks;
    }

    // step halving until the expected complete-data objective does not
    // decrease; exhausting the halvings keeps theta0, which is still a valid
    // generalized EM step
    const double q0 = gamma_objective(data, post, next);
    Parameters trial = next;
    double lambda = 1.0;
    for (int h = 0; h < 40; ++h) {
      gamma_from_vector(trial, theta0 + lambda * direction);
      const double q1 = gamma_objective(data, post, trial);
      if (q1 >= q0 - 1e-13 * (1.0 + std::fabs(q0))) {
        next = trial;
        break;
      }
      lambda *= 0.5;
      if (diag) ++diag->step_halvings;
    }
  }

  return next;
}

EmRun em_run(const Dataset& data, const Parameters& init, int max_iterations, double rel_tol,
             bool record_path) {
  EmRun run;
  run.params = init;
  run.diagnostics.min_loglik_delta = std::numeric_limits<double>::infinity();
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= max_iterations; ++iter) {
    double ll = 0.0;
    Posteriors post = e_step(data, run.params, &ll);
    run.loglik = ll;
    run.iterations = iter;
    if (record_path) run.loglik_path.push_back(ll);
    if (std::isfinite(prev_ll)) {
      run.diagnostics.min_loglik_delta = std::min(run.diagnostics.min_loglik_delta, ll - prev_ll);
      if (std::fabs(ll - prev_ll) < rel_tol * (1.0 + std::fabs(ll))) {
        run.converged = true;
        break;
      }
    }
    prev_ll = ll;
    run.params = m_step(data, post, run.params, &run.diagnostics);
  }
  if (!std::isfinite(run.diagnostics.min_loglik_delta)) run.diagnostics.min_loglik_delta = 0.0;
  return run;
}

Parameters random_start(const ModelSpec& spec, SplitMix64& rng, const FitOptions& options) {
  Parameters p = Parameters::zeros(spec);
  const double rc = options.start_class_logit_range;
  const double rb = options.start_crp_logit_range;
  for (int m = 1; m < spec.n_level2_classes; ++m) p.alpha[m] = rng.uniform(-rc, rc);
  for (int c = 0; c + 1 < spec.n_level1_classes; ++c)
    for (int m = 0; m < spec.n_level2_classes; ++m) p.gamma0(c, m) = rng.uniform(-rc, rc);
  // covariate slopes start at zero
  for (int k = 0; k < spec.n_indicators; ++k)
    for (int c = 0; c < spec.n_level1_classes; ++c)
      for (int s = 1; s < spec.n_categories[k]; ++s) p.beta[k](s, c) = rng.uniform(-rb, rb);
  return p;
}

namespace {

// Canonical label order: level-1 classes by descending mean probability of
// the top category across indicators; level-2 classes by descending implied
// share of (canonical) level-1 class 1 at zero covariates. Deterministic, so
// repeated fits of comparable datasets land in comparable labelings.
Relabeling canonical_relabeling(const Parameters& params) {
  const ModelSpec& spec = params.spec;
  const int L = spec.n_level1_classes;
  const int M = spec.n_level2_classes;
  const std::vector<Matrix> crp = params.crp();

  std::vector<double> key1(static_cast<size_t>(L), 0.0);
  for (int c = 0; c < L; ++c) {
    for (int k = 0; k < spec.n_indicators; ++k) key1[c] += crp[k](spec.n_categories[k] - 1, c);
    key1[c] /= spec.n_indicators;
  }
  Relabeling r = Relabeling::identity(L, M);
  std::stable_sort(r.perm1.begin(), r.perm1.end(), [&](int a, int b) { return key1[a] > key1[b]; });

  const int first = r.perm1[0];
  std::vector<double> key2(static_cast<size_t>(M), 0.0);
  std::vector<double> probs(static_cast<size_t>(L));
  for (int m = 0; m < M; ++m) {
    std::vector<double> logits(static_cast<size_t>(L));
    for (int c = 0; c < L; ++c) logits[c] = params.gamma0(c, m);
    softmax(logits, probs);
    key2[m] = probs[first];
  }
  std::stable_sort(r.perm2.begin(), r.perm2.end(), [&](int a, int b) { return key2[a] > key2[b]; });
  return r;
}

}  // namespace

FitResult fit(const Dataset& data, const ModelSpec& spec, const FitOptions& options) {
  spec.validate();
  if (data.sites.empty()) fail(ErrorCategory::invalid_argument, "fit: empty dataset");
  data.validate(spec);
  if (options.n_starts < 1 || options.n_refine < 1)
    fail(ErrorCategory::invalid_argument, "fit: n_starts and n_refine must be positive");

  SplitMix64 rng(options.seed);
  const int n_starts = options.n_starts;
  const int n_refine = std::min(options.n_refine, n_starts);

  struct Burned {
    EmRun run;
    int index;
  };
  std::vector<Burned> burned;
  burned.reserve(static_cast<size_t>(n_starts));
  EmDiagnostics diag_total;
  diag_total.min_loglik_delta = std::numeric_limits<double>::infinity();

  for (int s = 0; s < n_starts; ++s) {
    Parameters init = random_start(spec, rng, options);
    EmRun run = em_run(data, init, options.burn_in, options.rel_tol);
    diag_total.newton_fallbacks += run.diagnostics.newton_fallbacks;
    diag_total.step_halvings += run.diagnostics.step_halvings;
    diag_total.min_loglik_delta = std::min(diag_total.min_loglik_delta, run.diagnostics.min_loglik_delta);
    burned.push_back({std::move(run), s});
  }

  std::stable_sort(burned.begin(), burned.end(), [](const Burned& a, const Burned& b) {
    if (a.run.loglik != b.run.loglik) return a.run.loglik > b.run.loglik;
    return a.index < b.index;
  });

  int best = -1;
  EmRun best_run;
  for (int r = 0; r < n_refine; ++r) {
    EmRun run = burned[r].run;
    if (!run.converged && run.iterations < options.max_iterations) {
      EmRun cont = em_run(data, run.params, options.max_iterations - run.iterations, options.rel_tol);
      diag_total.newton_fallbacks += cont.diagnostics.newton_fallbacks;
      diag_total.step_halvings += cont.diagnostics.step_halvings;
      diag_total.min_loglik_delta = std::min(diag_total.min_loglik_delta, cont.diagnostics.min_loglik_delta);
      cont.iterations += run.iterations;
      run = std::move(cont);
    }
    if (best < 0 || run.loglik > best_run.loglik) {
      best = r;
      best_run = std::move(run);
    }
  }
  if (!std::isfinite(diag_total.min_loglik_delta)) diag_total.min_loglik_delta = 0.0;

  FitResult out;
  out.n_starts_used = n_starts;
  out.converged = best_run.converged;
  out.iterations = best_run.iterations;
  out.diagnostics = diag_total;

  // canonical labeling, then posteriors and stats at the final parameters
  out.params = permute_parameters(best_run.params, canonical_relabeling(best_run.params));
  double ll = 0.0;
  out.posteriors = e_step(data, out.params, &ll);
  out.loglik = ll;
  auto [modal1, modal2] = classify(out.posteriors);
  out.modal1 = std::move(modal1);
  out.modal2 = std::move(modal2);

  out.fit_stats.free_parameters = count_free_parameters(spec);
  const auto ic = information_criteria(out.loglik, out.fit_stats.free_parameters, data.n_individuals());
  out.fit_stats.aic = ic.aic;
  out.fit_stats.bic = ic.bic;
  out.fit_stats.entropy = relative_entropy(out.posteriors.c_marg);

  if (options.compute_se) {
    SeResult se = standard_errors(data, out.params, options.se_relative_step, options.se_step_floor);
    out.se_available = se.available;
    if (se.available) {
      out.se = std::move(se.se);
      out.covariance = std::move(se.covariance);

      // delta-method SEs for the response probabilities
      const std::vector<Matrix> crp = out.params.crp();
      out.crp_se.reserve(crp.size());
      for (int k = 0; k < spec.n_indicators; ++k) {
        const int S = spec.n_categories[k];
        Matrix se_k(S, spec.n_level1_classes);
        for (int c = 0; c < spec.n_level1_classes; ++c) {
          // covariance block of this (k, c) beta column's free categories
          Eigen::MatrixXd cov(S - 1, S - 1);
          for (int s = 1; s < S; ++s)
            for (int s2 = 1; s2 < S; ++s2)
              cov(s - 1, s2 - 1) = out.covariance(packed_index_beta(spec, k, s, c),
                                                  packed_index_beta(spec, k, s2, c));
          for (int s = 0; s < S; ++s) {
            Eigen::VectorXd jac(S - 1);
            for (int t = 1; t < S; ++t)
              jac(t - 1) = crp[k](s, c) * ((s == t ? 1.0 : 0.0) - crp[k](t, c));
            const double var = jac.dot(cov * jac);
            se_k(s, c) = std::sqrt(std::max(var, 0.0));
          }
        }
        out.crp_se.push_back(std::move(se_k));
      }
    }
  }

  return out;
}

Matrix numerical_hessian(const Dataset& data, const Parameters& params, double rel_step,
                         double step_floor) {
  const std::vector<double> theta0 = params.pack();
  const int p = static_cast<int>(theta0.size());
  Matrix H(p, p);
  if (p == 0) return H;

  LoglikEvaluator eval(data, params.spec);
  std::vector<double> h(static_cast<size_t>(p));
  for (int i = 0; i < p; ++i) h[i] = std::max(rel_step * std::fabs(theta0[i]), step_floor);

  const double f0 = eval.eval_packed(theta0);
  std::vector<double> theta = theta0;
  for (int i = 0; i < p; ++i) {
    theta[i] = theta0[i] + h[i];
    const double fp = eval.eval_packed(theta);
    theta[i] = theta0[i] - h[i];
    const double fm = eval.eval_packed(theta);
    theta[i] = theta0[i];
    H(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
  }
  for (int i = 0; i < p; ++i) {
    for (int j = i + 1; j < p; ++j) {
      theta[i] = theta0[i] + h[i];
      theta[j] = theta0[j] + h[j];
      const double fpp = eval.eval_packed(theta);
      theta[j] = theta0[j] - h[j];
      const double fpm = eval.eval_packed(theta);
      theta[i] = theta0[i] - h[i];
      const double fmm = eval.eval_packed(theta);
      theta[j] = theta0[j] + h[j];
      const double fmp = eval.eval_packed(theta);
      theta[i] = theta0[i];
      theta[j] = theta0[j];
      const double hij = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
      H(i, j) = hij;
      H(j, i) = hij;
    }
  }
  return H;
}

SeResult standard_errors(const Dataset& data, const Parameters& params, double rel_step,
                         double step_floor) {
  SeResult out;
  const int p = params.n_free();
  if (p == 0) return out;

  const Matrix Hm = numerical_hessian(data, params, rel_step, step_floor);
  Eigen::MatrixXd H(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) H(i, j) = Hm(i, j);

  if (!H.allFinite()) return out;
  Eigen::LLT<Eigen::MatrixXd> llt(-H);
  if (llt.info() != Eigen::Success) return out;  // not positive definite: flag, don't crash
  Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(p, p));

  out.available = true;
  out.se.resize(static_cast<size_t>(p));
  out.covariance = Matrix(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) out.covariance(i, j) = cov(i, j);
    out.se[i] = std::sqrt(std::max(cov(i, i), 0.0));
  }
  return out;
}

std::pair<std::vector<int>, std::vector<int>> classify(const Posteriors& post) {
  const int N = post.c_marg.rows();
  const int L = post.c_marg.cols();
  const int J = post.w_post.rows();
  const int M = post.w_post.cols();
  std::vector<int> modal1(static_cast<size_t>(N));
  std::vector<int> modal2(static_cast<size_t>(J));
  for (int i = 0; i < N; ++i) {
    int arg = 0;
    for (int c = 1; c < L; ++c)
      if (post.c_marg(i, c) > post.c_marg(i, arg)) arg = c;
    modal1[i] = arg + 1;
  }
  for (int j = 0; j < J; ++j) {
    int arg = 0;
    for (int m = 1; m < M; ++m)
      if (post.w_post(j, m) > post.w_post(j, arg)) arg = m;
    modal2[j] = arg + 1;
  }
  return {std::move(modal1), std::move(modal2)};
}

std::vector<WaldTest> wald_tests(std::span<const double> estimates, std::span<const double> ses,
                                 double alpha) {
  if (estimates.size() != ses.size())
    fail(ErrorCategory::dimension, "wald_tests: estimate and SE vectors differ in length");
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCategory::invalid_argument, "wald_tests: alpha must be in (0,1)");
  const double zcrit = normal_quantile(1.0 - alpha / 2.0);
  std::vector<WaldTest> out(estimates.size());
  for (size_t i = 0; i < estimates.size(); ++i) {
    WaldTest& t = out[i];
    t.estimate = estimates[i];
    t.se = ses[i];
    t.odds_ratio = std::exp(t.estimate);
    if (!(ses[i] > 0.0) || !std::isfinite(ses[i]) || !std::isfinite(estimates[i])) {
      t.available = false;
      continue;
    }
    t.available = true;
    t.z = t.estimate / t.se;
    t.p_value = normal_two_sided_p(t.z);
    t.ci_low = std::exp(t.estimate - zcrit * t.se);
    t.ci_high = std::exp(t.estimate + zcrit * t.se);
    t.significant = t.p_value < alpha;
  }
  return out;
}

}  // namespace npmlca
