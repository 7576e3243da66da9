#pragma once

// Maximum-likelihood estimation by EM with multiple random starts. The E step
// is exact (log domain); the M step updates the class-probability and response
// logits in closed form and takes one damped Newton step on the weighted
// multinomial-logit objective for the covariate blocks (generalized EM, ascent
// preserved by step halving). Standard errors come from the observed
// information: inverse of the negative numerical Hessian of the total
// log-likelihood over the packed free parameters.

#include <cstdint>
#include <utility>
#include <vector>

#include "model.hpp"
#include "rng.hpp"

namespace npmlca {

struct Posteriors {
  Matrix w_post;               // J x M: P(W_j = m | data_j)
  std::vector<double> c_cond;  // N x M x L: P(C_i = c | W = m, data), index (i*M + m)*L + c
  Matrix c_marg;               // N x L: sum_m w_post * c_cond
  int n_level2 = 0;
  int n_level1 = 0;

  double cc(int i, int m, int c) const {
    return c_cond[(static_cast<size_t>(i) * n_level2 + m) * n_level1 + c];
  }
  double& cc(int i, int m, int c) {
    return c_cond[(static_cast<size_t>(i) * n_level2 + m) * n_level1 + c];
  }
};

struct FitOptions {
  uint64_t seed = 1;
  int n_starts = 20;
  int n_refine = 5;
  int burn_in = 30;
  int max_iterations = 1000;
  double rel_tol = 1e-7;          // relative log-likelihood change
  bool compute_se = true;
  double se_relative_step = 1e-4;
  double se_step_floor = 1e-5;
  double start_crp_logit_range = 2.0;    // CRP logits ~ uniform(-r, r)
  double start_class_logit_range = 1.0;  // class logits ~ uniform(-r, r)
};

struct EmDiagnostics {
  int newton_fallbacks = 0;  // gamma updates that fell back to a gradient step
  int step_halvings = 0;
  double min_loglik_delta = 0.0;  // most negative iteration-to-iteration change seen
};

struct FitStats {
  long free_parameters = 0;
  double aic = 0.0;
  double bic = 0.0;
  double entropy = 0.0;
};

struct FitResult {
  Parameters params;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  int n_starts_used = 0;
  Posteriors posteriors;
  std::vector<int> modal1;  // per individual, 1-based class codes
  std::vector<int> modal2;  // per site
  bool se_available = false;
  std::vector<double> se;      // packed free-parameter SEs (logit scale)
  Matrix covariance;           // free-parameter covariance, set iff se_available
  std::vector<Matrix> crp_se;  // per indicator S_k x L, probability scale
  FitStats fit_stats;
  EmDiagnostics diagnostics;
};

// One E step; optionally reports the observed-data log-likelihood at params
// (a free by-product of the site-level normalizers).
Posteriors e_step(const Dataset& data, const Parameters& params, double* loglik = nullptr);

// One (generalized) M step given posteriors computed at params.
Parameters m_step(const Dataset& data, const Posteriors& post, const Parameters& params,
                  EmDiagnostics* diag = nullptr);

// Expected complete-data objective for the covariate blocks and its analytic
// gradient over the free gamma parameters (exposed for finite-difference
// checks).
double gamma_objective(const Dataset& data, const Posteriors& post, const Parameters& params);
std::vector<double> gamma_gradient(const Dataset& data, const Posteriors& post, const Parameters& params);

struct EmRun {
  Parameters params;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  EmDiagnostics diagnostics;
  std::vector<double> loglik_path;  // filled when record_path is set
};

// EM from an explicit start point. Equivariant under class relabeling: a
// permuted start yields the identically permuted trajectory.
EmRun em_run(const Dataset& data, const Parameters& init, int max_iterations, double rel_tol,
             bool record_path = false);

// Multi-start fit: n_starts random initializations, burn_in iterations each,
// the best n_refine continued to convergence; the winner is reported with
// classes in a canonical order (level-1 by descending mean response
// probability of the top category, level-2 by descending share of level-1
// class 1). Deterministic given options.seed.
FitResult fit(const Dataset& data, const ModelSpec& spec, const FitOptions& options);

// Random start point drawn from the documented start distributions.
Parameters random_start(const ModelSpec& spec, SplitMix64& rng, const FitOptions& options);

struct SeResult {
  bool available = false;
  std::vector<double> se;
  Matrix covariance;
};

// Central-difference Hessian of the total log-likelihood over the packed free
// parameters; symmetric by construction (each off-diagonal pair comes from a
// single four-point stencil).
Matrix numerical_hessian(const Dataset& data, const Parameters& params, double rel_step = 1e-4,
                         double step_floor = 1e-5);

// Observed-information standard errors at a local maximum; central
// differences with per-coordinate step max(rel_step*|theta|, floor). A
// non-positive-definite Hessian yields available = false rather than a throw.
SeResult standard_errors(const Dataset& data, const Parameters& params, double rel_step = 1e-4,
                         double step_floor = 1e-5);

// Modal assignments (1-based codes); ties break toward the lowest class index.
std::pair<std::vector<int>, std::vector<int>> classify(const Posteriors& post);

struct WaldTest {
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  double odds_ratio = 1.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool significant = false;
  bool available = false;
};

// Two-sided Wald tests of logit-scale slopes; odds-ratio scale CIs at level
// 1 - alpha. Nonpositive or non-finite SEs mark the test unavailable.
std::vector<WaldTest> wald_tests(std::span<const double> estimates, std::span<const double> ses,
                                 double alpha = 0.05);

}  // namespace npmlca
