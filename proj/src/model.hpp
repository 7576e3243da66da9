#pragma once

// Domain types and the exact log-likelihood of the conditional nonparametric
// multilevel latent class model: sites belong to one of M discrete level-2
// classes, individuals within a site to one of L level-1 classes whose
// membership logits carry level-1 and cross-level covariate effects, and each
// individual answers K categorical indicators with class-specific response
// probabilities (invariant across sites).
//
// Conventions used throughout:
//   - class/category *indices* in function arguments are 0-based;
//   - class/category *codes* stored in data and emitted in files are 1-based;
//   - reference cells fixed at exactly zero: alpha[0], the last row of every
//     gamma block (class L), and the first category row of every beta block.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "util.hpp"

namespace npmlca {

struct ModelSpec {
  int n_indicators = 0;            // K
  std::vector<int> n_categories;   // S_k per indicator, each >= 2
  int n_level1_classes = 2;        // L
  int n_level2_classes = 1;        // M
  int n_level1_covariates = 0;     // P1
  int n_level2_covariates = 0;     // P2

  static ModelSpec binary(int n_indicators, int n_level1_classes, int n_level2_classes,
                          int n_level1_covariates = 0, int n_level2_covariates = 0);

  void validate() const;
};

struct Parameters {
  ModelSpec spec;
  std::vector<double> alpha;   // M level-2 class logits, alpha[0] == 0
  Matrix gamma0;               // L x M level-1 intercepts per level-2 class, row L-1 == 0
  Matrix gamma1;               // L x P1 level-1 covariate slopes, row L-1 == 0
  Matrix gamma2;               // L x P2 cross-level covariate slopes, row L-1 == 0
  std::vector<Matrix> beta;    // per indicator: S_k x L category logits, row 0 == 0

  static Parameters zeros(const ModelSpec& spec);
  void validate() const;

  // Free-parameter vector in the packed order documented below.
  int n_free() const;
  std::vector<double> pack() const;
  static Parameters unpack(const ModelSpec& spec, std::span<const double> theta);
  void unpack_into(std::span<const double> theta);

  std::vector<double> level2_class_probs() const;   // softmax(alpha)
  std::vector<Matrix> crp() const;                  // per indicator: S_k x L response probabilities
};

// Packed layout: [alpha m=1..M-1] [gamma0 (c,m), c outer] [gamma1 (c,p)]
// [gamma2 (c,p)] [beta k outer, class c, then categories s=1..S_k-1].
int packed_index_alpha(const ModelSpec& spec, int m);
int packed_index_gamma0(const ModelSpec& spec, int c, int m);
int packed_index_gamma1(const ModelSpec& spec, int c, int p);
int packed_index_gamma2(const ModelSpec& spec, int c, int p);
int packed_index_beta(const ModelSpec& spec, int k, int s, int c);

struct Individual {
  std::vector<int> y;       // indicator responses, codes 1..S_k
  std::vector<double> x;    // level-1 covariates
};

struct Site {
  std::string id;
  std::vector<double> z;    // level-2 covariates, constant within the site
  std::vector<Individual> members;
};

struct Dataset {
  std::vector<Site> sites;
  // Optional generating truth (1-based class codes); empty when unknown.
  std::vector<int> true_w;
  std::vector<std::vector<int>> true_c;

  int n_sites() const { return static_cast<int>(sites.size()); }
  int n_individuals() const;
  bool has_truth() const { return !true_w.empty() && !true_c.empty(); }
  std::vector<int> site_offsets() const;  // global index of each site's first member
  std::vector<int> true_c_flat() const;
  void validate(const ModelSpec& spec) const;
};

// Label permutations at both levels. perm1[c] / perm2[m] give the *source*
// index whose parameters move to position c / m, so applying a relabeling
// reads: new_block[c] = old_block[perm1[c]] re-expressed against the new
// reference class.
struct Relabeling {
  std::vector<int> perm1;  // over level-1 classes
  std::vector<int> perm2;  // over level-2 classes

  static Relabeling identity(int n_level1, int n_level2);
  bool is_identity() const;
  bool switched() const { return !is_identity(); }
  Relabeling inverse() const;
  void validate() const;
};

// Permutes class labels of a parameter set; logit blocks are re-expressed
// against the new reference cell (exact zero afterwards). The model
// distribution, and hence total_loglik, is unchanged.
Parameters permute_parameters(const Parameters& params, const Relabeling& r);

// P(C = c | W = m, x, z) over c = 0..L-1, computed in the log domain.
std::vector<double> class_membership_probs(const Parameters& params, int m,
                                           std::span<const double> x,
                                           std::span<const double> z);

// log P(Y = y | C = c) under local independence.
double response_loglik(std::span<const int> y, const Parameters& params, int c);

// log-likelihood of one site: log sum_m pi_m prod_i sum_c p(c|m,x,z) P(y_i|c),
// evaluated as log-sum-exp over m of [log pi_m + sum_i log sum_c ...].
double group_loglik(const Site& site, const Parameters& params);

double total_loglik(const Dataset& data, const Parameters& params);

// Reusable evaluator for repeated likelihood evaluations (numerical Hessians);
// avoids per-call allocation.
class LoglikEvaluator {
 public:
  LoglikEvaluator(const Dataset& data, const ModelSpec& spec);
  double operator()(const Parameters& params);
  double eval_packed(std::span<const double> theta);
  long n_evals() const { return n_evals_; }

 private:
  const Dataset* data_;
  Parameters params_buf_;
  std::vector<Matrix> lsm_beta_;       // per indicator: S_k x L log response probs
  std::vector<double> log_pi_, site_acc_, resp_, memb_, q_;
  long n_evals_ = 0;
};

long count_free_parameters(const ModelSpec& spec);

struct InformationCriteria {
  double aic;
  double bic;
};

// AIC = -2 loglik + 2 p; BIC = -2 loglik + p ln N with N the total number of
// level-1 units.
InformationCriteria information_criteria(double loglik, long n_free, long n_individuals);

// 1 - sum_i sum_c (-p ln p) / (N ln L) over a marginal posterior matrix; 1 for
// degenerate rows, 0 for uniform rows, and defined as 1 when L == 1.
double relative_entropy(const Matrix& c_marg);

}  // namespace npmlca
