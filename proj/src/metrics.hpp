#pragma once

// Aggregation of aligned replication results into the study's evaluation
// quantities: bias / SE / SD / SE-SD ratio for response probabilities (on the
// probability scale) and covariate slopes (logit scale), rejection rates
// (power when the true slope is nonzero, Type-I error when it is zero),
// classification error, and eta-squared factor summaries over condition-level
// means.

#include <cstdint>
#include <span>
#include <vector>

#include "model.hpp"
#include "simulator.hpp"

namespace npmlca {

struct ReplicationRecord {
  int condition_index = -1;
  Condition condition;
  int rep = -1;
  uint64_t gen_seed = 0;
  uint64_t fit_seed = 0;

  bool converged = false;
  bool switched = false;
  bool se_usable = false;  // SEs present, fit converged, labels not switched
  int iterations = 0;
  double loglik = 0.0;
  int newton_fallbacks = 0;

  double class_error1 = 0.0;
  double class_error2 = 0.0;

  // aligned estimates
  std::vector<double> alpha;  // M
  Matrix gamma0;              // L x M
  Matrix crp;                 // K x L top-category response probability
  Matrix gamma1;              // L x P1 (logit scale)
  Matrix gamma2;              // L x P2
  // SEs, populated only when se_usable
  Matrix crp_se;              // K x L probability scale
  Matrix gamma1_se;           // L x P1 (reference row zero)
  Matrix gamma2_se;           // L x P2
};

struct ParamStat {
  double truth = 0.0;
  double bias = 0.0;       // mean(est) - truth over converged records
  double sd = 0.0;         // SD of estimates over converged records
  double se_mean = 0.0;    // mean SE over converged, non-switched records
  double sd_used = 0.0;    // SD over the same non-switched subset
  double ratio = 0.0;      // se_mean / sd_used
  bool ratio_available = false;
  double rejection_rate = 0.0;      // |est/se| > z_crit over usable records
  double rejection_rate_all = 0.0;  // same count over all converged records
  bool rejection_available = false;
  int n_converged = 0;
  int n_used = 0;
};

struct ClassRecovery {
  double bias = 0.0;
  double se_mean = 0.0;
  double sd = 0.0;
  double ratio = 0.0;  // mean of per-parameter ratios
  bool ratio_available = false;
};

struct RecoverySummary {
  std::vector<ParamStat> crp;       // K*L entries, k-major
  std::vector<ClassRecovery> crp_by_class;  // L entries
  std::vector<ParamStat> slopes1;   // (L-1)*P1, class-major
  std::vector<ParamStat> slopes2;   // (L-1)*P2
  int n_records = 0;
  int n_converged = 0;
  int n_switched = 0;
};

// Recovery summary against the generating truth; needs at least two converged
// records for SDs. Rejection rates use alpha = 0.05 unless overridden.
RecoverySummary parameter_recovery(std::span<const ReplicationRecord> records, const Parameters& truth,
                                   double alpha = 0.05);

struct RejectionRate {
  double rate = 0.0;       // over converged, non-switched records with SEs
  double rate_all = 0.0;   // same rejections over all converged records
  int n_used = 0;
  int n_converged = 0;
  bool available = false;
};

// Rejection rate of the Wald test for one slope: level 1 selects gamma1,
// level 2 selects gamma2; c and p are 0-based class / covariate indices.
RejectionRate rejection_rate(std::span<const ReplicationRecord> records, int level, int c, int p,
                             double alpha = 0.05);

// Fraction of mismatches between equally long assignment vectors.
double classification_error(std::span<const int> predicted, std::span<const int> truth);

enum class StudyFactor {
  indicators,
  quality,
  sites,
  site_size,
  l1_effect,
  l2_effect,
};

const char* study_factor_name(StudyFactor f);
std::vector<StudyFactor> all_study_factors();

// Main-effect sum of squares over total sum of squares across condition-level
// outcome means; 0 when the outcome is constant or the factor does not vary.
double eta_squared(std::span<const Condition> conditions, std::span<const double> outcome,
                   StudyFactor factor);

}  // namespace npmlca
