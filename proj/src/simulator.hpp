#pragma once

// Simulation-study design: the six-factor condition grid (96 cells), the true
// parameter sets implied by a condition, and the generative sampler that
// records true memberships alongside the data.

#include <cstdint>
#include <string>
#include <vector>

#include "model.hpp"
#include "rng.hpp"

namespace npmlca {

struct EffectPair {
  double or1 = 1.0;  // odds ratio on class 1
  double or2 = 1.0;  // odds ratio on class 2

  friend bool operator==(const EffectPair& a, const EffectPair& b) = default;
};

struct Condition {
  int n_indicators = 12;        // 6 or 12
  double crp_quality = 0.8;     // 0.7, 0.8 or 0.9
  int n_sites = 50;             // 50 or 150
  int site_size = 30;           // 30 or 60
  EffectPair l1_effects;        // (1,1) or (1.5,3)
  EffectPair l2_effects;        // (1,1) or (1.5,3)

  void validate() const;        // factor levels restricted to the study design
  std::string label() const;
  friend bool operator==(const Condition& a, const Condition& b) = default;
};

// All 96 factor combinations in deterministic lexicographic order (indicators,
// quality, sites, site size, level-1 effects, level-2 effects; each factor
// ascending).
std::vector<Condition> condition_grid();

// Index of a condition in the grid; -1 when absent.
int condition_index(const Condition& cond);

// Model dimensions implied by a condition: binary indicators, L=3, M=2, one
// covariate per level.
ModelSpec condition_spec(const Condition& cond);

// True parameters: equal level-2 class weights; level-1 intercepts
// (log 2.5, log 1.5, 0) under level-2 class 1 and mirrored under class 2;
// covariate slopes log of the condition's odds-ratio pairs; response
// probabilities q / mixed / 1-q per class with q the CRP quality.
Parameters build_true_parameters(const Condition& cond);

// Generic sampler from arbitrary parameters: per site draw W and the level-2
// covariates ~ N(0,1); per individual draw the level-1 covariates ~
// Bernoulli(0.5) coded 0/1, the class membership, then each indicator.
// Byte-identical output for identical seeds.
Dataset generate(const Parameters& params, int n_sites, int site_size, uint64_t seed);

// Condition-shaped wrapper around generate().
Dataset generate_dataset(const Condition& cond, const Parameters& params, uint64_t seed);

}  // namespace npmlca
