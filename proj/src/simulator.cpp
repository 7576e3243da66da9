#include "simulator.hpp"

#include <cmath>
#include <sstream>

namespace npmlca {

namespace {

const int kIndicatorLevels[] = {6, 12};
const double kQualityLevels[] = {0.7, 0.8, 0.9};
const int kSiteCountLevels[] = {50, 150};
const int kSiteSizeLevels[] = {30, 60};
const EffectPair kEffectLevels[] = {{1.0, 1.0}, {1.5, 3.0}};

bool near(double a, double b) { return std::fabs(a - b) < 1e-12; }

}  // namespace

void Condition::validate() const {
  if (n_indicators != 6 && n_indicators != 12)
    fail(ErrorCategory::invalid_argument, "condition: n_indicators must be 6 or 12, got " +
                                              std::to_string(n_indicators));
  if (!near(crp_quality, 0.7) && !near(crp_quality, 0.8) && !near(crp_quality, 0.9))
    fail(ErrorCategory::invalid_argument, "condition: crp_quality must be 0.7, 0.8 or 0.9, got " +
                                              format_double(crp_quality));
  if (n_sites != 50 && n_sites != 150)
    fail(ErrorCategory::invalid_argument, "condition: n_sites must be 50 or 150, got " + std::to_string(n_sites));
  if (site_size != 30 && site_size != 60)
    fail(ErrorCategory::invalid_argument, "condition: site_size must be 30 or 60, got " +
                                              std::to_string(site_size));
  auto valid_pair = [](const EffectPair& e) {
    return (near(e.or1, 1.0) && near(e.or2, 1.0)) || (near(e.or1, 1.5) && near(e.or2, 3.0));
  };
  if (!valid_pair(l1_effects))
    fail(ErrorCategory::invalid_argument, "condition: l1_effects must be (1,1) or (1.5,3)");
  if (!valid_pair(l2_effects))
    fail(ErrorCategory::invalid_argument, "condition: l2_effects must be (1,1) or (1.5,3)");
}

std::string Condition::label() const {
  std::ostringstream os;
  auto pair_tag = [](const EffectPair& e) { return near(e.or1, 1.0) ? "1,1" : "1.5,3"; };
  os << "k" << n_indicators << "_q" << format_double(crp_quality) << "_J" << n_sites << "_n" << site_size
     << "_x(" << pair_tag(l1_effects) << ")_z(" << pair_tag(l2_effects) << ")";
  return os.str();
}

std::vector<Condition> condition_grid() {
  std::vector<Condition> grid;
  grid.reserve(96);
  for (int k : kIndicatorLevels)
    for (double q : kQualityLevels)
      for (int j : kSiteCountLevels)
        for (int n : kSiteSizeLevels)
          for (const EffectPair& e1 : kEffectLevels)
            for (const EffectPair& e2 : kEffectLevels) {
              Condition c;
              c.n_indicators = k;
              c.crp_quality = q;
              c.n_sites = j;
              c.site_size = n;
              c.l1_effects = e1;
              c.l2_effects = e2;
              grid.push_back(c);
            }
  return grid;
}

int condition_index(const Condition& cond) {
  const std::vector<Condition> grid = condition_grid();
  for (size_t i = 0; i < grid.size(); ++i)
    if (grid[i] == cond) return static_cast<int>(i);
  return -1;
}

ModelSpec condition_spec(const Condition& cond) {
  cond.validate();
  return ModelSpec::binary(cond.n_indicators, 3, 2, 1, 1);
}

Parameters build_true_parameters(const Condition& cond) {
  const ModelSpec spec = condition_spec(cond);
  Parameters p = Parameters::zeros(spec);

  // equal level-2 class weights
  p.alpha[1] = 0.0;

  // level-1 class separation log(2.5)/log(1.5) under level-2 class 1,
  // mirrored under class 2 so the two site types have opposite compositions
  p.gamma0(0, 0) = std::log(2.5);
  p.gamma0(1, 0) = std::log(1.5);
  p.gamma0(0, 1) = -std::log(2.5);
  p.gamma0(1, 1) = -std::log(1.5);

  p.gamma1(0, 0) = std::log(cond.l1_effects.or1);
  p.gamma1(1, 0) = std::log(cond.l1_effects.or2);
  p.gamma2(0, 0) = std::log(cond.l2_effects.or1);
  p.gamma2(1, 0) = std::log(cond.l2_effects.or2);

  // response pattern: class 1 high everywhere, class 2 high on the first half
  // of the indicators and low on the rest, class 3 low everywhere
  const double q = cond.crp_quality;
  const double hi = std::log(q / (1.0 - q));
  const int half = cond.n_indicators / 2;
  for (int k = 0; k < cond.n_indicators; ++k) {
    p.beta[k](1, 0) = hi;
    p.beta[k](1, 1) = (k < half) ? hi : -hi;
    p.beta[k](1, 2) = -hi;
  }
  return p;
}

Dataset generate(const Parameters& params, int n_sites, int site_size, uint64_t seed) {
  params.validate();
  if (n_sites < 1 || site_size < 1)
    fail(ErrorCategory::invalid_argument, "generate: n_sites and site_size must be positive");
  const ModelSpec& spec = params.spec;
  SplitMix64 rng(seed);

  const std::vector<double> pi = params.level2_class_probs();
  const std::vector<Matrix> crp = params.crp();

  Dataset data;
  data.sites.reserve(static_cast<size_t>(n_sites));
  data.true_w.reserve(static_cast<size_t>(n_sites));
  data.true_c.reserve(static_cast<size_t>(n_sites));

  std::vector<double> cat_probs;
  for (int j = 0; j < n_sites; ++j) {
    Site site;
    site.id = std::to_string(j + 1);
    const int w = rng.categorical(pi);
    data.true_w.push_back(w + 1);
    for (int p = 0; p < spec.n_level2_covariates; ++p) site.z.push_back(rng.normal());

    std::vector<int> cvec;
    cvec.reserve(static_cast<size_t>(site_size));
    for (int i = 0; i < site_size; ++i) {
      Individual ind;
      for (int p = 0; p < spec.n_level1_covariates; ++p) ind.x.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
      const std::vector<double> memb = class_membership_probs(params, w, ind.x, site.z);
      const int c = rng.categorical(memb);
      cvec.push_back(c + 1);
      for (int k = 0; k < spec.n_indicators; ++k) {
        const int S = spec.n_categories[k];
        cat_probs.resize(static_cast<size_t>(S));
        for (int s = 0; s < S; ++s) cat_probs[s] = crp[k](s, c);
        ind.y.push_back(rng.categorical(cat_probs) + 1);
      }
      site.members.push_back(std::move(ind));
    }
    data.true_c.push_back(std::move(cvec));
    data.sites.push_back(std::move(site));
  }
  return data;
}

Dataset generate_dataset(const Condition& cond, const Parameters& params, uint64_t seed) {
  cond.validate();
  if (params.spec.n_indicators != cond.n_indicators)
    fail(ErrorCategory::dimension, "generate_dataset: parameter set has " +
                                       std::to_string(params.spec.n_indicators) +
                                       " indicators, condition expects " + std::to_string(cond.n_indicators));
  return generate(params, cond.n_sites, cond.site_size, seed);
}

}  // namespace npmlca
