#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "model.hpp"
#include "oracle.hpp"
#include "rng.hpp"

using namespace npmlca;
using namespace npmlca::testing;

namespace {

Parameters toy_binary_params(int K, int L, int M, int P1 = 0, int P2 = 0) {
  return Parameters::zeros(ModelSpec::binary(K, L, M, P1, P2));
}

// beta logit that puts probability p on category 2 of a binary indicator
double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

TEST_CASE("class membership probabilities: identity and forced softmax cases") {
  // all gammas zero -> uniform over L=3
  Parameters p = toy_binary_params(2, 3, 1, 1, 1);
  std::vector<double> x{1.0}, z{0.3};
  auto probs = class_membership_probs(p, 0, x, z);
  for (double v : probs) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // gamma0 column (log 2.5, log 1.5, 0) -> (0.5, 0.3, 0.2)
  Parameters q = toy_binary_params(2, 3, 1);
  q.gamma0(0, 0) = std::log(2.5);
  q.gamma0(1, 0) = std::log(1.5);
  auto probs2 = class_membership_probs(q, 0, {}, {});
  CHECK(probs2[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(probs2[1] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(probs2[2] == doctest::Approx(0.2).epsilon(1e-12));

  // binary covariate with odds ratios (1.5, 3), x = 1 -> (1.5, 3, 1)/5.5
  Parameters r = toy_binary_params(2, 3, 1, 1, 0);
  r.gamma1(0, 0) = std::log(1.5);
  r.gamma1(1, 0) = std::log(3.0);
  auto probs3 = class_membership_probs(r, 0, std::vector<double>{1.0}, {});
  CHECK(probs3[0] == doctest::Approx(1.5 / 5.5).epsilon(1e-10));
  CHECK(probs3[1] == doctest::Approx(3.0 / 5.5).epsilon(1e-10));
  CHECK(probs3[2] == doctest::Approx(1.0 / 5.5).epsilon(1e-10));
}

TEST_CASE("class membership probabilities: dimension errors name the offending dimension") {
  Parameters p = toy_binary_params(2, 3, 2, 1, 1);
  CHECK_THROWS_WITH_AS(class_membership_probs(p, 0, std::vector<double>{1.0, 2.0}, std::vector<double>{0.0}),
                       doctest::Contains("level-1 covariate"), Error);
  CHECK_THROWS_WITH_AS(class_membership_probs(p, 0, std::vector<double>{1.0}, std::vector<double>{}),
                       doctest::Contains("level-2 covariate"), Error);
  CHECK_THROWS_AS(class_membership_probs(p, 5, std::vector<double>{1.0}, std::vector<double>{0.0}), Error);
}

TEST_CASE("response_loglik: independent products") {
  // K=2 binary, both CRPs 0.8 for class 0, y=(1,1) means both reference cats
  Parameters p = toy_binary_params(2, 2, 1);
  for (int k = 0; k < 2; ++k)
    for (int c = 0; c < 2; ++c) p.beta[k](1, c) = logit(0.8);
  // category 1 has probability 0.2; ask for P(Y=2,Y=2) = 0.64
  std::vector<int> y{2, 2};
  CHECK(response_loglik(y, p, 0) == doctest::Approx(std::log(0.64)).epsilon(1e-12));

  // K=1, CRP 0.5 -> log(0.5) for either category
  Parameters q = toy_binary_params(1, 2, 1);
  std::vector<int> y1{1}, y2{2};
  CHECK(response_loglik(y1, q, 0) == doctest::Approx(std::log(0.5)));
  CHECK(response_loglik(y2, q, 0) == doctest::Approx(std::log(0.5)));

  // K=3, CRPs (0.9, 0.1, 0.7) on category 2, y = (2, 1, 2)
  Parameters r = toy_binary_params(3, 2, 1);
  r.beta[0](1, 0) = logit(0.9);
  r.beta[1](1, 0) = logit(0.1);
  r.beta[2](1, 0) = logit(0.7);
  std::vector<int> y3{2, 1, 2};
  CHECK(response_loglik(y3, r, 0) == doctest::Approx(std::log(0.9 * 0.9 * 0.7)).epsilon(1e-12));

  // out-of-range category names the indicator
  std::vector<int> bad{2, 3, 2};
  CHECK_THROWS_WITH_AS(response_loglik(bad, r, 0), doctest::Contains("indicator 2"), Error);
}

TEST_CASE("group_loglik: degenerate mixture reduces to the response sum") {
  SplitMix64 rng(7);
  Parameters p = toy_binary_params(3, 1, 1);
  for (int k = 0; k < 3; ++k) p.beta[k](1, 0) = rng.uniform(-1, 1);
  Site site;
  site.id = "1";
  for (int i = 0; i < 4; ++i) {
    Individual ind;
    for (int k = 0; k < 3; ++k) ind.y.push_back(rng.bernoulli(0.5) ? 1 : 2);
    site.members.push_back(ind);
  }
  double expect = 0.0;
  for (const auto& ind : site.members) expect += response_loglik(ind.y, p, 0);
  CHECK(group_loglik(site, p) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("group_loglik: matches explicit enumeration on a toy site") {
  SplitMix64 rng(11);
  auto t = random_tiny_instance(rng);
  for (const Site& site : t.data.sites) {
    CHECK(group_loglik(site, t.params) == doctest::Approx(oracle_group_loglik(site, t.params)).epsilon(1e-12));
  }
}

TEST_CASE("group_loglik: duplicating individuals squares the per-m product, not the mixture") {
  // M=2 with distinct site-level weights: the site likelihood is a mixture
  // over m, so duplicating every individual must NOT square the whole thing.
  Parameters p = toy_binary_params(2, 2, 2);
  p.alpha[1] = 0.4;
  p.gamma0(0, 0) = 1.2;
  p.gamma0(0, 1) = -0.9;
  p.beta[0](1, 0) = logit(0.8);
  p.beta[0](1, 1) = logit(0.3);
  p.beta[1](1, 0) = logit(0.7);
  p.beta[1](1, 1) = logit(0.2);

  Site site;
  site.id = "1";
  site.members.push_back(Individual{{2, 1}, {}});
  site.members.push_back(Individual{{1, 1}, {}});

  Site doubled = site;
  for (const auto& ind : site.members) doubled.members.push_back(ind);

  const double ll = group_loglik(site, p);
  const double ll2 = group_loglik(doubled, p);

  // correct value: logsumexp over m of (log pi_m + 2 * per-m product)
  auto pi = p.level2_class_probs();
  std::vector<double> per_m(2);
  for (int m = 0; m < 2; ++m) {
    double acc = std::log(pi[m]);
    for (const auto& ind : site.members) {
      auto memb = class_membership_probs(p, m, ind.x, site.z);
      double s = 0.0;
      for (int c = 0; c < 2; ++c) s += memb[c] * std::exp(response_loglik(ind.y, p, c));
      acc += std::log(s);
    }
    per_m[m] = acc;
  }
  std::vector<double> twice = {2.0 * (per_m[0] - std::log(pi[0])) + std::log(pi[0]),
                               2.0 * (per_m[1] - std::log(pi[1])) + std::log(pi[1])};
  CHECK(ll2 == doctest::Approx(log_sum_exp(twice)).epsilon(1e-12));
  CHECK(ll2 != doctest::Approx(2.0 * ll).epsilon(1e-6));
}

TEST_CASE("total_loglik: sums over independent sites and reduces when covariates vanish") {
  SplitMix64 rng(23);
  auto t = random_tiny_instance(rng);
  double sum = 0.0;
  for (const Site& s : t.data.sites) sum += group_loglik(s, t.params);
  CHECK(total_loglik(t.data, t.params) == doctest::Approx(sum).epsilon(1e-12));

  // two identical sites -> 2x the single-site value
  Dataset two;
  two.sites.push_back(t.data.sites[0]);
  two.sites.push_back(t.data.sites[0]);
  two.sites[1].id = "2";
  Dataset one;
  one.sites.push_back(t.data.sites[0]);
  CHECK(total_loglik(two, t.params) == doctest::Approx(2.0 * total_loglik(one, t.params)).epsilon(1e-12));

  // zero slopes equal the covariate-free model with the same gamma0
  ModelSpec with_cov = ModelSpec::binary(2, 3, 2, 1, 1);
  Parameters pc = Parameters::zeros(with_cov);
  pc.alpha[1] = 0.3;
  pc.gamma0(0, 0) = 0.7;
  pc.gamma0(1, 1) = -0.4;
  pc.beta[0](1, 0) = 0.9;
  pc.beta[1](1, 2) = -1.1;

  ModelSpec no_cov = ModelSpec::binary(2, 3, 2, 0, 0);
  Parameters pn = Parameters::zeros(no_cov);
  pn.alpha = pc.alpha;
  pn.gamma0 = pc.gamma0;
  pn.beta = pc.beta;

  SplitMix64 rng2(29);
  Dataset dc, dn;
  for (int j = 0; j < 3; ++j) {
    Site sc, sn;
    sc.id = sn.id = std::to_string(j + 1);
    sc.z = {rng2.uniform(-1, 1)};
    for (int i = 0; i < 3; ++i) {
      Individual ic, in;
      ic.x = {rng2.bernoulli(0.5) ? 1.0 : 0.0};
      for (int k = 0; k < 2; ++k) {
        int code = rng2.bernoulli(0.5) ? 1 : 2;
        ic.y.push_back(code);
        in.y.push_back(code);
      }
      sc.members.push_back(ic);
      sn.members.push_back(in);
    }
    dc.sites.push_back(sc);
    dn.sites.push_back(sn);
  }
  CHECK(total_loglik(dc, pc) == doctest::Approx(total_loglik(dn, pn)).epsilon(1e-12));
}

TEST_CASE("total_loglik: brute-force oracle agreement on random tiny instances") {
  SplitMix64 rng(101);
  for (int trial = 0; trial < 60; ++trial) {
    auto t = random_tiny_instance(rng);
    const double fast = total_loglik(t.data, t.params);
    const double slow = oracle_total_loglik(t.data, t.params);
    CHECK(std::fabs(fast - slow) < 1e-10);
  }
}

TEST_CASE("total_loglik: invariant under label permutation at both levels") {
  SplitMix64 rng(211);
  for (int trial = 0; trial < 20; ++trial) {
    auto t = random_tiny_instance(rng);
    const int L = t.spec.n_level1_classes;
    const int M = t.spec.n_level2_classes;
    Relabeling r = Relabeling::identity(L, M);
    for (int i = L - 1; i > 0; --i) std::swap(r.perm1[i], r.perm1[rng.next_u64() % (i + 1)]);
    for (int i = M - 1; i > 0; --i) std::swap(r.perm2[i], r.perm2[rng.next_u64() % (i + 1)]);
    Parameters permuted = permute_parameters(t.params, r);
    permuted.validate();
    CHECK(total_loglik(t.data, permuted) ==
          doctest::Approx(total_loglik(t.data, t.params)).epsilon(1e-12));
  }
}

TEST_CASE("softmax invariants: rows sum to one, shift invariance") {
  SplitMix64 rng(307);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 6);
    std::vector<double> logits(n), probs(n), shifted(n), probs2(n);
    for (int i = 0; i < n; ++i) logits[i] = rng.uniform(-30, 30);
    const double shift = rng.uniform(-5, 5);
    for (int i = 0; i < n; ++i) shifted[i] = logits[i] + shift;
    softmax(logits, probs);
    softmax(shifted, probs2);
    double sum = 0.0;
    for (double v : probs) sum += v;
    CHECK(std::fabs(sum - 1.0) < 1e-12);
    for (int i = 0; i < n; ++i) CHECK(probs[i] == doctest::Approx(probs2[i]).epsilon(1e-9));
  }
}

TEST_CASE("count_free_parameters") {
  // 3 classes, 2 site classes, 10 binary indicators, 4 + 1 covariates -> 45
  CHECK(count_free_parameters(ModelSpec::binary(10, 3, 2, 4, 1)) == 45);
  // L=2, M=1, one binary indicator, no covariates -> 3
  CHECK(count_free_parameters(ModelSpec::binary(1, 2, 1)) == 3);
  // formula audit for the simulation-sized model with 6 indicators
  CHECK(count_free_parameters(ModelSpec::binary(6, 3, 2, 1, 1)) == 27);
}

TEST_CASE("information criteria") {
  auto ic = information_criteria(-25513.445, 45, 6580);
  CHECK(ic.aic == doctest::Approx(51116.890).epsilon(1e-9));
  CHECK(std::fabs(ic.bic - 51422.521) < 5e-4);

  auto ic2 = information_criteria(0.0, 1, 1);
  CHECK(ic2.aic == doctest::Approx(2.0));
  CHECK(ic2.bic == doctest::Approx(0.0));

  // BIC - AIC = p (ln N - 2)
  SplitMix64 rng(401);
  for (int trial = 0; trial < 20; ++trial) {
    const double ll = rng.uniform(-1e4, 0);
    const long p = 1 + static_cast<long>(rng.next_u64() % 50);
    const long n = 1 + static_cast<long>(rng.next_u64() % 10000);
    auto x = information_criteria(ll, p, n);
    CHECK(x.bic - x.aic == doctest::Approx(p * (std::log(static_cast<double>(n)) - 2.0)).epsilon(1e-10));
  }
}

TEST_CASE("relative entropy") {
  Matrix degenerate(3, 2);
  degenerate(0, 0) = 1.0;
  degenerate(1, 1) = 1.0;
  degenerate(2, 0) = 1.0;
  CHECK(relative_entropy(degenerate) == doctest::Approx(1.0));

  Matrix uniform(4, 3);
  uniform.fill(1.0 / 3.0);
  CHECK(std::fabs(relative_entropy(uniform)) < 1e-12);

  Matrix mixed(2, 2);
  mixed(0, 0) = 0.9;
  mixed(0, 1) = 0.1;
  mixed(1, 0) = 0.5;
  mixed(1, 1) = 0.5;
  const double h = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1)) + std::log(2.0);
  CHECK(relative_entropy(mixed) == doctest::Approx(1.0 - h / (2.0 * std::log(2.0))).epsilon(1e-12));
  CHECK(std::fabs(relative_entropy(mixed) - 0.2655) < 5e-4);
}

TEST_CASE("pack/unpack round trip and packed index helpers") {
  SplitMix64 rng(503);
  for (int trial = 0; trial < 30; ++trial) {
    auto t = random_tiny_instance(rng);
    auto theta = t.params.pack();
    CHECK(static_cast<long>(theta.size()) == count_free_parameters(t.spec));
    Parameters back = Parameters::unpack(t.spec, theta);
    CHECK(back.pack() == theta);
    CHECK(total_loglik(t.data, back) == doctest::Approx(total_loglik(t.data, t.params)).epsilon(1e-14));
  }

  ModelSpec spec = ModelSpec::binary(3, 3, 2, 2, 1);
  Parameters p = Parameters::zeros(spec);
  auto theta = p.pack();
  theta[packed_index_alpha(spec, 1)] = 1.0;
  theta[packed_index_gamma0(spec, 1, 0)] = 2.0;
  theta[packed_index_gamma1(spec, 0, 1)] = 3.0;
  theta[packed_index_gamma2(spec, 1, 0)] = 4.0;
  theta[packed_index_beta(spec, 2, 1, 1)] = 5.0;
  Parameters q = Parameters::unpack(spec, theta);
  CHECK(q.alpha[1] == 1.0);
  CHECK(q.gamma0(1, 0) == 2.0);
  CHECK(q.gamma1(0, 1) == 3.0);
  CHECK(q.gamma2(1, 0) == 4.0);
  CHECK(q.beta[2](1, 1) == 5.0);
}

TEST_CASE("LoglikEvaluator matches the free function") {
  SplitMix64 rng(601);
  auto t = random_tiny_instance(rng, 2, 3);
  LoglikEvaluator eval(t.data, t.spec);
  CHECK(eval(t.params) == total_loglik(t.data, t.params));
  CHECK(eval.eval_packed(t.params.pack()) == total_loglik(t.data, t.params));
}

TEST_CASE("dataset validation catches malformed inputs") {
  ModelSpec spec = ModelSpec::binary(2, 2, 1, 0, 1);
  Dataset d;
  Site s;
  s.id = "a";
  s.z = {0.5};
  s.members.push_back(Individual{{1, 2}, {}});
  d.sites.push_back(s);
  CHECK_NOTHROW(d.validate(spec));

  Dataset bad = d;
  bad.sites[0].members[0].y[1] = 3;
  CHECK_THROWS_AS(bad.validate(spec), Error);

  Dataset empty_site = d;
  empty_site.sites[0].members.clear();
  CHECK_THROWS_AS(empty_site.validate(spec), Error);
}
