#pragma once

// Post-hoc label alignment. Mixture likelihoods are invariant under class
// relabeling, so replication estimates are only comparable to the generating
// truth after finding the permutation (at each level) that matches estimated
// response probabilities / compositions to the truth. SEs are never permuted;
// switched replications get their SEs flagged unusable downstream.

#include <vector>

#include "estimator.hpp"
#include "model.hpp"

namespace npmlca {

// K x L matrix of the top-category response probability per indicator and
// level-1 class (for binary indicators this is the usual CRP).
Matrix crp_matrix(const Parameters& params);

// Exhaustive search over all L! column permutations minimizing the summed
// squared difference to the true CRP matrix; ties break toward the
// lexicographically smallest permutation. perm[c] is the estimated column
// matching true class c.
std::vector<int> find_level1_permutation(const Matrix& est_crp, const Matrix& true_crp);

// Matches estimated level-2 classes to the truth by their level-1 class
// composition: for each estimated class, the average marginal level-1
// posterior over the individuals of its modally assigned sites (falling back
// to the model-implied composition when a class has no modal site); for each
// true class, the average model-implied membership over the dataset's
// covariates. Requires the fit to already be level-1 aligned.
std::vector<int> find_level2_permutation(const FitResult& fit_aligned1, const Parameters& truth,
                                         const Dataset& data);

// Applies a relabeling to a full fit: parameters (via permute_parameters),
// posterior columns, and modal assignments. The log-likelihood is unchanged.
// SEs and covariance are dropped from the result when the relabeling is not
// the identity, since they cannot be permuted.
FitResult relabel(const FitResult& fit, const Relabeling& r);

}  // namespace npmlca
