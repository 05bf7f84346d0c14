#pragma once

#include <cstddef>

#include "graphrefine/graph.hpp"
#include "graphrefine/mfn.hpp"

namespace graphrefine {

/// Largest support the enumeration oracle accepts (2^20 configurations).
inline constexpr std::size_t kMaxOraclePairs = 20;

/// ELBO by explicit enumeration of every latent configuration S:
/// sum_S q(S) [sum_i phi_i + sum_(i,j) phi_ij] - sum_S q(S) ln q(S).
/// Independent of the closed form; throws CapacityError above
/// kMaxOraclePairs directed pairs.
double brute_force_elbo(const ConnectivityMatrix& alpha, const MfnGraph& graph,
                        const MfnParams& params);

}  // namespace graphrefine
