#include "graphrefine/mfn_oracle.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "graphrefine/error.hpp"

namespace graphrefine {

double brute_force_elbo(const ConnectivityMatrix& alpha, const MfnGraph& graph,
                        const MfnParams& params) {
  const auto& s = graph.support();
  const std::size_t n_pairs = s.pair_count();
  if (n_pairs > kMaxOraclePairs) {
    throw CapacityError("brute_force_elbo: " + std::to_string(n_pairs) +
                        " directed pairs exceed the enumeration cap of " +
                        std::to_string(kMaxOraclePairs));
  }
  const auto& features = graph.graph().features();
  const auto a = alpha.values();

  std::vector<PairwiseFeature> edge_features;
  std::vector<std::size_t> edge_pairs;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    if (s.source(p) < s.target(p)) {
      edge_pairs.push_back(p);
      edge_features.push_back(pairwise_feature(features, s.source(p), s.target(p)));
    }
  }

  std::array<bool, kMaxOraclePairs> state{};
  double total = 0.0;
  const std::uint64_t count = std::uint64_t{1} << n_pairs;
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    double q = 1.0;
    for (std::size_t p = 0; p < n_pairs; ++p) {
      state[p] = ((mask >> p) & 1U) != 0;
      q *= state[p] ? a[p] : 1.0 - a[p];
    }
    if (q == 0.0) continue;

    double energy = 0.0;
    for (std::size_t k = 0; k < s.node_count(); ++k) {
      const std::span<const bool> config(state.data() + s.begin(static_cast<int>(k)),
                                         s.degree(static_cast<int>(k)));
      energy += node_potential(config, features.row(k), params);
    }
    for (std::size_t e = 0; e < edge_pairs.size(); ++e) {
      const std::size_t p = edge_pairs[e];
      energy += pairwise_potential(state[p], state[s.reverse(p)], edge_features[e], params);
    }
    total += q * energy - q * std::log(q);
  }
  return total;
}

}  // namespace graphrefine
