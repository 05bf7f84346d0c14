#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "graphrefine/graph.hpp"
#include "graphrefine/mfn.hpp"
#include "graphrefine/rng.hpp"

namespace graphrefine {

/// Random graph with 2..6 nodes and at most `max_pairs` directed pairs
/// (at least one edge), random Gaussian features and a reference
/// adjacency drawn from the input edges.
GraphInstance random_micro_graph(Rng& rng, std::size_t max_pairs = 10);

/// Every weight uniform in [-scale, scale].
MfnParams random_mfn_params(Rng& rng, std::size_t feature_dim, double scale = 1.0);

/// Alpha uniform in [lo, hi] on the graph's support.
ConnectivityMatrix random_alpha(Rng& rng, const DirectedSupport& support, double lo = 0.05,
                                double hi = 0.95);

struct CheckResult {
  std::string name;
  double tolerance = 0.0;
  double measured = 0.0;
  bool passed = false;
};

struct SelfcheckOptions {
  std::uint64_t seed = 20190101;
  /// Debug hook: flips the sign of gamma inside the stationarity check.
  bool corrupt_gamma_sign = false;
};

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& options = {});

/// One line per check: PASS/FAIL, name, tolerance and measured error.
void print_checks(std::ostream& out, const std::vector<CheckResult>& checks);

}  // namespace graphrefine
