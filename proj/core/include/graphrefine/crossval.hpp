#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "graphrefine/metrics.hpp"
#include "graphrefine/training.hpp"

namespace graphrefine {

/// Test folds over graph indices [0, n): a seeded shuffle cut into `folds`
/// runs whose sizes differ by at most one. Indices are sorted within each
/// fold. Throws ParameterError if folds < 1 or n < folds.
std::vector<std::vector<std::size_t>> crossval_split(std::size_t n, std::size_t folds,
                                                     std::uint64_t seed);

struct FoldResult {
  std::vector<std::size_t> test;
  std::vector<MetricReport> reports;  // one per test graph, in `test` order
  LossCurve curve;
  std::vector<double> params;  // flat weights of the model trained for this fold
  double mean_dice = 0.0;
};

struct CrossvalResult {
  std::vector<FoldResult> folds;
  double mean_dice = 0.0;  // over all held-out graphs
};

/// Trains on the complement of each fold (fold f uses seed
/// derive_seed(config.seed, f)) and evaluates the binarized prediction on
/// the fold.
CrossvalResult run_crossval(std::span<const GraphInstance> dataset, ModelKind model,
                            const TrainConfig& config, std::size_t folds,
                            const std::function<void(std::size_t fold)>& on_fold = {});

}  // namespace graphrefine
