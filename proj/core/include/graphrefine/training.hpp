#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "graphrefine/amsgrad.hpp"
#include "graphrefine/gnn.hpp"
#include "graphrefine/graph.hpp"
#include "graphrefine/loss.hpp"
#include "graphrefine/mfn.hpp"

namespace graphrefine {

enum class ModelKind { mfn, gnn };

struct TrainConfig {
  int epochs = 2000;  // 500 is the usual choice for the GNN
  std::size_t batch_size = 12;
  std::size_t block_size = 500;  // MFN only
  std::uint64_t seed = 0;
  AmsgradHyper optimizer;
  int mfn_layers = 10;
  std::size_t gnn_channels = 8;
  std::size_t gnn_layers = 2;
  double dropout = 0.5;
  int jobs = 1;  // worker threads for per-graph gradients; results do not depend on it

  /// Throws ParameterError for non-positive counts.
  void validate() const;
  static TrainConfig mfn_defaults();
  static TrainConfig gnn_defaults();
};

struct LossCurve {
  std::vector<double> mean_loss;  // per epoch, averaged over graphs
  std::vector<double> best_loss;  // running minimum of mean_loss
};

/// Called once per finished epoch (0-based) with that epoch's mean loss.
using EpochCallback = std::function<void(int epoch, double mean_loss)>;

struct MfnTrainResult {
  MfnParams params;  // parameters of the epoch with the lowest mean loss
  LossCurve curve;
};

struct GnnTrainResult {
  GnnParams params;
  LossCurve curve;
};

/// Small uniform values in [-0.01, 0.01], deterministic given seed.
MfnParams init_mfn(std::size_t feature_dim, std::uint64_t seed);

/// Every graph must carry adjacency_ref (InputError otherwise).
MfnTrainResult train_mfn(std::span<const GraphInstance> dataset, const TrainConfig& config,
                         const EpochCallback& on_epoch = {});
GnnTrainResult train_gnn(std::span<const GraphInstance> dataset, const TrainConfig& config,
                         const EpochCallback& on_epoch = {});

/// Inference on a whole graph (no blocks, dropout off).
ConnectivityMatrix predict_mfn(const GraphInstance& graph, const MfnParams& params, int layers = 10);
ConnectivityMatrix predict_gnn(const GraphInstance& graph, const GnnParams& params);

/// Dice loss of one graph and its gradient in the flat parameter layout.
/// The MFN variant splits the graph into blocks of `block_size` nodes.
DiffValue mfn_loss_gradient(const GraphInstance& graph, const MfnParams& params, int layers,
                            std::size_t block_size);
DiffValue gnn_loss_gradient(const GraphInstance& graph, const GnnParams& params, GnnMode mode,
                            std::uint64_t dropout_seed);

}  // namespace graphrefine
