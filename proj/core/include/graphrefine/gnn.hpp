#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "graphrefine/graph.hpp"
#include "graphrefine/rng.hpp"

namespace graphrefine {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class GnnMode { train, eval };

/// Two-layer perceptron with ReLU, dropout between the layers, a skip path
/// and layer normalization of (main + skip):
///   LN(W2 drop(relu(W1 x + b1)) + b2 + skip(x))
/// The skip path is the identity when in == out, a learned affine map
/// otherwise.
struct MlpBlock {
  Matrix w1;  // in x hidden
  Vector b1;
  Matrix w2;  // hidden x out
  Vector b2;
  Matrix proj;  // in x out; empty when the skip is the identity
  Vector proj_bias;
  Vector gain;  // layer norm
  Vector shift;

  std::size_t in_dim() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(w2.cols()); }
  bool has_projection() const { return proj.size() > 0; }
  std::size_t parameter_count() const;
};

/// Encoder blocks and the linear decoder. With `layers` = L the encoder is
/// g_n, g_n2e[0], then (g_e2n[l-1], g_n2e[l]) for l = 1..L-1; the default
/// L = 2 has receptive field two.
struct GnnParams {
  MlpBlock node_embed;                  // g_n: F -> E
  std::vector<MlpBlock> node_to_edge;   // g_n2e: 2E -> E, one per layer
  std::vector<MlpBlock> edge_to_node;   // g_e2n: E -> E, one per layer after the first
  Vector decoder_weight;                // E
  double decoder_bias = 0.0;
  double dropout = 0.5;

  std::size_t feature_dim() const { return node_embed.in_dim(); }
  std::size_t channels() const { return node_embed.out_dim(); }
  std::size_t layers() const { return node_to_edge.size(); }
  std::size_t parameter_count() const;

  /// Fixed order: g_n, g_n2e[0], then g_e2n[l-1], g_n2e[l], then decoder.
  /// Within a block: w1, b1, w2, b2, proj, proj_bias, gain, shift.
  std::vector<double> flatten() const;
  /// Overwrites every weight from `flat`, which must match this shape.
  void assign(std::span<const double> flat);
};

/// Scaled-uniform weights (limit sqrt(6 / (fan_in + fan_out))), zero
/// biases, unit layer-norm gains. Deterministic given seed.
GnnParams init_gnn(std::size_t feature_dim, std::size_t channels, std::uint64_t seed,
                   std::size_t layers = 2, double dropout = 0.5);

/// Single input vector through one block. `rng` is only used in train mode.
Vector mlp_forward(const MlpBlock& block, const Vector& input, GnnMode mode, Rng* rng,
                   double dropout);

/// Edge embeddings h^(L)_(i,j), one row per directed pair in support order.
Matrix encode(const PreparedGraph& graph, const GnnParams& params, GnnMode mode, Rng* rng);

/// alpha_ij = sigmoid(w . h_(i,j) + b) per directed pair.
ConnectivityMatrix decode(const Matrix& edge_embeddings, const GnnParams& params,
                          const std::shared_ptr<const DirectedSupport>& support);

/// decode(encode(...)) keeping the intermediate values needed by
/// gnn_backward.
struct GnnForward {
  struct BlockCache {
    Matrix input;
    Matrix pre_relu;
    Matrix mask;       // dropout multipliers (empty in eval mode)
    Matrix hidden;     // after ReLU and dropout
    Matrix normalized; // layer-norm output before gain/shift
    Vector inv_std;
  };

  std::vector<BlockCache> blocks;  // same order as GnnParams::flatten
  std::vector<Matrix> node_states;
  Matrix edge_embedding;
  ConnectivityMatrix alpha;
};

GnnForward gnn_forward(const PreparedGraph& graph, const GnnParams& params, GnnMode mode,
                       Rng* rng);

/// dL/dparams (flat layout) given dL/dalpha per directed pair.
std::vector<double> gnn_backward(const PreparedGraph& graph, const GnnParams& params,
                                 const GnnForward& forward, std::span<const double> dloss_dalpha);

}  // namespace graphrefine
