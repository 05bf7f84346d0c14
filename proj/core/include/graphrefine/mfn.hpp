#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "graphrefine/graph.hpp"

namespace graphrefine {

/// Potential weights [lambda, beta_0..beta_2, a, eta, nu], shared by all
/// MFN layers.
struct MfnParams {
  double lambda = 0.0;
  std::array<double, 3> beta{};
  std::vector<double> a;
  std::vector<double> eta;
  std::vector<double> nu;

  static MfnParams zeros(std::size_t feature_dim);

  std::size_t feature_dim() const { return a.size(); }

  /// Flat layout: lambda, beta0, beta1, beta2, a[0..F), eta[0..F), nu[0..F).
  std::vector<double> flatten() const;
  static MfnParams unflatten(std::span<const double> flat, std::size_t feature_dim);

  bool operator==(const MfnParams&) const = default;
};

/// 4 + 3F. Throws ParameterError for F == 0.
std::size_t mfn_param_count(std::size_t feature_dim);

/// phi_i for one assignment of s_ij over j in N_i.
double node_potential(std::span<const bool> config, std::span<const double> x_i,
                      const MfnParams& params);

/// phi_ij for one assignment of (s_ij, s_ji).
double pairwise_potential(bool s_ij, bool s_ji, const PairwiseFeature& feature,
                          const MfnParams& params);

/// Prepared graph plus per-pair pairwise features, which do not depend on
/// the parameters and are computed once.
class MfnGraph {
 public:
  explicit MfnGraph(PreparedGraph graph);

  const PreparedGraph& graph() const { return graph_; }
  const DirectedSupport& support() const { return graph_.support(); }
  std::size_t feature_dim() const { return graph_.feature_dim(); }

  std::span<const double> absdiff(std::size_t pair) const;
  std::span<const double> prod(std::size_t pair) const;

 private:
  PreparedGraph graph_;
  std::vector<double> absdiff_;
  std::vector<double> prod_;
};

/// Mean-field update argument for the directed pair (k, l). Throws
/// SupportError if k == l or l is not a neighbour of k.
double gamma(int k, int l, const ConnectivityMatrix& alpha, const MfnGraph& graph,
             const MfnParams& params);

/// ELBO up to the additive ln Z constant.
double elbo(const ConnectivityMatrix& alpha, const MfnGraph& graph, const MfnParams& params);

struct ElboTrace {
  std::vector<double> values;  // after init, then after each layer
};

enum class MfnSchedule {
  synchronous,  // every alpha of layer t+1 from layer t (the network)
  sequential,   // coordinate ascent in pair order, in place
};

struct MfnOptions {
  int layers = 10;
  MfnSchedule schedule = MfnSchedule::synchronous;
  bool record_elbo = true;
};

struct MfnForwardResult {
  ConnectivityMatrix alpha;                 // final layer
  ElboTrace trace;                          // empty unless record_elbo
  std::vector<std::vector<double>> layers;  // layer 0 (init) .. T
};

/// T layers of mean-field updates. alpha_init defaults to 0.5 everywhere.
MfnForwardResult mfn_forward(const MfnGraph& graph, const MfnParams& params,
                             const MfnOptions& options = {},
                             std::optional<ConnectivityMatrix> alpha_init = std::nullopt);

/// Reverse pass through a synchronous forward: returns dL/dparams in the
/// flat layout, given dL/dalpha at the final layer.
std::vector<double> mfn_backward(const MfnGraph& graph, const MfnParams& params,
                                 const MfnForwardResult& forward,
                                 std::span<const double> dloss_dalpha);

/// All gamma_kl at once, in pair order.
std::vector<double> all_gammas(const MfnGraph& graph, const MfnParams& params,
                               std::span<const double> alpha);

}  // namespace graphrefine
