#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace graphrefine {

using Vec3 = std::array<double, 3>;

/// Number of Gaussian feature components per node (x, y, z, r, vx, vy, vz).
inline constexpr std::size_t kGaussianDim = 7;
/// Model input width: the 7 means followed by the 7 variances.
inline constexpr std::size_t kNodeFeatureDim = 2 * kGaussianDim;

/// Per-node Gaussian summary produced by preprocessing.
struct NodeFeature {
  std::array<double, kGaussianDim> mu{};   // x, y, z (mm), r (mm), vx, vy, vz
  std::array<double, kGaussianDim> var{};  // per-component variance, >= 0

  Vec3 position() const { return {mu[0], mu[1], mu[2]}; }
  double radius() const { return mu[3]; }
  Vec3 orientation() const { return {mu[4], mu[5], mu[6]}; }

  bool operator==(const NodeFeature&) const = default;
};

/// Undirected edge in canonical form (i < j).
struct Edge {
  int i = 0;
  int j = 0;

  static Edge canonical(int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; }
  auto operator<=>(const Edge&) const = default;
};

/// Sparse symmetric boolean matrix with zero diagonal.
class Adjacency {
 public:
  Adjacency() = default;
  explicit Adjacency(std::size_t node_count);

  /// Throws InputError on self loops, out-of-range indices or duplicates.
  static Adjacency from_edges(std::size_t node_count, std::span<const Edge> edges);

  std::size_t node_count() const { return neighbors_.size(); }
  std::size_t edge_count() const { return edge_count_; }

  /// Inserts {i, j}; returns false if it was already present.
  bool add_edge(int i, int j);
  bool has_edge(int i, int j) const;

  /// Neighbours of i in ascending order.
  std::span<const int> neighbors(int i) const;
  std::size_t degree(int i) const { return neighbors(i).size(); }

  /// All edges, canonical and sorted.
  std::vector<Edge> edges() const;

  bool operator==(const Adjacency&) const = default;

 private:
  void check_index(int i) const;

  std::vector<std::vector<int>> neighbors_;
  std::size_t edge_count_ = 0;
};

/// Binarized, symmetric model output.
using RefinedAdjacency = Adjacency;

/// Unit of training and evaluation.
struct GraphInstance {
  std::string id;
  std::vector<NodeFeature> nodes;
  Adjacency adjacency_in;
  std::optional<Adjacency> adjacency_ref;

  std::size_t node_count() const { return nodes.size(); }

  /// Throws InputError if sizes disagree or a radius is non-positive.
  void validate() const;
};

/// Directed view of an input adjacency. Pair p = (source(p), target(p)) for
/// every ordered pair of neighbours; pairs of one source are contiguous and
/// sorted by target.
class DirectedSupport {
 public:
  DirectedSupport() = default;
  explicit DirectedSupport(const Adjacency& adjacency);

  /// Undirected adjacency with the same support.
  Adjacency to_adjacency() const;

  std::size_t node_count() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t pair_count() const { return targets_.size(); }

  std::size_t begin(int k) const { return offsets_[static_cast<std::size_t>(k)]; }
  std::size_t end(int k) const { return offsets_[static_cast<std::size_t>(k) + 1]; }
  std::size_t degree(int k) const { return end(k) - begin(k); }

  int source(std::size_t p) const { return sources_[p]; }
  int target(std::size_t p) const { return targets_[p]; }
  /// Index of the pair (target(p), source(p)).
  std::size_t reverse(std::size_t p) const { return reverse_[p]; }

  std::optional<std::size_t> find(int k, int l) const;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<int> sources_;
  std::vector<int> targets_;
  std::vector<std::size_t> reverse_;
};

/// Per-directed-pair connection probabilities alpha_kl, zero off support.
class ConnectivityMatrix {
 public:
  ConnectivityMatrix() = default;
  ConnectivityMatrix(std::shared_ptr<const DirectedSupport> support, double fill);
  /// Throws InputError if sizes disagree or an entry leaves [0, 1].
  ConnectivityMatrix(std::shared_ptr<const DirectedSupport> support, std::vector<double> values);

  const DirectedSupport& support() const { return *support_; }
  const std::shared_ptr<const DirectedSupport>& support_ptr() const { return support_; }

  /// alpha_kl; 0 for pairs outside the support and on the diagonal.
  double operator()(int k, int l) const;

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

 private:
  std::shared_ptr<const DirectedSupport> support_;
  std::vector<double> values_;
};

/// Features scaled per graph and per dimension to [-1, 1], plus the raw
/// positions and radii needed by pairwise features and metrics.
struct NormalizedFeatures {
  std::size_t dim = 0;
  std::vector<double> values;  // node-major, node_count() x dim
  std::vector<Vec3> raw_position;
  std::vector<double> raw_radius;

  std::size_t node_count() const { return raw_radius.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * dim, dim);
  }
};

/// Affine map of one dimension sending its min to -1 and max to +1.
/// Constant dimensions map to 0.
std::vector<double> normalize_dimension(std::span<const double> values);

/// Throws InputError for an empty graph.
NormalizedFeatures normalize_features(const GraphInstance& graph);

struct PairwiseFeature {
  std::vector<double> absdiff;
  std::vector<double> prod;
};

/// |x_i - x_j| element-wise (positional dims replaced by
/// |p_i - p_j| / (r_i + r_j) on raw millimetre values) and x_i * x_j.
PairwiseFeature pairwise_feature(std::span<const double> x_i, std::span<const double> x_j,
                                 const Vec3& p_i, const Vec3& p_j, double r_i, double r_j);
PairwiseFeature pairwise_feature(const NormalizedFeatures& features, int i, int j);

/// Graph ready for either model: support and normalized features.
class PreparedGraph {
 public:
  explicit PreparedGraph(const GraphInstance& graph);
  PreparedGraph(std::shared_ptr<const DirectedSupport> support, NormalizedFeatures features);

  const DirectedSupport& support() const { return *support_; }
  const std::shared_ptr<const DirectedSupport>& support_ptr() const { return support_; }
  const NormalizedFeatures& features() const { return features_; }
  std::size_t node_count() const { return features_.node_count(); }
  std::size_t feature_dim() const { return features_.dim; }

  /// Induced subgraph on `nodes` (in the given order). Features keep the
  /// parent's normalization.
  PreparedGraph induced(std::span<const int> nodes) const;

 private:
  std::shared_ptr<const DirectedSupport> support_;
  NormalizedFeatures features_;
};

/// Symmetric k-nearest-neighbour graph (union of directed neighbour sets).
/// Ties are broken by ascending node index.
Adjacency build_knn_adjacency(std::span<const Vec3> positions, int k);

/// a_ij = 1 iff alpha_ij > threshold and alpha_ji > threshold.
RefinedAdjacency binarize_connectivity(const ConnectivityMatrix& alpha, double threshold = 0.5);

struct MstResult {
  Adjacency tree;
  std::size_t spanned_nodes = 0;   // nodes touched by candidate edges
  std::size_t components = 0;      // components among spanned nodes
  bool disconnected = false;       // more than one component: a forest
  bool empty_candidates = false;
};

/// Kruskal over Euclidean edge lengths; ties broken by (i, j).
MstResult minimum_spanning_tree(std::span<const Vec3> positions, std::span<const Edge> candidates);

struct Components {
  std::size_t count = 0;
  std::vector<int> labels;  // labels in [0, count), numbered by first node
};

Components connected_components(const Adjacency& adjacency);

double distance(const Vec3& a, const Vec3& b);

}  // namespace graphrefine
