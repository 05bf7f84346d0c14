#include "graphrefine/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <string>
#include <tuple>
#include <unordered_map>

#include "graphrefine/error.hpp"

namespace graphrefine {

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// ---------------------------------------------------------------- Adjacency

Adjacency::Adjacency(std::size_t node_count) : neighbors_(node_count) {}

Adjacency Adjacency::from_edges(std::size_t node_count, std::span<const Edge> edges) {
  Adjacency adj(node_count);
  for (const Edge& e : edges) {
    if (e.i == e.j) {
      throw InputError("self edge at node " + std::to_string(e.i));
    }
    if (!adj.add_edge(e.i, e.j)) {
      throw InputError("duplicate edge " + std::to_string(e.i) + "-" + std::to_string(e.j));
    }
  }
  return adj;
}

void Adjacency::check_index(int i) const {
  if (i < 0 || static_cast<std::size_t>(i) >= neighbors_.size()) {
    throw InputError("node index " + std::to_string(i) + " out of range [0, " +
                     std::to_string(neighbors_.size()) + ")");
  }
}

bool Adjacency::add_edge(int i, int j) {
  check_index(i);
  check_index(j);
  if (i == j) throw InputError("self loops are not allowed (node " + std::to_string(i) + ")");
  auto& ni = neighbors_[static_cast<std::size_t>(i)];
  auto it = std::lower_bound(ni.begin(), ni.end(), j);
  if (it != ni.end() && *it == j) return false;
  ni.insert(it, j);
  auto& nj = neighbors_[static_cast<std::size_t>(j)];
  nj.insert(std::lower_bound(nj.begin(), nj.end(), i), i);
  ++edge_count_;
  return true;
}

bool Adjacency::has_edge(int i, int j) const {
  if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= neighbors_.size() ||
      static_cast<std::size_t>(j) >= neighbors_.size()) {
    return false;
  }
  const auto& ni = neighbors_[static_cast<std::size_t>(i)];
  return std::binary_search(ni.begin(), ni.end(), j);
}

std::span<const int> Adjacency::neighbors(int i) const {
  check_index(i);
  return neighbors_[static_cast<std::size_t>(i)];
}

std::vector<Edge> Adjacency::edges() const {
  std::vector<Edge> out;
  out.reserve(edge_count_);
  for (std::size_t i = 0; i < neighbors_.size(); ++i) {
    for (int j : neighbors_[i]) {
      if (static_cast<std::size_t>(j) > i) out.push_back({static_cast<int>(i), j});
    }
  }
  return out;
}

// ------------------------------------------------------------ GraphInstance

void GraphInstance::validate() const {
  const std::size_t n = nodes.size();
  if (adjacency_in.node_count() != n) {
    throw InputError("graph '" + id + "': input adjacency has " +
                     std::to_string(adjacency_in.node_count()) + " nodes, expected " +
                     std::to_string(n));
  }
  if (adjacency_ref && adjacency_ref->node_count() != n) {
    throw InputError("graph '" + id + "': reference adjacency size mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = nodes[i];
    for (double v : node.mu) {
      if (!std::isfinite(v)) throw InputError("graph '" + id + "': non-finite feature mean");
    }
    for (double v : node.var) {
      if (!std::isfinite(v) || v < 0.0) {
        throw InputError("graph '" + id + "': variance must be finite and non-negative");
      }
    }
    if (!(node.radius() > 0.0)) {
      throw InputError("graph '" + id + "': node " + std::to_string(i) +
                       " has non-positive radius");
    }
  }
}

// ---------------------------------------------------------- DirectedSupport

DirectedSupport::DirectedSupport(const Adjacency& adjacency) {
  const std::size_t n = adjacency.node_count();
  offsets_.assign(n + 1, 0);
  for (std::size_t k = 0; k < n; ++k) {
    offsets_[k + 1] = offsets_[k] + adjacency.degree(static_cast<int>(k));
  }
  sources_.resize(offsets_[n]);
  targets_.resize(offsets_[n]);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = offsets_[k];
    for (int l : adjacency.neighbors(static_cast<int>(k))) {
      sources_[p] = static_cast<int>(k);
      targets_[p] = l;
      ++p;
    }
  }
  reverse_.resize(targets_.size());
  for (std::size_t p = 0; p < targets_.size(); ++p) {
    reverse_[p] = *find(targets_[p], sources_[p]);
  }
}

Adjacency DirectedSupport::to_adjacency() const {
  Adjacency adj(node_count());
  for (std::size_t p = 0; p < pair_count(); ++p) {
    if (sources_[p] < targets_[p]) adj.add_edge(sources_[p], targets_[p]);
  }
  return adj;
}

std::optional<std::size_t> DirectedSupport::find(int k, int l) const {
  if (k < 0 || static_cast<std::size_t>(k) >= node_count()) return std::nullopt;
  const auto first = targets_.begin() + static_cast<std::ptrdiff_t>(begin(k));
  const auto last = targets_.begin() + static_cast<std::ptrdiff_t>(end(k));
  const auto it = std::lower_bound(first, last, l);
  if (it == last || *it != l) return std::nullopt;
  return static_cast<std::size_t>(it - targets_.begin());
}

// ------------------------------------------------------- ConnectivityMatrix

ConnectivityMatrix::ConnectivityMatrix(std::shared_ptr<const DirectedSupport> support,
                                       double fill)
    : support_(std::move(support)), values_(support_->pair_count(), fill) {}

ConnectivityMatrix::ConnectivityMatrix(std::shared_ptr<const DirectedSupport> support,
                                       std::vector<double> values)
    : support_(std::move(support)), values_(std::move(values)) {
  if (values_.size() != support_->pair_count()) {
    throw InputError("connectivity values: expected " + std::to_string(support_->pair_count()) +
                     " entries, got " + std::to_string(values_.size()));
  }
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("connectivity entry outside [0, 1]");
  }
}

double ConnectivityMatrix::operator()(int k, int l) const {
  const auto p = support_->find(k, l);
  return p ? values_[*p] : 0.0;
}

// ------------------------------------------------------------ normalization

std::vector<double> normalize_dimension(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) return out;
  const double scale = 2.0 / (hi - lo);
  for (std::size_t i = 0; i < values.size(); ++i) {
    // Endpoints are pinned so that extremes map to exactly -1 and +1.
    if (values[i] == lo) {
      out[i] = -1.0;
    } else if (values[i] == hi) {
      out[i] = 1.0;
    } else {
      out[i] = (values[i] - lo) * scale - 1.0;
    }
  }
  return out;
}

NormalizedFeatures normalize_features(const GraphInstance& graph) {
  const std::size_t n = graph.node_count();
  if (n == 0) throw InputError("cannot normalize features of an empty graph '" + graph.id + "'");

  NormalizedFeatures out;
  out.dim = kNodeFeatureDim;
  out.values.assign(n * kNodeFeatureDim, 0.0);
  out.raw_position.resize(n);
  out.raw_radius.resize(n);

  std::vector<double> column(n);
  for (std::size_t d = 0; d < kNodeFeatureDim; ++d) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& node = graph.nodes[i];
      column[i] = d < kGaussianDim ? node.mu[d] : node.var[d - kGaussianDim];
    }
    const auto scaled = normalize_dimension(column);
    for (std::size_t i = 0; i < n; ++i) out.values[i * kNodeFeatureDim + d] = scaled[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.raw_position[i] = graph.nodes[i].position();
    out.raw_radius[i] = graph.nodes[i].radius();
  }
  return out;
}

// ------------------------------------------------------ pairwise features

PairwiseFeature pairwise_feature(std::span<const double> x_i, std::span<const double> x_j,
                                 const Vec3& p_i, const Vec3& p_j, double r_i, double r_j) {
  if (x_i.size() != x_j.size()) throw InputError("pairwise feature: dimension mismatch");
  const double radius_sum = r_i + r_j;
  if (!(radius_sum != 0.0) || !std::isfinite(radius_sum)) {
    throw DegenerateRadiusError("pairwise feature: r_i + r_j must be non-zero");
  }
  PairwiseFeature f;
  f.absdiff.resize(x_i.size());
  f.prod.resize(x_i.size());
  for (std::size_t d = 0; d < x_i.size(); ++d) {
    f.absdiff[d] = d < 3 ? std::abs(p_i[d] - p_j[d]) / radius_sum : std::abs(x_i[d] - x_j[d]);
    f.prod[d] = x_i[d] * x_j[d];
  }
  return f;
}

PairwiseFeature pairwise_feature(const NormalizedFeatures& features, int i, int j) {
  const auto a = static_cast<std::size_t>(i);
  const auto b = static_cast<std::size_t>(j);
  return pairwise_feature(features.row(a), features.row(b), features.raw_position[a],
                          features.raw_position[b], features.raw_radius[a],
                          features.raw_radius[b]);
}

// ------------------------------------------------------------ PreparedGraph

PreparedGraph::PreparedGraph(const GraphInstance& graph)
    : support_(std::make_shared<const DirectedSupport>(graph.adjacency_in)),
      features_(normalize_features(graph)) {
  if (graph.adjacency_in.node_count() != graph.node_count()) {
    throw InputError("graph '" + graph.id + "': adjacency/node count mismatch");
  }
}

PreparedGraph::PreparedGraph(std::shared_ptr<const DirectedSupport> support,
                             NormalizedFeatures features)
    : support_(std::move(support)), features_(std::move(features)) {
  if (support_->node_count() != features_.node_count()) {
    throw InputError("prepared graph: support/feature node count mismatch");
  }
}

PreparedGraph PreparedGraph::induced(std::span<const int> nodes) const {
  std::unordered_map<int, int> local;
  local.reserve(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) local.emplace(nodes[i], static_cast<int>(i));

  Adjacency sub(nodes.size());
  NormalizedFeatures f;
  f.dim = features_.dim;
  f.values.reserve(nodes.size() * f.dim);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const int g = nodes[i];
    const auto row = features_.row(static_cast<std::size_t>(g));
    f.values.insert(f.values.end(), row.begin(), row.end());
    f.raw_position.push_back(features_.raw_position[static_cast<std::size_t>(g)]);
    f.raw_radius.push_back(features_.raw_radius[static_cast<std::size_t>(g)]);
    for (std::size_t p = support_->begin(g); p < support_->end(g); ++p) {
      const auto it = local.find(support_->target(p));
      if (it != local.end() && it->second > static_cast<int>(i)) {
        sub.add_edge(static_cast<int>(i), it->second);
      }
    }
  }
  return PreparedGraph(std::make_shared<const DirectedSupport>(sub), std::move(f));
}

// ---------------------------------------------------------------- k-NN

Adjacency build_knn_adjacency(std::span<const Vec3> positions, int k) {
  if (k <= 0) throw ParameterError("k must be positive, got " + std::to_string(k));
  const std::size_t n = positions.size();
  if (n < 2) throw InputError("k-NN graph needs at least 2 nodes");
  for (const auto& p : positions) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
      throw InputError("k-NN graph: non-finite coordinate");
    }
  }

  Adjacency adj(n);
  const std::size_t kk = std::min(static_cast<std::size_t>(k), n - 1);
  std::vector<std::pair<double, int>> order;
  order.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    order.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = positions[i][0] - positions[j][0];
      const double dy = positions[i][1] - positions[j][1];
      const double dz = positions[i][2] - positions[j][2];
      order.emplace_back(dx * dx + dy * dy + dz * dz, static_cast<int>(j));
    }
    // (distance, index) ordering gives the ascending-index tie-break.
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk),
                      order.end());
    for (std::size_t m = 0; m < kk; ++m) adj.add_edge(static_cast<int>(i), order[m].second);
  }
  return adj;
}

// ------------------------------------------------------------ binarization

RefinedAdjacency binarize_connectivity(const ConnectivityMatrix& alpha, double threshold) {
  const auto& s = alpha.support();
  Adjacency out(s.node_count());
  const auto v = alpha.values();
  for (std::size_t p = 0; p < s.pair_count(); ++p) {
    if (s.source(p) < s.target(p) && v[p] > threshold && v[s.reverse(p)] > threshold) {
      out.add_edge(s.source(p), s.target(p));
    }
  }
  return out;
}

// --------------------------------------------------------------- spanning

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<unsigned> rank_;
};

}  // namespace

MstResult minimum_spanning_tree(std::span<const Vec3> positions,
                                std::span<const Edge> candidates) {
  const std::size_t n = positions.size();
  MstResult result;
  result.tree = Adjacency(n);
  if (candidates.empty()) {
    result.empty_candidates = true;
    return result;
  }

  std::vector<std::tuple<double, int, int>> weighted;
  weighted.reserve(candidates.size());
  std::vector<char> touched(n, 0);
  for (const Edge& e : candidates) {
    const Edge c = Edge::canonical(e.i, e.j);
    if (c.i < 0 || static_cast<std::size_t>(c.j) >= n || c.i == c.j) {
      throw InputError("spanning tree: invalid candidate edge");
    }
    weighted.emplace_back(distance(positions[static_cast<std::size_t>(c.i)],
                                   positions[static_cast<std::size_t>(c.j)]),
                          c.i, c.j);
    touched[static_cast<std::size_t>(c.i)] = 1;
    touched[static_cast<std::size_t>(c.j)] = 1;
  }
  std::sort(weighted.begin(), weighted.end());

  DisjointSets sets(n);
  for (const auto& [w, i, j] : weighted) {
    if (sets.unite(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) {
      result.tree.add_edge(i, j);
    }
  }
  result.spanned_nodes = static_cast<std::size_t>(std::count(touched.begin(), touched.end(), 1));
  result.components = result.spanned_nodes - result.tree.edge_count();
  result.disconnected = result.components > 1;
  return result;
}

Components connected_components(const Adjacency& adjacency) {
  const std::size_t n = adjacency.node_count();
  Components c;
  c.labels.assign(n, -1);
  std::queue<int> frontier;
  for (std::size_t s = 0; s < n; ++s) {
    if (c.labels[s] >= 0) continue;
    const int label = static_cast<int>(c.count++);
    c.labels[s] = label;
    frontier.push(static_cast<int>(s));
    while (!frontier.empty()) {
      const int u = frontier.front();
      frontier.pop();
      for (int v : adjacency.neighbors(u)) {
        if (c.labels[static_cast<std::size_t>(v)] < 0) {
          c.labels[static_cast<std::size_t>(v)] = label;
          frontier.push(v);
        }
      }
    }
  }
  return c;
}

}  // namespace graphrefine
