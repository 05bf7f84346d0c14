#include "graphrefine/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "graphrefine/error.hpp"
#include "graphrefine/rng.hpp"

namespace graphrefine {

namespace {

Vec3 add(const Vec3& a, const Vec3& b, double s = 1.0) {
  return {a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]};
}

Vec3 scale(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm(const Vec3& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }

Vec3 unit(const Vec3& a) { return scale(a, 1.0 / norm(a)); }

// Two unit vectors completing `d` to an orthonormal frame.
std::pair<Vec3, Vec3> frame(const Vec3& d) {
  const Vec3 helper = std::abs(d[0]) < 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
  const Vec3 u = unit(cross(d, helper));
  return {u, cross(d, u)};
}

Vec3 random_unit(Rng& rng) {
  for (;;) {
    const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = norm(v);
    if (n > 1e-12) return scale(v, 1.0 / n);
  }
}

struct TrueNode {
  Vec3 position;
  double radius;
  Vec3 direction;
  int parent;
};

struct Branch {
  int start_node;
  Vec3 direction;
  int generation;
};

class TreeBuilder {
 public:
  TreeBuilder(const TreeSpec& spec, Rng& rng) : spec_(spec), rng_(rng) {}

  std::vector<TrueNode> build() {
    const Vec3 down{0.0, 0.0, -1.0};
    nodes_.push_back({{0.0, 0.0, 0.0}, spec_.root_radius, down, -1});
    std::vector<Branch> pending{{0, down, 0}};
    // Breadth-first over branches keeps node numbering generation-ordered.
    for (std::size_t b = 0; b < pending.size(); ++b) {
      const Branch br = pending[b];
      const int end = grow(br);
      if (br.generation + 1 >= spec_.generations) continue;
      const int children = rng_.bernoulli(spec_.trifurcation_prob) ? 3 : 2;
      const auto [u, v] = frame(br.direction);
      const double azimuth = rng_.uniform(0.0, 2.0 * std::numbers::pi);
      for (int c = 0; c < children; ++c) {
        const double phi = azimuth + 2.0 * std::numbers::pi * c / children;
        const double theta =
            (spec_.bifurcation_angle + rng_.uniform(-spec_.angle_jitter, spec_.angle_jitter)) *
            std::numbers::pi / 180.0;
        const Vec3 side = add(scale(u, std::cos(phi)), v, std::sin(phi));
        const Vec3 dir = unit(add(scale(br.direction, std::cos(theta)), side, std::sin(theta)));
        pending.push_back({end, dir, br.generation + 1});
      }
    }
    return std::move(nodes_);
  }

 private:
  // Adds the nodes of one branch; returns the index of its last node.
  int grow(const Branch& br) {
    const double level = std::pow(spec_.radius_decay, br.generation);
    const double length =
        spec_.branch_length * level *
        (1.0 + rng_.uniform(-spec_.branch_length_jitter, spec_.branch_length_jitter));
    const double spacing = spec_.node_spacing * level;
    const int steps = std::max(1, static_cast<int>(std::lround(length / spacing)));
    const double r0 = spec_.root_radius * level;
    const double r1 = r0 * spec_.radius_decay;
    const Vec3 origin = nodes_[static_cast<std::size_t>(br.start_node)].position;
    int prev = br.start_node;
    for (int k = 1; k <= steps; ++k) {
      const double t = static_cast<double>(k) / steps;
      nodes_.push_back({add(origin, br.direction, t * length), r0 + t * (r1 - r0), br.direction, prev});
      prev = static_cast<int>(nodes_.size()) - 1;
    }
    return prev;
  }

  const TreeSpec& spec_;
  Rng& rng_;
  std::vector<TrueNode> nodes_;
};

NodeFeature make_feature(const Vec3& position, double radius, const Vec3& direction,
                         double noise, double variance_scale, Rng& rng) {
  NodeFeature f;
  const Vec3 p = add(position, {rng.normal(0.0, noise * radius), rng.normal(0.0, noise * radius),
                                rng.normal(0.0, noise * radius)});
  const double r = std::max(0.1 * radius, radius * (1.0 + rng.normal(0.0, noise)));
  Vec3 d = add(direction, {rng.normal(0.0, noise), rng.normal(0.0, noise), rng.normal(0.0, noise)});
  d = unit(d);
  f.mu = {p[0], p[1], p[2], r, d[0], d[1], d[2]};
  for (int i = 0; i < 3; ++i) f.var[i] = variance_scale * rng.uniform(0.05, 0.2) * r * r;
  f.var[3] = variance_scale * rng.uniform(0.01, 0.05) * r * r;
  for (int i = 4; i < 7; ++i) f.var[i] = variance_scale * rng.uniform(0.01, 0.05);
  return f;
}

}  // namespace

void TreeSpec::validate() const {
  if (generations < 1) throw ParameterError("generations must be at least 1");
  if (!(root_radius > 0.0)) throw ParameterError("root radius must be positive");
  if (!(radius_decay > 0.0 && radius_decay < 1.0)) throw ParameterError("radius decay must be in (0, 1)");
  if (!(branch_length > 0.0)) throw ParameterError("branch length must be positive");
  if (!(branch_length_jitter >= 0.0 && branch_length_jitter < 1.0)) {
    throw ParameterError("branch length jitter must be in [0, 1)");
  }
  if (!(bifurcation_angle > 0.0) || !(angle_jitter >= 0.0)) {
    throw ParameterError("bifurcation angle must be positive and its jitter non-negative");
  }
  if (!(node_spacing > 0.0)) throw ParameterError("node spacing must be positive");
  if (!(trifurcation_prob >= 0.0 && trifurcation_prob <= 1.0)) {
    throw ParameterError("trifurcation probability must be in [0, 1]");
  }
  if (!(clutter_rate >= 0.0 && clutter_rate < 1.0)) throw ParameterError("clutter rate must be in [0, 1)");
  if (!(feature_noise >= 0.0)) throw ParameterError("feature noise must be non-negative");
  if (knn < 1) throw ParameterError("knn must be at least 1");
}

SyntheticTree generate_tree_detailed(const TreeSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::vector<TrueNode> tree = TreeBuilder(spec, rng).build();
  const std::size_t n_true = tree.size();
  if (n_true < 2) throw ParameterError("tree specification yields fewer than 2 nodes");

  SyntheticTree out;
  out.tree_nodes = n_true;
  auto& g = out.graph;
  for (const auto& t : tree) {
    g.nodes.push_back(make_feature(t.position, t.radius, t.direction, spec.feature_noise, 1.0, rng));
    out.parent.push_back(t.parent);
  }

  const auto n_clutter = static_cast<std::size_t>(
      std::lround(spec.clutter_rate / (1.0 - spec.clutter_rate) * static_cast<double>(n_true)));
  for (std::size_t c = 0; c < n_clutter; ++c) {
    const auto& anchor = tree[rng.below(n_true)];
    const double offset = rng.uniform(1.5, 4.0) * anchor.radius;
    const Vec3 position = add(anchor.position, random_unit(rng), offset);
    const double radius = tree[rng.below(n_true)].radius * rng.uniform(0.7, 1.3);
    const Vec3 direction = tree[rng.below(n_true)].direction;
    g.nodes.push_back(make_feature(position, radius, direction, spec.feature_noise, 3.0, rng));
  }

  std::vector<Vec3> positions;
  for (const auto& f : g.nodes) positions.push_back(f.position());
  const Adjacency knn = build_knn_adjacency(positions, spec.knn);

  std::vector<Edge> candidates;
  for (std::size_t v = 1; v < n_true; ++v) {
    candidates.push_back(Edge::canonical(static_cast<int>(v), out.parent[v]));
  }
  for (const Edge& e : knn.edges()) {
    if (static_cast<std::size_t>(e.j) < n_true) candidates.push_back(e);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  MstResult mst = minimum_spanning_tree(std::span<const Vec3>(positions).first(n_true), candidates);

  Adjacency ref(g.nodes.size());
  for (const Edge& e : mst.tree.edges()) ref.add_edge(e.i, e.j);
  Adjacency in = knn;
  for (const Edge& e : ref.edges()) in.add_edge(e.i, e.j);

  g.adjacency_in = std::move(in);
  g.adjacency_ref = std::move(ref);
  char id[40];
  std::snprintf(id, sizeof id, "tree_%016llx", static_cast<unsigned long long>(spec.seed));
  g.id = id;
  return out;
}

GraphInstance generate_tree(const TreeSpec& spec) { return generate_tree_detailed(spec).graph; }

Dataset make_dataset(std::size_t n_graphs, const TreeSpec& spec, std::uint64_t seed) {
  if (n_graphs < 1) throw ParameterError("dataset needs at least one graph");
  Dataset d;
  for (std::size_t i = 0; i < n_graphs; ++i) {
    TreeSpec s = spec;
    s.seed = derive_seed(seed, i);
    GraphInstance g = generate_tree(s);
    char id[32];
    std::snprintf(id, sizeof id, "graph_%03zu", i);
    g.id = id;
    d.manifest.push_back({g.id, g.id + ".json", g.node_count(), s.seed});
    d.graphs.push_back(std::move(g));
  }
  return d;
}

}  // namespace graphrefine
