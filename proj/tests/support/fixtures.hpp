#pragma once

#include <cstddef>
#include <vector>

#include "graphrefine/graph.hpp"
#include "graphrefine/rng.hpp"

namespace graphrefine::testing {

inline NodeFeature node_at(double x, double y, double z, double r = 1.0) {
  NodeFeature f;
  f.mu = {x, y, z, r, 1.0, 0.0, 0.0};
  f.var = {0.1, 0.1, 0.1, 0.02, 0.01, 0.01, 0.01};
  return f;
}

inline Adjacency edges_of(std::size_t n, std::initializer_list<Edge> edges) {
  const std::vector<Edge> list(edges);
  return Adjacency::from_edges(n, list);
}

// Nodes 0..n-1 along the x axis, one unit apart, joined in order.
inline GraphInstance path_graph(std::size_t n) {
  GraphInstance g;
  g.id = "path";
  g.adjacency_in = Adjacency(n);
  for (std::size_t i = 0; i < n; ++i) g.nodes.push_back(node_at(static_cast<double>(i), 0, 0));
  for (std::size_t i = 0; i + 1 < n; ++i) g.adjacency_in.add_edge(int(i), int(i + 1));
  g.adjacency_ref = g.adjacency_in;
  return g;
}

// Hub 0 with `leaves` spokes.
inline GraphInstance star_graph(std::size_t leaves) {
  GraphInstance g;
  g.id = "star";
  g.nodes.push_back(node_at(0, 0, 0, 2.0));
  g.adjacency_in = Adjacency(leaves + 1);
  for (std::size_t i = 0; i < leaves; ++i) {
    const double angle = 2.0 * 3.141592653589793 * double(i) / double(leaves);
    g.nodes.push_back(node_at(std::cos(angle), std::sin(angle), 0.3 * double(i), 1.0));
    g.adjacency_in.add_edge(0, int(i + 1));
  }
  g.adjacency_ref = g.adjacency_in;
  return g;
}

// Random features on a fixed topology; each node differs in every dimension.
inline void randomize_features(GraphInstance& g, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& n : g.nodes) {
    for (std::size_t d = 0; d < kGaussianDim; ++d) n.mu[d] = rng.uniform(-3.0, 3.0);
    n.mu[3] = rng.uniform(0.5, 2.0);
    for (auto& v : n.var) v = rng.uniform(0.01, 0.2);
  }
}

// Relabels node i as perm[i]; edges follow.
inline GraphInstance permuted(const GraphInstance& g, const std::vector<int>& perm) {
  GraphInstance out;
  out.id = g.id;
  out.nodes.resize(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) out.nodes[std::size_t(perm[i])] = g.nodes[i];
  const auto remap = [&perm](const Adjacency& a) {
    Adjacency r(a.node_count());
    for (const Edge& e : a.edges()) r.add_edge(perm[std::size_t(e.i)], perm[std::size_t(e.j)]);
    return r;
  };
  out.adjacency_in = remap(g.adjacency_in);
  if (g.adjacency_ref) out.adjacency_ref = remap(*g.adjacency_ref);
  return out;
}

}  // namespace graphrefine::testing
