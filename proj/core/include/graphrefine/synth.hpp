#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "graphrefine/graph.hpp"

namespace graphrefine {

/// Parameters of one synthetic airway-like tree. Lengths in millimetres,
/// angles in degrees. Branch length and node spacing shrink with the
/// radius, by radius_decay per generation.
struct TreeSpec {
  int generations = 6;
  double root_radius = 8.0;
  double radius_decay = 0.7;
  double branch_length = 30.0;
  double branch_length_jitter = 0.2;  // relative, uniform in [-j, j]
  double bifurcation_angle = 35.0;
  double angle_jitter = 8.0;
  double node_spacing = 6.0;
  double trifurcation_prob = 0.05;
  double clutter_rate = 0.15;  // clutter share of all nodes
  double feature_noise = 0.05;
  int knn = 10;
  std::uint64_t seed = 0;

  /// Throws ParameterError for out-of-range values.
  void validate() const;
};

struct SyntheticTree {
  GraphInstance graph;
  std::size_t tree_nodes = 0;  // nodes [0, tree_nodes) are on the tree, the rest is clutter
  std::vector<int> parent;     // tree parent of each tree node, -1 for the root
};

SyntheticTree generate_tree_detailed(const TreeSpec& spec);
GraphInstance generate_tree(const TreeSpec& spec);

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest
  std::size_t n_nodes = 0;
  std::uint64_t seed = 0;
};

struct Dataset {
  std::vector<GraphInstance> graphs;
  std::vector<ManifestEntry> manifest;
};

/// Graph i uses seed derive_seed(seed, i) and id "graph_NNN".
Dataset make_dataset(std::size_t n_graphs, const TreeSpec& spec, std::uint64_t seed);

}  // namespace graphrefine
