#pragma once

#include <cstddef>
#include <vector>

#include "graphrefine/graph.hpp"

namespace graphrefine {

/// Splits the nodes into consecutive runs of `block_size` along a
/// breadth-first ordering of the input adjacency, started from the node
/// nearest the centroid (and restarted the same way for every further
/// component). Throws ParameterError if block_size < 2.
std::vector<std::vector<int>> partition_into_blocks(const PreparedGraph& graph,
                                                    std::size_t block_size = 500);

}  // namespace graphrefine
