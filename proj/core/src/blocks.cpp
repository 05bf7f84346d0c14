#include "graphrefine/blocks.hpp"

#include <algorithm>
#include <deque>
#include <limits>

#include "graphrefine/error.hpp"

namespace graphrefine {

std::vector<std::vector<int>> partition_into_blocks(const PreparedGraph& graph,
                                                    std::size_t block_size) {
  if (block_size < 2) throw ParameterError("block size must be at least 2");
  const std::size_t n = graph.node_count();
  const auto& positions = graph.features().raw_position;
  const auto& support = graph.support();

  Vec3 centroid{0.0, 0.0, 0.0};
  for (const auto& p : positions) {
    for (int d = 0; d < 3; ++d) centroid[d] += p[d];
  }
  for (int d = 0; d < 3; ++d) centroid[d] /= static_cast<double>(std::max<std::size_t>(n, 1));

  std::vector<char> visited(n, 0);
  std::vector<int> order;
  order.reserve(n);
  std::deque<int> queue;
  while (order.size() < n) {
    int start = -1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (visited[i]) continue;
      const double d = distance(positions[i], centroid);
      if (d < best) {
        best = d;
        start = static_cast<int>(i);
      }
    }
    visited[static_cast<std::size_t>(start)] = 1;
    queue.push_back(start);
    while (!queue.empty()) {
      const int k = queue.front();
      queue.pop_front();
      order.push_back(k);
      for (std::size_t p = support.begin(k); p < support.end(k); ++p) {
        const int l = support.target(p);
        if (!visited[static_cast<std::size_t>(l)]) {
          visited[static_cast<std::size_t>(l)] = 1;
          queue.push_back(l);
        }
      }
    }
  }

  std::vector<std::vector<int>> blocks;
  for (std::size_t start = 0; start < n; start += block_size) {
    const std::size_t stop = std::min(n, start + block_size);
    blocks.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                        order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return blocks;
}

}  // namespace graphrefine
