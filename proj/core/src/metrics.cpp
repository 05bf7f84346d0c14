#include "graphrefine/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <array>
#include <cstdint>
#include <limits>
#include <unordered_map>

#include "graphrefine/error.hpp"

namespace graphrefine {

namespace {

double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// Uniform hash grid over a point set for radius and nearest queries.
class PointGrid {
 public:
  PointGrid(std::span<const Vec3> points, double cell) : points_(points), cell_(cell) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      cells_[key(points[i])].push_back(i);
    }
  }

  double nearest(const Vec3& q) const {
    double best = std::numeric_limits<double>::infinity();
    if (points_.empty()) return best;
    const auto c = coords(q);
    long last = 0;
    for (int d = 0; d < 3; ++d) last = std::max({last, std::labs(c[d] - lo_[d]), std::labs(hi_[d] - c[d])});
    for (long ring = 0; ring <= last; ++ring) {
      visit_ring(c, ring, [&](std::size_t i) { best = std::min(best, squared_distance(q, points_[i])); });
      // Anything beyond this ring is at least ring * cell away.
      const double reach = static_cast<double>(ring) * cell_;
      if (best <= reach * reach) break;
    }
    return std::sqrt(best);
  }

  // Calls fn(i) for every point with distance to q at most `radius`.
  template <typename Fn>
  void within(const Vec3& q, double radius, Fn&& fn) const {
    const auto c = coords(q);
    const long rings = static_cast<long>(std::ceil(radius / cell_));
    for (long dx = -rings; dx <= rings; ++dx) {
      for (long dy = -rings; dy <= rings; ++dy) {
        for (long dz = -rings; dz <= rings; ++dz) {
          const auto it = cells_.find(pack(c[0] + dx, c[1] + dy, c[2] + dz));
          if (it == cells_.end()) continue;
          for (std::size_t i : it->second) {
            if (squared_distance(q, points_[i]) <= radius * radius) fn(i);
          }
        }
      }
    }
  }

 private:
  using Coords = std::array<long, 3>;

  Coords coords(const Vec3& p) const {
    return {static_cast<long>(std::floor(p[0] / cell_)), static_cast<long>(std::floor(p[1] / cell_)),
            static_cast<long>(std::floor(p[2] / cell_))};
  }
  static std::uint64_t pack(long x, long y, long z) {
    const auto u = [](long v) { return static_cast<std::uint64_t>(v + (1L << 20)) & 0x1fffffULL; };
    return (u(x) << 42) | (u(y) << 21) | u(z);
  }
  std::uint64_t key(const Vec3& p) {
    const auto c = coords(p);
    for (int d = 0; d < 3; ++d) {
      lo_[d] = std::min(lo_[d], c[d]);
      hi_[d] = std::max(hi_[d], c[d]);
    }
    return pack(c[0], c[1], c[2]);
  }

  template <typename Fn>
  void visit_ring(const Coords& c, long ring, Fn&& fn) const {
    for (long dx = -ring; dx <= ring; ++dx) {
      for (long dy = -ring; dy <= ring; ++dy) {
        for (long dz = -ring; dz <= ring; ++dz) {
          if (std::max({std::labs(dx), std::labs(dy), std::labs(dz)}) != ring) continue;
          const auto it = cells_.find(pack(c[0] + dx, c[1] + dy, c[2] + dz));
          if (it == cells_.end()) continue;
          for (std::size_t i : it->second) fn(i);
        }
      }
    }
  }

  std::span<const Vec3> points_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
  Coords lo_{std::numeric_limits<long>::max(), std::numeric_limits<long>::max(),
             std::numeric_limits<long>::max()};
  Coords hi_{std::numeric_limits<long>::min(), std::numeric_limits<long>::min(),
             std::numeric_limits<long>::min()};
};

double grid_cell(const CenterlinePointSet& s) {
  double r = 0.0;
  for (double x : s.radius) r = std::max(r, x);
  return std::max(r, 1.0);
}

std::optional<double> mean_of(std::span<const std::optional<double>> xs) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& x : xs) {
    if (x) {
      sum += *x;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::optional<double> std_of(std::span<const std::optional<double>> xs) {
  const auto mean = mean_of(xs);
  if (!mean) return std::nullopt;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& x : xs) {
    if (x) {
      sum += (*x - *mean) * (*x - *mean);
      ++n;
    }
  }
  return std::sqrt(sum / static_cast<double>(n));
}

std::string format_value(const std::optional<double>& x) {
  if (!x) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", *x);
  return buf;
}

}  // namespace

CenterlinePointSet sample_centerline_points(std::span<const NodeFeature> nodes,
                                            const Adjacency& adjacency, double spacing) {
  if (!(spacing > 0.0)) throw ParameterError("centerline spacing must be positive");
  if (adjacency.node_count() != nodes.size()) {
    throw InputError("adjacency and node list sizes differ");
  }
  CenterlinePointSet s;
  const auto edges = adjacency.edges();
  std::vector<std::size_t> node_point(nodes.size(), SIZE_MAX);
  std::vector<int> first_edge(nodes.size(), -1);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    for (int v : {edges[e].i, edges[e].j}) {
      auto& fe = first_edge[static_cast<std::size_t>(v)];
      if (fe < 0) fe = static_cast<int>(e);
    }
  }
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    if (first_edge[v] < 0) continue;
    node_point[v] = s.points.size();
    s.points.push_back(nodes[v].position());
    s.radius.push_back(nodes[v].radius());
    s.edge.push_back(first_edge[v]);
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& a = nodes[static_cast<std::size_t>(edges[e].i)];
    const auto& b = nodes[static_cast<std::size_t>(edges[e].j)];
    const Vec3 pa = a.position();
    const Vec3 pb = b.position();
    const double length = distance(pa, pb);
    const auto pieces = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(length / spacing)));
    std::size_t prev = node_point[static_cast<std::size_t>(edges[e].i)];
    for (std::size_t k = 1; k < pieces; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(pieces);
      s.points.push_back({pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]),
                          pa[2] + t * (pb[2] - pa[2])});
      s.radius.push_back(a.radius() + t * (b.radius() - a.radius()));
      s.edge.push_back(static_cast<int>(e));
      const std::size_t cur = s.points.size() - 1;
      s.segments.push_back({prev, cur, length / static_cast<double>(pieces)});
      prev = cur;
    }
    s.segments.push_back(
        {prev, node_point[static_cast<std::size_t>(edges[e].j)], length / static_cast<double>(pieces)});
  }
  return s;
}

double adjacency_dice(const Adjacency& a, const Adjacency& reference) {
  if (a.node_count() != reference.node_count()) {
    throw InputError("adjacency_dice: node counts differ");
  }
  const std::size_t total = a.edge_count() + reference.edge_count();
  if (total == 0) return 100.0;
  std::size_t common = 0;
  for (const Edge& e : a.edges()) {
    if (reference.has_edge(e.i, e.j)) ++common;
  }
  return 200.0 * static_cast<double>(common) / static_cast<double>(total);
}

std::optional<CenterlineError> centerline_error(const CenterlinePointSet& predicted,
                                                const CenterlinePointSet& reference) {
  if (predicted.empty() || reference.empty()) return std::nullopt;
  const auto directed = [](const CenterlinePointSet& from, const CenterlinePointSet& to) {
    const PointGrid grid(to.points, grid_cell(to));
    double sum = 0.0;
    for (const auto& p : from.points) sum += grid.nearest(p);
    return sum / static_cast<double>(from.size());
  };
  CenterlineError e;
  e.d_fp = directed(predicted, reference);
  e.d_fn = directed(reference, predicted);
  e.d_err = (e.d_fp + e.d_fn) / 2.0;
  return e;
}

std::optional<double> tree_length_fraction(const CenterlinePointSet& predicted,
                                           const CenterlinePointSet& reference, double spacing) {
  if (reference.empty()) return std::nullopt;
  double total = 0.0;
  for (const auto& seg : reference.segments) total += seg.length;
  if (total <= 0.0) return std::nullopt;
  if (predicted.empty()) return 0.0;

  const PointGrid grid(predicted.points, grid_cell(reference));
  std::vector<char> detected(reference.size(), 0);
  for (std::size_t q = 0; q < reference.size(); ++q) {
    const double tol = std::max(reference.radius[q], spacing);
    detected[q] = grid.nearest(reference.points[q]) <= tol ? 1 : 0;
  }
  // Summing the missed length and dividing before scaling keep a fully
  // detected reference at exactly 100.
  double missed = 0.0;
  for (const auto& seg : reference.segments) {
    missed += seg.length * 0.5 * static_cast<double>(2 - detected[seg.a] - detected[seg.b]);
  }
  return 100.0 * ((total - missed) / total);
}

std::optional<double> false_positive_rate(const CenterlinePointSet& predicted,
                                          const CenterlinePointSet& reference) {
  if (predicted.empty()) return std::nullopt;
  if (reference.empty()) return 100.0;
  double max_radius = 0.0;
  for (double r : reference.radius) max_radius = std::max(max_radius, r);
  const PointGrid grid(reference.points, grid_cell(reference));
  std::size_t outside = 0;
  for (const auto& c : predicted.points) {
    bool inside = false;
    grid.within(c, max_radius, [&](std::size_t q) {
      if (!inside && std::sqrt(squared_distance(c, reference.points[q])) <= reference.radius[q]) {
        inside = true;
      }
    });
    if (!inside) ++outside;
  }
  return 100.0 * static_cast<double>(outside) / static_cast<double>(predicted.size());
}

MetricReport evaluate(const GraphInstance& graph, const Adjacency& predicted, double spacing) {
  if (!graph.adjacency_ref) throw InputError("graph '" + graph.id + "' has no reference adjacency");
  const Adjacency& ref = *graph.adjacency_ref;
  MetricReport r;
  r.id = graph.id;
  r.dice_pct = adjacency_dice(predicted, ref);
  const auto seg = sample_centerline_points(graph.nodes, predicted, spacing);
  const auto refc = sample_centerline_points(graph.nodes, ref, spacing);
  if (const auto ce = centerline_error(seg, refc)) {
    r.d_fp = ce->d_fp;
    r.d_fn = ce->d_fn;
    r.d_err = ce->d_err;
  }
  r.tl_pct = tree_length_fraction(seg, refc, spacing);
  r.fpr_pct = false_positive_rate(seg, refc);

  const Components comp = connected_components(predicted);
  std::vector<char> seen(comp.count, 0);
  for (std::size_t v = 0; v < predicted.node_count(); ++v) {
    if (predicted.degree(static_cast<int>(v)) > 0) seen[static_cast<std::size_t>(comp.labels[v])] = 1;
  }
  r.n_components = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), 1));
  return r;
}

std::pair<MetricSummary, MetricSummary> aggregate(std::span<const MetricReport> reports) {
  std::vector<std::optional<double>> cols[7];
  for (const auto& r : reports) {
    cols[0].push_back(r.dice_pct);
    cols[1].push_back(r.d_fp);
    cols[2].push_back(r.d_fn);
    cols[3].push_back(r.d_err);
    cols[4].push_back(r.tl_pct);
    cols[5].push_back(r.fpr_pct);
    cols[6].push_back(static_cast<double>(r.n_components));
  }
  const auto fill = [&cols](auto stat) {
    return MetricSummary{stat(cols[0]), stat(cols[1]), stat(cols[2]), stat(cols[3]),
                         stat(cols[4]), stat(cols[5]), stat(cols[6])};
  };
  return {fill([](const auto& c) { return mean_of(c); }),
          fill([](const auto& c) { return std_of(c); })};
}

void write_metric_csv(std::ostream& out, std::span<const MetricReport> reports) {
  out << "id,dice,d_fp,d_fn,d_err,tl,fpr,n_components\n";
  for (const auto& r : reports) {
    out << r.id << ',' << format_value(r.dice_pct) << ',' << format_value(r.d_fp) << ','
        << format_value(r.d_fn) << ',' << format_value(r.d_err) << ',' << format_value(r.tl_pct)
        << ',' << format_value(r.fpr_pct) << ',' << r.n_components << '\n';
  }
  const auto [mean, sd] = aggregate(reports);
  for (const auto& [name, s] : {std::pair{"mean", mean}, std::pair{"std", sd}}) {
    out << name << ',' << format_value(s.dice_pct) << ',' << format_value(s.d_fp) << ','
        << format_value(s.d_fn) << ',' << format_value(s.d_err) << ',' << format_value(s.tl_pct)
        << ',' << format_value(s.fpr_pct) << ',' << format_value(s.n_components) << '\n';
  }
}

}  // namespace graphrefine
