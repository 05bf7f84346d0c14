#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "graphrefine/graph.hpp"

namespace graphrefine {

/// Points sampled along the edges of an adjacency, with the local radius
/// at each point and the straight pieces between consecutive points.
struct CenterlinePointSet {
  struct Segment {
    std::size_t a = 0;
    std::size_t b = 0;
    double length = 0.0;
  };

  std::vector<Vec3> points;
  std::vector<double> radius;
  std::vector<int> edge;  // index into adjacency.edges() of the edge the point came from
  std::vector<Segment> segments;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Node endpoints appear once each (ascending node index), followed by the
/// interior points of every edge in canonical edge order. Each edge is cut
/// into ceil(length / spacing) equal pieces; radius is interpolated
/// linearly. Throws ParameterError unless spacing > 0.
CenterlinePointSet sample_centerline_points(std::span<const NodeFeature> nodes,
                                            const Adjacency& adjacency, double spacing = 0.5);

/// 2 |A & A_ref| / (|A| + |A_ref|) * 100, with 100 when both are empty.
/// Throws InputError if the node counts differ.
double adjacency_dice(const Adjacency& a, const Adjacency& reference);

struct CenterlineError {
  double d_fp = 0.0;
  double d_fn = 0.0;
  double d_err = 0.0;
};

/// Mean nearest-point distance from each set to the other; missing if
/// either set is empty.
std::optional<CenterlineError> centerline_error(const CenterlinePointSet& predicted,
                                                const CenterlinePointSet& reference);

/// Percentage of reference length whose points lie within
/// max(local radius, spacing) of a predicted point. A segment counts with
/// the fraction of its two endpoints that are detected. Missing if the
/// reference is empty or has zero length.
std::optional<double> tree_length_fraction(const CenterlinePointSet& predicted,
                                           const CenterlinePointSet& reference, double spacing);

/// Percentage of predicted points farther than r_q from every reference
/// point q. Missing if there are no predicted points.
std::optional<double> false_positive_rate(const CenterlinePointSet& predicted,
                                          const CenterlinePointSet& reference);

struct MetricReport {
  std::string id;
  double dice_pct = 0.0;
  std::optional<double> d_fp;
  std::optional<double> d_fn;
  std::optional<double> d_err;
  std::optional<double> tl_pct;
  std::optional<double> fpr_pct;
  std::size_t n_components = 0;  // among nodes with at least one predicted edge
};

/// Throws InputError if the graph has no reference adjacency.
MetricReport evaluate(const GraphInstance& graph, const Adjacency& predicted,
                      double spacing = 0.5);

struct MetricSummary {
  std::optional<double> dice_pct;
  std::optional<double> d_fp;
  std::optional<double> d_fn;
  std::optional<double> d_err;
  std::optional<double> tl_pct;
  std::optional<double> fpr_pct;
  std::optional<double> n_components;
};

/// Mean and population standard deviation per column over the rows where
/// the value is present.
std::pair<MetricSummary, MetricSummary> aggregate(std::span<const MetricReport> reports);

/// Header, one row per report, then "mean" and "std" rows. Missing values
/// are written as NA.
void write_metric_csv(std::ostream& out, std::span<const MetricReport> reports);

}  // namespace graphrefine
