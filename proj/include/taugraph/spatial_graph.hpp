#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "taugraph/data_model.hpp"
#include "taugraph/delaunay.hpp"
#include "taugraph/error.hpp"

namespace taugraph {

/// Edges longer than this are never part of a pathology graph.
inline constexpr double kMaxEdgeLengthUm = 1000.0;

struct GraphNode {
  std::string record_ref;
  double x_um = 0.0;
  double y_um = 0.0;
  Layer layer = Layer::unassigned;
  friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

struct GraphEdge {
  std::size_t u = 0;  // u < v
  std::size_t v = 0;
  double length_um = 0.0;
  double alpha_um = 0.0;
  double weight = 0.0;
  friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
};

struct GraphLevel {
  enum class Kind { patient, layer } kind = Kind::patient;
  int layer = 0;  // 1..6 when kind == layer

  static GraphLevel patient() { return {}; }
  static GraphLevel of_layer(int k) { return {Kind::layer, k}; }
  bool is_patient() const { return kind == Kind::patient; }
  std::string token() const { return is_patient() ? "patient" : "L" + std::to_string(layer); }
  friend bool operator==(const GraphLevel&, const GraphLevel&) = default;
};

/// Undirected spatial graph of one object type on one slide. Coordinates,
/// lengths and alpha values are in micrometers.
struct PathologyGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  double alpha_optimal_um = 0.0;
  ObjectType object_type = ObjectType::plaque;
  GraphLevel level;
  std::string slide_id;
  Diagnosis diagnosis = Diagnosis::cAD;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t edge_count() const { return edges.size(); }
  friend bool operator==(const PathologyGraph&, const PathologyGraph&) = default;
};

inline double euclidean(const GraphNode& a, const GraphNode& b) {
  return std::hypot(a.x_um - b.x_um, a.y_um - b.y_um);
}

/// Delaunay edges of `points`, carrying length and alpha (alpha := length).
inline std::vector<GraphEdge> delaunay_edges(const std::vector<Point2>& points) {
  std::vector<GraphEdge> out;
  for (const auto& [u, v] : geom::delaunay(points)) {
    const double len = std::hypot(points[u].x - points[v].x, points[u].y - points[v].y);
    out.push_back({u, v, len, len, 0.0});
  }
  return out;
}

/// Per-edge alpha value. Edge length is the decided definition; swapping in a
/// circumradius-based value only requires changing this function.
inline double edge_alpha(const GraphEdge& e) { return e.length_um; }

/// Half the median of the per-edge alpha values (even counts average the two
/// central values).
inline double compute_alpha_optimal(const std::vector<GraphEdge>& edges) {
  if (edges.empty()) throw Error(ErrorKind::EmptyGraph, "alpha_optimal needs at least one edge");
  std::vector<double> a;
  a.reserve(edges.size());
  for (const auto& e : edges) a.push_back(e.alpha_um);
  std::sort(a.begin(), a.end());
  const std::size_t n = a.size();
  const double median = (n % 2 == 1) ? a[n / 2] : 0.5 * (a[n / 2 - 1] + a[n / 2]);
  return 0.5 * median;
}

/// Keeps exactly the edges with alpha <= alpha_optimal and length <= max_len.
/// Nodes (including newly isolated ones) are untouched.
inline PathologyGraph erode(const PathologyGraph& g, double alpha_optimal_um,
                            double max_len_um = kMaxEdgeLengthUm) {
  PathologyGraph out = g;
  out.edges.clear();
  for (const auto& e : g.edges) {
    if (e.alpha_um <= alpha_optimal_um && e.length_um <= max_len_um) out.edges.push_back(e);
  }
  out.alpha_optimal_um = alpha_optimal_um;
  return out;
}

/// weight = length^(-1/2).
inline PathologyGraph weigh_edges(const PathologyGraph& g) {
  PathologyGraph out = g;
  for (auto& e : out.edges) {
    if (!(e.length_um > 0.0)) throw Error(ErrorKind::ZeroLength, "edge " + std::to_string(e.u) + "-" + std::to_string(e.v));
    e.weight = 1.0 / std::sqrt(e.length_um);
  }
  return out;
}

/// Induced subgraph per cortical layer 1..6 (always six entries). Cross-layer
/// edges and unassigned nodes are dropped; alpha_optimal is inherited.
inline std::map<int, PathologyGraph> layer_subgraphs(const PathologyGraph& g) {
  std::map<int, PathologyGraph> out;
  for (int k = 1; k <= kLayerCount; ++k) {
    PathologyGraph sub;
    sub.alpha_optimal_um = g.alpha_optimal_um;
    sub.object_type = g.object_type;
    sub.level = GraphLevel::of_layer(k);
    sub.slide_id = g.slide_id;
    sub.diagnosis = g.diagnosis;
    std::vector<std::size_t> remap(g.nodes.size(), SIZE_MAX);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      if (layer_number(g.nodes[i].layer) == k) {
        remap[i] = sub.nodes.size();
        sub.nodes.push_back(g.nodes[i]);
      }
    }
    for (const auto& e : g.edges) {
      if (remap[e.u] != SIZE_MAX && remap[e.v] != SIZE_MAX) {
        GraphEdge ne = e;
        ne.u = remap[e.u];
        ne.v = remap[e.v];
        sub.edges.push_back(ne);
      }
    }
    out.emplace(k, std::move(sub));
  }
  return out;
}

/// Records of one object type, with coincident points merged into the record
/// of lexicographically smallest id. Output keeps input order.
inline std::vector<AnnotationRecord> deduplicated_records(const SlideDataset& d, ObjectType type) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    if (d.records[i].object_type == type) idx.push_back(i);
  }
  std::map<std::pair<double, double>, std::size_t> keeper;
  for (std::size_t i : idx) {
    const auto& r = d.records[i];
    auto [it, inserted] = keeper.try_emplace({r.x_um, r.y_um}, i);
    if (!inserted && r.id < d.records[it->second].id) it->second = i;
  }
  std::vector<char> keep(d.records.size(), 0);
  for (const auto& [_, i] : keeper) keep[i] = 1;
  std::vector<AnnotationRecord> out;
  for (std::size_t i : idx) {
    if (keep[i]) out.push_back(d.records[i]);
  }
  return out;
}

struct BuildOptions {
  double max_edge_um = kMaxEdgeLengthUm;
};

/// Patient-level pipeline: filter by type, deduplicate, Delaunay, alpha
/// optimal, erosion, weighting.
inline PathologyGraph build_patient_graph(const SlideDataset& d, ObjectType type, const BuildOptions& opt = {}) {
  const auto records = deduplicated_records(d, type);
  if (records.size() < 3) {
    throw Error(ErrorKind::TooFewObjects, d.slide_id + " has " + std::to_string(records.size()) + " " +
                                              std::string(to_string(type)) + " object(s), need 3");
  }
  PathologyGraph g;
  g.object_type = type;
  g.level = GraphLevel::patient();
  g.slide_id = d.slide_id;
  g.diagnosis = d.diagnosis;
  std::vector<Point2> pts;
  for (const auto& r : records) {
    g.nodes.push_back({r.id, r.x_um, r.y_um, r.layer});
    pts.push_back(r.position());
  }
  g.edges = delaunay_edges(pts);
  for (auto& e : g.edges) e.alpha_um = edge_alpha(e);
  const double alpha = compute_alpha_optimal(g.edges);
  return weigh_edges(erode(g, alpha, opt.max_edge_um));
}

/// Graphs at the requested level: one patient graph, or the six layer
/// subgraphs of the eroded patient graph.
inline std::vector<PathologyGraph> build_pathology_graph(const SlideDataset& d, ObjectType type, GraphLevel level,
                                                         const BuildOptions& opt = {}) {
  PathologyGraph patient = build_patient_graph(d, type, opt);
  if (level.is_patient()) return {std::move(patient)};
  std::vector<PathologyGraph> out;
  auto subs = layer_subgraphs(patient);
  if (level.layer >= 1 && level.layer <= kLayerCount) {
    out.push_back(std::move(subs.at(level.layer)));
  } else {
    for (auto& [k, sub] : subs) out.push_back(std::move(sub));
  }
  return out;
}

}  // namespace taugraph
