#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "taugraph/error.hpp"
#include "taugraph/graph_metrics.hpp"
#include "taugraph/spatial_graph.hpp"
#include "taugraph/text.hpp"

namespace taugraph {

enum class ClusterMethod { connected_components, markov };

inline std::string_view to_string(ClusterMethod m) {
  return m == ClusterMethod::connected_components ? "cc" : "mcl";
}

struct MclParams {
  int expansion = 2;
  double inflation = 2.0;
  double tolerance = 1e-6;
  int max_iters = 200;
  double prune_below = 1e-8;
};

struct ClusterAssignment {
  std::vector<int> cluster_of;  // dense ids from 0
  ClusterMethod method = ClusterMethod::connected_components;
  MclParams params;
  bool converged = true;
  int iterations = 0;
  /// Largest |column sum - 1| observed after each inflation step.
  std::vector<double> stochastic_deviation;

  int cluster_count() const {
    return cluster_of.empty() ? 0 : *std::max_element(cluster_of.begin(), cluster_of.end()) + 1;
  }
};

inline ClusterAssignment connected_components(const PathologyGraph& g) {
  ClusterAssignment a;
  a.method = ClusterMethod::connected_components;
  a.cluster_of = component_labels(g.nodes.size(), g.edges);
  return a;
}

namespace detail {

/// Relabels so that ids are dense and ordered by each cluster's lowest node.
inline std::vector<int> canonical_labels(const std::vector<int>& raw) {
  std::map<int, int> remap;
  std::vector<int> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto [it, inserted] = remap.try_emplace(raw[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  return out;
}

inline constexpr double kAttractorThreshold = 1e-5;

struct MclRun {
  Eigen::MatrixXd limit;
  bool converged = false;
  int iterations = 0;
  std::vector<double> deviation;
};

inline double max_column_deviation(const Eigen::MatrixXd& m) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) worst = std::max(worst, std::abs(m.col(j).sum() - 1.0));
  return worst;
}

inline void normalize_columns(Eigen::MatrixXd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double s = m.col(j).sum();
    if (s > 0.0) m.col(j) /= s;
  }
}

inline MclRun mcl_iterate(Eigen::MatrixXd m, const MclParams& p) {
  MclRun run;
  normalize_columns(m);
  for (int it = 1; it <= p.max_iters; ++it) {
    Eigen::MatrixXd expanded = m;
    for (int e = 1; e < p.expansion; ++e) expanded = expanded * m;
    expanded = expanded.array().pow(p.inflation).matrix();
    normalize_columns(expanded);
    expanded = (expanded.array() < p.prune_below).select(0.0, expanded);
    normalize_columns(expanded);
    run.deviation.push_back(max_column_deviation(expanded));
    const double change = (expanded - m).cwiseAbs().maxCoeff();
    m = std::move(expanded);
    run.iterations = it;
    if (change < p.tolerance) {
      run.converged = true;
      break;
    }
  }
  run.limit = std::move(m);
  return run;
}

/// Attractors are nodes with a positive diagonal; attractors that reach one
/// another form a system. Each node joins the lowest-numbered system among
/// the attractors holding its mass (lowest attractor index orders systems).
inline std::vector<int> interpret_limit(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  std::vector<Eigen::Index> attractors;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (m(i, i) > kAttractorThreshold) attractors.push_back(i);
  }
  UnionFind uf(static_cast<std::size_t>(n));
  for (auto a : attractors) {
    for (auto b : attractors) {
      if (a != b && m(a, b) > kAttractorThreshold) uf.unite(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
    }
  }
  std::map<std::size_t, int> system_id;
  for (auto a : attractors) system_id.try_emplace(uf.find(static_cast<std::size_t>(a)), static_cast<int>(system_id.size()));

  std::vector<int> raw(static_cast<std::size_t>(n), -1);
  int fresh = static_cast<int>(system_id.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    int best = std::numeric_limits<int>::max();
    for (auto a : attractors) {
      if (m(a, j) > kAttractorThreshold) best = std::min(best, system_id.at(uf.find(static_cast<std::size_t>(a))));
    }
    raw[static_cast<std::size_t>(j)] = best == std::numeric_limits<int>::max() ? fresh++ : best;
  }
  return raw;
}

}  // namespace detail

/// Markov clustering on the weighted graph with self-loops of weight equal to
/// the node's largest incident weight (1 for isolated nodes). Runs per
/// connected component; the result never merges components. Non-convergence
/// is reported through `converged`, not thrown.
inline ClusterAssignment markov_cluster(const PathologyGraph& g, const MclParams& p = {}) {
  if (p.expansion < 2) throw Error(ErrorKind::BadConfig, "MCL expansion must be an integer >= 2");
  if (!(p.inflation > 1.0)) throw Error(ErrorKind::BadConfig, "MCL inflation must be > 1");
  const std::size_t n = g.nodes.size();
  ClusterAssignment out;
  out.method = ClusterMethod::markov;
  out.params = p;
  out.cluster_of.assign(n, -1);

  const auto comp = component_labels(n, g.edges);
  const int ncomp = n ? *std::max_element(comp.begin(), comp.end()) + 1 : 0;
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(ncomp));
  for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(comp[i])].push_back(i);
  std::vector<std::vector<std::size_t>> comp_edges(static_cast<std::size_t>(ncomp));
  for (std::size_t e = 0; e < g.edges.size(); ++e) comp_edges[static_cast<std::size_t>(comp[g.edges[e].u])].push_back(e);

  std::vector<int> raw(n, -1);
  int offset = 0;
  std::vector<std::size_t> local(n, 0);
  for (int c = 0; c < ncomp; ++c) {
    const auto& mem = members[static_cast<std::size_t>(c)];
    if (mem.size() == 1) {
      raw[mem[0]] = offset++;
      continue;
    }
    for (std::size_t i = 0; i < mem.size(); ++i) local[mem[i]] = i;
    const auto s = static_cast<Eigen::Index>(mem.size());
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(s, s);
    for (std::size_t e : comp_edges[static_cast<std::size_t>(c)]) {
      const auto a = static_cast<Eigen::Index>(local[g.edges[e].u]);
      const auto b = static_cast<Eigen::Index>(local[g.edges[e].v]);
      w(a, b) += g.edges[e].weight;
      w(b, a) += g.edges[e].weight;
    }
    for (Eigen::Index i = 0; i < s; ++i) {
      const double loop = w.col(i).maxCoeff();
      w(i, i) = loop > 0.0 ? loop : 1.0;
    }
    auto run = detail::mcl_iterate(std::move(w), p);
    out.converged = out.converged && run.converged;
    out.iterations = std::max(out.iterations, run.iterations);
    if (out.stochastic_deviation.size() < run.deviation.size()) out.stochastic_deviation.resize(run.deviation.size(), 0.0);
    for (std::size_t i = 0; i < run.deviation.size(); ++i) {
      out.stochastic_deviation[i] = std::max(out.stochastic_deviation[i], run.deviation[i]);
    }
    const auto labels = detail::interpret_limit(run.limit);
    int used = 0;
    for (std::size_t i = 0; i < mem.size(); ++i) {
      raw[mem[i]] = offset + labels[i];
      used = std::max(used, labels[i] + 1);
    }
    offset += used;
  }
  out.cluster_of = detail::canonical_labels(raw);
  return out;
}

inline ClusterAssignment cluster_graph(const PathologyGraph& g, ClusterMethod method, const MclParams& p = {}) {
  return method == ClusterMethod::markov ? markov_cluster(g, p) : connected_components(g);
}

// ---------------------------------------------------------------------------

struct ClusterStats {
  int cluster_id = 0;
  double size = 0;
  double n_edges = 0;
  double total_edge_length_um = 0;
  double mean_edge_length_um = 0;
  double bbox_area_mm2 = 0;
  double density = 0;
  std::string slide_id;
  ObjectType object_type = ObjectType::plaque;

  static const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> n = {"size", "n_edges", "total_edge_length_um", "mean_edge_length_um",
                                               "bbox_area_mm2", "density"};
    return n;
  }
  std::vector<double> features() const {
    return {size, n_edges, total_edge_length_um, mean_edge_length_um, bbox_area_mm2, density};
  }
};

/// Per-cluster aggregates ordered by cluster id. Edges count toward a cluster
/// only when both endpoints belong to it.
inline std::vector<ClusterStats> cluster_stats(const PathologyGraph& g, const std::vector<int>& cluster_of) {
  if (cluster_of.size() != g.nodes.size()) throw Error(ErrorKind::LengthMismatch, "assignment does not cover graph");
  const int k = cluster_of.empty() ? 0 : *std::max_element(cluster_of.begin(), cluster_of.end()) + 1;
  std::vector<ClusterStats> out(static_cast<std::size_t>(k));
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<std::array<double, 4>> box(static_cast<std::size_t>(k), {inf, inf, -inf, -inf});
  for (int c = 0; c < k; ++c) {
    out[static_cast<std::size_t>(c)].cluster_id = c;
    out[static_cast<std::size_t>(c)].slide_id = g.slide_id;
    out[static_cast<std::size_t>(c)].object_type = g.object_type;
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    auto c = static_cast<std::size_t>(cluster_of[i]);
    out[c].size += 1;
    auto& b = box[c];
    b[0] = std::min(b[0], g.nodes[i].x_um);
    b[1] = std::min(b[1], g.nodes[i].y_um);
    b[2] = std::max(b[2], g.nodes[i].x_um);
    b[3] = std::max(b[3], g.nodes[i].y_um);
  }
  for (const auto& e : g.edges) {
    if (cluster_of[e.u] != cluster_of[e.v]) continue;
    auto& s = out[static_cast<std::size_t>(cluster_of[e.u])];
    s.n_edges += 1;
    s.total_edge_length_um += e.length_um;
  }
  for (std::size_t c = 0; c < out.size(); ++c) {
    auto& s = out[c];
    s.mean_edge_length_um = s.n_edges > 0 ? s.total_edge_length_um / s.n_edges : 0.0;
    s.bbox_area_mm2 = s.size > 0 ? (box[c][2] - box[c][0]) * (box[c][3] - box[c][1]) / 1e6 : 0.0;
    s.density = s.n_edges / std::max(1.0, s.size * (s.size - 1.0) / 2.0);
  }
  return out;
}

inline std::string format_assignment(const PathologyGraph& g, const ClusterAssignment& a) {
  text::CsvWriter csv({"node_id", "cluster_id"});
  for (std::size_t i = 0; i < g.nodes.size(); ++i) csv.row({g.nodes[i].record_ref, std::to_string(a.cluster_of[i])});
  return csv.str();
}

}  // namespace taugraph
