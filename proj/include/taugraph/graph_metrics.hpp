#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "taugraph/spatial_graph.hpp"
#include "taugraph/text.hpp"

namespace taugraph {

struct Neighbor {
  std::size_t node;
  std::size_t edge;
};

/// Adjacency lists in edge order.
inline std::vector<std::vector<Neighbor>> adjacency(const PathologyGraph& g) {
  std::vector<std::vector<Neighbor>> adj(g.nodes.size());
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    adj[g.edges[i].u].push_back({g.edges[i].v, i});
    adj[g.edges[i].v].push_back({g.edges[i].u, i});
  }
  return adj;
}

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

/// Component label per node, dense from 0 in order of each component's
/// lowest node index.
inline std::vector<int> component_labels(std::size_t n, const std::vector<GraphEdge>& edges) {
  UnionFind uf(n);
  for (const auto& e : edges) uf.unite(e.u, e.v);
  std::vector<int> root_label(n, -1), out(n);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = uf.find(i);
    if (root_label[r] < 0) root_label[r] = next++;
    out[i] = root_label[r];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Node features

inline constexpr int kNodeFeatureCount = 4 + kLayerCount;

inline const std::vector<std::string>& node_feature_names() {
  static const std::vector<std::string> names = {"degree",   "clustering_coef", "betweenness", "closeness",
                                                 "layer_1",  "layer_2",         "layer_3",     "layer_4",
                                                 "layer_5",  "layer_6"};
  return names;
}

/// Rows follow node order; columns follow node_feature_names().
using NodeFeatureMatrix = Eigen::MatrixXd;

namespace detail {

/// Path-length ties closer than this relative gap count as equal.
inline constexpr double kPathTieTolerance = 1e-12;

inline bool shorter(double a, double b) { return a < b - kPathTieTolerance * std::max(std::abs(a), std::abs(b)); }

}  // namespace detail

struct Centralities {
  std::vector<double> betweenness;
  std::vector<double> closeness;
};

/// Brandes betweenness and component-scaled closeness with edge length as the
/// path cost.
///
/// betweenness(v) = sum over unordered pairs {s,t} of sigma_st(v)/sigma_st,
/// divided by (n-1)(n-2)/2. closeness(v) = (r-1)/sum(dist) * (r-1)/(n-1),
/// where r counts the nodes reachable from v including v.
inline Centralities centralities(const PathologyGraph& g) {
  const std::size_t n = g.nodes.size();
  const auto adj = adjacency(g);
  Centralities c{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  constexpr double inf = std::numeric_limits<double>::infinity();

  std::vector<double> dist(n), sigma(n), delta(n);
  std::vector<std::vector<std::size_t>> preds(n);
  std::vector<std::size_t> settled;
  using Item = std::pair<double, std::size_t>;

  for (std::size_t s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(sigma.begin(), sigma.end(), 0.0);
    std::fill(delta.begin(), delta.end(), 0.0);
    for (auto& p : preds) p.clear();
    settled.clear();
    std::vector<char> done(n, 0);
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[s] = 0.0;
    sigma[s] = 1.0;
    heap.push({0.0, s});
    while (!heap.empty()) {
      const auto [d, v] = heap.top();
      heap.pop();
      if (done[v]) continue;
      done[v] = 1;
      settled.push_back(v);
      for (const auto& nb : adj[v]) {
        const std::size_t w = nb.node;
        if (done[w]) continue;
        const double nd = dist[v] + g.edges[nb.edge].length_um;
        if (dist[w] == inf || detail::shorter(nd, dist[w])) {
          dist[w] = nd;
          sigma[w] = sigma[v];
          preds[w].assign(1, v);
          heap.push({nd, w});
        } else if (!detail::shorter(dist[w], nd)) {
          sigma[w] += sigma[v];
          preds[w].push_back(v);
        }
      }
    }
    double total = 0.0;
    for (std::size_t v : settled) total += dist[v];
    const double reach = static_cast<double>(settled.size());
    if (settled.size() > 1 && total > 0.0 && n > 1) {
      c.closeness[s] = (reach - 1.0) / total * ((reach - 1.0) / static_cast<double>(n - 1));
    }
    for (auto it = settled.rbegin(); it != settled.rend(); ++it) {
      const std::size_t w = *it;
      for (std::size_t v : preds[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
      if (w != s) c.betweenness[w] += delta[w];
    }
  }
  if (n > 2) {
    // Each unordered pair was counted from both ends.
    const double scale = 1.0 / (static_cast<double>(n - 1) * static_cast<double>(n - 2));
    for (auto& b : c.betweenness) b *= scale;
  } else {
    std::fill(c.betweenness.begin(), c.betweenness.end(), 0.0);
  }
  return c;
}

/// triangles / (deg*(deg-1)/2), zero below degree 2.
inline std::vector<double> clustering_coefficients(const PathologyGraph& g) {
  const std::size_t n = g.nodes.size();
  std::vector<std::vector<std::size_t>> nb(n);
  for (const auto& e : g.edges) {
    nb[e.u].push_back(e.v);
    nb[e.v].push_back(e.u);
  }
  for (auto& l : nb) std::sort(l.begin(), l.end());
  std::vector<double> out(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t k = nb[v].size();
    if (k < 2) continue;
    std::size_t links = 0;
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) {
        if (std::binary_search(nb[nb[v][i]].begin(), nb[nb[v][i]].end(), nb[v][j])) ++links;
      }
    }
    out[v] = static_cast<double>(links) / (static_cast<double>(k) * static_cast<double>(k - 1) / 2.0);
  }
  return out;
}

inline NodeFeatureMatrix node_features(const PathologyGraph& g) {
  const std::size_t n = g.nodes.size();
  NodeFeatureMatrix f = NodeFeatureMatrix::Zero(static_cast<Eigen::Index>(n), kNodeFeatureCount);
  for (const auto& e : g.edges) {
    f(static_cast<Eigen::Index>(e.u), 0) += 1.0;
    f(static_cast<Eigen::Index>(e.v), 0) += 1.0;
  }
  const auto cc = clustering_coefficients(g);
  const auto cent = centralities(g);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    f(r, 1) = cc[i];
    f(r, 2) = cent.betweenness[i];
    f(r, 3) = cent.closeness[i];
    const int layer = layer_number(g.nodes[i].layer);
    if (layer >= 1) f(r, 3 + layer) = 1.0;
  }
  return f;
}

inline std::string format_node_features(const PathologyGraph& g, const NodeFeatureMatrix& f) {
  std::vector<std::string> header{"node_id"};
  for (const auto& n : node_feature_names()) header.push_back(n);
  text::CsvWriter csv(header);
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    std::vector<std::string> row{g.nodes[static_cast<std::size_t>(i)].record_ref};
    for (Eigen::Index j = 0; j < f.cols(); ++j) row.push_back(text::fmt(f(i, j), 12));
    csv.row(row);
  }
  return csv.str();
}

// ---------------------------------------------------------------------------
// Graph-level metrics

struct GraphMetrics {
  double n_nodes = 0;
  double n_edges = 0;
  double total_edge_length_um = 0;
  double n_components = 0;
  double mean_component_size = 0;
  double largest_component_frac = 0;
  double mean_edge_length_um = 0;
  double alpha_optimal_um = 0;

  double roi_area_mm2 = 0;
  double n_nodes_per_mm2 = 0;
  double n_edges_per_mm2 = 0;
  double total_edge_length_per_mm2 = 0;
  double n_components_per_mm2 = 0;

  double n_nodes_per_alpha = 0;
  double n_edges_per_alpha = 0;
  double total_edge_length_per_alpha = 0;
  double n_components_per_alpha = 0;

  static const std::vector<std::string>& names() {
    static const std::vector<std::string> n = {
        "n_nodes",          "n_edges",          "total_edge_length_um",      "n_components",
        "mean_component_size", "largest_component_frac", "mean_edge_length_um", "alpha_optimal_um",
        "n_nodes_per_mm2",  "n_edges_per_mm2",  "total_edge_length_per_mm2", "n_components_per_mm2",
        "n_nodes_per_alpha", "n_edges_per_alpha", "total_edge_length_per_alpha", "n_components_per_alpha"};
    return n;
  }

  std::vector<double> values() const {
    return {n_nodes,
            n_edges,
            total_edge_length_um,
            n_components,
            mean_component_size,
            largest_component_frac,
            mean_edge_length_um,
            alpha_optimal_um,
            n_nodes_per_mm2,
            n_edges_per_mm2,
            total_edge_length_per_mm2,
            n_components_per_mm2,
            n_nodes_per_alpha,
            n_edges_per_alpha,
            total_edge_length_per_alpha,
            n_components_per_alpha};
  }
};

/// Raw, per-mm^2 and per-alpha metrics. Empty graphs yield zeros throughout;
/// alpha itself is never area-normalized.
inline GraphMetrics graph_summary(const PathologyGraph& g, double roi_area_mm2) {
  if (!(roi_area_mm2 > 0.0)) throw Error(ErrorKind::DegenerateGeometry, "ROI area must be > 0");
  GraphMetrics m;
  const std::size_t n = g.nodes.size();
  m.n_nodes = static_cast<double>(n);
  m.n_edges = static_cast<double>(g.edges.size());
  for (const auto& e : g.edges) m.total_edge_length_um += e.length_um;
  m.mean_edge_length_um = g.edges.empty() ? 0.0 : m.total_edge_length_um / m.n_edges;
  m.alpha_optimal_um = g.alpha_optimal_um;
  if (n > 0) {
    const auto labels = component_labels(n, g.edges);
    const int k = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    m.n_components = k;
    m.mean_component_size = m.n_nodes / m.n_components;
    m.largest_component_frac = static_cast<double>(*std::max_element(sizes.begin(), sizes.end())) / m.n_nodes;
  }
  m.roi_area_mm2 = roi_area_mm2;
  m.n_nodes_per_mm2 = m.n_nodes / roi_area_mm2;
  m.n_edges_per_mm2 = m.n_edges / roi_area_mm2;
  m.total_edge_length_per_mm2 = m.total_edge_length_um / roi_area_mm2;
  m.n_components_per_mm2 = m.n_components / roi_area_mm2;
  if (g.alpha_optimal_um > 0.0) {
    m.n_nodes_per_alpha = m.n_nodes / g.alpha_optimal_um;
    m.n_edges_per_alpha = m.n_edges / g.alpha_optimal_um;
    m.total_edge_length_per_alpha = m.total_edge_length_um / g.alpha_optimal_um;
    m.n_components_per_alpha = m.n_components / g.alpha_optimal_um;
  }
  return m;
}

}  // namespace taugraph
