// Test-only reference implementations. These deliberately avoid the library's
// algorithms so they can serve as independent oracles.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "taugraph/spatial_graph.hpp"

namespace oracle {

using Rational = boost::multiprecision::cpp_rational;
using taugraph::Point2;

inline int exact_orient(Point2 a, Point2 b, Point2 c) {
  const Rational v = (Rational(b.x) - Rational(a.x)) * (Rational(c.y) - Rational(a.y)) -
                     (Rational(b.y) - Rational(a.y)) * (Rational(c.x) - Rational(a.x));
  return v.sign();
}

/// Sign of "d strictly inside circumcircle of counter-clockwise (a, b, c)",
/// via the 4x4 lifted determinant expanded directly.
inline int exact_in_circle(Point2 a, Point2 b, Point2 c, Point2 d) {
  // Cheap screen: the same expansion in long double with a deliberately loose
  // bound on its rounding error. Close calls go to rational arithmetic.
  {
    using L = long double;
    const L m[3][3] = {{L(a.x) - d.x, L(a.y) - d.y, 0}, {L(b.x) - d.x, L(b.y) - d.y, 0}, {L(c.x) - d.x, L(c.y) - d.y, 0}};
    L lift[3], mag = 0;
    for (int i = 0; i < 3; ++i) {
      lift[i] = m[i][0] * m[i][0] + m[i][1] * m[i][1];
      mag += lift[i] * (std::abs(m[(i + 1) % 3][0] * m[(i + 2) % 3][1]) + std::abs(m[(i + 1) % 3][1] * m[(i + 2) % 3][0]));
    }
    const L det = lift[0] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]) - lift[1] * (m[0][0] * m[2][1] - m[0][1] * m[2][0]) +
                  lift[2] * (m[0][0] * m[1][1] - m[0][1] * m[1][0]);
    if (std::abs(det) > 1e-9L * mag) return det > 0 ? 1 : -1;
  }
  auto row = [](Point2 p) {
    Rational x(p.x), y(p.y);
    return std::array<Rational, 3>{x, y, x * x + y * y};
  };
  const auto A = row(a), B = row(b), C = row(c), D = row(d);
  std::array<std::array<Rational, 3>, 3> m;
  for (int k = 0; k < 3; ++k) {
    m[0][k] = A[k] - D[k];
    m[1][k] = B[k] - D[k];
    m[2][k] = C[k] - D[k];
  }
  const Rational det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  return det.sign();
}

/// All-triples empty-circumcircle test: an edge is Delaunay iff it belongs to a
/// triangle whose circumcircle contains no other point strictly inside.
/// Valid for point sets without four cocircular points.
inline std::set<std::pair<std::size_t, std::size_t>> brute_force_delaunay(const std::vector<Point2>& p) {
  std::set<std::pair<std::size_t, std::size_t>> edges;
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      for (std::size_t k = j + 1; k < n; ++k) {
        const int o = exact_orient(p[i], p[j], p[k]);
        if (o == 0) continue;
        const std::size_t a = i, b = o > 0 ? j : k, c = o > 0 ? k : j;
        bool empty = true;
        for (std::size_t l = 0; l < n && empty; ++l) {
          if (l == i || l == j || l == k) continue;
          if (exact_in_circle(p[a], p[b], p[c], p[l]) > 0) empty = false;
        }
        if (empty) {
          edges.insert({i, j});
          edges.insert({i, k});
          edges.insert({j, k});
        }
      }
    }
  }
  return edges;
}

struct PairCentrality {
  std::vector<double> betweenness;
  std::vector<double> closeness;
};

/// Exhaustive oracle: enumerates every simple path between every pair, keeps
/// the shortest ones, and counts how often each node is interior to them.
/// Closeness comes from the same enumerated distances.
inline PairCentrality exhaustive_centrality(const taugraph::PathologyGraph& g, double tie_tol = 1e-12) {
  const std::size_t n = g.nodes.size();
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
  for (const auto& e : g.edges) {
    adj[e.u].push_back({e.v, e.length_um});
    adj[e.v].push_back({e.u, e.length_um});
  }
  PairCentrality out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, std::numeric_limits<double>::infinity()));

  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = s + 1; t < n; ++t) {
      std::vector<std::pair<double, std::vector<std::size_t>>> paths;
      std::vector<std::size_t> stack{s};
      std::vector<char> on(n, 0);
      on[s] = 1;
      std::function<void(std::size_t, double)> dfs = [&](std::size_t v, double len) {
        if (v == t) {
          paths.push_back({len, stack});
          return;
        }
        for (auto [w, l] : adj[v]) {
          if (on[w]) continue;
          on[w] = 1;
          stack.push_back(w);
          dfs(w, len + l);
          stack.pop_back();
          on[w] = 0;
        }
      };
      dfs(s, 0.0);
      if (paths.empty()) continue;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : paths) best = std::min(best, p.first);
      dist[s][t] = dist[t][s] = best;
      double count = 0.0;
      std::vector<double> through(n, 0.0);
      for (const auto& [len, nodes] : paths) {
        if (len > best + tie_tol * best) continue;
        count += 1.0;
        for (std::size_t i = 1; i + 1 < nodes.size(); ++i) through[nodes[i]] += 1.0;
      }
      for (std::size_t v = 0; v < n; ++v) out.betweenness[v] += through[v] / count;
    }
  }
  if (n > 2) {
    const double norm = static_cast<double>(n - 1) * static_cast<double>(n - 2) / 2.0;
    for (auto& b : out.betweenness) b /= norm;
  }
  for (std::size_t v = 0; v < n; ++v) {
    double total = 0.0;
    double reach = 1.0;
    for (std::size_t u = 0; u < n; ++u) {
      if (u != v && std::isfinite(dist[v][u])) {
        total += dist[v][u];
        reach += 1.0;
      }
    }
    if (reach > 1.0 && n > 1) out.closeness[v] = (reach - 1.0) / total * (reach - 1.0) / static_cast<double>(n - 1);
  }
  return out;
}

}  // namespace oracle
