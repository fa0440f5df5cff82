#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <unordered_map>
#include <utility>
#include <vector>

#include "taugraph/error.hpp"
#include "taugraph/predicates.hpp"

namespace taugraph::geom {

using Edge = std::pair<std::size_t, std::size_t>;  // first < second

struct Triangulation {
  std::vector<std::array<std::size_t, 3>> triangles;  // counter-clockwise
  std::vector<Edge> edges;                             // sorted, first < second
};

namespace detail {

inline std::uint64_t edge_key(std::size_t a, std::size_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

class TriangleMesh {
 public:
  explicit TriangleMesh(const std::vector<Point2>& pts) : pts_(pts) {}

  void add(std::size_t a, std::size_t b, std::size_t c) {
    const std::size_t t = tris_.size();
    tris_.push_back({a, b, c});
    link(a, b, t);
    link(b, c, t);
    link(c, a, t);
    stack_.push_back(edge_key(a, b));
    stack_.push_back(edge_key(b, c));
    stack_.push_back(edge_key(c, a));
  }

  /// Lawson flips until every interior edge is (perturbed) locally Delaunay.
  void legalize() {
    while (!stack_.empty()) {
      const std::uint64_t key = stack_.back();
      stack_.pop_back();
      const auto it = adj_.find(key);
      if (it == adj_.end()) continue;
      const auto [t1, t2] = it->second;
      if (t1 < 0 || t2 < 0) continue;
      const std::size_t a = key >> 32, b = key & 0xffffffffULL;
      // Rotate so that t1 = (p, q, c) contains the edge as p->q.
      auto [p, q, c] = oriented(static_cast<std::size_t>(t1), a, b);
      const std::size_t d = opposite(static_cast<std::size_t>(t2), p, q);
      if (incircle_perturbed(pts_.data(), p, q, c, d) <= 0) continue;
      flip(static_cast<std::size_t>(t1), static_cast<std::size_t>(t2), p, q, c, d);
    }
  }

  const std::vector<std::array<std::size_t, 3>>& triangles() const { return tris_; }

  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(adj_.size());
    for (const auto& [key, _] : adj_) out.emplace_back(key >> 32, key & 0xffffffffULL);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  void link(std::size_t a, std::size_t b, std::size_t t) {
    auto [it, inserted] = adj_.try_emplace(edge_key(a, b), std::array<long, 2>{static_cast<long>(t), -1});
    if (!inserted) it->second[1] = static_cast<long>(t);
  }

  void relink(std::size_t a, std::size_t b, std::size_t from, std::size_t to) {
    auto& slot = adj_.at(edge_key(a, b));
    if (slot[0] == static_cast<long>(from)) {
      slot[0] = static_cast<long>(to);
    } else {
      slot[1] = static_cast<long>(to);
    }
  }

  std::array<std::size_t, 3> oriented(std::size_t t, std::size_t a, std::size_t b) const {
    const auto& tr = tris_[t];
    for (int i = 0; i < 3; ++i) {
      const std::size_t u = tr[i], v = tr[(i + 1) % 3], w = tr[(i + 2) % 3];
      if ((u == a && v == b) || (u == b && v == a)) return {u, v, w};
    }
    return tr;  // unreachable for a consistent mesh
  }

  std::size_t opposite(std::size_t t, std::size_t p, std::size_t q) const {
    for (std::size_t v : tris_[t]) {
      if (v != p && v != q) return v;
    }
    return tris_[t][0];
  }

  // Triangles (p,q,c) and (q,p,d) become (p,d,c) and (d,q,c).
  void flip(std::size_t t1, std::size_t t2, std::size_t p, std::size_t q, std::size_t c, std::size_t d) {
    adj_.erase(edge_key(p, q));
    tris_[t1] = {p, d, c};
    tris_[t2] = {d, q, c};
    relink(p, d, t2, t1);
    relink(q, c, t1, t2);
    adj_[edge_key(c, d)] = {static_cast<long>(t1), static_cast<long>(t2)};
    stack_.push_back(edge_key(p, d));
    stack_.push_back(edge_key(d, q));
    stack_.push_back(edge_key(q, c));
    stack_.push_back(edge_key(c, p));
  }

  const std::vector<Point2>& pts_;
  std::vector<std::array<std::size_t, 3>> tris_;
  std::unordered_map<std::uint64_t, std::array<long, 2>> adj_;
  std::vector<std::uint64_t> stack_;
};

}  // namespace detail

/// Delaunay triangulation of distinct points.
///
/// Points are inserted in lexicographic order, each one outside the current
/// convex hull, and fanned to the visible hull edges; Lawson flips then make
/// every edge locally Delaunay. Predicates are exact, and cocircular ties use
/// the index-ordered symbolic perturbation of incircle_perturbed(), so the
/// result is unique for any input.
///
/// Throws DegenerateGeometry for fewer than 3 points, coincident points, or
/// all-collinear input.
inline Triangulation delaunay_triangulation(const std::vector<Point2>& pts) {
  const std::size_t n = pts.size();
  if (n < 3) throw Error(ErrorKind::DegenerateGeometry, "Delaunay needs at least 3 points");
  if (n >= (std::size_t{1} << 32)) throw Error(ErrorKind::DegenerateGeometry, "too many points");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pts[a].x < pts[b].x || (pts[a].x == pts[b].x && pts[a].y < pts[b].y);
  });
  for (std::size_t i = 1; i < n; ++i) {
    if (pts[order[i]] == pts[order[i - 1]]) throw Error(ErrorKind::DegenerateGeometry, "coincident points");
  }

  // Leading collinear run closes with the first point off its line.
  std::size_t k = 2;
  while (k < n && orient2d(pts[order[0]], pts[order[1]], pts[order[k]]) == 0) ++k;
  if (k == n) throw Error(ErrorKind::DegenerateGeometry, "all points are collinear");

  detail::TriangleMesh mesh(pts);
  const std::size_t apex = order[k];
  const bool left = orient2d(pts[order[0]], pts[order[1]], pts[apex]) > 0;
  std::vector<std::size_t> hull;  // counter-clockwise
  for (std::size_t i = 0; i + 1 < k; ++i) {
    if (left) {
      mesh.add(order[i], order[i + 1], apex);
    } else {
      mesh.add(order[i + 1], order[i], apex);
    }
  }
  if (left) {
    for (std::size_t i = 0; i < k; ++i) hull.push_back(order[i]);
    hull.push_back(apex);
  } else {
    hull.push_back(order[0]);
    hull.push_back(apex);
    for (std::size_t i = k - 1; i >= 1; --i) hull.push_back(order[i]);
  }

  std::vector<char> visible;
  for (std::size_t s = k + 1; s < n; ++s) {
    const std::size_t p = order[s];
    const std::size_t h = hull.size();
    visible.assign(h, 0);
    for (std::size_t i = 0; i < h; ++i) {
      visible[i] = orient2d(pts[hull[i]], pts[hull[(i + 1) % h]], pts[p]) < 0;
    }
    // Visible edges form one contiguous cyclic run [first, last].
    std::size_t first = 0;
    while (!(visible[first] && !visible[(first + h - 1) % h])) ++first;
    std::size_t last = first;
    while (visible[(last + 1) % h]) last = (last + 1) % h;
    for (std::size_t i = first;; i = (i + 1) % h) {
      mesh.add(hull[i], p, hull[(i + 1) % h]);
      if (i == last) break;
    }
    std::vector<std::size_t> next;
    next.reserve(h + 1);
    for (std::size_t i = (last + 1) % h;; i = (i + 1) % h) {
      next.push_back(hull[i]);
      if (i == first) break;
    }
    next.push_back(p);
    hull = std::move(next);
  }

  mesh.legalize();
  Triangulation out;
  out.triangles = mesh.triangles();
  out.edges = mesh.edges();
  return out;
}

/// Edge set of the Delaunay triangulation.
inline std::vector<Edge> delaunay(const std::vector<Point2>& pts) { return delaunay_triangulation(pts).edges; }

}  // namespace taugraph::geom
