#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "taugraph/error.hpp"
#include "taugraph/predicates.hpp"

namespace taugraph {

using geom::Point2;

enum class ObjectType { plaque, tangle };
enum class Diagnosis { cAD, rpAD };
enum class Provenance { real, synthetic };

/// Cortical layer 1..6, or unassigned (0).
enum class Layer : std::uint8_t { unassigned = 0, L1 = 1, L2, L3, L4, L5, L6 };

constexpr int kLayerCount = 6;

inline int layer_number(Layer l) { return static_cast<int>(l); }
inline Layer layer_from_number(int k) {
  return (k >= 1 && k <= kLayerCount) ? static_cast<Layer>(k) : Layer::unassigned;
}

inline std::string_view to_string(ObjectType t) { return t == ObjectType::plaque ? "plaque" : "tangle"; }
inline std::string_view to_string(Diagnosis d) { return d == Diagnosis::cAD ? "cAD" : "rpAD"; }
inline std::string_view to_string(Provenance p) { return p == Provenance::real ? "real" : "synthetic"; }
inline std::string layer_token(Layer l) {
  return l == Layer::unassigned ? "NA" : std::to_string(layer_number(l));
}

inline std::optional<ObjectType> parse_object_type(std::string_view s) {
  if (s == "plaque") return ObjectType::plaque;
  if (s == "tangle") return ObjectType::tangle;
  return std::nullopt;
}
inline std::optional<Diagnosis> parse_diagnosis(std::string_view s) {
  if (s == "cAD") return Diagnosis::cAD;
  if (s == "rpAD") return Diagnosis::rpAD;
  return std::nullopt;
}
inline std::optional<Layer> parse_layer(std::string_view s) {
  if (s == "NA") return Layer::unassigned;
  if (s.size() == 1 && s[0] >= '1' && s[0] <= '6') return layer_from_number(s[0] - '0');
  return std::nullopt;
}

/// Class index used by every classifier: cAD = 0, rpAD = 1.
inline int class_index(Diagnosis d) { return d == Diagnosis::cAD ? 0 : 1; }
inline Diagnosis diagnosis_from_class(int c) { return c == 0 ? Diagnosis::cAD : Diagnosis::rpAD; }

struct AnnotationRecord {
  std::string id;
  std::string slide_id;
  ObjectType object_type = ObjectType::plaque;
  double x_um = 0.0;
  double y_um = 0.0;
  double area_um2 = 0.0;
  Layer layer = Layer::unassigned;

  Point2 position() const { return {x_um, y_um}; }
  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

struct SlideDataset {
  std::string slide_id;
  std::string patient_id;
  Diagnosis diagnosis = Diagnosis::cAD;
  std::vector<Point2> roi_polygon;
  double resolution_nm_per_px = 1.0;
  std::vector<AnnotationRecord> records;

  friend bool operator==(const SlideDataset&, const SlideDataset&) = default;
};

struct Cohort {
  std::vector<SlideDataset> slides;
  Provenance provenance = Provenance::real;
  std::optional<std::uint64_t> seed;
};

// ---------------------------------------------------------------------------
// Polygon geometry (coordinates in micrometers)

/// Signed shoelace area in um^2; positive for counter-clockwise vertex order.
inline double signed_area_um2(const std::vector<Point2>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  // Translate to the first vertex to keep the sum well conditioned.
  const Point2 o = poly[0];
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a{poly[i].x - o.x, poly[i].y - o.y};
    const Point2 b{poly[(i + 1) % n].x - o.x, poly[(i + 1) % n].y - o.y};
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

/// ROI area in mm^2. Throws DegenerateGeometry for fewer than 3 vertices or
/// zero area.
inline double roi_area(const std::vector<Point2>& polygon) {
  if (polygon.size() < 3) throw Error(ErrorKind::DegenerateGeometry, "ROI needs at least 3 vertices");
  const double a = std::abs(signed_area_um2(polygon));
  if (!(a > 0.0)) throw Error(ErrorKind::DegenerateGeometry, "ROI has zero area");
  return a / 1e6;
}

namespace detail {

inline bool on_segment(Point2 p, Point2 a, Point2 b) {
  return geom::orient2d(a, b, p) == 0 && std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
         std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

inline bool segments_intersect(Point2 a, Point2 b, Point2 c, Point2 d) {
  const int o1 = geom::orient2d(a, b, c), o2 = geom::orient2d(a, b, d);
  const int o3 = geom::orient2d(c, d, a), o4 = geom::orient2d(c, d, b);
  if (o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0) return true;
  return on_segment(c, a, b) || on_segment(d, a, b) || on_segment(a, c, d) || on_segment(b, c, d);
}

}  // namespace detail

/// True when no two non-adjacent edges touch and adjacent edges share only
/// their common vertex.
inline bool is_simple_polygon(const std::vector<Point2>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (poly[i] == poly[(i + 1) % n]) return false;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = poly[i], b = poly[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      const Point2 c = poly[j], d = poly[(j + 1) % n];
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) {
        // Adjacent edges may only overlap at the shared vertex; a fold-back
        // (collinear overlap) is a self-intersection.
        const Point2 shared = (j == i + 1) ? b : a;
        const Point2 other_first = (j == i + 1) ? a : b;
        const Point2 other_second = (j == i + 1) ? d : c;
        if (geom::orient2d(other_first, shared, other_second) == 0) {
          const double dot = (other_first.x - shared.x) * (other_second.x - shared.x) +
                             (other_first.y - shared.y) * (other_second.y - shared.y);
          if (dot > 0.0) return false;
        }
        continue;
      }
      if (detail::segments_intersect(a, b, c, d)) return false;
    }
  }
  return true;
}

/// Point-in-polygon with the boundary counted as inside.
inline bool inside_or_on(const std::vector<Point2>& poly, Point2 p) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2 a = poly[j], b = poly[i];
    if (detail::on_segment(p, a, b)) return true;
    if ((a.y > p.y) != (b.y > p.y)) {
      // Exact side test instead of computing the crossing abscissa.
      const int o = geom::orient2d(a, b, p);
      if ((b.y > a.y) ? o > 0 : o < 0) inside = !inside;
    }
  }
  return inside;
}

}  // namespace taugraph
