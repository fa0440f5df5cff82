#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>

#include <boost/multiprecision/cpp_int.hpp>

namespace taugraph::geom {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

namespace detail {

using Exact = boost::multiprecision::cpp_rational;

inline int sign_of(const Exact& v) { return v.sign(); }

inline int orient2d_exact(Point2 a, Point2 b, Point2 c) {
  const Exact ax(a.x), ay(a.y), bx(b.x), by(b.y), cx(c.x), cy(c.y);
  const Exact det = (ax - cx) * (by - cy) - (ay - cy) * (bx - cx);
  return sign_of(det);
}

inline int incircle_exact(Point2 a, Point2 b, Point2 c, Point2 d) {
  const Exact adx = Exact(a.x) - Exact(d.x), ady = Exact(a.y) - Exact(d.y);
  const Exact bdx = Exact(b.x) - Exact(d.x), bdy = Exact(b.y) - Exact(d.y);
  const Exact cdx = Exact(c.x) - Exact(d.x), cdy = Exact(c.y) - Exact(d.y);
  const Exact alift = adx * adx + ady * ady;
  const Exact blift = bdx * bdx + bdy * bdy;
  const Exact clift = cdx * cdx + cdy * cdy;
  const Exact det = alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) +
                    clift * (adx * bdy - bdx * ady);
  return sign_of(det);
}

constexpr double kEps = std::numeric_limits<double>::epsilon() / 2.0;  // 2^-53
constexpr double kOrientBound = (3.0 + 16.0 * kEps) * kEps;
constexpr double kIncircleBound = (10.0 + 96.0 * kEps) * kEps;

}  // namespace detail

/// Sign of the signed area of (a, b, c): +1 counter-clockwise, -1 clockwise,
/// 0 collinear. Exact for all finite inputs.
inline int orient2d(Point2 a, Point2 b, Point2 c) {
  const double detleft = (a.x - c.x) * (b.y - c.y);
  const double detright = (a.y - c.y) * (b.x - c.x);
  const double det = detleft - detright;
  const double bound = detail::kOrientBound * (std::abs(detleft) + std::abs(detright));
  if (det > bound) return 1;
  if (-det > bound) return -1;
  return detail::orient2d_exact(a, b, c);
}

/// +1 if d lies strictly inside the circle through counter-clockwise (a, b, c),
/// -1 if strictly outside, 0 if cocircular. Exact for all finite inputs.
inline int incircle(Point2 a, Point2 b, Point2 c, Point2 d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double bdxcdy = bdx * cdy, cdxbdy = cdx * bdy;
  const double cdxady = cdx * ady, adxcdy = adx * cdy;
  const double adxbdy = adx * bdy, bdxady = bdx * ady;
  const double alift = adx * adx + ady * ady;
  const double blift = bdx * bdx + bdy * bdy;
  const double clift = cdx * cdx + cdy * cdy;
  const double det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady);
  const double permanent = (std::abs(bdxcdy) + std::abs(cdxbdy)) * alift +
                           (std::abs(cdxady) + std::abs(adxcdy)) * blift +
                           (std::abs(adxbdy) + std::abs(bdxady)) * clift;
  const double bound = detail::kIncircleBound * permanent;
  if (det > bound) return 1;
  if (-det > bound) return -1;
  return detail::incircle_exact(a, b, c, d);
}

/// incircle() with cocircular ties broken by simulation of simplicity: the
/// lifted height of point i is raised by eps^(i+1), so the lowest input index
/// decides. Never returns 0 for four distinct cocircular points.
inline int incircle_perturbed(const Point2* pts, std::size_t ia, std::size_t ib, std::size_t ic,
                              std::size_t id) {
  const Point2 a = pts[ia], b = pts[ib], c = pts[ic], d = pts[id];
  const int s = incircle(a, b, c, d);
  if (s != 0) return s;
  // d(det)/d(z_i) for rows (a, b, c, d): +o(bcd), -o(acd), +o(abd), -o(abc).
  std::array<std::pair<std::size_t, int>, 4> terms{{
      {ia, orient2d(b, c, d)},
      {ib, -orient2d(a, c, d)},
      {ic, orient2d(a, b, d)},
      {id, -orient2d(a, b, c)},
  }};
  std::sort(terms.begin(), terms.end(), [](auto l, auto r) { return l.first < r.first; });
  for (const auto& [idx, cof] : terms) {
    if (cof != 0) return cof;
  }
  return 0;
}

}  // namespace taugraph::geom
