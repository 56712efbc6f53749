#include "arsls/geometry.hpp"

#include <algorithm>
#include <limits>

namespace arsls {
namespace {

double cross(Point o, Point a, Point b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

int orientation(Point o, Point a, Point b) {
  const double c = cross(o, a, b);
  if (c > 0) return 1;
  if (c < 0) return -1;
  return 0;
}

bool within_box(Point a, Point b, Point p) {
  return p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) &&
         p.y >= std::min(a.y, b.y) && p.y <= std::max(a.y, b.y);
}

}  // namespace

Box bounding_box(std::span<const Point> poly) {
  Box box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Point& p : poly) {
    box.min_x = std::min(box.min_x, p.x);
    box.min_y = std::min(box.min_y, p.y);
    box.max_x = std::max(box.max_x, p.x);
    box.max_y = std::max(box.max_y, p.y);
  }
  return box;
}

bool point_on_segment(Point a, Point b, Point p, double eps) {
  if (!within_box(a, b, p)) return false;
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  if (len == 0.0) return std::hypot(p.x - a.x, p.y - a.y) <= eps;
  return std::abs(cross(a, b, p)) / len <= eps;
}

bool point_in_polygon(std::span<const Point> poly, Point p) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if (point_on_segment(a, b, p)) return true;
    // Half-open crossing rule on y avoids double counting shared vertices.
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

bool segments_intersect(Point a, Point b, Point c, Point d) {
  const int o1 = orientation(a, b, c);
  const int o2 = orientation(a, b, d);
  const int o3 = orientation(c, d, a);
  const int o4 = orientation(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && within_box(a, b, c)) return true;
  if (o2 == 0 && within_box(a, b, d)) return true;
  if (o3 == 0 && within_box(c, d, a)) return true;
  if (o4 == 0 && within_box(c, d, b)) return true;
  return false;
}

bool is_simple(std::span<const Point> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (poly[i] == poly[(i + 1) % n]) return false;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Point a = poly[i];
    const Point b = poly[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      const Point c = poly[j];
      const Point d = poly[(j + 1) % n];
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) {
        // Adjacent edges share one vertex; they must not fold back over each other.
        const Point shared = (j == i + 1) ? b : a;
        const Point far_self = (j == i + 1) ? a : b;
        const Point far_other = (j == i + 1) ? d : c;
        if (orientation(shared, far_self, far_other) == 0 &&
            (within_box(shared, far_self, far_other) || within_box(shared, far_other, far_self))) {
          return false;
        }
        continue;
      }
      if (segments_intersect(a, b, c, d)) return false;
    }
  }
  return true;
}

bool all_finite(std::span<const Point> poly) {
  return std::all_of(poly.begin(), poly.end(),
                     [](Point p) { return std::isfinite(p.x) && std::isfinite(p.y); });
}

}  // namespace arsls
