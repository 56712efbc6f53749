#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace arsls {

// Screen space: origin top-left, x rightward, y downward, pixels.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
  Point operator+(Point o) const { return {x + o.x, y + o.y}; }
  Point operator-(Point o) const { return {x - o.x, y - o.y}; }
  Point operator*(double s) const { return {x * s, y * s}; }
};

struct Segment {
  Point a;
  Point b;

  friend bool operator==(const Segment&, const Segment&) = default;
  Point at(double t) const { return a + (b - a) * t; }
};

struct Box {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  bool contains(Point p) const {
    return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
  }
};

using Polygon = std::vector<Point>;

Box bounding_box(std::span<const Point> poly);

/// Even-odd point-in-polygon; points on an edge or vertex count as inside.
bool point_in_polygon(std::span<const Point> poly, Point p);

bool point_on_segment(Point a, Point b, Point p, double eps = 1e-9);

/// True when closed segments [a,b] and [c,d] share at least one point.
bool segments_intersect(Point a, Point b, Point c, Point d);

/// A polygon is simple when no two non-adjacent edges touch and no two
/// adjacent edges overlap beyond their shared vertex.
bool is_simple(std::span<const Point> poly);

bool all_finite(std::span<const Point> poly);

}  // namespace arsls
