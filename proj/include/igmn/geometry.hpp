#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace igmn {

// Axis-aligned box. (x, y) is the top-left corner with x horizontal,
// h the vertical extent and w the horizontal extent. Coordinates are
// absolute pixels and may be negative (boxes are never clipped here).
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double h = 1.0;
  double w = 1.0;

  double center_x() const { return x + w / 2.0; }
  double center_y() const { return y + h / 2.0; }
  double area() const { return h * w; }
  bool valid() const { return h > 0.0 && w > 0.0; }
};

inline bool operator==(const BoundingBox& a, const BoundingBox& b) {
  return a.x == b.x && a.y == b.y && a.h == b.h && a.w == b.w;
}

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double iy = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

// Closed-interval membership: points on the boundary count as inside.
inline bool contains(const BoundingBox& b, double px, double py) {
  return px >= b.x && px <= b.x + b.w && py >= b.y && py <= b.y + b.h;
}

// Center-preserving rescale.
inline BoundingBox scale_box(const BoundingBox& b, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("scale_box: factor must be positive");
  BoundingBox r;
  r.h = b.h * factor;
  r.w = b.w * factor;
  r.x = b.center_x() - r.w / 2.0;
  r.y = b.center_y() - r.h / 2.0;
  return r;
}

inline BoundingBox translate(const BoundingBox& b, double dx, double dy) {
  return BoundingBox{b.x + dx, b.y + dy, b.h, b.w};
}

// Absolute sample point of grid cell (gx, gy) in a k x k RoI over `b`.
// The default pairs the horizontal grid step with the box height, which is
// how the embedding arithmetic is defined; axis_swap pairs the axes the
// conventional way instead. Every consumer of RoI cells (geometry
// embedding, interference masks, the synthetic renderer) must go through
// this one function so they agree on where a cell sits.
inline std::pair<double, double> roi_grid_point(const BoundingBox& b, int gx, int gy, int k,
                                                bool axis_swap = false) {
  if (!axis_swap) return {b.x + gx * b.h / k, b.y + gy * b.w / k};
  return {b.x + gx * b.w / k, b.y + gy * b.h / k};
}

// Polar angle of (px, py) about (cx, cy) in (-pi, pi]; a zero offset maps to 0.
inline double polar_angle(double cx, double cy, double px, double py) {
  const double dx = px - cx;
  const double dy = py - cy;
  if (dx == 0.0 && dy == 0.0) return 0.0;
  double a = std::atan2(dy, dx);
  if (a <= -std::numbers::pi) a = std::numbers::pi;
  return a;
}

}  // namespace igmn
