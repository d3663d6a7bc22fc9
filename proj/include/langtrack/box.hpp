#pragma once

#include <algorithm>
#include <cmath>

namespace langtrack {

/// Axis-aligned box, top-left origin, pixel units.
struct Box {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;

  double cx() const { return x + w / 2.0; }
  double cy() const { return y + h / 2.0; }
  double area() const { return w * h; }
  bool valid() const { return w > 0.0 && h > 0.0; }

  static Box from_center(double cx, double cy, double w, double h) {
    return Box{cx - w / 2.0, cy - h / 2.0, w, h};
  }

  bool intersects(int frame_w, int frame_h) const {
    return valid() && x < frame_w && y < frame_h && x + w > 0.0 && y + h > 0.0;
  }

  /// Clip into the frame keeping at least 1px extent when possible.
  Box clipped(int frame_w, int frame_h) const {
    double x0 = std::max(0.0, x);
    double y0 = std::max(0.0, y);
    double x1 = std::min(static_cast<double>(frame_w), x + w);
    double y1 = std::min(static_cast<double>(frame_h), y + h);
    if (x1 <= x0) {
      x0 = std::clamp(x, 0.0, frame_w - 1.0);
      x1 = x0 + 1.0;
    }
    if (y1 <= y0) {
      y0 = std::clamp(y, 0.0, frame_h - 1.0);
      y1 = y0 + 1.0;
    }
    return Box{x0, y0, x1 - x0, y1 - y0};
  }

  double center_distance(const Box& o) const {
    const double dx = cx() - o.cx();
    const double dy = cy() - o.cy();
    return std::sqrt(dx * dx + dy * dy);
  }
};

}  // namespace langtrack
