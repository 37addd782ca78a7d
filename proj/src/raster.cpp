#include "lift3d/raster.hpp"

#include <algorithm>
#include <cmath>

namespace lift3d {

namespace {

inline double edge(const Point2& a, const Point2& b, double px, double py) {
  return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

}  // namespace

Mask render_silhouette(const Prototype& proto, const CameraPose& pose, int width, int height) {
  Mask mask(width, height);
  for (const auto& face : proto.faces) {
    Point2 p[3];
    bool in_front = true;
    for (int k = 0; k < 3 && in_front; ++k) {
      auto proj = project(pose, proto.vertices[face[k]]);
      if (!proj) in_front = false;
      else p[k] = *proj;
    }
    if (!in_front) continue;

    const double area2 = edge(p[0], p[1], p[2].x, p[2].y);
    if (area2 == 0.0) continue;

    const double xlo = std::min({p[0].x, p[1].x, p[2].x});
    const double xhi = std::max({p[0].x, p[1].x, p[2].x});
    const double ylo = std::min({p[0].y, p[1].y, p[2].y});
    const double yhi = std::max({p[0].y, p[1].y, p[2].y});
    // Pixel centers sit at x + 0.5; clamp the candidate range to the image.
    const int x0 = std::max(0, static_cast<int>(std::floor(xlo - 0.5)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(xhi - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(ylo - 0.5)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(yhi - 0.5)));

    for (int y = y0; y <= y1; ++y) {
      const double cy = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        if (mask.at(x, y)) continue;
        const double cx = x + 0.5;
        const double w0 = edge(p[0], p[1], cx, cy);
        const double w1 = edge(p[1], p[2], cx, cy);
        const double w2 = edge(p[2], p[0], cx, cy);
        // Inclusive test for either winding: boundary pixels count as inside.
        const bool inside = (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0) ||
                            (w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0);
        if (inside) mask.set(x, y, true);
      }
    }
  }
  return mask;
}

}  // namespace lift3d
