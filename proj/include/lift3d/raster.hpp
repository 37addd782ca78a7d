#pragma once

#include "lift3d/geometry.hpp"
#include "lift3d/mask.hpp"
#include "lift3d/prototype.hpp"

namespace lift3d {

// Silhouette of the prototype under the pose: union of the filled projected
// triangles, no back-face culling, no z-buffering. A pixel (x, y) is
// foreground iff its center (x + 0.5, y + 0.5) lies inside or on the boundary
// of some projected triangle. Triangles with any vertex at or behind the
// camera plane are discarded whole, as are triangles with exactly zero
// projected area.
Mask render_silhouette(const Prototype& proto, const CameraPose& pose, int width, int height);

}  // namespace lift3d
