#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lift3d/geometry.hpp"

namespace lift3d {

// Rigid 3D shape prototype: triangle mesh plus named 3D keypoints, expressed
// in object coordinates centered at the origin.
struct Prototype {
  std::string class_label;
  std::string id;
  std::vector<Point3> vertices;
  std::vector<std::array<int, 3>> faces;  // zero-based vertex indices
  std::map<std::string, Point3> keypoints;

  Point3 centroid() const;
  double bounding_diameter() const;
};

struct PrototypeRegistry {
  // Class -> prototypes, in manifest order.
  std::map<std::string, std::vector<Prototype>> by_class;

  const std::vector<Prototype>& for_class(const std::string& cls) const;
  std::vector<std::string> classes() const;
  // Union of keypoint names over the class's prototypes.
  std::vector<std::string> vocabulary(const std::string& cls) const;
};

// Minimal OBJ subset: "v x y z" and "f i j k" with 1-based indices
// ("f a/b/c ..." vertex references are accepted, quads are fan-triangulated).
void parse_obj(const std::filesystem::path& path, std::vector<Point3>& vertices,
               std::vector<std::array<int, 3>>& faces);

// Keypoint file: JSON object {name: [x, y, z], ...}.
std::map<std::string, Point3> load_keypoints3d(const std::filesystem::path& path);

// Manifest: JSON list of {class, id, mesh, keypoints}; mesh/keypoint paths are
// resolved relative to the manifest's directory. Prototypes whose vertex
// centroid strays more than 1e-3 * bounding diameter from the origin are
// recentered (vertices and keypoints) with a warning on stderr.
PrototypeRegistry load_registry(const std::filesystem::path& manifest_path);

void save_registry(const PrototypeRegistry& registry, const std::filesystem::path& dir,
                   const std::string& manifest_name = "registry.json");

}  // namespace lift3d
