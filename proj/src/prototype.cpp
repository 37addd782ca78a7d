#include "lift3d/prototype.hpp"

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lift3d/errors.hpp"

namespace lift3d {

using nlohmann::json;

Point3 Prototype::centroid() const {
  Point3 c;
  if (vertices.empty()) return c;
  for (const auto& v : vertices) c = c + v;
  return (1.0 / static_cast<double>(vertices.size())) * c;
}

double Prototype::bounding_diameter() const {
  if (vertices.empty()) return 0.0;
  Point3 lo = vertices.front(), hi = vertices.front();
  for (const auto& v : vertices) {
    lo.x = std::min(lo.x, v.x); lo.y = std::min(lo.y, v.y); lo.z = std::min(lo.z, v.z);
    hi.x = std::max(hi.x, v.x); hi.y = std::max(hi.y, v.y); hi.z = std::max(hi.z, v.z);
  }
  return norm(hi - lo);
}

const std::vector<Prototype>& PrototypeRegistry::for_class(const std::string& cls) const {
  auto it = by_class.find(cls);
  if (it == by_class.end() || it->second.empty())
    throw NoProtoForClass("no prototypes registered for class '" + cls + "'");
  return it->second;
}

std::vector<std::string> PrototypeRegistry::classes() const {
  std::vector<std::string> out;
  for (const auto& [cls, protos] : by_class) out.push_back(cls);
  return out;
}

std::vector<std::string> PrototypeRegistry::vocabulary(const std::string& cls) const {
  std::set<std::string> names;
  for (const auto& proto : for_class(cls))
    for (const auto& [name, p] : proto.keypoints) names.insert(name);
  return {names.begin(), names.end()};
}

void parse_obj(const std::filesystem::path& path, std::vector<Point3>& vertices,
               std::vector<std::array<int, 3>>& faces) {
  std::ifstream in(path);
  if (!in || std::filesystem::is_directory(path)) throw ParseError("cannot open mesh: " + path.string());
  vertices.clear();
  faces.clear();
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Point3 p;
      if (!(ls >> p.x >> p.y >> p.z)) fail("malformed vertex");
      vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        // Accept "i", "i/j", "i/j/k"; only the vertex index is used.
        size_t slash = tok.find('/');
        if (slash != std::string::npos) tok = tok.substr(0, slash);
        int i = 0;
        try {
          i = std::stoi(tok);
        } catch (const std::exception&) {
          fail("malformed face index '" + tok + "'");
        }
        if (i < 1 || i > static_cast<int>(vertices.size()))
          fail("face index out of range: " + std::to_string(i));
        idx.push_back(i - 1);
      }
      if (idx.size() < 3) fail("face with fewer than 3 vertices");
      for (size_t k = 2; k < idx.size(); ++k)
        faces.push_back({idx[0], idx[k - 1], idx[k]});
    }
    // Other OBJ directives (vn, vt, o, usemtl, ...) are ignored.
  }
  if (vertices.empty()) throw ParseError(path.string() + ": mesh has no vertices");
}

std::map<std::string, Point3> load_keypoints3d(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in || std::filesystem::is_directory(path))
    throw MissingKeypointFile("cannot open keypoint file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw SchemaError(path.string() + ": keypoint file must be an object");
  std::map<std::string, Point3> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const json& v = it.value();
    if (!v.is_array() || v.size() != 3)
      throw SchemaError(path.string() + ": keypoint '" + it.key() + "' must be [x, y, z]");
    out[it.key()] = Point3{v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
  }
  return out;
}

PrototypeRegistry load_registry(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in || std::filesystem::is_directory(manifest_path))
    throw ParseError("cannot open manifest: " + manifest_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw SchemaError(manifest_path.string() + ": manifest must be a list");
  if (j.empty()) throw EmptyClass(manifest_path.string() + ": manifest lists no prototypes");

  const auto base = manifest_path.parent_path();
  PrototypeRegistry registry;
  for (const json& entry : j) {
    for (const char* key : {"class", "id", "mesh", "keypoints"})
      if (!entry.contains(key))
        throw SchemaError(manifest_path.string() + ": manifest entry missing '" +
                          std::string(key) + "'");
    Prototype proto;
    proto.class_label = entry["class"].get<std::string>();
    proto.id = entry["id"].get<std::string>();
    if (proto.class_label.empty())
      throw EmptyClass(manifest_path.string() + ": prototype '" + proto.id +
                       "' has an empty class");
    const auto mesh_path = base / entry["mesh"].get<std::string>();
    if (!std::filesystem::exists(mesh_path))
      throw DanglingReference("mesh file not found: " + mesh_path.string());
    parse_obj(mesh_path, proto.vertices, proto.faces);
    const auto kp_path = base / entry["keypoints"].get<std::string>();
    if (!std::filesystem::exists(kp_path))
      throw MissingKeypointFile("keypoint file not found: " + kp_path.string());
    proto.keypoints = load_keypoints3d(kp_path);

    const Point3 c = proto.centroid();
    const double diam = proto.bounding_diameter();
    if (diam > 0.0 && norm(c) > 1e-3 * diam) {
      std::cerr << "warning: prototype '" << proto.id << "' is off-center by " << norm(c)
                << " (recentering)\n";
      for (auto& v : proto.vertices) v = v - c;
      for (auto& [name, p] : proto.keypoints) p = p - c;
    }
    registry.by_class[proto.class_label].push_back(std::move(proto));
  }
  return registry;
}

void save_registry(const PrototypeRegistry& registry, const std::filesystem::path& dir,
                   const std::string& manifest_name) {
  std::filesystem::create_directories(dir);
  json manifest = json::array();
  for (const auto& [cls, protos] : registry.by_class) {
    for (const auto& proto : protos) {
      const std::string mesh_name = proto.id + ".obj";
      const std::string kp_name = proto.id + "_keypoints.json";
      {
        std::ofstream obj(dir / mesh_name);
        obj.precision(17);
        for (const auto& v : proto.vertices)
          obj << "v " << v.x << " " << v.y << " " << v.z << "\n";
        for (const auto& f : proto.faces)
          obj << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
      }
      {
        json kps = json::object();
        for (const auto& [name, p] : proto.keypoints) kps[name] = {p.x, p.y, p.z};
        std::ofstream out(dir / kp_name);
        out << kps.dump(2) << "\n";
      }
      manifest.push_back({{"class", cls},
                          {"id", proto.id},
                          {"mesh", mesh_name},
                          {"keypoints", kp_name}});
    }
  }
  std::ofstream out(dir / manifest_name);
  out << manifest.dump(2) << "\n";
}

}  // namespace lift3d
