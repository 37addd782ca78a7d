#include "lift3d/synth.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "lift3d/errors.hpp"

namespace lift3d {

using nlohmann::json;

namespace {

std::string scene_id(int index) {
  std::ostringstream os;
  os << "img_" << std::setfill('0') << std::setw(5) << index;
  return os.str();
}

double snap(double value, double grid) {
  return grid > 0.0 ? std::round(value / grid) * grid : value;
}

}  // namespace

SynthData gen_synthetic(const PrototypeRegistry& registry, const SynthConfig& config) {
  if (config.scenes <= 0) throw SchemaError("scene count must be positive");
  const auto classes = registry.classes();
  if (classes.empty()) throw EmptyClass("registry has no classes");

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SynthData data;
  data.dataset.root.clear();
  for (const auto& cls : classes)
    data.dataset.vocabulary[cls] = registry.vocabulary(cls);

  std::vector<FeatureRow> feature_rows;
  std::vector<Eigen::RowVector3d> feature_vecs;

  for (int s = 0; s < config.scenes; ++s) {
    const std::string image = scene_id(s);
    const std::string cls = classes[rng() % classes.size()];
    const auto& protos = registry.for_class(cls);
    const Prototype& proto = protos[rng() % protos.size()];

    CameraPose pose;
    pose.focal = config.focal;
    std::map<std::string, Point2> projected;
    BBox box;
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      pose.azimuth = normalize_angle(snap(uniform(config.azimuth_lo, config.azimuth_hi),
                                          config.angle_grid));
      pose.elevation = snap(uniform(config.elev_lo, config.elev_hi), config.angle_grid);
      pose.theta = snap(uniform(config.theta_lo, config.theta_hi), config.angle_grid);
      pose.distance = uniform(config.dist_lo, config.dist_hi);
      pose.tx = uniform(config.tx_lo, config.tx_hi);
      pose.ty = uniform(config.ty_lo, config.ty_hi);

      projected.clear();
      bool ok = true;
      for (const auto& [name, p3] : proto.keypoints) {
        auto p = project(pose, p3);
        if (!p) { ok = false; break; }
        projected[name] = *p;
      }
      if (!ok) continue;

      bool first = true;
      for (const auto& v : proto.vertices) {
        auto p = project(pose, v);
        if (!p) { ok = false; break; }
        if (first) {
          box = {p->x, p->y, p->x, p->y};
          first = false;
        } else {
          box.xmin = std::min(box.xmin, p->x);
          box.ymin = std::min(box.ymin, p->y);
          box.xmax = std::max(box.xmax, p->x);
          box.ymax = std::max(box.ymax, p->y);
        }
      }
      placed = ok && box.valid();
    }
    if (!placed)
      throw Error("could not place scene " + image + "; check the sampling bounds");

    data.dataset.image_index[image] = static_cast<int>(data.dataset.images.size());
    data.dataset.images.push_back({image, config.image_width, config.image_height, ""});

    GroundTruthObject obj;
    obj.image_id = image;
    obj.class_label = cls;
    obj.box = box;
    obj.azimuth = pose.azimuth;
    obj.elevation = pose.elevation;
    obj.theta = pose.theta;
    obj.distance = pose.distance;
    obj.prototype_id = proto.id;
    for (const auto& [name, p] : projected) obj.keypoints[name] = {p, true};
    data.dataset.objects.push_back(obj);

    Detection det;
    det.image_id = image;
    det.id = "det_" + std::to_string(s);
    det.class_label = cls;
    det.box = box;
    det.score = 1.0;
    data.detections.push_back(det);

    for (const auto& [name, p] : projected) {
      CandidateRecord rec;
      rec.image_id = image;
      rec.kp.name = name;
      rec.kp.position = {p.x + config.noise_sigma * gauss(rng),
                         p.y + config.noise_sigma * gauss(rng)};
      rec.kp.score = 0.8 + 0.2 * unit(rng);
      data.candidates.push_back(rec);
    }
    const auto& vocab = data.dataset.vocabulary[cls];
    for (int d = 0; d < config.distractors; ++d) {
      CandidateRecord rec;
      rec.image_id = image;
      rec.kp.name = vocab[rng() % vocab.size()];
      rec.kp.position = {uniform(0.0, config.image_width), uniform(0.0, config.image_height)};
      rec.kp.score = 0.5 * unit(rng);
      data.candidates.push_back(rec);
    }

    if (config.emit_features) {
      feature_rows.push_back({image, det.id, pose.azimuth, cls});
      feature_vecs.emplace_back(std::sin(deg2rad(pose.azimuth)), std::cos(deg2rad(pose.azimuth)),
                                pose.azimuth / 360.0);
    }
  }

  if (config.emit_features) {
    data.features.features.resize(static_cast<Eigen::Index>(feature_vecs.size()), 3);
    for (size_t i = 0; i < feature_vecs.size(); ++i)
      data.features.features.row(static_cast<Eigen::Index>(i)) = feature_vecs[i];
    data.features.rows = std::move(feature_rows);
  }
  return data;
}

void write_synth(const SynthData& data, const std::filesystem::path& out_dir,
                 const json& run_config) {
  std::filesystem::create_directories(out_dir);
  save_dataset(data.dataset, out_dir / "dataset");
  save_detections(data.detections, out_dir / "detections.jsonl", run_config);
  save_candidates(data.candidates, out_dir / "candidates.jsonl", run_config);
  if (data.features.features.rows() > 0)
    save_features(data.features, out_dir / "features.bin", out_dir / "features.json");
  std::ofstream cfg(out_dir / "run.json");
  json wrapper = {{"format", "lift3d/run/1"},
                  {"config", run_config.is_null() ? json::object() : run_config}};
  cfg << wrapper.dump(2) << "\n";
}

Prototype make_box_prototype(const std::string& class_label, const std::string& id, double hx,
                             double hy, double hz) {
  Prototype proto;
  proto.class_label = class_label;
  proto.id = id;
  for (int zi = 0; zi <= 1; ++zi)
    for (int yi = 0; yi <= 1; ++yi)
      for (int xi = 0; xi <= 1; ++xi) {
        const Point3 p{xi ? hx : -hx, yi ? hy : -hy, zi ? hz : -hz};
        proto.vertices.push_back(p);
        proto.keypoints["c" + std::to_string(xi) + std::to_string(yi) + std::to_string(zi)] = p;
      }
  // Vertex layout: index = xi + 2*yi + 4*zi.
  proto.faces = {{0, 2, 3}, {0, 3, 1},   // z = -hz
                 {4, 5, 7}, {4, 7, 6},   // z = +hz
                 {0, 1, 5}, {0, 5, 4},   // y = -hy
                 {2, 6, 7}, {2, 7, 3},   // y = +hy
                 {0, 4, 6}, {0, 6, 2},   // x = -hx
                 {1, 3, 7}, {1, 7, 5}};  // x = +hx
  return proto;
}

Prototype make_tapered_box_prototype(const std::string& class_label, const std::string& id,
                                     double hx, double hy, double hz, double top_scale) {
  Prototype proto = make_box_prototype(class_label, id, hx, hy, hz);
  for (int i = 0; i < 8; ++i) {
    if (proto.vertices[i].z > 0.0) {
      proto.vertices[i].x *= top_scale;
      proto.vertices[i].y *= top_scale;
    }
  }
  for (auto& [name, p] : proto.keypoints) {
    if (p.z > 0.0) {
      p.x *= top_scale;
      p.y *= top_scale;
    }
  }
  // Recenter: shrinking the top face moves the centroid off the origin only
  // in x/y when the box is asymmetric; the sample shapes stay symmetric, so
  // nothing to do here.
  return proto;
}

PrototypeRegistry sample_registry() {
  PrototypeRegistry registry;
  registry.by_class["widget"] = {
      make_box_prototype("widget", "cube", 0.5, 0.5, 0.5),
      make_box_prototype("widget", "brick", 0.8, 0.35, 0.25),
      make_tapered_box_prototype("widget", "wedge", 0.55, 0.45, 0.4, 0.45),
  };
  return registry;
}

}  // namespace lift3d
