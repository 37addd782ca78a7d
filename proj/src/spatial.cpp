#include "lift3d/spatial.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "lift3d/errors.hpp"

namespace lift3d {

using nlohmann::json;

CircularKMeans circular_kmeans(std::span<const double> angles_deg, int k, int max_iterations) {
  if (k <= 0) throw SchemaError("component count must be positive");
  CircularKMeans result;
  result.centers.resize(k);
  for (int c = 0; c < k; ++c) result.centers[c] = 360.0 * c / k;
  result.assignment.assign(angles_deg.size(), -1);

  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (size_t i = 0; i < angles_deg.size(); ++i) {
      int best = 0;
      double best_err = azimuth_error(angles_deg[i], result.centers[0]);
      for (int c = 1; c < k; ++c) {
        const double err = azimuth_error(angles_deg[i], result.centers[c]);
        if (err < best_err) {
          best_err = err;
          best = c;
        }
      }
      if (result.assignment[i] != best) {
        result.assignment[i] = best;
        changed = true;
      }
    }

    std::vector<double> sum_sin(k, 0.0), sum_cos(k, 0.0);
    std::vector<int> counts(k, 0);
    for (size_t i = 0; i < angles_deg.size(); ++i) {
      const int c = result.assignment[i];
      sum_sin[c] += std::sin(deg2rad(angles_deg[i]));
      sum_cos[c] += std::cos(deg2rad(angles_deg[i]));
      ++counts[c];
    }
    for (int c = 0; c < k; ++c) {
      // Empty clusters keep their previous center.
      if (counts[c] > 0)
        result.centers[c] = normalize_angle(rad2deg(std::atan2(sum_sin[c], sum_cos[c])));
    }

    double objective = 0.0;
    for (size_t i = 0; i < angles_deg.size(); ++i)
      objective += 1.0 - std::cos(deg2rad(angles_deg[i] - result.centers[result.assignment[i]]));
    result.objective_trace.push_back(objective);
    result.iterations = iter + 1;
    if (!changed && iter > 0) break;
  }
  return result;
}

SpatialModel fit_spatial(std::span<const SpatialInstance> instances, int components, double kappa,
                         const std::string& class_label) {
  if (instances.empty()) throw SchemaError("no instances to fit a spatial model");
  if (kappa <= 0.0) throw SchemaError("kappa must be positive");
  for (const auto& inst : instances)
    if (!inst.box.valid()) throw SchemaError("spatial instance with degenerate box");

  std::vector<double> azimuths;
  azimuths.reserve(instances.size());
  for (const auto& inst : instances) azimuths.push_back(normalize_angle(inst.azimuth));
  const CircularKMeans km = circular_kmeans(azimuths, components);

  std::vector<int> counts(components, 0);
  for (int a : km.assignment) ++counts[a];
  for (int c = 0; c < components; ++c)
    if (counts[c] == 0)
      throw EmptyCluster("azimuth cluster " + std::to_string(c) +
                         " received no instances; reduce the component count");

  // Class vocabulary: union of keypoint names over all instances.
  std::set<std::string> vocabulary;
  for (const auto& inst : instances)
    for (const auto& [name, p] : inst.keypoints) vocabulary.insert(name);

  SpatialModel model;
  model.class_label = class_label;
  model.kappa = kappa;
  for (int c = 0; c < components; ++c) {
    SpatialComponent comp;
    comp.id = c;
    comp.azimuth_center = km.centers[c];
    for (const auto& name : vocabulary) {
      std::vector<Point2> offsets;
      for (size_t i = 0; i < instances.size(); ++i) {
        if (km.assignment[i] != c) continue;
        auto it = instances[i].keypoints.find(name);
        if (it == instances[i].keypoints.end()) continue;
        const BBox& box = instances[i].box;
        const Point2 center = box.center();
        offsets.push_back({(it->second.x - center.x) / box.width(),
                           (it->second.y - center.y) / box.height()});
      }
      KeypointStats stats;
      stats.visibility = static_cast<double>(offsets.size()) / counts[c];
      if (!offsets.empty()) {
        for (const auto& o : offsets) {
          stats.mean_offset.x += o.x;
          stats.mean_offset.y += o.y;
        }
        stats.mean_offset.x /= offsets.size();
        stats.mean_offset.y /= offsets.size();
        double vx = 0.0, vy = 0.0;
        for (const auto& o : offsets) {
          vx += (o.x - stats.mean_offset.x) * (o.x - stats.mean_offset.x);
          vy += (o.y - stats.mean_offset.y) * (o.y - stats.mean_offset.y);
        }
        stats.stddev = {std::sqrt(vx / offsets.size()), std::sqrt(vy / offsets.size())};
        stats.extent = {std::max(kappa * stats.stddev.x, kMinPoolExtent),
                        std::max(kappa * stats.stddev.y, kMinPoolExtent)};
      }
      comp.keypoints[name] = stats;
    }
    model.components.push_back(std::move(comp));
  }
  return model;
}

BBox pooling_region(const KeypointStats& stats, const BBox& box) {
  const Point2 center = box.center();
  const double cx = center.x + stats.mean_offset.x * box.width();
  const double cy = center.y + stats.mean_offset.y * box.height();
  return {cx - stats.extent.x * box.width(), cy - stats.extent.y * box.height(),
          cx + stats.extent.x * box.width(), cy + stats.extent.y * box.height()};
}

std::map<std::string, KeypointCandidate> pool_keypoints(
    const SpatialModel& model, int component_id, const BBox& box,
    std::span<const KeypointCandidate> candidates) {
  if (component_id < 0 || component_id >= static_cast<int>(model.components.size()))
    throw UnknownComponent("component " + std::to_string(component_id) + " not in model");
  if (!box.valid()) throw SchemaError("pooling against a degenerate box");
  const SpatialComponent& comp = model.components[component_id];

  std::map<std::string, KeypointCandidate> pooled;
  for (const auto& [name, stats] : comp.keypoints) {
    if (stats.visibility <= 0.0) continue;
    const BBox region = pooling_region(stats, box);
    const KeypointCandidate* best = nullptr;
    for (const auto& cand : candidates) {
      if (cand.name != name || !region.contains(cand.position)) continue;
      if (best == nullptr || cand.score > best->score) best = &cand;
    }
    if (best != nullptr) pooled[name] = *best;
  }
  return pooled;
}

int select_component_guided(const SpatialModel& model, double azimuth_estimate_deg) {
  if (model.components.empty()) throw UnknownComponent("spatial model has no components");
  int best = 0;
  double best_err = azimuth_error(azimuth_estimate_deg, model.components[0].azimuth_center);
  for (size_t c = 1; c < model.components.size(); ++c) {
    const double err = azimuth_error(azimuth_estimate_deg, model.components[c].azimuth_center);
    if (err < best_err) {
      best_err = err;
      best = static_cast<int>(c);
    }
  }
  return best;
}

namespace {

json model_to_json(const SpatialModel& model) {
  json comps = json::array();
  for (const auto& comp : model.components) {
    json kps = json::object();
    for (const auto& [name, s] : comp.keypoints) {
      kps[name] = {{"mean", {s.mean_offset.x, s.mean_offset.y}},
                   {"std", {s.stddev.x, s.stddev.y}},
                   {"extent", {s.extent.x, s.extent.y}},
                   {"visibility", s.visibility}};
    }
    comps.push_back({{"id", comp.id},
                     {"azimuth_center", comp.azimuth_center},
                     {"keypoints", std::move(kps)}});
  }
  return {{"class", model.class_label}, {"kappa", model.kappa}, {"components", std::move(comps)}};
}

Point2 point2_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

SpatialModel model_from_json(const json& j) {
  SpatialModel model;
  model.class_label = j.at("class").get<std::string>();
  model.kappa = j.at("kappa").get<double>();
  for (const json& cj : j.at("components")) {
    SpatialComponent comp;
    comp.id = cj.at("id").get<int>();
    comp.azimuth_center = cj.at("azimuth_center").get<double>();
    for (auto it = cj.at("keypoints").begin(); it != cj.at("keypoints").end(); ++it) {
      KeypointStats s;
      s.mean_offset = point2_from(it.value().at("mean"));
      s.stddev = point2_from(it.value().at("std"));
      s.extent = point2_from(it.value().at("extent"));
      s.visibility = it.value().at("visibility").get<double>();
      comp.keypoints[it.key()] = s;
    }
    model.components.push_back(std::move(comp));
  }
  return model;
}

}  // namespace

void save_spatial_models(const std::vector<SpatialModel>& models,
                         const std::filesystem::path& path, const json& run_config) {
  json j;
  j["format"] = "spatial/1";
  j["config"] = run_config.is_null() ? json::object() : run_config;
  json list = json::array();
  for (const auto& m : models) list.push_back(model_to_json(m));
  j["models"] = std::move(list);
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<SpatialModel> load_spatial_models(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in || std::filesystem::is_directory(path)) throw ParseError("cannot open: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (j.value("format", std::string{}) != "spatial/1")
    throw SchemaError(path.string() + ": expected format tag 'spatial/1'");
  std::vector<SpatialModel> models;
  try {
    for (const json& mj : j.at("models")) models.push_back(model_from_json(mj));
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return models;
}

}  // namespace lift3d
