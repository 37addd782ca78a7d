#include "lift3d/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include "lift3d/errors.hpp"

namespace lift3d {

using nlohmann::json;

double quantize_angle(double deg) { return std::round(deg / kAngleQuantum) * kAngleQuantum; }

const ImageInfo& Dataset::image(const std::string& id) const {
  auto it = image_index.find(id);
  if (it == image_index.end()) throw DanglingReference("unknown image id '" + id + "'");
  return images[it->second];
}

std::vector<std::string> Dataset::classes() const {
  std::set<std::string> set;
  for (const auto& obj : objects) set.insert(obj.class_label);
  return {set.begin(), set.end()};
}

ClassPriors Dataset::priors() const {
  struct Sums {
    double elevation = 0.0;
    double distance = 0.0;
    int count = 0;
  };
  std::map<std::string, Sums> acc;
  for (const auto& obj : objects) {
    auto& sums = acc[obj.class_label];
    sums.elevation += obj.elevation;
    sums.distance += obj.distance;
    ++sums.count;
  }
  ClassPriors priors;
  for (const auto& [cls, sums] : acc)
    priors.by_class[cls] = {sums.elevation / sums.count, sums.distance / sums.count};
  return priors;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in || std::filesystem::is_directory(path)) throw ParseError("cannot open: " + path.string());
  std::vector<json> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (lineno == 1 && j.is_object() && j.contains("format")) continue;  // header line
    records.push_back(std::move(j));
  }
  return records;
}

void write_jsonl(const std::filesystem::path& path, const std::string& format_tag,
                 const json& run_config, std::span<const json> records) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path.string());
  json header = {{"format", format_tag}};
  header["config"] = run_config.is_null() ? json::object() : run_config;
  out << header.dump() << "\n";
  for (const auto& r : records) out << r.dump() << "\n";
}

namespace {

BBox bbox_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4)
    throw SchemaError(where + ": bbox must be [x1, y1, x2, y2]");
  BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!b.valid()) throw SchemaError(where + ": degenerate bbox");
  return b;
}

json bbox_to_json(const BBox& b) { return json::array({b.xmin, b.ymin, b.xmax, b.ymax}); }

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.root = dir;

  const auto images_path = dir / "images.json";
  std::ifstream in(images_path);
  if (!in || std::filesystem::is_directory(images_path))
    throw ParseError("cannot open: " + images_path.string());
  json images_json;
  try {
    in >> images_json;
  } catch (const json::exception& e) {
    throw ParseError(images_path.string() + ": " + e.what());
  }
  if (!images_json.is_array())
    throw SchemaError(images_path.string() + ": expected a list of images");
  for (const json& ij : images_json) {
    ImageInfo info;
    try {
      info.id = ij.at("id").get<std::string>();
      info.width = ij.at("width").get<int>();
      info.height = ij.at("height").get<int>();
      info.file = ij.value("file", std::string{});
    } catch (const json::exception& e) {
      throw SchemaError(images_path.string() + ": " + e.what());
    }
    if (info.width <= 0 || info.height <= 0)
      throw SchemaError(images_path.string() + ": non-positive size for image '" + info.id + "'");
    if (ds.image_index.count(info.id))
      throw SchemaError(images_path.string() + ": duplicate image id '" + info.id + "'");
    ds.image_index[info.id] = static_cast<int>(ds.images.size());
    ds.images.push_back(std::move(info));
  }

  const auto vocab_path = dir / "vocab.json";
  if (std::filesystem::is_regular_file(vocab_path)) {
    std::ifstream vin(vocab_path);
    json vj;
    try {
      vin >> vj;
    } catch (const json::exception& e) {
      throw ParseError(vocab_path.string() + ": " + e.what());
    }
    for (auto it = vj.begin(); it != vj.end(); ++it)
      ds.vocabulary[it.key()] = it.value().get<std::vector<std::string>>();
  }

  const auto objects_path = dir / "objects.jsonl";
  int lineno = 0;
  for (const json& oj : read_jsonl(objects_path)) {
    ++lineno;
    const std::string where = objects_path.string() + " record " + std::to_string(lineno);
    GroundTruthObject obj;
    try {
      obj.image_id = oj.at("image_id").get<std::string>();
      obj.class_label = oj.at("class").get<std::string>();
      obj.box = bbox_from_json(oj.at("bbox"), where);
      obj.azimuth = oj.at("azimuth").get<double>();
      obj.elevation = oj.at("elevation").get<double>();
      obj.theta = oj.at("theta").get<double>();
      obj.distance = oj.at("distance").get<double>();
      obj.difficult = oj.value("difficult", false);
      obj.prototype_id = oj.value("prototype", std::string{});
      obj.mask_path = oj.value("mask", std::string{});
      if (oj.contains("keypoints")) {
        for (auto it = oj["keypoints"].begin(); it != oj["keypoints"].end(); ++it) {
          GtKeypoint kp;
          kp.position = {it.value().at("x").get<double>(), it.value().at("y").get<double>()};
          kp.visible = it.value().value("visible", true);
          obj.keypoints[it.key()] = kp;
        }
      }
    } catch (const json::exception& e) {
      throw SchemaError(where + ": " + e.what());
    }
    if (!ds.image_index.count(obj.image_id))
      throw DanglingReference(where + ": unknown image id '" + obj.image_id + "'");
    if (obj.azimuth < 0.0 || obj.azimuth >= 360.0) {
      std::cerr << "warning: " << where << ": azimuth " << obj.azimuth
                << " normalized into [0, 360)\n";
      obj.azimuth = normalize_angle(obj.azimuth);
    }
    if (obj.elevation < -90.0 || obj.elevation >= 90.0) {
      std::cerr << "warning: " << where << ": elevation " << obj.elevation
                << " clamped into [-90, 90)\n";
      obj.elevation = std::clamp(obj.elevation, -90.0, 90.0 - 1e-9);
    }
    if (obj.distance <= 0.0) throw SchemaError(where + ": non-positive distance");
    auto vocab = ds.vocabulary.find(obj.class_label);
    if (vocab != ds.vocabulary.end()) {
      for (const auto& [name, kp] : obj.keypoints)
        if (std::find(vocab->second.begin(), vocab->second.end(), name) == vocab->second.end())
          throw SchemaError(where + ": keypoint '" + name + "' not in the vocabulary of class '" +
                            obj.class_label + "'");
    }
    ds.objects.push_back(std::move(obj));
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json images = json::array();
  for (const auto& info : dataset.images) {
    json ij = {{"id", info.id}, {"width", info.width}, {"height", info.height}};
    if (!info.file.empty()) ij["file"] = info.file;
    images.push_back(std::move(ij));
  }
  {
    std::ofstream out(dir / "images.json");
    out << images.dump(2) << "\n";
  }

  if (!dataset.vocabulary.empty()) {
    json vocab = json::object();
    for (const auto& [cls, names] : dataset.vocabulary) vocab[cls] = names;
    std::ofstream out(dir / "vocab.json");
    out << vocab.dump(2) << "\n";
  }

  std::vector<json> records;
  for (const auto& obj : dataset.objects) {
    json oj = {{"image_id", obj.image_id},
               {"class", obj.class_label},
               {"bbox", bbox_to_json(obj.box)},
               {"azimuth", quantize_angle(obj.azimuth)},
               {"elevation", quantize_angle(obj.elevation)},
               {"theta", quantize_angle(obj.theta)},
               {"distance", obj.distance},
               {"difficult", obj.difficult}};
    if (!obj.prototype_id.empty()) oj["prototype"] = obj.prototype_id;
    if (!obj.mask_path.empty()) oj["mask"] = obj.mask_path;
    if (!obj.keypoints.empty()) {
      json kps = json::object();
      for (const auto& [name, kp] : obj.keypoints)
        kps[name] = {{"x", kp.position.x}, {"y", kp.position.y}, {"visible", kp.visible}};
      oj["keypoints"] = std::move(kps);
    }
    records.push_back(std::move(oj));
  }
  write_jsonl(dir / "objects.jsonl", "lift3d/objects/1", {}, records);
}

std::vector<Detection> load_detections(const std::filesystem::path& path) {
  std::vector<Detection> out;
  int lineno = 0;
  for (const json& j : read_jsonl(path)) {
    ++lineno;
    const std::string where = path.string() + " record " + std::to_string(lineno);
    Detection det;
    try {
      det.image_id = j.at("image_id").get<std::string>();
      det.class_label = j.at("class").get<std::string>();
      det.box = bbox_from_json(j.at("bbox"), where);
      det.score = j.at("score").get<double>();
      det.id = j.value("id", std::string{});
      if (j.contains("azimuth") && !j["azimuth"].is_null())
        det.azimuth = j["azimuth"].get<double>();
    } catch (const json::exception& e) {
      throw SchemaError(where + ": " + e.what());
    }
    out.push_back(std::move(det));
  }
  return out;
}

void save_detections(std::span<const Detection> detections, const std::filesystem::path& path,
                     const json& run_config) {
  std::vector<json> records;
  for (const auto& det : detections) {
    json j = {{"image_id", det.image_id},
              {"class", det.class_label},
              {"bbox", bbox_to_json(det.box)},
              {"score", det.score}};
    if (!det.id.empty()) j["id"] = det.id;
    if (det.azimuth) j["azimuth"] = quantize_angle(*det.azimuth);
    records.push_back(std::move(j));
  }
  write_jsonl(path, "lift3d/detections/1", run_config, records);
}

std::vector<CandidateRecord> load_candidates(const std::filesystem::path& path) {
  std::vector<CandidateRecord> out;
  int lineno = 0;
  for (const json& j : read_jsonl(path)) {
    ++lineno;
    CandidateRecord rec;
    try {
      rec.image_id = j.at("image_id").get<std::string>();
      rec.kp.name = j.at("name").get<std::string>();
      rec.kp.position = {j.at("x").get<double>(), j.at("y").get<double>()};
      rec.kp.score = j.at("score").get<double>();
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + " record " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void save_candidates(std::span<const CandidateRecord> candidates,
                     const std::filesystem::path& path, const json& run_config) {
  std::vector<json> records;
  for (const auto& rec : candidates)
    records.push_back({{"image_id", rec.image_id},
                       {"name", rec.kp.name},
                       {"x", rec.kp.position.x},
                       {"y", rec.kp.position.y},
                       {"score", rec.kp.score}});
  write_jsonl(path, "lift3d/candidates/1", run_config, records);
}

namespace {

json pose_to_json(const CameraPose& pose) {
  return {{"azimuth", quantize_angle(normalize_angle(pose.azimuth))},
          {"elevation", quantize_angle(pose.elevation)},
          {"theta", quantize_angle(pose.theta)},
          {"distance", pose.distance},
          {"tx", pose.tx},
          {"ty", pose.ty},
          {"focal", pose.focal}};
}

CameraPose pose_from_json(const json& j) {
  CameraPose pose;
  pose.azimuth = j.at("azimuth").get<double>();
  pose.elevation = j.at("elevation").get<double>();
  pose.theta = j.at("theta").get<double>();
  pose.distance = j.at("distance").get<double>();
  pose.tx = j.at("tx").get<double>();
  pose.ty = j.at("ty").get<double>();
  pose.focal = j.at("focal").get<double>();
  return pose;
}

json points_to_json(const std::map<std::string, Point2>& points) {
  json out = json::object();
  for (const auto& [name, p] : points) out[name] = {p.x, p.y};
  return out;
}

std::map<std::string, Point2> points_from_json(const json& j) {
  std::map<std::string, Point2> out;
  for (auto it = j.begin(); it != j.end(); ++it)
    out[it.key()] = {it.value().at(0).get<double>(), it.value().at(1).get<double>()};
  return out;
}

}  // namespace

LiftRecord make_lift_record(const Detection& det, const LiftResult& result) {
  LiftRecord rec;
  rec.detection = det;
  rec.prototype_id = result.prototype_id;
  rec.component_id = result.component_id;
  rec.pose = result.pose;
  rec.pose.azimuth = quantize_angle(normalize_angle(result.pose.azimuth));
  rec.pose.elevation = quantize_angle(result.pose.elevation);
  rec.pose.theta = quantize_angle(result.pose.theta);
  rec.residual = result.residual;
  rec.converged = result.converged;
  for (const auto& [name, cand] : result.pooled) rec.keypoints[name] = cand.position;
  rec.reprojections = result.reprojections;
  return rec;
}

std::vector<LiftRecord> load_lifts(const std::filesystem::path& path) {
  std::vector<LiftRecord> out;
  int lineno = 0;
  for (const json& j : read_jsonl(path)) {
    ++lineno;
    const std::string where = path.string() + " record " + std::to_string(lineno);
    LiftRecord rec;
    try {
      rec.detection.image_id = j.at("image_id").get<std::string>();
      rec.detection.id = j.value("id", std::string{});
      rec.detection.class_label = j.at("class").get<std::string>();
      rec.detection.box = bbox_from_json(j.at("bbox"), where);
      rec.detection.score = j.at("score").get<double>();
      rec.prototype_id = j.at("prototype").get<std::string>();
      rec.component_id = j.at("component").get<int>();
      rec.pose = pose_from_json(j.at("pose"));
      rec.residual = j.at("residual").get<double>();
      rec.converged = j.at("converged").get<bool>();
      if (j.contains("keypoints")) rec.keypoints = points_from_json(j["keypoints"]);
      if (j.contains("reprojections")) rec.reprojections = points_from_json(j["reprojections"]);
    } catch (const json::exception& e) {
      throw SchemaError(where + ": " + e.what());
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void save_lifts(std::span<const LiftRecord> lifts, const std::filesystem::path& path,
                const json& run_config) {
  std::vector<json> records;
  for (const auto& rec : lifts) {
    json j = {{"image_id", rec.detection.image_id},
              {"class", rec.detection.class_label},
              {"bbox", bbox_to_json(rec.detection.box)},
              {"score", rec.detection.score},
              {"prototype", rec.prototype_id},
              {"component", rec.component_id},
              {"pose", pose_to_json(rec.pose)},
              {"residual", rec.residual},
              {"converged", rec.converged}};
    if (!rec.detection.id.empty()) j["id"] = rec.detection.id;
    if (!rec.keypoints.empty()) j["keypoints"] = points_to_json(rec.keypoints);
    if (!rec.reprojections.empty()) j["reprojections"] = points_to_json(rec.reprojections);
    records.push_back(std::move(j));
  }
  write_jsonl(path, "lift3d/lifts/1", run_config, records);
}

std::vector<ViewpointRecord> load_viewpoints(const std::filesystem::path& path) {
  std::vector<ViewpointRecord> out;
  int lineno = 0;
  for (const json& j : read_jsonl(path)) {
    ++lineno;
    ViewpointRecord rec;
    try {
      rec.image_id = j.at("image_id").get<std::string>();
      rec.detection_id = j.value("detection_id", std::string{});
      rec.azimuth = j.at("azimuth").get<double>();
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + " record " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void save_viewpoints(std::span<const ViewpointRecord> records, const std::filesystem::path& path,
                     const json& run_config) {
  std::vector<json> out;
  for (const auto& rec : records)
    out.push_back({{"image_id", rec.image_id},
                   {"detection_id", rec.detection_id},
                   {"azimuth", quantize_angle(rec.azimuth)}});
  write_jsonl(path, "lift3d/viewpoints/1", run_config, out);
}

BBox keypoint_box(const Point2& keypoint, const BBox& object_box, double fraction) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw SchemaError("keypoint box fraction must be in (0, 1]");
  if (!object_box.valid()) throw SchemaError("keypoint box against a degenerate object box");
  const double side = std::sqrt(fraction * object_box.area());
  return {keypoint.x - side / 2.0, keypoint.y - side / 2.0, keypoint.x + side / 2.0,
          keypoint.y + side / 2.0};
}

}  // namespace lift3d
