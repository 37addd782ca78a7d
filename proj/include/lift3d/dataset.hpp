#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lift3d/geometry.hpp"
#include "lift3d/lifting.hpp"
#include "lift3d/metrics.hpp"
#include "lift3d/spatial.hpp"

namespace lift3d {

struct ImageInfo {
  std::string id;
  int width = 0;
  int height = 0;
  std::string file;
};

// On-disk dataset directory:
//   images.json   - list of {id, width, height, file?}
//   objects.jsonl - one GT object per line
//   vocab.json    - optional {class: [keypoint names]}; when present, object
//                   keypoint names are validated against it
struct Dataset {
  std::filesystem::path root;
  std::vector<ImageInfo> images;
  std::map<std::string, int> image_index;
  std::vector<GroundTruthObject> objects;
  std::map<std::string, std::vector<std::string>> vocabulary;

  const ImageInfo& image(const std::string& id) const;
  std::vector<std::string> classes() const;
  // Per-class mean elevation and distance over the GT objects.
  ClassPriors priors() const;
};

Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

// Angles written to JSON are quantized to this grid (degrees) so that
// save/load round-trips and repeated runs compare exactly.
inline constexpr double kAngleQuantum = 1e-6;
double quantize_angle(double deg);

struct CandidateRecord {
  std::string image_id;
  KeypointCandidate kp;
};

std::vector<Detection> load_detections(const std::filesystem::path& path);
void save_detections(std::span<const Detection> detections, const std::filesystem::path& path,
                     const nlohmann::json& run_config = {});

std::vector<CandidateRecord> load_candidates(const std::filesystem::path& path);
void save_candidates(std::span<const CandidateRecord> candidates,
                     const std::filesystem::path& path, const nlohmann::json& run_config = {});

// Serialized lift output: the detection it explains plus the fitted hypothesis.
struct LiftRecord {
  Detection detection;
  std::string prototype_id;
  int component_id = -1;
  CameraPose pose;
  double residual = 0.0;
  bool converged = false;
  std::map<std::string, Point2> keypoints;       // pooled 2D evidence
  std::map<std::string, Point2> reprojections;   // model projections under pose
};

// Applies the angle quantization to the pose.
LiftRecord make_lift_record(const Detection& det, const LiftResult& result);

std::vector<LiftRecord> load_lifts(const std::filesystem::path& path);
void save_lifts(std::span<const LiftRecord> lifts, const std::filesystem::path& path,
                const nlohmann::json& run_config = {});

struct ViewpointRecord {
  std::string image_id;
  std::string detection_id;
  double azimuth = 0.0;
};

std::vector<ViewpointRecord> load_viewpoints(const std::filesystem::path& path);
void save_viewpoints(std::span<const ViewpointRecord> records,
                     const std::filesystem::path& path, const nlohmann::json& run_config = {});

// Square box centered on the keypoint whose area is `fraction` of the object
// box area.
BBox keypoint_box(const Point2& keypoint, const BBox& object_box, double fraction = 0.30);

// JSONL plumbing shared by the record formats: an optional first header line
// {"format": ..., "config": ...} followed by one record object per line.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::string& format_tag,
                 const nlohmann::json& run_config, std::span<const nlohmann::json> records);

}  // namespace lift3d
