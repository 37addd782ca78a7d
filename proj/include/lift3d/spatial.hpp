#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lift3d/geometry.hpp"

namespace lift3d {

// 2D keypoint detection (one keypoint type instance in an image).
struct KeypointCandidate {
  std::string name;
  Point2 position;
  double score = 0.0;
};

// Per-component, per-keypoint statistics in bounding-box-normalized
// coordinates: offset = (kp - box_center) / (box_width, box_height).
struct KeypointStats {
  Point2 mean_offset;
  Point2 stddev;      // population std of the normalized offsets
  Point2 extent;      // half-size of the pooling region, normalized units
  double visibility = 0.0;  // fraction of component instances with the keypoint visible
};

struct SpatialComponent {
  int id = 0;
  double azimuth_center = 0.0;  // degrees, [0, 360)
  std::map<std::string, KeypointStats> keypoints;
};

// Viewpoint-conditioned star model for one class.
struct SpatialModel {
  std::string class_label;
  double kappa = 2.0;
  std::vector<SpatialComponent> components;
};

// One annotated training instance: object azimuth, object box, and the image
// positions of its visible keypoints.
struct SpatialInstance {
  double azimuth = 0.0;
  BBox box;
  std::map<std::string, Point2> keypoints;
};

// Circular k-means on azimuths. Centers are initialized deterministically at
// k equally spaced angles starting from 0; assignment minimizes azimuth_error
// (ties -> lower center index), the update step takes the circular mean. The
// recorded objective is sum_i (1 - cos(angle_i - center_{a(i)})), which both
// steps decrease monotonically.
struct CircularKMeans {
  std::vector<double> centers;
  std::vector<int> assignment;
  std::vector<double> objective_trace;  // one entry per completed iteration
  int iterations = 0;
};

CircularKMeans circular_kmeans(std::span<const double> angles_deg, int k, int max_iterations = 200);

// Fits a spatial model with `components` azimuth clusters. The pooling
// half-extent per axis is max(kappa * std, 0.05) in normalized units.
// Throws EmptyCluster when a final cluster receives no instances.
SpatialModel fit_spatial(std::span<const SpatialInstance> instances, int components,
                         double kappa = 2.0, const std::string& class_label = "");

inline constexpr double kMinPoolExtent = 0.05;

// Max-pooling: for each keypoint type with visibility > 0 in the component,
// picks the highest-scoring candidate of that name whose position falls
// inside the (inclusive) pooling region anchored to `box`; score ties keep
// the earliest candidate. Keypoint types with no candidate in the region are
// absent from the result.
std::map<std::string, KeypointCandidate> pool_keypoints(const SpatialModel& model,
                                                        int component_id, const BBox& box,
                                                        std::span<const KeypointCandidate> candidates);

// Component whose azimuth center is nearest the estimate (ties -> lowest id).
int select_component_guided(const SpatialModel& model, double azimuth_estimate_deg);

// Pooling region in image coordinates for one keypoint type.
BBox pooling_region(const KeypointStats& stats, const BBox& box);

void save_spatial_models(const std::vector<SpatialModel>& models,
                         const std::filesystem::path& path,
                         const nlohmann::json& run_config = {});
std::vector<SpatialModel> load_spatial_models(const std::filesystem::path& path);

}  // namespace lift3d
