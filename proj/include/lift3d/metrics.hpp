#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lift3d/geometry.hpp"
#include "lift3d/mask.hpp"

namespace lift3d {

struct GtKeypoint {
  Point2 position;
  bool visible = true;
};

struct GroundTruthObject {
  std::string image_id;
  std::string class_label;
  BBox box;
  double azimuth = 0.0;
  double elevation = 0.0;
  double theta = 0.0;
  double distance = 0.0;
  bool difficult = false;
  std::map<std::string, GtKeypoint> keypoints;
  std::string prototype_id;  // empty when unknown
  std::string mask_path;     // empty when none
};

struct ScoredPrediction {
  std::string image_id;
  std::string class_label;
  BBox box;
  double score = 0.0;
  std::optional<double> azimuth;
};

// Precision/recall points in descending-score order, plus the scalar average
// precision.
struct PRCurve {
  std::vector<double> recall;
  std::vector<double> precision;
  double average = 0.0;
};

enum class ApMode { AllPoints, ElevenPoint };

ApMode ap_mode_from_string(const std::string& s);
std::string to_string(ApMode m);

// Greedy IoU matching, decided once per dataset: predictions in descending
// score order (ties by input order) each consume the unmatched same-image,
// same-class GT with the highest IoU >= iou_threshold. Difficult GTs are
// dropped before matching and excluded from the GT count.
struct MatchResult {
  std::vector<int> order;       // prediction indices, descending score
  std::vector<int> matched_gt;  // per ordered prediction: GT index or -1
  int gt_count = 0;             // non-difficult GTs
};

MatchResult greedy_match(std::span<const ScoredPrediction> preds,
                         std::span<const GroundTruthObject> gts, double iou_threshold = 0.5);

// Curve + average from ordered TP flags. With gt_count == 0 the average is 0.
PRCurve pr_from_flags(const std::vector<bool>& tp_ordered, int gt_count, ApMode mode);

using TpPredicate =
    std::function<bool(const ScoredPrediction& pred, const GroundTruthObject& gt)>;

// Matching-first semantics: a prediction matched by IoU but failing the
// predicate still consumes its GT and counts as a false positive.
PRCurve match_and_pr(std::span<const ScoredPrediction> preds,
                     std::span<const GroundTruthObject> gts, const TpPredicate& is_tp,
                     double iou_threshold = 0.5, ApMode mode = ApMode::AllPoints);

// Plain detection AP (predicate always true).
PRCurve average_precision(std::span<const ScoredPrediction> preds,
                          std::span<const GroundTruthObject> gts, double iou_threshold = 0.5,
                          ApMode mode = ApMode::AllPoints);

// Azimuth bin for V bins centered at multiples of 360/V; bin k covers
// [k*360/V - 180/V, k*360/V + 180/V).
int azimuth_bin(double azimuth_deg, int bins);

// AP with the same-azimuth-bin predicate. Throws MissingAzimuth when any
// prediction lacks an azimuth.
PRCurve avp_binned(std::span<const ScoredPrediction> preds,
                   std::span<const GroundTruthObject> gts, int bins,
                   double iou_threshold = 0.5, ApMode mode = ApMode::AllPoints);

struct AavpResult {
  std::vector<double> grid;  // angle-error thresholds D, degrees
  std::vector<double> avp;   // AVP at each D
  double aavp = 0.0;         // mean over the grid
};

std::vector<double> default_aavp_grid();  // 0, 1, ..., 180

// AVP with the continuous predicate azimuth_error(pred, gt) <= D, swept over
// the grid; matching is computed once since it does not depend on D.
AavpResult aavp(std::span<const ScoredPrediction> preds,
                std::span<const GroundTruthObject> gts,
                std::span<const double> grid, double iou_threshold = 0.5,
                ApMode mode = ApMode::AllPoints);

// Keypoint detection evaluation.
struct KeypointPrediction {
  std::string image_id;
  std::string name;
  Point2 position;
  double score = 0.0;
};

struct KeypointGtInstance {
  std::string image_id;
  std::string name;
  Point2 position;
  double object_height = 0.0;  // pixels, owning GT box height
  bool visible = true;
};

// PR for one keypoint type: predictions in score order match the nearest
// unmatched visible GT keypoint of the same image within distance
// radius * object_height / height_ref (inclusive).
PRCurve app_single_type(std::span<const KeypointPrediction> preds,
                        std::span<const KeypointGtInstance> gts, double height_ref = 100.0,
                        double radius = 25.0, ApMode mode = ApMode::AllPoints);

// Per-type curves over whatever names appear in predictions or GT.
std::map<std::string, PRCurve> app(std::span<const KeypointPrediction> preds,
                                   std::span<const KeypointGtInstance> gts,
                                   double height_ref = 100.0, double radius = 25.0,
                                   ApMode mode = ApMode::AllPoints);

// Fraction of pixels inside gt_box (pixel centers, inclusive-exclusive
// half-open box) whose predicted and GT labels agree. Masks must share
// dimensions; throws DimensionMismatch otherwise.
double seg_accuracy(const Mask& predicted, const Mask& ground_truth, const BBox& gt_box);

}  // namespace lift3d
