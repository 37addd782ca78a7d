#include "lift3d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lift3d/errors.hpp"

namespace lift3d {

ApMode ap_mode_from_string(const std::string& s) {
  if (s == "allpoints") return ApMode::AllPoints;
  if (s == "11pt") return ApMode::ElevenPoint;
  throw SchemaError("unknown AP mode '" + s + "'");
}

std::string to_string(ApMode m) {
  return m == ApMode::AllPoints ? "allpoints" : "11pt";
}

MatchResult greedy_match(std::span<const ScoredPrediction> preds,
                         std::span<const GroundTruthObject> gts, double iou_threshold) {
  MatchResult result;
  result.order.resize(preds.size());
  std::iota(result.order.begin(), result.order.end(), 0);
  std::stable_sort(result.order.begin(), result.order.end(),
                   [&](int a, int b) { return preds[a].score > preds[b].score; });

  std::vector<int> eligible;  // indices of non-difficult GTs
  for (size_t g = 0; g < gts.size(); ++g)
    if (!gts[g].difficult) eligible.push_back(static_cast<int>(g));
  result.gt_count = static_cast<int>(eligible.size());

  std::vector<bool> consumed(gts.size(), false);
  result.matched_gt.assign(preds.size(), -1);
  for (size_t k = 0; k < result.order.size(); ++k) {
    const ScoredPrediction& pred = preds[result.order[k]];
    int best_gt = -1;
    double best_iou = 0.0;
    for (int g : eligible) {
      if (consumed[g] || gts[g].image_id != pred.image_id ||
          gts[g].class_label != pred.class_label)
        continue;
      const double v = iou(pred.box, gts[g].box);
      if (v > best_iou) {  // strict: IoU ties keep the lowest GT index
        best_iou = v;
        best_gt = g;
      }
    }
    if (best_gt >= 0 && best_iou >= iou_threshold) {
      consumed[best_gt] = true;
      result.matched_gt[k] = best_gt;
    }
  }
  return result;
}

namespace {

double all_points_ap(const std::vector<double>& recall, const std::vector<double>& precision) {
  // Area under the precision envelope: at each recall step take the maximum
  // precision at that recall or beyond.
  const size_t n = recall.size();
  std::vector<double> mrec(n + 2), mpre(n + 2);
  mrec[0] = 0.0;
  mpre[0] = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mrec[i + 1] = recall[i];
    mpre[i + 1] = precision[i];
  }
  mrec[n + 1] = 1.0;
  mpre[n + 1] = 0.0;
  for (size_t i = n + 1; i-- > 0;) mpre[i] = std::max(mpre[i], mpre[i + 1]);
  double ap = 0.0;
  for (size_t i = 0; i + 1 < mrec.size(); ++i)
    if (mrec[i + 1] != mrec[i]) ap += (mrec[i + 1] - mrec[i]) * mpre[i + 1];
  return ap;
}

double eleven_point_ap(const std::vector<double>& recall, const std::vector<double>& precision) {
  double total = 0.0;
  for (int k = 0; k <= 10; ++k) {
    const double r = k / 10.0;
    double p = 0.0;
    for (size_t i = 0; i < recall.size(); ++i)
      if (recall[i] >= r) p = std::max(p, precision[i]);
    total += p;
  }
  return total / 11.0;
}

}  // namespace

PRCurve pr_from_flags(const std::vector<bool>& tp_ordered, int gt_count, ApMode mode) {
  PRCurve curve;
  int tp = 0, fp = 0;
  curve.recall.reserve(tp_ordered.size());
  curve.precision.reserve(tp_ordered.size());
  for (bool is_tp : tp_ordered) {
    if (is_tp) ++tp;
    else ++fp;
    curve.recall.push_back(gt_count > 0 ? static_cast<double>(tp) / gt_count : 0.0);
    curve.precision.push_back(static_cast<double>(tp) / (tp + fp));
  }
  if (gt_count <= 0) {
    curve.average = 0.0;
    return curve;
  }
  curve.average = mode == ApMode::AllPoints ? all_points_ap(curve.recall, curve.precision)
                                            : eleven_point_ap(curve.recall, curve.precision);
  return curve;
}

PRCurve match_and_pr(std::span<const ScoredPrediction> preds,
                     std::span<const GroundTruthObject> gts, const TpPredicate& is_tp,
                     double iou_threshold, ApMode mode) {
  const MatchResult match = greedy_match(preds, gts, iou_threshold);
  std::vector<bool> flags(match.order.size(), false);
  for (size_t k = 0; k < match.order.size(); ++k)
    if (match.matched_gt[k] >= 0)
      flags[k] = is_tp(preds[match.order[k]], gts[match.matched_gt[k]]);
  return pr_from_flags(flags, match.gt_count, mode);
}

PRCurve average_precision(std::span<const ScoredPrediction> preds,
                          std::span<const GroundTruthObject> gts, double iou_threshold,
                          ApMode mode) {
  return match_and_pr(
      preds, gts, [](const ScoredPrediction&, const GroundTruthObject&) { return true; },
      iou_threshold, mode);
}

int azimuth_bin(double azimuth_deg, int bins) {
  const double width = 360.0 / bins;
  const double shifted = normalize_angle(azimuth_deg + width / 2.0);
  int bin = static_cast<int>(shifted / width);
  return bin >= bins ? 0 : bin;  // guard the shifted == 360 rounding corner
}

PRCurve avp_binned(std::span<const ScoredPrediction> preds,
                   std::span<const GroundTruthObject> gts, int bins, double iou_threshold,
                   ApMode mode) {
  if (bins <= 0) throw SchemaError("bin count must be positive");
  for (const auto& p : preds)
    if (!p.azimuth)
      throw MissingAzimuth("prediction in image '" + p.image_id + "' carries no azimuth");
  return match_and_pr(
      preds, gts,
      [bins](const ScoredPrediction& p, const GroundTruthObject& g) {
        return azimuth_bin(*p.azimuth, bins) == azimuth_bin(g.azimuth, bins);
      },
      iou_threshold, mode);
}

std::vector<double> default_aavp_grid() {
  std::vector<double> grid(181);
  for (int d = 0; d <= 180; ++d) grid[d] = d;
  return grid;
}

AavpResult aavp(std::span<const ScoredPrediction> preds, std::span<const GroundTruthObject> gts,
                std::span<const double> grid, double iou_threshold, ApMode mode) {
  if (grid.empty()) throw SchemaError("empty AAVP threshold grid");
  for (const auto& p : preds)
    if (!p.azimuth)
      throw MissingAzimuth("prediction in image '" + p.image_id + "' carries no azimuth");

  // Matching is independent of the angle threshold: compute it once and carry
  // the per-match azimuth errors across the grid.
  const MatchResult match = greedy_match(preds, gts, iou_threshold);
  std::vector<double> errors(match.order.size(), -1.0);  // -1 = unmatched
  for (size_t k = 0; k < match.order.size(); ++k)
    if (match.matched_gt[k] >= 0)
      errors[k] =
          azimuth_error(*preds[match.order[k]].azimuth, gts[match.matched_gt[k]].azimuth);

  AavpResult result;
  result.grid.assign(grid.begin(), grid.end());
  for (double threshold : grid) {
    std::vector<bool> flags(errors.size(), false);
    for (size_t k = 0; k < errors.size(); ++k)
      flags[k] = errors[k] >= 0.0 && errors[k] <= threshold;
    result.avp.push_back(pr_from_flags(flags, match.gt_count, mode).average);
  }
  result.aavp =
      std::accumulate(result.avp.begin(), result.avp.end(), 0.0) / result.avp.size();
  return result;
}

PRCurve app_single_type(std::span<const KeypointPrediction> preds,
                        std::span<const KeypointGtInstance> gts, double height_ref, double radius,
                        ApMode mode) {
  std::vector<int> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return preds[a].score > preds[b].score; });

  std::vector<int> eligible;
  for (size_t g = 0; g < gts.size(); ++g)
    if (gts[g].visible) eligible.push_back(static_cast<int>(g));

  std::vector<bool> consumed(gts.size(), false);
  std::vector<bool> flags(preds.size(), false);
  for (size_t k = 0; k < order.size(); ++k) {
    const KeypointPrediction& pred = preds[order[k]];
    int best_gt = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int g : eligible) {
      if (consumed[g] || gts[g].image_id != pred.image_id) continue;
      const double dist =
          std::hypot(pred.position.x - gts[g].position.x, pred.position.y - gts[g].position.y);
      const double allowed = radius * gts[g].object_height / height_ref;
      if (dist <= allowed && dist < best_dist) {
        best_dist = dist;
        best_gt = g;
      }
    }
    if (best_gt >= 0) {
      consumed[best_gt] = true;
      flags[k] = true;
    }
  }
  return pr_from_flags(flags, static_cast<int>(eligible.size()), mode);
}

std::map<std::string, PRCurve> app(std::span<const KeypointPrediction> preds,
                                   std::span<const KeypointGtInstance> gts, double height_ref,
                                   double radius, ApMode mode) {
  std::map<std::string, std::vector<KeypointPrediction>> preds_by_name;
  std::map<std::string, std::vector<KeypointGtInstance>> gts_by_name;
  for (const auto& p : preds) preds_by_name[p.name].push_back(p);
  for (const auto& g : gts) gts_by_name[g.name].push_back(g);

  std::map<std::string, PRCurve> out;
  for (const auto& [name, gt_list] : gts_by_name)
    out[name] = app_single_type(preds_by_name[name], gt_list, height_ref, radius, mode);
  for (const auto& [name, pred_list] : preds_by_name)
    if (!out.count(name)) out[name] = app_single_type(pred_list, {}, height_ref, radius, mode);
  return out;
}

double seg_accuracy(const Mask& predicted, const Mask& ground_truth, const BBox& gt_box) {
  if (predicted.width != ground_truth.width || predicted.height != ground_truth.height)
    throw DimensionMismatch("mask dimensions disagree");
  if (!gt_box.valid()) throw SchemaError("segmentation accuracy against a degenerate box");

  // A pixel belongs to the box iff its center (x + 0.5, y + 0.5) lies in
  // [xmin, xmax) x [ymin, ymax).
  std::int64_t agree = 0, total = 0;
  const int x0 = std::max(0, static_cast<int>(std::ceil(gt_box.xmin - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(gt_box.ymin - 0.5)));
  for (int y = y0; y < predicted.height && y + 0.5 < gt_box.ymax; ++y) {
    for (int x = x0; x < predicted.width && x + 0.5 < gt_box.xmax; ++x) {
      ++total;
      if (predicted.at(x, y) == ground_truth.at(x, y)) ++agree;
    }
  }
  return total > 0 ? static_cast<double>(agree) / total : 0.0;
}

}  // namespace lift3d
