#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace oracles {

using lift3d::BBox;
using lift3d::GroundTruthObject;
using lift3d::KeypointGtInstance;
using lift3d::KeypointPrediction;
using lift3d::Mask;
using lift3d::Point2;
using lift3d::ScoredPrediction;

namespace {

// Selection scan instead of std::sort: equal scores keep input order.
std::vector<int> score_order(std::span<const ScoredPrediction> preds) {
  const int n = static_cast<int>(preds.size());
  std::vector<bool> used(n, false);
  std::vector<int> order;
  for (int k = 0; k < n; ++k) {
    int best = -1;
    for (int i = 0; i < n; ++i)
      if (!used[i] && (best < 0 || preds[i].score > preds[best].score)) best = i;
    used[best] = true;
    order.push_back(best);
  }
  return order;
}

struct Counts {
  int tp = 0;
  int fp = 0;
  int gt_count = 0;
};

// Greedy matching of the given prediction subset (indices in score order).
Counts match_subset(std::span<const ScoredPrediction> preds,
                    std::span<const GroundTruthObject> gts, std::span<const int> subset,
                    const lift3d::TpPredicate& is_tp, double iou_threshold) {
  Counts counts;
  std::vector<bool> consumed(gts.size(), false);
  for (size_t g = 0; g < gts.size(); ++g)
    if (!gts[g].difficult) ++counts.gt_count;

  for (int idx : subset) {
    const ScoredPrediction& pred = preds[idx];
    int best_gt = -1;
    double best_iou = 0.0;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].difficult || consumed[g]) continue;
      if (gts[g].image_id != pred.image_id || gts[g].class_label != pred.class_label) continue;
      const double v = lift3d::iou(pred.box, gts[g].box);
      if (v > best_iou) {
        best_iou = v;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0 && best_iou >= iou_threshold && is_tp(pred, gts[best_gt])) {
      consumed[best_gt] = true;
      ++counts.tp;
    } else {
      if (best_gt >= 0 && best_iou >= iou_threshold) consumed[best_gt] = true;
      ++counts.fp;
    }
  }
  return counts;
}

}  // namespace

PrPoints threshold_pr(std::span<const ScoredPrediction> preds,
                      std::span<const GroundTruthObject> gts, const lift3d::TpPredicate& is_tp,
                      double iou_threshold) {
  const std::vector<int> order = score_order(preds);

  // Descending distinct thresholds; each prefix of the score order is the
  // subset of predictions at or above one threshold.
  PrPoints pts;
  for (size_t k = 0; k < order.size(); ++k) {
    const bool last_of_threshold =
        k + 1 == order.size() || preds[order[k + 1]].score < preds[order[k]].score;
    if (!last_of_threshold) continue;
    const Counts c = match_subset(preds, gts, std::span<const int>(order.data(), k + 1), is_tp,
                                  iou_threshold);
    if (c.gt_count <= 0) continue;
    pts.recall.push_back(static_cast<double>(c.tp) / c.gt_count);
    pts.precision.push_back(static_cast<double>(c.tp) / (c.tp + c.fp));
  }
  return pts;
}

double area_ap(const PrPoints& pts) {
  std::set<double> recalls(pts.recall.begin(), pts.recall.end());
  double ap = 0.0;
  double prev = 0.0;
  for (double r : recalls) {
    double best = 0.0;
    for (size_t k = 0; k < pts.recall.size(); ++k)
      if (pts.recall[k] >= r) best = std::max(best, pts.precision[k]);
    ap += (r - prev) * best;
    prev = r;
  }
  return ap;
}

double eleven_point_ap(const PrPoints& pts) {
  double total = 0.0;
  for (int k = 0; k <= 10; ++k) {
    const double r = k / 10.0;
    double best = 0.0;
    for (size_t i = 0; i < pts.recall.size(); ++i)
      if (pts.recall[i] >= r) best = std::max(best, pts.precision[i]);
    total += best;
  }
  return total / 11.0;
}

double ap(std::span<const ScoredPrediction> preds, std::span<const GroundTruthObject> gts,
          double iou_threshold) {
  return area_ap(threshold_pr(
      preds, gts, [](const ScoredPrediction&, const GroundTruthObject&) { return true; },
      iou_threshold));
}

namespace {

int bin_of(double azimuth_deg, int bins) {
  const double width = 360.0 / bins;
  double shifted = std::fmod(azimuth_deg + width / 2.0, 360.0);
  if (shifted < 0.0) shifted += 360.0;
  const int bin = static_cast<int>(shifted / width);
  return bin >= bins ? 0 : bin;
}

}  // namespace

double avp(std::span<const ScoredPrediction> preds, std::span<const GroundTruthObject> gts,
           int bins, double iou_threshold) {
  return area_ap(threshold_pr(
      preds, gts,
      [bins](const ScoredPrediction& p, const GroundTruthObject& g) {
        return bin_of(*p.azimuth, bins) == bin_of(g.azimuth, bins);
      },
      iou_threshold));
}

std::vector<double> aavp_curve(std::span<const ScoredPrediction> preds,
                               std::span<const GroundTruthObject> gts,
                               std::span<const double> grid, double iou_threshold) {
  std::vector<double> curve;
  for (double threshold : grid) {
    curve.push_back(area_ap(threshold_pr(
        preds, gts,
        [threshold](const ScoredPrediction& p, const GroundTruthObject& g) {
          return lift3d::azimuth_error(*p.azimuth, g.azimuth) <= threshold;
        },
        iou_threshold)));
  }
  return curve;
}

double app_single(std::span<const KeypointPrediction> preds,
                  std::span<const KeypointGtInstance> gts, double height_ref, double radius) {
  const int n = static_cast<int>(preds.size());
  std::vector<bool> used(n, false);
  std::vector<int> order;
  for (int k = 0; k < n; ++k) {
    int best = -1;
    for (int i = 0; i < n; ++i)
      if (!used[i] && (best < 0 || preds[i].score > preds[best].score)) best = i;
    used[best] = true;
    order.push_back(best);
  }

  int gt_count = 0;
  for (const auto& g : gts)
    if (g.visible) ++gt_count;
  if (gt_count <= 0) return 0.0;

  // Threshold enumeration over prefixes, re-matching each time.
  PrPoints pts;
  for (size_t k = 0; k < order.size(); ++k) {
    const bool last_of_threshold =
        k + 1 == order.size() || preds[order[k + 1]].score < preds[order[k]].score;
    if (!last_of_threshold) continue;

    std::vector<bool> consumed(gts.size(), false);
    int tp = 0, fp = 0;
    for (size_t j = 0; j <= k; ++j) {
      const KeypointPrediction& pred = preds[order[j]];
      int best_gt = -1;
      double best_dist = std::numeric_limits<double>::infinity();
      for (size_t g = 0; g < gts.size(); ++g) {
        if (!gts[g].visible || consumed[g] || gts[g].image_id != pred.image_id) continue;
        const double dx = pred.position.x - gts[g].position.x;
        const double dy = pred.position.y - gts[g].position.y;
        const double dist = std::sqrt(dx * dx + dy * dy);
        if (dist <= radius * gts[g].object_height / height_ref && dist < best_dist) {
          best_dist = dist;
          best_gt = static_cast<int>(g);
        }
      }
      if (best_gt >= 0) {
        consumed[best_gt] = true;
        ++tp;
      } else {
        ++fp;
      }
    }
    pts.recall.push_back(static_cast<double>(tp) / gt_count);
    pts.precision.push_back(static_cast<double>(tp) / (tp + fp));
  }
  return area_ap(pts);
}

Mask render(const lift3d::Prototype& proto, const lift3d::CameraPose& pose, int width,
            int height) {
  Mask mask(width, height);

  struct Tri {
    Point2 a, b, c;
  };
  std::vector<Tri> tris;
  for (const auto& face : proto.faces) {
    const auto pa = lift3d::project(pose, proto.vertices[face[0]]);
    const auto pb = lift3d::project(pose, proto.vertices[face[1]]);
    const auto pc = lift3d::project(pose, proto.vertices[face[2]]);
    if (!pa || !pb || !pc) continue;
    tris.push_back({*pa, *pb, *pc});
  }

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      bool inside = false;
      for (const Tri& t : tris) {
        const double det =
            (t.b.y - t.c.y) * (t.a.x - t.c.x) + (t.c.x - t.b.x) * (t.a.y - t.c.y);
        if (det == 0.0) continue;
        const double s = (t.b.y - t.c.y) * (px - t.c.x) + (t.c.x - t.b.x) * (py - t.c.y);
        const double u = (t.c.y - t.a.y) * (px - t.c.x) + (t.a.x - t.c.x) * (py - t.c.y);
        const double v = det - s - u;
        if (det > 0.0 ? (s >= 0.0 && u >= 0.0 && v >= 0.0)
                      : (s <= 0.0 && u <= 0.0 && v <= 0.0)) {
          inside = true;
          break;
        }
      }
      if (inside) mask.set(x, y, true);
    }
  }
  return mask;
}

double seg_accuracy(const Mask& predicted, const Mask& ground_truth, const BBox& gt_box) {
  long long agree = 0, total = 0;
  for (int y = 0; y < predicted.height; ++y) {
    for (int x = 0; x < predicted.width; ++x) {
      const double cx = x + 0.5, cy = y + 0.5;
      if (cx < gt_box.xmin || cx >= gt_box.xmax || cy < gt_box.ymin || cy >= gt_box.ymax)
        continue;
      ++total;
      if (predicted.at(x, y) == ground_truth.at(x, y)) ++agree;
    }
  }
  return total > 0 ? static_cast<double>(agree) / total : 0.0;
}

double iou_integer_boxes(const BBox& a, const BBox& b) {
  const int lo_x = static_cast<int>(std::min(a.xmin, b.xmin));
  const int hi_x = static_cast<int>(std::max(a.xmax, b.xmax));
  const int lo_y = static_cast<int>(std::min(a.ymin, b.ymin));
  const int hi_y = static_cast<int>(std::max(a.ymax, b.ymax));
  long long inter = 0, uni = 0;
  for (int y = lo_y; y < hi_y; ++y) {
    for (int x = lo_x; x < hi_x; ++x) {
      const bool in_a = x >= a.xmin && x + 1 <= a.xmax && y >= a.ymin && y + 1 <= a.ymax;
      const bool in_b = x >= b.xmin && x + 1 <= b.xmax && y >= b.ymin && y + 1 <= b.ymax;
      if (in_a && in_b) ++inter;
      if (in_a || in_b) ++uni;
    }
  }
  return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

RidgeFit ridge(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y, double lambda,
               bool standardize, bool intercept) {
  const int n = static_cast<int>(phi.rows());
  const int d = static_cast<int>(phi.cols());

  RidgeFit fit;
  fit.feat_mean = Eigen::VectorXd::Zero(d);
  fit.feat_std = Eigen::VectorXd::Ones(d);
  if (standardize) {
    fit.feat_mean = phi.colwise().mean();
    for (int j = 0; j < d; ++j) {
      double ss = 0.0;
      for (int i = 0; i < n; ++i) ss += std::pow(phi(i, j) - fit.feat_mean(j), 2);
      const double sd = std::sqrt(ss / n);
      fit.feat_std(j) = sd < 1e-12 ? 1.0 : sd;
    }
  }
  Eigen::MatrixXd Z = (phi.rowwise() - fit.feat_mean.transpose()).array().rowwise() /
                      fit.feat_std.transpose().array();

  Eigen::VectorXd yc = y;
  Eigen::VectorXd z_mean = Eigen::VectorXd::Zero(d);
  double y_mean = 0.0;
  if (intercept) {
    z_mean = Z.colwise().mean();
    y_mean = y.mean();
    Z.rowwise() -= z_mean.transpose();
    yc.array() -= y_mean;
  }

  Eigen::MatrixXd augmented(n + d, d);
  augmented.topRows(n) = Z;
  augmented.bottomRows(d) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + d);
  rhs.head(n) = yc;
  fit.weights = augmented.colPivHouseholderQr().solve(rhs);
  fit.intercept = intercept ? y_mean - z_mean.dot(fit.weights) : 0.0;
  return fit;
}

Eigen::MatrixXd fd_jacobian(const lift3d::ResidualFn& residuals, const Eigen::VectorXd& x,
                            int residual_count, double h) {
  const int d = static_cast<int>(x.size());
  Eigen::MatrixXd J(residual_count, d);
  Eigen::VectorXd r_plus(residual_count), r_minus(residual_count);
  for (int j = 0; j < d; ++j) {
    const double step = h * std::max(1.0, std::abs(x(j)));
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += step;
    xm(j) -= step;
    if (!residuals(xp, r_plus) || !residuals(xm, r_minus))
      throw std::runtime_error("finite differencing stepped out of the feasible region");
    J.col(j) = (r_plus - r_minus) / (2.0 * step);
  }
  return J;
}

double elastic_net_kkt_violation(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& w, double l1, double l2) {
  // Stationarity of ||y - Zw||^2 + l1 |w|_1 + (l2/2) |w|^2:
  //   g_j = -2 Z_j^T (y - Zw) + l2 w_j
  //   w_j != 0  ->  g_j + l1 sign(w_j) = 0
  //   w_j == 0  ->  |g_j| <= l1
  const Eigen::VectorXd residual = y - Z * w;
  double worst = 0.0;
  for (int j = 0; j < w.size(); ++j) {
    const double g = -2.0 * Z.col(j).dot(residual) + l2 * w(j);
    if (w(j) > 0.0)
      worst = std::max(worst, std::abs(g + l1));
    else if (w(j) < 0.0)
      worst = std::max(worst, std::abs(g - l1));
    else
      worst = std::max(worst, std::max(0.0, std::abs(g) - l1));
  }
  return worst;
}

}  // namespace oracles
