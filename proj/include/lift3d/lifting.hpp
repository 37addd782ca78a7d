#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lift3d/geometry.hpp"
#include "lift3d/prototype.hpp"
#include "lift3d/solver.hpp"
#include "lift3d/spatial.hpp"

namespace lift3d {

// A 2D observation of a named prototype keypoint.
struct Correspondence {
  std::string name;
  Point2 image_point;
  double weight = 1.0;
};

struct ClassPrior {
  double elevation = 0.0;  // degrees
  double distance = 1.0;   // world units
};

struct ClassPriors {
  std::map<std::string, ClassPrior> by_class;
  const ClassPrior& require(const std::string& cls) const;
};

enum class RobustNorm { SquaredL2, HuberL1 };

RobustNorm robust_norm_from_string(const std::string& s);
std::string to_string(RobustNorm norm);

// Box constraints on the pose search. Azimuth is unconstrained (wrapped into
// [0, 360) after the fit).
struct FitBounds {
  double elev_lo = -90.0;
  double elev_hi = 90.0 - 1e-6;
  double theta_lo = -45.0;
  double theta_hi = 45.0;
  double dist_lo = 1e-3;
  double dist_hi = 1e6;
  double tx_lo = -1e6, tx_hi = 1e6;
  double ty_lo = -1e6, ty_hi = 1e6;
};

// Distance bounded to [0.5, 10] x prior distance, translation to twice the
// image extent.
FitBounds default_bounds(const ClassPrior& prior, double image_width, double image_height);

struct FitOptions {
  RobustNorm robust = RobustNorm::SquaredL2;
  double huber_delta = 5.0;  // pixels
  LmOptions lm;
  // Azimuth offsets (degrees) for the multi-start schedule; best final
  // objective wins.
  std::vector<double> azimuth_restarts{0.0, 15.0, -15.0};
};

struct FitResult {
  CameraPose pose;
  double residual = 0.0;   // mean unsquared reprojection error, pixels
  double objective = 0.0;  // optimizer objective (robust, squared)
  bool converged = false;
};

// Reprojection objective for one prototype against a fixed correspondence
// set. Residuals are ordered (du_0, dv_0, du_1, dv_1, ...) and scaled so that
// sum of squares equals sum_i w_i * rho(||k_i - proj_i||) with rho either the
// squared distance or the Huber loss on the unsquared distance.
class ReprojectionProblem {
 public:
  ReprojectionProblem(const Prototype& proto, std::vector<Correspondence> corrs, double focal,
                      RobustNorm robust = RobustNorm::SquaredL2, double huber_delta = 5.0);

  int correspondence_count() const { return static_cast<int>(corrs_.size()); }
  int residual_count() const { return 2 * correspondence_count(); }

  // False when any correspondence point lands at or behind the camera plane.
  bool residuals(const CameraPose& pose, Eigen::VectorXd& r) const;
  // Analytic Jacobian with respect to (azimuth, elevation, theta, distance,
  // tx, ty), angle columns in degrees. Only valid at feasible poses.
  bool jacobian(const CameraPose& pose, Eigen::MatrixXd& J) const;

  // Weighted mean unsquared pixel distance; infinity at infeasible poses.
  double mean_pixel_error(const CameraPose& pose) const;

  const std::vector<Correspondence>& correspondences() const { return corrs_; }

 private:
  std::vector<Point3> points_;
  std::vector<Correspondence> corrs_;
  double focal_;
  RobustNorm robust_;
  double huber_delta_;
};

// Bounded local minimization of the reprojection objective over the full pose,
// restarted from the configured azimuth offsets. The returned objective never
// exceeds the objective at (clamped) init. Throws TooFewCorrespondences for
// fewer than 3 matched keypoints and DivergedBehindCamera when every restart
// is infeasible at its starting point.
FitResult fit_pose(const Prototype& proto, std::span<const Correspondence> corrs,
                   const CameraPose& init, const FitBounds& bounds,
                   const FitOptions& options = {});

// Initialization schedule: azimuth from the estimate, elevation from the
// class prior, theta 0, then a frozen-angle fit of (distance, tx, ty) starting
// from the prior distance and the correspondence centroid.
CameraPose init_pose(double azimuth_estimate_deg, const ClassPrior& prior,
                     const Prototype& proto, std::span<const Correspondence> corrs,
                     const FitBounds& bounds, double focal, const FitOptions& options = {});

enum class Strategy { Guided, BestObjective };

Strategy strategy_from_string(const std::string& s);
std::string to_string(Strategy s);

// A scored 2D detection to be lifted.
struct Detection {
  std::string image_id;
  std::string id;
  std::string class_label;
  BBox box;
  double score = 0.0;
  std::optional<double> azimuth;  // viewpoint estimate, if precomputed
};

struct LiftResult {
  std::string prototype_id;
  int prototype_index = -1;
  int component_id = -1;
  CameraPose pose;
  double residual = 0.0;
  bool converged = false;
  // Keypoints actually used by the fit and their reprojections under `pose`.
  std::map<std::string, KeypointCandidate> pooled;
  std::map<std::string, Point2> reprojections;
};

struct LiftOptions {
  double focal = 3000.0;
  double image_width = 640.0;
  double image_height = 480.0;
  FitOptions fit;
  bool weight_by_score = false;
};

// Lifts one detection to a 3D hypothesis: pools keypoint evidence through the
// spatial model, then exhaustively fits every prototype of the detection's
// class and keeps the lowest-residual result (ties -> first prototype).
//
// Guided: the component nearest `azimuth_estimate` is used (the estimate is
// required). Best-objective: every component is pooled and fit; with no
// estimate each component's own azimuth center seeds the initialization.
LiftResult lift(const Detection& det, std::span<const KeypointCandidate> candidates,
                const SpatialModel& spatial, std::optional<double> azimuth_estimate,
                const PrototypeRegistry& registry, const ClassPriors& priors, Strategy strategy,
                const LiftOptions& options = {});

}  // namespace lift3d
