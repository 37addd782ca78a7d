#include "lift3d/lifting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lift3d/errors.hpp"

namespace lift3d {

const ClassPrior& ClassPriors::require(const std::string& cls) const {
  auto it = by_class.find(cls);
  if (it == by_class.end()) throw MissingPriors("no priors for class '" + cls + "'");
  return it->second;
}

RobustNorm robust_norm_from_string(const std::string& s) {
  if (s == "l2") return RobustNorm::SquaredL2;
  if (s == "l1-smooth") return RobustNorm::HuberL1;
  throw SchemaError("unknown robust norm '" + s + "'");
}

std::string to_string(RobustNorm norm) {
  return norm == RobustNorm::SquaredL2 ? "l2" : "l1-smooth";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "guided") return Strategy::Guided;
  if (s == "best-objective") return Strategy::BestObjective;
  throw SchemaError("unknown strategy '" + s + "'");
}

std::string to_string(Strategy s) {
  return s == Strategy::Guided ? "guided" : "best-objective";
}

FitBounds default_bounds(const ClassPrior& prior, double image_width, double image_height) {
  FitBounds b;
  b.dist_lo = 0.5 * prior.distance;
  b.dist_hi = 10.0 * prior.distance;
  b.tx_lo = -2.0 * image_width;
  b.tx_hi = 2.0 * image_width;
  b.ty_lo = -2.0 * image_height;
  b.ty_hi = 2.0 * image_height;
  return b;
}

ReprojectionProblem::ReprojectionProblem(const Prototype& proto,
                                         std::vector<Correspondence> corrs, double focal,
                                         RobustNorm robust, double huber_delta)
    : corrs_(std::move(corrs)), focal_(focal), robust_(robust), huber_delta_(huber_delta) {
  points_.reserve(corrs_.size());
  for (const auto& c : corrs_) {
    auto it = proto.keypoints.find(c.name);
    if (it == proto.keypoints.end())
      throw SchemaError("correspondence '" + c.name + "' has no 3D keypoint on prototype '" +
                        proto.id + "'");
    points_.push_back(it->second);
  }
}

namespace {

// Huber-on-distance scaling: residual pair e is multiplied by c(d) so that
// ||c(d) e||^2 = rho(d) with rho(d) = d^2 for d <= delta, 2*delta*d - delta^2
// beyond. c is C^1 across the switch.
inline double huber_scale(double d, double delta) {
  if (d <= delta) return 1.0;
  return std::sqrt(delta * (2.0 * d - delta)) / d;
}

inline double huber_scale_derivative(double d, double delta) {
  if (d <= delta) return 0.0;
  const double s = std::sqrt(delta * (2.0 * d - delta));
  return delta * (delta - d) / (s * d * d);
}

}  // namespace

bool ReprojectionProblem::residuals(const CameraPose& pose, Eigen::VectorXd& r) const {
  r.resize(residual_count());
  for (size_t i = 0; i < corrs_.size(); ++i) {
    const Vec3 pc = camera_frame_point(pose, points_[i]);
    if (pc.z <= kDepthEpsilon) return false;
    const double u = focal_ * pc.x / pc.z + pose.tx;
    const double v = focal_ * pc.y / pc.z + pose.ty;
    double ex = u - corrs_[i].image_point.x;
    double ey = v - corrs_[i].image_point.y;
    const double sw = std::sqrt(corrs_[i].weight);
    if (robust_ == RobustNorm::HuberL1) {
      const double c = huber_scale(std::hypot(ex, ey), huber_delta_);
      ex *= c;
      ey *= c;
    }
    r[2 * i] = sw * ex;
    r[2 * i + 1] = sw * ey;
  }
  return true;
}

bool ReprojectionProblem::jacobian(const CameraPose& pose, Eigen::MatrixXd& J) const {
  J.resize(residual_count(), 6);
  const double A = deg2rad(pose.azimuth);
  const double E = deg2rad(pose.elevation);
  const double T = deg2rad(pose.theta);
  const Mat3 B = camera_axis_convention();
  const Mat3 R = rotation_y(T) * rotation_x(E) * rotation_z(-A);
  // Derivatives of R with respect to the angles in radians.
  const Mat3 dR_dA = rotation_y(T) * rotation_x(E) * (-1.0 * rotation_z_derivative(-A));
  const Mat3 dR_dE = rotation_y(T) * rotation_x_derivative(E) * rotation_z(-A);
  const Mat3 dR_dT = rotation_y_derivative(T) * rotation_x(E) * rotation_z(-A);
  constexpr double kDegScale = kPi / 180.0;

  for (size_t i = 0; i < corrs_.size(); ++i) {
    const Point3& X = points_[i];
    Vec3 pc = B * (R * X);
    pc.z += pose.distance;
    if (pc.z <= kDepthEpsilon) return false;

    const Vec3 d_dA = B * (dR_dA * X);
    const Vec3 d_dE = B * (dR_dE * X);
    const Vec3 d_dT = B * (dR_dT * X);

    const double inv_z = 1.0 / pc.z;
    const double u = focal_ * pc.x * inv_z + pose.tx;
    const double v = focal_ * pc.y * inv_z + pose.ty;
    const double ex = u - corrs_[i].image_point.x;
    const double ey = v - corrs_[i].image_point.y;

    // du/dp and dv/dp for the six parameters, angle columns in degrees.
    auto du = [&](const Vec3& dc) { return focal_ * (dc.x * pc.z - pc.x * dc.z) * inv_z * inv_z; };
    auto dv = [&](const Vec3& dc) { return focal_ * (dc.y * pc.z - pc.y * dc.z) * inv_z * inv_z; };
    double ju[6] = {du(d_dA) * kDegScale, du(d_dE) * kDegScale, du(d_dT) * kDegScale,
                    du(Vec3{0, 0, 1}), 1.0, 0.0};
    double jv[6] = {dv(d_dA) * kDegScale, dv(d_dE) * kDegScale, dv(d_dT) * kDegScale,
                    dv(Vec3{0, 0, 1}), 0.0, 1.0};

    const double sw = std::sqrt(corrs_[i].weight);
    if (robust_ == RobustNorm::SquaredL2) {
      for (int p = 0; p < 6; ++p) {
        J(2 * i, p) = sw * ju[p];
        J(2 * i + 1, p) = sw * jv[p];
      }
    } else {
      const double d = std::hypot(ex, ey);
      const double c = huber_scale(d, huber_delta_);
      const double dc = huber_scale_derivative(d, huber_delta_);
      for (int p = 0; p < 6; ++p) {
        const double dd = d > 0.0 ? (ex * ju[p] + ey * jv[p]) / d : 0.0;
        J(2 * i, p) = sw * (c * ju[p] + ex * dc * dd);
        J(2 * i + 1, p) = sw * (c * jv[p] + ey * dc * dd);
      }
    }
  }
  return true;
}

double ReprojectionProblem::mean_pixel_error(const CameraPose& pose) const {
  double total = 0.0, weight = 0.0;
  for (size_t i = 0; i < corrs_.size(); ++i) {
    const auto proj = project(pose, points_[i]);
    if (!proj) return std::numeric_limits<double>::infinity();
    total += corrs_[i].weight *
             std::hypot(proj->x - corrs_[i].image_point.x, proj->y - corrs_[i].image_point.y);
    weight += corrs_[i].weight;
  }
  return weight > 0.0 ? total / weight : 0.0;
}

namespace {

// Parameter order: azimuth, elevation, theta, distance, tx, ty.
Eigen::VectorXd pose_to_vec(const CameraPose& p) {
  Eigen::VectorXd x(6);
  x << p.azimuth, p.elevation, p.theta, p.distance, p.tx, p.ty;
  return x;
}

CameraPose vec_to_pose(const Eigen::VectorXd& x, double focal) {
  CameraPose p;
  p.azimuth = x[0];
  p.elevation = x[1];
  p.theta = x[2];
  p.distance = x[3];
  p.tx = x[4];
  p.ty = x[5];
  p.focal = focal;
  return p;
}

struct BoundVecs {
  Eigen::VectorXd lower, upper;
};

BoundVecs bound_vecs(const FitBounds& b) {
  const double inf = std::numeric_limits<double>::infinity();
  BoundVecs v;
  v.lower.resize(6);
  v.upper.resize(6);
  v.lower << -inf, b.elev_lo, b.theta_lo, b.dist_lo, b.tx_lo, b.ty_lo;
  v.upper << inf, b.elev_hi, b.theta_hi, b.dist_hi, b.tx_hi, b.ty_hi;
  return v;
}

// Minimizes over the parameter subset `active`, holding the rest at x0.
LmResult solve_subset(const ReprojectionProblem& problem, const Eigen::VectorXd& x0,
                      const BoundVecs& bounds, const std::vector<int>& active, double focal,
                      const LmOptions& lm) {
  const int na = static_cast<int>(active.size());
  auto expand = [&](const Eigen::VectorXd& xa) {
    Eigen::VectorXd full = x0;
    for (int k = 0; k < na; ++k) full[active[k]] = xa[k];
    return full;
  };
  ResidualFn residuals = [&](const Eigen::VectorXd& xa, Eigen::VectorXd& r) {
    return problem.residuals(vec_to_pose(expand(xa), focal), r);
  };
  Eigen::MatrixXd full_jac;
  JacobianFn jacobian = [&](const Eigen::VectorXd& xa, Eigen::MatrixXd& J) {
    problem.jacobian(vec_to_pose(expand(xa), focal), full_jac);
    J.resize(full_jac.rows(), na);
    for (int k = 0; k < na; ++k) J.col(k) = full_jac.col(active[k]);
  };

  Eigen::VectorXd xa0(na), lo(na), hi(na);
  for (int k = 0; k < na; ++k) {
    xa0[k] = x0[active[k]];
    lo[k] = bounds.lower[active[k]];
    hi[k] = bounds.upper[active[k]];
  }
  LmResult sub = minimize_bounded(residuals, jacobian, xa0, lo, hi, lm);
  LmResult out = sub;
  out.x = expand(sub.x);
  return out;
}

}  // namespace

FitResult fit_pose(const Prototype& proto, std::span<const Correspondence> corrs,
                   const CameraPose& init, const FitBounds& bounds, const FitOptions& options) {
  if (corrs.size() < 3)
    throw TooFewCorrespondences("pose fit needs at least 3 correspondences, got " +
                                std::to_string(corrs.size()));
  ReprojectionProblem problem(proto, {corrs.begin(), corrs.end()}, init.focal, options.robust,
                              options.huber_delta);
  const BoundVecs bv = bound_vecs(bounds);
  const std::vector<int> all_params{0, 1, 2, 3, 4, 5};

  LmResult best;
  best.objective = std::numeric_limits<double>::infinity();
  bool any_feasible = false;
  std::vector<double> restarts = options.azimuth_restarts;
  if (restarts.empty()) restarts.push_back(0.0);
  for (double offset : restarts) {
    Eigen::VectorXd x0 = pose_to_vec(init);
    x0[0] += offset;
    LmResult run = solve_subset(problem, x0, bv, all_params, init.focal, options.lm);
    if (!run.feasible_start) continue;
    any_feasible = true;
    if (run.objective < best.objective) best = run;
  }
  if (!any_feasible)
    throw DivergedBehindCamera("all restarts start with geometry behind the camera");

  FitResult result;
  result.pose = normalized(vec_to_pose(best.x, init.focal));
  result.objective = best.objective;
  result.converged = best.converged;
  result.residual = problem.mean_pixel_error(result.pose);
  return result;
}

CameraPose init_pose(double azimuth_estimate_deg, const ClassPrior& prior, const Prototype& proto,
                     std::span<const Correspondence> corrs, const FitBounds& bounds, double focal,
                     const FitOptions& options) {
  if (corrs.size() < 3)
    throw TooFewCorrespondences("pose initialization needs at least 3 correspondences, got " +
                                std::to_string(corrs.size()));
  CameraPose pose;
  pose.azimuth = normalize_angle(azimuth_estimate_deg);
  pose.elevation = std::clamp(prior.elevation, bounds.elev_lo, bounds.elev_hi);
  pose.theta = 0.0;
  pose.distance = std::clamp(prior.distance, bounds.dist_lo, bounds.dist_hi);
  pose.focal = focal;

  double cx = 0.0, cy = 0.0;
  for (const auto& c : corrs) {
    cx += c.image_point.x;
    cy += c.image_point.y;
  }
  pose.tx = std::clamp(cx / corrs.size(), bounds.tx_lo, bounds.tx_hi);
  pose.ty = std::clamp(cy / corrs.size(), bounds.ty_lo, bounds.ty_hi);

  ReprojectionProblem problem(proto, {corrs.begin(), corrs.end()}, focal, options.robust,
                              options.huber_delta);
  const std::vector<int> frozen_angles{3, 4, 5};  // distance, tx, ty
  LmResult run =
      solve_subset(problem, pose_to_vec(pose), bound_vecs(bounds), frozen_angles, focal, options.lm);
  if (!run.feasible_start)
    throw DivergedBehindCamera("initialization starts with geometry behind the camera");
  return vec_to_pose(run.x, focal);
}

LiftResult lift(const Detection& det, std::span<const KeypointCandidate> candidates,
                const SpatialModel& spatial, std::optional<double> azimuth_estimate,
                const PrototypeRegistry& registry, const ClassPriors& priors, Strategy strategy,
                const LiftOptions& options) {
  const std::vector<Prototype>& protos = registry.for_class(det.class_label);
  const ClassPrior& prior = priors.require(det.class_label);
  const FitBounds bounds = default_bounds(prior, options.image_width, options.image_height);

  std::optional<double> estimate = azimuth_estimate ? azimuth_estimate : det.azimuth;
  std::vector<int> components;
  if (strategy == Strategy::Guided) {
    if (!estimate)
      throw MissingAzimuth("guided lifting requires an azimuth estimate for detection '" +
                           det.id + "'");
    components.push_back(select_component_guided(spatial, *estimate));
  } else {
    for (const auto& comp : spatial.components) components.push_back(comp.id);
  }

  LiftResult best;
  double best_residual = std::numeric_limits<double>::infinity();
  bool found = false;
  std::exception_ptr first_error;

  for (int comp_id : components) {
    std::map<std::string, KeypointCandidate> pooled;
    try {
      pooled = pool_keypoints(spatial, comp_id, det.box, candidates);
      if (pooled.empty())
        throw NoVisibleKeypoints("no keypoint candidate falls inside any pooling region");
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
      continue;
    }
    const double comp_estimate =
        estimate ? *estimate : spatial.components[comp_id].azimuth_center;

    for (size_t pi = 0; pi < protos.size(); ++pi) {
      const Prototype& proto = protos[pi];
      std::vector<Correspondence> corrs;
      std::map<std::string, KeypointCandidate> used;
      for (const auto& [name, cand] : pooled) {
        if (!proto.keypoints.count(name)) continue;
        corrs.push_back({name, cand.position, options.weight_by_score ? cand.score : 1.0});
        used[name] = cand;
      }
      try {
        if (corrs.size() < 3)
          throw TooFewCorrespondences("only " + std::to_string(corrs.size()) +
                                      " pooled keypoints match prototype '" + proto.id + "'");
        CameraPose init =
            init_pose(comp_estimate, prior, proto, corrs, bounds, options.focal, options.fit);
        FitResult fit = fit_pose(proto, corrs, init, bounds, options.fit);
        if (fit.residual < best_residual) {
          best_residual = fit.residual;
          best.prototype_id = proto.id;
          best.prototype_index = static_cast<int>(pi);
          best.component_id = comp_id;
          best.pose = fit.pose;
          best.residual = fit.residual;
          best.converged = fit.converged;
          best.pooled = used;
          best.reprojections.clear();
          for (const auto& [name, cand] : used) {
            auto proj = project(fit.pose, proto.keypoints.at(name));
            if (proj) best.reprojections[name] = *proj;
          }
          found = true;
        }
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
      }
    }
  }

  if (!found) {
    if (first_error) std::rethrow_exception(first_error);
    throw NoVisibleKeypoints("lifting produced no candidate fits");
  }
  return best;
}

}  // namespace lift3d
