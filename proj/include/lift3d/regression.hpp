#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace lift3d {

enum class Penalty { Ridge, Lasso, ElasticNet };

enum class UnwrapMode {
  Raw,       // regress target degrees as-is
  Recenter,  // shift targets by their circular mean into (-180, 180] first
};

std::string to_string(Penalty p);
Penalty penalty_from_string(const std::string& s);
std::string to_string(UnwrapMode m);
UnwrapMode unwrap_mode_from_string(const std::string& s);

struct TrainOptions {
  bool intercept = true;
  bool standardize = true;
  UnwrapMode unwrap = UnwrapMode::Raw;
  double tol = 1e-8;       // max KKT violation for coordinate descent
  int max_sweeps = 100000;
};

// Linear azimuth regressor. Weights act on standardized features
// z = (phi - feat_mean) / feat_std; prediction is
// normalize(z . weights + intercept + target_offset) in [0, 360).
struct Regressor {
  Penalty penalty = Penalty::Ridge;
  double lambda = 0.0;
  double l1_ratio = 1.0;
  int dim = 0;
  Eigen::VectorXd weights;
  double intercept = 0.0;
  Eigen::VectorXd feat_mean;
  Eigen::VectorXd feat_std;
  double target_offset = 0.0;  // circular-mean shift for UnwrapMode::Recenter
  std::string class_label;
};

// Fits
//   ridge:        ||y - Z w||^2 + lambda ||w||^2
//   lasso:        ||y - Z w||^2 + lambda ||w||_1
//   elastic net:  ||y - Z w||^2 + lambda (a ||w||_1 + (1 - a)/2 ||w||^2)
// on the (optionally standardized, optionally column-centered) design Z, with
// the intercept never penalized. Ridge is solved in closed form; lasso and
// elastic net by cyclic coordinate descent to the KKT tolerance.
//
// Throws SingularSystem for ridge with lambda == 0 on a rank-deficient design
// and NonConvergence if coordinate descent exhausts max_sweeps.
Regressor train(const Eigen::MatrixXd& phi, const Eigen::VectorXd& targets_deg, Penalty penalty,
                double lambda, double l1_ratio = 1.0, const TrainOptions& options = {},
                const std::string& class_label = "");

// Predicted azimuth in [0, 360). Throws DimensionMismatch on a wrong-size phi.
double predict(const Regressor& reg, const Eigen::VectorXd& phi);

void save_regressor(const Regressor& reg, const std::filesystem::path& path,
                    const nlohmann::json& run_config = {});
Regressor load_regressor(const std::filesystem::path& path);

// Feature store: binary matrix + JSON sidecar describing each row.
struct FeatureRow {
  std::string image_id;
  std::string detection_id;
  std::optional<double> azimuth;  // regression target when labeled
  std::string class_label;
};

struct FeatureFile {
  Eigen::MatrixXd features;  // n x d, float32 on disk
  std::vector<FeatureRow> rows;
};

void save_features(const FeatureFile& f, const std::filesystem::path& bin_path,
                   const std::filesystem::path& index_path);
FeatureFile load_features(const std::filesystem::path& bin_path,
                          const std::filesystem::path& index_path);

// Mean absolute circular error (degrees) of predictions against labeled rows.
double circular_mae(const Regressor& reg, const Eigen::MatrixXd& phi,
                    const Eigen::VectorXd& targets_deg);

// k-fold cross validation over a lambda grid; returns the lambda with the
// lowest mean held-out circular MAE (ties -> smaller lambda).
double select_lambda_kfold(const Eigen::MatrixXd& phi, const Eigen::VectorXd& targets_deg,
                           Penalty penalty, const std::vector<double>& lambda_grid,
                           double l1_ratio, int folds, const TrainOptions& options = {});

}  // namespace lift3d
