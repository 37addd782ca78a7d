#include <cctype>
#include <charconv>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lift3d/dataset.hpp"
#include "lift3d/errors.hpp"
#include "lift3d/lifting.hpp"
#include "lift3d/mask.hpp"
#include "lift3d/metrics.hpp"
#include "lift3d/parallel.hpp"
#include "lift3d/prototype.hpp"
#include "lift3d/raster.hpp"
#include "lift3d/regression.hpp"
#include "lift3d/spatial.hpp"
#include "lift3d/synth.hpp"

using namespace lift3d;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Shortest round-trip decimal form; deterministic for byte-identical reruns.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string sanitize(const std::string& name) {
  std::string out = name;
  for (char& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return out;
}

void write_csv(const fs::path& path, const std::string& header,
               const std::vector<std::string>& rows) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path.string());
  out << header << "\n";
  for (const auto& row : rows) out << row << "\n";
}

void write_run_sidecar(const fs::path& path, const json& config) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path.string());
  out << json{{"format", "lift3d/run/1"}, {"config", config}}.dump(2) << "\n";
}

std::vector<std::string> pr_rows(const PRCurve& curve) {
  std::vector<std::string> rows;
  for (size_t i = 0; i < curve.recall.size(); ++i)
    rows.push_back(fmt(curve.recall[i]) + "," + fmt(curve.precision[i]));
  return rows;
}

const Prototype& find_prototype(const PrototypeRegistry& registry, const std::string& cls,
                                const std::string& id) {
  for (const auto& proto : registry.for_class(cls))
    if (proto.id == id) return proto;
  throw DanglingReference("no prototype '" + id + "' in class '" + cls + "'");
}

std::vector<ScoredPrediction> preds_from_lifts(const std::vector<LiftRecord>& lifts) {
  std::vector<ScoredPrediction> preds;
  preds.reserve(lifts.size());
  for (const auto& rec : lifts)
    preds.push_back({rec.detection.image_id, rec.detection.class_label, rec.detection.box,
                     rec.detection.score, rec.pose.azimuth});
  return preds;
}

template <typename T>
std::vector<T> of_class(const std::vector<T>& items, const std::string& cls) {
  std::vector<T> out;
  for (const auto& item : items)
    if (item.class_label == cls) out.push_back(item);
  return out;
}

// GT mask: from the referenced PBM file when present, otherwise rendered from
// the annotated prototype and pose. The GT pose lacks the image translation,
// which is recovered exactly (up to annotation noise) as the mean offset
// between annotated keypoints and their translation-free projections.
Mask gt_mask_for(const GroundTruthObject& obj, const Dataset& ds,
                 const PrototypeRegistry& registry, double focal) {
  const ImageInfo& img = ds.image(obj.image_id);
  if (!obj.mask_path.empty()) return load_pbm(ds.root / obj.mask_path);
  if (obj.prototype_id.empty())
    throw SchemaError("GT object in image '" + obj.image_id +
                      "' has neither a mask file nor a prototype id");
  const Prototype& proto = find_prototype(registry, obj.class_label, obj.prototype_id);
  CameraPose pose;
  pose.azimuth = obj.azimuth;
  pose.elevation = obj.elevation;
  pose.theta = obj.theta;
  pose.distance = obj.distance;
  pose.focal = focal;
  double sx = 0.0, sy = 0.0;
  int used = 0;
  for (const auto& [name, kp] : obj.keypoints) {
    auto it = proto.keypoints.find(name);
    if (it == proto.keypoints.end()) continue;
    const auto centered = project(pose, it->second);
    if (!centered) continue;
    sx += kp.position.x - centered->x;
    sy += kp.position.y - centered->y;
    ++used;
  }
  if (used == 0)
    throw SchemaError("cannot recover the image translation for a GT object in '" +
                      obj.image_id + "': no keypoints shared with prototype '" +
                      obj.prototype_id + "'");
  pose.tx = sx / used;
  pose.ty = sy / used;
  return render_silhouette(proto, pose, img.width, img.height);
}

struct EvalInputs {
  Dataset dataset;
  std::vector<LiftRecord> lifts;
};

EvalInputs load_eval_inputs(const std::string& dataset_dir, const std::string& lifts_path,
                            const fs::path& out_dir) {
  fs::create_directories(out_dir);
  return {load_dataset(dataset_dir), load_lifts(lifts_path)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D object class detection pipeline: synthetic scenes, spatial keypoint "
               "models, viewpoint regression, 2D-to-3D lifting and evaluation"};
  app.require_subcommand(1);

  // gen-synth
  struct {
    std::string out;
    std::string registry;
    SynthConfig cfg;
    bool no_features = false;
  } gen;
  auto* gen_cmd = app.add_subcommand("gen-synth", "Generate a synthetic scene bundle");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--registry", gen.registry,
                      "Prototype manifest; the built-in sample registry is used and written to "
                      "<out>/registry/ when omitted");
  gen_cmd->add_option("--scenes", gen.cfg.scenes, "Scene count")->capture_default_str();
  gen_cmd->add_option("--noise", gen.cfg.noise_sigma, "Keypoint noise sigma, pixels")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.cfg.seed, "RNG seed")->capture_default_str();
  gen_cmd->add_option("--distractors", gen.cfg.distractors, "Clutter candidates per scene")
      ->capture_default_str();
  gen_cmd->add_option("--width", gen.cfg.image_width, "Image width")->capture_default_str();
  gen_cmd->add_option("--height", gen.cfg.image_height, "Image height")->capture_default_str();
  gen_cmd->add_option("--focal", gen.cfg.focal, "Focal length, pixels")->capture_default_str();
  gen_cmd->add_option("--azimuth-lo", gen.cfg.azimuth_lo)->capture_default_str();
  gen_cmd->add_option("--azimuth-hi", gen.cfg.azimuth_hi)->capture_default_str();
  gen_cmd->add_option("--elev-lo", gen.cfg.elev_lo)->capture_default_str();
  gen_cmd->add_option("--elev-hi", gen.cfg.elev_hi)->capture_default_str();
  gen_cmd->add_option("--theta-lo", gen.cfg.theta_lo)->capture_default_str();
  gen_cmd->add_option("--theta-hi", gen.cfg.theta_hi)->capture_default_str();
  gen_cmd->add_option("--dist-lo", gen.cfg.dist_lo)->capture_default_str();
  gen_cmd->add_option("--dist-hi", gen.cfg.dist_hi)->capture_default_str();
  gen_cmd->add_option("--tx-lo", gen.cfg.tx_lo)->capture_default_str();
  gen_cmd->add_option("--tx-hi", gen.cfg.tx_hi)->capture_default_str();
  gen_cmd->add_option("--ty-lo", gen.cfg.ty_lo)->capture_default_str();
  gen_cmd->add_option("--ty-hi", gen.cfg.ty_hi)->capture_default_str();
  gen_cmd->add_option("--angle-grid", gen.cfg.angle_grid, "Pose angle sampling lattice, degrees")
      ->capture_default_str();
  gen_cmd->add_flag("--no-features", gen.no_features, "Skip the feature matrix");
  gen_cmd->callback([&] {
    gen.cfg.emit_features = !gen.no_features;
    PrototypeRegistry registry;
    if (gen.registry.empty()) {
      registry = sample_registry();
      save_registry(registry, fs::path(gen.out) / "registry");
    } else {
      registry = load_registry(gen.registry);
    }
    const SynthData data = gen_synthetic(registry, gen.cfg);
    const json config = {{"scenes", gen.cfg.scenes},
                         {"noise", gen.cfg.noise_sigma},
                         {"seed", gen.cfg.seed},
                         {"distractors", gen.cfg.distractors},
                         {"width", gen.cfg.image_width},
                         {"height", gen.cfg.image_height},
                         {"focal", gen.cfg.focal},
                         {"azimuth", {gen.cfg.azimuth_lo, gen.cfg.azimuth_hi}},
                         {"elevation", {gen.cfg.elev_lo, gen.cfg.elev_hi}},
                         {"theta", {gen.cfg.theta_lo, gen.cfg.theta_hi}},
                         {"distance", {gen.cfg.dist_lo, gen.cfg.dist_hi}},
                         {"tx", {gen.cfg.tx_lo, gen.cfg.tx_hi}},
                         {"ty", {gen.cfg.ty_lo, gen.cfg.ty_hi}},
                         {"angle_grid", gen.cfg.angle_grid},
                         {"features", gen.cfg.emit_features},
                         {"registry", gen.registry.empty() ? "builtin" : "external"}};
    write_synth(data, gen.out, config);
  });

  // fit-spatial
  struct {
    std::string dataset;
    std::string out;
    int components = 8;
    double kappa = 2.0;
  } fitsp;
  auto* fitsp_cmd =
      app.add_subcommand("fit-spatial", "Fit viewpoint-conditioned spatial keypoint models");
  fitsp_cmd->add_option("--dataset", fitsp.dataset, "Dataset directory")->required();
  fitsp_cmd->add_option("--out", fitsp.out, "Output model file")->required();
  fitsp_cmd->add_option("--components", fitsp.components, "Azimuth clusters per class")
      ->capture_default_str();
  fitsp_cmd->add_option("--kappa", fitsp.kappa, "Pooling extent in keypoint stddevs")
      ->capture_default_str();
  fitsp_cmd->callback([&] {
    const Dataset ds = load_dataset(fitsp.dataset);
    std::vector<SpatialModel> models;
    for (const std::string& cls : ds.classes()) {
      std::vector<SpatialInstance> instances;
      for (const auto& obj : ds.objects) {
        if (obj.class_label != cls) continue;
        SpatialInstance inst;
        inst.azimuth = obj.azimuth;
        inst.box = obj.box;
        for (const auto& [name, kp] : obj.keypoints)
          if (kp.visible) inst.keypoints[name] = kp.position;
        instances.push_back(std::move(inst));
      }
      models.push_back(fit_spatial(instances, fitsp.components, fitsp.kappa, cls));
    }
    save_spatial_models(models, fitsp.out,
                        {{"components", fitsp.components}, {"kappa", fitsp.kappa}});
  });

  // train-regressor
  struct {
    std::string features, index, out;
    std::string penalty = "ridge";
    std::string cls;
    std::string unwrap = "raw";
    double lambda = 1.0;
    double l1_ratio = 0.5;
    bool no_intercept = false;
    bool no_standardize = false;
    double tol = 1e-8;
    int max_sweeps = 100000;
    std::vector<double> lambda_grid;
    int kfold = 5;
  } trainr;
  auto* trainr_cmd = app.add_subcommand("train-regressor", "Train the azimuth regressor");
  trainr_cmd->add_option("--features", trainr.features, "Binary feature matrix")->required();
  trainr_cmd->add_option("--index", trainr.index, "Feature row index (JSON)")->required();
  trainr_cmd->add_option("--out", trainr.out, "Output model file")->required();
  trainr_cmd->add_option("--penalty", trainr.penalty, "ridge | lasso | elastic-net")
      ->capture_default_str();
  trainr_cmd->add_option("--lambda", trainr.lambda, "Regularization strength")
      ->capture_default_str();
  trainr_cmd->add_option("--l1-ratio", trainr.l1_ratio, "Elastic-net mixing weight")
      ->capture_default_str();
  trainr_cmd->add_option("--class", trainr.cls, "Train on rows of this class only");
  trainr_cmd->add_flag("--no-intercept", trainr.no_intercept, "Fit without an intercept");
  trainr_cmd->add_flag("--no-standardize", trainr.no_standardize,
                       "Skip feature standardization");
  trainr_cmd->add_option("--unwrap-mode", trainr.unwrap, "raw | recenter")
      ->capture_default_str();
  trainr_cmd->add_option("--tol", trainr.tol, "Coordinate-descent KKT tolerance")
      ->capture_default_str();
  trainr_cmd->add_option("--max-sweeps", trainr.max_sweeps)->capture_default_str();
  trainr_cmd->add_option("--lambda-grid", trainr.lambda_grid,
                         "Select lambda by k-fold CV over this grid first");
  trainr_cmd->add_option("--kfold", trainr.kfold, "CV folds for --lambda-grid")
      ->capture_default_str();
  trainr_cmd->callback([&] {
    const FeatureFile feats = load_features(trainr.features, trainr.index);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < feats.features.rows(); ++i) {
      const FeatureRow& row = feats.rows[static_cast<size_t>(i)];
      if (!row.azimuth) continue;
      if (!trainr.cls.empty() && row.class_label != trainr.cls) continue;
      keep.push_back(i);
    }
    if (keep.empty()) throw SchemaError("no labeled feature rows to train on");
    Eigen::MatrixXd phi(static_cast<Eigen::Index>(keep.size()), feats.features.cols());
    Eigen::VectorXd y(static_cast<Eigen::Index>(keep.size()));
    for (size_t i = 0; i < keep.size(); ++i) {
      phi.row(static_cast<Eigen::Index>(i)) = feats.features.row(keep[i]);
      y[static_cast<Eigen::Index>(i)] = *feats.rows[static_cast<size_t>(keep[i])].azimuth;
    }

    const Penalty penalty = penalty_from_string(trainr.penalty);
    TrainOptions options;
    options.intercept = !trainr.no_intercept;
    options.standardize = !trainr.no_standardize;
    options.unwrap = unwrap_mode_from_string(trainr.unwrap);
    options.tol = trainr.tol;
    options.max_sweeps = trainr.max_sweeps;

    double lambda = trainr.lambda;
    if (!trainr.lambda_grid.empty())
      lambda = select_lambda_kfold(phi, y, penalty, trainr.lambda_grid, trainr.l1_ratio,
                                   trainr.kfold, options);
    const Regressor reg =
        train(phi, y, penalty, lambda, trainr.l1_ratio, options, trainr.cls);
    json config = {{"penalty", trainr.penalty},
                   {"lambda", lambda},
                   {"l1_ratio", trainr.l1_ratio},
                   {"intercept", options.intercept},
                   {"standardize", options.standardize},
                   {"unwrap", trainr.unwrap},
                   {"tol", trainr.tol},
                   {"max_sweeps", trainr.max_sweeps},
                   {"rows", keep.size()},
                   {"class", trainr.cls}};
    if (!trainr.lambda_grid.empty()) {
      config["lambda_grid"] = trainr.lambda_grid;
      config["kfold"] = trainr.kfold;
    }
    save_regressor(reg, trainr.out, config);
  });

  // predict-viewpoint
  struct {
    std::string features, index, model, out;
  } predv;
  auto* predv_cmd =
      app.add_subcommand("predict-viewpoint", "Predict azimuths for feature rows");
  predv_cmd->add_option("--features", predv.features, "Binary feature matrix")->required();
  predv_cmd->add_option("--index", predv.index, "Feature row index (JSON)")->required();
  predv_cmd->add_option("--model", predv.model, "Trained regressor")->required();
  predv_cmd->add_option("--out", predv.out, "Output viewpoint file")->required();
  predv_cmd->callback([&] {
    const Regressor reg = load_regressor(predv.model);
    const FeatureFile feats = load_features(predv.features, predv.index);
    std::vector<ViewpointRecord> records;
    for (Eigen::Index i = 0; i < feats.features.rows(); ++i) {
      const FeatureRow& row = feats.rows[static_cast<size_t>(i)];
      if (!reg.class_label.empty() && !row.class_label.empty() &&
          row.class_label != reg.class_label)
        continue;
      records.push_back(
          {row.image_id, row.detection_id, predict(reg, feats.features.row(i))});
    }
    save_viewpoints(records, predv.out,
                    {{"model_penalty", to_string(reg.penalty)},
                     {"model_lambda", reg.lambda},
                     {"model_class", reg.class_label}});
  });

  // lift
  struct {
    std::string dataset, detections, candidates, spatial, registry, out;
    std::string viewpoints, regressor, features, index;
    std::string strategy = "guided";
    std::string robust = "l2";
    double huber_delta = 5.0;
    double focal = 3000.0;
    bool weight_by_score = false;
  } liftc;
  auto* lift_cmd = app.add_subcommand("lift", "Lift 2D detections to 3D hypotheses");
  lift_cmd->add_option("--dataset", liftc.dataset, "Dataset directory")->required();
  lift_cmd->add_option("--detections", liftc.detections, "Detections to lift")->required();
  lift_cmd->add_option("--candidates", liftc.candidates, "Keypoint candidates")->required();
  lift_cmd->add_option("--spatial", liftc.spatial, "Spatial model file")->required();
  lift_cmd->add_option("--registry", liftc.registry, "Prototype manifest")->required();
  lift_cmd->add_option("--out", liftc.out, "Output lift file")->required();
  lift_cmd->add_option("--viewpoints", liftc.viewpoints,
                       "Azimuth estimates from predict-viewpoint");
  lift_cmd->add_option("--regressor", liftc.regressor,
                       "Predict azimuth estimates with this model (needs --features/--index)");
  lift_cmd->add_option("--features", liftc.features, "Feature matrix for --regressor");
  lift_cmd->add_option("--index", liftc.index, "Feature index for --regressor");
  lift_cmd->add_option("--strategy", liftc.strategy, "guided | best-objective")
      ->capture_default_str();
  lift_cmd->add_option("--robust", liftc.robust, "l2 | l1-smooth")->capture_default_str();
  lift_cmd->add_option("--huber-delta", liftc.huber_delta, "Huber corner, pixels")
      ->capture_default_str();
  lift_cmd->add_option("--focal", liftc.focal, "Focal length, pixels")->capture_default_str();
  lift_cmd->add_flag("--weight-by-score", liftc.weight_by_score,
                     "Weight correspondences by candidate score");
  lift_cmd->callback([&] {
    const Dataset ds = load_dataset(liftc.dataset);
    const std::vector<Detection> dets = load_detections(liftc.detections);
    std::map<std::string, std::vector<KeypointCandidate>> cands_by_image;
    for (const auto& rec : load_candidates(liftc.candidates))
      cands_by_image[rec.image_id].push_back(rec.kp);
    const std::vector<SpatialModel> models = load_spatial_models(liftc.spatial);
    std::map<std::string, const SpatialModel*> spatial_by_class;
    for (const auto& model : models) spatial_by_class[model.class_label] = &model;
    const PrototypeRegistry registry = load_registry(liftc.registry);
    const ClassPriors priors = ds.priors();
    const Strategy strategy = strategy_from_string(liftc.strategy);

    std::string estimate_source = "detections";
    std::map<std::pair<std::string, std::string>, double> estimates;
    if (!liftc.viewpoints.empty()) {
      estimate_source = "viewpoints";
      for (const auto& rec : load_viewpoints(liftc.viewpoints))
        estimates[{rec.image_id, rec.detection_id}] = rec.azimuth;
    } else if (!liftc.regressor.empty()) {
      if (liftc.features.empty() || liftc.index.empty())
        throw SchemaError("--regressor needs --features and --index");
      estimate_source = "regressor";
      const Regressor reg = load_regressor(liftc.regressor);
      const FeatureFile feats = load_features(liftc.features, liftc.index);
      for (Eigen::Index i = 0; i < feats.features.rows(); ++i) {
        const FeatureRow& row = feats.rows[static_cast<size_t>(i)];
        if (!reg.class_label.empty() && !row.class_label.empty() &&
            row.class_label != reg.class_label)
          continue;
        estimates[{row.image_id, row.detection_id}] = predict(reg, feats.features.row(i));
      }
    }

    LiftOptions base;
    base.focal = liftc.focal;
    base.fit.robust = robust_norm_from_string(liftc.robust);
    base.fit.huber_delta = liftc.huber_delta;
    base.weight_by_score = liftc.weight_by_score;

    for (const auto& det : dets) {
      if (!spatial_by_class.count(det.class_label))
        throw SchemaError("no spatial model for class '" + det.class_label + "'");
      registry.for_class(det.class_label);  // NoProtoForClass early, not mid-batch
      ds.image(det.image_id);
    }

    const int n = static_cast<int>(dets.size());
    std::vector<LiftRecord> records(dets.size());
    std::vector<std::exception_ptr> failures(dets.size());
    static const std::vector<KeypointCandidate> kNoCandidates;
    parallel_for(n, [&](int i) {
      try {
        const Detection& det = dets[static_cast<size_t>(i)];
        const ImageInfo& img = ds.image(det.image_id);
        LiftOptions options = base;
        options.image_width = img.width;
        options.image_height = img.height;
        std::optional<double> estimate;
        auto it = estimates.find({det.image_id, det.id});
        if (it == estimates.end()) it = estimates.find({det.image_id, std::string{}});
        if (it != estimates.end()) estimate = it->second;
        const auto cands = cands_by_image.find(det.image_id);
        const LiftResult result =
            lift(det, cands == cands_by_image.end() ? kNoCandidates : cands->second,
                 *spatial_by_class.at(det.class_label), estimate, registry, priors, strategy,
                 options);
        records[static_cast<size_t>(i)] = make_lift_record(det, result);
      } catch (...) {
        failures[static_cast<size_t>(i)] = std::current_exception();
      }
    });
    for (const auto& failure : failures)
      if (failure) std::rethrow_exception(failure);

    save_lifts(records, liftc.out,
               {{"strategy", liftc.strategy},
                {"robust", liftc.robust},
                {"huber_delta", liftc.huber_delta},
                {"focal", liftc.focal},
                {"weight_by_score", liftc.weight_by_score},
                {"estimates", estimate_source}});
  });

  // render-mask
  struct {
    std::string registry, cls, prototype, out;
    double azimuth = 0.0, elevation = 0.0, theta = 0.0, distance = 1.0;
    double tx = 0.0, ty = 0.0, focal = 3000.0;
    int width = 640, height = 480;
  } rend;
  auto* rend_cmd =
      app.add_subcommand("render-mask", "Render a prototype silhouette to a PBM mask");
  rend_cmd->add_option("--registry", rend.registry, "Prototype manifest")->required();
  rend_cmd->add_option("--class", rend.cls, "Class label")->required();
  rend_cmd->add_option("--prototype", rend.prototype, "Prototype id")->required();
  rend_cmd->add_option("--out", rend.out, "Output PBM path")->required();
  rend_cmd->add_option("--azimuth", rend.azimuth, "Degrees")->required();
  rend_cmd->add_option("--elevation", rend.elevation, "Degrees")->required();
  rend_cmd->add_option("--theta", rend.theta, "Degrees")->capture_default_str();
  rend_cmd->add_option("--distance", rend.distance, "World units")->required();
  rend_cmd->add_option("--tx", rend.tx)->capture_default_str();
  rend_cmd->add_option("--ty", rend.ty)->capture_default_str();
  rend_cmd->add_option("--focal", rend.focal)->capture_default_str();
  rend_cmd->add_option("--width", rend.width)->capture_default_str();
  rend_cmd->add_option("--height", rend.height)->capture_default_str();
  rend_cmd->callback([&] {
    const PrototypeRegistry registry = load_registry(rend.registry);
    const Prototype& proto = find_prototype(registry, rend.cls, rend.prototype);
    CameraPose pose{rend.azimuth, rend.elevation, rend.theta,  rend.distance,
                    rend.tx,      rend.ty,        rend.focal};
    save_pbm(render_silhouette(proto, pose, rend.width, rend.height), rend.out);
    write_run_sidecar(fs::path(rend.out).string() + ".run.json",
                      {{"class", rend.cls},
                       {"prototype", rend.prototype},
                       {"azimuth", rend.azimuth},
                       {"elevation", rend.elevation},
                       {"theta", rend.theta},
                       {"distance", rend.distance},
                       {"tx", rend.tx},
                       {"ty", rend.ty},
                       {"focal", rend.focal},
                       {"width", rend.width},
                       {"height", rend.height}});
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate lifted hypotheses against GT");
  eval_cmd->require_subcommand(1);
  struct {
    std::string dataset, lifts, out, registry;
    double iou = 0.5;
    std::string mode = "allpoints";
    int bins = 8;
    double height_ref = 100.0;
    double radius = 25.0;
    double focal = 3000.0;
  } ev;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--dataset", ev.dataset, "Dataset directory")->required();
    cmd->add_option("--lifts", ev.lifts, "Lift records")->required();
    cmd->add_option("--out", ev.out, "Output directory")->required();
    cmd->add_option("--iou", ev.iou, "Matching IoU threshold")->capture_default_str();
  };

  auto* eval_ap = eval_cmd->add_subcommand("ap", "Detection average precision");
  add_common(eval_ap);
  eval_ap->add_option("--mode", ev.mode, "allpoints | 11pt")->capture_default_str();
  eval_ap->callback([&] {
    const auto in = load_eval_inputs(ev.dataset, ev.lifts, ev.out);
    const auto preds = preds_from_lifts(in.lifts);
    const ApMode mode = ap_mode_from_string(ev.mode);
    std::vector<std::string> summary;
    for (const std::string& cls : in.dataset.classes()) {
      const PRCurve curve =
          average_precision(of_class(preds, cls), of_class(in.dataset.objects, cls), ev.iou, mode);
      write_csv(fs::path(ev.out) / ("ap_" + sanitize(cls) + ".csv"), "recall,precision",
                pr_rows(curve));
      summary.push_back(cls + "," + fmt(curve.average));
    }
    write_csv(fs::path(ev.out) / "summary.csv", "class,ap", summary);
    write_run_sidecar(fs::path(ev.out) / "run.json",
                      {{"metric", "ap"}, {"iou", ev.iou}, {"mode", ev.mode}});
  });

  auto* eval_avp = eval_cmd->add_subcommand("avp", "AP with binned-viewpoint true positives");
  add_common(eval_avp);
  eval_avp->add_option("--mode", ev.mode, "allpoints | 11pt")->capture_default_str();
  eval_avp->add_option("--bins", ev.bins, "Azimuth bin count")->capture_default_str();
  eval_avp->callback([&] {
    const auto in = load_eval_inputs(ev.dataset, ev.lifts, ev.out);
    const auto preds = preds_from_lifts(in.lifts);
    const ApMode mode = ap_mode_from_string(ev.mode);
    std::vector<std::string> summary;
    for (const std::string& cls : in.dataset.classes()) {
      const PRCurve curve = avp_binned(of_class(preds, cls), of_class(in.dataset.objects, cls),
                                       ev.bins, ev.iou, mode);
      write_csv(fs::path(ev.out) / ("avp_" + sanitize(cls) + ".csv"), "recall,precision",
                pr_rows(curve));
      summary.push_back(cls + "," + fmt(curve.average));
    }
    write_csv(fs::path(ev.out) / "summary.csv", "class,avp", summary);
    write_run_sidecar(
        fs::path(ev.out) / "run.json",
        {{"metric", "avp"}, {"iou", ev.iou}, {"mode", ev.mode}, {"bins", ev.bins}});
  });

  auto* eval_aavp = eval_cmd->add_subcommand(
      "aavp", "Average AVP over continuous azimuth-error thresholds");
  add_common(eval_aavp);
  eval_aavp->add_option("--mode", ev.mode, "allpoints | 11pt")->capture_default_str();
  eval_aavp->callback([&] {
    const auto in = load_eval_inputs(ev.dataset, ev.lifts, ev.out);
    const auto preds = preds_from_lifts(in.lifts);
    const ApMode mode = ap_mode_from_string(ev.mode);
    const std::vector<double> grid = default_aavp_grid();
    std::vector<std::string> summary;
    for (const std::string& cls : in.dataset.classes()) {
      const AavpResult res =
          aavp(of_class(preds, cls), of_class(in.dataset.objects, cls), grid, ev.iou, mode);
      std::vector<std::string> rows;
      for (size_t k = 0; k < grid.size(); ++k)
        rows.push_back(fmt(grid[k]) + "," + fmt(res.avp[k]));
      write_csv(fs::path(ev.out) / ("aavp_" + sanitize(cls) + ".csv"), "D,avp", rows);
      summary.push_back(cls + "," + fmt(res.aavp));
    }
    write_csv(fs::path(ev.out) / "summary.csv", "class,aavp", summary);
    write_run_sidecar(fs::path(ev.out) / "run.json",
                      {{"metric", "aavp"}, {"iou", ev.iou}, {"mode", ev.mode}});
  });

  auto* eval_app = eval_cmd->add_subcommand("app", "Keypoint average precision per type");
  add_common(eval_app);
  eval_app->add_option("--mode", ev.mode, "allpoints | 11pt")->capture_default_str();
  eval_app->add_option("--height-ref", ev.height_ref, "Reference object height, pixels")
      ->capture_default_str();
  eval_app->add_option("--radius", ev.radius, "Match radius at the reference height, pixels")
      ->capture_default_str();
  eval_app->callback([&] {
    const auto in = load_eval_inputs(ev.dataset, ev.lifts, ev.out);
    const ApMode mode = ap_mode_from_string(ev.mode);
    std::vector<std::string> summary;
    for (const std::string& cls : in.dataset.classes()) {
      std::vector<KeypointPrediction> preds;
      for (const auto& rec : in.lifts) {
        if (rec.detection.class_label != cls) continue;
        for (const auto& [name, pos] : rec.reprojections)
          preds.push_back({rec.detection.image_id, name, pos, rec.detection.score});
      }
      std::vector<KeypointGtInstance> gts;
      for (const auto& obj : in.dataset.objects) {
        if (obj.class_label != cls || obj.difficult) continue;
        for (const auto& [name, kp] : obj.keypoints)
          gts.push_back({obj.image_id, name, kp.position, obj.box.height(), kp.visible});
      }
      const auto curves = lift3d::app(preds, gts, ev.height_ref, ev.radius, mode);
      double total = 0.0;
      for (const auto& [name, curve] : curves) {
        write_csv(fs::path(ev.out) / ("app_" + sanitize(cls) + "_" + sanitize(name) + ".csv"),
                  "recall,precision", pr_rows(curve));
        summary.push_back(cls + "," + name + "," + fmt(curve.average));
        total += curve.average;
      }
      if (!curves.empty())
        summary.push_back(cls + ",(mean)," + fmt(total / static_cast<double>(curves.size())));
    }
    write_csv(fs::path(ev.out) / "summary.csv", "class,keypoint,app", summary);
    write_run_sidecar(fs::path(ev.out) / "run.json",
                      {{"metric", "app"},
                       {"iou", ev.iou},
                       {"mode", ev.mode},
                       {"height_ref", ev.height_ref},
                       {"radius", ev.radius}});
  });

  auto* eval_seg = eval_cmd->add_subcommand("seg", "Masked segmentation accuracy");
  add_common(eval_seg);
  eval_seg->add_option("--registry", ev.registry, "Prototype manifest for mask rendering")
      ->required();
  eval_seg->add_option("--focal", ev.focal, "Focal length for GT mask rendering")
      ->capture_default_str();
  eval_seg->callback([&] {
    const auto in = load_eval_inputs(ev.dataset, ev.lifts, ev.out);
    const PrototypeRegistry registry = load_registry(ev.registry);
    const auto all_preds = preds_from_lifts(in.lifts);
    std::vector<std::string> summary;
    double grand_total = 0.0;
    int grand_count = 0;
    for (const std::string& cls : in.dataset.classes()) {
      const auto gts = of_class(in.dataset.objects, cls);
      std::vector<ScoredPrediction> preds;
      std::vector<const LiftRecord*> pred_recs;
      for (const auto& rec : in.lifts) {
        if (rec.detection.class_label != cls) continue;
        preds.push_back({rec.detection.image_id, rec.detection.class_label, rec.detection.box,
                         rec.detection.score, rec.pose.azimuth});
        pred_recs.push_back(&rec);
      }
      const MatchResult match = greedy_match(preds, gts, ev.iou);
      std::vector<const LiftRecord*> lift_for_gt(gts.size(), nullptr);
      for (size_t k = 0; k < match.order.size(); ++k)
        if (match.matched_gt[k] >= 0)
          lift_for_gt[static_cast<size_t>(match.matched_gt[k])] =
              pred_recs[static_cast<size_t>(match.order[k])];

      std::vector<std::string> rows;
      double total = 0.0;
      int count = 0;
      for (size_t g = 0; g < gts.size(); ++g) {
        if (gts[g].difficult) continue;
        const ImageInfo& img = in.dataset.image(gts[g].image_id);
        Mask predicted(img.width, img.height);  // empty when no lift matched
        if (lift_for_gt[g]) {
          const LiftRecord& rec = *lift_for_gt[g];
          const Prototype& proto =
              find_prototype(registry, rec.detection.class_label, rec.prototype_id);
          predicted = render_silhouette(proto, rec.pose, img.width, img.height);
        }
        const Mask gt_mask = gt_mask_for(gts[g], in.dataset, registry, ev.focal);
        const double acc = seg_accuracy(predicted, gt_mask, gts[g].box);
        rows.push_back(gts[g].image_id + "," + std::to_string(g) + "," + fmt(acc));
        total += acc;
        ++count;
      }
      write_csv(fs::path(ev.out) / ("seg_" + sanitize(cls) + ".csv"),
                "image_id,gt_index,accuracy", rows);
      summary.push_back(cls + "," + std::to_string(count) + "," +
                        fmt(count > 0 ? total / count : 0.0));
      grand_total += total;
      grand_count += count;
    }
    summary.push_back("(all)," + std::to_string(grand_count) + "," +
                      fmt(grand_count > 0 ? grand_total / grand_count : 0.0));
    write_csv(fs::path(ev.out) / "summary.csv", "class,instances,accuracy", summary);
    write_run_sidecar(fs::path(ev.out) / "run.json",
                      {{"metric", "seg"}, {"iou", ev.iou}, {"focal", ev.focal}});
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
