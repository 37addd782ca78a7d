#pragma once

#include <cstdint>
#include <filesystem>

#include "lift3d/dataset.hpp"
#include "lift3d/prototype.hpp"
#include "lift3d/regression.hpp"

namespace lift3d {

// Forward-projection scene generator: each scene places one prototype
// instance at a random pose, the GT box is the tight box of the projected
// mesh vertices, detections are the GT boxes with score 1, and keypoint
// candidates are the projected keypoints plus isotropic Gaussian pixel noise.
struct SynthConfig {
  int scenes = 50;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;
  int distractors = 0;  // uniform low-score clutter candidates per scene

  int image_width = 640;
  int image_height = 480;
  double focal = 3000.0;

  // Pose sampling bounds. Angles land on the angle_grid lattice so that
  // serialized values compare exactly across the pipeline.
  double azimuth_lo = 0.0, azimuth_hi = 360.0;
  double elev_lo = 5.0, elev_hi = 30.0;
  double theta_lo = -10.0, theta_hi = 10.0;
  double dist_lo = 14.0, dist_hi = 20.0;
  double tx_lo = 290.0, tx_hi = 350.0;
  double ty_lo = 220.0, ty_hi = 260.0;
  double angle_grid = 1e-3;

  bool emit_features = true;  // azimuth-derived features for regressor training
};

struct SynthData {
  Dataset dataset;
  std::vector<Detection> detections;
  std::vector<CandidateRecord> candidates;
  FeatureFile features;
};

SynthData gen_synthetic(const PrototypeRegistry& registry, const SynthConfig& config);

// Writes dataset/, detections.jsonl, candidates.jsonl and (when present)
// features.bin/features.json under out_dir.
void write_synth(const SynthData& data, const std::filesystem::path& out_dir,
                 const nlohmann::json& run_config);

// Axis-aligned box prototype with 8 corner keypoints named c000..c111
// (digits are the x/y/z signs: 0 = negative, 1 = positive half-extent).
Prototype make_box_prototype(const std::string& class_label, const std::string& id, double hx,
                             double hy, double hz);
// Box whose +z face is shrunk by top_scale, a crude wedge.
Prototype make_tapered_box_prototype(const std::string& class_label, const std::string& id,
                                     double hx, double hy, double hz, double top_scale);

// Three distinct prototypes ("cube", "brick", "wedge") for class "widget".
PrototypeRegistry sample_registry();

}  // namespace lift3d
