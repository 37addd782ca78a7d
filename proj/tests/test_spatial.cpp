#include <doctest.h>

#include <random>

#include "lift3d/errors.hpp"
#include "lift3d/spatial.hpp"
#include "testutil.hpp"

using namespace lift3d;

namespace {

SpatialInstance instance(double azimuth, const BBox& box,
                         std::map<std::string, Point2> kps) {
  SpatialInstance inst;
  inst.azimuth = azimuth;
  inst.box = box;
  inst.keypoints = std::move(kps);
  return inst;
}

}  // namespace

TEST_CASE("four well-separated azimuth groups recover their centers") {
  std::vector<double> angles;
  for (int rep = 0; rep < 25; ++rep)
    for (double a : {0.0, 90.0, 180.0, 270.0}) angles.push_back(a);
  const CircularKMeans km = circular_kmeans(angles, 4);
  REQUIRE(km.centers.size() == 4);
  for (double expected : {0.0, 90.0, 180.0, 270.0}) {
    double best = 360.0;
    for (double c : km.centers) best = std::min(best, azimuth_error(c, expected));
    CHECK(best < 1e-6);
  }
}

TEST_CASE("kmeans objective never increases across iterations") {
  std::mt19937_64 rng(67);
  std::uniform_real_distribution<double> angle(0.0, 360.0);
  std::vector<double> angles(60);
  for (double& a : angles) a = angle(rng);
  const CircularKMeans km = circular_kmeans(angles, 5);
  REQUIRE(!km.objective_trace.empty());
  for (size_t i = 1; i < km.objective_trace.size(); ++i)
    CHECK(km.objective_trace[i] <= km.objective_trace[i - 1] + 1e-12);
}

TEST_CASE("kmeans wraps the seam when averaging") {
  // Angles straddling 0/360: a linear mean would land near 180.
  const std::vector<double> angles{350.0, 355.0, 5.0, 10.0};
  const CircularKMeans km = circular_kmeans(angles, 1);
  CHECK(azimuth_error(km.centers[0], 0.0) < 1e-9);
}

TEST_CASE("converged assignments are a fixed point") {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> angle(0.0, 360.0);
  std::vector<double> angles(40);
  for (double& a : angles) a = angle(rng);
  const CircularKMeans km = circular_kmeans(angles, 3);
  for (size_t i = 0; i < angles.size(); ++i) {
    int best = 0;
    double best_err = azimuth_error(angles[i], km.centers[0]);
    for (int c = 1; c < 3; ++c) {
      const double err = azimuth_error(angles[i], km.centers[c]);
      if (err < best_err) {
        best_err = err;
        best = c;
      }
    }
    CHECK(km.assignment[i] == best);
  }
}

TEST_CASE("hand-computed offset moments") {
  const BBox box{0, 0, 100, 50};
  // Keypoint at normalized offsets (-0.1, 0) and (+0.1, 0) around the center.
  std::vector<SpatialInstance> instances = {
      instance(10.0, box, {{"nose", {50.0 - 10.0, 25.0}}}),
      instance(12.0, box, {{"nose", {50.0 + 10.0, 25.0}}}),
  };
  const SpatialModel model = fit_spatial(instances, 1, 2.0, "widget");
  REQUIRE(model.components.size() == 1);
  const KeypointStats& stats = model.components[0].keypoints.at("nose");
  CHECK(stats.mean_offset.x == doctest::Approx(0.0));
  CHECK(stats.mean_offset.y == doctest::Approx(0.0));
  CHECK(stats.stddev.x == doctest::Approx(0.1));  // population std
  CHECK(stats.stddev.y == doctest::Approx(0.0));
  CHECK(stats.extent.x == doctest::Approx(0.2));  // kappa * std
  CHECK(stats.extent.y == doctest::Approx(kMinPoolExtent));  // floored
  CHECK(stats.visibility == 1.0);
}

TEST_CASE("keypoints concentrated at the center degenerate to the floor extent") {
  const BBox box{10, 10, 30, 30};
  std::vector<SpatialInstance> instances;
  for (int i = 0; i < 5; ++i) instances.push_back(instance(40.0, box, {{"hub", {20.0, 20.0}}}));
  const SpatialModel model = fit_spatial(instances, 1, 3.0);
  const KeypointStats& stats = model.components[0].keypoints.at("hub");
  CHECK(stats.mean_offset.x == 0.0);
  CHECK(stats.stddev.x == 0.0);
  CHECK(stats.extent.x == kMinPoolExtent);
  CHECK(stats.extent.y == kMinPoolExtent);
}

TEST_CASE("keypoints missing from a component have zero visibility") {
  const BBox box{0, 0, 10, 10};
  std::vector<SpatialInstance> instances = {
      instance(0.0, box, {{"a", {5, 5}}}),
      instance(180.0, box, {{"b", {5, 5}}}),
  };
  const SpatialModel model = fit_spatial(instances, 2, 2.0);
  // Each cluster sees exactly one instance; the other instance's keypoint
  // name exists in the vocabulary with visibility 0.
  for (const auto& comp : model.components) {
    int visible = 0;
    for (const auto& [name, stats] : comp.keypoints) {
      CHECK((stats.visibility == 0.0 || stats.visibility == 1.0));
      if (stats.visibility > 0.0) ++visible;
    }
    CHECK(visible == 1);
  }
}

TEST_CASE("empty clusters are reported") {
  std::vector<SpatialInstance> instances;
  const BBox box{0, 0, 10, 10};
  for (int i = 0; i < 6; ++i) instances.push_back(instance(90.0, box, {{"a", {5, 5}}}));
  CHECK_THROWS_AS(fit_spatial(instances, 3, 2.0), EmptyCluster);
}

TEST_CASE("degenerate instance boxes are rejected") {
  std::vector<SpatialInstance> instances = {instance(0.0, BBox{5, 5, 5, 9}, {})};
  CHECK_THROWS_AS(fit_spatial(instances, 1, 2.0), SchemaError);
}

TEST_CASE("pooling keeps the best-scoring candidate inside the region") {
  SpatialModel model;
  model.class_label = "widget";
  SpatialComponent comp;
  comp.id = 0;
  comp.azimuth_center = 0.0;
  KeypointStats stats;
  stats.mean_offset = {0.1, -0.1};
  stats.extent = {0.1, 0.1};
  stats.visibility = 1.0;
  comp.keypoints["nose"] = stats;
  model.components.push_back(comp);

  const BBox box{100, 100, 200, 200};  // center (150,150), size 100x100
  // Region: center (160, 140), half extent 10 -> [150,170] x [130,150].
  const std::vector<KeypointCandidate> candidates = {
      {"nose", {160.0, 140.0}, 0.5},
      {"nose", {165.0, 135.0}, 0.9},
      {"nose", {300.0, 300.0}, 2.0},   // outside the region
      {"tail", {160.0, 140.0}, 3.0},   // wrong name
  };
  const auto pooled = pool_keypoints(model, 0, box, candidates);
  REQUIRE(pooled.count("nose") == 1);
  CHECK(pooled.at("nose").score == 0.9);
  CHECK(pooled.count("tail") == 0);
}

TEST_CASE("pooling region boundaries are inclusive and score ties keep the first candidate") {
  SpatialModel model;
  SpatialComponent comp;
  KeypointStats stats;
  stats.extent = {0.1, 0.1};
  stats.visibility = 1.0;
  comp.keypoints["p"] = stats;
  model.components.push_back(comp);
  const BBox box{0, 0, 100, 100};  // region [40,60] x [40,60]

  const std::vector<KeypointCandidate> on_edge = {{"p", {60.0, 60.0}, 0.3}};
  CHECK(pool_keypoints(model, 0, box, on_edge).count("p") == 1);

  const std::vector<KeypointCandidate> tied = {
      {"p", {50.0, 50.0}, 0.7},
      {"p", {55.0, 55.0}, 0.7},
  };
  const auto pooled = pool_keypoints(model, 0, box, tied);
  CHECK(pooled.at("p").position.x == 50.0);
}

TEST_CASE("pooling is equivariant to box translation and scale") {
  SpatialModel model;
  SpatialComponent comp;
  KeypointStats stats;
  stats.mean_offset = {0.05, 0.0};
  stats.extent = {0.2, 0.15};
  stats.visibility = 1.0;
  comp.keypoints["p"] = stats;
  model.components.push_back(comp);

  const BBox base{0, 0, 100, 100};
  const BBox region = pooling_region(stats, base);

  const BBox shifted{30, -20, 130, 80};
  const BBox region_shifted = pooling_region(stats, shifted);
  CHECK(region_shifted.xmin == doctest::Approx(region.xmin + 30.0));
  CHECK(region_shifted.ymax == doctest::Approx(region.ymax - 20.0));

  const BBox doubled{0, 0, 200, 200};
  const BBox region_doubled = pooling_region(stats, doubled);
  CHECK(region_doubled.width() == doctest::Approx(2.0 * region.width()));
  CHECK(region_doubled.height() == doctest::Approx(2.0 * region.height()));
}

TEST_CASE("unknown components and degenerate boxes are rejected at pooling time") {
  SpatialModel model;
  model.components.push_back(SpatialComponent{});
  CHECK_THROWS_AS(pool_keypoints(model, 5, BBox{0, 0, 1, 1}, {}), UnknownComponent);
  CHECK_THROWS_AS(pool_keypoints(model, 0, BBox{1, 1, 1, 1}, {}), SchemaError);
}

TEST_CASE("guided selection picks the nearest azimuth center, ties to the lowest id") {
  SpatialModel model;
  for (int c = 0; c < 4; ++c) {
    SpatialComponent comp;
    comp.id = c;
    comp.azimuth_center = 90.0 * c;
    model.components.push_back(comp);
  }
  CHECK(select_component_guided(model, 10.0) == 0);
  CHECK(select_component_guided(model, 80.0) == 1);
  CHECK(select_component_guided(model, 359.0) == 0);
  // 45 is equidistant from centers 0 and 90.
  CHECK(select_component_guided(model, 45.0) == 0);
}

TEST_CASE("spatial models round-trip through JSON") {
  const BBox box{0, 0, 64, 48};
  std::vector<SpatialInstance> instances = {
      instance(10.0, box, {{"a", {10, 10}}, {"b", {50, 40}}}),
      instance(20.0, box, {{"a", {12, 11}}, {"b", {48, 39}}}),
      instance(200.0, box, {{"a", {30, 22}}}),
  };
  const SpatialModel model = fit_spatial(instances, 2, 1.5, "widget");
  const auto dir = testutil::temp_dir("spatial-roundtrip");
  save_spatial_models({model}, dir / "spatial.json");
  const auto loaded = load_spatial_models(dir / "spatial.json");
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].class_label == "widget");
  CHECK(loaded[0].kappa == 1.5);
  REQUIRE(loaded[0].components.size() == 2);
  for (size_t c = 0; c < 2; ++c) {
    const auto& a = model.components[c];
    const auto& b = loaded[0].components[c];
    CHECK(a.azimuth_center == b.azimuth_center);
    REQUIRE(a.keypoints.size() == b.keypoints.size());
    for (const auto& [name, s] : a.keypoints) {
      const auto& t = b.keypoints.at(name);
      CHECK(s.mean_offset.x == t.mean_offset.x);
      CHECK(s.stddev.y == t.stddev.y);
      CHECK(s.extent.x == t.extent.x);
      CHECK(s.visibility == t.visibility);
    }
  }

  CHECK_THROWS_AS(load_spatial_models(dir / "missing.json"), ParseError);
}
