#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "lift3d/dataset.hpp"
#include "lift3d/errors.hpp"
#include "lift3d/synth.hpp"
#include "testutil.hpp"

using namespace lift3d;

namespace {

Dataset tiny_dataset() {
  Dataset ds;
  ds.images = {{"img_a", 640, 480, "a.jpg"}, {"img_b", 320, 240, ""}};
  ds.image_index = {{"img_a", 0}, {"img_b", 1}};
  ds.vocabulary["widget"] = {"nose", "tail"};

  GroundTruthObject obj;
  obj.image_id = "img_a";
  obj.class_label = "widget";
  obj.box = {10.5, 20.0, 110.5, 80.0};
  obj.azimuth = 123.25;
  obj.elevation = 17.5;
  obj.theta = -4.0;
  obj.distance = 6.5;
  obj.difficult = true;
  obj.prototype_id = "cube";
  obj.mask_path = "masks/a.pbm";
  obj.keypoints["nose"] = {{30.0, 40.0}, true};
  obj.keypoints["tail"] = {{90.0, 60.0}, false};
  ds.objects.push_back(obj);

  GroundTruthObject plain;
  plain.image_id = "img_b";
  plain.class_label = "gadget";
  plain.box = {0.0, 0.0, 50.0, 50.0};
  plain.azimuth = 10.0;
  plain.elevation = 5.0;
  plain.distance = 3.0;
  ds.objects.push_back(plain);
  return ds;
}

}  // namespace

TEST_CASE("datasets survive a save and load round trip") {
  const auto dir = testutil::temp_dir("dataset-roundtrip");
  const Dataset ds = tiny_dataset();
  save_dataset(ds, dir);
  const Dataset back = load_dataset(dir);

  REQUIRE(back.images.size() == 2);
  CHECK(back.images[0].id == "img_a");
  CHECK(back.images[0].width == 640);
  CHECK(back.images[0].file == "a.jpg");
  CHECK(back.image_index.at("img_b") == 1);
  CHECK(back.vocabulary.at("widget") == std::vector<std::string>{"nose", "tail"});

  REQUIRE(back.objects.size() == 2);
  const auto& obj = back.objects[0];
  CHECK(obj.class_label == "widget");
  CHECK(obj.box.xmin == 10.5);
  CHECK(obj.box.xmax == 110.5);
  CHECK(obj.azimuth == quantize_angle(123.25));
  CHECK(obj.elevation == quantize_angle(17.5));
  CHECK(obj.theta == quantize_angle(-4.0));
  CHECK(obj.distance == 6.5);
  CHECK(obj.difficult);
  CHECK(obj.prototype_id == "cube");
  CHECK(obj.mask_path == "masks/a.pbm");
  REQUIRE(obj.keypoints.count("tail") == 1);
  CHECK(obj.keypoints.at("tail").position.x == 90.0);
  CHECK_FALSE(obj.keypoints.at("tail").visible);
  CHECK(back.objects[1].prototype_id.empty());

  CHECK(back.classes() == std::vector<std::string>{"gadget", "widget"});
  CHECK(back.image("img_a").height == 480);
  CHECK_THROWS_AS(back.image("nope"), DanglingReference);
}

TEST_CASE("out of range angles are normalized on load") {
  const auto dir = testutil::temp_dir("dataset-wrap");
  Dataset ds = tiny_dataset();
  ds.objects.resize(1);
  ds.objects[0].keypoints.clear();
  save_dataset(ds, dir);
  // Rewrite the objects file with raw out-of-range values; save_dataset
  // would already quantize and wrap them.
  testutil::write_file(dir / "objects.jsonl",
                       R"({"image_id":"img_a","class":"widget","bbox":[0,0,10,10],)"
                       R"("azimuth":400.0,"elevation":95.0,"theta":0.0,"distance":2.0})"
                       "\n");
  const Dataset back = load_dataset(dir);
  REQUIRE(back.objects.size() == 1);
  CHECK(back.objects[0].azimuth == 40.0);
  CHECK(back.objects[0].elevation == doctest::Approx(90.0).epsilon(1e-6));
  CHECK(back.objects[0].elevation < 90.0);
}

TEST_CASE("malformed dataset files raise typed errors") {
  const auto dir = testutil::temp_dir("dataset-errors");
  Dataset ds = tiny_dataset();
  ds.objects.resize(1);
  ds.objects[0].keypoints.clear();
  save_dataset(ds, dir);

  SUBCASE("object referencing a missing image") {
    testutil::write_file(dir / "objects.jsonl",
                         R"({"image_id":"ghost","class":"w","bbox":[0,0,1,1],)"
                         R"("azimuth":0,"elevation":0,"theta":0,"distance":1})"
                         "\n");
    CHECK_THROWS_AS(load_dataset(dir), DanglingReference);
  }
  SUBCASE("degenerate bounding box") {
    testutil::write_file(dir / "objects.jsonl",
                         R"({"image_id":"img_a","class":"w","bbox":[5,5,5,9],)"
                         R"("azimuth":0,"elevation":0,"theta":0,"distance":1})"
                         "\n");
    CHECK_THROWS_AS(load_dataset(dir), SchemaError);
  }
  SUBCASE("missing required field") {
    testutil::write_file(dir / "objects.jsonl",
                         R"({"image_id":"img_a","class":"w","bbox":[0,0,1,1]})"
                         "\n");
    CHECK_THROWS_AS(load_dataset(dir), SchemaError);
  }
  SUBCASE("non-positive distance") {
    testutil::write_file(dir / "objects.jsonl",
                         R"({"image_id":"img_a","class":"w","bbox":[0,0,1,1],)"
                         R"("azimuth":0,"elevation":0,"theta":0,"distance":0})"
                         "\n");
    CHECK_THROWS_AS(load_dataset(dir), SchemaError);
  }
  SUBCASE("keypoint outside the class vocabulary") {
    testutil::write_file(dir / "objects.jsonl",
                         R"({"image_id":"img_a","class":"widget","bbox":[0,0,1,1],)"
                         R"("azimuth":0,"elevation":0,"theta":0,"distance":1,)"
                         R"("keypoints":{"wing":{"x":1.0,"y":2.0}}})"
                         "\n");
    CHECK_THROWS_AS(load_dataset(dir), SchemaError);
  }
  SUBCASE("duplicate image id") {
    testutil::write_file(dir / "images.json",
                         R"([{"id":"img_a","width":10,"height":10},)"
                         R"({"id":"img_a","width":10,"height":10}])");
    CHECK_THROWS_AS(load_dataset(dir), SchemaError);
  }
  SUBCASE("invalid json") {
    testutil::write_file(dir / "objects.jsonl", "{not json\n");
    CHECK_THROWS_AS(load_dataset(dir), ParseError);
  }
  SUBCASE("missing images file") {
    std::filesystem::remove(dir / "images.json");
    CHECK_THROWS_AS(load_dataset(dir), ParseError);
  }
}

TEST_CASE("priors average elevation and distance per class") {
  Dataset ds = tiny_dataset();
  ds.objects[0].class_label = "widget";
  ds.objects[0].elevation = 10.0;
  ds.objects[0].distance = 4.0;
  GroundTruthObject extra = ds.objects[0];
  extra.elevation = 20.0;
  extra.distance = 6.0;
  ds.objects.push_back(extra);

  const ClassPriors priors = ds.priors();
  CHECK(priors.require("widget").elevation == 15.0);
  CHECK(priors.require("widget").distance == 5.0);
  CHECK(priors.require("gadget").elevation == 5.0);
  CHECK_THROWS_AS(priors.require("nothing"), MissingPriors);
}

TEST_CASE("detection files round trip including optional fields and the header line") {
  const auto dir = testutil::temp_dir("detections-roundtrip");
  std::vector<Detection> dets(2);
  dets[0] = {"img_a", "det_0", "widget", {1.0, 2.0, 3.0, 4.0}, 0.75, 123.5};
  dets[1] = {"img_b", "", "gadget", {0.0, 0.0, 9.0, 9.0}, 0.25, std::nullopt};
  save_detections(dets, dir / "d.jsonl", {{"run", "test"}});

  // First line is a header carrying the run config.
  std::ifstream in(dir / "d.jsonl");
  std::string first;
  std::getline(in, first);
  const auto header = nlohmann::json::parse(first);
  CHECK(header.at("format") == "lift3d/detections/1");
  CHECK(header.at("config").at("run") == "test");

  const auto back = load_detections(dir / "d.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "det_0");
  CHECK(back[0].score == 0.75);
  REQUIRE(back[0].azimuth.has_value());
  CHECK(*back[0].azimuth == quantize_angle(123.5));
  CHECK(back[1].id.empty());
  CHECK_FALSE(back[1].azimuth.has_value());
}

TEST_CASE("candidate and viewpoint files round trip") {
  const auto dir = testutil::temp_dir("candidates-roundtrip");
  std::vector<CandidateRecord> cands(2);
  cands[0] = {"img_a", {"nose", {12.5, 30.25}, 0.9}};
  cands[1] = {"img_a", {"tail", {50.0, 60.0}, 0.4}};
  save_candidates(cands, dir / "c.jsonl");
  const auto cback = load_candidates(dir / "c.jsonl");
  REQUIRE(cback.size() == 2);
  CHECK(cback[0].kp.name == "nose");
  CHECK(cback[0].kp.position.x == 12.5);
  CHECK(cback[1].kp.score == 0.4);

  std::vector<ViewpointRecord> views = {{"img_a", "det_0", 271.125}};
  save_viewpoints(views, dir / "v.jsonl");
  const auto vback = load_viewpoints(dir / "v.jsonl");
  REQUIRE(vback.size() == 1);
  CHECK(vback[0].detection_id == "det_0");
  CHECK(vback[0].azimuth == quantize_angle(271.125));
}

TEST_CASE("lift records round trip with pose, keypoints and reprojections") {
  const auto dir = testutil::temp_dir("lifts-roundtrip");
  LiftRecord rec;
  rec.detection = {"img_a", "det_7", "widget", {5.0, 6.0, 70.0, 90.0}, 0.5, std::nullopt};
  rec.prototype_id = "cube";
  rec.component_id = 2;
  rec.pose.azimuth = quantize_angle(300.25);
  rec.pose.elevation = quantize_angle(12.0);
  rec.pose.theta = quantize_angle(-3.5);
  rec.pose.distance = 15.0;
  rec.pose.tx = 320.0;
  rec.pose.ty = 240.0;
  rec.pose.focal = 3000.0;
  rec.residual = 1.25;
  rec.converged = true;
  rec.keypoints["nose"] = {10.0, 20.0};
  rec.reprojections["nose"] = {10.5, 19.5};
  save_lifts(std::vector<LiftRecord>{rec}, dir / "l.jsonl");

  const auto back = load_lifts(dir / "l.jsonl");
  REQUIRE(back.size() == 1);
  const auto& b = back[0];
  CHECK(b.detection.id == "det_7");
  CHECK(b.detection.class_label == "widget");
  CHECK(b.prototype_id == "cube");
  CHECK(b.component_id == 2);
  CHECK(b.pose.azimuth == rec.pose.azimuth);
  CHECK(b.pose.distance == 15.0);
  CHECK(b.pose.focal == 3000.0);
  CHECK(b.residual == 1.25);
  CHECK(b.converged);
  CHECK(b.keypoints.at("nose").x == 10.0);
  CHECK(b.reprojections.at("nose").y == 19.5);
}

TEST_CASE("jsonl reader skips blanks and rejects garbage") {
  const auto dir = testutil::temp_dir("jsonl");
  testutil::write_file(dir / "ok.jsonl",
                       "{\"format\":\"x\",\"config\":{}}\n\n{\"a\":1}\n   \n{\"a\":2}\n");
  const auto records = read_jsonl(dir / "ok.jsonl");
  REQUIRE(records.size() == 2);
  CHECK(records[0].at("a") == 1);
  CHECK(records[1].at("a") == 2);

  // A bare record on the first line is data, not a header.
  testutil::write_file(dir / "noheader.jsonl", "{\"a\":3}\n");
  CHECK(read_jsonl(dir / "noheader.jsonl").size() == 1);

  testutil::write_file(dir / "bad.jsonl", "{\"a\":}\n");
  CHECK_THROWS_AS(read_jsonl(dir / "bad.jsonl"), ParseError);
  CHECK_THROWS_AS(read_jsonl(dir / "missing.jsonl"), ParseError);
}

TEST_CASE("angle quantization snaps to the serialization grid") {
  CHECK(quantize_angle(40.0000004) == quantize_angle(40.0));
  CHECK(quantize_angle(40.0000006) == quantize_angle(40.000001));
  CHECK(quantize_angle(40.0000006) != quantize_angle(40.0));
  CHECK(quantize_angle(0.0) == 0.0);
  CHECK(quantize_angle(-0.0000004) == 0.0);
  // Quantization is idempotent.
  for (double v : {13.377, 211.9084, 359.999999, 0.25})
    CHECK(quantize_angle(quantize_angle(v)) == quantize_angle(v));
}

TEST_CASE("keypoint boxes take a fixed fraction of the object area") {
  const BBox object{0.0, 0.0, 10.0, 10.0};
  const BBox kb = keypoint_box({5.0, 5.0}, object, 0.30);
  const double side = std::sqrt(0.30 * 100.0);
  CHECK(kb.xmax - kb.xmin == doctest::Approx(side).epsilon(1e-12));
  CHECK(kb.ymax - kb.ymin == doctest::Approx(side).epsilon(1e-12));
  CHECK((kb.xmin + kb.xmax) / 2.0 == doctest::Approx(5.0).epsilon(1e-12));

  // The box may extend past the object; only the center and area are fixed.
  const BBox edge = keypoint_box({0.0, 0.0}, object);
  CHECK(edge.xmin < 0.0);

  CHECK_THROWS_AS(keypoint_box({5.0, 5.0}, object, 0.0), SchemaError);
  CHECK_THROWS_AS(keypoint_box({5.0, 5.0}, object, 1.5), SchemaError);
  CHECK_THROWS_AS(keypoint_box({5.0, 5.0}, BBox{3.0, 3.0, 3.0, 9.0}, 0.3), SchemaError);
}

TEST_CASE("the scene generator is deterministic in the seed") {
  const PrototypeRegistry registry = sample_registry();
  SynthConfig config;
  config.scenes = 8;
  config.noise_sigma = 1.5;
  config.seed = 42;
  config.distractors = 2;

  const SynthData a = gen_synthetic(registry, config);
  const SynthData b = gen_synthetic(registry, config);
  REQUIRE(a.dataset.objects.size() == 8);
  REQUIRE(a.candidates.size() == b.candidates.size());
  for (size_t i = 0; i < a.candidates.size(); ++i) {
    CHECK(a.candidates[i].kp.position.x == b.candidates[i].kp.position.x);
    CHECK(a.candidates[i].kp.position.y == b.candidates[i].kp.position.y);
    CHECK(a.candidates[i].kp.score == b.candidates[i].kp.score);
  }
  for (size_t i = 0; i < a.dataset.objects.size(); ++i) {
    CHECK(a.dataset.objects[i].azimuth == b.dataset.objects[i].azimuth);
    CHECK(a.dataset.objects[i].distance == b.dataset.objects[i].distance);
  }
  CHECK((a.features.features - b.features.features).norm() == 0.0);

  config.seed = 43;
  const SynthData c = gen_synthetic(registry, config);
  CHECK(a.dataset.objects[0].azimuth != c.dataset.objects[0].azimuth);
}

TEST_CASE("generator scenes are self-consistent") {
  const PrototypeRegistry registry = sample_registry();
  SynthConfig config;
  config.scenes = 20;
  config.seed = 7;
  const SynthData data = gen_synthetic(registry, config);

  REQUIRE(data.detections.size() == 20);
  for (size_t i = 0; i < data.detections.size(); ++i) {
    const auto& det = data.detections[i];
    const auto& obj = data.dataset.objects[i];
    CHECK(det.image_id == obj.image_id);
    CHECK(det.score == 1.0);
    CHECK(det.box.xmin == obj.box.xmin);
    CHECK(det.box.ymax == obj.box.ymax);
    CHECK_FALSE(obj.prototype_id.empty());
    // GT keypoints are exact projections of the prototype under the GT pose.
    const auto& protos = registry.for_class(obj.class_label);
    const auto proto = std::find_if(protos.begin(), protos.end(),
                                    [&](const Prototype& p) { return p.id == obj.prototype_id; });
    REQUIRE(proto != protos.end());
    CameraPose pose;
    pose.azimuth = obj.azimuth;
    pose.elevation = obj.elevation;
    pose.theta = obj.theta;
    pose.distance = obj.distance;
    pose.focal = config.focal;
    // tx/ty are not stored on the GT object; recover them from any keypoint.
    const auto& [name0, kp0] = *obj.keypoints.begin();
    const CameraPose centered = pose;
    const auto at_zero = project(centered, proto->keypoints.at(name0));
    REQUIRE(at_zero.has_value());
    pose.tx = kp0.position.x - at_zero->x;
    pose.ty = kp0.position.y - at_zero->y;
    for (const auto& [name, kp] : obj.keypoints) {
      const auto p = project(pose, proto->keypoints.at(name));
      REQUIRE(p.has_value());
      CHECK(p->x == doctest::Approx(kp.position.x).epsilon(1e-9));
      CHECK(p->y == doctest::Approx(kp.position.y).epsilon(1e-9));
    }
  }
  // Noise-free candidates coincide with the GT keypoints.
  for (const auto& cand : data.candidates) {
    const auto obj = std::find_if(data.dataset.objects.begin(), data.dataset.objects.end(),
                                  [&](const auto& o) { return o.image_id == cand.image_id; });
    REQUIRE(obj != data.dataset.objects.end());
    CHECK(cand.kp.position.x == obj->keypoints.at(cand.kp.name).position.x);
    CHECK(cand.kp.position.y == obj->keypoints.at(cand.kp.name).position.y);
  }
  // Feature rows encode the GT azimuth.
  REQUIRE(data.features.rows.size() == 20);
  for (size_t i = 0; i < data.features.rows.size(); ++i) {
    REQUIRE(data.features.rows[i].azimuth.has_value());
    CHECK(*data.features.rows[i].azimuth == data.dataset.objects[i].azimuth);
    CHECK(data.features.features(static_cast<Eigen::Index>(i), 2) ==
          data.dataset.objects[i].azimuth / 360.0);
  }
}

TEST_CASE("candidate noise matches the requested sigma") {
  const PrototypeRegistry registry = sample_registry();
  SynthConfig config;
  config.scenes = 300;
  config.noise_sigma = 2.0;
  config.seed = 11;
  const SynthData data = gen_synthetic(registry, config);

  std::vector<double> deltas;
  size_t cursor = 0;
  for (const auto& obj : data.dataset.objects) {
    for (size_t k = 0; k < obj.keypoints.size(); ++k, ++cursor) {
      const auto& cand = data.candidates[cursor];
      REQUIRE(cand.image_id == obj.image_id);
      const auto& gt = obj.keypoints.at(cand.kp.name).position;
      deltas.push_back(cand.kp.position.x - gt.x);
      deltas.push_back(cand.kp.position.y - gt.y);
    }
  }
  REQUIRE(deltas.size() >= 4000);
  double mean = 0.0;
  for (double d : deltas) mean += d;
  mean /= static_cast<double>(deltas.size());
  double var = 0.0;
  for (double d : deltas) var += (d - mean) * (d - mean);
  var /= static_cast<double>(deltas.size());
  const double stddev = std::sqrt(var);
  CHECK(stddev > 1.8);
  CHECK(stddev < 2.2);
  CHECK(std::abs(mean) < 0.15);
}

TEST_CASE("write_synth produces a loadable bundle") {
  const auto dir = testutil::temp_dir("synth-bundle");
  const PrototypeRegistry registry = sample_registry();
  SynthConfig config;
  config.scenes = 5;
  config.seed = 3;
  const SynthData data = gen_synthetic(registry, config);
  write_synth(data, dir, {{"seed", 3}});

  const Dataset ds = load_dataset(dir / "dataset");
  CHECK(ds.images.size() == 5);
  CHECK(ds.objects.size() == 5);
  CHECK(ds.vocabulary.count("widget") == 1);
  for (size_t i = 0; i < ds.objects.size(); ++i)
    CHECK(ds.objects[i].azimuth == quantize_angle(data.dataset.objects[i].azimuth));

  CHECK(load_detections(dir / "detections.jsonl").size() == 5);
  CHECK(load_candidates(dir / "candidates.jsonl").size() == data.candidates.size());
  const FeatureFile feats = load_features(dir / "features.bin", dir / "features.json");
  CHECK(feats.rows.size() == 5);
  CHECK(std::filesystem::exists(dir / "run.json"));
}
