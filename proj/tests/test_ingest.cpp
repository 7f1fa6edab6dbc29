#include <doctest.h>

#include <filesystem>
#include <map>
#include <sstream>
#include <thread>

#include "helpers.hpp"
#include "skelfuse/ingest.hpp"
#include "skelfuse/sim.hpp"

using namespace skelfuse;
using testutil::random_pose;
using testutil::random_rotation;
using testutil::random_vec;

namespace {

DetectionBatch make_batch(const std::string& cam, double t, std::size_t people, std::mt19937_64& rng) {
  DetectionBatch b;
  b.camera_id = cam;
  b.timestamp = t;
  for (std::size_t k = 0; k < people; ++k) {
    SkeletonDetection d = testutil::detection_from(random_pose(rng), t, 0.75, cam);
    d.joints[3].reset();
    b.detections.push_back(d);
  }
  return b;
}

}  // namespace

TEST_SUITE("ingest") {
  TEST_CASE("identity and translated extrinsics") {
    std::mt19937_64 rng(1);
    const DetectionBatch b = make_batch("n0", 0.5, 2, rng);
    const Extrinsics ex = {{"n0", RigidTransform::identity()}, {"n1", RigidTransform::from_translation({0, 0, 2})}};
    const DetectionBatch same = ingest_batch(b, ex);
    for (std::size_t k = 0; k < 2; ++k) {
      for (std::size_t j = 0; j < kNumJoints; ++j) {
        CHECK(same.detections[k].joints[j].has_value() == b.detections[k].joints[j].has_value());
        if (!b.detections[k].joints[j]) continue;
        CHECK(same.detections[k].joints[j]->position == b.detections[k].joints[j]->position);
        CHECK(same.detections[k].joints[j]->confidence == b.detections[k].joints[j]->confidence);
      }
    }
    DetectionBatch b1 = b;
    b1.camera_id = "n1";
    for (auto& d : b1.detections) d.camera_id = "n1";
    const DetectionBatch up = ingest_batch(b1, ex);
    CHECK(up.timestamp == b1.timestamp);
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      if (!b1.detections[0].joints[j]) continue;
      CHECK((up.detections[0].joints[j]->position - b1.detections[0].joints[j]->position - Vec3(0, 0, 2)).norm() <
            1e-15);
    }
  }

  TEST_CASE("unknown camera is rejected") {
    std::mt19937_64 rng(2);
    const DetectionBatch b = make_batch("ghost", 0.0, 1, rng);
    CHECK_THROWS_WITH_AS(ingest_batch(b, Extrinsics{}), "uncalibrated node: ghost", std::out_of_range);
  }

  TEST_CASE("two noiseless nodes agree after transformation") {
    sim::Scene scene;
    scene.duration = 1.0;
    sim::Subject s;
    s.id = "p";
    s.script.kind = sim::MotionScript::Kind::Static;
    s.script.position = sim::Vec2(0.7, -0.4);
    scene.subjects = {s};
    scene.nodes = sim::preset_paper_layout();
    scene.nodes.resize(2);
    for (auto& n : scene.nodes) n.clock_offset = 0.0;
    const auto gen = sim::generate_scene(scene, 4);
    const auto a = ingest_batch(gen.streams[0][0], gen.extrinsics);
    const auto b = ingest_batch(gen.streams[1][0], gen.extrinsics);
    REQUIRE(a.detections.size() == 1);
    REQUIRE(b.detections.size() == 1);
    // The raw camera-frame positions differ, the global ones do not.
    CHECK((gen.streams[0][0].detections[0].joints[1]->position - gen.streams[1][0].detections[0].joints[1]->position)
              .norm() > 0.1);
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      CHECK((a.detections[0].joints[j]->position - b.detections[0].joints[j]->position).norm() < 1e-9);
    }
  }

  TEST_CASE("validate catches invariant violations") {
    std::mt19937_64 rng(3);
    DetectionBatch b = make_batch("c", 1.0, 1, rng);
    CHECK_NOTHROW(validate(b));
    DetectionBatch bad = b;
    bad.detections[0].joints[0]->confidence = 1.5;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = b;
    bad.timestamp = -1.0;
    bad.detections[0].timestamp = -1.0;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = b;
    bad.detections[0].camera_id = "other";
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = b;
    bad.detections[0].joints = {};
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  }

  TEST_CASE("stream encoding round trips") {
    std::mt19937_64 rng(4);
    std::vector<DetectionBatch> batches;
    for (int k = 0; k < 5; ++k) batches.push_back(make_batch("cam7", 0.1 * k, static_cast<std::size_t>(k % 3), rng));
    std::stringstream ss;
    write_stream(ss, batches);
    const auto back = read_stream(ss);
    REQUIRE(back.size() == batches.size());
    for (std::size_t k = 0; k < back.size(); ++k) {
      CHECK(back[k].camera_id == "cam7");
      CHECK(back[k].timestamp == batches[k].timestamp);
      REQUIRE(back[k].detections.size() == batches[k].detections.size());
      for (std::size_t d = 0; d < back[k].detections.size(); ++d) {
        for (std::size_t j = 0; j < kNumJoints; ++j) {
          const auto& x = back[k].detections[d].joints[j];
          const auto& y = batches[k].detections[d].joints[j];
          REQUIRE(x.has_value() == y.has_value());
          if (x) {
            CHECK(x->position == y->position);
            CHECK(x->confidence == y->confidence);
          }
        }
      }
    }
  }

  TEST_CASE("format errors carry the line number") {
    std::mt19937_64 rng(5);
    std::string good = encode_batch(make_batch("c", 0.0, 1, rng));
    std::stringstream ss;
    ss << good << "\n\n" << R"({"camera_id":"c","timestamp":0.1,"detections":[[null,null]]})" << "\n";
    try {
      read_stream(ss, "s.jsonl");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.line() == 3);
      CHECK(std::string(e.what()).rfind("s.jsonl:3:", 0) == 0);
    }
    std::stringstream junk("not json\n");
    CHECK_THROWS_AS(read_stream(junk), FormatError);
    std::stringstream missing(R"({"timestamp":0.1,"detections":[]})" "\n");
    CHECK_THROWS_AS(read_stream(missing), FormatError);
  }

  TEST_CASE("extrinsics file round trip") {
    std::mt19937_64 rng(6);
    Extrinsics ex;
    ex.emplace("a", RigidTransform(random_rotation(rng), random_vec(rng, 3.0)));
    ex.emplace("b", RigidTransform::identity());
    const auto path = std::filesystem::temp_directory_path() / "skelfuse_test_extrinsics.json";
    write_extrinsics_file(path, ex);
    const Extrinsics back = read_extrinsics_file(path);
    REQUIRE(back.size() == 2);
    CHECK((back.at("a").rotation() - ex.at("a").rotation()).norm() < 1e-12);
    CHECK((back.at("a").translation() - ex.at("a").translation()).norm() < 1e-12);
    std::filesystem::remove(path);
  }

  TEST_CASE("merge_by_timestamp keeps per-node order and breaks ties by stream") {
    std::mt19937_64 rng(7);
    std::vector<std::vector<DetectionBatch>> streams(3);
    for (int k = 0; k < 10; ++k) {
      streams[0].push_back(make_batch("a", k * 0.033, 1, rng));
      streams[1].push_back(make_batch("b", k * 0.040, 1, rng));
      streams[2].push_back(make_batch("c", k * 0.033, 1, rng));
    }
    const auto merged = merge_by_timestamp(streams);
    CHECK(merged.size() == 30);
    for (std::size_t i = 1; i < merged.size(); ++i) CHECK(merged[i - 1].timestamp <= merged[i].timestamp);
    CHECK(merged[0].camera_id == "a");
    CHECK(merged[1].camera_id == "b");
    CHECK(merged[2].camera_id == "c");
  }

  TEST_CASE("arrival jitter interleaves nodes but preserves per-node FIFO") {
    std::mt19937_64 rng(8);
    std::vector<std::vector<DetectionBatch>> streams(4);
    for (int n = 0; n < 4; ++n)
      for (int k = 0; k < 50; ++k)
        streams[static_cast<std::size_t>(n)].push_back(make_batch("n" + std::to_string(n), k / 30.0 + n * 0.008, 1, rng));
    const auto arrived = merge_with_arrival_jitter(streams, 0.1, 42);
    CHECK(arrived.size() == 200);
    std::map<std::string, double> last;
    bool out_of_timestamp_order = false;
    for (std::size_t i = 0; i < arrived.size(); ++i) {
      const auto& b = arrived[i];
      if (last.count(b.camera_id)) CHECK(b.timestamp > last[b.camera_id]);
      last[b.camera_id] = b.timestamp;
      if (i > 0 && arrived[i - 1].timestamp > b.timestamp) out_of_timestamp_order = true;
    }
    CHECK(out_of_timestamp_order);
    const auto again = merge_with_arrival_jitter(streams, 0.1, 42);
    for (std::size_t i = 0; i < arrived.size(); ++i) {
      CHECK(again[i].camera_id == arrived[i].camera_id);
      CHECK(again[i].timestamp == arrived[i].timestamp);
    }
  }

  TEST_CASE("BatchQueue delivers every batch from concurrent producers in per-node order") {
    BatchQueue q;
    constexpr int kProducers = 4, kPerProducer = 500;
    std::vector<std::thread> producers;
    for (int p = 0; p < kProducers; ++p) {
      producers.emplace_back([&q, p]() {
        for (int k = 0; k < kPerProducer; ++k) {
          DetectionBatch b;
          b.camera_id = "n" + std::to_string(p);
          b.timestamp = k;
          q.push(std::move(b));
        }
      });
    }
    std::map<std::string, double> last;
    int received = 0;
    std::thread closer([&]() {
      for (auto& t : producers) t.join();
      q.close();
    });
    while (auto b = q.pop()) {
      if (last.count(b->camera_id)) CHECK(b->timestamp > last[b->camera_id]);
      last[b->camera_id] = b->timestamp;
      ++received;
    }
    closer.join();
    CHECK(received == kProducers * kPerProducer);
    CHECK_FALSE(q.pop().has_value());
  }
}
