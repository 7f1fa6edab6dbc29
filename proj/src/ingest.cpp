#include "skelfuse/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace skelfuse {

using nlohmann::json;

SkeletonPose SkeletonDetection::pose() const {
  SkeletonPose p;
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    if (joints[i]) p.joints[i] = joints[i]->position;
  }
  return p;
}

std::size_t SkeletonDetection::present_count() const {
  return static_cast<std::size_t>(
      std::count_if(joints.begin(), joints.end(), [](const auto& j) { return j.has_value(); }));
}

void validate(const DetectionBatch& batch) {
  if (!std::isfinite(batch.timestamp) || batch.timestamp < 0.0) {
    throw std::invalid_argument("timestamp must be finite and non-negative");
  }
  for (const SkeletonDetection& d : batch.detections) {
    if (d.camera_id != batch.camera_id || d.timestamp != batch.timestamp) {
      throw std::invalid_argument("detection does not share the batch camera_id/timestamp");
    }
    if (d.present_count() == 0) throw std::invalid_argument("detection has no joints");
    for (const auto& j : d.joints) {
      if (!j) continue;
      if (!(j->confidence >= 0.0 && j->confidence <= 1.0)) {
        throw std::invalid_argument("confidence outside [0,1]");
      }
      if (!j->position.allFinite()) throw std::invalid_argument("non-finite joint position");
    }
  }
}

DetectionBatch ingest_batch(const DetectionBatch& batch, const Extrinsics& extrinsics) {
  const auto it = extrinsics.find(batch.camera_id);
  if (it == extrinsics.end()) throw std::out_of_range("uncalibrated node: " + batch.camera_id);
  const RigidTransform& t = it->second;
  DetectionBatch out = batch;
  for (SkeletonDetection& d : out.detections) {
    for (auto& j : d.joints) {
      if (j) j->position = t.apply(j->position);
    }
  }
  return out;
}

// --- Stream files -----------------------------------------------------------

FormatError::FormatError(const std::string& source, std::size_t line, const std::string& reason)
    : std::runtime_error(fmt::format("{}:{}: {}", source, line, reason)), line_(line) {}

std::string encode_batch(const DetectionBatch& batch) {
  json dets = json::array();
  for (const SkeletonDetection& d : batch.detections) {
    json joints = json::array();
    for (const auto& j : d.joints) {
      if (!j) {
        joints.push_back(nullptr);
        continue;
      }
      joints.push_back({{"x", j->position.x()},
                        {"y", j->position.y()},
                        {"z", j->position.z()},
                        {"c", j->confidence}});
    }
    dets.push_back(std::move(joints));
  }
  json rec = {{"camera_id", batch.camera_id},
              {"timestamp", batch.timestamp},
              {"detections", std::move(dets)}};
  return rec.dump();
}

DetectionBatch decode_batch(const std::string& text, const std::string& source, std::size_t line) {
  const auto fail = [&](const std::string& why) { return FormatError(source, line, why); };
  json rec;
  try {
    rec = json::parse(text);
  } catch (const json::parse_error& e) {
    throw fail(std::string("invalid JSON: ") + e.what());
  }
  if (!rec.is_object()) throw fail("record is not an object");
  for (const char* key : {"camera_id", "timestamp", "detections"}) {
    if (!rec.contains(key)) throw fail(std::string("missing field '") + key + "'");
  }
  if (!rec["camera_id"].is_string()) throw fail("camera_id must be a string");
  if (!rec["timestamp"].is_number()) throw fail("timestamp must be a number");
  if (!rec["detections"].is_array()) throw fail("detections must be an array");

  DetectionBatch batch;
  batch.camera_id = rec["camera_id"].get<std::string>();
  batch.timestamp = rec["timestamp"].get<double>();
  for (const json& jd : rec["detections"]) {
    if (!jd.is_array() || jd.size() != kNumJoints) {
      throw fail(fmt::format("each detection must be an array of {} joints", kNumJoints));
    }
    SkeletonDetection d;
    d.camera_id = batch.camera_id;
    d.timestamp = batch.timestamp;
    for (std::size_t i = 0; i < kNumJoints; ++i) {
      const json& jj = jd[i];
      if (jj.is_null()) continue;
      if (!jj.is_object()) throw fail(fmt::format("joint {} must be null or an object", i));
      JointObservation obs;
      double* dst[] = {&obs.position.x(), &obs.position.y(), &obs.position.z(), &obs.confidence};
      const char* names[] = {"x", "y", "z", "c"};
      for (int k = 0; k < 4; ++k) {
        if (!jj.contains(names[k]) || !jj[names[k]].is_number()) {
          throw fail(fmt::format("joint {} field '{}' missing or not a number", i, names[k]));
        }
        *dst[k] = jj[names[k]].get<double>();
      }
      d.joints[i] = obs;
    }
    batch.detections.push_back(std::move(d));
  }
  try {
    validate(batch);
  } catch (const std::invalid_argument& e) {
    throw fail(e.what());
  }
  return batch;
}

std::vector<DetectionBatch> read_stream(std::istream& in, const std::string& source) {
  std::vector<DetectionBatch> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(decode_batch(line, source, n));
  }
  return out;
}

std::vector<DetectionBatch> read_stream_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stream file " + path.string());
  return read_stream(in, path.string());
}

void write_stream(std::ostream& out, const std::vector<DetectionBatch>& batches) {
  for (const DetectionBatch& b : batches) out << encode_batch(b) << '\n';
}

void write_stream_file(const std::filesystem::path& path, const std::vector<DetectionBatch>& batches) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_stream(out, batches);
}

Extrinsics read_extrinsics_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open extrinsics file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": invalid JSON: " + e.what());
  }
  Extrinsics out;
  for (const auto& [id, node] : doc.items()) {
    Mat3 r;
    Vec3 t;
    try {
      const auto rows = node.at("rotation").get<std::vector<std::vector<double>>>();
      const auto tv = node.at("translation").get<std::vector<double>>();
      if (rows.size() != 3 || tv.size() != 3) throw std::runtime_error("expected 3x3 / 3");
      for (int i = 0; i < 3; ++i) {
        if (rows[i].size() != 3) throw std::runtime_error("expected 3x3 rotation");
        for (int k = 0; k < 3; ++k) r(i, k) = rows[i][k];
        t(i) = tv[i];
      }
      out.emplace(id, RigidTransform(r, t));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ": camera '" + id + "': " + e.what());
    }
  }
  return out;
}

void write_extrinsics_file(const std::filesystem::path& path, const Extrinsics& extrinsics) {
  json doc = json::object();
  for (const auto& [id, t] : extrinsics) {
    json rows = json::array();
    for (int i = 0; i < 3; ++i) {
      rows.push_back({t.rotation()(i, 0), t.rotation()(i, 1), t.rotation()(i, 2)});
    }
    doc[id] = {{"rotation", rows},
               {"translation", {t.translation().x(), t.translation().y(), t.translation().z()}}};
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

// --- Replay -------------------------------------------------------------------

namespace {

struct Pending {
  double key;
  std::size_t stream;
  std::size_t pos;
};

std::vector<DetectionBatch> merge_by_keys(const std::vector<std::vector<DetectionBatch>>& streams,
                                          const std::vector<std::vector<double>>& keys) {
  const auto later = [](const Pending& a, const Pending& b) {
    if (a.key != b.key) return a.key > b.key;
    return a.stream > b.stream;
  };
  std::priority_queue<Pending, std::vector<Pending>, decltype(later)> heap(later);
  for (std::size_t s = 0; s < streams.size(); ++s) {
    if (!streams[s].empty()) heap.push({keys[s][0], s, 0});
  }
  std::vector<DetectionBatch> out;
  while (!heap.empty()) {
    const Pending p = heap.top();
    heap.pop();
    out.push_back(streams[p.stream][p.pos]);
    if (p.pos + 1 < streams[p.stream].size()) heap.push({keys[p.stream][p.pos + 1], p.stream, p.pos + 1});
  }
  return out;
}

}  // namespace

std::vector<DetectionBatch> merge_by_timestamp(const std::vector<std::vector<DetectionBatch>>& streams) {
  std::vector<std::vector<double>> keys(streams.size());
  for (std::size_t s = 0; s < streams.size(); ++s) {
    for (const DetectionBatch& b : streams[s]) keys[s].push_back(b.timestamp);
  }
  return merge_by_keys(streams, keys);
}

std::vector<DetectionBatch> merge_with_arrival_jitter(
    const std::vector<std::vector<DetectionBatch>>& streams, double max_delay, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> delay(0.0, std::max(0.0, max_delay));
  std::vector<std::vector<double>> keys(streams.size());
  for (std::size_t s = 0; s < streams.size(); ++s) {
    double prev = -std::numeric_limits<double>::infinity();
    for (const DetectionBatch& b : streams[s]) {
      prev = std::max(prev, b.timestamp + delay(rng));
      keys[s].push_back(prev);
    }
  }
  return merge_by_keys(streams, keys);
}

void BatchQueue::push(DetectionBatch batch) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) throw std::logic_error("push on closed BatchQueue");
    items_.push_back(std::move(batch));
  }
  ready_.notify_one();
}

std::optional<DetectionBatch> BatchQueue::pop() {
  std::unique_lock lock(mutex_);
  ready_.wait(lock, [this] { return closed_ || !items_.empty(); });
  if (items_.empty()) return std::nullopt;
  DetectionBatch b = std::move(items_.front());
  items_.pop_front();
  return b;
}

void BatchQueue::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  ready_.notify_all();
}

}  // namespace skelfuse
