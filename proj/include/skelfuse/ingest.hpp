#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "skelfuse/model.hpp"

namespace skelfuse {

struct JointObservation {
  Vec3 position = Vec3::Zero();
  double confidence = 1.0;
};

struct SkeletonDetection {
  std::string camera_id;
  double timestamp = 0.0;
  std::array<std::optional<JointObservation>, kNumJoints> joints{};

  SkeletonPose pose() const;
  std::size_t present_count() const;
};

struct DetectionBatch {
  std::string camera_id;
  double timestamp = 0.0;
  std::vector<SkeletonDetection> detections;
};

using Extrinsics = std::map<std::string, RigidTransform>;

/// Throws std::invalid_argument describing the first violated invariant
/// (confidence range, finite timestamp, empty detection, mismatched ids).
void validate(const DetectionBatch& batch);

/// Re-expresses every joint of `batch` in the global frame. Throws
/// std::out_of_range("uncalibrated node: <id>") for an unknown camera.
DetectionBatch ingest_batch(const DetectionBatch& batch, const Extrinsics& extrinsics);

// --- Stream files -----------------------------------------------------------
// One JSON object per line:
//   {"camera_id":"cam0","timestamp":0.033,"detections":[[{"x":..,"y":..,"z":..,"c":..},null,...],...]}

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& source, std::size_t line, const std::string& reason);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::string encode_batch(const DetectionBatch& batch);
/// Throws FormatError with `line` on malformed input.
DetectionBatch decode_batch(const std::string& text, const std::string& source = "<memory>",
                            std::size_t line = 0);

std::vector<DetectionBatch> read_stream(std::istream& in, const std::string& source = "<stream>");
std::vector<DetectionBatch> read_stream_file(const std::filesystem::path& path);
void write_stream(std::ostream& out, const std::vector<DetectionBatch>& batches);
void write_stream_file(const std::filesystem::path& path, const std::vector<DetectionBatch>& batches);

Extrinsics read_extrinsics_file(const std::filesystem::path& path);
void write_extrinsics_file(const std::filesystem::path& path, const Extrinsics& extrinsics);

// --- Replay -------------------------------------------------------------------

/// Merges per-node streams in timestamp order. Ties resolve by stream order,
/// and each stream's own order is preserved.
std::vector<DetectionBatch> merge_by_timestamp(const std::vector<std::vector<DetectionBatch>>& streams);

/// Simulated network delivery: every batch arrives at timestamp + U(0, max_delay).
/// Per-node FIFO is preserved (a batch never overtakes an earlier batch from
/// the same node); batches from different nodes may interleave arbitrarily.
std::vector<DetectionBatch> merge_with_arrival_jitter(
    const std::vector<std::vector<DetectionBatch>>& streams, double max_delay, std::uint64_t seed);

/// Multi-producer single-consumer queue feeding the central node.
class BatchQueue {
 public:
  void push(DetectionBatch batch);
  /// Blocks until a batch is available or the queue is closed and drained.
  std::optional<DetectionBatch> pop();
  void close();

 private:
  std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<DetectionBatch> items_;
  bool closed_ = false;
};

}  // namespace skelfuse
