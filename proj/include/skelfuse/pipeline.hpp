#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skelfuse/association.hpp"
#include "skelfuse/consistency.hpp"
#include "skelfuse/fusion.hpp"
#include "skelfuse/ingest.hpp"

namespace skelfuse {

enum class Variant { Full, NoConsistency, NoOutlier, NoConfidence, Maf, Raw };

std::string_view to_string(Variant v);
/// Throws std::invalid_argument for an unknown name.
Variant parse_variant(std::string_view name);
inline constexpr std::array<Variant, 6> kAllVariants = {Variant::Full,         Variant::NoConsistency,
                                                        Variant::NoOutlier,    Variant::NoConfidence,
                                                        Variant::Maf,          Variant::Raw};

struct PipelineConfig {
  AssociationConfig association;
  NoiseConfig fusion;
  ConsistencyConfig consistency;
  std::size_t maf_window = 5;
  Variant variant = Variant::Full;

  /// Fusion/consistency switches implied by `variant`.
  PipelineConfig for_variant(Variant v) const;
};

/// Reads the nested JSON config ({"association": {...}, "fusion": {...},
/// "consistency": {...}}). Unknown keys are rejected. `fusion.calibrate_from`
/// is returned separately because it needs extrinsics to resolve.
struct LoadedConfig {
  PipelineConfig pipeline;
  std::optional<std::filesystem::path> calibrate_from;
};
LoadedConfig parse_pipeline_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
LoadedConfig load_pipeline_config(const std::filesystem::path& path);

/// Per-joint sliding mean over the last `window` observed positions.
class MovingAverageFilter {
 public:
  explicit MovingAverageFilter(std::size_t window);
  SkeletonPose push(const SkeletonDetection& detection);

 private:
  std::size_t window_;
  std::array<std::deque<Vec3>, kNumJoints> history_;
};

/// Moving-average baseline over one track's associated detections.
std::vector<SkeletonPose> baseline_maf(std::span<const SkeletonDetection> detections, std::size_t window);

struct TrackFrame {
  double timestamp = 0.0;
  int track_id = 0;
  SkeletonPose pose;
  std::array<char, kNumJoints> flags{};
};

/// Wall-clock time spent per stage for one processed batch.
struct BatchTiming {
  std::size_t detections = 0;
  double association_s = 0.0;
  double fusion_s = 0.0;
  double consistency_s = 0.0;
  double other_s = 0.0;
  double total_s = 0.0;
};

/// The central processing node: associates each incoming global-frame batch
/// with the live tracks, runs the per-track filter and emits one frame per
/// updated track.
class Tracker {
 public:
  explicit Tracker(PipelineConfig cfg);

  /// `batch` must already be in the global frame.
  std::vector<TrackFrame> process(const DetectionBatch& batch);
  /// Convenience: transform with `extrinsics`, then process.
  std::vector<TrackFrame> process(const DetectionBatch& batch, const Extrinsics& extrinsics);

  std::size_t live_tracks() const { return tracks_.size(); }
  std::vector<int> live_track_ids() const;
  const std::vector<BatchTiming>& timings() const { return timings_; }
  void set_timing(bool enabled) { timing_enabled_ = enabled; }
  const PipelineConfig& config() const { return cfg_; }

 private:
  struct Track {
    int id = 0;
    CentroidFilter centroid;
    double last_seen = 0.0;
    TrackState fusion;
    LengthInitializer length_init{10};
    LimbLengths lengths;
    std::optional<MovingAverageFilter> maf;
    SkeletonPose last_raw;
  };

  Track spawn(const SkeletonDetection& det);
  TrackFrame advance(Track& track, const SkeletonDetection& det, BatchTiming& timing);

  PipelineConfig cfg_;
  std::vector<Track> tracks_;
  int next_id_ = 0;
  bool timing_enabled_ = true;
  std::vector<BatchTiming> timings_;
};

// --- Track frame files ----------------------------------------------------------
// One frame per line: timestamp track_id x0 y0 z0 ... x14 y14 z14 flags
// Absent joints are written as "nan nan nan"; flags holds one status char per joint.

std::string encode_track_frame(const TrackFrame& frame);
void write_track_frames(std::ostream& out, std::span<const TrackFrame> frames);
void write_track_frames_file(const std::filesystem::path& path, std::span<const TrackFrame> frames);
std::vector<TrackFrame> read_track_frames(std::istream& in, const std::string& source = "<tracks>");
std::vector<TrackFrame> read_track_frames_file(const std::filesystem::path& path);

/// Replays already-merged batches through a fresh tracker.
struct TrackingRun {
  std::vector<TrackFrame> frames;
  std::vector<BatchTiming> timings;
};
TrackingRun run_tracker(const PipelineConfig& cfg, std::span<const DetectionBatch> batches,
                        const Extrinsics& extrinsics);

}  // namespace skelfuse
