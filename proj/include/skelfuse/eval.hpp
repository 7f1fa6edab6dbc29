#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "skelfuse/pipeline.hpp"
#include "skelfuse/sim.hpp"

namespace skelfuse::eval {

struct AlignedFrame {
  double timestamp = 0.0;
  SkeletonPose estimate;
  SkeletonPose truth;  // all joints present
};

/// Frames of one track paired with interpolated truth of its subject.
struct AlignedSequence {
  int track_id = 0;
  std::string subject_id;
  double mean_centroid_distance = 0.0;
  std::vector<AlignedFrame> frames;  // strictly increasing timestamps
};

struct AlignOptions {
  /// Tracks with fewer frames inside the truth time range are ignored.
  std::size_t min_track_frames = 30;
  /// Two candidate distances closer than this are treated as a tie.
  double tie_tolerance = 1e-9;
};

/// Truth positions of one subject linearly interpolated at `t`; nullopt
/// outside the logged time range.
std::optional<SkeletonPose> interpolate_truth(const sim::GroundTruthLog& truth, const std::string& subject_id,
                                              double t);

/// Matches tracks to subjects and pairs every in-range track frame with
/// interpolated truth.
///
/// Each subject gets its nearest track by whole-sequence mean centroid
/// distance (one-to-one, optimal). Remaining eligible tracks are attached to
/// their nearest subject so that fragmented identities still count.
/// Throws std::invalid_argument when nothing overlaps, when fewer eligible
/// tracks than subjects exist, or when a correspondence is tied.
std::vector<AlignedSequence> align(std::span<const TrackFrame> frames, const sim::GroundTruthLog& truth,
                                   const AlignOptions& opts = {});

struct ErrorReport {
  std::string subject_id;
  std::vector<int> track_ids;
  std::size_t frames = 0;
  double e_avg = 0.0;  // summed-Q mean displacement
  double e_sd = 0.0;   // summed-Q population standard deviation
  double mpjpe = 0.0;  // mean per-joint Euclidean error
  std::array<double, kNumJoints> per_joint_mpjpe{};
  std::array<std::size_t, kNumJoints> per_joint_count{};
};

/// Metrics over all frames of the given sequences (normally those of one
/// subject). Joints absent from the estimate are excluded from both sums.
ErrorReport displacement_metrics(std::span<const AlignedSequence> sequences);

/// One report per subject, in truth subject order.
std::vector<ErrorReport> evaluate(std::span<const TrackFrame> frames, const sim::GroundTruthLog& truth,
                                  const AlignOptions& opts = {});

/// Number of tracks with at least `min_frames` output frames.
std::size_t long_lived_tracks(std::span<const TrackFrame> frames, std::size_t min_frames);

// --- Experiments ---------------------------------------------------------------

enum class Replay { Merged, Jitter };

struct ExperimentResult {
  TrackingRun run;
  std::vector<ErrorReport> reports;
  double sequence_duration = 0.0;
};

/// Runs the tracker over the generated streams and evaluates against truth.
ExperimentResult run_experiment(const sim::GeneratedScene& generated, const PipelineConfig& cfg,
                                Replay replay = Replay::Merged, std::uint64_t replay_seed = 0,
                                const AlignOptions& opts = {});

struct AblationRow {
  std::size_t camera_count = 0;
  bool outside_reference_range = false;  // fewer than two nodes
  std::vector<ErrorReport> reports;
};

/// Regenerates `scene` restricted to the first k nodes for each k in
/// `counts` and reruns the same pipeline.
std::vector<AblationRow> ablation_camera_count(const sim::Scene& scene, std::uint64_t seed,
                                               const PipelineConfig& cfg, std::span<const std::size_t> counts);

// --- Timing ----------------------------------------------------------------------

struct StageStats {
  double mean_ms = 0.0;
  double p95_ms = 0.0;
};

struct TimingReport {
  std::size_t batches = 0;
  StageStats association, fusion, consistency, other, total;
  /// Mean (association + fusion + consistency) per tracked subject-update.
  double per_subject_ms = 0.0;
  /// Theoretical worst-case fps for 1..6 subjects: 1000 / (per_subject_ms * n).
  std::array<double, 6> fps_by_subjects{};
};

/// Batches without detections are skipped.
TimingReport timing_report(std::span<const BatchTiming> timings);

// --- CSV -------------------------------------------------------------------------

struct CsvRow {
  std::string sequence;
  std::string variant;
  std::size_t camera_count = 0;
  std::string subject;
  double e_avg_m = 0.0;
  double e_sd_m = 0.0;
  double mpjpe_m = 0.0;
  double fps = 0.0;
};

inline constexpr const char* kCsvHeader = "sequence,variant,camera_count,subject,e_avg_m,e_sd_m,mpjpe_m,fps";

void write_csv(std::ostream& out, std::span<const CsvRow> rows);
std::vector<CsvRow> read_csv(std::istream& in, const std::string& source = "<csv>");

/// Evaluated frames per second of sequence time for one subject.
double output_rate(const ErrorReport& report, double duration);

}  // namespace skelfuse::eval
