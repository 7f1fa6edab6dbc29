#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "skelfuse/ingest.hpp"
#include "skelfuse/model.hpp"

namespace skelfuse::sim {

using Vec2 = Eigen::Vector2d;

/// Segment lengths of a generated subject (meters, before scaling).
struct BodyDimensions {
  double neck_height = 1.50;
  double head = 0.22;
  double shoulder_half_width = 0.19;
  double shoulder_drop = 0.03;
  double hip_half_width = 0.10;
  double torso = 0.52;
  double upper_arm = 0.30;
  double forearm = 0.27;
  double thigh = 0.44;
  double shin = 0.43;
};

enum class JointGroup { Arms, Elbows, Legs, Knees };

struct Oscillation {
  JointGroup group = JointGroup::Arms;
  double amplitude_m = 0.2;  // arc length swept at the end of the group's chain
  double frequency_hz = 0.5;
  double phase = 0.0;
};

struct MotionScript {
  enum class Kind { Static, Oscillate, Walk };
  Kind kind = Kind::Static;
  Vec2 position = Vec2::Zero();     // static/oscillate root position
  double heading = 0.0;             // radians, static/oscillate
  std::vector<Oscillation> oscillations;
  std::vector<Vec2> waypoints;      // closed loop for Walk
  double speed = 0.5;               // m/s for Walk
  double start_offset_m = 0.0;      // arc length already travelled at t = 0
};

struct Subject {
  std::string id;
  double scale = 1.0;
  MotionScript script;
};

struct OcclusionSector {
  double azimuth_min_deg = 0.0;  // camera direction relative to subject facing, CCW positive
  double azimuth_max_deg = 0.0;
  std::vector<JointId> joints;
  double drop_probability = 0.0;
  double confidence_factor = 1.0;
};

struct NoiseModel {
  double sigma = 0.0;                   // m, at confidence 1
  double base_confidence = 1.0;
  double confidence_distance_decay = 0.0;  // per meter of camera distance
  double confidence_jitter = 0.0;
  double outlier_probability = 0.0;     // per joint per frame
  double outlier_min = 0.3;
  double outlier_max = 1.0;
  std::vector<OcclusionSector> sectors;
  bool inter_subject_occlusion = false;
  double occlusion_radius = 0.25;
  double timestamp_jitter = 0.0;        // s, uniform +-
};

struct CameraNode {
  std::string camera_id;
  RigidTransform extrinsic;   // camera -> global
  double frame_rate = 30.0;
  double clock_offset = 0.0;
  NoiseModel noise;
};

struct Scene {
  std::string name;
  double duration = 60.0;
  double truth_rate = 100.0;
  std::vector<Subject> subjects;
  std::vector<CameraNode> nodes;

  /// Throws std::invalid_argument with a descriptive message.
  void validate() const;
};

struct TruthSample {
  double timestamp = 0.0;
  std::string subject_id;
  SkeletonPose pose;
};

struct GroundTruthLog {
  std::vector<TruthSample> samples;  // sorted by (timestamp, subject order)
  std::vector<std::string> subject_ids() const;
};

/// Analytic pose of one subject at time t. All joints present.
SkeletonPose subject_pose(const Subject& subject, double t, const BodyDimensions& dims = {});

/// True lengths of the BodyModel links for a subject (indexed like
/// BodyModel::links()).
std::vector<double> true_link_lengths(const Subject& subject, const BodyDimensions& dims = {});

struct GeneratedScene {
  GroundTruthLog truth;
  std::vector<std::vector<DetectionBatch>> streams;  // per node, camera frame
  Extrinsics extrinsics;
};

GeneratedScene generate_scene(const Scene& scene, std::uint64_t seed);

/// Restricts a scene to its first `count` nodes.
Scene with_node_count(const Scene& scene, std::size_t count);

struct LayoutOptions {
  double width = 6.0;
  double depth = 6.0;
  double height = 2.5;
  double target_height = 1.0;
  double frame_rate = 30.0;
};

/// Four nodes on the corners of the motion area, aimed at its center.
std::vector<CameraNode> preset_paper_layout(const LayoutOptions& opts = {});
Vec3 layout_center(const LayoutOptions& opts = {});

NoiseModel clean_noise();
/// 2 cm noise, 5% outlier spikes, self- and inter-subject occlusion.
NoiseModel noisy_noise();

std::vector<std::string> preset_names();
/// Throws std::invalid_argument for an unknown preset.
Scene preset_scene(std::string_view name);

Scene parse_scene(std::string_view json_text);
Scene load_scene_file(const std::filesystem::path& path);
/// A preset name or a path to a scene config file.
Scene resolve_scene(const std::string& name_or_path);

void write_truth(std::ostream& out, const GroundTruthLog& log);
void write_truth_file(const std::filesystem::path& path, const GroundTruthLog& log);
GroundTruthLog read_truth(std::istream& in, const std::string& source = "<truth>");
GroundTruthLog read_truth_file(const std::filesystem::path& path);

/// Writes stream_<camera>.jsonl per node, truth.txt and extrinsics.json into
/// `dir`; returns the stream paths in node order.
std::vector<std::filesystem::path> write_scene_outputs(const std::filesystem::path& dir, const Scene& scene,
                                                       const GeneratedScene& generated);

}  // namespace skelfuse::sim
