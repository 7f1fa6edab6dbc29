#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "skelfuse/association.hpp"
#include "skelfuse/ingest.hpp"
#include "skelfuse/model.hpp"

namespace skelfuse {

struct NoiseConfig {
  double sigma_q2 = 20.0;       // process noise variance, enters through G
  double sigma_r2 = 0.0004;     // base measurement variance (m^2)
  double dt = 0.033;            // prediction quantum (s)
  double confidence_floor = 0.5;
  std::size_t outlier_window = 15;
  double outlier_multiplier = 1.25;
  int outlier_max_consecutive = 2;
  double max_inflation = 100.0;
  double init_velocity_sigma = 1.0;
  bool use_confidence = true;
  bool use_outlier = true;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

/// Position/velocity of one joint with its 6x6 covariance.
struct JointFilterState {
  Vec6 mean = Vec6::Zero();
  Mat6 covariance = Mat6::Identity();

  Vec3 position() const { return mean.head<3>(); }
  Vec3 velocity() const { return mean.tail<3>(); }
};

struct OutlierState {
  std::deque<double> distances;  // most recent at the back, capacity = window
  int consecutive = 0;
  std::optional<Vec3> reference;  // last posterior that used a real measurement
};

enum class JointStatus : char {
  Accepted = 'A',
  Substituted = 'S',
  Inflated = 'I',
  ForcedAccept = 'F',
};

struct JointReport {
  JointStatus status = JointStatus::Accepted;
  double distance = 0.0;
  double threshold = 0.0;
  double variance = 0.0;  // measurement variance actually used
};

struct UpdateReport {
  std::array<JointReport, kNumJoints> joints{};
  bool clean() const;  // no substituted or inflated joints
};

struct TrackState {
  int track_id = 0;
  std::array<JointFilterState, kNumJoints> joints{};
  std::array<OutlierState, kNumJoints> outliers{};
  /// Filter clock: advances in whole multiples of the prediction quantum.
  double last_update = 0.0;

  SkeletonPose pose() const;
  /// Positions moved along the current velocities from the filter clock to `t`.
  SkeletonPose pose_at(double t) const;

  static TrackState initialize(int track_id, const SkeletonDetection& detection, const NoiseConfig& cfg);
};

/// Number of constant-velocity steps covering the gap to `t`.
int prediction_steps(double last_update, double t, const NoiseConfig& cfg);

/// One-step transition and process noise for a single joint block.
Mat6 joint_transition(double dt);
Mat6 joint_process_noise(const NoiseConfig& cfg);

/// Applies round((t - last_update)/dt) constant-velocity steps (none for
/// stale `t`) and advances the filter clock by the same amount.
TrackState predict(const TrackState& track, double t, const NoiseConfig& cfg);

/// sigma_r^2 / c. Throws std::domain_error("confidence underflow") for c <= 0.
double measurement_variance(double confidence, const NoiseConfig& cfg);

struct EffectiveMeasurement {
  Vec3 position;
  double variance;
  bool substituted;
};

/// Confidence gate: observations below the floor (or absent) are replaced by
/// the predicted position at variance sigma_r^2. The floor is inclusive.
EffectiveMeasurement gate_confidence(const std::optional<JointObservation>& obs, const Vec3& predicted,
                                     const NoiseConfig& cfg);

/// w * max(history); +inf for an empty history.
double outlier_threshold(std::span<const double> history, const NoiseConfig& cfg);
double outlier_threshold(const std::deque<double>& history, const NoiseConfig& cfg);

/// variance * d / th, the ratio capped at cfg.max_inflation (also used when th == 0).
double inflate_variance(double distance, double threshold, double variance, const NoiseConfig& cfg);

/// Linear Kalman correction of one joint with an isotropic position measurement.
JointFilterState correct_joint(const JointFilterState& joint, const Vec3& z, double variance);

struct UpdateResult {
  TrackState track;
  UpdateReport report;
};

/// Full per-detection step: predict to the detection time, then per joint
/// confidence gate, outlier test and inflation, Kalman correction.
UpdateResult update(const TrackState& track, const SkeletonDetection& detection, const NoiseConfig& cfg);

/// Mean over joints and axes of per-joint positional standard deviation,
/// squared. Throws std::invalid_argument when no joint has >= 2 samples.
double calibrate_sigma_r(std::span<const SkeletonDetection> static_sequence);

}  // namespace skelfuse
