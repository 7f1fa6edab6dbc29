#include "skelfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace skelfuse {

void NoiseConfig::validate() const {
  if (!(sigma_q2 > 0.0)) throw std::invalid_argument("fusion.sigma_q2 must be > 0");
  if (!(sigma_r2 > 0.0)) throw std::invalid_argument("fusion.sigma_r2 must be > 0");
  if (!(dt > 0.0)) throw std::invalid_argument("fusion.dt must be > 0");
  if (!(confidence_floor >= 0.0 && confidence_floor <= 1.0)) {
    throw std::invalid_argument("fusion.confidence_floor must be in [0,1]");
  }
  if (outlier_window < 1) throw std::invalid_argument("fusion.outlier_window must be >= 1");
  if (!(outlier_multiplier >= 1.0)) throw std::invalid_argument("fusion.outlier_multiplier must be >= 1");
  if (outlier_max_consecutive < 0) throw std::invalid_argument("fusion.outlier_max_consecutive must be >= 0");
  if (!(max_inflation >= 1.0)) throw std::invalid_argument("fusion.max_inflation must be >= 1");
}

bool UpdateReport::clean() const {
  return std::all_of(joints.begin(), joints.end(), [](const JointReport& r) {
    return r.status == JointStatus::Accepted || r.status == JointStatus::ForcedAccept;
  });
}

SkeletonPose TrackState::pose() const {
  SkeletonPose p;
  for (std::size_t i = 0; i < kNumJoints; ++i) p.joints[i] = joints[i].position();
  return p;
}

SkeletonPose TrackState::pose_at(double t) const {
  const double lead = t - last_update;
  SkeletonPose p;
  for (std::size_t i = 0; i < kNumJoints; ++i) p.joints[i] = joints[i].position() + lead * joints[i].velocity();
  return p;
}

TrackState TrackState::initialize(int track_id, const SkeletonDetection& detection, const NoiseConfig& cfg) {
  TrackState t;
  t.track_id = track_id;
  t.last_update = detection.timestamp;
  // Joints missing from the first detection start at its centroid with a
  // wide prior so the first real observation dominates.
  const Vec3 fallback = centroid(detection.pose());
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    JointFilterState& j = t.joints[i];
    j.mean.setZero();
    j.covariance.setZero();
    const auto& obs = detection.joints[i];
    const double pos_var = obs ? cfg.sigma_r2 : 1.0;
    j.mean.head<3>() = obs ? obs->position : fallback;
    j.covariance.diagonal() << Vec3::Constant(pos_var),
        Vec3::Constant(cfg.init_velocity_sigma * cfg.init_velocity_sigma);
    if (obs) t.outliers[i].reference = obs->position;
  }
  return t;
}

int prediction_steps(double last_update, double t, const NoiseConfig& cfg) {
  const double n = std::round((t - last_update) / cfg.dt);
  return n > 0.0 ? static_cast<int>(n) : 0;
}

Mat6 joint_transition(double dt) {
  Mat6 f = Mat6::Identity();
  f.topRightCorner<3, 3>() = dt * Mat3::Identity();
  return f;
}

Mat6 joint_process_noise(const NoiseConfig& cfg) {
  // G maps a per-axis white acceleration onto [dt^2/2 ; dt].
  Eigen::Matrix<double, 6, 3> g;
  g.topRows<3>() = (0.5 * cfg.dt * cfg.dt) * Mat3::Identity();
  g.bottomRows<3>() = cfg.dt * Mat3::Identity();
  return cfg.sigma_q2 * g * g.transpose();
}

TrackState predict(const TrackState& track, double t, const NoiseConfig& cfg) {
  const int n = prediction_steps(track.last_update, t, cfg);
  TrackState out = track;
  if (n == 0) return out;
  const Mat6 f = joint_transition(cfg.dt);
  const Mat6 q = joint_process_noise(cfg);
  for (JointFilterState& j : out.joints) {
    for (int k = 0; k < n; ++k) {
      j.mean = f * j.mean;
      j.covariance = f * j.covariance * f.transpose() + q;
    }
  }
  out.last_update = track.last_update + n * cfg.dt;
  return out;
}

double measurement_variance(double confidence, const NoiseConfig& cfg) {
  if (!(confidence > 0.0)) throw std::domain_error("confidence underflow");
  return cfg.sigma_r2 / confidence;
}

EffectiveMeasurement gate_confidence(const std::optional<JointObservation>& obs, const Vec3& predicted,
                                     const NoiseConfig& cfg) {
  if (!obs) return {predicted, cfg.sigma_r2, true};
  if (!cfg.use_confidence) return {obs->position, cfg.sigma_r2, false};
  if (obs->confidence < cfg.confidence_floor || obs->confidence <= 0.0) {
    return {predicted, cfg.sigma_r2, true};
  }
  return {obs->position, measurement_variance(obs->confidence, cfg), false};
}

double outlier_threshold(std::span<const double> history, const NoiseConfig& cfg) {
  if (history.empty()) return std::numeric_limits<double>::infinity();
  return cfg.outlier_multiplier * *std::max_element(history.begin(), history.end());
}

double outlier_threshold(const std::deque<double>& history, const NoiseConfig& cfg) {
  if (history.empty()) return std::numeric_limits<double>::infinity();
  return cfg.outlier_multiplier * *std::max_element(history.begin(), history.end());
}

double inflate_variance(double distance, double threshold, double variance, const NoiseConfig& cfg) {
  if (threshold <= 0.0) return variance * cfg.max_inflation;
  return variance * std::min(distance / threshold, cfg.max_inflation);
}

JointFilterState correct_joint(const JointFilterState& joint, const Vec3& z, double variance) {
  const Mat3 s = joint.covariance.topLeftCorner<3, 3>() + variance * Mat3::Identity();
  const Eigen::Matrix<double, 6, 3> gain = joint.covariance.leftCols<3>() * s.llt().solve(Mat3::Identity());
  JointFilterState out;
  out.mean = joint.mean + gain * (z - joint.mean.head<3>());
  Mat6 ikh = Mat6::Identity();
  ikh.leftCols<3>() -= gain;
  out.covariance = ikh * joint.covariance * ikh.transpose() + variance * gain * gain.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

UpdateResult update(const TrackState& track, const SkeletonDetection& detection, const NoiseConfig& cfg) {
  UpdateResult res{predict(track, detection.timestamp, cfg), {}};
  TrackState& out = res.track;
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    JointFilterState& joint = out.joints[i];
    OutlierState& hist = out.outliers[i];
    JointReport& rep = res.report.joints[i];

    const EffectiveMeasurement m = gate_confidence(detection.joints[i], joint.position(), cfg);
    rep.variance = m.variance;
    if (m.substituted) {
      rep.status = JointStatus::Substituted;
      joint = correct_joint(joint, m.position, m.variance);
      continue;
    }

    const bool has_reference = hist.reference.has_value();
    const double d = has_reference ? (m.position - *hist.reference).norm() : 0.0;
    const double th = outlier_threshold(hist.distances, cfg);
    rep.distance = d;
    rep.threshold = th;
    bool record = has_reference;
    if (cfg.use_outlier && d > th) {
      if (hist.consecutive < cfg.outlier_max_consecutive) {
        rep.variance = inflate_variance(d, th, m.variance, cfg);
        rep.status = JointStatus::Inflated;
        ++hist.consecutive;
        record = false;
      } else {
        rep.status = JointStatus::ForcedAccept;
        hist.consecutive = 0;
      }
    } else {
      rep.status = JointStatus::Accepted;
      hist.consecutive = 0;
    }

    joint = correct_joint(joint, m.position, rep.variance);
    hist.reference = joint.position();
    if (record) {
      hist.distances.push_back(d);
      while (hist.distances.size() > cfg.outlier_window) hist.distances.pop_front();
    }
  }
  return res;
}

double calibrate_sigma_r(std::span<const SkeletonDetection> static_sequence) {
  double sum_sd = 0.0;
  std::size_t joints_used = 0;
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    std::vector<Vec3> samples;
    for (const SkeletonDetection& d : static_sequence) {
      if (d.joints[i]) samples.push_back(d.joints[i]->position);
    }
    if (samples.size() < 2) continue;
    Vec3 mean = Vec3::Zero();
    for (const Vec3& s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    Vec3 var = Vec3::Zero();
    for (const Vec3& s : samples) var += (s - mean).cwiseAbs2();
    var /= static_cast<double>(samples.size());
    sum_sd += var.cwiseSqrt().mean();
    ++joints_used;
  }
  if (joints_used == 0) throw std::invalid_argument("insufficient samples: need >= 2 per joint");
  const double sd = sum_sd / static_cast<double>(joints_used);
  return sd * sd;
}

}  // namespace skelfuse
