#include "skelfuse/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

namespace skelfuse::sim {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

// Closed uniform Catmull-Rom loop with an arc-length table so walkers move
// at constant speed.
class LoopPath {
 public:
  explicit LoopPath(const std::vector<Vec2>& pts) : pts_(pts) {
    constexpr int kSamples = 256;
    const int segs = static_cast<int>(pts_.size());
    params_.push_back(0.0);
    arc_.push_back(0.0);
    Vec2 prev = eval(0.0);
    for (int s = 0; s < segs; ++s) {
      for (int k = 1; k <= kSamples; ++k) {
        const double u = s + static_cast<double>(k) / kSamples;
        const Vec2 p = eval(u);
        arc_.push_back(arc_.back() + (p - prev).norm());
        params_.push_back(u);
        prev = p;
      }
    }
  }

  double length() const { return arc_.back(); }

  // Position and unit tangent at arc length s (wrapped).
  std::pair<Vec2, Vec2> at(double s) const {
    s = std::fmod(s, length());
    if (s < 0) s += length();
    const auto it = std::upper_bound(arc_.begin(), arc_.end(), s);
    const std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - arc_.begin()), arc_.size() - 1);
    const std::size_t lo = hi - 1;
    const double span = arc_[hi] - arc_[lo];
    const double f = span > 0 ? (s - arc_[lo]) / span : 0.0;
    const double u = params_[lo] + f * (params_[hi] - params_[lo]);
    return {eval(u), derivative(u).normalized()};
  }

 private:
  const Vec2& p(int i) const {
    const int n = static_cast<int>(pts_.size());
    return pts_[static_cast<std::size_t>(((i % n) + n) % n)];
  }

  Vec2 eval(double u) const {
    const int i = static_cast<int>(std::floor(u));
    const double t = u - i;
    const Vec2 &p0 = p(i - 1), &p1 = p(i), &p2 = p(i + 1), &p3 = p(i + 2);
    return 0.5 * (2.0 * p1 + (p2 - p0) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t +
                  (3.0 * p1 - p0 - 3.0 * p2 + p3) * t * t * t);
  }

  Vec2 derivative(double u) const {
    const int i = static_cast<int>(std::floor(u));
    const double t = u - i;
    const Vec2 &p0 = p(i - 1), &p1 = p(i), &p2 = p(i + 1), &p3 = p(i + 2);
    return 0.5 * ((p2 - p0) + 2.0 * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t +
                  3.0 * (3.0 * p1 - p0 - 3.0 * p2 + p3) * t * t);
  }

  std::vector<Vec2> pts_;
  std::vector<double> params_;
  std::vector<double> arc_;
};

struct Angles {
  double arm_left = 0.1, arm_right = 0.1;
  double elbow_left = 0.2, elbow_right = 0.2;
  double leg_left = 0.0, leg_right = 0.0;
  double knee_left = 0.0, knee_right = 0.0;
  double bob = 0.0;
};

class Animator {
 public:
  Animator(const Subject& s, const BodyDimensions& dims) : subject_(s), dims_(dims) {
    if (s.script.kind == MotionScript::Kind::Walk) path_.emplace(s.script.waypoints);
  }

  Vec3 forward(double t) const { return root(t).second; }

  SkeletonPose pose(double t) const {
    using J = JointId;
    const double k = subject_.scale;
    const auto [pos, fwd] = root(t);
    const Angles a = angles(t);
    const Vec3 up = Vec3::UnitZ();
    const Vec3 left = up.cross(fwd);

    SkeletonPose out;
    const Vec3 neck(pos.x(), pos.y(), k * dims_.neck_height + a.bob);
    out[J::Neck] = neck;
    out[J::Head] = neck + k * dims_.head * up;
    const Vec3 ls = neck + k * (dims_.shoulder_half_width * left - dims_.shoulder_drop * up);
    const Vec3 rs = neck + k * (-dims_.shoulder_half_width * left - dims_.shoulder_drop * up);
    out[J::LeftShoulder] = ls;
    out[J::RightShoulder] = rs;
    const Vec3 hip_shift = k * (-(dims_.shoulder_half_width - dims_.hip_half_width) * left - dims_.torso * up);
    const Vec3 hip_shift_r = k * ((dims_.shoulder_half_width - dims_.hip_half_width) * left - dims_.torso * up);
    const Vec3 lh = ls + hip_shift;
    const Vec3 rh = rs + hip_shift_r;
    out[J::LeftHip] = lh;
    out[J::RightHip] = rh;

    constexpr double kAbduction = 0.12;
    const auto arm_dir = [&](double swing, const Vec3& side) {
      return std::cos(kAbduction) * (std::cos(swing) * -up + std::sin(swing) * fwd) + std::sin(kAbduction) * side;
    };
    const auto leg_dir = [&](double swing) { return Vec3(std::cos(swing) * -up + std::sin(swing) * fwd); };

    const Vec3 le = ls + k * dims_.upper_arm * arm_dir(a.arm_left, left);
    const Vec3 re = rs + k * dims_.upper_arm * arm_dir(a.arm_right, -left);
    out[J::LeftElbow] = le;
    out[J::RightElbow] = re;
    out[J::LeftWrist] = le + k * dims_.forearm * arm_dir(a.arm_left + a.elbow_left, left);
    out[J::RightWrist] = re + k * dims_.forearm * arm_dir(a.arm_right + a.elbow_right, -left);

    const Vec3 lk = lh + k * dims_.thigh * leg_dir(a.leg_left);
    const Vec3 rk = rh + k * dims_.thigh * leg_dir(a.leg_right);
    out[J::LeftKnee] = lk;
    out[J::RightKnee] = rk;
    out[J::LeftAnkle] = lk + k * dims_.shin * leg_dir(a.leg_left - a.knee_left);
    out[J::RightAnkle] = rk + k * dims_.shin * leg_dir(a.leg_right - a.knee_right);
    out[J::Chest] = derive_chest(out);
    return out;
  }

 private:
  std::pair<Vec2, Vec3> root(double t) const {
    const MotionScript& s = subject_.script;
    if (path_) {
      const auto [p, tan] = path_->at(s.start_offset_m + s.speed * t);
      return {p, Vec3(tan.x(), tan.y(), 0.0)};
    }
    return {s.position, Vec3(std::cos(s.heading), std::sin(s.heading), 0.0)};
  }

  Angles angles(double t) const {
    const MotionScript& s = subject_.script;
    const double k = subject_.scale;
    Angles a;
    if (s.kind == MotionScript::Kind::Walk) {
      const double stride = k * (0.5 + 0.65 * s.speed);
      const double phi = 2.0 * kPi * (s.start_offset_m + s.speed * t) / stride;
      const double v = std::min(s.speed / 1.5, 1.0);
      const double hip = 0.25 + 0.15 * v;
      const double knee = 0.3 + 0.5 * v;
      const double arm = 0.15 + 0.35 * v;
      a.leg_left = hip * std::sin(phi);
      a.leg_right = -a.leg_left;
      a.knee_left = knee * std::max(0.0, std::cos(phi));
      a.knee_right = knee * std::max(0.0, -std::cos(phi));
      a.arm_left = -arm * std::sin(phi);
      a.arm_right = -a.arm_left;
      a.elbow_left = 0.25 + 0.3 * v * 0.5 * (1.0 - std::sin(phi));
      a.elbow_right = 0.25 + 0.3 * v * 0.5 * (1.0 + std::sin(phi));
      a.bob = 0.015 * k * std::cos(2.0 * phi);
      return a;
    }
    for (const Oscillation& o : s.oscillations) {
      const double w = std::sin(2.0 * kPi * o.frequency_hz * t + o.phase);
      switch (o.group) {
        case JointGroup::Arms: {
          const double amp = o.amplitude_m / (k * (dims_.upper_arm + dims_.forearm));
          a.arm_left += amp * w;
          a.arm_right -= amp * w;
          break;
        }
        case JointGroup::Elbows: {
          const double amp = o.amplitude_m / (k * dims_.forearm);
          a.elbow_left += amp * 0.5 * (1.0 + w);
          a.elbow_right += amp * 0.5 * (1.0 - w);
          break;
        }
        case JointGroup::Legs: {
          const double amp = o.amplitude_m / (k * (dims_.thigh + dims_.shin));
          a.leg_left += amp * w;
          a.leg_right -= amp * w;
          break;
        }
        case JointGroup::Knees: {
          const double amp = o.amplitude_m / (k * dims_.shin);
          a.knee_left += amp * 0.5 * (1.0 + w);
          a.knee_right += amp * 0.5 * (1.0 - w);
          break;
        }
      }
    }
    return a;
  }

  Subject subject_;
  BodyDimensions dims_;
  std::optional<LoopPath> path_;
};

double segment_distance(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2) {
  const Vec3 d1 = q1 - p1, d2 = q2 - p2, r = p1 - p2;
  const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  double s = 0.0, t = 0.0;
  if (a <= 1e-15 && e <= 1e-15) return r.norm();
  if (a <= 1e-15) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= 1e-15) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > 1e-15 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return ((p1 + d1 * s) - (p2 + d2 * t)).norm();
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-9);
  return v.normalized();
}

double signed_azimuth_deg(const Vec3& forward, const Vec3& to_camera) {
  const Vec2 f(forward.x(), forward.y());
  const Vec2 v(to_camera.x(), to_camera.y());
  const double cross = f.x() * v.y() - f.y() * v.x();
  return std::atan2(cross, f.dot(v)) * 180.0 / kPi;
}

std::vector<DetectionBatch> generate_node(const Scene& scene, std::size_t node_index,
                                          const std::vector<Animator>& animators, std::uint64_t seed) {
  const CameraNode& node = scene.nodes[node_index];
  const NoiseModel& nm = node.noise;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(node_index), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const RigidTransform to_camera = node.extrinsic.inverse();
  const Vec3 cam = node.extrinsic.translation();

  std::vector<DetectionBatch> out;
  double prev_stamp = -1.0;
  for (long k = 0;; ++k) {
    const double t = node.clock_offset + static_cast<double>(k) / node.frame_rate;
    if (t >= scene.duration) break;
    double stamp = t;
    if (nm.timestamp_jitter > 0.0) stamp += nm.timestamp_jitter * (2.0 * unit(rng) - 1.0);
    stamp = std::max({stamp, 0.0, prev_stamp + 1e-6});
    prev_stamp = stamp;

    std::vector<SkeletonPose> truth;
    truth.reserve(animators.size());
    for (const Animator& a : animators) truth.push_back(a.pose(t));

    DetectionBatch batch;
    batch.camera_id = node.camera_id;
    batch.timestamp = stamp;
    for (std::size_t s = 0; s < animators.size(); ++s) {
      const SkeletonPose& g = truth[s];
      const double az = signed_azimuth_deg(animators[s].forward(t), cam - *g[JointId::Neck]);
      SkeletonDetection det;
      det.camera_id = node.camera_id;
      det.timestamp = stamp;
      for (std::size_t j = 0; j < kNumJoints; ++j) {
        const Vec3 gj = *g.joints[j];
        double factor = 1.0;
        bool dropped = false;
        for (const OcclusionSector& sec : nm.sectors) {
          if (az < sec.azimuth_min_deg || az > sec.azimuth_max_deg) continue;
          if (std::find(sec.joints.begin(), sec.joints.end(), joint_at(j)) == sec.joints.end()) continue;
          factor *= sec.confidence_factor;
          if (sec.drop_probability > 0.0 && unit(rng) < sec.drop_probability) dropped = true;
        }
        if (nm.inter_subject_occlusion) {
          for (std::size_t o = 0; o < truth.size(); ++o) {
            if (o == s) continue;
            const Vec3 top = *truth[o][JointId::Neck];
            const Vec3 bottom = 0.5 * (*truth[o][JointId::LeftHip] + *truth[o][JointId::RightHip]);
            if (segment_distance(cam, gj, top, bottom) < nm.occlusion_radius) dropped = true;
          }
        }
        double conf = nm.base_confidence - nm.confidence_distance_decay * (gj - cam).norm();
        if (nm.confidence_jitter > 0.0) conf += nm.confidence_jitter * gauss(rng);
        conf = std::clamp(conf * factor, 0.0, 1.0);
        Vec3 p = gj;
        if (nm.sigma > 0.0) {
          const double sd = nm.sigma / std::sqrt(std::max(conf, 0.05));
          p += sd * Vec3(gauss(rng), gauss(rng), gauss(rng));
        }
        if (nm.outlier_probability > 0.0 && unit(rng) < nm.outlier_probability) {
          const double mag = nm.outlier_min + (nm.outlier_max - nm.outlier_min) * unit(rng);
          p += mag * random_unit(rng);
        }
        if (dropped) continue;
        det.joints[j] = JointObservation{to_camera.apply(p), conf};
      }
      if (det.present_count() > 0) batch.detections.push_back(std::move(det));
    }
    std::shuffle(batch.detections.begin(), batch.detections.end(), rng);
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace

std::vector<std::string> GroundTruthLog::subject_ids() const {
  std::vector<std::string> ids;
  for (const TruthSample& s : samples) {
    if (std::find(ids.begin(), ids.end(), s.subject_id) == ids.end()) ids.push_back(s.subject_id);
  }
  return ids;
}

void Scene::validate() const {
  if (!(duration > 0.0)) throw std::invalid_argument("scene: duration_s must be > 0");
  if (!(truth_rate > 0.0)) throw std::invalid_argument("scene: truth_rate_hz must be > 0");
  if (subjects.empty()) throw std::invalid_argument("scene: at least one subject is required");
  if (nodes.empty()) throw std::invalid_argument("scene: at least one node is required");
  std::set<std::string> ids;
  for (const Subject& s : subjects) {
    if (s.id.empty() || s.id.find_first_of(" \t\n") != std::string::npos) {
      throw std::invalid_argument("scene: subject id must be non-empty without whitespace");
    }
    if (!ids.insert(s.id).second) throw std::invalid_argument("scene: duplicate subject id '" + s.id + "'");
    if (!(s.scale > 0.0)) throw std::invalid_argument("scene: subject '" + s.id + "' scale must be > 0");
    if (s.script.kind == MotionScript::Kind::Walk) {
      if (s.script.waypoints.size() < 2) {
        throw std::invalid_argument("scene: subject '" + s.id + "' walk needs >= 2 waypoints");
      }
      if (!(s.script.speed >= 0.0)) throw std::invalid_argument("scene: subject '" + s.id + "' speed must be >= 0");
    }
  }
  std::set<std::string> cams;
  for (const CameraNode& n : nodes) {
    if (n.camera_id.empty()) throw std::invalid_argument("scene: node camera_id must be non-empty");
    if (!cams.insert(n.camera_id).second) {
      throw std::invalid_argument("scene: duplicate camera_id '" + n.camera_id + "'");
    }
    if (!(n.frame_rate > 0.0)) throw std::invalid_argument("scene: node '" + n.camera_id + "' frame_rate must be > 0");
    const NoiseModel& m = n.noise;
    if (!(m.sigma >= 0.0)) throw std::invalid_argument("scene: node '" + n.camera_id + "' sigma must be >= 0");
    if (!(m.outlier_probability >= 0.0 && m.outlier_probability <= 1.0)) {
      throw std::invalid_argument("scene: node '" + n.camera_id + "' outlier_probability must be in [0,1]");
    }
    if (!(m.outlier_min >= 0.0 && m.outlier_max >= m.outlier_min)) {
      throw std::invalid_argument("scene: node '" + n.camera_id + "' outlier magnitude range invalid");
    }
    for (const OcclusionSector& s : m.sectors) {
      if (!(s.drop_probability >= 0.0 && s.drop_probability <= 1.0)) {
        throw std::invalid_argument("scene: node '" + n.camera_id + "' sector drop_probability must be in [0,1]");
      }
    }
  }
}

SkeletonPose subject_pose(const Subject& subject, double t, const BodyDimensions& dims) {
  return Animator(subject, dims).pose(t);
}

std::vector<double> true_link_lengths(const Subject& subject, const BodyDimensions& dims) {
  const SkeletonPose p = subject_pose(subject, 0.0, dims);
  std::vector<double> out;
  for (const Link& l : BodyModel::standard().links()) out.push_back((*p[l.child] - *p[l.parent]).norm());
  return out;
}

GeneratedScene generate_scene(const Scene& scene, std::uint64_t seed) {
  scene.validate();
  std::vector<Animator> animators;
  for (const Subject& s : scene.subjects) animators.emplace_back(s, BodyDimensions{});

  GeneratedScene out;
  const long truth_count = static_cast<long>(std::floor(scene.duration * scene.truth_rate + 1e-9));
  for (long k = 0; k <= truth_count; ++k) {
    const double t = static_cast<double>(k) / scene.truth_rate;
    for (std::size_t s = 0; s < animators.size(); ++s) {
      out.truth.samples.push_back({t, scene.subjects[s].id, animators[s].pose(t)});
    }
  }
  for (std::size_t n = 0; n < scene.nodes.size(); ++n) {
    out.streams.push_back(generate_node(scene, n, animators, seed));
    out.extrinsics.emplace(scene.nodes[n].camera_id, scene.nodes[n].extrinsic);
  }
  return out;
}

Scene with_node_count(const Scene& scene, std::size_t count) {
  if (count < 1 || count > scene.nodes.size()) {
    throw std::invalid_argument(fmt::format("camera count {} outside 1..{}", count, scene.nodes.size()));
  }
  Scene out = scene;
  out.nodes.resize(count);
  return out;
}

Vec3 layout_center(const LayoutOptions& opts) { return {0.0, 0.0, opts.target_height}; }

std::vector<CameraNode> preset_paper_layout(const LayoutOptions& opts) {
  const double hx = opts.width / 2.0, hy = opts.depth / 2.0;
  const std::array<Vec2, 4> corners = {Vec2(-hx, -hy), Vec2(hx, -hy), Vec2(hx, hy), Vec2(-hx, hy)};
  std::vector<CameraNode> nodes;
  for (std::size_t i = 0; i < corners.size(); ++i) {
    CameraNode n;
    n.camera_id = fmt::format("cam{}", i);
    n.extrinsic = RigidTransform::look_at(Vec3(corners[i].x(), corners[i].y(), opts.height), layout_center(opts));
    n.frame_rate = opts.frame_rate;
    n.clock_offset = static_cast<double>(i) / (4.0 * opts.frame_rate);
    nodes.push_back(n);
  }
  return nodes;
}

NoiseModel clean_noise() { return {}; }

NoiseModel noisy_noise() {
  using J = JointId;
  NoiseModel m;
  m.sigma = 0.02;
  m.base_confidence = 0.95;
  m.confidence_distance_decay = 0.02;
  m.confidence_jitter = 0.05;
  m.outlier_probability = 0.05;
  m.outlier_min = 0.3;
  m.outlier_max = 1.0;
  m.inter_subject_occlusion = true;
  m.occlusion_radius = 0.25;
  // Camera on the subject's left hides the right arm/leg, and vice versa.
  m.sectors.push_back({45.0, 135.0, {J::RightElbow, J::RightWrist}, 0.25, 0.45});
  m.sectors.push_back({45.0, 135.0, {J::RightKnee, J::RightAnkle}, 0.10, 0.7});
  m.sectors.push_back({-135.0, -45.0, {J::LeftElbow, J::LeftWrist}, 0.25, 0.45});
  m.sectors.push_back({-135.0, -45.0, {J::LeftKnee, J::LeftAnkle}, 0.10, 0.7});
  m.sectors.push_back({150.0, 180.0, {J::LeftWrist, J::RightWrist}, 0.10, 0.6});
  m.sectors.push_back({-180.0, -150.0, {J::LeftWrist, J::RightWrist}, 0.10, 0.6});
  return m;
}

namespace {

Scene layout_scene(std::string name, double duration, std::vector<Subject> subjects) {
  Scene s;
  s.name = std::move(name);
  s.duration = duration;
  s.subjects = std::move(subjects);
  s.nodes = preset_paper_layout();
  for (CameraNode& n : s.nodes) n.noise = noisy_noise();
  return s;
}

Subject static_subject(std::string id, Vec2 pos, double heading) {
  Subject s;
  s.id = std::move(id);
  s.script.kind = MotionScript::Kind::Static;
  s.script.position = pos;
  s.script.heading = heading;
  return s;
}

Subject walker(std::string id, double scale, std::vector<Vec2> waypoints, double speed, double offset) {
  Subject s;
  s.id = std::move(id);
  s.scale = scale;
  s.script.kind = MotionScript::Kind::Walk;
  s.script.waypoints = std::move(waypoints);
  s.script.speed = speed;
  s.script.start_offset_m = offset;
  return s;
}

const std::vector<Vec2> kLoop = {Vec2(-2.0, -1.5), Vec2(2.0, -1.5), Vec2(2.0, 1.5), Vec2(-2.0, 1.5)};
const std::vector<Vec2> kLeftLoop = {Vec2(-2.2, -2.0), Vec2(-0.7, -2.0), Vec2(-0.7, 2.0), Vec2(-2.2, 2.0)};
const std::vector<Vec2> kRightLoop = {Vec2(0.7, 2.0), Vec2(2.2, 2.0), Vec2(2.2, -2.0), Vec2(0.7, -2.0)};

}  // namespace

std::vector<std::string> preset_names() {
  return {"static-1",    "oscillate-1", "walk-slow-1",           "walk-fast-1",
          "walk-slow-2", "walk-fast-2", "paper-layout-2walkers", "static-calibration"};
}

Scene preset_scene(std::string_view name) {
  if (name == "static-1") return layout_scene("static-1", 15.0, {static_subject("s0", Vec2(0.3, -0.2), 0.6)});
  if (name == "static-calibration") {
    return layout_scene("static-calibration", 15.0, {static_subject("s0", Vec2(-0.4, 0.5), -1.2)});
  }
  if (name == "oscillate-1") {
    Subject s = static_subject("s0", Vec2(-0.5, 0.4), 2.0);
    s.script.kind = MotionScript::Kind::Oscillate;
    s.script.oscillations = {{JointGroup::Arms, 0.35, 0.4, 0.0},
                             {JointGroup::Elbows, 0.15, 0.4, 1.0},
                             {JointGroup::Legs, 0.15, 0.3, 0.5},
                             {JointGroup::Knees, 0.10, 0.3, 2.0}};
    return layout_scene("oscillate-1", 60.0, {s});
  }
  if (name == "walk-slow-1") return layout_scene("walk-slow-1", 60.0, {walker("s0", 1.0, kLoop, 0.5, 0.0)});
  if (name == "walk-fast-1") return layout_scene("walk-fast-1", 60.0, {walker("s0", 1.0, kLoop, 1.5, 0.0)});
  if (name == "walk-slow-2") {
    return layout_scene("walk-slow-2", 60.0,
                        {walker("s0", 1.0, kLeftLoop, 0.5, 0.0), walker("s1", 0.93, kRightLoop, 0.5, 1.0)});
  }
  if (name == "walk-fast-2") {
    return layout_scene("walk-fast-2", 60.0,
                        {walker("s0", 1.0, kLeftLoop, 1.5, 0.0), walker("s1", 0.93, kRightLoop, 1.5, 1.0)});
  }
  if (name == "paper-layout-2walkers") {
    return layout_scene("paper-layout-2walkers", 60.0,
                        {walker("s0", 1.0, kLeftLoop, 0.8, 0.0), walker("s1", 0.93, kRightLoop, 1.2, 2.0)});
  }
  throw std::invalid_argument("unknown scene preset '" + std::string(name) + "'");
}

// --- Scene config files -----------------------------------------------------------

namespace {

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw std::invalid_argument(fmt::format("scene config: missing key '{}'{}", key, where));
  }
  return obj.at(key);
}

template <typename T>
void optional_field(const json& obj, const char* key, T& dst, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(fmt::format("scene config: key '{}'{}: {}", key, where, e.what()));
  }
}

Vec3 vec3_of(const json& j, const std::string& what) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw std::invalid_argument("scene config: " + what + " must have 3 elements");
  return {v[0], v[1], v[2]};
}

Vec2 vec2_of(const json& j, const std::string& what) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 2) throw std::invalid_argument("scene config: " + what + " must have 2 elements");
  return {v[0], v[1]};
}

JointId joint_by_name(const std::string& name) {
  for (JointId j : kAllJoints) {
    if (joint_name(j) == name) return j;
  }
  throw std::invalid_argument("scene config: unknown joint '" + name + "'");
}

JointGroup group_by_name(const std::string& name) {
  if (name == "arms") return JointGroup::Arms;
  if (name == "elbows") return JointGroup::Elbows;
  if (name == "legs") return JointGroup::Legs;
  if (name == "knees") return JointGroup::Knees;
  throw std::invalid_argument("scene config: unknown joint group '" + name + "'");
}

NoiseModel parse_noise(const json& j, const std::string& where) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "noisy") return noisy_noise();
    if (name == "clean") return clean_noise();
    throw std::invalid_argument("scene config: unknown noise preset '" + name + "'" + where);
  }
  NoiseModel m;
  if (j.contains("preset")) m = parse_noise(j.at("preset"), where);
  optional_field(j, "sigma", m.sigma, where);
  optional_field(j, "base_confidence", m.base_confidence, where);
  optional_field(j, "confidence_distance_decay", m.confidence_distance_decay, where);
  optional_field(j, "confidence_jitter", m.confidence_jitter, where);
  optional_field(j, "outlier_probability", m.outlier_probability, where);
  optional_field(j, "outlier_min", m.outlier_min, where);
  optional_field(j, "outlier_max", m.outlier_max, where);
  optional_field(j, "inter_subject_occlusion", m.inter_subject_occlusion, where);
  optional_field(j, "occlusion_radius", m.occlusion_radius, where);
  optional_field(j, "timestamp_jitter", m.timestamp_jitter, where);
  if (j.contains("sectors")) {
    m.sectors.clear();
    for (const json& s : j.at("sectors")) {
      OcclusionSector sec;
      sec.azimuth_min_deg = require(s, "azimuth_min_deg", where).get<double>();
      sec.azimuth_max_deg = require(s, "azimuth_max_deg", where).get<double>();
      for (const json& name : require(s, "joints", where)) sec.joints.push_back(joint_by_name(name.get<std::string>()));
      optional_field(s, "drop_probability", sec.drop_probability, where);
      optional_field(s, "confidence_factor", sec.confidence_factor, where);
      m.sectors.push_back(sec);
    }
  }
  return m;
}

}  // namespace

Scene parse_scene(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("scene config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("scene config: top level must be an object");
  Scene scene;
  try {
    optional_field(doc, "name", scene.name, "");
    scene.duration = require(doc, "duration_s", "").get<double>();
    optional_field(doc, "truth_rate_hz", scene.truth_rate, "");

    const NoiseModel default_noise = doc.contains("noise") ? parse_noise(doc.at("noise"), "") : clean_noise();

    const json& subjects = require(doc, "subjects", "");
    if (!subjects.is_array()) throw std::invalid_argument("scene config: 'subjects' must be an array");
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      const json& js = subjects[i];
      const std::string where = fmt::format(" in subjects[{}]", i);
      Subject s;
      s.id = require(js, "id", where).get<std::string>();
      optional_field(js, "scale", s.scale, where);
      const json& sc = require(js, "script", where);
      const auto type = require(sc, "type", where).get<std::string>();
      if (type == "static" || type == "oscillate") {
        s.script.kind = type == "static" ? MotionScript::Kind::Static : MotionScript::Kind::Oscillate;
        s.script.position = vec2_of(require(sc, "position", where), "position");
        optional_field(sc, "heading", s.script.heading, where);
        if (sc.contains("oscillations")) {
          for (const json& o : sc.at("oscillations")) {
            Oscillation osc;
            osc.group = group_by_name(require(o, "group", where).get<std::string>());
            osc.amplitude_m = require(o, "amplitude_m", where).get<double>();
            osc.frequency_hz = require(o, "frequency_hz", where).get<double>();
            optional_field(o, "phase", osc.phase, where);
            s.script.oscillations.push_back(osc);
          }
        }
      } else if (type == "walk") {
        s.script.kind = MotionScript::Kind::Walk;
        for (const json& w : require(sc, "waypoints", where)) s.script.waypoints.push_back(vec2_of(w, "waypoint"));
        s.script.speed = require(sc, "speed", where).get<double>();
        optional_field(sc, "start_offset_m", s.script.start_offset_m, where);
      } else {
        throw std::invalid_argument("scene config: unknown script type '" + type + "'" + where);
      }
      scene.subjects.push_back(std::move(s));
    }

    if (doc.contains("nodes")) {
      const json& nodes = doc.at("nodes");
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        const json& jn = nodes[i];
        const std::string where = fmt::format(" in nodes[{}]", i);
        CameraNode n;
        n.camera_id = require(jn, "camera_id", where).get<std::string>();
        n.extrinsic = RigidTransform::look_at(vec3_of(require(jn, "position", where), "position"),
                                              vec3_of(require(jn, "look_at", where), "look_at"));
        optional_field(jn, "frame_rate", n.frame_rate, where);
        optional_field(jn, "clock_offset", n.clock_offset, where);
        n.noise = jn.contains("noise") ? parse_noise(jn.at("noise"), where) : default_noise;
        scene.nodes.push_back(std::move(n));
      }
    } else if (doc.contains("layout")) {
      const json& jl = doc.at("layout");
      LayoutOptions opts;
      optional_field(jl, "width", opts.width, " in layout");
      optional_field(jl, "depth", opts.depth, " in layout");
      optional_field(jl, "height", opts.height, " in layout");
      optional_field(jl, "target_height", opts.target_height, " in layout");
      optional_field(jl, "frame_rate", opts.frame_rate, " in layout");
      scene.nodes = preset_paper_layout(opts);
      for (CameraNode& n : scene.nodes) n.noise = default_noise;
    } else {
      throw std::invalid_argument("scene config: missing key 'nodes' (or 'layout')");
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scene config: ") + e.what());
  }
  scene.validate();
  return scene;
}

Scene load_scene_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Scene s = parse_scene(ss.str());
  if (s.name.empty()) s.name = path.stem().string();
  return s;
}

Scene resolve_scene(const std::string& name_or_path) {
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return preset_scene(name_or_path);
  if (std::filesystem::exists(name_or_path)) return load_scene_file(name_or_path);
  throw std::invalid_argument("'" + name_or_path + "' is neither a scene preset nor an existing file");
}

// --- Truth files ------------------------------------------------------------------

void write_truth(std::ostream& out, const GroundTruthLog& log) {
  std::string line;
  for (const TruthSample& s : log.samples) {
    line = fmt::format("{:.6f} {}", s.timestamp, s.subject_id);
    for (const auto& j : s.pose.joints) fmt::format_to(std::back_inserter(line), " {:.9f} {:.9f} {:.9f}", j->x(), j->y(), j->z());
    out << line << '\n';
  }
}

void write_truth_file(const std::filesystem::path& path, const GroundTruthLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_truth(out, log);
}

GroundTruthLog read_truth(std::istream& in, const std::string& source) {
  GroundTruthLog log;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    TruthSample s;
    if (!(ss >> s.timestamp >> s.subject_id)) throw FormatError(source, n, "expected timestamp and subject_id");
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      Vec3 p;
      if (!(ss >> p.x() >> p.y() >> p.z())) throw FormatError(source, n, fmt::format("joint {} incomplete", j));
      s.pose.joints[j] = p;
    }
    std::string extra;
    if (ss >> extra) throw FormatError(source, n, "trailing data");
    log.samples.push_back(std::move(s));
  }
  return log;
}

GroundTruthLog read_truth_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open truth file " + path.string());
  return read_truth(in, path.string());
}

std::vector<std::filesystem::path> write_scene_outputs(const std::filesystem::path& dir, const Scene& scene,
                                                       const GeneratedScene& generated) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (std::size_t i = 0; i < scene.nodes.size(); ++i) {
    const auto path = dir / ("stream_" + scene.nodes[i].camera_id + ".jsonl");
    write_stream_file(path, generated.streams[i]);
    paths.push_back(path);
  }
  write_truth_file(dir / "truth.txt", generated.truth);
  write_extrinsics_file(dir / "extrinsics.json", generated.extrinsics);
  return paths;
}

}  // namespace skelfuse::sim
