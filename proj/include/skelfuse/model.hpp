#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace skelfuse {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr std::size_t kNumJoints = 15;

enum class JointId : std::size_t {
  Head = 0,
  Neck,
  Chest,
  LeftShoulder,
  RightShoulder,
  LeftElbow,
  RightElbow,
  LeftWrist,
  RightWrist,
  LeftHip,
  RightHip,
  LeftKnee,
  RightKnee,
  LeftAnkle,
  RightAnkle,
};

constexpr std::size_t index(JointId j) { return static_cast<std::size_t>(j); }
constexpr JointId joint_at(std::size_t i) { return static_cast<JointId>(i); }
std::string_view joint_name(JointId j);

inline constexpr std::array<JointId, kNumJoints> kAllJoints = {
    JointId::Head,      JointId::Neck,       JointId::Chest,
    JointId::LeftShoulder, JointId::RightShoulder, JointId::LeftElbow,
    JointId::RightElbow, JointId::LeftWrist, JointId::RightWrist,
    JointId::LeftHip,   JointId::RightHip,   JointId::LeftKnee,
    JointId::RightKnee, JointId::LeftAnkle,  JointId::RightAnkle,
};

struct Link {
  JointId parent;
  JointId child;
};

/// Parent/child joint tree rooted at the neck. Links are stored in
/// traversal order, so iterating `links()` visits every parent before
/// its children.
class BodyModel {
 public:
  BodyModel();

  std::span<const Link> links() const { return links_; }
  /// Links refined by the consistency stage (head and chest excluded).
  std::span<const Link> optimized_links() const { return optimized_; }
  /// Joints in traversal order, starting at the root.
  std::span<const JointId> optimization_order() const { return order_; }
  std::optional<JointId> parent(JointId j) const { return parent_[index(j)]; }
  JointId root() const { return JointId::Neck; }

  static const BodyModel& standard();

 private:
  std::vector<Link> links_;
  std::vector<Link> optimized_;
  std::vector<JointId> order_;
  std::array<std::optional<JointId>, kNumJoints> parent_{};
};

/// Rotation + translation mapping a point from a local frame to the parent
/// frame: g = R p + t.
class RigidTransform {
 public:
  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  /// Throws std::invalid_argument unless `rotation` is orthonormal with
  /// determinant +1 (tolerance 1e-9).
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }
  /// Frame located at `eye` whose +z axis points at `target`; +x is kept
  /// horizontal (perpendicular to `up`).
  static RigidTransform look_at(const Vec3& eye, const Vec3& target,
                                const Vec3& up = Vec3::UnitZ());

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& rhs) const;
  Eigen::Matrix4d homogeneous() const;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

bool is_rotation(const Mat3& r, double tol = 1e-9);

struct SkeletonPose {
  std::array<std::optional<Vec3>, kNumJoints> joints{};

  std::optional<Vec3>& operator[](JointId j) { return joints[index(j)]; }
  const std::optional<Vec3>& operator[](JointId j) const { return joints[index(j)]; }
  bool has(JointId j) const { return joints[index(j)].has_value(); }
  std::size_t present_count() const;
  bool complete() const { return present_count() == kNumJoints; }
};

SkeletonPose transform_pose(const SkeletonPose& pose, const RigidTransform& t);

/// Mean of the present joints. Throws std::invalid_argument("no joints
/// present") on an empty pose.
Vec3 centroid(const SkeletonPose& pose);

/// Midpoint of both shoulders and both hips. Throws
/// std::invalid_argument("chest underdetermined") if any of them is absent.
Vec3 derive_chest(const SkeletonPose& pose);

}  // namespace skelfuse
