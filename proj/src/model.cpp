#include "skelfuse/model.hpp"

#include <cmath>
#include <stdexcept>

namespace skelfuse {

namespace {

constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "Head",     "Neck",      "Chest",      "LeftShoulder", "RightShoulder",
    "LeftElbow", "RightElbow", "LeftWrist", "RightWrist",   "LeftHip",
    "RightHip", "LeftKnee",  "RightKnee",  "LeftAnkle",    "RightAnkle",
};

}  // namespace

std::string_view joint_name(JointId j) { return kJointNames.at(index(j)); }

BodyModel::BodyModel() {
  using J = JointId;
  links_ = {
      {J::Neck, J::Head},           {J::Neck, J::Chest},
      {J::Neck, J::LeftShoulder},   {J::Neck, J::RightShoulder},
      {J::LeftShoulder, J::LeftElbow},   {J::LeftElbow, J::LeftWrist},
      {J::RightShoulder, J::RightElbow}, {J::RightElbow, J::RightWrist},
      {J::LeftShoulder, J::LeftHip},     {J::LeftHip, J::LeftKnee},
      {J::LeftKnee, J::LeftAnkle},       {J::RightShoulder, J::RightHip},
      {J::RightHip, J::RightKnee},       {J::RightKnee, J::RightAnkle},
  };
  order_.push_back(J::Neck);
  for (const Link& l : links_) {
    parent_[index(l.child)] = l.parent;
    order_.push_back(l.child);
    if (l.child != J::Head && l.child != J::Chest) optimized_.push_back(l);
  }
}

const BodyModel& BodyModel::standard() {
  static const BodyModel model;
  return model;
}

bool is_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!is_rotation(rotation_)) {
    throw std::invalid_argument("rotation is not orthonormal with det +1");
  }
  if (!translation_.allFinite()) throw std::invalid_argument("non-finite translation");
}

RigidTransform RigidTransform::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = up.cross(z);
  if (x.norm() < 1e-12) x = Vec3::UnitX().cross(z);
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return {r, eye};
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation_.transpose();
  RigidTransform inv;
  inv.rotation_ = rt;
  inv.translation_ = -(rt * translation_);
  return inv;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out;
  out.rotation_ = rotation_ * rhs.rotation_;
  out.translation_ = rotation_ * rhs.translation_ + translation_;
  return out;
}

Eigen::Matrix4d RigidTransform::homogeneous() const {
  Eigen::Matrix4d h = Eigen::Matrix4d::Identity();
  h.topLeftCorner<3, 3>() = rotation_;
  h.topRightCorner<3, 1>() = translation_;
  return h;
}

std::size_t SkeletonPose::present_count() const {
  std::size_t n = 0;
  for (const auto& j : joints) n += j.has_value();
  return n;
}

SkeletonPose transform_pose(const SkeletonPose& pose, const RigidTransform& t) {
  SkeletonPose out;
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    if (pose.joints[i]) out.joints[i] = t.apply(*pose.joints[i]);
  }
  return out;
}

Vec3 centroid(const SkeletonPose& pose) {
  Vec3 sum = Vec3::Zero();
  std::size_t n = 0;
  for (const auto& j : pose.joints) {
    if (!j) continue;
    sum += *j;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("no joints present");
  return sum / static_cast<double>(n);
}

Vec3 derive_chest(const SkeletonPose& pose) {
  using J = JointId;
  const auto& ls = pose[J::LeftShoulder];
  const auto& rs = pose[J::RightShoulder];
  const auto& lh = pose[J::LeftHip];
  const auto& rh = pose[J::RightHip];
  if (!ls || !rs || !lh || !rh) throw std::invalid_argument("chest underdetermined");
  return (*ls + *rs + *lh + *rh) / 4.0;
}

}  // namespace skelfuse
