#pragma once

#include <random>

#include <Eigen/Dense>

#include "skelfuse/ingest.hpp"
#include "skelfuse/model.hpp"

namespace testutil {

using skelfuse::Mat3;
using skelfuse::Vec3;

inline Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

template <int N>
Eigen::Matrix<double, N, N> random_spd(std::mt19937_64& rng, double floor = 0.1) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Matrix<double, N, N> a;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) a(i, j) = n(rng);
  return a * a.transpose() + floor * Eigen::Matrix<double, N, N>::Identity();
}

inline skelfuse::SkeletonPose random_pose(std::mt19937_64& rng, double scale = 1.0) {
  skelfuse::SkeletonPose p;
  for (auto& j : p.joints) j = random_vec(rng, scale);
  return p;
}

inline skelfuse::SkeletonDetection detection_from(const skelfuse::SkeletonPose& pose, double t,
                                                  double confidence = 1.0, const std::string& cam = "cam0") {
  skelfuse::SkeletonDetection d;
  d.camera_id = cam;
  d.timestamp = t;
  for (std::size_t i = 0; i < skelfuse::kNumJoints; ++i) {
    if (pose.joints[i]) d.joints[i] = skelfuse::JointObservation{*pose.joints[i], confidence};
  }
  return d;
}

}  // namespace testutil
