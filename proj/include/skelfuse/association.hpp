#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "skelfuse/model.hpp"

namespace skelfuse {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct AssociationConfig {
  double gate_epsilon = 1.0;
  double track_timeout_s = 2.0;
  double init_velocity_sigma = 1.0;
  /// Spectral density of the white acceleration driving the centroid (m^2/s^3).
  double centroid_process_noise = 1.0;
  /// Variance of a detection centroid measurement, per axis (m^2).
  double centroid_measurement_variance = 0.02;
};

/// Constant-velocity filter over a skeleton centroid: state is
/// (position, velocity), continuous-time propagation.
struct CentroidFilter {
  Vec6 state = Vec6::Zero();
  Mat6 covariance = Mat6::Identity();
  double last_update = 0.0;

  static CentroidFilter initialize(const Vec3& centroid, double t, double position_variance,
                                   double velocity_sigma);
};

struct Gaussian6 {
  Vec6 mean;
  Mat6 covariance;
};

/// Pure prediction to time `t`. Elapsed time is clamped at zero for stale
/// requests.
Gaussian6 predict_centroid(const CentroidFilter& filter, double t, const AssociationConfig& cfg);

/// Measurement update with a centroid observation at time `t` (predicts first).
CentroidFilter update_centroid(const CentroidFilter& filter, const Vec3& detection_centroid, double t,
                               const AssociationConfig& cfg);

/// z^T cov^-1 z. Throws std::domain_error("degenerate covariance") when cov
/// is not positive definite.
double mahalanobis_squared(const Vec6& z, const Mat6& cov);

/// Cost of pairing a detection with a track: the Mahalanobis norm, under the
/// predicted covariance, of the state shift a hypothetical update would cause.
double association_cost(const CentroidFilter& filter, const Vec3& detection_centroid, double t,
                        const AssociationConfig& cfg);

/// Rows are tracks, columns are detections.
using CostMatrix = Eigen::MatrixXd;

struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (track, detection)
  std::vector<std::size_t> unmatched_detections;
  std::vector<std::size_t> unmatched_tracks;
};

/// Minimum-total-cost pairing of rows to columns (rectangular allowed).
/// Returns, for each row, the assigned column or -1.
std::vector<int> hungarian(const CostMatrix& costs);

/// Optimal assignment followed by gating: pairs whose cost exceeds `gate`
/// are demoted to unmatched.
Assignment solve_assignment(const CostMatrix& costs, double gate);

}  // namespace skelfuse
