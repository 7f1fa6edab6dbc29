#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "skelfuse/model.hpp"

namespace skelfuse {

inline constexpr std::size_t kNumOptimizedLinks = 12;

struct LmConfig {
  double initial_lambda = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  int max_iterations = 50;
  double step_tolerance = 1e-8;    // meters
  double energy_tolerance = 1e-12;
};

struct ConsistencyConfig {
  bool enabled = true;
  double orientation_weight = 1.0;
  double length_alpha = 0.01;
  std::size_t init_frames = 10;
  LmConfig lm;
};

/// Target lengths of the optimized links, indexed like
/// BodyModel::optimized_links().
struct LimbLengths {
  std::array<double, kNumOptimizedLinks> lengths{};
  bool initialized = false;
  std::size_t sample_count = 0;
};

/// One link's refinement: the parent is fixed, the child moves.
struct LinkProblem {
  Vec3 parent;
  Vec3 kalman_child;  // initial value and orientation anchor
  double target_length = 0.0;
  double orientation_weight = 1.0;
};

using LinkResiduals = Eigen::Vector2d;
using LinkJacobian = Eigen::Matrix<double, 2, 3>;

/// (|q_c - q_p| - l, sqrt(w) |theta - theta_kf|). Throws
/// std::domain_error("degenerate link") when q_c == q_p.
LinkResiduals link_residuals(const Vec3& child, const LinkProblem& problem);
/// Analytic Jacobian w.r.t. the child position. The orientation row is zero
/// where theta == theta_kf (the norm is not differentiable there).
LinkJacobian link_jacobian(const Vec3& child, const LinkProblem& problem);
double link_energy(const Vec3& child, const LinkProblem& problem);

struct LinkSolution {
  Vec3 child;
  double initial_energy = 0.0;
  double final_energy = 0.0;
  int iterations = 0;   // accepted steps
  bool converged = false;
};

/// Levenberg-Marquardt from the Kalman estimate. Never returns an iterate
/// with higher energy than the start; non-convergence is reported, not thrown.
LinkSolution optimize_link(const LinkProblem& problem, const LmConfig& cfg = {});

struct ConsistencyResult {
  SkeletonPose pose;
  bool refined = false;
  bool all_converged = true;
};

/// Refines the optimized links parent-first from the fixed neck. The chest is
/// re-derived from the refined shoulders and hips, the head passes through.
/// Frames missing required joints (or with uninitialized lengths) pass
/// through with refined == false.
ConsistencyResult enforce_consistency(const SkeletonPose& frame, const LimbLengths& lengths,
                                      const BodyModel& model, const ConsistencyConfig& cfg);

/// Per-link exponential smoothing toward the lengths measured in `frame`.
LimbLengths update_lengths(const LimbLengths& lengths, const SkeletonPose& frame, const BodyModel& model,
                           double alpha);

std::array<double, kNumOptimizedLinks> link_lengths(const SkeletonPose& frame, const BodyModel& model);

/// Mean link lengths over the first `required` complete frames; the result is
/// uninitialized while fewer complete frames are available.
LimbLengths initialize_lengths(std::span<const SkeletonPose> frames, const BodyModel& model,
                               std::size_t required);

/// Streaming counterpart of initialize_lengths used by the tracker.
class LengthInitializer {
 public:
  explicit LengthInitializer(std::size_t required) : required_(required) {}
  /// Returns true once enough complete frames were accumulated.
  bool add(const SkeletonPose& frame, const BodyModel& model);
  LimbLengths result() const;

 private:
  std::size_t required_;
  std::size_t count_ = 0;
  std::array<double, kNumOptimizedLinks> sums_{};
};

}  // namespace skelfuse
