#include "skelfuse/consistency.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace skelfuse {

namespace {

Vec3 anchor_direction(const LinkProblem& p) { return (p.kalman_child - p.parent).normalized(); }

}  // namespace

LinkResiduals link_residuals(const Vec3& child, const LinkProblem& problem) {
  const Vec3 v = child - problem.parent;
  const double n = v.norm();
  if (n == 0.0) throw std::domain_error("degenerate link");
  const Vec3 theta = v / n;
  LinkResiduals r;
  r(0) = n - problem.target_length;
  r(1) = std::sqrt(problem.orientation_weight) * (theta - anchor_direction(problem)).norm();
  return r;
}

LinkJacobian link_jacobian(const Vec3& child, const LinkProblem& problem) {
  const Vec3 v = child - problem.parent;
  const double n = v.norm();
  if (n == 0.0) throw std::domain_error("degenerate link");
  const Vec3 theta = v / n;
  LinkJacobian j;
  j.row(0) = theta.transpose();
  const Vec3 u = theta - anchor_direction(problem);
  const double m = u.norm();
  if (m < 1e-15) {
    j.row(1).setZero();
  } else {
    const Mat3 dtheta = (Mat3::Identity() - theta * theta.transpose()) / n;
    j.row(1) = std::sqrt(problem.orientation_weight) * (u.transpose() / m) * dtheta;
  }
  return j;
}

double link_energy(const Vec3& child, const LinkProblem& problem) {
  return link_residuals(child, problem).squaredNorm();
}

LinkSolution optimize_link(const LinkProblem& problem, const LmConfig& cfg) {
  if ((problem.kalman_child - problem.parent).norm() == 0.0) throw std::domain_error("degenerate link");
  LinkSolution sol;
  sol.child = problem.kalman_child;
  LinkResiduals r = link_residuals(sol.child, problem);
  double energy = r.squaredNorm();
  sol.initial_energy = energy;
  double lambda = cfg.initial_lambda;

  for (int it = 0; it < cfg.max_iterations; ++it) {
    if (energy <= cfg.energy_tolerance * cfg.energy_tolerance) {
      sol.converged = true;
      break;
    }
    const LinkJacobian j = link_jacobian(sol.child, problem);
    const Mat3 jtj = j.transpose() * j;
    const Vec3 g = j.transpose() * r;
    const Vec3 step = (jtj + lambda * Mat3::Identity()).ldlt().solve(-g);
    if (step.norm() < cfg.step_tolerance) {
      sol.converged = true;
      break;
    }
    const Vec3 candidate = sol.child + step;
    if ((candidate - problem.parent).norm() == 0.0) {
      lambda *= cfg.lambda_up;
      continue;
    }
    const LinkResiduals rc = link_residuals(candidate, problem);
    const double ec = rc.squaredNorm();
    if (ec < energy) {
      const double decrease = energy - ec;
      sol.child = candidate;
      r = rc;
      energy = ec;
      ++sol.iterations;
      lambda *= cfg.lambda_down;
      if (decrease < cfg.energy_tolerance) {
        sol.converged = true;
        break;
      }
    } else {
      lambda *= cfg.lambda_up;
    }
  }
  sol.final_energy = energy;
  return sol;
}

std::array<double, kNumOptimizedLinks> link_lengths(const SkeletonPose& frame, const BodyModel& model) {
  std::array<double, kNumOptimizedLinks> out{};
  const auto links = model.optimized_links();
  for (std::size_t i = 0; i < links.size(); ++i) {
    const auto& p = frame[links[i].parent];
    const auto& c = frame[links[i].child];
    if (!p || !c) throw std::invalid_argument("link endpoint missing");
    out[i] = (*c - *p).norm();
  }
  return out;
}

ConsistencyResult enforce_consistency(const SkeletonPose& frame, const LimbLengths& lengths,
                                      const BodyModel& model, const ConsistencyConfig& cfg) {
  ConsistencyResult res{frame, false, true};
  if (!lengths.initialized) return res;
  const auto links = model.optimized_links();
  if (!frame.has(model.root())) return res;
  for (const Link& l : links) {
    if (!frame.has(l.parent) || !frame.has(l.child)) return res;
  }

  SkeletonPose& out = res.pose;
  for (std::size_t i = 0; i < links.size(); ++i) {
    LinkProblem problem{*out[links[i].parent], *frame[links[i].child], lengths.lengths[i],
                        cfg.orientation_weight};
    if ((problem.kalman_child - problem.parent).norm() == 0.0) {
      res.all_converged = false;
      continue;
    }
    const LinkSolution sol = optimize_link(problem, cfg.lm);
    res.all_converged = res.all_converged && sol.converged;
    out[links[i].child] = sol.child;
  }
  out[JointId::Chest] = derive_chest(out);
  res.refined = true;
  return res;
}

LimbLengths update_lengths(const LimbLengths& lengths, const SkeletonPose& frame, const BodyModel& model,
                           double alpha) {
  LimbLengths out = lengths;
  const auto current = link_lengths(frame, model);
  for (std::size_t i = 0; i < kNumOptimizedLinks; ++i) {
    out.lengths[i] = (1.0 - alpha) * lengths.lengths[i] + alpha * current[i];
  }
  return out;
}

LimbLengths initialize_lengths(std::span<const SkeletonPose> frames, const BodyModel& model,
                               std::size_t required) {
  LengthInitializer init(required);
  for (const SkeletonPose& f : frames) {
    if (init.add(f, model)) break;
  }
  return init.result();
}

bool LengthInitializer::add(const SkeletonPose& frame, const BodyModel& model) {
  if (count_ >= required_) return true;
  if (!frame.complete()) return false;
  const auto l = link_lengths(frame, model);
  for (std::size_t i = 0; i < kNumOptimizedLinks; ++i) sums_[i] += l[i];
  ++count_;
  return count_ >= required_;
}

LimbLengths LengthInitializer::result() const {
  LimbLengths out;
  out.sample_count = count_;
  if (count_ == 0 || count_ < required_) return out;
  for (std::size_t i = 0; i < kNumOptimizedLinks; ++i) out.lengths[i] = sums_[i] / static_cast<double>(count_);
  out.initialized = true;
  return out;
}

}  // namespace skelfuse
