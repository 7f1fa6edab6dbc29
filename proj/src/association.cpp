#include "skelfuse/association.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace skelfuse {

namespace {

Mat6 transition(double dt) {
  Mat6 f = Mat6::Identity();
  f.topRightCorner<3, 3>() = dt * Mat3::Identity();
  return f;
}

// Continuous white-noise acceleration integrated over dt.
Mat6 process_noise(double dt, double q) {
  Mat6 out = Mat6::Zero();
  const double dt2 = dt * dt;
  out.topLeftCorner<3, 3>() = (q * dt2 * dt / 3.0) * Mat3::Identity();
  out.topRightCorner<3, 3>() = (q * dt2 / 2.0) * Mat3::Identity();
  out.bottomLeftCorner<3, 3>() = (q * dt2 / 2.0) * Mat3::Identity();
  out.bottomRightCorner<3, 3>() = (q * dt) * Mat3::Identity();
  return out;
}

// Posterior of a position-only Kalman update.
Gaussian6 correct(const Gaussian6& prior, const Vec3& z, double r) {
  const Mat3 s = prior.covariance.topLeftCorner<3, 3>() + r * Mat3::Identity();
  const Eigen::Matrix<double, 6, 3> gain =
      prior.covariance.leftCols<3>() * s.ldlt().solve(Mat3::Identity());
  Gaussian6 post;
  post.mean = prior.mean + gain * (z - prior.mean.head<3>());
  Eigen::Matrix<double, 6, 6> ikh = Mat6::Identity();
  ikh.leftCols<3>() -= gain;
  post.covariance = ikh * prior.covariance * ikh.transpose() + r * gain * gain.transpose();
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose());
  return post;
}

}  // namespace

CentroidFilter CentroidFilter::initialize(const Vec3& centroid, double t, double position_variance,
                                          double velocity_sigma) {
  CentroidFilter f;
  f.state.head<3>() = centroid;
  f.state.tail<3>().setZero();
  f.covariance.setZero();
  f.covariance.diagonal() << Vec3::Constant(position_variance), Vec3::Constant(velocity_sigma * velocity_sigma);
  f.last_update = t;
  return f;
}

Gaussian6 predict_centroid(const CentroidFilter& filter, double t, const AssociationConfig& cfg) {
  const double dt = std::max(0.0, t - filter.last_update);
  const Mat6 f = transition(dt);
  Gaussian6 out;
  out.mean = f * filter.state;
  out.covariance = f * filter.covariance * f.transpose() + process_noise(dt, cfg.centroid_process_noise);
  return out;
}

CentroidFilter update_centroid(const CentroidFilter& filter, const Vec3& detection_centroid, double t,
                               const AssociationConfig& cfg) {
  const Gaussian6 post =
      correct(predict_centroid(filter, t, cfg), detection_centroid, cfg.centroid_measurement_variance);
  CentroidFilter out;
  out.state = post.mean;
  out.covariance = post.covariance;
  out.last_update = std::max(t, filter.last_update);
  return out;
}

double mahalanobis_squared(const Vec6& z, const Mat6& cov) {
  const Eigen::LLT<Mat6> llt(cov);
  if (llt.info() != Eigen::Success) throw std::domain_error("degenerate covariance");
  return z.dot(llt.solve(z));
}

double association_cost(const CentroidFilter& filter, const Vec3& detection_centroid, double t,
                        const AssociationConfig& cfg) {
  const Gaussian6 prior = predict_centroid(filter, t, cfg);
  const Gaussian6 hypothetical = correct(prior, detection_centroid, cfg.centroid_measurement_variance);
  return mahalanobis_squared(hypothetical.mean - prior.mean, prior.covariance);
}

std::vector<int> hungarian(const CostMatrix& costs) {
  const auto rows = static_cast<std::size_t>(costs.rows());
  const auto cols = static_cast<std::size_t>(costs.cols());
  if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);
  if (!costs.allFinite()) throw std::invalid_argument("cost matrix must be finite");

  // Shortest augmenting path with potentials over a square padding. Padding
  // entries share one constant, so they never change which real pairs win.
  const std::size_t n = std::max(rows, cols);
  const double pad = costs.maxCoeff() + 1.0;
  const auto cost = [&](std::size_t i, std::size_t j) {
    return (i < rows && j < cols) ? costs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) : pad;
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> out(rows, -1);
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = p[j] - 1;
    if (i < rows && j - 1 < cols) out[i] = static_cast<int>(j - 1);
  }
  return out;
}

Assignment solve_assignment(const CostMatrix& costs, double gate) {
  const auto rows = static_cast<std::size_t>(costs.rows());
  const auto cols = static_cast<std::size_t>(costs.cols());
  const std::vector<int> match = hungarian(costs);
  Assignment out;
  std::vector<char> det_used(cols, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    const int j = match[i];
    if (j >= 0 && costs(static_cast<Eigen::Index>(i), j) <= gate) {
      out.pairs.emplace_back(i, static_cast<std::size_t>(j));
      det_used[static_cast<std::size_t>(j)] = 1;
    } else {
      out.unmatched_tracks.push_back(i);
    }
  }
  for (std::size_t j = 0; j < cols; ++j) {
    if (!det_used[j]) out.unmatched_detections.push_back(j);
  }
  return out;
}

}  // namespace skelfuse
