#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "skelfuse/association.hpp"

using namespace skelfuse;
using testutil::random_spd;
using testutil::random_vec;

namespace {

CentroidFilter moving_filter(const Vec3& pos, const Vec3& vel, double t = 0.0) {
  CentroidFilter f = CentroidFilter::initialize(pos, t, 0.01, 1.0);
  f.state.tail<3>() = vel;
  return f;
}

// Exhaustive optimum over injective maps from the smaller side.
double brute_force_total(const CostMatrix& c) {
  const bool transpose = c.rows() > c.cols();
  const CostMatrix m = transpose ? CostMatrix(c.transpose()) : c;
  std::vector<int> cols(static_cast<std::size_t>(m.cols()));
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) total += m(r, cols[static_cast<std::size_t>(r)]);
    best = std::min(best, total);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

}  // namespace

TEST_SUITE("association") {
  TEST_CASE("predict_centroid examples") {
    AssociationConfig cfg;
    const CentroidFilter f = moving_filter(Vec3::Zero(), Vec3(1, 0, 0));
    const Gaussian6 p = predict_centroid(f, 1.0, cfg);
    CHECK((p.mean.head<3>() - Vec3(1, 0, 0)).norm() < 1e-12);

    const CentroidFilter still = moving_filter(Vec3(1, 2, 3), Vec3::Zero());
    const Gaussian6 q = predict_centroid(still, 0.5, cfg);
    CHECK((q.mean.head<3>() - Vec3(1, 2, 3)).norm() == 0.0);
    CHECK(q.covariance(0, 0) > still.covariance(0, 0));

    // Stale request: no elapsed time.
    const CentroidFilter later = moving_filter(Vec3::Zero(), Vec3(1, 0, 0), 2.0);
    const Gaussian6 stale = predict_centroid(later, 1.0, cfg);
    CHECK(stale.mean == later.state);
    CHECK(stale.covariance == later.covariance);
  }

  TEST_CASE("two half-second predictions equal one full-second prediction") {
    AssociationConfig cfg;
    std::mt19937_64 rng(1);
    for (int k = 0; k < 20; ++k) {
      CentroidFilter f = moving_filter(random_vec(rng), random_vec(rng));
      f.covariance = random_spd<6>(rng);
      const Gaussian6 once = predict_centroid(f, 1.0, cfg);
      CentroidFilter half = f;
      const Gaussian6 h = predict_centroid(f, 0.5, cfg);
      half.state = h.mean;
      half.covariance = h.covariance;
      half.last_update = 0.5;
      const Gaussian6 twice = predict_centroid(half, 1.0, cfg);
      CHECK((once.mean - twice.mean).norm() < 1e-12);
      CHECK((once.covariance - twice.covariance).norm() < 1e-9);
      // Closed form for the mean.
      CHECK((once.mean.head<3>() - (f.state.head<3>() + f.state.tail<3>())).norm() < 1e-12);
    }
  }

  TEST_CASE("mahalanobis examples") {
    Vec6 z = Vec6::Zero();
    z(0) = 1.0;
    CHECK(mahalanobis_squared(z, Mat6::Identity()) == doctest::Approx(1.0).epsilon(1e-15));
    std::mt19937_64 rng(2);
    for (int k = 0; k < 50; ++k) {
      const Mat6 s = random_spd<6>(rng);
      Vec6 v;
      for (int i = 0; i < 6; ++i) v(i) = random_vec(rng)(0);
      const double oracle = v.dot(s.fullPivLu().solve(v));
      CHECK(std::abs(mahalanobis_squared(v, s) - oracle) < 1e-9 * std::max(1.0, oracle));
    }
    Mat6 singular = Mat6::Identity();
    singular(5, 5) = 0.0;
    CHECK_THROWS_WITH_AS(mahalanobis_squared(z, singular), "degenerate covariance", std::domain_error);
  }

  TEST_CASE("association cost is zero at the prediction and grows with distance") {
    AssociationConfig cfg;
    const CentroidFilter f = moving_filter(Vec3(0, 0, 1), Vec3(0.5, 0, 0));
    const Vec3 predicted = predict_centroid(f, 0.1, cfg).mean.head<3>();
    CHECK(association_cost(f, predicted, 0.1, cfg) < 1e-20);
    const double near = association_cost(f, predicted + Vec3(0.05, 0, 0), 0.1, cfg);
    const double far = association_cost(f, predicted + Vec3(1.0, 0, 0), 0.1, cfg);
    CHECK(near > 0.0);
    CHECK(far > near);
    CHECK(far > cfg.gate_epsilon);
  }

  TEST_CASE("solve_assignment examples") {
    CostMatrix c(2, 2);
    c << 1, 2, 2, 1;
    Assignment a = solve_assignment(c, 10.0);
    REQUIRE(a.pairs.size() == 2);
    CHECK(a.pairs[0] == std::pair<std::size_t, std::size_t>{0, 0});
    CHECK(a.pairs[1] == std::pair<std::size_t, std::size_t>{1, 1});

    CostMatrix one(1, 1);
    one << 5;
    a = solve_assignment(one, 1.0);
    CHECK(a.pairs.empty());
    CHECK(a.unmatched_detections == std::vector<std::size_t>{0});
    CHECK(a.unmatched_tracks == std::vector<std::size_t>{0});

    CostMatrix rect(2, 3);
    rect << 4, 1, 3, 2, 0, 5;
    a = solve_assignment(rect, 100.0);
    double total = 0.0;
    for (auto [t, d] : a.pairs) total += rect(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d));
    CHECK(total == brute_force_total(rect));
    CHECK(a.unmatched_detections.size() == 1);

    const Assignment none = solve_assignment(CostMatrix(0, 3), 1.0);
    CHECK(none.unmatched_detections.size() == 3);
  }

  TEST_CASE("hungarian equals the brute-force optimum on random matrices") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> dim(1, 6);
    std::uniform_int_distribution<int> small(0, 4);  // forces ties
    std::uniform_real_distribution<double> real(0.0, 10.0);
    for (int trial = 0; trial < 1000; ++trial) {
      const int r = dim(rng), cc = dim(rng);
      CostMatrix m(r, cc);
      const bool ties = trial % 2 == 0;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < cc; ++j) m(i, j) = ties ? small(rng) : real(rng);
      const auto assign = hungarian(m);
      double total = 0.0;
      std::vector<int> used(static_cast<std::size_t>(cc), 0);
      int matched = 0;
      for (int i = 0; i < r; ++i) {
        const int j = assign[static_cast<std::size_t>(i)];
        if (j < 0) continue;
        CHECK(used[static_cast<std::size_t>(j)] == 0);
        used[static_cast<std::size_t>(j)] = 1;
        total += m(i, j);
        ++matched;
      }
      CHECK(matched == std::min(r, cc));
      CHECK(total == doctest::Approx(brute_force_total(m)).epsilon(1e-12));
    }
  }

  TEST_CASE("assignment is unchanged under a global translation") {
    AssociationConfig cfg;
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<CentroidFilter> tracks;
      std::vector<Vec3> dets;
      for (int i = 0; i < 3; ++i) tracks.push_back(moving_filter(random_vec(rng, 3.0), random_vec(rng)));
      for (int j = 0; j < 4; ++j) dets.push_back(random_vec(rng, 3.0));
      const Vec3 shift = random_vec(rng, 50.0);
      CostMatrix a(3, 4), b(3, 4);
      for (int i = 0; i < 3; ++i) {
        CentroidFilter moved = tracks[static_cast<std::size_t>(i)];
        moved.state.head<3>() += shift;
        for (int j = 0; j < 4; ++j) {
          a(i, j) = association_cost(tracks[static_cast<std::size_t>(i)], dets[static_cast<std::size_t>(j)], 0.1, cfg);
          b(i, j) = association_cost(moved, dets[static_cast<std::size_t>(j)] + shift, 0.1, cfg);
        }
      }
      CHECK(hungarian(a) == hungarian(b));
    }
  }

  TEST_CASE("update_centroid examples") {
    AssociationConfig cfg;
    const CentroidFilter f = moving_filter(Vec3(1, 1, 1), Vec3(0.2, 0, 0));
    const Gaussian6 prior = predict_centroid(f, 0.1, cfg);
    const CentroidFilter same = update_centroid(f, prior.mean.head<3>(), 0.1, cfg);
    CHECK((same.state - prior.mean).norm() < 1e-12);
    CHECK(same.covariance.trace() < prior.covariance.trace());
    CHECK(same.last_update == 0.1);

    AssociationConfig loose = cfg;
    loose.centroid_measurement_variance = 1e12;
    const CentroidFilter ignored = update_centroid(f, Vec3(50, 50, 50), 0.1, loose);
    CHECK((ignored.state - prior.mean).norm() < 1e-6);
  }

  TEST_CASE("update_centroid equals the information-form oracle") {
    AssociationConfig cfg;
    std::mt19937_64 rng(5);
    for (int k = 0; k < 50; ++k) {
      CentroidFilter f = moving_filter(random_vec(rng), random_vec(rng));
      f.covariance = random_spd<6>(rng, 0.05);
      const Vec3 z = random_vec(rng, 2.0);
      const Gaussian6 prior = predict_centroid(f, 0.05, cfg);
      Eigen::Matrix<double, 3, 6> h = Eigen::Matrix<double, 3, 6>::Zero();
      h.leftCols<3>().setIdentity();
      const Mat3 r_inv = Mat3::Identity() / cfg.centroid_measurement_variance;
      const Mat6 info = prior.covariance.inverse() + h.transpose() * r_inv * h;
      const Mat6 p_post = info.inverse();
      const Vec6 x_post = p_post * (prior.covariance.inverse() * prior.mean + h.transpose() * r_inv * z);
      const CentroidFilter post = update_centroid(f, z, 0.05, cfg);
      CHECK((post.state - x_post).norm() < 1e-9);
      CHECK((post.covariance - p_post).norm() < 1e-9);
      CHECK((post.covariance - post.covariance.transpose()).norm() < 1e-9);
    }
  }
}
