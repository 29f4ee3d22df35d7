#include "radattr/tracking.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace radattr;
using namespace radattr::tracking;

namespace {

scene::SyntheticDetection lidar_box(const Vec3& center, const Vec3& extent, std::optional<double> heading,
                                    double t = 0.0, int truth = 1) {
  scene::SyntheticDetection d;
  d.t = t;
  d.sensor = SensorKind::Lidar;
  d.label = ObjectClass::Car;
  d.center = center;
  d.extent = extent;
  d.heading = heading;
  d.truth_id = truth;
  return d;
}

DetectionMVN point(const Vec3& mean, double var, ObjectClass label = ObjectClass::Car) {
  DetectionMVN d;
  d.mean = mean;
  d.cov = Mat3::Identity() * var;
  d.label = label;
  return d;
}

Track track_at(const Vec3& p, ObjectClass label = ObjectClass::Car) {
  Track t;
  t.x.head<3>() = p;
  t.P = Mat6::Identity();
  t.label = label;
  t.shape_cov = Mat3::Identity() * 0.01;
  return t;
}

}  // namespace

TEST(Mvn, ExtentScaledCovariance) {
  const TrackerConfig cfg;
  scene::PoseEstimate pose;
  pose.position = Vec3::Zero();
  const auto d = to_mvn(lidar_box(Vec3(5, 1, 0.75), Vec3(2, 4, 1.5), 0.0), pose, cfg);
  EXPECT_NEAR(d.cov(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(d.cov(1, 1), 1.0, 1e-12);
  EXPECT_NEAR(d.cov(2, 2), 0.140625, 1e-12);
  EXPECT_NEAR(d.cov(0, 1), 0.0, 1e-12);
  EXPECT_EQ(d.mean, Vec3(5, 1, 0.75));

  const auto r = to_mvn(lidar_box(Vec3(5, 1, 0.75), Vec3(2, 4, 1.5), kPi / 2), pose, cfg);
  EXPECT_NEAR(r.cov(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(r.cov(1, 1), 0.25, 1e-12);
}

TEST(Mvn, PoseTransformsMean) {
  const TrackerConfig cfg;
  scene::PoseEstimate pose;
  pose.position = Vec3(10, 0, 0);
  pose.yaw = kPi / 2;
  const auto d = to_mvn(lidar_box(Vec3(2, 0, 0), Vec3(1, 1, 1), std::nullopt), pose, cfg);
  EXPECT_NEAR((d.mean - Vec3(10, 2, 0)).norm(), 0.0, 1e-12);
  scene::PoseEstimate stale = pose;
  stale.t = 1.0;
  EXPECT_THROW(to_mvn(lidar_box(Vec3(2, 0, 0), Vec3(1, 1, 1), std::nullopt), stale, cfg), ValidationError);
}

TEST(Hellinger, IdentityUnivariateAndDisjoint) {
  const Eigen::VectorXd m = Eigen::Vector3d(1, 2, 3);
  Eigen::MatrixXd c(3, 3);
  c << 2, 0.3, 0, 0.3, 1, 0.1, 0, 0.1, 0.5;
  EXPECT_EQ(hellinger(m, c, m, c), 0.0);

  const Eigen::VectorXd a = Eigen::VectorXd::Constant(1, 0.0), b = Eigen::VectorXd::Constant(1, 1.0);
  const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
  EXPECT_NEAR(hellinger(a, one, b, one), std::sqrt(1 - std::exp(-1.0 / 8)), 1e-12);

  const Eigen::VectorXd far = Eigen::Vector3d(1e6, 0, 0);
  const Eigen::MatrixXd i3 = Eigen::MatrixXd::Identity(3, 3);
  EXPECT_NEAR(hellinger(Eigen::VectorXd(Eigen::Vector3d::Zero()), i3, far, i3), 1.0, 1e-12);
  EXPECT_THROW(hellinger(a, one, m, c), ValidationError);
}

TEST(Consolidate, DuplicatesFarAndTransitive) {
  const auto a = point(Vec3(0, 0, 0), 1.0);
  auto out = consolidate({a, a}, 0.6);
  EXPECT_EQ(out.size(), 1u);
  out = consolidate({a, point(Vec3(50, 0, 0), 1.0)}, 0.6);
  EXPECT_EQ(out.size(), 2u);
  out = consolidate({a, point(Vec3(0.3, 0, 0), 1.0), point(Vec3(0.6, 0, 0), 1.0)}, 0.6);
  EXPECT_EQ(out.size(), 1u);
}

TEST(Kalman, PredictKinematicsAndNoise) {
  TrackerConfig cfg;
  Track t = track_at(Vec3::Zero());
  t.x.tail<3>() = Vec3(1, 0, 0);
  const Mat6 p0 = t.P;
  predict(t, 0.0, cfg);
  EXPECT_EQ(t.P, p0);
  predict(t, 2.0, cfg);
  EXPECT_NEAR((t.position() - Vec3(2, 0, 0)).norm(), 0.0, 1e-15);

  Track car = track_at(Vec3::Zero(), ObjectClass::Car);
  Track ped = track_at(Vec3::Zero(), ObjectClass::Person);
  predict(car, 0.5, cfg);
  predict(ped, 0.5, cfg);
  const double car_growth = car.P(3, 3) - 1.0, ped_growth = ped.P(3, 3) - 1.0;
  EXPECT_NEAR(car_growth / ped_growth, 4.44 / 0.28, 1e-9);
  EXPECT_NEAR(4.44 / 0.28, 15.9, 0.05);
}

TEST(Kalman, ScalarUpdateAlgebra) {
  TrackerConfig cfg;
  Track t = track_at(Vec3::Zero());
  update(t, point(Vec3(2, 2, 2), 1.0), cfg);
  // Prior N(0, 1), measurement N(2, 1): posterior N(1, 0.5) on each axis.
  for (int a = 0; a < 3; ++a) {
    EXPECT_NEAR(t.x[a], 1.0, 1e-12);
    EXPECT_NEAR(t.P(a, a), 0.5, 1e-12);
  }
  Track exact = track_at(Vec3::Zero());
  update(exact, point(Vec3(3, -1, 0.5), 1e-12), cfg);
  EXPECT_NEAR((exact.position() - Vec3(3, -1, 0.5)).norm(), 0.0, 1e-9);
}

TEST(Kalman, StationaryUpdatesShrinkCovariance) {
  TrackerConfig cfg;
  Track t = track_at(Vec3::Zero());
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.3);
  // Position variance may wobble while velocity uncertainty bleeds in, but it settles.
  double prev = t.P(0, 0);
  for (int i = 0; i < 60; ++i) {
    predict(t, 1.0 / 15, cfg);
    update(t, point(Vec3(n(rng), n(rng), n(rng)), 0.09, ObjectClass::Person), cfg);
    if (i >= 50) EXPECT_NEAR(t.P(0, 0), prev, 1e-4 * prev);
    prev = t.P(0, 0);
  }
  EXPECT_LT(t.P(0, 0), 0.09);
  EXPECT_GT(t.P(0, 0), cfg.covariance_floor);
}

TEST(Assignment, ExhaustiveTwoByTwo) {
  Eigen::MatrixXd cost(2, 2);
  cost << 0.1, 0.7, 0.7, 0.1;
  const auto a = solve_assignment(cost);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0], 0);
  EXPECT_EQ(a[1], 1);
  EXPECT_NEAR(cost(0, a[0]) + cost(1, a[1]), 0.2, 1e-15);
}

TEST(Assignment, MatchesBruteForceOnRandomSquares) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 6;
    Eigen::MatrixXd c(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) c(i, j) = u(rng);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double s = 0;
      for (int i = 0; i < n; ++i) s += c(i, perm[i]);
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto a = solve_assignment(c);
    double got = 0;
    for (int i = 0; i < n; ++i) got += c(i, a[i]);
    EXPECT_NEAR(got, best, 1e-12);
  }
}

TEST(Association, GateAndMatch) {
  std::vector<Track> tracks{track_at(Vec3(0, 0, 0))};
  // Predicted spread is P + shape = 1.01 I, so a matching detection carries the same covariance.
  const auto m = associate({point(Vec3(0, 0, 0), 1.01)}, tracks, 0.8);
  ASSERT_EQ(m.matches.size(), 1u);
  EXPECT_EQ(m.matches[0], std::make_pair(0, 0));
  const auto far = associate({point(Vec3(30, 0, 0), 1.01)}, tracks, 0.8);
  EXPECT_TRUE(far.matches.empty());
  EXPECT_EQ(far.unmatched_detections, std::vector<int>{0});
  EXPECT_EQ(far.unmatched_tracks, std::vector<int>{0});
}

TEST(Tracker, EmptyFramePredictsAndCountsMiss) {
  Tracker tracker;
  scene::PoseEstimate pose;
  // Two hits confirm the track so a single miss does not drop it.
  for (int k = 0; k < 2; ++k) {
    pose.t = k / 15.0;
    tracker.step(scene::DetectionFrame{pose.t, {lidar_box(Vec3(5, 0, 0.7), Vec3(4, 2, 1.4), 0.0, pose.t)}}, pose);
  }
  ASSERT_EQ(tracker.active().size(), 1u);
  EXPECT_TRUE(tracker.active()[0].confirmed);
  pose.t = 2.0 / 15;
  tracker.step(scene::DetectionFrame{pose.t, {}}, pose);
  ASSERT_EQ(tracker.active().size(), 1u);
  EXPECT_EQ(tracker.active()[0].misses, 1);
}

TEST(Tracker, NoiselessStraightLineGivesOneAccurateTrack) {
  std::vector<scene::DetectionFrame> frames;
  std::vector<scene::PoseEstimate> poses;
  const Vec3 start(10, 5, 0.7), v(4, 0, 0);
  for (int k = 0; k < 100; ++k) {
    const double t = k / 15.0;
    frames.push_back({t, {lidar_box(start + v * t, Vec3(4.5, 1.8, 1.43), 0.0, t)}});
    scene::PoseEstimate p;
    p.t = t;
    poses.push_back(p);
  }
  const auto tracks = run_tracker(frames, poses);
  ASSERT_EQ(tracks.size(), 1u);
  // Velocity starts unknown, so allow two seconds for the filter to lock on.
  double se = 0;
  int n = 0;
  for (const auto& h : tracks[0].history) {
    if (h.t < 2.0) continue;
    se += (h.position - (start + v * h.t)).squaredNorm();
    ++n;
  }
  ASSERT_GT(n, 0);
  EXPECT_LT(std::sqrt(se / n), 0.01);
  EXPECT_LT((tracks[0].history.back().velocity - v).norm(), 0.01);
  EXPECT_EQ(tracks[0].dominant_truth(), 1);
}

TEST(Tracker, CarrierHeldThroughClosestApproach) {
  const auto cfg = scene::intersection_preset(10);
  const auto truth = scene::generate_truth(cfg);
  // Closest approach of platform and carrier.
  double t_close = 0, d_min = 1e9;
  for (double t = 0; t <= truth.duration; t += 0.01) {
    const double d = (truth.object(1).state_at(t).position - truth.platform_at(t).position).head<2>().norm();
    if (d < d_min) d_min = d, t_close = t;
  }
  int held = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto frames = scene::synthesize_detections(truth, SensorKind::Lidar, cfg.lidar, seed);
    const auto poses = scene::synthesize_pose(truth, PoseMode::Slam, cfg.pose, seed);
    for (const auto& t : run_tracker(frames, poses)) {
      if (t.dominant_truth() != 1) continue;
      if (t.history.front().t <= t_close - 2.0 && t.history.back().t >= t_close + 2.0) {
        ++held;
        break;
      }
    }
  }
  EXPECT_GE(held, 48);
}

TEST(Spd, RepairFloorsEigenvalues) {
  Eigen::MatrixXd m(2, 2);
  m << 1, 2, 2, 1;  // eigenvalues 3, -1
  EXPECT_FALSE(is_spd(m));
  const auto r = repair_spd(m, 1e-6);
  EXPECT_TRUE(is_spd(r));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
  EXPECT_NEAR(es.eigenvalues()(0), 1e-6, 1e-12);
  EXPECT_NEAR(es.eigenvalues()(1), 3.0, 1e-12);
}
