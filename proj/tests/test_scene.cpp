#include "radattr/scene.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace radattr;
using namespace radattr::scene;

namespace {

const char* kMinimal = R"(format: radattr-scenario
version: 1
name: minimal
duration: 10
seeds: [1, 2]
platform:
  waypoints: [[0, 0], [100, 0]]
  speed: 4.47
objects:
  - id: 1
    label: car
    waypoints: [[50, -3.5], [-50, -3.5]]
    speed: 4.47
source:
  carrier: 1
  activity: 1.0e7
background:
  roi_rate: 40
)";

ScenarioConfig still_scene(double duration) {
  ScenarioConfig c;
  c.name = "still";
  c.duration = duration;
  c.platform.waypoints = {Vec2(0, 0), Vec2(1, 0)};
  c.platform.speed = 0.0;
  c.objects.push_back(ObjectSpec{1, ObjectClass::Car, {Vec2(20, 0), Vec2(21, 0)}, 0.0});
  c.source.carrier_id = 1;
  c.source.activity = 0.0;
  c.background.roi_rate.fill(10.0);
  return c;
}

}  // namespace

TEST(Scenario, MinimalConfigParses) {
  const ScenarioConfig c = parse_scenario(kMinimal);
  EXPECT_EQ(c.name, "minimal");
  EXPECT_DOUBLE_EQ(c.duration, 10.0);
  ASSERT_EQ(c.objects.size(), 1u);
  EXPECT_EQ(c.objects[0].label, ObjectClass::Car);
  EXPECT_EQ(c.source.carrier_id, 1);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2}));
  for (double b : c.background.roi_rate) EXPECT_DOUBLE_EQ(b, 40.0);
}

TEST(Scenario, DumpParseRoundTrip) {
  ScenarioConfig c = intersection_preset(10);
  c.seeds = {3, 4};
  c.analysis_placement = response::SourcePlacement::Isotropic;
  const std::string text = dump_scenario(c);
  const ScenarioConfig back = parse_scenario(text);
  EXPECT_EQ(dump_scenario(back), text);
  EXPECT_EQ(back.objects.size(), c.objects.size());
  EXPECT_EQ(back.analysis_placement, c.analysis_placement);
  EXPECT_DOUBLE_EQ(back.pose.ins_fix_interval, c.pose.ins_fix_interval);
}

TEST(Scenario, NegativeSpeedNamesTheField) {
  std::string text = kMinimal;
  text.replace(text.rfind("speed: 4.47"), 11, "speed: -1");
  try {
    parse_scenario(text);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("speed"), std::string::npos) << e.what();
  }
}

TEST(Scenario, ParseErrorsCarryLineAndKey) {
  std::string text = kMinimal;
  text.replace(text.find("duration: 10"), 12, "duration: ten");
  try {
    parse_scenario(text);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.key(), "duration");
    EXPECT_EQ(e.line(), 4);
  }
  EXPECT_THROW(parse_scenario("format: something-else\nversion: 1\n"), ValidationError);
  EXPECT_THROW(parse_scenario(std::string(kMinimal) + "version_extra: [\n"), ValidationError);
  EXPECT_THROW(load_scenario("/nonexistent/scenario.yaml"), ValidationError);
}

TEST(Scenario, UnknownCarrierRejected) {
  std::string text = kMinimal;
  text.replace(text.find("carrier: 1"), 10, "carrier: 9");
  EXPECT_THROW(parse_scenario(text), ValidationError);
}

TEST(Scenario, IntersectionPresetLayout) {
  const ScenarioConfig c = intersection_preset(10);
  ASSERT_EQ(c.objects.size(), 7u);
  int moving_vehicles = 0, parked = 0, people = 0;
  for (const auto& o : c.objects) {
    if (o.label == ObjectClass::Person) ++people;
    else if (o.speed > 0) ++moving_vehicles;
    else ++parked;
  }
  EXPECT_EQ(moving_vehicles, 3);  // carrier, follower, lead car
  EXPECT_EQ(parked, 2);
  EXPECT_EQ(people, 2);
  EXPECT_NEAR(c.platform.speed, 4.4704, 1e-12);
  EXPECT_NO_THROW(c.validate());
}

TEST(Scenario, TwentyMphHalvesTheClosePassDuration) {
  auto close_time = [](double mph) {
    const ScenarioConfig c = intersection_preset(mph);
    const GroundTruth truth = generate_truth(c);
    double inside = 0.0;
    const double dt = 0.001;
    for (double t = 0; t <= truth.duration; t += dt) {
      const Vec3 d = truth.object(c.source.carrier_id).state_at(t).position - truth.platform_at(t).position;
      if (d.head<2>().norm() < 10.0) inside += dt;
    }
    return inside;
  };
  const double slow = close_time(10), fast = close_time(20);
  EXPECT_NEAR(fast / slow, 0.5, 0.02);
}

TEST(Motion, ConstantSpeedDisplacement) {
  PathMotion m({Vec2(0, 0), Vec2(100, 0)}, 4.47);
  EXPECT_NEAR((m.position(10.0) - m.position(0.0)).norm(), 44.7, 1e-9);
  EXPECT_NEAR(m.heading(3.0), 0.0, 1e-15);
  EXPECT_NEAR(m.velocity(3.0).x(), 4.47, 1e-12);
  // Holds at the end.
  EXPECT_NEAR(m.position(1000.0).x(), 100.0, 1e-12);
}

TEST(Motion, StationaryHeadingFollowsFirstSegment) {
  PathMotion m({Vec2(0, 0), Vec2(0, 5)}, 0.0);
  EXPECT_EQ(m.position(7.0), Vec2(0, 0));
  EXPECT_NEAR(m.heading(7.0), kPi / 2, 1e-15);
  EXPECT_EQ(m.velocity(7.0), Vec2(0, 0));
}

TEST(Camera, PinholeRange) {
  EXPECT_NEAR(infer_range(100, 1000, 1.75), 17.5, 1e-12);
  EXPECT_NEAR(infer_range(1000, 1000, 1.75), 1.75, 1e-12);
  EXPECT_NEAR(infer_range(50, 1000, 1.43), 28.6, 1e-12);
  EXPECT_THROW(infer_range(0, 1000, 1.75), ValidationError);
}

TEST(Detections, NoiselessDetectionsEqualTruth) {
  const ScenarioConfig c = intersection_preset(10);
  const GroundTruth truth = generate_truth(c);
  SensorNoise noise = SensorNoise::noiseless();
  noise.p_detect = 1.0;
  const auto frames = synthesize_detections(truth, SensorKind::Lidar, noise, 5);
  int checked = 0;
  for (const auto& f : frames) {
    const PlatformState p = truth.platform_at(f.t);
    for (const auto& d : f.detections) {
      ASSERT_NE(d.truth_id, kNoTruth);
      const Vec3 world = platform_to_world(p, d.center);
      EXPECT_NEAR((world - truth.object(d.truth_id).state_at(f.t).position).norm(), 0.0, 1e-9);
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(Detections, VideoRangeNoiseScalesWithRange) {
  const int frames_wanted = 10000;
  const ScenarioConfig c = still_scene((frames_wanted - 1) / 15.0);
  const GroundTruth truth = generate_truth(c);
  SensorNoise noise = SensorNoise::noiseless();
  noise.p_detect = 1.0;
  noise.radial_fraction = 0.05;
  const auto frames = synthesize_detections(truth, SensorKind::Video, noise, 11);
  ASSERT_EQ(frames.size(), static_cast<std::size_t>(frames_wanted));
  double s = 0, s2 = 0;
  int n = 0;
  for (const auto& f : frames) {
    ASSERT_EQ(f.detections.size(), 1u);
    const double r = f.detections[0].center.head<2>().norm();
    s += r;
    s2 += r * r;
    ++n;
  }
  const double mean = s / n;
  const double sd = std::sqrt(s2 / n - mean * mean);
  EXPECT_NEAR(sd, 1.0, 0.05);
}

TEST(Detections, LidarFalsePositiveRate) {
  const ScenarioConfig c = still_scene(999 / 15.0);
  c.validate();
  const GroundTruth truth = generate_truth(c);
  SensorNoise noise = SensorNoise::noiseless();
  noise.false_positive_rate = 0.2;
  const auto frames = synthesize_detections(truth, SensorKind::Lidar, noise, 3);
  ASSERT_EQ(frames.size(), 1000u);
  int spurious = 0;
  for (const auto& f : frames) {
    for (const auto& d : f.detections) spurious += d.truth_id == kNoTruth;
  }
  EXPECT_NEAR(spurious, 200, 3 * std::sqrt(200.0));
}

TEST(Pose, NoiselessSlamEqualsTruth) {
  const ScenarioConfig c = intersection_preset(10);
  const GroundTruth truth = generate_truth(c);
  const auto poses = synthesize_pose(truth, PoseMode::Slam, PoseNoise::noiseless(), 1);
  for (const auto& p : poses) {
    const PlatformState s = truth.platform_at(p.t);
    EXPECT_NEAR((p.position - s.position).norm(), 0.0, 1e-12);
    EXPECT_NEAR(p.yaw, s.yaw, 1e-12);
  }
}

TEST(Pose, InsDriftFollowsRandomWalkLaw) {
  const ScenarioConfig c = still_scene(100.0);
  const GroundTruth truth = generate_truth(c);
  PoseNoise noise = PoseNoise::noiseless();
  noise.ins_drift_rate = 0.05;
  double sum2 = 0.0;
  const int runs = 1000;
  for (int seed = 1; seed <= runs; ++seed) {
    const auto poses = synthesize_pose(truth, PoseMode::Ins, noise, seed);
    sum2 += std::pow(poses.back().position.x() - truth.platform_at(poses.back().t).position.x(), 2);
  }
  // Per-axis standard deviation 0.05 * sqrt(100) = 0.5 m.
  EXPECT_NEAR(std::sqrt(sum2 / runs), 0.5, 0.05);
}

TEST(Pose, InterpolationTakesShortArc) {
  std::vector<PoseEstimate> poses(2);
  poses[0].t = 0;
  poses[0].yaw = kPi - 0.1;
  poses[1].t = 1;
  poses[1].yaw = -kPi + 0.1;
  poses[1].position = Vec3(2, 0, 0);
  const auto mid = interpolate_pose(poses, 0.5);
  EXPECT_NEAR(std::abs(mid.yaw), kPi, 1e-12);
  EXPECT_NEAR(mid.position.x(), 1.0, 1e-12);
  EXPECT_NEAR(interpolate_pose(poses, -3).position.x(), 0.0, 1e-15);
}

TEST(Counts, BackgroundOnlyMeanMatches) {
  ScenarioConfig c = still_scene(2500.0);
  const auto records = synthesize_background(c, 2500.0, 9);
  // 10^4 bins of 0.25 s per detector.
  double sum = 0;
  int n = 0;
  for (const auto& r : records) {
    if (r.detector != 0) continue;
    sum += static_cast<double>(r.roi_counts);
    ++n;
  }
  ASSERT_EQ(n, 10000);
  const double expected = 10.0 * 0.25;
  EXPECT_NEAR(sum / n, expected, 3 * std::sqrt(expected / n));
}

TEST(Counts, SpectrumAndRoiAgree) {
  const ScenarioConfig c = intersection_preset(10);
  const GroundTruth truth = generate_truth(c);
  const auto g = response::DetectorArrayGeometry::hexagonal();
  const auto resp = response::build_response(g, cs137_roi());
  const auto synth = synthesize_counts(truth, resp, carrier_attenuation(c), g, c, 4);
  ASSERT_EQ(synth.records.size(), synth.truth.size());
  for (const auto& r : synth.records) {
    ASSERT_EQ(r.spectrum.size(), static_cast<std::size_t>(kNumChannels));
    EXPECT_EQ(r.roi_counts, roi_counts(r.spectrum, cs137_roi()));
  }
}

TEST(Counts, SourceRateFollowsInverseSquare) {
  const auto g = response::DetectorArrayGeometry::hexagonal();
  response::ResponseTable flat;
  flat.roi = "cs137";
  for (auto& e : flat.eps) e.assign(flat.num_azimuths, 0.01);
  const auto transparent = response::transparent_profile(ObjectClass::Car);
  PlatformState p;
  p.position = Vec3::Zero();
  const Vec3 det = detector_position(g, p, 0);
  const Vec3 dir = g.crystals[0].normal;
  const double r1 = 10.0, r2 = 20.0;
  const double a1 = source_rate(flat, transparent, g, p, det + r1 * dir, 0.0, 1e7, 0);
  const double a2 = source_rate(flat, transparent, g, p, det + r2 * dir, 0.0, 1e7, 0);
  const double air = std::exp(-response::kMuAir * r1);
  EXPECT_NEAR(a1, 1e7 * 0.01 * air / (4 * kPi * r1 * r1), 1e-9 * a1);
  EXPECT_NEAR(a1 / a2, 4.0 * std::exp(response::kMuAir * (r2 - r1)), 1e-9);
}

TEST(Counts, SameSeedSameStreams) {
  const ScenarioConfig c = intersection_preset(20);
  const GroundTruth truth = generate_truth(c);
  const auto g = response::DetectorArrayGeometry::hexagonal();
  const auto resp = response::build_response(g, cs137_roi());
  const auto a = synthesize_counts(truth, resp, carrier_attenuation(c), g, c, 8);
  const auto b = synthesize_counts(truth, resp, carrier_attenuation(c), g, c, 8);
  const auto d = synthesize_counts(truth, resp, carrier_attenuation(c), g, c, 9);
  ASSERT_EQ(a.records.size(), b.records.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].spectrum, b.records[i].spectrum);
    differs = differs || a.records[i].spectrum != d.records[i].spectrum;
  }
  EXPECT_TRUE(differs);
}
