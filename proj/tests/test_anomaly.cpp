#include "radattr/anomaly.hpp"
#include "radattr/pipeline.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

using namespace radattr;
using namespace radattr::anomaly;

namespace {

std::vector<double> default_shape() { return scene::background_shape("default", cs137_roi()); }

std::vector<double> draw(const std::vector<double>& mean, std::mt19937_64& rng) {
  std::vector<double> out(mean.size());
  for (std::size_t c = 0; c < mean.size(); ++c) {
    out[c] = mean[c] > 0 ? static_cast<double>(std::poisson_distribution<long>(mean[c])(rng)) : 0.0;
  }
  return out;
}

}  // namespace

TEST(AnomalyValue, ExactShapeAndScalingGiveZero) {
  const auto shape = default_shape();
  std::vector<double> obs(shape.size());
  for (std::size_t c = 0; c < shape.size(); ++c) obs[c] = 500.0 * shape[c];
  EXPECT_NEAR(anomaly_value(obs, shape), 0.0, 1e-9);
  for (auto& v : obs) v *= 7.0;
  EXPECT_NEAR(anomaly_value(obs, shape), 0.0, 1e-8);
  const std::vector<double> empty(shape.size(), 0.0);
  EXPECT_EQ(anomaly_value(empty, shape), 0.0);
}

TEST(AnomalyValue, PhotopeakInjectionExceedsNullPercentile) {
  const auto shape = default_shape();
  const double total = std::accumulate(shape.begin(), shape.end(), 0.0);
  std::vector<double> mean(shape.size());
  for (std::size_t c = 0; c < shape.size(); ++c) mean[c] = 3000.0 * shape[c] / total;
  std::mt19937_64 rng(5);
  std::vector<double> null;
  for (int i = 0; i < 2000; ++i) null.push_back(anomaly_value(draw(mean, rng), shape));
  std::sort(null.begin(), null.end());
  const double p99 = null[static_cast<std::size_t>(0.99 * null.size())];
  const auto peak = scene::photopeak_shape(661.657, 0.07, cs137_roi());
  const double peak_total = std::accumulate(peak.begin(), peak.end(), 0.0);
  // Both sides carry Poisson noise; a 200-count photopeak should clear the null tail almost every time.
  std::vector<double> with_peak(shape.size());
  for (std::size_t c = 0; c < shape.size(); ++c) with_peak[c] = mean[c] + 200.0 * peak[c] / peak_total;
  int above = 0;
  for (int i = 0; i < 200; ++i) above += anomaly_value(draw(with_peak, rng), shape) > p99;
  EXPECT_GE(above, 180);
}

TEST(Alarms, InfiniteThresholdNeverFires) {
  auto cfg = scene::intersection_preset(10);
  const auto records = scene::synthesize_background(cfg, 120.0, 2);
  const auto bg = calibrate_background(records, "cs137");
  EXPECT_TRUE(detect_alarms(records, bg, AlarmConfig{2.0, std::numeric_limits<double>::infinity()}).empty());
}

TEST(Alarms, CalibratedNullRate) {
  const auto cfg = scene::intersection_preset(10);
  const auto cal = pipeline::calibrate(cfg);
  EXPECT_NEAR(cal.far, 1.0 / 600.0, 1e-15);
  const auto fresh = scene::synthesize_background(cfg, 600.0, 424242);
  const auto alarms = merge_alarms(detect_alarms(fresh, cal.background, AlarmConfig{2.0, cal.threshold}));
  EXPECT_LE(alarms.size(), 4u);
}

TEST(Alarms, PresetPassAlarmsAtClosestApproach) {
  const auto cfg = scene::intersection_preset(10);
  const auto cal = pipeline::calibrate(cfg);
  const auto analysis = pipeline::make_analysis(cfg, cal);
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto sim = pipeline::simulate(cfg, analysis.response, analysis.geometry, SensorKind::Lidar,
                                        PoseMode::Slam, seed);
    double t_close = 0, d_min = 1e9;
    for (double t = 0; t <= sim.truth.duration; t += 0.01) {
      const double d = (scene::source_position(sim.truth, cfg.source, t) - sim.truth.platform_at(t).position).norm();
      if (d < d_min) d_min = d, t_close = t;
    }
    for (const auto& e : merge_alarms(pipeline::detect(analysis, sim.counts))) {
      if (e.start - 0.5 <= t_close && t_close <= e.stop + 0.5) {
        ++hits;
        break;
      }
    }
  }
  EXPECT_GE(hits, 48);
}

TEST(Alarms, MergeOverlappingAndTouching) {
  std::vector<AlarmEvent> ev{{0, 1.0, 2.0, "cs137", 5}, {3, 1.5, 3.0, "cs137", 9}, {4, 3.0, 4.0, "cs137", 7},
                             {1, 6.0, 7.0, "cs137", 4}};
  const auto m = merge_alarms(ev);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_DOUBLE_EQ(m[0].start, 1.0);
  EXPECT_DOUBLE_EQ(m[0].stop, 4.0);
  EXPECT_DOUBLE_EQ(m[0].peak, 9.0);
  EXPECT_EQ(m[0].detectors, (std::vector<int>{0, 3, 4}));
  EXPECT_DOUBLE_EQ(m[1].start, 6.0);
}

TEST(Alarms, SeriesAlignsWithWindowEnd) {
  auto cfg = scene::intersection_preset(10);
  const auto records = scene::synthesize_background(cfg, 30.0, 6);
  const auto bg = calibrate_background(records, "cs137");
  const auto series = anomaly_series(records, bg, 2.0);
  for (int j = 0; j < 7; ++j) EXPECT_LT(series[0][j], 0.0);
  EXPECT_GE(series[0][7], 0.0);
}

TEST(Background, CalibrationAndRoundTrip) {
  auto cfg = scene::intersection_preset(10);
  const auto records = scene::synthesize_background(cfg, 1000.0, 8);
  const auto bg = calibrate_background(records, "cs137");
  for (int k = 0; k < kNumDetectors; ++k) EXPECT_NEAR(bg.roi_rate[k], 40.0, 4 * std::sqrt(40.0 / 1000.0));
  std::stringstream ss;
  write_background(ss, bg, 123.5, 1.0 / 600);
  double thr = 0, far = 0;
  const auto back = read_background(ss, &thr, &far);
  EXPECT_EQ(thr, 123.5);
  EXPECT_EQ(far, 1.0 / 600);
  for (int k = 0; k < kNumDetectors; ++k) {
    EXPECT_EQ(back.spectrum[k], bg.spectrum[k]);
    EXPECT_EQ(back.roi_rate[k], bg.roi_rate[k]);
  }
  std::stringstream bad("garbage\n");
  EXPECT_THROW(read_background(bad), ValidationError);
}

TEST(Background, AlarmLogRoundTrip) {
  std::vector<AlarmEvent> ev{{2, 1.25, 3.5, "cs137", 250.125}, {5, 4.0, 6.0, "cs137", 1e3}};
  std::stringstream ss;
  write_alarms(ss, ev);
  const auto back = read_alarms(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].detector, 5);
  EXPECT_EQ(back[0].peak, 250.125);
  EXPECT_EQ(back[1].isotope, "cs137");
}
