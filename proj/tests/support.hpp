#pragma once

// Small hand-built scenes shared by the unit tests.

#include "radattr/attribution.hpp"
#include "radattr/response.hpp"
#include "radattr/scene.hpp"
#include "radattr/tracking.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace radattr::testing {

/// Stationary platform at the origin facing +x, sampled every `dt`.
inline std::vector<scene::PoseEstimate> still_poses(double duration, double dt = 0.1) {
  std::vector<scene::PoseEstimate> out;
  for (int i = 0; i * dt <= duration + 1e-9; ++i) {
    scene::PoseEstimate p;
    p.t = i * dt;
    p.position = Vec3::Zero();
    out.push_back(p);
  }
  return out;
}

/// Track moving from `start` at constant velocity, sampled at 15 Hz.
inline tracking::Track line_track(int id, const Vec3& start, const Vec3& velocity, double t0, double t1,
                                  ObjectClass label = ObjectClass::Car, double pos_var = 1e-4) {
  tracking::Track t;
  t.id = id;
  t.label = label;
  t.confirmed = true;
  const double heading = velocity.head<2>().norm() > 0 ? std::atan2(velocity.y(), velocity.x()) : 0.0;
  for (int i = 0;; ++i) {
    const double time = t0 + i / 15.0;
    if (time > t1 + 1e-9) break;
    tracking::HistorySample h;
    h.t = time;
    h.position = start + velocity * (time - t0);
    h.position_cov = Mat3::Identity() * pos_var;
    h.velocity = velocity;
    h.det_count = i + 1;
    h.heading = heading;
    t.history.push_back(h);
  }
  t.x.head<3>() = t.history.back().position;
  t.x.tail<3>() = velocity;
  return t;
}

/// Empty window over [0, n*bin) with all counts zero.
inline attribution::EncounterWindow empty_window(int n, double bin = 0.25, double alarm_start = 0.0,
                                                 double alarm_stop = -1.0) {
  attribution::EncounterWindow w;
  w.bin = bin;
  w.num_bins = n;
  w.span_start = 0.0;
  w.span_stop = n * bin;
  w.alarm_start = alarm_start;
  w.alarm_stop = alarm_stop < 0 ? n * bin : alarm_stop;
  for (int i = 0; i < n; ++i) w.t0.push_back(i * bin);
  for (auto& c : w.counts) c.assign(n, 0.0);
  return w;
}

/// Geometry, response and transparent profiles for model evaluation.
struct Bench {
  response::DetectorArrayGeometry geometry = response::DetectorArrayGeometry::hexagonal();
  response::ResponseTable response = response::build_response(geometry, cs137_roi());
  response::AttenuationProfile transparent = response::transparent_profile(ObjectClass::Car);
  std::vector<scene::PoseEstimate> poses;

  explicit Bench(double duration) : poses(still_poses(duration)) {}

  attribution::ModelContext context() const {
    attribution::ModelContext ctx;
    ctx.response = &response;
    ctx.geometry = &geometry;
    ctx.poses = &poses;
    ctx.attenuation = [this](ObjectClass) -> const response::AttenuationProfile& { return transparent; };
    return ctx;
  }
};

/// Fills window counts with alpha g dt + b dt, optionally Poisson sampled.
inline void fill_counts(attribution::EncounterWindow& w, const attribution::TrackModel& m, double alpha,
                        const std::array<double, kNumDetectors>& b, std::mt19937_64* rng = nullptr) {
  for (int k = 0; k < kNumDetectors; ++k) {
    for (int i = 0; i < w.num_bins; ++i) {
      const double lambda = (alpha * m.g[k][i] + b[k]) * w.bin;
      if (rng) {
        w.counts[k][i] = static_cast<double>(std::poisson_distribution<long>(lambda)(*rng));
      } else {
        w.counts[k][i] = lambda;
      }
    }
  }
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("radattr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace radattr::testing
