#include "radattr/scene.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace radattr::scene {

namespace {

constexpr double kPhotopeakKev = 661.657;
constexpr double kPhotopeakFwhm = 0.075;

// Independent random streams per generator kind.
enum class Stream : std::uint32_t { Detections = 1, Pose = 2, Counts = 3, Background = 4 };

std::mt19937_64 make_rng(std::uint64_t seed, Stream stream, std::uint32_t sub = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), sub};
  return std::mt19937_64(seq);
}

Vec2 bearing_unit(double a) { return {std::cos(a), std::sin(a)}; }

Mat3 yaw_rotation(double yaw) {
  return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
}

}  // namespace

SensorNoise SensorNoise::defaults(SensorKind sensor) {
  SensorNoise n;
  if (sensor == SensorKind::Video) {
    n.p_detect = 0.90;
    n.radial_fraction = 0.05;
    n.transverse_sigma = 0.15;
    n.vertical_sigma = 0.10;
    n.extent_sigma = 0.05;
    n.max_range = 40.0;
  } else {
    n.p_detect = 0.95;
    n.transverse_sigma = 0.08;
    n.vertical_sigma = 0.05;
    n.heading_sigma = 0.05;
    n.extent_sigma = 0.03;
    n.false_positive_rate = 0.2;
    n.max_range = 50.0;
  }
  return n;
}

SensorNoise SensorNoise::noiseless() {
  SensorNoise n;
  n.p_detect = 1.0;
  n.max_range = 1e9;
  return n;
}

PoseNoise PoseNoise::noiseless() {
  PoseNoise n;
  n.slam_position_sigma = 0.0;
  n.slam_yaw_sigma = 0.0;
  n.ins_drift_rate = 0.0;
  n.ins_position_jitter_per_speed = 0.0;
  n.ins_yaw_jitter_per_speed = 0.0;
  n.timestamp_jitter = 0.0;
  return n;
}

const ObjectSpec& ScenarioConfig::object(int id) const {
  for (const auto& o : objects) {
    if (o.id == id) return o;
  }
  throw ValidationError("no object with id " + std::to_string(id));
}

void ScenarioConfig::validate() const {
  if (!(duration > 0.0)) throw ValidationError("duration: must be > 0");
  if (!(rates.count_bin > 0.0)) throw ValidationError("count_bin: must be > 0");
  if (!(rates.detection_hz > 0.0) || !(rates.counts_hz > 0.0) || !(rates.pose_hz > 0.0)) {
    throw ValidationError("rates: must be > 0");
  }
  const double sub = rates.count_bin * rates.counts_hz;
  if (std::abs(sub - std::round(sub)) > 1e-9 || std::round(sub) < 1.0) {
    throw ValidationError("count_bin: must be a whole number of count packets");
  }
  if (!(platform.speed >= 0.0)) throw ValidationError("platform.speed: must be >= 0");
  if (platform.waypoints.empty()) throw ValidationError("platform.waypoints: at least one waypoint required");
  std::set<int> ids;
  for (const auto& o : objects) {
    if (!(o.speed >= 0.0)) throw ValidationError("speed: object " + std::to_string(o.id) + " has negative speed");
    if (o.waypoints.empty()) throw ValidationError("waypoints: object " + std::to_string(o.id) + " has none");
    if (!ids.insert(o.id).second) throw ValidationError("id: duplicate object id " + std::to_string(o.id));
  }
  if (!ids.contains(source.carrier_id)) {
    throw ValidationError("source.carrier: id " + std::to_string(source.carrier_id) + " is not an object");
  }
  if (!(source.activity >= 0.0)) throw ValidationError("source.activity: must be >= 0");
  for (const auto& layer : source.shielding) {
    if (layer.thickness < 0.0) throw ValidationError("source.shielding: thickness must be >= 0");
  }
  for (double b : background.roi_rate) {
    if (!(b >= 0.0)) throw ValidationError("background.roi_rate: must be >= 0");
  }
  for (const auto* n : {&video, &lidar}) {
    if (n->p_detect < 0.0 || n->p_detect > 1.0) throw ValidationError("noise.p_detect: must be in [0,1]");
    if (n->false_positive_rate < 0.0) throw ValidationError("noise.false_positive_rate: must be >= 0");
  }
  (void)roi_by_id(source.roi);
}

ScenarioConfig intersection_preset(double speed_mph) {
  const double v = speed_mph * kMph;
  const double t_meet = 6.0;
  const double lane = 3.5;
  ScenarioConfig c;
  c.name = "intersection-" + std::to_string(static_cast<int>(std::lround(speed_mph))) + "mph";
  c.duration = 12.0;
  c.seeds = {1};
  c.platform.speed = v;
  c.platform.waypoints = {{-v * t_meet, 0.0}, {v * t_meet + 60.0, 0.0}};

  auto add = [&](int id, ObjectClass label, std::vector<Vec2> wp, double speed) {
    c.objects.push_back(ObjectSpec{id, label, std::move(wp), speed});
  };
  // Carrier in the opposing lane, meeting the platform at the intersection center.
  add(1, ObjectClass::Car, {{v * t_meet, -lane}, {-v * t_meet - 60.0, -lane}}, v);
  // Follower 12 m behind the carrier.
  add(2, ObjectClass::Car, {{v * t_meet + 12.0, -lane}, {-v * t_meet - 60.0, -lane}}, v);
  // Lead car 15 m ahead of the platform in its lane.
  add(3, ObjectClass::Car, {{-v * t_meet + 15.0, 0.0}, {v * t_meet + 80.0, 0.0}}, v);
  // Parked cars, perpendicular to the platform's direction of travel.
  add(4, ObjectClass::Car, {{8.0, 7.5}, {8.0, 8.5}}, 0.0);
  add(5, ObjectClass::Car, {{-9.0, -9.5}, {-9.0, -10.5}}, 0.0);
  // Pedestrians on both sidewalks walking parallel to the road.
  add(6, ObjectClass::Person, {{-6.0, 6.0}, {30.0, 6.0}}, 1.4);
  add(7, ObjectClass::Person, {{7.0, -7.5}, {-30.0, -7.5}}, 1.3);

  c.source.carrier_id = 1;
  // 1.87 mCi Cs-137, 0.851 photons per decay at 662 keV.
  c.source.activity = 1.87e-3 * 3.7e10 * 0.851;
  c.source.roi = "cs137";
  c.source.shielding = {response::make_shielding("lead", 0.02)};
  c.source.offset = 1.3;
  c.source.placement = response::SourcePlacement::Trunk;
  c.background.roi_rate.fill(40.0);
  return c;
}

PathMotion::PathMotion(std::vector<Vec2> waypoints, double speed)
    : waypoints_(std::move(waypoints)), speed_(speed) {
  cumulative_.assign(1, 0.0);
  for (std::size_t i = 1; i < waypoints_.size(); ++i) {
    cumulative_.push_back(cumulative_.back() + (waypoints_[i] - waypoints_[i - 1]).norm());
  }
}

std::size_t PathMotion::segment_at(double s) const {
  if (waypoints_.size() < 2) return 0;
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t seg = static_cast<std::size_t>(std::distance(cumulative_.begin(), it));
  seg = seg == 0 ? 0 : seg - 1;
  // Skip zero-length segments and clamp to the last real one.
  seg = std::min(seg, waypoints_.size() - 2);
  while (seg > 0 && cumulative_[seg + 1] - cumulative_[seg] <= 0.0) --seg;
  return seg;
}

Vec2 PathMotion::position(double t) const {
  if (waypoints_.size() < 2) return waypoints_.empty() ? Vec2::Zero() : waypoints_.front();
  const double s = std::clamp(speed_ * std::max(t, 0.0), 0.0, length());
  const std::size_t seg = segment_at(s);
  const double seg_len = cumulative_[seg + 1] - cumulative_[seg];
  if (seg_len <= 0.0) return waypoints_[seg];
  const double f = (s - cumulative_[seg]) / seg_len;
  return waypoints_[seg] + f * (waypoints_[seg + 1] - waypoints_[seg]);
}

Vec2 PathMotion::velocity(double t) const {
  if (waypoints_.size() < 2 || speed_ <= 0.0) return Vec2::Zero();
  const double s = speed_ * std::max(t, 0.0);
  if (s >= length()) return Vec2::Zero();
  return speed_ * bearing_unit(heading(t));
}

double PathMotion::heading(double t) const {
  if (waypoints_.size() < 2) return 0.0;
  const double s = std::clamp(speed_ * std::max(t, 0.0), 0.0, length());
  const std::size_t seg = segment_at(s);
  const Vec2 d = waypoints_[seg + 1] - waypoints_[seg];
  if (d.squaredNorm() <= 0.0) return 0.0;
  return std::atan2(d.y(), d.x());
}

ObjectState ObjectTrajectory::state_at(double t) const {
  const Vec2 p = motion.position(t);
  const Vec2 v = motion.velocity(t);
  return ObjectState{t, Vec3(p.x(), p.y(), 0.5 * extent.z()), Vec3(v.x(), v.y(), 0.0), motion.heading(t)};
}

const ObjectTrajectory& GroundTruth::object(int id) const {
  for (const auto& o : objects) {
    if (o.id == id) return o;
  }
  throw ValidationError("no truth trajectory for object " + std::to_string(id));
}

PlatformState GroundTruth::platform_at(double t) const {
  const Vec2 p = platform_motion.position(t);
  return PlatformState{t, Vec3(p.x(), p.y(), 0.0), platform_motion.heading(t), 0.0, 0.0,
                       platform_motion.velocity(t).norm()};
}

GroundTruth generate_truth(const ScenarioConfig& config) {
  config.validate();
  GroundTruth truth;
  truth.duration = config.duration;
  truth.platform_motion = PathMotion(config.platform.waypoints, config.platform.speed);
  const double det_dt = 1.0 / config.rates.detection_hz;
  const auto n_frames = static_cast<std::size_t>(std::floor(config.duration / det_dt + 1e-9)) + 1;
  for (const auto& spec : config.objects) {
    ObjectTrajectory traj;
    traj.id = spec.id;
    traj.label = spec.label;
    traj.extent = nominal_extent(spec.label);
    traj.extent.z() = nominal_height(spec.label);
    traj.motion = PathMotion(spec.waypoints, spec.speed);
    traj.samples.reserve(n_frames);
    for (std::size_t k = 0; k < n_frames; ++k) traj.samples.push_back(traj.state_at(k * det_dt));
    truth.objects.push_back(std::move(traj));
  }
  const double pose_dt = 1.0 / config.rates.counts_hz;
  const auto n_pose = static_cast<std::size_t>(std::floor(config.duration / pose_dt + 1e-9)) + 1;
  truth.platform.reserve(n_pose);
  for (std::size_t k = 0; k < n_pose; ++k) truth.platform.push_back(truth.platform_at(k * pose_dt));
  return truth;
}

double infer_range(double pixel_height, double focal_length, double nominal_height_m) {
  if (!(pixel_height > 0.0) || !(focal_length > 0.0) || !(nominal_height_m > 0.0)) {
    throw ValidationError("infer_range: inputs must be positive");
  }
  return focal_length * nominal_height_m / pixel_height;
}

Vec3 platform_to_world(const PoseEstimate& pose, const Vec3& p) {
  return pose.position + yaw_rotation(pose.yaw) * p;
}

Vec3 platform_to_world(const PlatformState& pose, const Vec3& p) {
  return pose.position + yaw_rotation(pose.yaw) * p;
}

std::vector<DetectionFrame> synthesize_detections(const GroundTruth& truth, SensorKind sensor,
                                                  const SensorNoise& noise, std::uint64_t seed,
                                                  double detection_hz) {
  auto rng = make_rng(seed, Stream::Detections, sensor == SensorKind::Video ? 0u : 1u);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double dt = 1.0 / detection_hz;
  const auto n_frames = static_cast<std::size_t>(std::floor(truth.duration / dt + 1e-9)) + 1;
  std::vector<DetectionFrame> frames;
  frames.reserve(n_frames);
  for (std::size_t k = 0; k < n_frames; ++k) {
    const double t = k * dt;
    DetectionFrame frame{t, {}};
    const PlatformState platform = truth.platform_at(t);
    const Mat3 to_platform = yaw_rotation(platform.yaw).transpose();
    for (const auto& obj : truth.objects) {
      const ObjectState s = obj.state_at(t);
      const Vec3 rel = to_platform * (s.position - platform.position);
      const double range = rel.head<2>().norm();
      if (range > noise.max_range || range < 1.0) continue;
      if (unit(rng) >= noise.p_detect) continue;
      SyntheticDetection d;
      d.t = t;
      d.sensor = sensor;
      d.label = obj.label;
      d.truth_id = obj.id;
      d.confidence = 0.6 + 0.4 * unit(rng);
      const Vec2 radial = rel.head<2>() / range;
      const Vec2 transverse(-radial.y(), radial.x());
      double measured_range = range;
      if (sensor == SensorKind::Video) {
        // Range comes from the box height; a relative box-height error maps to
        // a range error proportional to range.
        const double true_height = obj.extent.z();
        const double scale = std::max(0.05, 1.0 + noise.radial_fraction * gauss(rng));
        const double pixel_height = noise.focal_length_px * true_height / (range * scale);
        measured_range = infer_range(pixel_height, noise.focal_length_px, nominal_height(obj.label));
      }
      const double lateral = noise.transverse_sigma * gauss(rng);
      const Vec2 xy = measured_range * radial + lateral * transverse;
      d.center = Vec3(xy.x(), xy.y(), rel.z() + noise.vertical_sigma * gauss(rng));
      if (sensor == SensorKind::Lidar) {
        // Extra lidar noise along the range direction.
        d.center.head<2>() += noise.transverse_sigma * gauss(rng) * radial;
        d.heading = wrap_angle(s.heading - platform.yaw + noise.heading_sigma * gauss(rng));
      }
      for (int a = 0; a < 3; ++a) {
        d.extent[a] = obj.extent[a] * std::max(0.2, 1.0 + noise.extent_sigma * gauss(rng));
      }
      frame.detections.push_back(d);
    }
    if (sensor == SensorKind::Lidar && noise.false_positive_rate > 0.0) {
      std::poisson_distribution<int> n_fp(noise.false_positive_rate);
      const int count = n_fp(rng);
      for (int i = 0; i < count; ++i) {
        SyntheticDetection d;
        d.t = t;
        d.sensor = sensor;
        d.label = unit(rng) < 0.5 ? ObjectClass::Car : ObjectClass::Person;
        d.truth_id = kNoTruth;
        d.confidence = 0.3 + 0.4 * unit(rng);
        const double r = 3.0 + (std::min(noise.max_range, 30.0) - 3.0) * unit(rng);
        const double b = kTwoPi * unit(rng);
        d.extent = nominal_extent(d.label);
        d.center = Vec3(r * std::cos(b), r * std::sin(b), 0.5 * d.extent.z());
        d.heading = wrap_angle(kTwoPi * unit(rng));
        frame.detections.push_back(d);
      }
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

std::vector<PoseEstimate> synthesize_pose(const GroundTruth& truth, PoseMode mode,
                                          const PoseNoise& noise, std::uint64_t seed, double pose_hz) {
  auto rng = make_rng(seed, Stream::Pose, mode == PoseMode::Slam ? 0u : 1u);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double dt = 1.0 / pose_hz;
  const auto n = static_cast<std::size_t>(std::floor(truth.duration / dt + 1e-9)) + 1;
  std::vector<PoseEstimate> poses;
  poses.reserve(n);
  Vec2 drift = Vec2::Zero();
  Vec3 jitter = Vec3::Zero();  // x, y, yaw
  long last_fix = -1;
  double prev_t = -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    double t = k * dt;
    if (k > 0 && noise.timestamp_jitter > 0.0) {
      t += noise.timestamp_jitter * unit(rng);
    }
    t = std::clamp(t, prev_t + 1e-6, truth.duration);
    const PlatformState s = truth.platform_at(t);
    PoseEstimate p;
    p.t = t;
    p.mode = mode;
    p.position = s.position;
    p.yaw = s.yaw;
    if (mode == PoseMode::Slam) {
      p.position.x() += noise.slam_position_sigma * gauss(rng);
      p.position.y() += noise.slam_position_sigma * gauss(rng);
      p.yaw += noise.slam_yaw_sigma * gauss(rng);
    } else {
      if (k > 0) {
        const double step = noise.ins_drift_rate * std::sqrt(t - prev_t);
        drift.x() += step * gauss(rng);
        drift.y() += step * gauss(rng);
      }
      // The filtered solution is re-anchored at each satellite fix and holds
      // its error until the next one, so the jitter is piecewise constant.
      const long fix = noise.ins_fix_interval > 0.0 ? static_cast<long>(std::floor(t / noise.ins_fix_interval))
                                                    : static_cast<long>(k);
      if (fix != last_fix) {
        for (int a = 0; a < 2; ++a) jitter[a] = noise.ins_position_jitter_per_speed * s.speed * gauss(rng);
        jitter[2] = noise.ins_yaw_jitter_per_speed * s.speed * gauss(rng);
        last_fix = fix;
      }
      p.position.x() += drift.x() + jitter[0];
      p.position.y() += drift.y() + jitter[1];
      p.yaw += jitter[2];
    }
    p.yaw = wrap_angle(p.yaw);
    poses.push_back(p);
    prev_t = t;
  }
  return poses;
}

PoseEstimate interpolate_pose(const std::vector<PoseEstimate>& poses, double t) {
  if (poses.empty()) throw MissingInputError("no pose estimates");
  if (t <= poses.front().t) return poses.front();
  if (t >= poses.back().t) return poses.back();
  auto it = std::upper_bound(poses.begin(), poses.end(), t,
                             [](double value, const PoseEstimate& p) { return value < p.t; });
  const PoseEstimate& b = *it;
  const PoseEstimate& a = *(it - 1);
  const double f = (t - a.t) / (b.t - a.t);
  PoseEstimate out = a;
  out.t = t;
  out.position = a.position + f * (b.position - a.position);
  out.yaw = wrap_angle(a.yaw + f * wrap_angle(b.yaw - a.yaw));
  out.pitch = a.pitch + f * (b.pitch - a.pitch);
  out.roll = a.roll + f * (b.roll - a.roll);
  return out;
}

Vec3 source_position(const GroundTruth& truth, const SourceSpec& source, double t) {
  const ObjectState s = truth.object(source.carrier_id).state_at(t);
  return s.position - source.offset * Vec3(std::cos(s.heading), std::sin(s.heading), 0.0);
}

Vec3 detector_position(const response::DetectorArrayGeometry& geometry, const PlatformState& pose, int detector) {
  return platform_to_world(pose, geometry.crystals.at(detector).offset);
}

double geometric_factor(const response::ResponseTable& response, const response::AttenuationProfile& attenuation,
                        const response::DetectorArrayGeometry& geometry, const Vec3& platform_position,
                        double platform_yaw, const Vec3& source, std::optional<double> source_heading, int detector) {
  const Mat3 rot = yaw_rotation(platform_yaw);
  const Vec3 det = platform_position + rot * geometry.crystals[detector].offset;
  const Vec3 center = platform_position + Vec3(0.0, 0.0, geometry.elevation);
  const Vec3 from_center = rot.transpose() * (source - center);
  const double azimuth = std::atan2(from_center.y(), from_center.x());
  const double elevation = std::atan2(from_center.z(), from_center.head<2>().norm());
  const Vec3 to_det = det - source;
  const double r2 = to_det.squaredNorm();
  const double r = std::sqrt(r2);
  const double eps = response::lookup_eps(response, azimuth, elevation, detector);
  const double att = source_heading
                         ? response::attenuation_at(attenuation, std::atan2(to_det.y(), to_det.x()) - *source_heading)
                         : attenuation.mean();
  return eps * att * std::exp(-response::kMuAir * r) / (4.0 * kPi * r2);
}

double source_rate(const response::ResponseTable& response, const response::AttenuationProfile& attenuation,
                   const response::DetectorArrayGeometry& geometry, const PlatformState& platform,
                   const Vec3& source, double source_heading, double activity, int detector) {
  return activity * geometric_factor(response, attenuation, geometry, platform.position, platform.yaw, source,
                                     source_heading, detector);
}

std::vector<double> background_shape(const std::string& shape_id, const Roi& roi) {
  if (shape_id != "default") throw ValidationError("unknown background shape '" + shape_id + "'");
  std::vector<double> shape(kNumChannels);
  for (int c = 0; c < kNumChannels; ++c) {
    const double e = channel_center_kev(c);
    // Falling continuum with a soft low-energy threshold.
    const double threshold = 1.0 / (1.0 + std::exp(-(e - 40.0) / 8.0));
    shape[c] = threshold * (std::exp(-e / 250.0) + 0.15 * std::exp(-e / 1200.0)) + 1e-4;
  }
  double roi_sum = 0.0;
  for (int c = roi.first_channel; c <= roi.last_channel; ++c) roi_sum += shape[c];
  for (double& v : shape) v /= roi_sum;
  return shape;
}

std::vector<double> photopeak_shape(double energy_kev, double fwhm_fraction, const Roi& roi) {
  const double sigma = fwhm_fraction * energy_kev / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  std::vector<double> shape(kNumChannels);
  auto cdf = [&](double e) { return 0.5 * std::erfc(-(e - energy_kev) / (sigma * std::sqrt(2.0))); };
  for (int c = 0; c < kNumChannels; ++c) {
    shape[c] = cdf(channel_low_kev(c + 1)) - cdf(channel_low_kev(c));
  }
  double roi_sum = 0.0;
  for (int c = roi.first_channel; c <= roi.last_channel; ++c) roi_sum += shape[c];
  for (double& v : shape) v /= roi_sum;
  return shape;
}

std::vector<CountRecord> synthesize_background(const ScenarioConfig& config, double duration, std::uint64_t seed) {
  const Roi roi = roi_by_id(config.source.roi);
  const auto shape = background_shape(config.background.shape, roi);
  const double bin = config.rates.count_bin;
  const auto n_bins = static_cast<std::size_t>(std::floor(duration / bin + 1e-9));
  auto rng = make_rng(seed, Stream::Background);
  std::vector<CountRecord> out;
  out.reserve(n_bins * kNumDetectors);
  for (std::size_t b = 0; b < n_bins; ++b) {
    for (int k = 0; k < kNumDetectors; ++k) {
      CountRecord r{k, b * bin, bin, 0, Spectrum(kNumChannels, 0)};
      for (int c = 0; c < kNumChannels; ++c) {
        const double mean = config.background.roi_rate[k] * bin * shape[c];
        if (mean > 0.0) r.spectrum[c] = std::poisson_distribution<std::int64_t>(mean)(rng);
      }
      r.roi_counts = roi_counts(r.spectrum, roi);
      out.push_back(std::move(r));
    }
  }
  return out;
}

response::AttenuationProfile carrier_attenuation(const ScenarioConfig& config) {
  return response::build_attenuation_profile(config.object(config.source.carrier_id).label,
                                             config.source.shielding, config.source.placement);
}

CountSynthesis synthesize_counts(const GroundTruth& truth, const response::ResponseTable& response,
                                 const response::AttenuationProfile& attenuation,
                                 const response::DetectorArrayGeometry& geometry,
                                 const ScenarioConfig& config, std::uint64_t seed) {
  for (const auto& eps : response.eps) {
    if (static_cast<int>(eps.size()) != response.num_azimuths || eps.empty()) {
      throw ValidationError("response table does not cover all detectors and azimuths");
    }
  }
  if (attenuation.factors.empty()) throw ValidationError("attenuation profile is empty");
  const Roi roi = roi_by_id(config.source.roi);
  const auto bg_shape = background_shape(config.background.shape, roi);
  const auto peak_shape = photopeak_shape(kPhotopeakKev, kPhotopeakFwhm, roi);
  const double bin = config.rates.count_bin;
  const double packet = 1.0 / config.rates.counts_hz;
  const int packets_per_bin = static_cast<int>(std::lround(bin / packet));
  const auto n_bins = static_cast<std::size_t>(std::floor(truth.duration / bin + 1e-9));

  auto rng = make_rng(seed, Stream::Counts);
  CountSynthesis out;
  out.records.reserve(n_bins * kNumDetectors);
  out.truth.reserve(n_bins * kNumDetectors);
  std::vector<double> channel_mean(kNumChannels);
  for (std::size_t b = 0; b < n_bins; ++b) {
    const double t0 = b * bin;
    std::array<CountRecord, kNumDetectors> recs;
    std::array<BinTruth, kNumDetectors> info{};
    for (int k = 0; k < kNumDetectors; ++k) {
      recs[k].detector = k;
      recs[k].t0 = t0;
      recs[k].dt = bin;
      recs[k].spectrum.assign(kNumChannels, 0);
    }
    for (int p = 0; p < packets_per_bin; ++p) {
      const double t = t0 + (p + 0.5) * packet;
      const PlatformState platform = truth.platform_at(t);
      const Vec3 src = source_position(truth, config.source, t);
      const double heading = truth.object(config.source.carrier_id).motion.heading(t);
      for (int k = 0; k < kNumDetectors; ++k) {
        const double s_mean =
            config.source.activity > 0.0
                ? source_rate(response, attenuation, geometry, platform, src, heading, config.source.activity, k) * packet
                : 0.0;
        const double b_mean = config.background.roi_rate[k] * packet;
        info[k].expected_source += s_mean;
        info[k].expected_roi += s_mean + b_mean;
        for (int c = 0; c < kNumChannels; ++c) {
          const double mean = s_mean * peak_shape[c] + b_mean * bg_shape[c];
          if (mean > 0.0) {
            std::poisson_distribution<std::int64_t> draw(mean);
            recs[k].spectrum[c] += draw(rng);
          }
        }
      }
    }
    const PlatformState mid = truth.platform_at(t0 + 0.5 * bin);
    const Vec3 src_mid = source_position(truth, config.source, t0 + 0.5 * bin);
    for (int k = 0; k < kNumDetectors; ++k) {
      recs[k].roi_counts = roi_counts(recs[k].spectrum, roi);
      info[k].distance = (detector_position(geometry, mid, k) - src_mid).norm();
      out.records.push_back(std::move(recs[k]));
      out.truth.push_back(info[k]);
    }
  }
  return out;
}

}  // namespace radattr::scene
