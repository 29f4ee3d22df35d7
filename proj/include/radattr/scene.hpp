#pragma once

// Synthetic drive-by scenarios: ground truth, detections, platform poses and
// per-detector gamma-ray counts.

#include "radattr/response.hpp"
#include "radattr/spectrum.hpp"
#include "radattr/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace radattr::scene {

inline constexpr int kScenarioFormatVersion = 1;
inline constexpr double kMph = 0.44704;  // m/s

struct ObjectSpec {
  int id = 0;
  ObjectClass label = ObjectClass::Car;
  std::vector<Vec2> waypoints;
  double speed = 0.0;  // [m/s], heading follows the path
};

struct PlatformSpec {
  std::vector<Vec2> waypoints;
  double speed = 0.0;
  std::string array_id = "hex6";
};

struct SourceSpec {
  int carrier_id = 0;
  double activity = 0.0;  // photons/s into 4 pi
  std::string roi = "cs137";
  std::vector<response::ShieldingLayer> shielding;
  double offset = 1.3;  // behind the carrier center along its heading [m]
  response::SourcePlacement placement = response::SourcePlacement::Trunk;
};

struct BackgroundSpec {
  std::array<double, kNumDetectors> roi_rate{};  // [counts/s]
  std::string shape = "default";
};

struct SensorRates {
  double detection_hz = 15.0;
  double counts_hz = 20.0;
  double count_bin = 0.25;
  double pose_hz = 10.0;
};

struct SensorNoise {
  double p_detect = 0.95;
  double radial_fraction = 0.0;   // video: range sigma = fraction * range
  double transverse_sigma = 0.0;  // [m]
  double vertical_sigma = 0.0;    // [m]
  double heading_sigma = 0.0;     // lidar only [rad]
  double extent_sigma = 0.0;      // relative
  double false_positive_rate = 0.0;  // lidar only, per frame
  double max_range = 40.0;
  double focal_length_px = 1000.0;

  static SensorNoise defaults(SensorKind sensor);
  static SensorNoise noiseless();
};

struct PoseNoise {
  double slam_position_sigma = 0.02;
  double slam_yaw_sigma = 0.002;
  double ins_drift_rate = 0.05;            // random walk [m/sqrt(s)]
  double ins_position_jitter_per_speed = 0.06;  // sigma [m] per [m/s]
  double ins_yaw_jitter_per_speed = 0.004;      // sigma [rad] per [m/s]
  double ins_fix_interval = 1.0;           // jitter is redrawn at each satellite fix [s]
  double timestamp_jitter = 0.002;         // uniform +- [s]

  static PoseNoise noiseless();
};

struct ScenarioConfig {
  std::string name;
  std::vector<ObjectSpec> objects;
  PlatformSpec platform;
  SourceSpec source;
  BackgroundSpec background;
  double duration = 0.0;
  SensorRates rates;
  std::vector<std::uint64_t> seeds;
  SensorNoise video = SensorNoise::defaults(SensorKind::Video);
  SensorNoise lidar = SensorNoise::defaults(SensorKind::Lidar);
  PoseNoise pose;
  // Attenuation placement assumed by the analysis for every object class;
  // unset means each class uses its default placement.
  std::optional<response::SourcePlacement> analysis_placement;

  const SensorNoise& noise_for(SensorKind s) const { return s == SensorKind::Video ? video : lidar; }
  const ObjectSpec& object(int id) const;

  /// Throws ValidationError naming the violated field.
  void validate() const;
};

ScenarioConfig load_scenario(const std::filesystem::path& path);
ScenarioConfig parse_scenario(const std::string& text);
std::string dump_scenario(const ScenarioConfig& config);

/// The intersection drive-by: platform and carrier pass in opposite lanes,
/// a follower car behind the carrier, a lead car ahead of the platform,
/// two parked cars and two pedestrians on the sidewalks.
ScenarioConfig intersection_preset(double speed_mph);

struct ObjectState {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double heading = 0.0;
};

struct PlatformState {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  double speed = 0.0;
};

// Piecewise-linear path traversed at constant speed; holds at the last waypoint.
class PathMotion {
 public:
  PathMotion() = default;
  PathMotion(std::vector<Vec2> waypoints, double speed);

  Vec2 position(double t) const;
  Vec2 velocity(double t) const;
  double heading(double t) const;
  double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }

 private:
  std::size_t segment_at(double s) const;

  std::vector<Vec2> waypoints_;
  std::vector<double> cumulative_;
  double speed_ = 0.0;
};

struct ObjectTrajectory {
  int id = 0;
  ObjectClass label = ObjectClass::Car;
  Vec3 extent = Vec3::Zero();
  PathMotion motion;
  std::vector<ObjectState> samples;  // at the detection rate

  ObjectState state_at(double t) const;
};

struct GroundTruth {
  std::vector<ObjectTrajectory> objects;
  PathMotion platform_motion;
  std::vector<PlatformState> platform;  // at the counts rate
  double duration = 0.0;

  const ObjectTrajectory& object(int id) const;
  PlatformState platform_at(double t) const;
};

GroundTruth generate_truth(const ScenarioConfig& config);

/// Pinhole range from an image bounding-box height.
double infer_range(double pixel_height, double focal_length, double nominal_height);

struct SyntheticDetection {
  double t = 0.0;
  SensorKind sensor = SensorKind::Lidar;
  ObjectClass label = ObjectClass::Car;
  double confidence = 1.0;
  Vec3 center = Vec3::Zero();  // platform frame [m]
  Vec3 extent = Vec3::Zero();
  std::optional<double> heading;  // platform frame [rad]
  int truth_id = kNoTruth;
};

struct DetectionFrame {
  double t = 0.0;
  std::vector<SyntheticDetection> detections;
};

std::vector<DetectionFrame> synthesize_detections(const GroundTruth& truth, SensorKind sensor,
                                                  const SensorNoise& noise, std::uint64_t seed,
                                                  double detection_hz = 15.0);

struct PoseEstimate {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  PoseMode mode = PoseMode::Slam;
};

std::vector<PoseEstimate> synthesize_pose(const GroundTruth& truth, PoseMode mode,
                                          const PoseNoise& noise, std::uint64_t seed,
                                          double pose_hz = 10.0);

/// Linear interpolation of position and (shortest-arc) yaw; clamps at the ends.
PoseEstimate interpolate_pose(const std::vector<PoseEstimate>& poses, double t);

/// Platform-frame point to world frame.
Vec3 platform_to_world(const PoseEstimate& pose, const Vec3& p);
Vec3 platform_to_world(const PlatformState& pose, const Vec3& p);

struct CountRecord {
  int detector = 0;
  double t0 = 0.0;
  double dt = 0.0;
  std::int64_t roi_counts = 0;
  Spectrum spectrum;
};

/// Per-record simulator bookkeeping, kept alongside the records.
struct BinTruth {
  double distance = 0.0;         // source-detector distance at the bin midpoint [m]
  double expected_source = 0.0;  // expected ROI source counts in the bin
  double expected_roi = 0.0;     // source + background
};

struct CountSynthesis {
  std::vector<CountRecord> records;  // bin-major, detector-minor
  std::vector<BinTruth> truth;
};

/// Source position (carrier center shifted back along its heading).
Vec3 source_position(const GroundTruth& truth, const SourceSpec& source, double t);

/// Detector center in the world frame.
Vec3 detector_position(const response::DetectorArrayGeometry& geometry, const PlatformState& pose, int detector);

/// Geometric factor eps * T(theta) * exp(-mu_air r) / (4 pi r^2) [1/m^2 x m^2 = 1]
/// for a source seen by one detector of a platform at (position, yaw). With no
/// source heading the profile mean stands in for the directional factor.
double geometric_factor(const response::ResponseTable& response, const response::AttenuationProfile& attenuation,
                        const response::DetectorArrayGeometry& geometry, const Vec3& platform_position,
                        double platform_yaw, const Vec3& source, std::optional<double> source_heading, int detector);

/// Expected photopeak count rate from the source in one detector [counts/s].
double source_rate(const response::ResponseTable& response, const response::AttenuationProfile& attenuation,
                   const response::DetectorArrayGeometry& geometry, const PlatformState& platform,
                   const Vec3& source, double source_heading, double activity, int detector);

/// Background spectral shape, normalized so the ROI channels sum to one.
std::vector<double> background_shape(const std::string& shape_id, const Roi& roi);

/// Photopeak channel weights, normalized so the ROI channels sum to one.
std::vector<double> photopeak_shape(double energy_kev, double fwhm_fraction, const Roi& roi);

CountSynthesis synthesize_counts(const GroundTruth& truth, const response::ResponseTable& response,
                                 const response::AttenuationProfile& attenuation,
                                 const response::DetectorArrayGeometry& geometry,
                                 const ScenarioConfig& config, std::uint64_t seed);

/// Source-free count records for background calibration, sampled per bin
/// (a sum of Poisson packets is Poisson).
std::vector<CountRecord> synthesize_background(const ScenarioConfig& config, double duration, std::uint64_t seed);

/// Attenuation profile implied by the scenario's carrier and shielding.
response::AttenuationProfile carrier_attenuation(const ScenarioConfig& config);

}  // namespace radattr::scene
