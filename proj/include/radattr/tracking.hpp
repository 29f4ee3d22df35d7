#pragma once

// Multi-object tracker: detections become multivariate normals in the world
// frame, are associated to tracks by Hellinger distance with an optimal
// linear assignment, and drive constant-velocity Kalman filters whose
// velocity process noise depends on the object label.

#include "radattr/scene.hpp"
#include "radattr/types.hpp"

#include <Eigen/Core>

#include <map>
#include <optional>
#include <vector>

namespace radattr::tracking {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct DetectionMVN {
  double t = 0.0;
  Vec3 mean = Vec3::Zero();  // world frame [m]
  Mat3 cov = Mat3::Identity();
  ObjectClass label = ObjectClass::Car;
  double confidence = 1.0;
  std::optional<double> heading;  // world frame [rad]
  SensorKind sensor = SensorKind::Lidar;
  int truth_id = kNoTruth;
};

struct TrackerConfig {
  double association_gate = 0.8;
  double consolidation_gate = 0.6;
  double vehicle_velocity_variance = 4.44;     // [m^2/s^2] per second
  double pedestrian_velocity_variance = 0.28;
  double vehicle_initial_velocity_variance = 25.0;
  double pedestrian_initial_velocity_variance = 2.0;
  double lidar_scale = 0.25;
  double video_scale = 0.25;
  double video_radial_fraction = 0.05;  // extra radial sigma per metre of range
  int min_hits = 2;
  int max_misses = 8;
  double min_confidence = 0.0;
  double max_pose_age = 1.0 / 15.0 + 1e-6;  // [s]
  double covariance_floor = 1e-6;           // eigenvalue floor [m^2] / [m^2/s^2]
};

struct HistorySample {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  Mat3 position_cov = Mat3::Identity();
  Vec3 velocity = Vec3::Zero();
  Vec3 velocity_var = Vec3::Zero();  // diagonal of the velocity covariance
  int det_count = 0;                 // associated detections so far
  std::optional<double> heading;
};

struct Track {
  int id = 0;
  Vec6 x = Vec6::Zero();
  Mat6 P = Mat6::Identity();
  ObjectClass label = ObjectClass::Car;
  Mat3 shape_cov = Mat3::Identity();  // covariance of the last associated detection
  std::vector<HistorySample> history;
  int hits = 0;
  int misses = 0;
  bool confirmed = false;
  std::optional<double> last_heading;
  double last_time = 0.0;
  std::map<int, int> truth_votes;
  std::map<ObjectClass, int> label_votes;

  Vec3 position() const { return x.head<3>(); }
  Vec3 velocity() const { return x.tail<3>(); }
  Mat3 position_cov() const { return P.topLeftCorner<3, 3>(); }
  /// Truth id with the most associated detections, kNoTruth if none.
  int dominant_truth() const;
};

DetectionMVN to_mvn(const scene::SyntheticDetection& detection, const scene::PoseEstimate& pose,
                    const TrackerConfig& config);

/// Hellinger distance between two multivariate normals of equal dimension.
double hellinger(const Eigen::VectorXd& mean_a, const Eigen::MatrixXd& cov_a,
                 const Eigen::VectorXd& mean_b, const Eigen::MatrixXd& cov_b);
double hellinger(const DetectionMVN& a, const DetectionMVN& b);

/// Greedy merge of same-frame detections closer than the gate.
std::vector<DetectionMVN> consolidate(std::vector<DetectionMVN> detections, double gate);

void predict(Track& track, double dt, const TrackerConfig& config);
void update(Track& track, const DetectionMVN& detection, const TrackerConfig& config);

/// Minimum-cost assignment of rows to columns of a square cost matrix.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

struct Assignment {
  std::vector<std::pair<int, int>> matches;  // (detection, track)
  std::vector<int> unmatched_detections;
  std::vector<int> unmatched_tracks;
};

/// Mean and covariance used to compare a track against detections: the
/// predicted position with the object's shape covariance added.
DetectionMVN track_mvn(const Track& track);

Assignment associate(const std::vector<DetectionMVN>& detections, const std::vector<Track>& tracks,
                     double gate);

class Tracker {
 public:
  explicit Tracker(TrackerConfig config = {}) : config_(config) {}

  void step(const scene::DetectionFrame& frame, const scene::PoseEstimate& pose);

  const std::vector<Track>& active() const { return active_; }
  /// Every track that was ever confirmed, finished or still active, by id.
  std::vector<Track> confirmed_tracks() const;
  const TrackerConfig& config() const { return config_; }

 private:
  TrackerConfig config_;
  std::vector<Track> active_;
  std::vector<Track> finished_;
  int next_id_ = 1;
  std::optional<double> last_t_;
};

/// Runs the tracker over a detection stream with interpolated poses.
std::vector<Track> run_tracker(const std::vector<scene::DetectionFrame>& frames,
                               const std::vector<scene::PoseEstimate>& poses, const TrackerConfig& config = {});

/// Symmetrizes and floors eigenvalues so the matrix is SPD.
Eigen::MatrixXd repair_spd(const Eigen::MatrixXd& m, double floor);

bool is_spd(const Eigen::MatrixXd& m);

}  // namespace radattr::tracking
