#include "radattr/tracking.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>

namespace radattr::tracking {

namespace {

Mat3 yaw_rotation(double yaw) { return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(); }

double log_det_spd(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double velocity_variance(ObjectClass label, const TrackerConfig& c) {
  return is_vehicle(label) ? c.vehicle_velocity_variance : c.pedestrian_velocity_variance;
}

double initial_velocity_variance(ObjectClass label, const TrackerConfig& c) {
  return is_vehicle(label) ? c.vehicle_initial_velocity_variance : c.pedestrian_initial_velocity_variance;
}

}  // namespace

int Track::dominant_truth() const {
  int best = kNoTruth;
  int best_votes = 0;
  for (const auto& [id, votes] : truth_votes) {
    if (id != kNoTruth && votes > best_votes) {
      best = id;
      best_votes = votes;
    }
  }
  return best;
}

bool is_spd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) return false;
  if (!m.isApprox(m.transpose(), 1e-9)) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

Eigen::MatrixXd repair_spd(const Eigen::MatrixXd& m, double floor) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd values = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * values.asDiagonal() * es.eigenvectors().transpose();
}

DetectionMVN to_mvn(const scene::SyntheticDetection& detection, const scene::PoseEstimate& pose,
                    const TrackerConfig& config) {
  if (std::abs(pose.t - detection.t) > config.max_pose_age) {
    throw ValidationError("stale pose: pose at t=" + std::to_string(pose.t) + " for detection at t=" +
                          std::to_string(detection.t));
  }
  for (int a = 0; a < 3; ++a) {
    if (!(detection.extent[a] > 0.0)) throw ValidationError("detection extent must be positive");
  }
  DetectionMVN out;
  out.t = detection.t;
  out.mean = scene::platform_to_world(pose, detection.center);
  out.label = detection.label;
  out.confidence = detection.confidence;
  out.sensor = detection.sensor;
  out.truth_id = detection.truth_id;

  const double scale = detection.sensor == SensorKind::Video ? config.video_scale : config.lidar_scale;
  const Vec3 sd = scale * detection.extent;
  double axis_yaw = pose.yaw;
  if (detection.heading) {
    out.heading = wrap_angle(*detection.heading + pose.yaw);
    axis_yaw = *out.heading;
  }
  const Mat3 rot = yaw_rotation(axis_yaw);
  out.cov = rot * sd.cwiseProduct(sd).asDiagonal() * rot.transpose();
  if (detection.sensor == SensorKind::Video) {
    const double range = detection.center.head<2>().norm();
    if (range > 0.0) {
      const Vec3 radial = yaw_rotation(pose.yaw) * Vec3(detection.center.x(), detection.center.y(), 0.0) / range;
      const double sigma = config.video_radial_fraction * range;
      out.cov += sigma * sigma * radial * radial.transpose();
    }
  }
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

double hellinger(const Eigen::VectorXd& mean_a, const Eigen::MatrixXd& cov_a, const Eigen::VectorXd& mean_b,
                 const Eigen::MatrixXd& cov_b) {
  if (mean_a.size() != mean_b.size() || cov_a.rows() != mean_a.size() || cov_b.rows() != mean_b.size()) {
    throw ValidationError("hellinger: dimension mismatch");
  }
  const Eigen::MatrixXd avg = 0.5 * (cov_a + cov_b);
  Eigen::LLT<Eigen::MatrixXd> llt(avg);
  if (llt.info() != Eigen::Success) throw NumericalError("hellinger: singular mean covariance");
  const Eigen::VectorXd d = mean_a - mean_b;
  const double maha = d.dot(llt.solve(d));
  const double log_avg = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double log_bc = 0.25 * (log_det_spd(cov_a) + log_det_spd(cov_b)) - 0.5 * log_avg - 0.125 * maha;
  const double h2 = -std::expm1(std::min(log_bc, 0.0));
  return std::sqrt(std::clamp(h2, 0.0, 1.0));
}

double hellinger(const DetectionMVN& a, const DetectionMVN& b) { return hellinger(a.mean, a.cov, b.mean, b.cov); }

std::vector<DetectionMVN> consolidate(std::vector<DetectionMVN> detections, double gate) {
  for (;;) {
    double best = gate;
    std::size_t bi = 0, bj = 0;
    bool found = false;
    for (std::size_t i = 0; i < detections.size(); ++i) {
      for (std::size_t j = i + 1; j < detections.size(); ++j) {
        const double h = hellinger(detections[i], detections[j]);
        if (h < best) {
          best = h;
          bi = i;
          bj = j;
          found = true;
        }
      }
    }
    if (!found) return detections;
    DetectionMVN& a = detections[bi];
    const DetectionMVN& b = detections[bj];
    const double wa = a.confidence, wb = b.confidence;
    const Vec3 mean = (wa + wb) > 0.0 ? Vec3((wa * a.mean + wb * b.mean) / (wa + wb)) : Vec3(0.5 * (a.mean + b.mean));
    if (wb > wa) {
      // The higher-confidence member supplies everything except the mean.
      a = b;
    }
    a.mean = mean;
    detections.erase(detections.begin() + static_cast<std::ptrdiff_t>(bj));
  }
}

void predict(Track& track, double dt, const TrackerConfig& config) {
  if (dt < 0.0) throw ValidationError("predict: negative time step");
  if (dt == 0.0) return;
  Mat6 F = Mat6::Identity();
  F.topRightCorner<3, 3>() = dt * Mat3::Identity();
  Mat6 Q = Mat6::Zero();
  Q.bottomRightCorner<3, 3>() = velocity_variance(track.label, config) * dt * Mat3::Identity();
  track.x = F * track.x;
  track.P = F * track.P * F.transpose() + Q;
  track.P = 0.5 * (track.P + track.P.transpose());
}

void update(Track& track, const DetectionMVN& detection, const TrackerConfig& config) {
  Eigen::Matrix<double, 3, 6> H = Eigen::Matrix<double, 3, 6>::Zero();
  H.leftCols<3>() = Mat3::Identity();
  const Mat3 S = H * track.P * H.transpose() + detection.cov;
  const Eigen::Matrix<double, 6, 3> K = track.P * H.transpose() * S.inverse();
  track.x += K * (detection.mean - H * track.x);
  const Mat6 IKH = Mat6::Identity() - K * H;
  track.P = IKH * track.P * IKH.transpose() + K * detection.cov * K.transpose();
  track.P = 0.5 * (track.P + track.P.transpose());
  if (!is_spd(track.P)) track.P = repair_spd(track.P, config.covariance_floor);

  track.shape_cov = detection.cov;
  track.hits += 1;
  track.misses = 0;
  if (detection.heading) track.last_heading = detection.heading;
  track.truth_votes[detection.truth_id] += 1;
  track.label_votes[detection.label] += 1;
  int best = -1;
  for (const auto& [label, votes] : track.label_votes) {
    if (votes > best) {
      best = votes;
      track.label = label;
    }
  }
  track.last_time = detection.t;
  track.history.push_back(HistorySample{detection.t, track.position(), track.position_cov(), track.velocity(),
                                        track.P.bottomRightCorner<3, 3>().diagonal(), track.hits, detection.heading});
}

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  // Kuhn-Munkres with row/column potentials, O(n^3).
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw ValidationError("solve_assignment: cost matrix must be square");
  if (n == 0) return {};
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
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
      for (int j = 0; j <= n; ++j) {
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
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

DetectionMVN track_mvn(const Track& track) {
  DetectionMVN m;
  m.t = track.last_time;
  m.mean = track.position();
  m.cov = track.position_cov() + track.shape_cov;
  m.label = track.label;
  m.heading = track.last_heading;
  return m;
}

Assignment associate(const std::vector<DetectionMVN>& detections, const std::vector<Track>& tracks, double gate) {
  const int nd = static_cast<int>(detections.size());
  const int nt = static_cast<int>(tracks.size());
  const int n = std::max(nd, nt);
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(n, n, gate);
  std::vector<DetectionMVN> predicted;
  predicted.reserve(nt);
  for (const auto& t : tracks) predicted.push_back(track_mvn(t));
  for (int i = 0; i < nd; ++i) {
    for (int j = 0; j < nt; ++j) cost(i, j) = hellinger(detections[i], predicted[j]);
  }
  const auto row_to_col = solve_assignment(cost);
  Assignment out;
  std::vector<char> track_used(nt, 0);
  for (int i = 0; i < nd; ++i) {
    const int j = row_to_col[i];
    if (j >= 0 && j < nt && cost(i, j) < gate) {
      out.matches.emplace_back(i, j);
      track_used[j] = 1;
    } else {
      out.unmatched_detections.push_back(i);
    }
  }
  for (int j = 0; j < nt; ++j) {
    if (!track_used[j]) out.unmatched_tracks.push_back(j);
  }
  return out;
}

void Tracker::step(const scene::DetectionFrame& frame, const scene::PoseEstimate& pose) {
  if (last_t_ && frame.t < *last_t_) throw ValidationError("out-of-order frame at t=" + std::to_string(frame.t));
  last_t_ = frame.t;

  std::vector<DetectionMVN> detections;
  for (const auto& d : frame.detections) {
    if (d.confidence < config_.min_confidence) continue;
    detections.push_back(to_mvn(d, pose, config_));
  }
  detections = consolidate(std::move(detections), config_.consolidation_gate);

  for (auto& track : active_) {
    predict(track, frame.t - track.last_time, config_);
    track.last_time = frame.t;
  }
  const Assignment a = associate(detections, active_, config_.association_gate);
  for (const auto& [di, ti] : a.matches) {
    update(active_[ti], detections[di], config_);
    if (active_[ti].hits >= config_.min_hits) active_[ti].confirmed = true;
  }
  std::vector<char> remove(active_.size(), 0);
  for (int ti : a.unmatched_tracks) {
    Track& track = active_[ti];
    track.misses += 1;
    if (!track.confirmed || track.misses > config_.max_misses) remove[ti] = 1;
  }
  std::vector<Track> kept;
  kept.reserve(active_.size() + a.unmatched_detections.size());
  for (std::size_t i = 0; i < active_.size(); ++i) {
    if (!remove[i]) {
      kept.push_back(std::move(active_[i]));
    } else if (active_[i].confirmed) {
      finished_.push_back(std::move(active_[i]));
    }
  }
  active_ = std::move(kept);

  for (int di : a.unmatched_detections) {
    const DetectionMVN& d = detections[di];
    Track track;
    track.id = next_id_++;
    track.label = d.label;
    track.x.head<3>() = d.mean;
    track.P = Mat6::Zero();
    track.P.topLeftCorner<3, 3>() = d.cov;
    track.P.bottomRightCorner<3, 3>() = initial_velocity_variance(d.label, config_) * Mat3::Identity();
    track.P(5, 5) = config_.covariance_floor;  // ground objects do not climb
    track.shape_cov = d.cov;
    track.last_time = d.t;
    track.hits = 1;
    track.last_heading = d.heading;
    track.truth_votes[d.truth_id] = 1;
    track.label_votes[d.label] = 1;
    track.confirmed = track.hits >= config_.min_hits;
    track.history.push_back(HistorySample{d.t, d.mean, d.cov, Vec3::Zero(),
                                          track.P.bottomRightCorner<3, 3>().diagonal(), 1, d.heading});
    active_.push_back(std::move(track));
  }
}

std::vector<Track> Tracker::confirmed_tracks() const {
  std::vector<Track> out = finished_;
  for (const auto& t : active_) {
    if (t.confirmed) out.push_back(t);
  }
  std::sort(out.begin(), out.end(), [](const Track& a, const Track& b) { return a.id < b.id; });
  return out;
}

std::vector<Track> run_tracker(const std::vector<scene::DetectionFrame>& frames,
                               const std::vector<scene::PoseEstimate>& poses, const TrackerConfig& config) {
  Tracker tracker(config);
  for (const auto& frame : frames) tracker.step(frame, scene::interpolate_pose(poses, frame.t));
  return tracker.confirmed_tracks();
}

}  // namespace radattr::tracking
