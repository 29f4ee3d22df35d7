#pragma once

// Line-oriented text formats for the pipeline's stage outputs. Every writer
// emits numbers in shortest round-trip form, so re-running a stage on the same
// inputs reproduces its files byte for byte.

#include "radattr/attribution.hpp"
#include "radattr/scene.hpp"
#include "radattr/tracking.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace radattr::io {

std::string format_number(double v);
double parse_number(std::string_view token);

/// Whitespace-separated fields of one line.
std::vector<std::string_view> split_fields(std::string_view line);

// Detection stream: `t sensor label confidence cx cy cz ex ey ez heading truth_id`.
// The header records the frame rate and duration so empty frames survive.
void write_detections(std::ostream& os, const std::vector<scene::DetectionFrame>& frames, double rate, double duration);
std::vector<scene::DetectionFrame> read_detections(std::istream& is);

// Count records: `detector t0 dt roi_counts ch0..ch127`.
void write_counts(std::ostream& os, const std::vector<scene::CountRecord>& records);
std::vector<scene::CountRecord> read_counts(std::istream& is);

// Poses: `t x y z yaw pitch roll mode`.
void write_poses(std::ostream& os, const std::vector<scene::PoseEstimate>& poses);
std::vector<scene::PoseEstimate> read_poses(std::istream& is);

// Track log: `t track_id label x y z vx vy vz det_count cxx cyy czz cvxvx cvyvy cvzvz heading`.
void write_tracks(std::ostream& os, const std::vector<tracking::Track>& tracks);
/// Rebuilds confirmed tracks with diagonal position covariances.
std::vector<tracking::Track> read_tracks(std::istream& is);

// Track-to-truth table: `track_id truth_id votes`.
void write_track_truth(std::ostream& os, const std::vector<tracking::Track>& tracks);
std::map<int, int> read_track_truth(std::istream& is);

struct EncounterReport {
  int id = 0;
  double alarm_start = 0.0;
  double alarm_stop = 0.0;
  double span_start = 0.0;
  double span_stop = 0.0;
  double peak = 0.0;  // largest anomaly value in the alarm
  std::optional<int> attributed;
  std::vector<attribution::RankedTrack> tracks;
};

EncounterReport to_report(const attribution::AdjudicationReport& report, double peak);

/// Adjudication report: an `encounter` line followed by one `track` line per
/// candidate.
void write_report(std::ostream& os, const std::vector<EncounterReport>& encounters);
std::vector<EncounterReport> read_report(std::istream& is);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Writes `<hash>  <name>` lines for the named files, in the given order.
void write_checksum_index(const std::filesystem::path& dir, const std::vector<std::string>& names,
                          const std::string& index_name = "index.sha256");

/// Reads a whole file; MissingInputError names the path when absent.
std::string read_file(const std::filesystem::path& path);
/// Writes a whole file; IO failures name the path.
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace radattr::io
