#pragma once

// End-to-end stages shared by the command-line tool and the test suite. Each
// stage has an in-memory core and a file-backed wrapper that reads its
// upstream files from a per-seed run directory and writes its own outputs
// there.

#include "radattr/anomaly.hpp"
#include "radattr/attribution.hpp"
#include "radattr/io.hpp"
#include "radattr/scene.hpp"
#include "radattr/snr.hpp"
#include "radattr/tracking.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace radattr::pipeline {

// ---- in-memory cores ----

struct Calibration {
  anomaly::BackgroundModel background;
  double threshold = 0.0;
  double far = 0.0;  // false alarms per second
};

struct CalibrationOptions {
  double far = 1.0 / 600.0;
  int runs = 4;
  double run_length = 600.0;  // [s]
  std::uint64_t seed = 1000000;
  double window = 2.0;  // alarm window [s]
};

/// Background spectra and alarm threshold from simulated source-free runs.
Calibration calibrate(const scene::ScenarioConfig& config, const CalibrationOptions& options = {});

/// Response table, attenuation profiles and alarm settings used by analysis.
struct Analysis {
  response::DetectorArrayGeometry geometry;
  response::ResponseTable response;
  std::map<ObjectClass, response::AttenuationProfile> profiles;
  Calibration calibration;
  double alarm_window = 2.0;

  attribution::ModelContext context(const std::vector<scene::PoseEstimate>& poses) const;
};

Analysis make_analysis(const scene::ScenarioConfig& config, const Calibration& calibration);

struct Simulation {
  scene::GroundTruth truth;
  std::vector<scene::DetectionFrame> frames;
  std::vector<scene::PoseEstimate> poses;
  std::vector<scene::CountRecord> counts;
};

Simulation simulate(const scene::ScenarioConfig& config, const response::ResponseTable& response,
                    const response::DetectorArrayGeometry& geometry, SensorKind sensor, PoseMode mode,
                    std::uint64_t seed);

struct EncounterResult {
  anomaly::Encounter encounter;
  attribution::AdjudicationReport report;
};

std::vector<anomaly::AlarmEvent> detect(const Analysis& analysis, const std::vector<scene::CountRecord>& counts);

std::vector<EncounterResult> adjudicate(const Analysis& analysis, const std::vector<scene::CountRecord>& counts,
                                        const std::vector<tracking::Track>& tracks,
                                        const std::vector<scene::PoseEstimate>& poses,
                                        const std::vector<anomaly::AlarmEvent>& alarms);

/// Index of the encounter with the largest peak anomaly value, if any.
std::optional<std::size_t> primary_encounter(const std::vector<io::EncounterReport>& encounters);

/// True when the primary encounter is attributed to a track whose dominant
/// truth is the source carrier.
bool attribution_success(const std::vector<io::EncounterReport>& encounters, const std::map<int, int>& track_truth,
                         int carrier_id);

struct WindowOptions {
  bool mcmc = true;
  snr::McmcConfig mcmc_config;
};

struct WindowResult {
  int encounter_id = 0;
  int track_id = 0;
  snr::ArrayWindow configuration;
  std::vector<snr::MethodResult> methods;
};

/// Window comparison for the attributed track of one encounter.
WindowResult optimize_encounter(const Analysis& analysis, const std::vector<scene::CountRecord>& counts,
                                const tracking::Track& track, const std::vector<scene::PoseEstimate>& poses,
                                const io::EncounterReport& encounter, const WindowOptions& options);

// ---- file-backed stages ----

struct RunOptions {
  std::filesystem::path scenario_path;
  scene::ScenarioConfig scenario;
  std::vector<std::uint64_t> seeds;
  SensorKind sensor = SensorKind::Lidar;
  PoseMode pose_mode = PoseMode::Slam;
  std::filesystem::path out;
  int jobs = 1;
  CalibrationOptions calibration;
  WindowOptions windows;
};

inline constexpr const char* kDetectionsFile = "detections.txt";
inline constexpr const char* kPosesFile = "poses.txt";
inline constexpr const char* kCountsFile = "counts.txt";
inline constexpr const char* kTruthFile = "truth.txt";
inline constexpr const char* kIndexFile = "index.sha256";
inline constexpr const char* kTracksFile = "tracks.txt";
inline constexpr const char* kTrackTruthFile = "track_truth.txt";
inline constexpr const char* kAlarmsFile = "alarms.txt";
inline constexpr const char* kReportFile = "adjudication.txt";
inline constexpr const char* kWindowsFile = "windows.txt";
inline constexpr const char* kBackgroundFile = "background.txt";
inline constexpr const char* kSummaryFile = "summary.txt";
inline constexpr const char* kWindowSummaryFile = "windows_summary.txt";
inline constexpr const char* kNoEncountersFile = "NO_ENCOUNTERS";

std::filesystem::path seed_dir(const std::filesystem::path& out, std::uint64_t seed);

/// Writes the four stream files and their checksum index.
void simulate_stage(const RunOptions& options, std::uint64_t seed);
void calibrate_stage(const RunOptions& options);
void track_stage(const RunOptions& options, std::uint64_t seed);

struct SeedOutcome {
  std::uint64_t seed = 0;
  int encounters = 0;
  std::optional<int> attributed;
  int attributed_truth = kNoTruth;
  bool success = false;
};

SeedOutcome adjudicate_stage(const RunOptions& options, std::uint64_t seed);
/// Writes summary.txt; returns the summary line `attributed X/N`.
std::string write_adjudication_summary(const RunOptions& options, const std::vector<SeedOutcome>& outcomes);

std::vector<WindowResult> optimize_stage(const RunOptions& options, std::uint64_t seed);
/// Per-method win counts across seeds; returns the summary text.
std::string write_window_summary(const RunOptions& options, const std::vector<std::vector<WindowResult>>& results);

/// Plot-data bundle under <out>/report.
void report_stage(const RunOptions& options);

/// Runs fn(seed) for every seed on up to `jobs` threads; rethrows the first
/// failure after all workers stop.
void for_each_seed(const std::vector<std::uint64_t>& seeds, int jobs, const std::function<void(std::uint64_t)>& fn);

}  // namespace radattr::pipeline
