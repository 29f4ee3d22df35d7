#include "radattr/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace radattr::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr std::array<ObjectClass, 5> kClasses = {ObjectClass::Person, ObjectClass::Car, ObjectClass::Truck,
                                                  ObjectClass::Motorcycle, ObjectClass::Bus};

fs::path require_file(const fs::path& path, const std::string& stage) {
  if (!fs::exists(path)) {
    throw MissingInputError("missing upstream stage '" + stage + "': " + path.string() + " not found");
  }
  return path;
}

template <class Reader>
auto read_with(const fs::path& path, const std::string& stage, Reader&& reader) {
  std::istringstream in(io::read_file(require_file(path, stage)));
  try {
    return reader(in);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_truth(std::ostream& os, const scene::ScenarioConfig& config, const scene::GroundTruth& truth) {
  os << "# t object_id label x y z heading  (object_id 0 is the platform)\n";
  const double dt = 1.0 / config.rates.detection_hz;
  const auto n = static_cast<std::size_t>(std::floor(truth.duration / dt + 1e-9)) + 1;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = k * dt;
    const scene::PlatformState p = truth.platform_at(t);
    os << io::format_number(t) << " 0 platform " << io::format_number(p.position.x()) << ' '
       << io::format_number(p.position.y()) << ' ' << io::format_number(p.position.z()) << ' '
       << io::format_number(p.yaw) << '\n';
    for (const auto& o : truth.objects) {
      const scene::ObjectState s = o.state_at(t);
      os << io::format_number(t) << ' ' << o.id << ' ' << to_string(o.label) << ' '
         << io::format_number(s.position.x()) << ' ' << io::format_number(s.position.y()) << ' '
         << io::format_number(s.position.z()) << ' ' << io::format_number(s.heading) << '\n';
    }
  }
}

struct TruthRow {
  double t;
  int id;
  double x, y;
};

std::vector<TruthRow> read_truth(std::istream& is) {
  std::vector<TruthRow> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = io::split_fields(line);
    if (f.size() != 7) throw ValidationError("truth: expected 7 fields");
    out.push_back(TruthRow{io::parse_number(f[0]), std::stoi(std::string(f[1])), io::parse_number(f[3]),
                           io::parse_number(f[4])});
  }
  return out;
}

std::vector<std::pair<int, snr::MethodResult>> read_windows(std::istream& is) {
  std::vector<std::pair<int, snr::MethodResult>> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = io::split_fields(line);
    if (f.size() != 5) throw ValidationError("window table: expected 5 fields");
    snr::MethodResult r;
    r.method = std::string(f[1]);
    r.anomaly = io::parse_number(f[2]);
    r.duration = io::parse_number(f[3]);
    r.detectors_used = std::stoi(std::string(f[4]));
    out.emplace_back(std::stoi(std::string(f[0])), r);
  }
  return out;
}

std::string seed_label(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seed_%04llu", static_cast<unsigned long long>(seed));
  return buf;
}

Calibration load_calibration(const RunOptions& options) {
  const fs::path path = require_file(options.out / kBackgroundFile, "calibrate-background");
  std::istringstream in(io::read_file(path));
  Calibration c;
  try {
    c.background = anomaly::read_background(in, &c.threshold, &c.far);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return c;
}

}  // namespace

Calibration calibrate(const scene::ScenarioConfig& config, const CalibrationOptions& options) {
  if (options.runs < 1 || !(options.run_length > 0.0)) throw ValidationError("calibration needs at least one run");
  std::vector<std::vector<scene::CountRecord>> runs;
  std::vector<scene::CountRecord> all;
  for (int r = 0; r < options.runs; ++r) {
    runs.push_back(scene::synthesize_background(config, options.run_length, options.seed + r));
    all.insert(all.end(), runs.back().begin(), runs.back().end());
  }
  Calibration c;
  c.background = anomaly::calibrate_background(all, config.source.roi);
  c.threshold = anomaly::calibrate_threshold(runs, c.background, options.window, options.far);
  c.far = options.far;
  return c;
}

attribution::ModelContext Analysis::context(const std::vector<scene::PoseEstimate>& poses) const {
  attribution::ModelContext ctx;
  ctx.response = &response;
  ctx.geometry = &geometry;
  ctx.poses = &poses;
  ctx.attenuation = [this](ObjectClass c) -> const response::AttenuationProfile& { return profiles.at(c); };
  return ctx;
}

Analysis make_analysis(const scene::ScenarioConfig& config, const Calibration& calibration) {
  Analysis a;
  a.geometry = response::DetectorArrayGeometry::hexagonal();
  a.response = response::build_response(a.geometry, roi_by_id(config.source.roi));
  for (ObjectClass c : kClasses) {
    const auto placement = config.analysis_placement.value_or(response::default_placement(c));
    a.profiles[c] = response::build_attenuation_profile(c, config.source.shielding, placement);
  }
  a.calibration = calibration;
  return a;
}

Simulation simulate(const scene::ScenarioConfig& config, const response::ResponseTable& response,
                    const response::DetectorArrayGeometry& geometry, SensorKind sensor, PoseMode mode,
                    std::uint64_t seed) {
  Simulation s;
  s.truth = scene::generate_truth(config);
  s.frames = scene::synthesize_detections(s.truth, sensor, config.noise_for(sensor), seed, config.rates.detection_hz);
  s.poses = scene::synthesize_pose(s.truth, mode, config.pose, seed, config.rates.pose_hz);
  s.counts = scene::synthesize_counts(s.truth, response, scene::carrier_attenuation(config), geometry, config, seed)
                 .records;
  return s;
}

std::vector<anomaly::AlarmEvent> detect(const Analysis& analysis, const std::vector<scene::CountRecord>& counts) {
  return anomaly::detect_alarms(counts, analysis.calibration.background,
                                anomaly::AlarmConfig{analysis.alarm_window, analysis.calibration.threshold});
}

std::vector<EncounterResult> adjudicate(const Analysis& analysis, const std::vector<scene::CountRecord>& counts,
                                        const std::vector<tracking::Track>& tracks,
                                        const std::vector<scene::PoseEstimate>& poses,
                                        const std::vector<anomaly::AlarmEvent>& alarms) {
  std::vector<EncounterResult> out;
  const auto encounters = anomaly::merge_alarms(alarms);
  const auto ctx = analysis.context(poses);
  int id = 0;
  for (const auto& e : encounters) {
    ++id;
    const auto window = attribution::make_window(counts, e.start, e.stop, analysis.calibration.background.roi, 3.0, id);
    out.push_back(EncounterResult{e, attribution::adjudicate(window, tracks, ctx)});
  }
  return out;
}

std::optional<std::size_t> primary_encounter(const std::vector<io::EncounterReport>& encounters) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < encounters.size(); ++i) {
    if (!best || encounters[i].peak > encounters[*best].peak) best = i;
  }
  return best;
}

bool attribution_success(const std::vector<io::EncounterReport>& encounters, const std::map<int, int>& track_truth,
                         int carrier_id) {
  const auto p = primary_encounter(encounters);
  if (!p || !encounters[*p].attributed) return false;
  const auto it = track_truth.find(*encounters[*p].attributed);
  return it != track_truth.end() && it->second == carrier_id;
}

WindowResult optimize_encounter(const Analysis& analysis, const std::vector<scene::CountRecord>& counts,
                                const tracking::Track& track, const std::vector<scene::PoseEstimate>& poses,
                                const io::EncounterReport& encounter, const WindowOptions& options) {
  const auto window = attribution::make_window(counts, encounter.alarm_start, encounter.alarm_stop,
                                               analysis.calibration.background.roi, 3.0, encounter.id);
  const attribution::RankedTrack* row = nullptr;
  for (const auto& r : encounter.tracks) {
    if (r.fit.track_id == track.id) row = &r;
  }
  if (!row) throw ValidationError("track " + std::to_string(track.id) + " has no fit in encounter " +
                                  std::to_string(encounter.id));
  const auto ctx = analysis.context(poses);
  const auto model = attribution::model_counts(track, ctx, window, row->fit.offset);
  WindowResult result;
  result.encounter_id = encounter.id;
  result.track_id = track.id;
  if (options.mcmc) {
    result.configuration = snr::mcmc_refine(track, ctx, window, row->fit, options.mcmc_config).window;
  } else {
    result.configuration = snr::optimize_array(model);
  }
  result.methods = snr::compare_windows(counts, analysis.calibration.background, window, model, result.configuration);
  return result;
}

fs::path seed_dir(const fs::path& out, std::uint64_t seed) { return out / seed_label(seed); }

void simulate_stage(const RunOptions& options, std::uint64_t seed) {
  const auto geometry = response::DetectorArrayGeometry::hexagonal();
  const auto response = response::build_response(geometry, roi_by_id(options.scenario.source.roi));
  const Simulation sim = simulate(options.scenario, response, geometry, options.sensor, options.pose_mode, seed);
  const fs::path dir = seed_dir(options.out, seed);
  std::ostringstream det, pose, counts, truth;
  io::write_detections(det, sim.frames, options.scenario.rates.detection_hz, options.scenario.duration);
  io::write_poses(pose, sim.poses);
  io::write_counts(counts, sim.counts);
  write_truth(truth, options.scenario, sim.truth);
  io::write_file(dir / kDetectionsFile, det.str());
  io::write_file(dir / kPosesFile, pose.str());
  io::write_file(dir / kCountsFile, counts.str());
  io::write_file(dir / kTruthFile, truth.str());
  io::write_checksum_index(dir, {kDetectionsFile, kPosesFile, kCountsFile, kTruthFile}, kIndexFile);
}

void calibrate_stage(const RunOptions& options) {
  const Calibration c = calibrate(options.scenario, options.calibration);
  std::ostringstream os;
  anomaly::write_background(os, c.background, c.threshold, c.far);
  io::write_file(options.out / kBackgroundFile, os.str());
}

void track_stage(const RunOptions& options, std::uint64_t seed) {
  const fs::path dir = seed_dir(options.out, seed);
  const auto frames = read_with(dir / kDetectionsFile, "simulate", io::read_detections);
  const auto poses = read_with(dir / kPosesFile, "simulate", io::read_poses);
  const auto tracks = tracking::run_tracker(frames, poses);
  std::ostringstream log, truth;
  io::write_tracks(log, tracks);
  io::write_track_truth(truth, tracks);
  io::write_file(dir / kTracksFile, log.str());
  io::write_file(dir / kTrackTruthFile, truth.str());
}

SeedOutcome adjudicate_stage(const RunOptions& options, std::uint64_t seed) {
  const fs::path dir = seed_dir(options.out, seed);
  const Analysis analysis = make_analysis(options.scenario, load_calibration(options));
  const auto counts = read_with(dir / kCountsFile, "simulate", io::read_counts);
  const auto poses = read_with(dir / kPosesFile, "simulate", io::read_poses);
  const auto tracks = read_with(dir / kTracksFile, "track", io::read_tracks);
  const auto track_truth = read_with(dir / kTrackTruthFile, "track", io::read_track_truth);

  const auto alarms = detect(analysis, counts);
  const auto results = adjudicate(analysis, counts, tracks, poses, alarms);
  std::vector<io::EncounterReport> reports;
  for (const auto& r : results) reports.push_back(io::to_report(r.report, r.encounter.peak));

  std::ostringstream alarm_log, report;
  anomaly::write_alarms(alarm_log, alarms);
  io::write_report(report, reports);
  io::write_file(dir / kAlarmsFile, alarm_log.str());
  io::write_file(dir / kReportFile, report.str());

  SeedOutcome outcome;
  outcome.seed = seed;
  outcome.encounters = static_cast<int>(reports.size());
  if (const auto p = primary_encounter(reports)) {
    outcome.attributed = reports[*p].attributed;
    if (outcome.attributed) {
      const auto it = track_truth.find(*outcome.attributed);
      if (it != track_truth.end()) outcome.attributed_truth = it->second;
    }
  }
  outcome.success = attribution_success(reports, track_truth, options.scenario.source.carrier_id);
  return outcome;
}

std::string write_adjudication_summary(const RunOptions& options, const std::vector<SeedOutcome>& outcomes) {
  const auto ok = std::count_if(outcomes.begin(), outcomes.end(), [](const SeedOutcome& o) { return o.success; });
  const std::string line = "attributed " + std::to_string(ok) + "/" + std::to_string(outcomes.size());
  std::ostringstream os;
  os << line << '\n';
  os << "# seed encounters attributed_track attributed_truth success\n";
  for (const auto& o : outcomes) {
    os << o.seed << ' ' << o.encounters << ' ' << (o.attributed ? std::to_string(*o.attributed) : "none") << ' '
       << o.attributed_truth << ' ' << (o.success ? 1 : 0) << '\n';
  }
  io::write_file(options.out / kSummaryFile, os.str());
  return line;
}

std::vector<WindowResult> optimize_stage(const RunOptions& options, std::uint64_t seed) {
  const fs::path dir = seed_dir(options.out, seed);
  const Analysis analysis = make_analysis(options.scenario, load_calibration(options));
  const auto counts = read_with(dir / kCountsFile, "simulate", io::read_counts);
  const auto poses = read_with(dir / kPosesFile, "simulate", io::read_poses);
  const auto tracks = read_with(dir / kTracksFile, "track", io::read_tracks);
  const auto reports = read_with(dir / kReportFile, "adjudicate", io::read_report);
  std::vector<WindowResult> results;
  for (const auto& e : reports) {
    if (!e.attributed) continue;
    const auto it = std::find_if(tracks.begin(), tracks.end(), [&](const auto& t) { return t.id == *e.attributed; });
    if (it == tracks.end()) {
      throw ValidationError("adjudication names track " + std::to_string(*e.attributed) + " missing from track log");
    }
    WindowOptions w = options.windows;
    w.mcmc_config.seed = seed * 1000 + static_cast<std::uint64_t>(e.id);
    results.push_back(optimize_encounter(analysis, counts, *it, poses, e, w));
  }
  std::ostringstream os;
  os << "# encounter_id method anomaly_value duration_s detectors_used\n";
  for (const auto& r : results) {
    std::ostringstream one;
    snr::write_comparison(one, r.encounter_id, r.methods);
    const std::string body = one.str();
    os << body.substr(body.find('\n') + 1);
  }
  io::write_file(dir / kWindowsFile, os.str());
  return results;
}

std::string write_window_summary(const RunOptions& options, const std::vector<std::vector<WindowResult>>& results) {
  std::vector<std::string> methods;
  std::map<std::string, int> wins;
  int encounters = 0;
  for (const auto& seed : results) {
    for (const auto& r : seed) {
      if (r.methods.empty()) continue;
      ++encounters;
      std::size_t best = 0;
      for (std::size_t i = 0; i < r.methods.size(); ++i) {
        if (std::find(methods.begin(), methods.end(), r.methods[i].method) == methods.end()) {
          methods.push_back(r.methods[i].method);
        }
        if (r.methods[i].anomaly > r.methods[best].anomaly) best = i;
      }
      wins[r.methods[best].method] += 1;
    }
  }
  std::ostringstream os;
  os << "encounters " << encounters << '\n';
  os << "# method wins\n";
  for (const auto& m : methods) os << m << ' ' << wins[m] << '\n';
  io::write_file(options.out / kWindowSummaryFile, os.str());
  return os.str();
}

void report_stage(const RunOptions& options) {
  const fs::path report_dir = options.out / "report";
  std::optional<Analysis> analysis;
  std::ostringstream scatter, bars;
  scatter << "scenario,seed,encounter,track_id,truth_id,label,S,offset_s,offset_m,alpha,flagged,rank,attributed\n";
  bars << "scenario,seed,encounter,method,anomaly_value,duration_s,detectors_used\n";
  const std::string scenario = options.scenario.name;
  for (const auto seed : options.seeds) {
    const fs::path dir = seed_dir(options.out, seed);
    const fs::path out = report_dir / seed_label(seed);
    std::vector<io::EncounterReport> reports;
    if (fs::exists(dir / kReportFile)) reports = read_with(dir / kReportFile, "adjudicate", io::read_report);
    if (reports.empty()) {
      io::write_file(out / kNoEncountersFile, "no encounters\n");
      continue;
    }
    if (!analysis) {
      Calibration c;
      if (fs::exists(options.out / kBackgroundFile)) c = load_calibration(options);
      analysis = make_analysis(options.scenario, c);
    }
    const auto counts = read_with(dir / kCountsFile, "simulate", io::read_counts);
    const auto poses = read_with(dir / kPosesFile, "simulate", io::read_poses);
    const auto tracks = read_with(dir / kTracksFile, "track", io::read_tracks);
    const auto track_truth = read_with(dir / kTrackTruthFile, "track", io::read_track_truth);
    const auto ctx = analysis->context(poses);

    // Trajectories: truth, platform and tracks.
    std::ostringstream traj;
    traj << "source,id,t,x,y\n";
    if (fs::exists(dir / kTruthFile)) {
      for (const auto& r : read_with(dir / kTruthFile, "simulate", read_truth)) {
        traj << (r.id == 0 ? "platform" : "truth") << ',' << r.id << ',' << io::format_number(r.t) << ','
             << io::format_number(r.x) << ',' << io::format_number(r.y) << '\n';
      }
    }
    for (const auto& t : tracks) {
      for (const auto& h : t.history) {
        traj << "track," << t.id << ',' << io::format_number(h.t) << ',' << io::format_number(h.position.x()) << ','
             << io::format_number(h.position.y()) << '\n';
      }
    }
    io::write_file(out / "trajectories.csv", traj.str());

    for (const auto& e : reports) {
      const auto window = attribution::make_window(counts, e.alarm_start, e.alarm_stop,
                                                   analysis->calibration.background.roi, 3.0, e.id);
      // Per-detector count and model overlays, one model column per candidate track.
      std::vector<std::pair<int, std::array<std::vector<double>, kNumDetectors>>> models;
      for (const auto& row : e.tracks) {
        const auto it = std::find_if(tracks.begin(), tracks.end(), [&](const auto& t) { return t.id == row.fit.track_id; });
        if (it == tracks.end()) continue;
        const auto m = attribution::model_counts(*it, ctx, window, row.fit.offset);
        models.emplace_back(row.fit.track_id, attribution::expected_counts(m, row.fit.alpha, row.fit.b));
      }
      for (int k = 0; k < kNumDetectors; ++k) {
        std::ostringstream ov;
        ov << "t,counts";
        for (const auto& [id, _] : models) ov << ",track_" << id;
        ov << '\n';
        for (int i = 0; i < window.num_bins; ++i) {
          ov << io::format_number(window.bin_center(i)) << ',' << io::format_number(window.counts[k][i]);
          for (const auto& [id, m] : models) ov << ',' << io::format_number(m[k][i]);
          ov << '\n';
        }
        io::write_file(out / ("overlay_enc" + std::to_string(e.id) + "_det" + std::to_string(k) + ".csv"), ov.str());
      }
      for (const auto& row : e.tracks) {
        const auto tt = track_truth.find(row.fit.track_id);
        scatter << scenario << ',' << seed << ',' << e.id << ',' << row.fit.track_id << ','
                << (tt == track_truth.end() ? kNoTruth : tt->second) << ',' << to_string(row.label) << ','
                << io::format_number(row.fit.s) << ',' << io::format_number(row.fit.offset) << ','
                << io::format_number(row.fit.offset_m) << ',' << io::format_number(row.fit.alpha) << ','
                << (row.flagged ? 1 : 0) << ',' << row.rank << ','
                << (e.attributed && *e.attributed == row.fit.track_id ? 1 : 0) << '\n';
      }
    }
    if (fs::exists(dir / kWindowsFile)) {
      for (const auto& [enc, r] : read_with(dir / kWindowsFile, "optimize", read_windows)) {
        bars << scenario << ',' << seed << ',' << enc << ',' << r.method << ',' << io::format_number(r.anomaly) << ','
             << io::format_number(r.duration) << ',' << r.detectors_used << '\n';
      }
    }
  }
  io::write_file(report_dir / "scatter.csv", scatter.str());
  io::write_file(report_dir / "anomaly_bars.csv", bars.str());
}

void for_each_seed(const std::vector<std::uint64_t>& seeds, int jobs, const std::function<void(std::uint64_t)>& fn) {
  const int n = static_cast<int>(seeds.size());
  const int workers = std::clamp(jobs, 1, std::max(1, n));
  std::atomic<int> next{0};
  std::exception_ptr first;
  std::mutex mu;
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(seeds[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first) first = std::current_exception();
        next = n;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (first) std::rethrow_exception(first);
}

}  // namespace radattr::pipeline
