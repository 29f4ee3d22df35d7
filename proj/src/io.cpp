#include "radattr/io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace radattr::io {

namespace {

constexpr std::string_view kDetectionsHeader = "# radattr detections v1";
constexpr std::string_view kReportHeader = "# radattr adjudication v1";

std::string fmt_opt(const std::optional<double>& v) { return v ? format_number(*v) : "nan"; }

std::optional<double> parse_opt(std::string_view token) {
  const double v = parse_number(token);
  return std::isnan(v) ? std::nullopt : std::optional<double>(v);
}

int parse_int(std::string_view token) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ValidationError("expected an integer, got '" + std::string(token) + "'");
  }
  return v;
}

std::int64_t parse_int64(std::string_view token) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ValidationError("expected an integer, got '" + std::string(token) + "'");
  }
  return v;
}

// Calls f(fields, line_number) for every non-comment, non-blank line.
template <class F>
void for_each_row(std::istream& is, F&& f) {
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    try {
      f(fields, n);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(n) + ": " + e.what());
    }
  }
}

void expect_fields(const std::vector<std::string_view>& fields, std::size_t n, const char* what) {
  if (fields.size() != n) {
    throw ValidationError(std::string(what) + ": expected " + std::to_string(n) + " fields, got " +
                          std::to_string(fields.size()));
  }
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // folds -0
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw NumericalError("format_number: conversion failed");
  return std::string(buf, ptr);
}

double parse_number(std::string_view token) {
  if (token == "nan") return std::nan("");
  if (token == "inf") return std::numeric_limits<double>::infinity();
  if (token == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ValidationError("expected a number, got '" + std::string(token) + "'");
  }
  return v;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

void write_detections(std::ostream& os, const std::vector<scene::DetectionFrame>& frames, double rate,
                      double duration) {
  os << kDetectionsHeader << " rate " << format_number(rate) << " duration " << format_number(duration) << '\n';
  os << "# t sensor label confidence cx cy cz ex ey ez heading truth_id\n";
  for (const auto& f : frames) {
    for (const auto& d : f.detections) {
      os << format_number(d.t) << ' ' << to_string(d.sensor) << ' ' << to_string(d.label) << ' '
         << format_number(d.confidence);
      for (int a = 0; a < 3; ++a) os << ' ' << format_number(d.center[a]);
      for (int a = 0; a < 3; ++a) os << ' ' << format_number(d.extent[a]);
      os << ' ' << fmt_opt(d.heading) << ' ' << d.truth_id << '\n';
    }
  }
}

std::vector<scene::DetectionFrame> read_detections(std::istream& is) {
  std::string header;
  if (!std::getline(is, header) || header.rfind(kDetectionsHeader, 0) != 0) {
    throw ValidationError("detection stream: missing header");
  }
  const auto hf = split_fields(std::string_view(header).substr(kDetectionsHeader.size()));
  if (hf.size() != 4 || hf[0] != "rate" || hf[2] != "duration") {
    throw ValidationError("detection stream: malformed header");
  }
  const double rate = parse_number(hf[1]);
  const double duration = parse_number(hf[3]);
  if (!(rate > 0.0) || !(duration >= 0.0)) throw ValidationError("detection stream: bad rate or duration");
  const double dt = 1.0 / rate;
  const auto n = static_cast<std::size_t>(std::floor(duration / dt + 1e-9)) + 1;
  std::vector<scene::DetectionFrame> frames(n);
  for (std::size_t k = 0; k < n; ++k) frames[k].t = k * dt;
  for_each_row(is, [&](const auto& f, int) {
    expect_fields(f, 12, "detection");
    scene::SyntheticDetection d;
    d.t = parse_number(f[0]);
    d.sensor = parse_sensor(f[1]);
    d.label = parse_object_class(f[2]);
    d.confidence = parse_number(f[3]);
    for (int a = 0; a < 3; ++a) d.center[a] = parse_number(f[4 + a]);
    for (int a = 0; a < 3; ++a) d.extent[a] = parse_number(f[7 + a]);
    d.heading = parse_opt(f[10]);
    d.truth_id = parse_int(f[11]);
    const long k = std::lround(d.t / dt);
    if (k < 0 || k >= static_cast<long>(n) || std::abs(k * dt - d.t) > 1e-6) {
      throw ValidationError("detection time off the frame grid");
    }
    frames[k].detections.push_back(d);
  });
  return frames;
}

void write_counts(std::ostream& os, const std::vector<scene::CountRecord>& records) {
  os << "# detector t0 dt roi_counts ch0..ch" << kNumChannels - 1 << '\n';
  for (const auto& r : records) {
    os << r.detector << ' ' << format_number(r.t0) << ' ' << format_number(r.dt) << ' ' << r.roi_counts;
    for (auto c : r.spectrum) os << ' ' << c;
    os << '\n';
  }
}

std::vector<scene::CountRecord> read_counts(std::istream& is) {
  std::vector<scene::CountRecord> out;
  for_each_row(is, [&](const auto& f, int) {
    expect_fields(f, 4 + kNumChannels, "count record");
    scene::CountRecord r;
    r.detector = parse_int(f[0]);
    if (r.detector < 0 || r.detector >= kNumDetectors) throw ValidationError("detector id out of range");
    r.t0 = parse_number(f[1]);
    r.dt = parse_number(f[2]);
    if (!(r.dt > 0.0)) throw ValidationError("count bin width must be positive");
    r.roi_counts = parse_int64(f[3]);
    r.spectrum.resize(kNumChannels);
    for (int c = 0; c < kNumChannels; ++c) r.spectrum[c] = parse_int64(f[4 + c]);
    out.push_back(std::move(r));
  });
  return out;
}

void write_poses(std::ostream& os, const std::vector<scene::PoseEstimate>& poses) {
  os << "# t x y z yaw pitch roll mode\n";
  for (const auto& p : poses) {
    os << format_number(p.t);
    for (int a = 0; a < 3; ++a) os << ' ' << format_number(p.position[a]);
    os << ' ' << format_number(p.yaw) << ' ' << format_number(p.pitch) << ' ' << format_number(p.roll) << ' '
       << to_string(p.mode) << '\n';
  }
}

std::vector<scene::PoseEstimate> read_poses(std::istream& is) {
  std::vector<scene::PoseEstimate> out;
  for_each_row(is, [&](const auto& f, int) {
    expect_fields(f, 8, "pose");
    scene::PoseEstimate p;
    p.t = parse_number(f[0]);
    for (int a = 0; a < 3; ++a) p.position[a] = parse_number(f[1 + a]);
    p.yaw = parse_number(f[4]);
    p.pitch = parse_number(f[5]);
    p.roll = parse_number(f[6]);
    p.mode = parse_pose_mode(f[7]);
    if (!out.empty() && !(p.t > out.back().t)) throw ValidationError("pose times must increase");
    out.push_back(p);
  });
  return out;
}

void write_tracks(std::ostream& os, const std::vector<tracking::Track>& tracks) {
  os << "# t track_id label x y z vx vy vz det_count cxx cyy czz cvxvx cvyvy cvzvz heading\n";
  for (const auto& tr : tracks) {
    for (const auto& h : tr.history) {
      os << format_number(h.t) << ' ' << tr.id << ' ' << to_string(tr.label);
      for (int a = 0; a < 3; ++a) os << ' ' << format_number(h.position[a]);
      for (int a = 0; a < 3; ++a) os << ' ' << format_number(h.velocity[a]);
      os << ' ' << h.det_count;
      for (int a = 0; a < 3; ++a) os << ' ' << format_number(h.position_cov(a, a));
      for (int a = 0; a < 3; ++a) os << ' ' << format_number(h.velocity_var[a]);
      os << ' ' << fmt_opt(h.heading) << '\n';
    }
  }
}

std::vector<tracking::Track> read_tracks(std::istream& is) {
  std::vector<tracking::Track> out;
  std::map<int, std::size_t> index;
  for_each_row(is, [&](const auto& f, int) {
    expect_fields(f, 17, "track log");
    const int id = parse_int(f[1]);
    auto it = index.find(id);
    if (it == index.end()) {
      it = index.emplace(id, out.size()).first;
      tracking::Track t;
      t.id = id;
      t.label = parse_object_class(f[2]);
      t.confirmed = true;
      out.push_back(std::move(t));
    }
    auto& tr = out[it->second];
    tracking::HistorySample h;
    h.t = parse_number(f[0]);
    for (int a = 0; a < 3; ++a) h.position[a] = parse_number(f[3 + a]);
    for (int a = 0; a < 3; ++a) h.velocity[a] = parse_number(f[6 + a]);
    h.det_count = parse_int(f[9]);
    h.position_cov = Mat3::Zero();
    for (int a = 0; a < 3; ++a) h.position_cov(a, a) = parse_number(f[10 + a]);
    for (int a = 0; a < 3; ++a) h.velocity_var[a] = parse_number(f[13 + a]);
    h.heading = parse_opt(f[16]);
    if (!tr.history.empty() && !(h.t > tr.history.back().t)) {
      throw ValidationError("track " + std::to_string(id) + ": history times must increase");
    }
    tr.history.push_back(h);
    tr.hits = h.det_count;
    tr.last_time = h.t;
    if (h.heading) tr.last_heading = h.heading;
    tr.x.head<3>() = h.position;
    tr.x.tail<3>() = h.velocity;
    tr.P = tracking::Mat6::Zero();
    tr.P.topLeftCorner<3, 3>() = h.position_cov;
    tr.P.bottomRightCorner<3, 3>() = h.velocity_var.asDiagonal();
  });
  return out;
}

void write_track_truth(std::ostream& os, const std::vector<tracking::Track>& tracks) {
  os << "# track_id truth_id votes\n";
  for (const auto& tr : tracks) {
    const int truth = tr.dominant_truth();
    const auto it = tr.truth_votes.find(truth);
    os << tr.id << ' ' << truth << ' ' << (it == tr.truth_votes.end() ? 0 : it->second) << '\n';
  }
}

std::map<int, int> read_track_truth(std::istream& is) {
  std::map<int, int> out;
  for_each_row(is, [&](const auto& f, int) {
    expect_fields(f, 3, "track truth");
    out[parse_int(f[0])] = parse_int(f[1]);
  });
  return out;
}

EncounterReport to_report(const attribution::AdjudicationReport& report, double peak) {
  EncounterReport r;
  r.id = report.window.id;
  r.alarm_start = report.window.alarm_start;
  r.alarm_stop = report.window.alarm_stop;
  r.span_start = report.window.span_start;
  r.span_stop = report.window.span_stop;
  r.peak = peak;
  r.attributed = report.attributed;
  r.tracks = report.tracks;
  return r;
}

void write_report(std::ostream& os, const std::vector<EncounterReport>& encounters) {
  os << kReportHeader << '\n';
  os << "# encounter id alarm_start alarm_stop span_start span_stop peak attributed_id\n";
  os << "# track track_id label S p deviance dof offset_s offset_m alpha alpha_se b0..b5 bic_source bic_background"
        " background_preferred outside_alarm_frac flagged rank\n";
  for (const auto& e : encounters) {
    os << "encounter " << e.id << ' ' << format_number(e.alarm_start) << ' ' << format_number(e.alarm_stop) << ' '
       << format_number(e.span_start) << ' ' << format_number(e.span_stop) << ' ' << format_number(e.peak) << ' '
       << (e.attributed ? std::to_string(*e.attributed) : std::string("none")) << '\n';
    for (const auto& t : e.tracks) {
      const auto& f = t.fit;
      os << "track " << f.track_id << ' ' << to_string(t.label) << ' ' << format_number(f.s) << ' '
         << format_number(f.p) << ' ' << format_number(f.deviance) << ' ' << f.dof << ' ' << format_number(f.offset)
         << ' ' << format_number(f.offset_m) << ' ' << format_number(f.alpha) << ' ' << format_number(f.alpha_se);
      for (double b : f.b) os << ' ' << format_number(b);
      os << ' ' << format_number(f.bic_source) << ' ' << format_number(f.bic_background) << ' '
         << (f.background_preferred ? 1 : 0) << ' ' << format_number(f.outside_alarm_frac) << ' '
         << (t.flagged ? 1 : 0) << ' ' << t.rank << '\n';
    }
  }
}

std::vector<EncounterReport> read_report(std::istream& is) {
  std::vector<EncounterReport> out;
  std::string header;
  if (!std::getline(is, header) || header != kReportHeader) throw ValidationError("adjudication report: missing header");
  for_each_row(is, [&](const auto& f, int) {
    if (f[0] == "encounter") {
      expect_fields(f, 8, "encounter");
      EncounterReport e;
      e.id = parse_int(f[1]);
      e.alarm_start = parse_number(f[2]);
      e.alarm_stop = parse_number(f[3]);
      e.span_start = parse_number(f[4]);
      e.span_stop = parse_number(f[5]);
      e.peak = parse_number(f[6]);
      if (f[7] != "none") e.attributed = parse_int(f[7]);
      out.push_back(std::move(e));
    } else if (f[0] == "track") {
      if (out.empty()) throw ValidationError("track row before any encounter");
      expect_fields(f, 23, "track");
      attribution::RankedTrack t;
      auto& r = t.fit;
      r.track_id = parse_int(f[1]);
      t.label = parse_object_class(f[2]);
      r.s = parse_number(f[3]);
      r.p = parse_number(f[4]);
      r.deviance = parse_number(f[5]);
      r.dof = parse_int(f[6]);
      r.offset = parse_number(f[7]);
      r.offset_m = parse_number(f[8]);
      r.alpha = parse_number(f[9]);
      r.alpha_se = parse_number(f[10]);
      for (int k = 0; k < kNumDetectors; ++k) r.b[k] = parse_number(f[11 + k]);
      r.bic_source = parse_number(f[17]);
      r.bic_background = parse_number(f[18]);
      r.background_preferred = parse_int(f[19]) != 0;
      r.outside_alarm_frac = parse_number(f[20]);
      t.flagged = parse_int(f[21]) != 0;
      t.rank = parse_int(f[22]);
      out.back().tracks.push_back(t);
    } else {
      throw ValidationError("adjudication report: unknown row '" + std::string(f[0]) + "'");
    }
  });
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericalError("sha256 failed for " + path.string());
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

void write_checksum_index(const std::filesystem::path& dir, const std::vector<std::string>& names,
                          const std::string& index_name) {
  std::ostringstream os;
  for (const auto& n : names) os << sha256_file(dir / n) << "  " << n << '\n';
  write_file(dir / index_name, os.str());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw std::runtime_error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace radattr::io
