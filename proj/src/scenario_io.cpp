// Scenario file reader/writer. Schema (YAML):
//
//   format: radattr-scenario
//   version: 1
//   name: <string>
//   duration: <s>
//   seeds: [<int>, ...]
//   rates: {detection_hz, counts_hz, count_bin, pose_hz}        (optional)
//   platform: {waypoints: [[x, y], ...], speed, array}
//   objects:
//     - {id, label, waypoints: [[x, y], ...], speed}
//   source: {carrier, activity, roi, offset, placement,
//            shielding: [{material, thickness}, ...]}
//   background: {roi_rate: [6 values] | <scalar>, shape}
//   noise: {video: {...}, lidar: {...}, pose: {...}}             (optional)
//   analysis: {placement}                                         (optional)

#include "radattr/scene.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <sstream>

namespace radattr::scene {

namespace {

[[noreturn]] void fail_at(const YAML::Node& node, const std::string& key, const std::string& msg) {
  const int line = node.Mark().line >= 0 ? node.Mark().line + 1 : 0;
  throw ParseError("scenario: line " + std::to_string(line) + ": key '" + key + "': " + msg, line, key);
}

YAML::Node require(const YAML::Node& parent, const std::string& key) {
  YAML::Node n = parent[key];
  if (!n) fail_at(parent, key, "missing required key");
  return n;
}

template <typename T>
T as(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<T>();
  } catch (const YAML::BadConversion&) {
    fail_at(node, key, "wrong value type");
  }
}

template <typename T>
void read_opt(const YAML::Node& parent, const std::string& key, T& out) {
  if (YAML::Node n = parent[key]) out = as<T>(n, key);
}

std::vector<Vec2> read_waypoints(const YAML::Node& node, const std::string& key) {
  if (!node.IsSequence()) fail_at(node, key, "expected a list of [x, y] pairs");
  std::vector<Vec2> out;
  for (const auto& p : node) {
    if (!p.IsSequence() || p.size() != 2) fail_at(p, key, "expected [x, y]");
    out.emplace_back(as<double>(p[0], key), as<double>(p[1], key));
  }
  return out;
}

void read_noise(const YAML::Node& node, SensorNoise& n) {
  if (!node) return;
  read_opt(node, "p_detect", n.p_detect);
  read_opt(node, "radial_fraction", n.radial_fraction);
  read_opt(node, "transverse_sigma", n.transverse_sigma);
  read_opt(node, "vertical_sigma", n.vertical_sigma);
  read_opt(node, "heading_sigma", n.heading_sigma);
  read_opt(node, "extent_sigma", n.extent_sigma);
  read_opt(node, "false_positive_rate", n.false_positive_rate);
  read_opt(node, "max_range", n.max_range);
  read_opt(node, "focal_length_px", n.focal_length_px);
}

void read_pose_noise(const YAML::Node& node, PoseNoise& n) {
  if (!node) return;
  read_opt(node, "slam_position_sigma", n.slam_position_sigma);
  read_opt(node, "slam_yaw_sigma", n.slam_yaw_sigma);
  read_opt(node, "ins_drift_rate", n.ins_drift_rate);
  read_opt(node, "ins_position_jitter_per_speed", n.ins_position_jitter_per_speed);
  read_opt(node, "ins_yaw_jitter_per_speed", n.ins_yaw_jitter_per_speed);
  read_opt(node, "ins_fix_interval", n.ins_fix_interval);
  read_opt(node, "timestamp_jitter", n.timestamp_jitter);
}

ScenarioConfig from_yaml(const YAML::Node& root) {
  if (!root.IsMap()) throw ParseError("scenario: top level must be a mapping", 1, "");
  const auto format = as<std::string>(require(root, "format"), "format");
  if (format != "radattr-scenario") fail_at(root["format"], "format", "expected 'radattr-scenario'");
  const int version = as<int>(require(root, "version"), "version");
  if (version != kScenarioFormatVersion) fail_at(root["version"], "version", "unsupported version");

  ScenarioConfig c;
  read_opt(root, "name", c.name);
  c.duration = as<double>(require(root, "duration"), "duration");
  if (YAML::Node seeds = root["seeds"]) {
    for (const auto& s : seeds) c.seeds.push_back(as<std::uint64_t>(s, "seeds"));
  }
  if (YAML::Node rates = root["rates"]) {
    read_opt(rates, "detection_hz", c.rates.detection_hz);
    read_opt(rates, "counts_hz", c.rates.counts_hz);
    read_opt(rates, "count_bin", c.rates.count_bin);
    read_opt(rates, "pose_hz", c.rates.pose_hz);
  }
  const YAML::Node platform = require(root, "platform");
  if (platform.IsSequence()) fail_at(platform, "platform", "exactly one platform is allowed");
  c.platform.waypoints = read_waypoints(require(platform, "waypoints"), "platform.waypoints");
  c.platform.speed = as<double>(require(platform, "speed"), "speed");
  read_opt(platform, "array", c.platform.array_id);
  if (c.platform.array_id != "hex6") fail_at(platform["array"], "array", "unknown detector array");

  const YAML::Node objects = require(root, "objects");
  if (!objects.IsSequence()) fail_at(objects, "objects", "expected a list");
  for (const auto& o : objects) {
    ObjectSpec spec;
    spec.id = as<int>(require(o, "id"), "id");
    try {
      spec.label = parse_object_class(as<std::string>(require(o, "label"), "label"));
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      fail_at(o["label"], "label", e.what());
    }
    spec.waypoints = read_waypoints(require(o, "waypoints"), "waypoints");
    spec.speed = as<double>(require(o, "speed"), "speed");
    c.objects.push_back(std::move(spec));
  }

  const YAML::Node source = require(root, "source");
  c.source.carrier_id = as<int>(require(source, "carrier"), "carrier");
  c.source.activity = as<double>(require(source, "activity"), "activity");
  read_opt(source, "roi", c.source.roi);
  read_opt(source, "offset", c.source.offset);
  if (YAML::Node placement = source["placement"]) {
    try {
      c.source.placement = response::parse_placement(as<std::string>(placement, "placement"));
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      fail_at(placement, "placement", e.what());
    }
  }
  if (YAML::Node shielding = source["shielding"]) {
    for (const auto& layer : shielding) {
      const auto material = as<std::string>(require(layer, "material"), "material");
      const double thickness = as<double>(require(layer, "thickness"), "thickness");
      try {
        c.source.shielding.push_back(response::make_shielding(material, thickness));
      } catch (const ValidationError& e) {
        fail_at(layer, "shielding", e.what());
      }
    }
  }

  const YAML::Node background = require(root, "background");
  const YAML::Node rate = require(background, "roi_rate");
  if (rate.IsSequence()) {
    if (rate.size() != kNumDetectors) fail_at(rate, "roi_rate", "expected 6 values");
    for (int k = 0; k < kNumDetectors; ++k) c.background.roi_rate[k] = as<double>(rate[k], "roi_rate");
  } else {
    c.background.roi_rate.fill(as<double>(rate, "roi_rate"));
  }
  read_opt(background, "shape", c.background.shape);

  if (YAML::Node noise = root["noise"]) {
    read_noise(noise["video"], c.video);
    read_noise(noise["lidar"], c.lidar);
    read_pose_noise(noise["pose"], c.pose);
  }
  if (YAML::Node analysis = root["analysis"]) {
    if (YAML::Node placement = analysis["placement"]) {
      try {
        c.analysis_placement = response::parse_placement(as<std::string>(placement, "placement"));
      } catch (const ParseError&) {
        throw;
      } catch (const ValidationError& e) {
        fail_at(placement, "placement", e.what());
      }
    }
  }
  c.validate();
  return c;
}

void emit_waypoints(YAML::Emitter& out, const std::vector<Vec2>& wps) {
  out << YAML::Flow << YAML::BeginSeq;
  for (const auto& p : wps) out << YAML::Flow << YAML::BeginSeq << p.x() << p.y() << YAML::EndSeq;
  out << YAML::EndSeq;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError(std::string("scenario: parse error at line ") + std::to_string(e.mark.line + 1) + ": " + e.msg,
                     e.mark.line + 1, "");
  }
  return from_yaml(root);
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string dump_scenario(const ScenarioConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(12);
  out << YAML::BeginMap;
  out << YAML::Key << "format" << YAML::Value << "radattr-scenario";
  out << YAML::Key << "version" << YAML::Value << kScenarioFormatVersion;
  out << YAML::Key << "name" << YAML::Value << c.name;
  out << YAML::Key << "duration" << YAML::Value << c.duration;
  out << YAML::Key << "seeds" << YAML::Value << YAML::Flow << c.seeds;
  out << YAML::Key << "rates" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "detection_hz" << YAML::Value << c.rates.detection_hz;
  out << YAML::Key << "counts_hz" << YAML::Value << c.rates.counts_hz;
  out << YAML::Key << "count_bin" << YAML::Value << c.rates.count_bin;
  out << YAML::Key << "pose_hz" << YAML::Value << c.rates.pose_hz;
  out << YAML::EndMap;
  out << YAML::Key << "platform" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "waypoints" << YAML::Value;
  emit_waypoints(out, c.platform.waypoints);
  out << YAML::Key << "speed" << YAML::Value << c.platform.speed;
  out << YAML::Key << "array" << YAML::Value << c.platform.array_id;
  out << YAML::EndMap;
  out << YAML::Key << "objects" << YAML::Value << YAML::BeginSeq;
  for (const auto& o : c.objects) {
    out << YAML::BeginMap;
    out << YAML::Key << "id" << YAML::Value << o.id;
    out << YAML::Key << "label" << YAML::Value << std::string(to_string(o.label));
    out << YAML::Key << "waypoints" << YAML::Value;
    emit_waypoints(out, o.waypoints);
    out << YAML::Key << "speed" << YAML::Value << o.speed;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "source" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "carrier" << YAML::Value << c.source.carrier_id;
  out << YAML::Key << "activity" << YAML::Value << c.source.activity;
  out << YAML::Key << "roi" << YAML::Value << c.source.roi;
  out << YAML::Key << "offset" << YAML::Value << c.source.offset;
  out << YAML::Key << "placement" << YAML::Value << std::string(response::to_string(c.source.placement));
  out << YAML::Key << "shielding" << YAML::Value << YAML::BeginSeq;
  for (const auto& layer : c.source.shielding) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "material" << YAML::Value << layer.material
        << YAML::Key << "thickness" << YAML::Value << layer.thickness << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;
  out << YAML::Key << "background" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "roi_rate" << YAML::Value << YAML::Flow << std::vector<double>(c.background.roi_rate.begin(), c.background.roi_rate.end());
  out << YAML::Key << "shape" << YAML::Value << c.background.shape;
  out << YAML::EndMap;
  out << YAML::Key << "noise" << YAML::Value << YAML::BeginMap;
  for (const auto* n : {&c.video, &c.lidar}) {
    out << YAML::Key << (n == &c.video ? "video" : "lidar") << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "p_detect" << YAML::Value << n->p_detect;
    out << YAML::Key << "radial_fraction" << YAML::Value << n->radial_fraction;
    out << YAML::Key << "transverse_sigma" << YAML::Value << n->transverse_sigma;
    out << YAML::Key << "vertical_sigma" << YAML::Value << n->vertical_sigma;
    out << YAML::Key << "heading_sigma" << YAML::Value << n->heading_sigma;
    out << YAML::Key << "extent_sigma" << YAML::Value << n->extent_sigma;
    out << YAML::Key << "false_positive_rate" << YAML::Value << n->false_positive_rate;
    out << YAML::Key << "max_range" << YAML::Value << n->max_range;
    out << YAML::Key << "focal_length_px" << YAML::Value << n->focal_length_px;
    out << YAML::EndMap;
  }
  out << YAML::Key << "pose" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "slam_position_sigma" << YAML::Value << c.pose.slam_position_sigma;
  out << YAML::Key << "slam_yaw_sigma" << YAML::Value << c.pose.slam_yaw_sigma;
  out << YAML::Key << "ins_drift_rate" << YAML::Value << c.pose.ins_drift_rate;
  out << YAML::Key << "ins_position_jitter_per_speed" << YAML::Value << c.pose.ins_position_jitter_per_speed;
  out << YAML::Key << "ins_yaw_jitter_per_speed" << YAML::Value << c.pose.ins_yaw_jitter_per_speed;
  out << YAML::Key << "ins_fix_interval" << YAML::Value << c.pose.ins_fix_interval;
  out << YAML::Key << "timestamp_jitter" << YAML::Value << c.pose.timestamp_jitter;
  out << YAML::EndMap;
  out << YAML::EndMap;
  if (c.analysis_placement) {
    out << YAML::Key << "analysis" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "placement" << YAML::Value << std::string(response::to_string(*c.analysis_placement));
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace radattr::scene
