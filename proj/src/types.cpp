#include "radattr/types.hpp"

#include <cmath>

namespace radattr {

std::string_view to_string(ObjectClass c) {
  switch (c) {
    case ObjectClass::Person: return "person";
    case ObjectClass::Car: return "car";
    case ObjectClass::Truck: return "truck";
    case ObjectClass::Motorcycle: return "motorcycle";
    case ObjectClass::Bus: return "bus";
  }
  return "unknown";
}

std::string_view to_string(SensorKind s) {
  return s == SensorKind::Video ? "video" : "lidar";
}

std::string_view to_string(PoseMode m) {
  return m == PoseMode::Slam ? "slam" : "ins";
}

ObjectClass parse_object_class(std::string_view name) {
  if (name == "person") return ObjectClass::Person;
  if (name == "car") return ObjectClass::Car;
  if (name == "truck") return ObjectClass::Truck;
  if (name == "motorcycle") return ObjectClass::Motorcycle;
  if (name == "bus") return ObjectClass::Bus;
  throw ValidationError("unknown object class '" + std::string(name) + "'");
}

SensorKind parse_sensor(std::string_view name) {
  if (name == "video") return SensorKind::Video;
  if (name == "lidar") return SensorKind::Lidar;
  throw ValidationError("unknown sensor '" + std::string(name) + "'");
}

PoseMode parse_pose_mode(std::string_view name) {
  if (name == "slam" || name == "SLAM") return PoseMode::Slam;
  if (name == "ins" || name == "INS") return PoseMode::Ins;
  throw ValidationError("unknown pose mode '" + std::string(name) + "'");
}

bool is_vehicle(ObjectClass c) { return c != ObjectClass::Person; }

double nominal_height(ObjectClass c) {
  switch (c) {
    case ObjectClass::Person: return 1.75;
    case ObjectClass::Car: return 1.43;
    case ObjectClass::Truck: return 1.80;
    case ObjectClass::Motorcycle: return 0.80;
    case ObjectClass::Bus: return 2.5;
  }
  return 1.0;
}

Vec3 nominal_extent(ObjectClass c) {
  switch (c) {
    case ObjectClass::Person: return {0.5, 0.6, 1.75};
    case ObjectClass::Car: return {4.5, 1.8, 1.43};
    case ObjectClass::Truck: return {5.5, 2.0, 1.80};
    case ObjectClass::Motorcycle: return {2.1, 0.8, 0.80};
    case ObjectClass::Bus: return {12.0, 2.55, 2.5};
  }
  return {1.0, 1.0, 1.0};
}

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a <= -kPi) a += kTwoPi;
  if (a > kPi) a -= kTwoPi;
  return a;
}

}  // namespace radattr
