#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace radattr {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr int kNumDetectors = 6;
inline constexpr int kNoTruth = -1;

enum class ObjectClass { Person, Car, Truck, Motorcycle, Bus };
enum class SensorKind { Video, Lidar };
enum class PoseMode { Slam, Ins };

std::string_view to_string(ObjectClass c);
std::string_view to_string(SensorKind s);
std::string_view to_string(PoseMode m);

// Throw ValidationError on unknown names.
ObjectClass parse_object_class(std::string_view name);
SensorKind parse_sensor(std::string_view name);
PoseMode parse_pose_mode(std::string_view name);

bool is_vehicle(ObjectClass c);

/// Nominal object height used to infer range from a camera bounding box [m].
double nominal_height(ObjectClass c);

/// Typical bounding box (length, width, height) [m].
Vec3 nominal_extent(ObjectClass c);

/// Wrap an angle to (-pi, pi].
double wrap_angle(double a);

// Error hierarchy. The CLI maps these onto exit codes 2, 3 and 4.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, int line, std::string key)
      : ValidationError(what), line_(line), key_(std::move(key)) {}
  int line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  int line_;
  std::string key_;
};

class MissingInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace radattr
