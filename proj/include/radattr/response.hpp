#pragma once

// Detector array response and object attenuation tables.
//
// Effective area is modeled analytically: projected crystal area toward the
// source, a single intrinsic photopeak efficiency, and exponential
// attenuation through sibling crystals lying on the ray to the source.
// Object attenuation uses analytic chord lengths through occluding slabs.

#include "radattr/spectrum.hpp"
#include "radattr/types.hpp"

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace radattr::response {

// Linear attenuation coefficients at 662 keV [1/m].
inline constexpr double kMuLead = 125.7;
inline constexpr double kMuAluminum = 20.2;
inline constexpr double kMuSodiumIodide = 29.7;
inline constexpr double kMuTissue = 8.6;
inline constexpr double kMuAir = 0.00934;

/// Looks up mu at 662 keV for "lead", "aluminum", "nai", "tissue", "air".
double material_mu(const std::string& material);

struct CrystalSpec {
  Vec3 offset = Vec3::Zero();  // crystal center relative to the platform origin [m]
  Vec3 normal = Vec3::Zero();  // outward unit face normal (horizontal)
  double thickness = 0; // along the normal [m]
  double width = 0;     // horizontal, perpendicular to the normal [m]
  double height = 0;    // vertical [m]

  Vec3 tangent() const { return Vec3::UnitZ().cross(normal); }
  double face_area() const { return width * height; }
};

struct DetectorArrayGeometry {
  std::array<CrystalSpec, kNumDetectors> crystals;
  double elevation = 1.3;              // crystal centers above ground [m]
  double intrinsic_efficiency = 0.35;  // photopeak efficiency at 662 keV
  double crystal_mu = kMuSodiumIodide;

  /// Six 2x4x16 in. crystals on a ring at 60 degree spacing, long axis
  /// vertical, large faces pointing outward. Detector k sits at platform
  /// bearing 150 - 60k degrees, so detectors 3-5 face the right-hand side.
  static DetectorArrayGeometry hexagonal(double ring_radius = 0.12);

  void validate() const;
};

struct ResponseTable {
  std::string roi;
  int num_azimuths = 36;
  std::array<std::vector<double>, kNumDetectors> eps;  // [m^2], node j at j*360/num_azimuths deg

  double node_step() const { return kTwoPi / num_azimuths; }
};

ResponseTable build_response(const DetectorArrayGeometry& geometry, const Roi& roi);

/// Ray/oriented-box chord length for the half-line origin + s*dir, s >= 0.
double chord_through_crystal(const CrystalSpec& crystal, const Vec3& crystal_center,
                             const Vec3& origin, const Vec3& dir);

/// Effective area from simulated counts: 4 pi R^2 X / N.
double effective_area_from_counts(double r_sim, double x_counts, double n_particles);

/// Effective area for a source direction in the platform frame.
/// azimuth: bearing of the source from the array center [rad];
/// elevation: [rad]. Result is cos-modulated and clamped at zero.
double lookup_eps(const ResponseTable& table, double azimuth, double elevation, int detector);

struct ShieldingLayer {
  std::string material;
  double thickness = 0.0;  // [m]
  double mu = 0.0;         // [1/m]
};

ShieldingLayer make_shielding(const std::string& material, double thickness);

enum class SourcePlacement { Backpack, Trunk, Isotropic };

std::string_view to_string(SourcePlacement p);
SourcePlacement parse_placement(std::string_view name);
SourcePlacement default_placement(ObjectClass c);

struct AttenuationProfile {
  ObjectClass object_class = ObjectClass::Car;
  int num_azimuths = 72;
  std::vector<double> factors;  // transmission in (0, 1]

  double mean() const;
};

/// Transmission from a source inside an object toward each 5 degree bearing
/// (object heading frame: 0 = forward, positive = left).
AttenuationProfile build_attenuation_profile(ObjectClass object_class,
                                             std::span<const ShieldingLayer> shielding,
                                             SourcePlacement placement);

AttenuationProfile transparent_profile(ObjectClass object_class);

double attenuation_at(const AttenuationProfile& profile, double theta);

// Text tables: header line, a key line, then "azimuth_deg value" rows.
void write_response(std::ostream& os, const ResponseTable& table);
ResponseTable read_response(std::istream& is);
void write_attenuation(std::ostream& os, const AttenuationProfile& profile);
AttenuationProfile read_attenuation(std::istream& is);

}  // namespace radattr::response
