#include "radattr/response.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace radattr::response {

namespace {

constexpr double kInch = 0.0254;
constexpr double kResponseDistance = 10.0;

// Car-like body: engine block in the forward 60 degree sector, thin walls elsewhere.
constexpr double kEngineBlockThickness = 1.0;
constexpr double kEngineHalfSector = kPi / 6.0;
constexpr double kWallThickness = 0.05;
constexpr double kMinWallIncidence = 0.2;
constexpr double kTrunkOffset = 1.3;

// Pedestrian torso as a tissue cylinder just ahead of the backpack.
constexpr double kTorsoRadius = 0.15;
constexpr double kTorsoCenterAhead = 0.17;

double interpolate_periodic(const std::vector<double>& nodes, double angle) {
  const auto n = static_cast<int>(nodes.size());
  const double step = kTwoPi / n;
  double a = std::fmod(angle, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  const double pos = a / step;
  int lo = static_cast<int>(std::floor(pos));
  double frac = pos - lo;
  lo %= n;
  const int hi = (lo + 1) % n;
  return nodes[lo] + frac * (nodes[hi] - nodes[lo]);
}

double shielding_transmission(std::span<const ShieldingLayer> shielding) {
  double mu_t = 0.0;
  for (const auto& layer : shielding) mu_t += layer.mu * layer.thickness;
  return std::exp(-mu_t);
}

double vehicle_chord(ObjectClass c, double theta) {
  const Vec3 ext = nominal_extent(c);
  const double half_len = 0.5 * ext.x();
  const double half_wid = 0.5 * ext.y();
  theta = wrap_angle(theta);
  if (std::abs(theta) <= kEngineHalfSector) {
    return kEngineBlockThickness / std::cos(theta);
  }
  // Exit wall of a ray leaving the trunk position.
  const double sx = -std::min(kTrunkOffset, half_len - 0.1);
  const double dx = std::cos(theta);
  const double dy = std::sin(theta);
  double t_x = std::numeric_limits<double>::infinity();
  double t_y = std::numeric_limits<double>::infinity();
  if (std::abs(dx) > 1e-12) t_x = ((dx > 0 ? half_len : -half_len) - sx) / dx;
  if (std::abs(dy) > 1e-12) t_y = (dy > 0 ? half_wid : -half_wid) / dy;
  const double incidence = t_x < t_y ? std::abs(dx) : std::abs(dy);
  return kWallThickness / std::max(incidence, kMinWallIncidence);
}

double torso_chord(double theta) {
  // Circle of radius R at (kTorsoCenterAhead, 0); ray from the origin.
  const double b = kTorsoCenterAhead * std::cos(theta);
  const double c = kTorsoCenterAhead * kTorsoCenterAhead - kTorsoRadius * kTorsoRadius;
  const double disc = b * b - c;
  if (b <= 0.0 || disc <= 0.0) return 0.0;
  return 2.0 * std::sqrt(disc);
}

std::string expect_line(std::istream& is, const char* what) {
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line[0] != '#') return line;
  }
  throw ValidationError(std::string("table: unexpected end of input, expected ") + what);
}

}  // namespace

double material_mu(const std::string& material) {
  if (material == "lead" || material == "pb") return kMuLead;
  if (material == "aluminum" || material == "al") return kMuAluminum;
  if (material == "nai") return kMuSodiumIodide;
  if (material == "tissue") return kMuTissue;
  if (material == "air") return kMuAir;
  throw ValidationError("unknown material '" + material + "'");
}

DetectorArrayGeometry DetectorArrayGeometry::hexagonal(double ring_radius) {
  DetectorArrayGeometry g;
  for (int k = 0; k < kNumDetectors; ++k) {
    const double bearing = (150.0 - 60.0 * k) * kPi / 180.0;
    CrystalSpec c;
    c.normal = Vec3(std::cos(bearing), std::sin(bearing), 0.0);
    c.offset = ring_radius * c.normal + Vec3(0.0, 0.0, g.elevation);
    c.thickness = 2.0 * kInch;
    c.width = 4.0 * kInch;
    c.height = 16.0 * kInch;
    g.crystals[k] = c;
  }
  return g;
}

void DetectorArrayGeometry::validate() const {
  for (int k = 0; k < kNumDetectors; ++k) {
    const auto& c = crystals[k];
    if (std::abs(c.normal.norm() - 1.0) > 1e-9) throw ValidationError("detector normal not unit length");
    if (c.thickness <= 0 || c.width <= 0 || c.height <= 0) throw ValidationError("detector dimensions must be positive");
  }
  for (int k = 0; k < kNumDetectors; ++k) {
    const auto& a = crystals[k].offset;
    const auto& b = crystals[(k + 1) % kNumDetectors].offset;
    const double angle_a = std::atan2(a.y(), a.x());
    const double angle_b = std::atan2(b.y(), b.x());
    if (std::abs(std::abs(wrap_angle(angle_a - angle_b)) - kPi / 3.0) > 1e-9) {
      throw ValidationError("detectors not at 60 degree spacing");
    }
  }
}

double chord_through_crystal(const CrystalSpec& crystal, const Vec3& crystal_center,
                             const Vec3& origin, const Vec3& dir) {
  const std::array<Vec3, 3> axes{crystal.normal, crystal.tangent(), Vec3::UnitZ()};
  const std::array<double, 3> half{0.5 * crystal.thickness, 0.5 * crystal.width, 0.5 * crystal.height};
  double s_near = 0.0;
  double s_far = std::numeric_limits<double>::infinity();
  const Vec3 rel = origin - crystal_center;
  for (int a = 0; a < 3; ++a) {
    const double p = rel.dot(axes[a]);
    const double d = dir.dot(axes[a]);
    if (std::abs(d) < 1e-15) {
      if (std::abs(p) > half[a]) return 0.0;
      continue;
    }
    double s1 = (-half[a] - p) / d;
    double s2 = (half[a] - p) / d;
    if (s1 > s2) std::swap(s1, s2);
    s_near = std::max(s_near, s1);
    s_far = std::min(s_far, s2);
    if (s_near >= s_far) return 0.0;
  }
  return s_far - s_near;
}

ResponseTable build_response(const DetectorArrayGeometry& geometry, const Roi& roi) {
  geometry.validate();
  ResponseTable table;
  table.roi = roi.isotope;
  const int n = table.num_azimuths;
  for (int k = 0; k < kNumDetectors; ++k) {
    const auto& crystal = geometry.crystals[k];
    const Vec3 tangent = crystal.tangent();
    const double area_normal = crystal.width * crystal.height;
    const double area_tangent = crystal.thickness * crystal.height;
    const double area_top = crystal.thickness * crystal.width;
    auto& eps = table.eps[k];
    eps.resize(n);
    for (int j = 0; j < n; ++j) {
      const double az = j * table.node_step();
      const Vec3 source = Vec3(kResponseDistance * std::cos(az), kResponseDistance * std::sin(az),
                               geometry.elevation);
      const Vec3 to_source = (source - crystal.offset).normalized();
      const double projected = area_normal * std::abs(to_source.dot(crystal.normal)) +
                               area_tangent * std::abs(to_source.dot(tangent)) +
                               area_top * std::abs(to_source.z());
      double path = 0.0;
      for (int other = 0; other < kNumDetectors; ++other) {
        if (other == k) continue;
        path += chord_through_crystal(geometry.crystals[other], geometry.crystals[other].offset,
                                      crystal.offset, to_source);
      }
      eps[j] = projected * geometry.intrinsic_efficiency * std::exp(-geometry.crystal_mu * path);
    }
  }
  return table;
}

double effective_area_from_counts(double r_sim, double x_counts, double n_particles) {
  if (!(r_sim > 0.0) || !(n_particles > 0.0) || x_counts < 0.0) {
    throw ValidationError("effective_area_from_counts: inputs must be positive");
  }
  return 4.0 * kPi * r_sim * r_sim * x_counts / n_particles;
}

double lookup_eps(const ResponseTable& table, double azimuth, double elevation, int detector) {
  const double c = std::cos(elevation);
  if (c <= 0.0) return 0.0;
  return std::max(0.0, interpolate_periodic(table.eps.at(detector), azimuth)) * c;
}

ShieldingLayer make_shielding(const std::string& material, double thickness) {
  if (thickness < 0.0) throw ValidationError("shielding thickness must be >= 0");
  return ShieldingLayer{material, thickness, material_mu(material)};
}

std::string_view to_string(SourcePlacement p) {
  switch (p) {
    case SourcePlacement::Backpack: return "backpack";
    case SourcePlacement::Trunk: return "trunk";
    case SourcePlacement::Isotropic: return "isotropic";
  }
  return "isotropic";
}

SourcePlacement parse_placement(std::string_view name) {
  if (name == "backpack") return SourcePlacement::Backpack;
  if (name == "trunk") return SourcePlacement::Trunk;
  if (name == "isotropic") return SourcePlacement::Isotropic;
  throw ValidationError("unknown source placement '" + std::string(name) + "'");
}

SourcePlacement default_placement(ObjectClass c) {
  if (c == ObjectClass::Person) return SourcePlacement::Backpack;
  if (c == ObjectClass::Motorcycle) return SourcePlacement::Isotropic;
  return SourcePlacement::Trunk;
}

double AttenuationProfile::mean() const {
  return std::accumulate(factors.begin(), factors.end(), 0.0) / static_cast<double>(factors.size());
}

AttenuationProfile build_attenuation_profile(ObjectClass object_class,
                                             std::span<const ShieldingLayer> shielding,
                                             SourcePlacement placement) {
  for (const auto& layer : shielding) {
    if (layer.thickness < 0.0 || !(layer.mu > 0.0)) throw ValidationError("invalid shielding layer");
  }
  AttenuationProfile profile;
  profile.object_class = object_class;
  const double shield = shielding_transmission(shielding);
  profile.factors.resize(profile.num_azimuths);
  for (int j = 0; j < profile.num_azimuths; ++j) {
    const double theta = j * kTwoPi / profile.num_azimuths;
    double mu_t = 0.0;
    switch (placement) {
      case SourcePlacement::Backpack:
        mu_t = kMuTissue * torso_chord(theta);
        break;
      case SourcePlacement::Trunk:
        mu_t = kMuAluminum * vehicle_chord(object_class, theta);
        break;
      case SourcePlacement::Isotropic:
        break;
    }
    profile.factors[j] = shield * std::exp(-mu_t);
  }
  return profile;
}

AttenuationProfile transparent_profile(ObjectClass object_class) {
  return build_attenuation_profile(object_class, {}, SourcePlacement::Isotropic);
}

double attenuation_at(const AttenuationProfile& profile, double theta) {
  return interpolate_periodic(profile.factors, theta);
}

void write_response(std::ostream& os, const ResponseTable& table) {
  os << "# radattr response-table v1\n";
  os << "roi " << table.roi << " azimuths " << table.num_azimuths << "\n";
  os << std::setprecision(17);
  for (int k = 0; k < kNumDetectors; ++k) {
    os << "detector " << k << "\n";
    for (int j = 0; j < table.num_azimuths; ++j) {
      os << (j * 360.0 / table.num_azimuths) << " " << table.eps[k][j] << "\n";
    }
  }
}

ResponseTable read_response(std::istream& is) {
  ResponseTable table;
  std::string key;
  std::istringstream header(expect_line(is, "roi line"));
  std::string az_key;
  if (!(header >> key >> table.roi >> az_key >> table.num_azimuths) || key != "roi" || table.num_azimuths <= 0) {
    throw ValidationError("response table: malformed roi line");
  }
  for (int k = 0; k < kNumDetectors; ++k) {
    std::istringstream det(expect_line(is, "detector line"));
    int id = -1;
    if (!(det >> key >> id) || key != "detector" || id != k) throw ValidationError("response table: bad detector header");
    table.eps[k].resize(table.num_azimuths);
    for (int j = 0; j < table.num_azimuths; ++j) {
      std::istringstream row(expect_line(is, "azimuth row"));
      double az = 0.0;
      if (!(row >> az >> table.eps[k][j])) throw ValidationError("response table: bad row");
      if (table.eps[k][j] < 0.0) throw ValidationError("response table: negative effective area");
    }
  }
  return table;
}

void write_attenuation(std::ostream& os, const AttenuationProfile& profile) {
  os << "# radattr attenuation-profile v1\n";
  os << "class " << to_string(profile.object_class) << " azimuths " << profile.num_azimuths << "\n";
  os << std::setprecision(17);
  for (int j = 0; j < profile.num_azimuths; ++j) {
    os << (j * 360.0 / profile.num_azimuths) << " " << profile.factors[j] << "\n";
  }
}

AttenuationProfile read_attenuation(std::istream& is) {
  AttenuationProfile profile;
  std::istringstream header(expect_line(is, "class line"));
  std::string key, cls, az_key;
  if (!(header >> key >> cls >> az_key >> profile.num_azimuths) || key != "class" || profile.num_azimuths <= 0) {
    throw ValidationError("attenuation profile: malformed class line");
  }
  profile.object_class = parse_object_class(cls);
  profile.factors.resize(profile.num_azimuths);
  for (int j = 0; j < profile.num_azimuths; ++j) {
    std::istringstream row(expect_line(is, "azimuth row"));
    double az = 0.0;
    if (!(row >> az >> profile.factors[j])) throw ValidationError("attenuation profile: bad row");
    if (!(profile.factors[j] > 0.0) || profile.factors[j] > 1.0) {
      throw ValidationError("attenuation profile: factor outside (0, 1]");
    }
  }
  return profile;
}

}  // namespace radattr::response
