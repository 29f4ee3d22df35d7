#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace radattr {

// Fixed 128-channel grid spanning 0-3 MeV.
inline constexpr int kNumChannels = 128;
inline constexpr double kSpectrumMaxKev = 3000.0;
inline constexpr double kChannelWidthKev = kSpectrumMaxKev / kNumChannels;

using Spectrum = std::vector<std::int64_t>;

struct Roi {
  std::string isotope;
  double lo_kev = 0.0;
  double hi_kev = 0.0;
  int first_channel = 0;  // inclusive
  int last_channel = 0;   // inclusive

  int num_channels() const { return last_channel - first_channel + 1; }
  bool contains(int channel) const {
    return channel >= first_channel && channel <= last_channel;
  }
};

/// Builds an ROI covering every channel that overlaps [lo_kev, hi_kev].
Roi make_roi(std::string isotope, double lo_kev, double hi_kev);

/// Cs-137 photopeak ROI, 600-725 keV.
Roi cs137_roi();

/// Looks up a built-in ROI by isotope id ("cs137").
Roi roi_by_id(const std::string& isotope);

double channel_low_kev(int channel);
double channel_center_kev(int channel);

std::int64_t roi_counts(std::span<const std::int64_t> spectrum, const Roi& roi);

}  // namespace radattr
