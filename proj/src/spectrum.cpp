#include "radattr/spectrum.hpp"

#include "radattr/types.hpp"

#include <cmath>
#include <numeric>

namespace radattr {

Roi make_roi(std::string isotope, double lo_kev, double hi_kev) {
  if (!(lo_kev < hi_kev)) throw ValidationError("roi: lower bound must be below upper bound");
  if (lo_kev < 0.0 || hi_kev > kSpectrumMaxKev) throw ValidationError("roi: outside spectrum range");
  Roi roi;
  roi.isotope = std::move(isotope);
  roi.lo_kev = lo_kev;
  roi.hi_kev = hi_kev;
  roi.first_channel = static_cast<int>(std::floor(lo_kev / kChannelWidthKev));
  // A channel overlaps when its lower edge is strictly below hi_kev.
  roi.last_channel = static_cast<int>(std::ceil(hi_kev / kChannelWidthKev)) - 1;
  if (roi.last_channel >= kNumChannels) roi.last_channel = kNumChannels - 1;
  return roi;
}

Roi cs137_roi() { return make_roi("cs137", 600.0, 725.0); }

Roi roi_by_id(const std::string& isotope) {
  if (isotope == "cs137") return cs137_roi();
  throw ValidationError("unknown isotope roi '" + isotope + "'");
}

double channel_low_kev(int channel) { return channel * kChannelWidthKev; }
double channel_center_kev(int channel) { return (channel + 0.5) * kChannelWidthKev; }

std::int64_t roi_counts(std::span<const std::int64_t> spectrum, const Roi& roi) {
  if (roi.last_channel >= static_cast<int>(spectrum.size()) || roi.first_channel < 0) {
    throw ValidationError("roi outside spectrum");
  }
  return std::accumulate(spectrum.begin() + roi.first_channel,
                         spectrum.begin() + roi.last_channel + 1, std::int64_t{0});
}

}  // namespace radattr
