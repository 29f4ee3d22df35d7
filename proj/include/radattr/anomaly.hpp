#pragma once

// Spectral anomaly statistic and the sliding-window alarm detector built on it.

#include "radattr/scene.hpp"
#include "radattr/spectrum.hpp"

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace radattr::anomaly {

struct BackgroundModel {
  std::array<std::vector<double>, kNumDetectors> spectrum;  // counts per channel per second
  std::array<double, kNumDetectors> roi_rate{};             // counts per second
  std::string roi = "cs137";
  double live_time = 0.0;  // calibration time per detector [s]

  /// Channel-wise sum over detectors.
  std::vector<double> array_spectrum() const;
};

/// Per-detector mean spectra from source-free records.
BackgroundModel calibrate_background(std::span<const scene::CountRecord> records, const std::string& roi);

/// Poisson deviance between an observed spectrum and the background shape
/// scaled to the observed total. Zero for an empty observation.
double anomaly_value(std::span<const double> observed, std::span<const double> background_shape);
double anomaly_value(const Spectrum& observed, std::span<const double> background_shape);

struct AlarmEvent {
  int detector = 0;
  double start = 0.0;
  double stop = 0.0;
  std::string isotope;
  double peak = 0.0;
};

struct Encounter {
  double start = 0.0;
  double stop = 0.0;
  double peak = 0.0;
  std::vector<int> detectors;
};

struct AlarmConfig {
  double window = 2.0;  // sliding window length [s]
  double threshold = 0.0;
};

/// Anomaly value of the window ending at each bin, per detector. Entry j of
/// each series belongs to the window covering bins [j - w + 1, j]; the first
/// w - 1 entries are negative (not enough data).
std::array<std::vector<double>, kNumDetectors> anomaly_series(std::span<const scene::CountRecord> records,
                                                              const BackgroundModel& background, double window);

std::vector<AlarmEvent> detect_alarms(std::span<const scene::CountRecord> records, const BackgroundModel& background,
                                      const AlarmConfig& config);

/// Union of per-detector alarm intervals; overlapping or touching intervals merge.
std::vector<Encounter> merge_alarms(const std::vector<AlarmEvent>& events);

/// Lowest threshold whose merged alarm count over the given source-free runs
/// stays at or below far * total_duration for this and every higher threshold.
double calibrate_threshold(const std::vector<std::vector<scene::CountRecord>>& null_runs,
                           const BackgroundModel& background, double window, double far);

void write_background(std::ostream& os, const BackgroundModel& model, double threshold, double far);
BackgroundModel read_background(std::istream& is, double* threshold = nullptr, double* far = nullptr);

void write_alarms(std::ostream& os, const std::vector<AlarmEvent>& events);
std::vector<AlarmEvent> read_alarms(std::istream& is);

}  // namespace radattr::anomaly
