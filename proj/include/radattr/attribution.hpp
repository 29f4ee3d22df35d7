#pragma once

// Source-object attribution: per-track expected-count models across the
// detector array, Poisson maximum-likelihood fits of a shared source strength
// and per-detector backgrounds, goodness-of-fit scoring, time-offset scans and
// background-model rejection.

#include "radattr/response.hpp"
#include "radattr/scene.hpp"
#include "radattr/tracking.hpp"

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace radattr::attribution {

inline constexpr double kInfiniteDeviance = 1e300;

/// Count records restricted to the analysis span around one alarm.
struct EncounterWindow {
  int id = 0;
  double alarm_start = 0.0;
  double alarm_stop = 0.0;
  double span_start = 0.0;
  double span_stop = 0.0;
  std::string roi = "cs137";
  double bin = 0.25;
  int num_bins = 0;
  std::vector<double> t0;                                    // bin starts
  std::array<std::vector<double>, kNumDetectors> counts;     // ROI counts per detector and bin

  double bin_center(int i) const { return t0[i] + 0.5 * bin; }
};

/// Builds the window [start - margin, stop + margin] snapped outward to the
/// record bin grid and clipped to the available data.
EncounterWindow make_window(std::span<const scene::CountRecord> records, double alarm_start, double alarm_stop,
                            const std::string& roi, double margin = 3.0, int id = 0);

struct TrackModel {
  int track_id = 0;
  double bin = 0.25;
  std::array<std::vector<double>, kNumDetectors> g;  // per detector and bin [dimensionless per photon]
  std::vector<char> observed;                        // bin has track support
};

/// Shared inputs for evaluating expected counts.
struct ModelContext {
  const response::ResponseTable* response = nullptr;
  const response::DetectorArrayGeometry* geometry = nullptr;
  const std::vector<scene::PoseEstimate>* poses = nullptr;
  std::function<const response::AttenuationProfile&(ObjectClass)> attenuation;
  int sub_samples = 5;      // evaluation points per bin
  double max_gap = 1.0;     // track gaps longer than this count as unobserved [s]
};

/// Track position at time t, or nothing when t is outside the track support.
std::optional<tracking::HistorySample> track_sample_at(const tracking::Track& track, double t, double max_gap);

/// Expected-count geometry for a track shifted by `offset` seconds: the source
/// at time t sits where the track was at t - offset.
TrackModel model_counts(const tracking::Track& track, const ModelContext& ctx, const EncounterWindow& window,
                        double offset = 0.0);

struct FitOptions {
  int max_iterations = 500;
  double tolerance = 1e-9;  // relative log-likelihood change
  bool polish = true;       // Newton refinement after EM
};

struct MleFit {
  double alpha = 0.0;
  std::array<double, kNumDetectors> b{};
  double log_likelihood = 0.0;  // without the log-factorial terms
  int iterations = 0;
  bool degenerate = false;
  double alpha_se = 0.0;        // from the observed information
  std::vector<double> trace;    // log-likelihood after each EM iteration
};

MleFit fit_mle(const TrackModel& model, const EncounterWindow& window, const FitOptions& options = {});

/// Background-only fit: each detector's mean rate.
MleFit fit_background(const EncounterWindow& window);

/// Expected counts alpha g dt + b dt.
std::array<std::vector<double>, kNumDetectors> expected_counts(const TrackModel& model, double alpha,
                                                               const std::array<double, kNumDetectors>& b);

/// Poisson deviance; kInfiniteDeviance when a positive count meets a zero mean.
double deviance(std::span<const double> counts, std::span<const double> mean);

/// Full Poisson log-likelihood including log-factorials.
double poisson_log_likelihood(std::span<const double> counts, std::span<const double> mean);

struct Score {
  double p = 1.0;
  double s = 0.0;  // -log2 p
};

Score score(double deviance_value, int dof);

/// Natural log of the chi-square survival function, finite far into the tail.
double log_chi2_sf(double x, int dof);

struct FitResult {
  int track_id = 0;
  double alpha = 0.0;
  double alpha_se = 0.0;
  std::array<double, kNumDetectors> b{};
  double deviance = 0.0;
  int dof = 0;
  double p = 1.0;
  double s = 0.0;
  double bic_source = 0.0;
  double bic_background = 0.0;
  bool background_preferred = false;
  double outside_alarm_frac = 0.0;
  double offset = 0.0;      // [s]
  double offset_m = 0.0;    // offset times mean track speed [m]
  bool degenerate = false;
};

/// Fit and score one track at one offset.
FitResult evaluate(const tracking::Track& track, const ModelContext& ctx, const EncounterWindow& window,
                   double offset);

/// BIC comparison of the source fit (k = 7) against background only (k = 6).
bool bic_reject(const TrackModel& model, const EncounterWindow& window, const MleFit& fit, double* bic_source = nullptr,
                double* bic_background = nullptr);

struct OffsetGrid {
  double span = 0.5;
  double step = 0.1;

  std::vector<double> offsets() const;
};

FitResult offset_scan(const tracking::Track& track, const ModelContext& ctx, const EncounterWindow& window,
                      const OffsetGrid& grid = {});

/// Fraction of the track's samples inside the span that fall outside the alarm.
double outside_alarm_fraction(const tracking::Track& track, const EncounterWindow& window);

struct AdjudicationOptions {
  OffsetGrid grid;
  double outside_limit = 0.95;
};

struct RankedTrack {
  FitResult fit;
  ObjectClass label = ObjectClass::Car;
  bool flagged = false;
  int rank = 0;  // 1-based among unflagged, 0 if flagged
};

struct AdjudicationReport {
  EncounterWindow window;
  std::vector<RankedTrack> tracks;  // in track-id order
  std::optional<int> attributed;    // track id
};

/// Tracks with at least one history sample inside the window span.
std::vector<const tracking::Track*> candidate_tracks(const std::vector<tracking::Track>& tracks,
                                                     const EncounterWindow& window);

AdjudicationReport adjudicate(const EncounterWindow& window, const std::vector<tracking::Track>& tracks,
                              const ModelContext& ctx, const AdjudicationOptions& options = {});

}  // namespace radattr::attribution
