#pragma once

// Track-informed integration windows: the sensitivity functional over subsets
// of time segments, its exact maximizer, array-wide configurations, ensemble
// MCMC refinement under track position uncertainty, and anomaly-value
// comparisons against fixed windows.

#include "radattr/anomaly.hpp"
#include "radattr/attribution.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace radattr::snr {

struct Segment {
  int detector = 0;
  int bin = 0;
  double dt = 0.0;  // [s]
  double w = 0.0;   // expected count rate per unit emission [1/m^2 scale]
};

/// (sum w_i dt_i) / sqrt(sum dt_i) over the given indices; 0 for an empty set.
double sensitivity(std::span<const Segment> segments, std::span<const int> indices);

struct Window {
  std::vector<int> indices;  // ascending
  double value = 0.0;
  double duration = 0.0;
};

/// Exact maximizer of `sensitivity`. Ties prefer the longer duration, then the
/// lexicographically smallest index set.
Window optimize_window(std::span<const Segment> segments);

/// Per-detector bin selections.
struct ArrayWindow {
  std::array<std::vector<int>, kNumDetectors> bins;
  double value = 0.0;
  double duration = 0.0;  // summed over detectors [s]

  int detectors_used() const;
};

/// Segments for one detector of a track model; unobserved bins get w = 0.
std::vector<Segment> detector_segments(const attribution::TrackModel& model, int detector);

/// Optimizes over the concatenation of all detectors' segments.
ArrayWindow optimize_array(const attribution::TrackModel& model);

/// Optimizes the summed-array response; every detector gets the same bins.
ArrayWindow summed_array_window(const attribution::TrackModel& model);

/// sum [lambda - x ln lambda + ln Gamma(x + 1)]; throws when lambda <= 0 meets x > 0.
double neg_log_like(std::span<const double> counts, std::span<const double> mean);

/// Channel sum of the selected (detector, bin) spectra.
std::vector<double> spectrum_for_window(std::span<const scene::CountRecord> records,
                                        const attribution::EncounterWindow& window, const ArrayWindow& selection);

/// Mean background spectrum for the same selection (counts per channel).
std::vector<double> background_for_window(const anomaly::BackgroundModel& background,
                                          const attribution::EncounterWindow& window, const ArrayWindow& selection);

struct McmcConfig {
  int walkers = 600;
  int iterations = 400;
  int burn_in = 100;
  double stretch = 2.0;
  int subset = 1000;
  int max_knots = 30;
  int sub_samples = 1;      // model evaluation points per bin inside the sampler
  double init_scale = 0.1;  // initial ball radius in prior sigmas
  std::uint64_t seed = 1;
};

/// Called for every post-burn-in state: (iteration after burn-in, walker, position, log probability).
using SampleVisitor = std::function<void(int, int, const Eigen::VectorXd&, double)>;

struct EnsembleStats {
  double acceptance = 0.0;
  int dimension = 0;
};

/// Affine-invariant ensemble sampler with the stretch move, updating two
/// half-ensembles in turn. Each walker owns its random stream, so results do
/// not depend on evaluation order.
EnsembleStats run_ensemble(const std::function<double(const Eigen::VectorXd&)>& log_prob,
                           const std::vector<Eigen::VectorXd>& initial, const McmcConfig& config,
                           const SampleVisitor& visit);

struct RefineResult {
  ArrayWindow window;
  double nll = 0.0;                 // negative log-likelihood of the chosen sample
  std::vector<Vec3> displacement;   // chosen knot offsets from the track [m]
  std::vector<double> knot_times;   // [s], source time
  int dimension = 0;
  int samples_considered = 0;
  double acceptance = 0.0;
};

/// Samples track positions with the best-fit strength and backgrounds held
/// fixed, then picks, from a random subset of post-burn-in samples, the one
/// whose array window is longest (lowest negative log-likelihood on ties).
RefineResult mcmc_refine(const tracking::Track& track, const attribution::ModelContext& ctx,
                         const attribution::EncounterWindow& window, const attribution::FitResult& fit,
                         const McmcConfig& config);

struct MethodResult {
  std::string method;
  double anomaly = 0.0;
  double duration = 0.0;  // [s]; per-detector methods report the longest detector window
  int detectors_used = 0;
};

/// Fixed-length window of all detectors centered on the bin with the largest
/// modeled source rate, shifted to fit inside the span.
ArrayWindow fixed_window(const attribution::TrackModel& model, double length);

/// Anomaly values for the per-detector configuration, the summed-array
/// window and fixed windows of 1, 2, 3 and 4 s.
std::vector<MethodResult> compare_windows(std::span<const scene::CountRecord> records,
                                          const anomaly::BackgroundModel& background,
                                          const attribution::EncounterWindow& window,
                                          const attribution::TrackModel& model, const ArrayWindow& configuration);

void write_comparison(std::ostream& os, int encounter_id, const std::vector<MethodResult>& rows);

}  // namespace radattr::snr
