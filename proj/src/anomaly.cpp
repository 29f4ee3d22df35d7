#include "radattr/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace radattr::anomaly {

namespace {

// Shape channels are floored so an observed count never meets a zero mean.
constexpr double kShapeFloor = 1e-12;

int window_bins(std::span<const scene::CountRecord> records, double window) {
  if (records.empty()) return 1;
  const double bin = records.front().dt;
  const int w = static_cast<int>(std::lround(window / bin));
  if (w < 1) throw ValidationError("alarm window shorter than one count bin");
  return w;
}

// Records regrouped per detector in time order.
std::array<std::vector<const scene::CountRecord*>, kNumDetectors> by_detector(
    std::span<const scene::CountRecord> records) {
  std::array<std::vector<const scene::CountRecord*>, kNumDetectors> out;
  for (const auto& r : records) {
    if (r.detector < 0 || r.detector >= kNumDetectors) throw ValidationError("bad detector id in count records");
    out[r.detector].push_back(&r);
  }
  for (auto& v : out) {
    std::stable_sort(v.begin(), v.end(), [](const auto* a, const auto* b) { return a->t0 < b->t0; });
  }
  return out;
}

std::string next_data_line(std::istream& is) {
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line[0] != '#') return line;
  }
  return {};
}

}  // namespace

std::vector<double> BackgroundModel::array_spectrum() const {
  std::vector<double> out(kNumChannels, 0.0);
  for (const auto& s : spectrum) {
    for (std::size_t c = 0; c < s.size() && c < out.size(); ++c) out[c] += s[c];
  }
  return out;
}

BackgroundModel calibrate_background(std::span<const scene::CountRecord> records, const std::string& roi_id) {
  const Roi roi = roi_by_id(roi_id);
  BackgroundModel m;
  m.roi = roi_id;
  std::array<double, kNumDetectors> time{};
  for (auto& s : m.spectrum) s.assign(kNumChannels, 0.0);
  for (const auto& r : records) {
    if (r.detector < 0 || r.detector >= kNumDetectors) throw ValidationError("bad detector id in count records");
    if (static_cast<int>(r.spectrum.size()) != kNumChannels) throw ValidationError("spectrum has wrong channel count");
    time[r.detector] += r.dt;
    for (int c = 0; c < kNumChannels; ++c) m.spectrum[r.detector][c] += static_cast<double>(r.spectrum[c]);
  }
  for (int k = 0; k < kNumDetectors; ++k) {
    if (!(time[k] > 0.0)) throw MissingInputError("background calibration: no records for detector " + std::to_string(k));
    double roi_sum = 0.0;
    for (int c = 0; c < kNumChannels; ++c) {
      // Half-count prior keeps empty channels strictly positive.
      m.spectrum[k][c] = (m.spectrum[k][c] + 0.5) / time[k];
      if (roi.contains(c)) roi_sum += m.spectrum[k][c];
    }
    m.roi_rate[k] = roi_sum;
  }
  m.live_time = time[0];
  return m;
}

double anomaly_value(std::span<const double> observed, std::span<const double> shape) {
  if (observed.size() != shape.size()) throw ValidationError("anomaly_value: channel count mismatch");
  const double total = std::accumulate(observed.begin(), observed.end(), 0.0);
  if (!(total > 0.0)) return 0.0;
  const double shape_total = std::accumulate(shape.begin(), shape.end(), 0.0);
  if (!(shape_total > 0.0)) throw ValidationError("anomaly_value: background shape is empty");
  const double scale = total / shape_total;
  double d = 0.0;
  for (std::size_t c = 0; c < observed.size(); ++c) {
    const double mean = std::max(shape[c], kShapeFloor * shape_total) * scale;
    const double x = observed[c];
    d += mean - x;
    if (x > 0.0) d += x * std::log(x / mean);
  }
  return std::max(0.0, 2.0 * d);
}

double anomaly_value(const Spectrum& observed, std::span<const double> shape) {
  std::vector<double> x(observed.begin(), observed.end());
  return anomaly_value(std::span<const double>(x), shape);
}

std::array<std::vector<double>, kNumDetectors> anomaly_series(std::span<const scene::CountRecord> records,
                                                              const BackgroundModel& background, double window) {
  const int w = window_bins(records, window);
  const auto per = by_detector(records);
  std::array<std::vector<double>, kNumDetectors> out;
  std::vector<double> acc(kNumChannels);
  for (int k = 0; k < kNumDetectors; ++k) {
    const auto& recs = per[k];
    out[k].assign(recs.size(), -1.0);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < recs.size(); ++j) {
      for (int c = 0; c < kNumChannels; ++c) acc[c] += static_cast<double>(recs[j]->spectrum[c]);
      if (j >= static_cast<std::size_t>(w)) {
        for (int c = 0; c < kNumChannels; ++c) acc[c] -= static_cast<double>(recs[j - w]->spectrum[c]);
      }
      if (j + 1 >= static_cast<std::size_t>(w)) out[k][j] = anomaly_value(acc, background.spectrum[k]);
    }
  }
  return out;
}

std::vector<AlarmEvent> detect_alarms(std::span<const scene::CountRecord> records, const BackgroundModel& background,
                                      const AlarmConfig& config) {
  std::vector<AlarmEvent> events;
  if (std::isinf(config.threshold)) return events;
  const int w = window_bins(records, config.window);
  const auto per = by_detector(records);
  const auto series = anomaly_series(records, background, config.window);
  for (int k = 0; k < kNumDetectors; ++k) {
    const auto& recs = per[k];
    std::optional<AlarmEvent> open;
    for (std::size_t j = 0; j < series[k].size(); ++j) {
      const double v = series[k][j];
      const bool above = v > config.threshold;
      if (above) {
        const double start = recs[j + 1 - w]->t0;
        const double stop = recs[j]->t0 + recs[j]->dt;
        if (!open) {
          open = AlarmEvent{k, start, stop, background.roi, v};
        } else {
          open->stop = stop;
          open->peak = std::max(open->peak, v);
        }
      } else if (open) {
        events.push_back(*open);
        open.reset();
      }
    }
    if (open) events.push_back(*open);
  }
  std::stable_sort(events.begin(), events.end(), [](const AlarmEvent& a, const AlarmEvent& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.detector < b.detector;
  });
  return events;
}

std::vector<Encounter> merge_alarms(const std::vector<AlarmEvent>& events) {
  std::vector<AlarmEvent> sorted = events;
  std::stable_sort(sorted.begin(), sorted.end(), [](const AlarmEvent& a, const AlarmEvent& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.detector < b.detector;
  });
  std::vector<Encounter> out;
  for (const auto& e : sorted) {
    if (!out.empty() && e.start <= out.back().stop + 1e-9) {
      auto& cur = out.back();
      cur.stop = std::max(cur.stop, e.stop);
      cur.peak = std::max(cur.peak, e.peak);
      if (std::find(cur.detectors.begin(), cur.detectors.end(), e.detector) == cur.detectors.end()) {
        cur.detectors.push_back(e.detector);
      }
    } else {
      out.push_back(Encounter{e.start, e.stop, e.peak, {e.detector}});
    }
  }
  for (auto& enc : out) std::sort(enc.detectors.begin(), enc.detectors.end());
  return out;
}

double calibrate_threshold(const std::vector<std::vector<scene::CountRecord>>& null_runs,
                           const BackgroundModel& background, double window, double far) {
  if (!(far > 0.0)) throw ValidationError("false-alarm rate must be positive");
  // An encounter starts at window position j for every threshold in
  // [m_{j-1}, m_j), where m is the per-position maximum over detectors.
  // Sweeping the interval endpoints gives the encounter count as a step
  // function of the threshold.
  std::map<double, int> delta;  // threshold -> change in count when crossing upward
  double duration = 0.0;
  for (const auto& run : null_runs) {
    if (run.empty()) continue;
    const auto series = anomaly_series(run, background, window);
    const std::size_t n = series[0].size();
    duration += static_cast<double>(n) * run.front().dt;
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      double m = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < kNumDetectors; ++k) {
        if (j < series[k].size() && series[k][j] >= 0.0) m = std::max(m, series[k][j]);
      }
      if (m > prev) {
        // Count is +1 on [prev, m).
        delta[prev] += 1;
        delta[m] -= 1;
      }
      prev = m;
    }
  }
  const double allowed = far * duration;
  // Walk thresholds from high to low, tracking the count on each interval.
  // Just below breakpoint b the count drops by delta[b]; the count at b
  // itself was checked on the previous step.
  int count = 0;
  for (auto it = delta.rbegin(); it != delta.rend(); ++it) {
    count -= it->second;
    if (count > allowed) return it->first;
  }
  return 0.0;
}

void write_background(std::ostream& os, const BackgroundModel& model, double threshold, double far) {
  os << "# radattr background-model v1\n";
  os << std::setprecision(17);
  os << "roi " << model.roi << " live_time " << model.live_time << " threshold " << threshold << " far " << far << "\n";
  for (int k = 0; k < kNumDetectors; ++k) {
    os << "detector " << k << " roi_rate " << model.roi_rate[k];
    for (double v : model.spectrum[k]) os << ' ' << v;
    os << '\n';
  }
}

BackgroundModel read_background(std::istream& is, double* threshold, double* far) {
  BackgroundModel m;
  std::istringstream head(next_data_line(is));
  std::string key_roi, key_live, key_thr, key_far;
  double thr = 0.0, rate = 0.0;
  if (!(head >> key_roi >> m.roi >> key_live >> m.live_time >> key_thr >> thr >> key_far >> rate) ||
      key_roi != "roi") {
    throw ValidationError("background model: malformed header");
  }
  if (threshold) *threshold = thr;
  if (far) *far = rate;
  for (int k = 0; k < kNumDetectors; ++k) {
    std::istringstream row(next_data_line(is));
    std::string key, key_rate;
    int id = -1;
    if (!(row >> key >> id >> key_rate >> m.roi_rate[k]) || key != "detector" || id != k) {
      throw ValidationError("background model: bad detector row");
    }
    m.spectrum[k].resize(kNumChannels);
    for (int c = 0; c < kNumChannels; ++c) {
      if (!(row >> m.spectrum[k][c])) throw ValidationError("background model: short spectrum row");
    }
  }
  return m;
}

void write_alarms(std::ostream& os, const std::vector<AlarmEvent>& events) {
  os << "# detector start stop isotope peak_value\n";
  os << std::setprecision(10);
  for (const auto& e : events) {
    os << e.detector << ' ' << e.start << ' ' << e.stop << ' ' << e.isotope << ' ' << e.peak << '\n';
  }
}

std::vector<AlarmEvent> read_alarms(std::istream& is) {
  std::vector<AlarmEvent> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    AlarmEvent e;
    if (!(row >> e.detector >> e.start >> e.stop >> e.isotope >> e.peak)) {
      throw ValidationError("alarm log: malformed line '" + line + "'");
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace radattr::anomaly
