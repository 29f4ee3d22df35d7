#include "radattr/snr.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

namespace radattr::snr {

namespace {

constexpr double kTieTolerance = 1e-12;

bool nearly_equal(double a, double b) {
  return std::abs(a - b) <= kTieTolerance * std::max({std::abs(a), std::abs(b), 1e-300});
}

std::mt19937_64 walker_rng(std::uint64_t seed, std::uint32_t stream, std::uint32_t walker) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream, walker};
  return std::mt19937_64(seq);
}

ArrayWindow split(const std::vector<Segment>& segments, const Window& w) {
  ArrayWindow out;
  out.value = w.value;
  out.duration = w.duration;
  for (int idx : w.indices) out.bins[segments[idx].detector].push_back(segments[idx].bin);
  for (auto& b : out.bins) std::sort(b.begin(), b.end());
  return out;
}

// Bin index of each record on the window grid, keyed by detector.
std::map<std::pair<int, int>, const scene::CountRecord*> index_records(std::span<const scene::CountRecord> records,
                                                                        const attribution::EncounterWindow& window) {
  std::map<std::pair<int, int>, const scene::CountRecord*> out;
  if (window.num_bins == 0) return out;
  for (const auto& r : records) {
    const double pos = (r.t0 - window.t0.front()) / window.bin;
    const long i = std::lround(pos);
    if (i < 0 || i >= window.num_bins || std::abs(pos - static_cast<double>(i)) > 1e-6) continue;
    out[{r.detector, static_cast<int>(i)}] = &r;
  }
  return out;
}

}  // namespace

int ArrayWindow::detectors_used() const {
  return static_cast<int>(std::count_if(bins.begin(), bins.end(), [](const auto& b) { return !b.empty(); }));
}

double sensitivity(std::span<const Segment> segments, std::span<const int> indices) {
  double num = 0.0, den = 0.0;
  for (int i : indices) {
    num += segments[i].w * segments[i].dt;
    den += segments[i].dt;
  }
  return den > 0.0 ? num / std::sqrt(den) : 0.0;
}

Window optimize_window(std::span<const Segment> segments) {
  Window best;
  const int n = static_cast<int>(segments.size());
  if (n == 0) return best;
  for (const auto& s : segments) {
    if (!(s.dt > 0.0)) throw ValidationError("optimize_window: segment durations must be positive");
    if (!(s.w >= 0.0)) throw ValidationError("optimize_window: segment weights must be non-negative");
  }
  // The maximizer is {w > c} plus all or none of the segments with w == c, so
  // only prefixes of the weight ordering that end on a tie-group boundary
  // need checking.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return segments[a].w > segments[b].w; });
  double num = 0.0, den = 0.0;
  int best_len = 0;
  double best_value = -1.0, best_duration = 0.0;
  std::vector<int> best_set;
  for (int k = 0; k < n;) {
    int end = k;
    while (end < n && segments[order[end]].w == segments[order[k]].w) {
      num += segments[order[end]].w * segments[order[end]].dt;
      den += segments[order[end]].dt;
      ++end;
    }
    const double value = num / std::sqrt(den);
    bool take = false;
    if (best_len == 0 || (value > best_value && !nearly_equal(value, best_value))) {
      take = true;
    } else if (nearly_equal(value, best_value)) {
      if (den > best_duration && !nearly_equal(den, best_duration)) {
        take = true;
      } else if (nearly_equal(den, best_duration)) {
        std::vector<int> cand(order.begin(), order.begin() + end);
        std::sort(cand.begin(), cand.end());
        take = std::lexicographical_compare(cand.begin(), cand.end(), best_set.begin(), best_set.end());
      }
    }
    if (take) {
      best_len = end;
      best_value = value;
      best_duration = den;
      best_set.assign(order.begin(), order.begin() + end);
      std::sort(best_set.begin(), best_set.end());
    }
    k = end;
  }
  best.indices = std::move(best_set);
  best.value = sensitivity(segments, best.indices);
  best.duration = 0.0;
  for (int i : best.indices) best.duration += segments[i].dt;
  return best;
}

std::vector<Segment> detector_segments(const attribution::TrackModel& model, int detector) {
  std::vector<Segment> out;
  const auto& g = model.g[detector];
  out.reserve(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const bool seen = i < model.observed.size() ? model.observed[i] != 0 : true;
    out.push_back(Segment{detector, static_cast<int>(i), model.bin, seen ? std::max(0.0, g[i]) : 0.0});
  }
  return out;
}

ArrayWindow optimize_array(const attribution::TrackModel& model) {
  std::vector<Segment> all;
  for (int k = 0; k < kNumDetectors; ++k) {
    const auto s = detector_segments(model, k);
    all.insert(all.end(), s.begin(), s.end());
  }
  if (all.empty()) return {};
  return split(all, optimize_window(all));
}

ArrayWindow summed_array_window(const attribution::TrackModel& model) {
  const std::size_t n = model.g[0].size();
  std::vector<Segment> summed(n);
  for (std::size_t i = 0; i < n; ++i) {
    summed[i] = Segment{-1, static_cast<int>(i), model.bin, 0.0};
    const bool seen = i < model.observed.size() ? model.observed[i] != 0 : true;
    if (!seen) continue;
    for (int k = 0; k < kNumDetectors; ++k) summed[i].w += std::max(0.0, model.g[k][i]);
  }
  ArrayWindow out;
  if (n == 0) return out;
  const Window w = optimize_window(summed);
  out.value = w.value;
  for (auto& b : out.bins) {
    for (int idx : w.indices) b.push_back(summed[idx].bin);
  }
  out.duration = kNumDetectors * w.duration;
  return out;
}

double neg_log_like(std::span<const double> counts, std::span<const double> mean) {
  if (counts.size() != mean.size()) throw ValidationError("neg_log_like: length mismatch");
  double l = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double x = counts[i], m = mean[i];
    if (m < 0.0 || (m == 0.0 && x > 0.0)) throw NumericalError("neg_log_like: non-positive mean meets a count");
    l += m + std::lgamma(x + 1.0);
    if (x > 0.0) l -= x * std::log(m);
  }
  return l;
}

std::vector<double> spectrum_for_window(std::span<const scene::CountRecord> records,
                                        const attribution::EncounterWindow& window, const ArrayWindow& selection) {
  const auto index = index_records(records, window);
  std::vector<double> out(kNumChannels, 0.0);
  for (int k = 0; k < kNumDetectors; ++k) {
    for (int i : selection.bins[k]) {
      const auto it = index.find({k, i});
      if (it == index.end()) {
        throw MissingInputError("spectrum_for_window: no record for detector " + std::to_string(k) + " bin " +
                                std::to_string(i));
      }
      const auto& spec = it->second->spectrum;
      for (int c = 0; c < kNumChannels && c < static_cast<int>(spec.size()); ++c) out[c] += spec[c];
    }
  }
  return out;
}

std::vector<double> background_for_window(const anomaly::BackgroundModel& background,
                                          const attribution::EncounterWindow& window, const ArrayWindow& selection) {
  std::vector<double> out(kNumChannels, 0.0);
  for (int k = 0; k < kNumDetectors; ++k) {
    const double t = window.bin * static_cast<double>(selection.bins[k].size());
    if (t == 0.0) continue;
    for (int c = 0; c < kNumChannels; ++c) out[c] += background.spectrum[k][c] * t;
  }
  return out;
}

EnsembleStats run_ensemble(const std::function<double(const Eigen::VectorXd&)>& log_prob,
                           const std::vector<Eigen::VectorXd>& initial, const McmcConfig& config,
                           const SampleVisitor& visit) {
  const int m = static_cast<int>(initial.size());
  if (m < 4) throw ValidationError("ensemble sampler needs at least 4 walkers");
  const int d = static_cast<int>(initial.front().size());
  if (m < 2 * d) throw ValidationError("ensemble sampler needs at least twice as many walkers as dimensions");
  if (config.burn_in < 0 || config.burn_in >= config.iterations) {
    throw ValidationError("burn-in must be shorter than the run");
  }
  if (!(config.stretch > 1.0)) throw ValidationError("stretch parameter must exceed 1");

  std::vector<std::mt19937_64> rng;
  rng.reserve(m);
  for (int j = 0; j < m; ++j) rng.push_back(walker_rng(config.seed, 0x53545245u, static_cast<std::uint32_t>(j)));
  std::vector<Eigen::VectorXd> x = initial;
  std::vector<double> lp(m);
  for (int j = 0; j < m; ++j) {
    if (x[j].size() != d) throw ValidationError("walkers disagree on dimension");
    lp[j] = log_prob(x[j]);
    if (!std::isfinite(lp[j])) throw NumericalError("initial walker has non-finite log probability");
  }
  const int half = m / 2;
  const double a = config.stretch;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  long accepted = 0;
  Eigen::VectorXd y(d);
  for (int it = 0; it < config.iterations; ++it) {
    for (int h = 0; h < 2; ++h) {
      const int lo = h == 0 ? 0 : half, hi = h == 0 ? half : m;
      const int olo = h == 0 ? half : 0, ohi = h == 0 ? m : half;
      std::uniform_int_distribution<int> pick(olo, ohi - 1);
      for (int j = lo; j < hi; ++j) {
        auto& r = rng[j];
        const int k = pick(r);
        const double u = unit(r);
        const double z = std::pow((a - 1.0) * u + 1.0, 2) / a;
        y = x[k] + z * (x[j] - x[k]);
        const double lp_y = log_prob(y);
        const double log_ratio = (d - 1) * std::log(z) + lp_y - lp[j];
        const double v = unit(r);
        if (std::isfinite(lp_y) && std::log(v) < log_ratio) {
          x[j] = y;
          lp[j] = lp_y;
          ++accepted;
        }
      }
    }
    if (it >= config.burn_in && visit) {
      for (int j = 0; j < m; ++j) visit(it - config.burn_in, j, x[j], lp[j]);
    }
  }
  EnsembleStats stats;
  stats.dimension = d;
  stats.acceptance = static_cast<double>(accepted) / (static_cast<double>(m) * config.iterations);
  return stats;
}

namespace {

struct EvalPoint {
  int bin = 0;
  double t_source = 0.0;
  Vec3 position = Vec3::Zero();
  std::optional<double> heading;
  Vec3 platform = Vec3::Zero();
  double yaw = 0.0;
  int knot = 0;      // left knot
  double frac = 0.0; // weight of the right knot
  Vec3 sigma = Vec3::Zero();
};

}  // namespace

RefineResult mcmc_refine(const tracking::Track& track, const attribution::ModelContext& ctx,
                         const attribution::EncounterWindow& window, const attribution::FitResult& fit,
                         const McmcConfig& config) {
  if (!ctx.response || !ctx.geometry || !ctx.poses || !ctx.attenuation) {
    throw ValidationError("mcmc_refine: incomplete model context");
  }
  const int nb = window.num_bins;
  const double dt = window.bin;
  const int sub = std::max(1, config.sub_samples);
  const response::AttenuationProfile& att = ctx.attenuation(track.label);

  std::vector<EvalPoint> points;
  std::vector<char> observed(nb, 0);
  for (int i = 0; i < nb; ++i) {
    for (int p = 0; p < sub; ++p) {
      const double t = window.t0[i] + (p + 0.5) * dt / sub;
      const auto s = attribution::track_sample_at(track, t - fit.offset, ctx.max_gap);
      if (!s) continue;
      const scene::PoseEstimate pose = scene::interpolate_pose(*ctx.poses, t);
      EvalPoint e;
      e.bin = i;
      e.t_source = t - fit.offset;
      e.position = s->position;
      e.heading = s->heading;
      e.platform = pose.position;
      e.yaw = pose.yaw;
      for (int a = 0; a < 3; ++a) e.sigma[a] = std::sqrt(std::max(0.0, s->position_cov(a, a)));
      points.push_back(e);
      observed[i] = 1;
    }
  }

  // Counts and the fixed part of the likelihood.
  double lgamma_sum = 0.0;
  for (int k = 0; k < kNumDetectors; ++k) {
    for (int i = 0; i < nb; ++i) lgamma_sum += std::lgamma(window.counts[k][i] + 1.0);
  }

  auto model_for = [&](const std::vector<Vec3>& disp) {
    attribution::TrackModel m;
    m.track_id = track.id;
    m.bin = dt;
    for (auto& g : m.g) g.assign(nb, 0.0);
    m.observed = observed;
    for (const auto& e : points) {
      Vec3 src = e.position;
      if (!disp.empty()) {
        src += e.frac > 0.0 ? ((1.0 - e.frac) * disp[e.knot] + e.frac * disp[e.knot + 1]).eval() : disp[e.knot];
      }
      for (int k = 0; k < kNumDetectors; ++k) {
        m.g[k][e.bin] += scene::geometric_factor(*ctx.response, att, *ctx.geometry, e.platform, e.yaw, src, e.heading,
                                                 k) /
                         sub;
      }
    }
    return m;
  };
  auto nll_for = [&](const attribution::TrackModel& m) {
    double l = lgamma_sum;
    for (int k = 0; k < kNumDetectors; ++k) {
      for (int i = 0; i < nb; ++i) {
        const double lam = (fit.alpha * m.g[k][i] + fit.b[k]) * dt;
        const double x = window.counts[k][i];
        if (!(lam > 0.0)) {
          if (x > 0.0) return std::numeric_limits<double>::infinity();
          continue;
        }
        l += lam - x * std::log(lam);
      }
    }
    return l;
  };

  RefineResult result;
  if (points.empty()) {
    const auto m = model_for({});
    result.window = optimize_array(m);
    result.nll = nll_for(m);
    return result;
  }

  // Knots evenly spaced over the supported source times.
  const int observed_bins = static_cast<int>(std::count(observed.begin(), observed.end(), 1));
  // Three axes per knot at most, so small ensembles still hold walkers >= 2 x dim.
  const int knots = std::max(1, std::min({config.max_knots, observed_bins, config.walkers / 6}));
  const double t_lo = points.front().t_source, t_hi = points.back().t_source;
  std::vector<double> knot_t(knots);
  for (int j = 0; j < knots; ++j) {
    knot_t[j] = knots == 1 ? 0.5 * (t_lo + t_hi) : t_lo + (t_hi - t_lo) * j / (knots - 1);
  }
  std::vector<Vec3> knot_sigma(knots, Vec3::Zero());
  std::vector<double> nearest(knots, std::numeric_limits<double>::infinity());
  for (auto& e : points) {
    if (knots > 1) {
      const double u = (e.t_source - t_lo) / (t_hi - t_lo) * (knots - 1);
      e.knot = std::clamp(static_cast<int>(std::floor(u)), 0, knots - 2);
      e.frac = std::clamp(u - e.knot, 0.0, 1.0);
    }
    for (int j = 0; j < knots; ++j) {
      const double gap = std::abs(e.t_source - knot_t[j]);
      if (gap < nearest[j]) {
        nearest[j] = gap;
        knot_sigma[j] = e.sigma;
      }
    }
  }

  // Free coordinates: those with a usable prior width.
  std::vector<std::pair<int, int>> free;  // (knot, axis)
  for (int j = 0; j < knots; ++j) {
    for (int a = 0; a < 3; ++a) {
      if (knot_sigma[j][a] > 1e-9) free.emplace_back(j, a);
    }
  }
  const int dim = static_cast<int>(free.size());
  result.dimension = dim;
  result.knot_times = knot_t;
  auto unpack = [&](const Eigen::VectorXd& theta) {
    std::vector<Vec3> disp(knots, Vec3::Zero());
    for (int q = 0; q < dim; ++q) disp[free[q].first][free[q].second] = theta[q];
    return disp;
  };
  auto log_prior = [&](const Eigen::VectorXd& theta) {
    double s = 0.0;
    for (int q = 0; q < dim; ++q) {
      const double z = theta[q] / knot_sigma[free[q].first][free[q].second];
      s -= 0.5 * z * z;
    }
    return s;
  };

  if (dim == 0) {
    const auto m = model_for(std::vector<Vec3>(knots, Vec3::Zero()));
    result.window = optimize_array(m);
    result.nll = nll_for(m);
    result.displacement.assign(knots, Vec3::Zero());
    return result;
  }

  auto log_prob = [&](const Eigen::VectorXd& theta) {
    const double l = nll_for(model_for(unpack(theta)));
    if (!std::isfinite(l)) return -std::numeric_limits<double>::infinity();
    return log_prior(theta) - l;
  };

  std::vector<Eigen::VectorXd> init(config.walkers, Eigen::VectorXd::Zero(dim));
  for (int w = 0; w < config.walkers; ++w) {
    auto r = walker_rng(config.seed, 0x494e4954u, static_cast<std::uint32_t>(w));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int q = 0; q < dim; ++q) {
      init[w][q] = config.init_scale * knot_sigma[free[q].first][free[q].second] * gauss(r);
    }
  }

  // Random subset of post-burn-in states, drawn before sampling.
  const long kept = static_cast<long>(config.iterations - config.burn_in) * config.walkers;
  const long take = std::min<long>(std::max(1, config.subset), kept);
  std::vector<char> chosen(kept, 0);
  {
    auto r = walker_rng(config.seed, 0x53554253u, 0);
    std::vector<long> all(kept);
    std::iota(all.begin(), all.end(), 0L);
    for (long i = 0; i < take; ++i) {
      std::uniform_int_distribution<long> pick(i, kept - 1);
      std::swap(all[i], all[pick(r)]);
      chosen[all[i]] = 1;
    }
  }

  bool have = false;
  double best_duration = 0.0, best_nll = 0.0;
  auto visit = [&](int iter, int walker, const Eigen::VectorXd& theta, double lp) {
    const long flat = static_cast<long>(iter) * config.walkers + walker;
    if (!chosen[flat]) return;
    const auto disp = unpack(theta);
    const auto m = model_for(disp);
    const ArrayWindow w = optimize_array(m);
    const double nll = log_prior(theta) - lp;
    ++result.samples_considered;
    const bool better = !have || w.duration > best_duration || (w.duration == best_duration && nll < best_nll);
    if (better) {
      have = true;
      best_duration = w.duration;
      best_nll = nll;
      result.window = w;
      result.nll = nll;
      result.displacement = disp;
    }
  };
  const EnsembleStats stats = run_ensemble(log_prob, init, config, visit);
  result.acceptance = stats.acceptance;
  return result;
}

ArrayWindow fixed_window(const attribution::TrackModel& model, double length) {
  ArrayWindow out;
  const int n = static_cast<int>(model.g[0].size());
  if (n == 0) return out;
  int peak = 0;
  double peak_rate = -1.0;
  for (int i = 0; i < n; ++i) {
    double r = 0.0;
    for (int k = 0; k < kNumDetectors; ++k) r += model.g[k][i];
    if (r > peak_rate) {
      peak_rate = r;
      peak = i;
    }
  }
  const int len = std::clamp(static_cast<int>(std::lround(length / model.bin)), 1, n);
  const int start = std::clamp(peak - (len - 1) / 2, 0, n - len);
  for (auto& b : out.bins) {
    for (int i = start; i < start + len; ++i) b.push_back(i);
  }
  std::vector<Segment> summed;
  std::vector<int> idx;
  for (int i = start; i < start + len; ++i) {
    double w = 0.0;
    for (int k = 0; k < kNumDetectors; ++k) w += model.g[k][i];
    summed.push_back(Segment{-1, i, model.bin, w});
    idx.push_back(static_cast<int>(idx.size()));
  }
  out.value = sensitivity(summed, idx);
  out.duration = kNumDetectors * len * model.bin;
  return out;
}

std::vector<MethodResult> compare_windows(std::span<const scene::CountRecord> records,
                                          const anomaly::BackgroundModel& background,
                                          const attribution::EncounterWindow& window,
                                          const attribution::TrackModel& model, const ArrayWindow& configuration) {
  auto row = [&](const std::string& name, const ArrayWindow& sel) {
    MethodResult r;
    r.method = name;
    const auto spec = spectrum_for_window(records, window, sel);
    const auto shape = background_for_window(background, window, sel);
    const bool any = std::any_of(shape.begin(), shape.end(), [](double v) { return v > 0.0; });
    r.anomaly = any ? anomaly::anomaly_value(spec, shape) : 0.0;
    std::size_t longest = 0;
    for (const auto& b : sel.bins) longest = std::max(longest, b.size());
    r.duration = static_cast<double>(longest) * window.bin;
    r.detectors_used = sel.detectors_used();
    return r;
  };
  std::vector<MethodResult> out;
  out.push_back(row("optimal-config", configuration));
  out.push_back(row("summed-array", summed_array_window(model)));
  for (int s = 1; s <= 4; ++s) out.push_back(row("fixed-" + std::to_string(s) + "s", fixed_window(model, s)));
  return out;
}

void write_comparison(std::ostream& os, int encounter_id, const std::vector<MethodResult>& rows) {
  os << "# encounter_id method anomaly_value duration_s detectors_used\n";
  os << std::setprecision(10);
  for (const auto& r : rows) {
    os << encounter_id << ' ' << r.method << ' ' << r.anomaly << ' ' << r.duration << ' ' << r.detectors_used << '\n';
  }
}

}  // namespace radattr::snr
