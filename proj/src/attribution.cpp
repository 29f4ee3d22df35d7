#include "radattr/attribution.hpp"

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace radattr::attribution {

namespace {

constexpr double kLn2 = 0.69314718055994530942;

double log_likelihood_terms(const EncounterWindow& w, const TrackModel& m, double alpha,
                            const std::array<double, kNumDetectors>& b) {
  double ll = 0.0;
  for (int k = 0; k < kNumDetectors; ++k) {
    for (int i = 0; i < w.num_bins; ++i) {
      const double lambda = (alpha * m.g[k][i] + b[k]) * w.bin;
      const double x = w.counts[k][i];
      if (x > 0.0) {
        if (lambda <= 0.0) return -std::numeric_limits<double>::infinity();
        ll += x * std::log(lambda);
      }
      ll -= lambda;
    }
  }
  return ll;
}

// Upper incomplete gamma ratio Q(a, x) in log space via its continued
// fraction (modified Lentz), valid for x > a + 1.
double log_gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return -x + a * std::log(x) - std::lgamma(a) + std::log(h);
}

}  // namespace

EncounterWindow make_window(std::span<const scene::CountRecord> records, double alarm_start, double alarm_stop,
                            const std::string& roi, double margin, int id) {
  if (!(alarm_stop > alarm_start)) throw ValidationError("encounter: stop must be after start");
  if (records.empty()) throw MissingInputError("encounter: no count records");
  EncounterWindow w;
  w.id = id;
  w.alarm_start = alarm_start;
  w.alarm_stop = alarm_stop;
  w.roi = roi;
  w.bin = records.front().dt;
  const double lo = alarm_start - margin;
  const double hi = alarm_stop + margin;
  std::vector<double> starts;
  for (const auto& r : records) {
    if (std::abs(r.dt - w.bin) > 1e-9) throw ValidationError("encounter: non-uniform count bins");
    if (r.detector == 0 && r.t0 + r.dt > lo + 1e-9 && r.t0 < hi - 1e-9) starts.push_back(r.t0);
  }
  std::sort(starts.begin(), starts.end());
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
  if (starts.empty()) throw ValidationError("encounter: no count bins inside the analysis span");
  w.t0 = starts;
  w.num_bins = static_cast<int>(starts.size());
  w.span_start = starts.front();
  w.span_stop = starts.back() + w.bin;
  for (auto& c : w.counts) c.assign(w.num_bins, -1.0);
  for (const auto& r : records) {
    if (r.detector < 0 || r.detector >= kNumDetectors) throw ValidationError("encounter: bad detector id");
    auto it = std::lower_bound(starts.begin(), starts.end(), r.t0 - 1e-9);
    if (it == starts.end() || std::abs(*it - r.t0) > 1e-9) continue;
    w.counts[r.detector][static_cast<std::size_t>(it - starts.begin())] = static_cast<double>(r.roi_counts);
  }
  for (const auto& c : w.counts) {
    for (double v : c) {
      if (v < 0.0) throw MissingInputError("encounter: missing count record inside the analysis span");
    }
  }
  return w;
}

std::optional<tracking::HistorySample> track_sample_at(const tracking::Track& track, double t, double max_gap) {
  const auto& h = track.history;
  if (h.empty() || t < h.front().t || t > h.back().t) return std::nullopt;
  auto it = std::lower_bound(h.begin(), h.end(), t, [](const tracking::HistorySample& s, double v) { return s.t < v; });
  if (it->t == t) return *it;
  const auto& b = *it;
  const auto& a = *(it - 1);
  if (b.t - a.t > max_gap) return std::nullopt;
  const double f = (t - a.t) / (b.t - a.t);
  tracking::HistorySample s;
  s.t = t;
  s.position = a.position + f * (b.position - a.position);
  s.velocity = a.velocity + f * (b.velocity - a.velocity);
  s.position_cov = a.position_cov + f * (b.position_cov - a.position_cov);
  if (a.heading && b.heading) {
    s.heading = wrap_angle(*a.heading + f * wrap_angle(*b.heading - *a.heading));
  } else {
    s.heading = f < 0.5 ? a.heading : b.heading;
  }
  return s;
}

TrackModel model_counts(const tracking::Track& track, const ModelContext& ctx, const EncounterWindow& window,
                        double offset) {
  if (!ctx.response || !ctx.geometry || !ctx.poses || !ctx.attenuation) {
    throw ValidationError("model_counts: incomplete model context");
  }
  const auto& poses = *ctx.poses;
  if (poses.empty()) throw MissingInputError("model_counts: no pose estimates");
  const response::AttenuationProfile& att = ctx.attenuation(track.label);
  TrackModel m;
  m.track_id = track.id;
  m.bin = window.bin;
  for (auto& g : m.g) g.assign(window.num_bins, 0.0);
  m.observed.assign(window.num_bins, 0);
  const int sub = std::max(1, ctx.sub_samples);
  const double pose_slack = 0.2;
  for (int i = 0; i < window.num_bins; ++i) {
    for (int p = 0; p < sub; ++p) {
      const double t = window.t0[i] + (p + 0.5) * window.bin / sub;
      const auto s = track_sample_at(track, t - offset, ctx.max_gap);
      if (!s) continue;
      if (t < poses.front().t - pose_slack || t > poses.back().t + pose_slack) {
        throw MissingInputError("model_counts: no pose for t=" + std::to_string(t));
      }
      const scene::PoseEstimate pose = scene::interpolate_pose(poses, t);
      m.observed[i] = 1;
      for (int k = 0; k < kNumDetectors; ++k) {
        m.g[k][i] += scene::geometric_factor(*ctx.response, att, *ctx.geometry, pose.position, pose.yaw, s->position,
                                             s->heading, k) /
                     sub;
      }
    }
  }
  return m;
}

std::array<std::vector<double>, kNumDetectors> expected_counts(const TrackModel& model, double alpha,
                                                               const std::array<double, kNumDetectors>& b) {
  std::array<std::vector<double>, kNumDetectors> out;
  for (int k = 0; k < kNumDetectors; ++k) {
    out[k].resize(model.g[k].size());
    for (std::size_t i = 0; i < model.g[k].size(); ++i) out[k][i] = (alpha * model.g[k][i] + b[k]) * model.bin;
  }
  return out;
}

MleFit fit_background(const EncounterWindow& window) {
  MleFit fit;
  const double total_time = window.num_bins * window.bin;
  for (int k = 0; k < kNumDetectors; ++k) {
    fit.b[k] = std::accumulate(window.counts[k].begin(), window.counts[k].end(), 0.0) / total_time;
  }
  TrackModel zero;
  zero.bin = window.bin;
  for (auto& g : zero.g) g.assign(window.num_bins, 0.0);
  fit.log_likelihood = log_likelihood_terms(window, zero, 0.0, fit.b);
  return fit;
}

MleFit fit_mle(const TrackModel& model, const EncounterWindow& window, const FitOptions& options) {
  const int n = window.num_bins;
  const double dt = window.bin;
  for (int k = 0; k < kNumDetectors; ++k) {
    if (static_cast<int>(model.g[k].size()) != n) throw ValidationError("fit_mle: model and counts misaligned");
  }
  double g_total = 0.0;
  std::array<double, kNumDetectors> x_total{};
  for (int k = 0; k < kNumDetectors; ++k) {
    for (int i = 0; i < n; ++i) {
      if (model.g[k][i] < 0.0) throw ValidationError("fit_mle: negative geometric factor");
      g_total += model.g[k][i] * dt;
      x_total[k] += window.counts[k][i];
    }
  }
  const double total_time = n * dt;
  const double x_sum = std::accumulate(x_total.begin(), x_total.end(), 0.0);
  if (!(g_total > 0.0) || x_sum <= 0.0) {
    MleFit fit = fit_background(window);
    fit.degenerate = !(g_total > 0.0);
    fit.alpha_se = std::numeric_limits<double>::infinity();
    return fit;
  }

  MleFit fit;
  for (int k = 0; k < kNumDetectors; ++k) fit.b[k] = 0.8 * x_total[k] / total_time;
  fit.alpha = 0.2 * x_sum / g_total;
  double ll = log_likelihood_terms(window, model, fit.alpha, fit.b);

  for (int it = 0; it < options.max_iterations; ++it) {
    double alpha_acc = 0.0;
    std::array<double, kNumDetectors> b_acc{};
    for (int k = 0; k < kNumDetectors; ++k) {
      for (int i = 0; i < n; ++i) {
        const double lambda = (fit.alpha * model.g[k][i] + fit.b[k]) * dt;
        const double x = window.counts[k][i];
        if (x <= 0.0 || lambda <= 0.0) continue;
        const double r = x / lambda;
        alpha_acc += r * model.g[k][i] * dt;
        b_acc[k] += r * dt;
      }
    }
    fit.alpha *= alpha_acc / g_total;
    for (int k = 0; k < kNumDetectors; ++k) fit.b[k] *= b_acc[k] / total_time;
    const double next = log_likelihood_terms(window, model, fit.alpha, fit.b);
    fit.trace.push_back(next);
    fit.iterations = it + 1;
    const double change = std::abs(next - ll) / std::max(1.0, std::abs(ll));
    ll = next;
    if (change < options.tolerance) break;
  }

  // Information matrix over (alpha, b_0..b_5) at the current estimate.
  auto information = [&](double alpha, const std::array<double, kNumDetectors>& b, Eigen::Matrix<double, 7, 1>* grad) {
    Eigen::Matrix<double, 7, 7> info = Eigen::Matrix<double, 7, 7>::Zero();
    if (grad) grad->setZero();
    for (int k = 0; k < kNumDetectors; ++k) {
      for (int i = 0; i < n; ++i) {
        const double lambda = (alpha * model.g[k][i] + b[k]) * dt;
        const double x = window.counts[k][i];
        const double da = model.g[k][i] * dt;
        if (grad) {
          const double ratio = lambda > 0.0 ? x / lambda : 0.0;
          (*grad)(0) += (ratio - 1.0) * da;
          (*grad)(1 + k) += (ratio - 1.0) * dt;
        }
        if (x <= 0.0 || lambda <= 0.0) continue;
        const double w = x / (lambda * lambda);
        info(0, 0) += w * da * da;
        info(0, 1 + k) += w * da * dt;
        info(1 + k, 0) += w * da * dt;
        info(1 + k, 1 + k) += w * dt * dt;
      }
    }
    return info;
  };

  if (options.polish) {
    // Projected Newton steps with backtracking; never lowers the likelihood.
    for (int it = 0; it < 100; ++it) {
      Eigen::Matrix<double, 7, 1> grad;
      Eigen::Matrix<double, 7, 7> info = information(fit.alpha, fit.b, &grad);
      std::array<bool, 7> free{};
      free[0] = !(fit.alpha <= 0.0 && grad(0) <= 0.0);
      for (int k = 0; k < kNumDetectors; ++k) free[1 + k] = !(fit.b[k] <= 0.0 && grad(1 + k) <= 0.0);
      Eigen::Matrix<double, 7, 1> step = Eigen::Matrix<double, 7, 1>::Zero();
      std::vector<int> idx;
      for (int j = 0; j < 7; ++j) {
        if (free[j]) idx.push_back(j);
      }
      if (idx.empty()) break;
      Eigen::MatrixXd sub(idx.size(), idx.size());
      Eigen::VectorXd sub_grad(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) {
        sub_grad(r) = grad(idx[r]);
        for (std::size_t c = 0; c < idx.size(); ++c) sub(r, c) = info(idx[r], idx[c]);
      }
      Eigen::LDLT<Eigen::MatrixXd> ldlt(sub);
      if (ldlt.info() != Eigen::Success) break;
      const Eigen::VectorXd d = ldlt.solve(sub_grad);
      if (!d.allFinite()) break;
      for (std::size_t r = 0; r < idx.size(); ++r) step(idx[r]) = d(r);

      double scale = 1.0;
      bool improved = false;
      for (int ls = 0; ls < 40; ++ls) {
        double alpha = std::max(0.0, fit.alpha + scale * step(0));
        std::array<double, kNumDetectors> b = fit.b;
        for (int k = 0; k < kNumDetectors; ++k) b[k] = std::max(0.0, b[k] + scale * step(1 + k));
        const double next = log_likelihood_terms(window, model, alpha, b);
        if (next >= ll) {
          const double rel = std::abs(alpha - fit.alpha) / std::max(1e-300, std::abs(fit.alpha));
          fit.alpha = alpha;
          fit.b = b;
          improved = next > ll || rel > 0.0;
          const double gain = next - ll;
          ll = next;
          if (gain <= 1e-15 * std::max(1.0, std::abs(ll)) && rel < 1e-13) improved = false;
          break;
        }
        scale *= 0.5;
      }
      if (!improved) break;
    }
  }

  fit.log_likelihood = ll;
  const Eigen::Matrix<double, 7, 7> info = information(fit.alpha, fit.b, nullptr);
  Eigen::FullPivLU<Eigen::Matrix<double, 7, 7>> lu(info);
  if (lu.isInvertible()) {
    const double var = lu.inverse()(0, 0);
    fit.alpha_se = var > 0.0 ? std::sqrt(var) : std::numeric_limits<double>::infinity();
  } else {
    fit.alpha_se = std::numeric_limits<double>::infinity();
  }
  return fit;
}

double deviance(std::span<const double> counts, std::span<const double> mean) {
  if (counts.size() != mean.size()) throw ValidationError("deviance: length mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double x = counts[i];
    const double l = mean[i];
    if (l < 0.0 || x < 0.0) throw ValidationError("deviance: negative count or mean");
    if (x > 0.0) {
      if (l <= 0.0) return kInfiniteDeviance;
      d += l - x + x * std::log(x / l);
    } else {
      d += l;
    }
  }
  return std::max(0.0, 2.0 * d);
}

double poisson_log_likelihood(std::span<const double> counts, std::span<const double> mean) {
  if (counts.size() != mean.size()) throw ValidationError("log-likelihood: length mismatch");
  double ll = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double x = counts[i];
    const double l = mean[i];
    if (x > 0.0) {
      if (l <= 0.0) return -std::numeric_limits<double>::infinity();
      ll += x * std::log(l);
    }
    ll -= l + std::lgamma(x + 1.0);
  }
  return ll;
}

double log_chi2_sf(double x, int dof) {
  if (dof <= 0) throw ValidationError("chi-square: dof must be positive");
  if (!(x > 0.0)) return 0.0;
  const double a = 0.5 * dof;
  const double half = 0.5 * x;
  const double q = boost::math::gamma_q(a, half);
  // Near p = 1 the lower tail keeps the digits that log(q) would round away.
  if (q > 0.5) return std::log1p(-boost::math::gamma_p(a, half));
  if (q > 1e-280) return std::log(q);
  return log_gamma_q_cf(a, half);
}

Score score(double deviance_value, int dof) {
  if (dof <= 0) throw ValidationError("score: dof must be positive");
  Score s;
  if (deviance_value >= kInfiniteDeviance) {
    s.p = 0.0;
    s.s = std::numeric_limits<double>::infinity();
    return s;
  }
  const double log_p = log_chi2_sf(deviance_value, dof);
  s.p = std::exp(log_p);
  s.s = std::max(0.0, -log_p / kLn2);
  return s;
}

bool bic_reject(const TrackModel& model, const EncounterWindow& window, const MleFit& fit, double* bic_source,
                double* bic_background) {
  const auto lambda = expected_counts(model, fit.alpha, fit.b);
  const MleFit bg = fit_background(window);
  TrackModel zero = model;
  for (auto& g : zero.g) std::fill(g.begin(), g.end(), 0.0);
  const auto lambda_bg = expected_counts(zero, 0.0, bg.b);
  double ll_src = 0.0, ll_bg = 0.0;
  for (int k = 0; k < kNumDetectors; ++k) {
    ll_src += poisson_log_likelihood(window.counts[k], lambda[k]);
    ll_bg += poisson_log_likelihood(window.counts[k], lambda_bg[k]);
  }
  const double n = static_cast<double>(kNumDetectors) * window.num_bins;
  const double src = 7.0 * std::log(n) - 2.0 * ll_src;
  const double bgv = 6.0 * std::log(n) - 2.0 * ll_bg;
  if (bic_source) *bic_source = src;
  if (bic_background) *bic_background = bgv;
  return bgv <= src;
}

double outside_alarm_fraction(const tracking::Track& track, const EncounterWindow& window) {
  int inside_span = 0;
  int outside_alarm = 0;
  for (const auto& s : track.history) {
    if (s.t < window.span_start || s.t > window.span_stop) continue;
    ++inside_span;
    if (s.t < window.alarm_start || s.t > window.alarm_stop) ++outside_alarm;
  }
  return inside_span == 0 ? 1.0 : static_cast<double>(outside_alarm) / inside_span;
}

FitResult evaluate(const tracking::Track& track, const ModelContext& ctx, const EncounterWindow& window,
                   double offset) {
  const TrackModel model = model_counts(track, ctx, window, offset);
  const MleFit fit = fit_mle(model, window);
  FitResult r;
  r.track_id = track.id;
  r.alpha = fit.alpha;
  r.alpha_se = fit.alpha_se;
  r.b = fit.b;
  r.degenerate = fit.degenerate;
  r.offset = offset;
  const auto lambda = expected_counts(model, fit.alpha, fit.b);
  double d = 0.0;
  for (int k = 0; k < kNumDetectors; ++k) {
    const double dk = deviance(window.counts[k], lambda[k]);
    d = dk >= kInfiniteDeviance ? kInfiniteDeviance : d + dk;
    if (d >= kInfiniteDeviance) break;
  }
  r.deviance = d;
  r.dof = kNumDetectors * window.num_bins - 7;
  const Score sc = score(d, r.dof);
  r.p = sc.p;
  r.s = sc.s;
  r.background_preferred = bic_reject(model, window, fit, &r.bic_source, &r.bic_background);
  r.outside_alarm_frac = outside_alarm_fraction(track, window);
  double speed = 0.0;
  int count = 0;
  for (const auto& s : track.history) {
    if (s.t < window.span_start || s.t > window.span_stop) continue;
    speed += s.velocity.head<2>().norm();
    ++count;
  }
  r.offset_m = count > 0 ? offset * speed / count : 0.0;
  return r;
}

std::vector<double> OffsetGrid::offsets() const {
  if (!(step > 0.0) || span < 0.0) throw ValidationError("offset grid: step must be > 0 and span >= 0");
  const int half = static_cast<int>(std::floor(span / step + 1e-9));
  std::vector<double> out;
  for (int i = -half; i <= half; ++i) out.push_back(i * step);
  return out;
}

FitResult offset_scan(const tracking::Track& track, const ModelContext& ctx, const EncounterWindow& window,
                      const OffsetGrid& grid) {
  std::optional<FitResult> best;
  for (double offset : grid.offsets()) {
    FitResult r = evaluate(track, ctx, window, offset);
    if (!best || r.s < best->s) best = r;
  }
  return *best;
}

std::vector<const tracking::Track*> candidate_tracks(const std::vector<tracking::Track>& tracks,
                                                     const EncounterWindow& window) {
  std::vector<const tracking::Track*> out;
  for (const auto& t : tracks) {
    const bool inside = std::any_of(t.history.begin(), t.history.end(), [&](const tracking::HistorySample& s) {
      return s.t >= window.span_start && s.t <= window.span_stop;
    });
    if (inside) out.push_back(&t);
  }
  std::sort(out.begin(), out.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
  return out;
}

AdjudicationReport adjudicate(const EncounterWindow& window, const std::vector<tracking::Track>& tracks,
                              const ModelContext& ctx, const AdjudicationOptions& options) {
  AdjudicationReport report;
  report.window = window;
  for (const auto* track : candidate_tracks(tracks, window)) {
    RankedTrack rt;
    rt.fit = offset_scan(*track, ctx, window, options.grid);
    rt.label = track->label;
    rt.flagged = rt.fit.background_preferred || rt.fit.outside_alarm_frac > options.outside_limit;
    report.tracks.push_back(rt);
  }
  std::vector<RankedTrack*> order;
  for (auto& t : report.tracks) {
    if (!t.flagged) order.push_back(&t);
  }
  std::stable_sort(order.begin(), order.end(), [](const RankedTrack* a, const RankedTrack* b) {
    if (a->fit.s != b->fit.s) return a->fit.s < b->fit.s;
    return a->fit.track_id < b->fit.track_id;
  });
  for (std::size_t i = 0; i < order.size(); ++i) order[i]->rank = static_cast<int>(i) + 1;
  if (!order.empty()) report.attributed = order.front()->fit.track_id;
  return report;
}

}  // namespace radattr::attribution
