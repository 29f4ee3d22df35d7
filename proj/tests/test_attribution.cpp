#include "radattr/attribution.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace radattr;
using namespace radattr::attribution;
using radattr::testing::Bench;
using radattr::testing::empty_window;
using radattr::testing::fill_counts;
using radattr::testing::line_track;

namespace {

// Upper tail of the chi-square distribution by composite Simpson integration
// of the density in log space.
double chi2_sf_simpson(double x, int k) {
  const double half = 0.5 * k;
  auto pdf = [&](double t) {
    return std::exp((half - 1) * std::log(t) - 0.5 * t - half * std::log(2.0) - std::lgamma(half));
  };
  const double hi = x + 40.0 * std::sqrt(2.0 * k) + 200.0;
  const int n = 200000;
  const double h = (hi - x) / n;
  double s = pdf(x) + pdf(hi);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * pdf(x + i * h);
  return s * h / 3.0;
}

TrackModel bump_model(int n, double bin = 0.25) {
  TrackModel m;
  m.bin = bin;
  m.observed.assign(n, 1);
  for (int k = 0; k < kNumDetectors; ++k) {
    m.g[k].resize(n);
    for (int i = 0; i < n; ++i) m.g[k][i] = 10.0 * (k + 1) / 6.0 * std::exp(-std::pow(i - 20.0, 2) / 20.0);
  }
  return m;
}

// Car passing the platform 5 m to the side at 4.47 m/s; closest at t = 6.7 s.
tracking::Track passing(int id = 1) {
  return line_track(id, Vec3(-30, -5, 1.3), Vec3(4.4704, 0, 0), 0.0, 13.4);
}

}  // namespace

TEST(Model, StationaryTrackGivesInverseSquareConstant) {
  Bench bench(10.0);
  for (auto& e : bench.response.eps) e.assign(bench.response.num_azimuths, 0.01);
  const auto track = line_track(1, Vec3(10, 0, 1.3), Vec3::Zero(), 0.0, 10.0);
  auto w = empty_window(40);
  const auto m = model_counts(track, bench.context(), w);
  scene::PlatformState p;
  p.position = Vec3::Zero();
  for (int k = 0; k < kNumDetectors; ++k) {
    const double r = (scene::detector_position(bench.geometry, p, k) - Vec3(10, 0, 1.3)).norm();
    const double expected = 0.01 * std::exp(-response::kMuAir * r) / (4 * kPi * r * r);
    for (int i = 0; i < w.num_bins; ++i) EXPECT_NEAR(m.g[k][i], expected, 1e-12 * expected);
  }
}

TEST(Model, PassingTrackPeaksAtClosestApproach) {
  Bench bench(13.4);
  auto w = empty_window(53);
  const auto track = passing();
  const auto m = model_counts(track, bench.context(), w);
  std::vector<double> total(w.num_bins, 0.0);
  for (int i = 0; i < w.num_bins; ++i)
    for (int k = 0; k < kNumDetectors; ++k) total[i] += m.g[k][i];
  const int peak = static_cast<int>(std::max_element(total.begin(), total.end()) - total.begin());
  EXPECT_NEAR(w.bin_center(peak), 30.0 / 4.4704, w.bin);

  // Crystals shadow each other, so only a flat response guarantees a clean rise and fall.
  for (auto& e : bench.response.eps) e.assign(bench.response.num_azimuths, 0.01);
  const auto flat = model_counts(track, bench.context(), w);
  for (int k = 0; k < kNumDetectors; ++k) {
    const auto& g = flat.g[k];
    const int top = static_cast<int>(std::max_element(g.begin(), g.end()) - g.begin());
    EXPECT_NEAR(top, peak, 1);
    for (int i = 1; i <= top; ++i) EXPECT_GE(g[i], g[i - 1]);
    for (int i = top + 1; i < w.num_bins; ++i) EXPECT_LE(g[i], g[i - 1]);
  }
}

TEST(Model, TrackOutsideSpanIsZero) {
  Bench bench(30.0);
  auto w = empty_window(20);  // [0, 5) s
  const auto track = line_track(1, Vec3(5, 5, 1.3), Vec3(1, 0, 0), 20.0, 30.0);
  const auto m = model_counts(track, bench.context(), w);
  for (int k = 0; k < kNumDetectors; ++k)
    for (double g : m.g[k]) EXPECT_EQ(g, 0.0);
  for (char o : m.observed) EXPECT_EQ(o, 0);
}

TEST(Mle, NoiselessFixedPoint) {
  const auto m = bump_model(48);
  auto w = empty_window(48);
  std::array<double, kNumDetectors> b;
  b.fill(3.0);
  fill_counts(w, m, 2.0, b);
  const MleFit fit = fit_mle(m, w);
  EXPECT_NEAR(fit.alpha, 2.0, 2e-6);
  for (double bk : fit.b) EXPECT_NEAR(bk, 3.0, 3e-6);
}

TEST(Mle, ZeroModelIsBackgroundOnly) {
  TrackModel m = bump_model(40);
  for (auto& g : m.g) std::fill(g.begin(), g.end(), 0.0);
  auto w = empty_window(40);
  std::mt19937_64 rng(2);
  std::array<double, kNumDetectors> b{2, 4, 6, 8, 10, 12};
  fill_counts(w, m, 0.0, b, &rng);
  const MleFit fit = fit_mle(m, w);
  EXPECT_EQ(fit.alpha, 0.0);
  for (int k = 0; k < kNumDetectors; ++k) {
    const double total = std::accumulate(w.counts[k].begin(), w.counts[k].end(), 0.0);
    EXPECT_NEAR(fit.b[k], total / (40 * 0.25), 1e-12);
  }
}

TEST(Mle, LikelihoodTraceNeverDecreases) {
  const auto m = bump_model(48);
  auto w = empty_window(48);
  std::mt19937_64 rng(8);
  std::array<double, kNumDetectors> b;
  b.fill(5.0);
  fill_counts(w, m, 1.5, b, &rng);
  const MleFit fit = fit_mle(m, w);
  for (std::size_t i = 1; i < fit.trace.size(); ++i) EXPECT_GE(fit.trace[i], fit.trace[i - 1] - 1e-9);
  EXPECT_GT(fit.alpha_se, 0.0);
}

TEST(Deviance, Examples) {
  const std::vector<double> x{4.0}, lam{2.0};
  EXPECT_NEAR(deviance(x, lam), 2 * (2 - 4 + 4 * std::log(2.0)), 1e-12);
  EXPECT_NEAR(deviance(x, lam), 1.545, 5e-4);
  const std::vector<double> same{1, 5, 0, 7};
  EXPECT_EQ(deviance(same, same), 0.0);
  const std::vector<double> zero_mean{0.0}, one{1.0};
  EXPECT_GE(deviance(one, zero_mean), kInfiniteDeviance);
}

TEST(Deviance, ChiSquareLimit) {
  std::mt19937_64 rng(21);
  const int n = 400;
  const double lam = 200.0;
  std::vector<double> x(n), mean(n, lam);
  for (auto& v : x) v = static_cast<double>(std::poisson_distribution<long>(lam)(rng));
  EXPECT_NEAR(deviance(x, mean), n, 3 * std::sqrt(2.0 * n));
}

TEST(Score, ExamplesAgainstQuadratureOracle) {
  const Score zero = score(0.0, 100);
  EXPECT_DOUBLE_EQ(zero.p, 1.0);
  EXPECT_DOUBLE_EQ(zero.s, 0.0);

  const double p100 = chi2_sf_simpson(100.0, 100);
  const Score mid = score(100.0, 100);
  EXPECT_NEAR(mid.p, p100, 1e-8);
  EXPECT_NEAR(mid.p, 0.481, 1e-3);
  EXPECT_NEAR(mid.s, -std::log2(p100), 1e-6);
  EXPECT_NEAR(mid.s, 1.06, 5e-3);

  const double p300 = chi2_sf_simpson(300.0, 100);
  const Score tail = score(300.0, 100);
  EXPECT_NEAR(tail.p / p300, 1.0, 1e-6);
  EXPECT_NEAR(tail.s, -std::log2(p300), 1e-6);

  EXPECT_TRUE(std::isfinite(log_chi2_sf(20000.0, 100)));
  EXPECT_LT(log_chi2_sf(20000.0, 100), -9000.0);
  EXPECT_GT(score(20000.0, 100).s, 10000.0);
}

TEST(Bic, ZeroStrengthPrefersBackground) {
  const auto m = bump_model(40);
  auto w = empty_window(40);
  std::mt19937_64 rng(3);
  std::array<double, kNumDetectors> b;
  b.fill(6.0);
  fill_counts(w, m, 0.0, b, &rng);
  MleFit fit = fit_background(w);
  fit.alpha = 0.0;
  double src = 0, bg = 0;
  EXPECT_TRUE(bic_reject(m, w, fit, &src, &bg));
  EXPECT_LT(bg, src);
  EXPECT_NEAR(src - bg, std::log(6.0 * 40), 1e-9);
}

TEST(Bic, PureBackgroundTrackIsRejected) {
  Bench bench(13.4);
  const auto track = passing();
  const auto ctx = bench.context();
  auto w = empty_window(53);
  const auto m = model_counts(track, ctx, w);
  std::array<double, kNumDetectors> b;
  b.fill(40.0);
  int preferred = 0;
  for (int seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 rng(seed);
    fill_counts(w, m, 0.0, b, &rng);
    preferred += evaluate(track, ctx, w, 0.0).background_preferred;
  }
  EXPECT_GE(preferred, 90);
}

TEST(Bic, StrongSourceIsKept) {
  Bench bench(13.4);
  const auto track = passing();
  const auto ctx = bench.context();
  auto w = empty_window(53);
  const auto m = model_counts(track, ctx, w);
  std::array<double, kNumDetectors> b;
  b.fill(40.0);
  // Peak source rate well over ten times the background.
  double gmax = 0;
  for (const auto& g : m.g) gmax = std::max(gmax, *std::max_element(g.begin(), g.end()));
  const double alpha = 600.0 / gmax;
  for (int seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    fill_counts(w, m, alpha, b, &rng);
    const auto r = evaluate(track, ctx, w, 0.0);
    EXPECT_FALSE(r.background_preferred);
    EXPECT_NEAR(r.alpha, alpha, 4 * r.alpha_se);
  }
}

TEST(Offset, CenteredAndShiftedSources) {
  Bench bench(14.0);
  const auto track = passing();
  const auto ctx = bench.context();
  auto w = empty_window(53);
  std::array<double, kNumDetectors> b;
  b.fill(40.0);
  // The source rides at the track center.
  fill_counts(w, model_counts(track, ctx, w, 0.0), 3e6, b);
  EXPECT_NEAR(offset_scan(track, ctx, w).offset, 0.0, 1e-12);
  // 1.3 m behind a 4.47 m/s carrier is 0.29 s late; the grid snaps to 0.3 s.
  fill_counts(w, model_counts(track, ctx, w, 1.3 / 4.4704), 3e6, b);
  const FitResult r = offset_scan(track, ctx, w);
  EXPECT_NEAR(r.offset, 0.3, 1e-12);
  EXPECT_NEAR(r.offset_m, 0.3 * 4.4704, 1e-9);
}

TEST(Offset, GridAndTieBreak) {
  const auto offs = OffsetGrid{}.offsets();
  ASSERT_EQ(offs.size(), 11u);
  EXPECT_NEAR(offs.front(), -0.5, 1e-12);
  EXPECT_EQ(offs[5], 0.0);
  EXPECT_THROW((OffsetGrid{0.5, 0.0}.offsets()), ValidationError);
  // A track that never reaches the span fits identically at every offset;
  // the scan returns the first grid point.
  Bench bench(40.0);
  const auto ctx = bench.context();
  const auto track = line_track(1, Vec3(5, 5, 1.3), Vec3(1, 0, 0), 30.0, 40.0);
  auto w = empty_window(40);
  std::mt19937_64 rng(1);
  std::array<double, kNumDetectors> b;
  b.fill(10.0);
  fill_counts(w, bump_model(40), 0.0, b, &rng);
  EXPECT_NEAR(offset_scan(track, ctx, w).offset, -0.5, 1e-12);
}

TEST(Adjudicate, CarrierWinsAndDistantParkedCarIsFlagged) {
  Bench bench(13.4);
  const auto ctx = bench.context();
  std::vector<tracking::Track> tracks{passing(1), line_track(2, Vec3(0, 35, 0.7), Vec3::Zero(), 0.0, 13.4)};
  auto w = empty_window(53, 0.25, 4.7, 8.7);
  std::array<double, kNumDetectors> b;
  b.fill(40.0);
  std::mt19937_64 rng(12);
  fill_counts(w, model_counts(tracks[0], ctx, w), 3e6, b, &rng);
  const auto rep = adjudicate(w, tracks, ctx);
  ASSERT_EQ(rep.tracks.size(), 2u);
  ASSERT_TRUE(rep.attributed.has_value());
  EXPECT_EQ(*rep.attributed, 1);
  EXPECT_EQ(rep.tracks[0].rank, 1);
  EXPECT_TRUE(rep.tracks[1].flagged);
  EXPECT_EQ(rep.tracks[1].rank, 0);
  // The carrier fit is consistent with the data.
  EXPECT_LT(rep.tracks[0].fit.deviance, rep.tracks[0].fit.dof + 5 * std::sqrt(2.0 * rep.tracks[0].fit.dof));
}

TEST(Window, SnapsToRecordGrid) {
  std::vector<scene::CountRecord> records;
  for (int i = 0; i < 80; ++i) {
    for (int k = 0; k < kNumDetectors; ++k) {
      scene::CountRecord r;
      r.detector = k;
      r.t0 = i * 0.25;
      r.dt = 0.25;
      r.roi_counts = i;
      r.spectrum.assign(kNumChannels, 0);
      records.push_back(r);
    }
  }
  const auto w = make_window(records, 6.1, 8.05, "cs137", 3.0, 4);
  EXPECT_EQ(w.id, 4);
  EXPECT_NEAR(w.span_start, 3.0, 1e-12);
  EXPECT_NEAR(w.span_stop, 11.25, 1e-12);
  EXPECT_EQ(w.num_bins, 33);
  EXPECT_EQ(w.counts[2][0], 12.0);
  const auto clipped = make_window(records, 0.5, 1.0, "cs137");
  EXPECT_NEAR(clipped.span_start, 0.0, 1e-12);
}

TEST(Window, OutsideAlarmFraction) {
  auto w = empty_window(40, 0.25, 4.0, 6.0);  // span [0, 10)
  const auto t = line_track(1, Vec3::Zero(), Vec3(1, 0, 0), 0.0, 10.0);
  const double f = outside_alarm_fraction(t, w);
  int in = 0, all = 0;
  for (const auto& h : t.history) {
    if (h.t < w.span_start || h.t > w.span_stop) continue;
    ++all;
    in += h.t >= 4.0 && h.t <= 6.0;
  }
  EXPECT_NEAR(f, 1.0 - static_cast<double>(in) / all, 1e-12);
}
