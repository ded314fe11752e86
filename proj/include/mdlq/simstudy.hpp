// Copyright 2026 The MDLQ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
/** \file

 Synthetic observations with controlled transport bias, the misalignment
 sweep, and the least-squares baseline.

 Misalignment acts on the noiseless signal X beta: enhancement groups are
 found with the spike detector, a share of them is moved to a uniformly
 drawn start minute inside the window, and noise is added afterwards. The
 detector would otherwise fire on the noise itself.

*/
#pragma once

#include <boost/math/distributions/students_t.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "mdlq/core.hpp"
#include "mdlq/forward_model.hpp"
#include "mdlq/pipeline.hpp"
#include "mdlq/preprocess.hpp"
#include "mdlq/random.hpp"
#include "mdlq/reporting.hpp"

namespace mdlq {

struct SyntheticTruth {
  std::vector<double> rate_kghr;  // per design-matrix column
  double noise_sd = 1.0;          // ppm
  double noise_r = 0.0;           // AR(1) coefficient of the noise within each sensor block
};

/// Model-unit coefficients (multiples of q g/s) for rates in kg/hr.
inline Eigen::VectorXd model_units(const std::vector<double>& rate_kghr, double q) {
  Eigen::VectorXd b(static_cast<Eigen::Index>(rate_kghr.size()));
  for (std::size_t i = 0; i < rate_kghr.size(); ++i)
    b(static_cast<Eigen::Index>(i)) = rate_kghr[i] / (q * kKgPerHourPerGramPerSecond);
  return b;
}

/// Stationary AR(1) noise with marginal sd `sd`, restarted every `block` rows.
inline Eigen::VectorXd ar1_noise(std::size_t n, std::size_t block, double sd, double r, Rng& rng) {
  Eigen::VectorXd e(static_cast<Eigen::Index>(n));
  const double innov = sd * std::sqrt(1.0 - r * r);
  for (std::size_t t = 0; t < n; ++t) {
    double z = std_normal(rng);
    e(static_cast<Eigen::Index>(t)) =
        (block == 0 || t % block == 0) ? sd * z : r * e(static_cast<Eigen::Index>(t - 1)) + innov * z;
  }
  return e;
}

/// y = X beta_T + noise.
inline Eigen::VectorXd synthesize(const DesignMatrix& dm, const SyntheticTruth& truth, double q, Rng& rng) {
  Eigen::VectorXd y = dm.values * model_units(truth.rate_kghr, q);
  if (truth.noise_sd > 0.0)
    y += ar1_noise(static_cast<std::size_t>(y.size()), static_cast<std::size_t>(dm.layout.minutes),
                   truth.noise_sd, truth.noise_r, rng);
  return y;
}

struct MisalignmentResult {
  Eigen::VectorXd y;
  std::size_t groups = 0;
  std::size_t moved = 0;
};

/// Moves ceil(M% of the enhancement groups) in each `block`-long series to
/// uniformly drawn start minutes. A target overlapping another group is
/// shifted to the nearest free start; if none exists the values are added
/// where drawn. Vacated minutes become 0.
inline MisalignmentResult inject_misalignment(const Eigen::VectorXd& y, std::size_t block, double m_percent,
                                              Rng& rng, const SpikeParams& params = {}) {
  if (m_percent < 0.0 || m_percent > 100.0) throw std::invalid_argument("M must lie in [0, 100]");
  MisalignmentResult out{y, 0, 0};
  if (block == 0) return out;
  const std::size_t n = static_cast<std::size_t>(y.size());
  for (std::size_t b0 = 0; b0 + block <= n; b0 += block) {
    std::vector<double> series(y.data() + b0, y.data() + b0 + block);
    auto groups = detect_spikes(series, params);
    out.groups += groups.size();
    if (groups.empty() || m_percent == 0.0) continue;
    auto count = static_cast<std::size_t>(
        std::ceil(m_percent / 100.0 * static_cast<double>(groups.size()) - 1e-9));
    count = std::min(count, groups.size());

    std::vector<std::size_t> order(groups.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(count);
    std::sort(order.begin(), order.end());

    std::vector<double> result = series;
    std::vector<bool> occupied(block, false);
    std::vector<bool> moving(groups.size(), false);
    for (std::size_t g : order) moving[g] = true;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (std::size_t t = groups[g].start; t <= groups[g].end; ++t) {
        if (moving[g]) result[t] = 0.0;
        else occupied[t] = true;
      }
    }
    for (std::size_t g : order) {
      const std::size_t len = groups[g].end - groups[g].start + 1;
      const std::size_t last_start = block - len;
      std::uniform_int_distribution<std::size_t> pick(0, last_start);
      std::size_t want = pick(rng);
      auto is_free = [&](std::size_t s) {
        for (std::size_t t = s; t < s + len; ++t)
          if (occupied[t]) return false;
        return true;
      };
      std::size_t start = want;
      bool found = is_free(want);
      for (std::size_t d = 1; !found && d <= last_start; ++d) {
        if (want >= d && is_free(want - d)) { start = want - d; found = true; }
        else if (want + d <= last_start && is_free(want + d)) { start = want + d; found = true; }
      }
      for (std::size_t k = 0; k < len; ++k) {
        result[start + k] += series[groups[g].start + k];
        occupied[start + k] = true;
      }
      ++out.moved;
    }
    for (std::size_t t = 0; t < block; ++t) out.y(static_cast<Eigen::Index>(b0 + t)) = result[t];
  }
  return out;
}

// --- synthetic site ----------------------------------------------------------------

struct SyntheticSiteOptions {
  std::size_t sources = 5;
  std::size_t sensors = 10;
  double source_radius = 15.0;  // m
  double sensor_radius = 60.0;  // m
  double sensor_height = 2.0;   // m
  std::size_t anemometers = 3;
};

/// Sources on an inner ring at heights 1-3 m, sensors evenly spaced on an
/// outer ring. Fully deterministic.
inline std::pair<std::vector<SourceSpec>, std::vector<SensorSpec>> synthetic_site(
    const SyntheticSiteOptions& o = {}) {
  constexpr double two_pi = 6.283185307179586;
  std::vector<SourceSpec> src;
  for (std::size_t i = 0; i < o.sources; ++i) {
    double a = two_pi * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(1, o.sources));
    src.push_back({"S" + std::to_string(i + 1), o.source_radius * std::cos(a), o.source_radius * std::sin(a),
                   1.0 + static_cast<double>(i % 3)});
  }
  std::vector<SensorSpec> sen;
  for (std::size_t k = 0; k < o.sensors; ++k) {
    double a = two_pi * (static_cast<double>(k) + 0.5) / static_cast<double>(std::max<std::size_t>(1, o.sensors));
    sen.push_back({"C" + std::to_string(k + 1), o.sensor_radius * std::cos(a), o.sensor_radius * std::sin(a),
                   o.sensor_height, k < o.anemometers});
  }
  return {src, sen};
}

struct SyntheticWindOptions {
  double mean_speed = 2.5;      // m/s
  double speed_sd = 0.8;        // stationary sd of the speed process
  double speed_memory = 0.95;   // per-minute AR coefficient of the speed
  double direction_step = 6.0;  // deg, per-minute random-walk sd
  double min_speed = 0.5;
  double max_speed = 8.0;
};

/// Minute winds over `span`: AR(1) speed and random-walk direction.
inline std::vector<WindRecord> synthetic_winds(const Interval& span, std::uint64_t seed,
                                               const SyntheticWindOptions& o = {}) {
  Rng rng(derive_seed(seed, 0x57494E44));
  std::vector<WindRecord> out;
  double dev = 0.0;
  double dir = 360.0 * uniform01(rng);
  const double innov = o.speed_sd * std::sqrt(1.0 - o.speed_memory * o.speed_memory);
  for (TimePoint t = span.start; t < span.end; t += kMinute) {
    out.push_back({t, std::clamp(o.mean_speed + dev, o.min_speed, o.max_speed), detail::wrap360(dir)});
    dev = o.speed_memory * dev + innov * std_normal(rng);
    dir += o.direction_step * std_normal(rng);
  }
  return out;
}

struct SyntheticReleaseOptions {
  long block_minutes = 30;      // releases start and stop on this grid
  double on_probability = 0.5;  // per block
  double min_rate = 0.5;        // kg/hr
  double max_rate = 4.0;
  double mean_blocks = 3.0;     // mean run length in blocks
};

/// Piecewise-constant releases aligned to `block_minutes`: each source
/// alternates between off and on runs of geometric length; every on run
/// draws a uniform rate.
inline std::vector<Release> synthetic_releases(const std::vector<SourceSpec>& sources, const Interval& span,
                                               std::uint64_t seed, const SyntheticReleaseOptions& o = {}) {
  std::vector<Release> out;
  const long blocks = span.minutes() / o.block_minutes;
  const double stop = 1.0 / std::max(1.0, o.mean_blocks);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    Rng rng(derive_seed(seed, 0x52454C00 + i));
    bool on = uniform01(rng) < o.on_probability;
    long b = 0;
    while (b < blocks) {
      long len = 1;
      while (b + len < blocks && uniform01(rng) >= stop) ++len;
      double rate = o.min_rate + (o.max_rate - o.min_rate) * uniform01(rng);
      if (on)
        out.push_back({sources[i].id,
                       {span.start + b * o.block_minutes * kMinute, span.start + (b + len) * o.block_minutes * kMinute},
                       rate});
      b += len;
      on = uniform01(rng) < o.on_probability;
    }
  }
  return out;
}

/// Independent per-window truth: each source is on with `on_probability`
/// at a uniform rate in [min_rate, max_rate].
inline std::vector<double> random_truth(std::size_t p, Rng& rng, const SyntheticReleaseOptions& o = {}) {
  std::vector<double> t(p, 0.0);
  for (auto& v : t) {
    bool on = uniform01(rng) < o.on_probability;
    double rate = o.min_rate + (o.max_rate - o.min_rate) * uniform01(rng);
    v = on ? rate : 0.0;
  }
  return t;
}

// --- least squares baseline ------------------------------------------------------

struct OlsResult {
  Eigen::VectorXd beta;           // model units (multiples of q g/s)
  std::vector<double> rate_kghr;  // may be negative
  std::vector<bool> emitting;
  bool rank_deficient = false;
};

inline constexpr double kOlsEmittingThresholdKgHr = 0.1;

/// Minimum-norm least squares; a source is called emitting above 0.1 kg/hr.
inline OlsResult ols_baseline(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, double q = 1.0,
                              double threshold_kghr = kOlsEmittingThresholdKgHr) {
  OlsResult out;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
  out.rank_deficient = cod.rank() < x.cols();
  Eigen::VectorXd b = cod.solve(y);
  out.beta = b;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    double rate = b(i) * q * kKgPerHourPerGramPerSecond;
    out.rate_kghr.push_back(rate);
    out.emitting.push_back(rate > threshold_kghr);
  }
  return out;
}

// --- rank correlation -------------------------------------------------------------

inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

struct Correlation {
  double rho = 0.0;
  double p_value = 1.0;  // two-sided, t approximation
  std::size_t n = 0;
};

/// Spearman rank correlation (Pearson on tie-averaged ranks).
inline Correlation spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: size mismatch");
  Correlation c;
  c.n = x.size();
  if (c.n < 3) return c;
  auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(c.n);
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(c.n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < c.n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return c;
  c.rho = sxy / std::sqrt(sxx * syy);
  double df = static_cast<double>(c.n) - 2.0;
  if (std::fabs(c.rho) >= 1.0) {
    c.p_value = 0.0;
    return c;
  }
  double t = c.rho * std::sqrt(df / (1.0 - c.rho * c.rho));
  boost::math::students_t dist(df);
  c.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  return c;
}

// --- sweep ----------------------------------------------------------------------

/// One window of a synthetic study: its design matrix and true rates.
struct StudyWindow {
  long index = 0;
  Interval window;
  DesignMatrix design;
  std::vector<double> truth_kghr;
};

/// Design matrices for `windows` paired with the given truth (one rate
/// vector per window). Windows without wind coverage throw MissingWind.
inline std::vector<StudyWindow> make_study_windows(const std::vector<SourceSpec>& sources,
                                                   const std::vector<SensorSpec>& sensors,
                                                   const std::vector<WindRecord>& winds,
                                                   const std::vector<Interval>& windows,
                                                   const std::vector<std::vector<double>>& truth,
                                                   const SimConfig& sim, std::size_t jobs = 1) {
  if (truth.size() != windows.size()) throw std::invalid_argument("one truth vector per window required");
  std::vector<StudyWindow> out(windows.size());
  parallel_for(windows.size(), jobs, [&](std::size_t k) {
    out[k] = {static_cast<long>(k), windows[k], build_design_matrix(sources, sensors, winds, windows[k], sim),
              truth[k]};
  });
  return out;
}

struct StudyOptions {
  double noise_sd = 1.0;
  double noise_r = 0.0;
  std::uint64_t seed = 11;
  SpikeParams spikes;
};

/// Per-window outcome at one misalignment level.
struct StudyRecord {
  double m_percent = 0.0;
  long window_index = 0;
  WindowStatus status = WindowStatus::Skipped;
  double sigma2 = 0.0;
  double r = 0.0;
  std::vector<std::optional<double>> rate_error;  // estimate - truth, kg/hr
  std::vector<std::optional<bool>> covered;
  std::optional<double> site_error;
  std::optional<bool> site_covered;
  std::size_t groups = 0;
  std::size_t moved = 0;

  /// Fraction of estimated sources whose interval holds the truth.
  std::optional<double> source_coverage() const {
    std::size_t k = 0, hit = 0;
    for (const auto& c : covered)
      if (c) { ++k; hit += *c ? 1 : 0; }
    if (k == 0) return std::nullopt;
    return static_cast<double>(hit) / static_cast<double>(k);
  }
};

/// Inverts one synthetic window at misalignment level `m_percent`. Noise is
/// keyed by window only, so different M levels share the same noise draw.
inline StudyRecord run_study_window(const StudyWindow& sw, double m_percent, const PipelineConfig& cfg,
                                    const StudyOptions& opts) {
  const auto key = static_cast<std::uint64_t>(sw.index);
  Rng noise_rng(derive_seed(opts.seed, key));
  Rng move_rng(derive_seed(derive_seed(opts.seed, static_cast<std::uint64_t>(std::lround(m_percent * 1000.0)) + 1),
                           key));
  const auto block = static_cast<std::size_t>(sw.design.layout.minutes);
  Eigen::VectorXd signal = sw.design.values * model_units(sw.truth_kghr, cfg.sim.q);
  auto mis = inject_misalignment(signal, block, m_percent, move_rng, opts.spikes);
  Observation obs;
  obs.layout = sw.design.layout;
  obs.y = mis.y + ar1_noise(static_cast<std::size_t>(signal.size()), block, opts.noise_sd, opts.noise_r, noise_rng);

  PipelineConfig local = cfg;
  local.keep_draws = false;
  WindowResult res = process_window(sw.index, sw.window, obs, sw.design, local);

  StudyRecord rec;
  rec.m_percent = m_percent;
  rec.window_index = sw.index;
  rec.status = res.status;
  rec.sigma2 = res.sigma2_mean;
  rec.r = res.r_mean;
  rec.groups = mis.groups;
  rec.moved = mis.moved;
  const std::size_t p = sw.truth_kghr.size();
  rec.rate_error.assign(p, std::nullopt);
  rec.covered.assign(p, std::nullopt);
  double site_truth = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    site_truth += sw.truth_kghr[i];
    if (!res.estimates[i]) continue;
    const auto& e = *res.estimates[i];
    rec.rate_error[i] = e.rate_kghr - sw.truth_kghr[i];
    rec.covered[i] = e.ci_low <= sw.truth_kghr[i] && sw.truth_kghr[i] <= e.ci_high;
  }
  if (res.site) {
    rec.site_error = res.site->rate_kghr - site_truth;
    rec.site_covered = res.site->ci_low <= site_truth && site_truth <= res.site->ci_high;
  }
  return rec;
}

struct SweepRow {
  double m_percent;
  std::string metric;
  std::string scope;
  double mean;
  double p2_5;
  double p97_5;
};

struct SweepReport {
  std::vector<StudyRecord> records;
  std::vector<SweepRow> rows;
  std::vector<std::string> source_ids;
};

inline constexpr double kDefaultMisalignments[] = {0.0, 12.5, 25.0, 37.5, 50.0};

namespace detail {

inline void add_row(std::vector<SweepRow>& rows, double m, const std::string& metric,
                    const std::string& scope, const std::vector<double>& v) {
  if (v.empty()) return;
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  rows.push_back({m, metric, scope, mean, quantile(v, 0.025), quantile(v, 0.975)});
}

}  // namespace detail

/// Runs every window at every misalignment level and summarises mean and
/// inner 95% range per (M, metric, scope).
inline SweepReport run_bias_sweep(const std::vector<StudyWindow>& windows, const std::vector<double>& ms,
                                  const PipelineConfig& cfg, const StudyOptions& opts) {
  SweepReport rep;
  if (!windows.empty()) rep.source_ids = windows.front().design.source_ids;
  const std::size_t per_m = windows.size();
  rep.records.resize(ms.size() * per_m);
  parallel_for(rep.records.size(), cfg.jobs, [&](std::size_t k) {
    rep.records[k] = run_study_window(windows[k % per_m], ms[k / per_m], cfg, opts);
  });

  const std::size_t p = rep.source_ids.size();
  for (std::size_t mi = 0; mi < ms.size(); ++mi) {
    std::vector<double> s2, rr, site_err, site_cov, all_err, all_cov;
    std::vector<std::vector<double>> err(p), cov(p);
    for (std::size_t w = 0; w < per_m; ++w) {
      const auto& rec = rep.records[mi * per_m + w];
      if (rec.status != WindowStatus::Estimated) continue;
      s2.push_back(rec.sigma2);
      rr.push_back(rec.r);
      for (std::size_t i = 0; i < p; ++i) {
        if (rec.rate_error[i]) {
          err[i].push_back(*rec.rate_error[i]);
          all_err.push_back(*rec.rate_error[i]);
        }
        if (rec.covered[i]) {
          cov[i].push_back(*rec.covered[i] ? 1.0 : 0.0);
          all_cov.push_back(*rec.covered[i] ? 1.0 : 0.0);
        }
      }
      if (rec.site_error) site_err.push_back(*rec.site_error);
      if (rec.site_covered) site_cov.push_back(*rec.site_covered ? 1.0 : 0.0);
    }
    const double m = ms[mi];
    detail::add_row(rep.rows, m, "sigma2", "window", s2);
    detail::add_row(rep.rows, m, "r", "window", rr);
    for (std::size_t i = 0; i < p; ++i) {
      detail::add_row(rep.rows, m, "rate_error", rep.source_ids[i], err[i]);
      detail::add_row(rep.rows, m, "coverage", rep.source_ids[i], cov[i]);
    }
    detail::add_row(rep.rows, m, "rate_error", "all_sources", all_err);
    detail::add_row(rep.rows, m, "coverage", "all_sources", all_cov);
    detail::add_row(rep.rows, m, "rate_error", "site", site_err);
    detail::add_row(rep.rows, m, "coverage", "site", site_cov);
  }
  return rep;
}

}  // namespace mdlq
