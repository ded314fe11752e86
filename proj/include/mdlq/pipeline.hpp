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

 Moving-window inversion over a deployment: fixed-length windows, per-window
 source viability, the all-zero shortcut and one sampler run per window.

*/
#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mdlq/core.hpp"
#include "mdlq/forward_model.hpp"
#include "mdlq/model.hpp"
#include "mdlq/preprocess.hpp"

namespace mdlq {

struct PipelineConfig {
  long window_minutes = 30;
  long offset_minutes = 0;          // window grid shift from the span start
  std::size_t viability_threshold = 4;
  double nonzero_tol = 1e-9;        // ppm
  double max_missing_fraction = 0.1;
  std::size_t jobs = 1;
  SimConfig sim;
  SamplerConfig sampler;
  Hyperparams hyper;
  bool keep_draws = true;
};

struct Partition {
  std::vector<Interval> windows;
  long remainder_minutes = 0;
};

/// Consecutive non-overlapping windows of `window_minutes`, starting
/// `offset_minutes` into the span. A trailing partial window is dropped and
/// reported in `remainder_minutes`.
inline Partition partition_windows(const Interval& span, long window_minutes, long offset_minutes = 0) {
  if (window_minutes < 1) throw std::invalid_argument("window length must be >= 1 minute");
  Partition out;
  long total = span.minutes() - offset_minutes;
  if (total <= 0) {
    out.remainder_minutes = std::max(0L, span.minutes());
    return out;
  }
  long count = total / window_minutes;
  TimePoint t = span.start + offset_minutes * kMinute;
  for (long k = 0; k < count; ++k, t += window_minutes * kMinute)
    out.windows.push_back({t, t + window_minutes * kMinute});
  out.remainder_minutes = total - count * window_minutes + offset_minutes;
  return out;
}

/// Source i is viable when at least `threshold` entries of its column
/// exceed `tol`.
inline std::vector<bool> viable_sources(const Eigen::MatrixXd& x, std::size_t threshold, double tol) {
  std::vector<bool> mask(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    mask[static_cast<std::size_t>(j)] =
        static_cast<std::size_t>((x.col(j).array() > tol).count()) >= threshold;
  return mask;
}

struct SourceEstimate {
  double rate_kghr = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double z_mean = 0.0;
};

enum class WindowStatus { Estimated, ZeroShortcut, NoInformation, Skipped };

inline const char* to_string(WindowStatus s) {
  switch (s) {
    case WindowStatus::Estimated: return "estimated";
    case WindowStatus::ZeroShortcut: return "zero_shortcut";
    case WindowStatus::NoInformation: return "no_information";
    case WindowStatus::Skipped: return "skipped";
  }
  return "?";
}

struct WindowResult {
  long index = 0;
  Interval window;
  WindowStatus status = WindowStatus::Skipped;
  std::string message;
  std::vector<std::string> source_ids;      // all site sources
  std::vector<bool> viable_mask;
  std::vector<std::optional<SourceEstimate>> estimates;  // empty slot = no estimate
  std::optional<SourceEstimate> site;       // only when every source is viable
  double sigma2_mean = 0.0;
  double r_mean = 0.0;
  double nu_mean = 0.0;
  double accept_nu = 0.0;
  double accept_r = 0.0;
  std::shared_ptr<const PosteriorDraws> draws;

  bool zero_shortcut() const { return status == WindowStatus::ZeroShortcut; }
  double hours() const {
    return static_cast<double>(window.length().count()) / 3600.0;
  }
};

namespace detail {

inline SourceEstimate summarize_draws(std::vector<double> v, double z_mean) {
  SourceEstimate e;
  double sum = 0.0;
  for (double x : v) sum += x;
  e.rate_kghr = sum / static_cast<double>(v.size());
  e.ci_low = quantile(v, 0.025);
  e.ci_high = quantile(std::move(v), 0.975);
  e.z_mean = z_mean;
  return e;
}

}  // namespace detail

/// Inverts one window given its observation and full-site design matrix.
inline WindowResult process_window(long index, const Interval& window, const Observation& obs,
                                   const DesignMatrix& dm, const PipelineConfig& cfg) {
  WindowResult res;
  res.index = index;
  res.window = window;
  res.source_ids = dm.source_ids;
  const std::size_t p = dm.source_ids.size();
  res.viable_mask = viable_sources(dm.values, cfg.viability_threshold, cfg.nonzero_tol);
  res.estimates.assign(p, std::nullopt);
  const auto viable = static_cast<std::size_t>(
      std::count(res.viable_mask.begin(), res.viable_mask.end(), true));
  const bool all_viable = viable == p;

  WindowData w = make_window_data(obs, dm, res.viable_mask);
  if (viable == 0) {
    res.status = WindowStatus::NoInformation;
    res.message = "no viable sources";
    return res;
  }
  if ((w.y.array() == 0.0).all()) {
    res.status = WindowStatus::ZeroShortcut;
    for (std::size_t i = 0; i < p; ++i)
      if (res.viable_mask[i]) res.estimates[i] = SourceEstimate{};
    if (all_viable) res.site = SourceEstimate{};
    return res;
  }

  SamplerConfig sc = cfg.sampler;
  sc.seed = derive_seed(cfg.sampler.seed, static_cast<std::uint64_t>(index));
  auto draws = std::make_shared<PosteriorDraws>(run_gibbs(w, cfg.hyper.subset(res.viable_mask), sc));
  draws->window_id = format_timestamp(window.start);
  PointEstimate pe = point_estimate(*draws, cfg.sim.q);

  std::size_t col = 0;
  std::vector<double> site(draws->draws.size(), 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    if (!res.viable_mask[i]) continue;
    auto v = rate_draws_kghr(*draws, col, cfg.sim.q);
    for (std::size_t k = 0; k < v.size(); ++k) site[k] += v[k];
    res.estimates[i] = detail::summarize_draws(std::move(v), pe.z_mean[col]);
    ++col;
  }
  if (all_viable) res.site = detail::summarize_draws(std::move(site), 0.0);
  for (const auto& s : draws->draws) {
    res.sigma2_mean += s.sigma2;
    res.r_mean += s.r;
    res.nu_mean += s.nu;
  }
  const double count = static_cast<double>(draws->draws.size());
  res.sigma2_mean /= count;
  res.r_mean /= count;
  res.nu_mean /= count;
  res.accept_nu = draws->accept_nu;
  res.accept_r = draws->accept_r;
  res.status = WindowStatus::Estimated;
  if (cfg.keep_draws) res.draws = std::move(draws);
  return res;
}

/// Everything needed to invert a deployment. `observations` are
/// background-removed minute series keyed by sensor id; `winds` is the
/// site-level minute wind, sorted.
struct Deployment {
  std::vector<SourceSpec> sources;
  std::vector<SensorSpec> sensors;
  std::vector<WindRecord> winds;
  std::map<std::string, ConcentrationSeries> observations;
  Interval span;
};

inline WindowResult skipped_window(long index, const Interval& window,
                                   const std::vector<SourceSpec>& sources, std::string why) {
  WindowResult res;
  res.index = index;
  res.window = window;
  res.status = WindowStatus::Skipped;
  res.message = std::move(why);
  for (const auto& s : sources) res.source_ids.push_back(s.id);
  res.viable_mask.assign(sources.size(), false);
  res.estimates.assign(sources.size(), std::nullopt);
  return res;
}

inline WindowResult process_window(long index, const Interval& window, const Deployment& dep,
                                   const PipelineConfig& cfg) {
  try {
    DesignMatrix dm = build_design_matrix(dep.sources, dep.sensors, dep.winds, window, cfg.sim);
    Observation obs = assemble_observation(dep.observations, sensor_ids(dep.sensors), window,
                                           cfg.max_missing_fraction);
    return process_window(index, window, obs, dm, cfg);
  } catch (const MissingWind& e) {
    return skipped_window(index, window, dep.sources, e.what());
  } catch (const IncompleteWindow& e) {
    return skipped_window(index, window, dep.sources, e.what());
  }
}

/// Runs fn(0..count-1) on up to `jobs` threads. fn must only touch its own slot.
inline void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct DeploymentResult {
  std::vector<WindowResult> windows;
  long remainder_minutes = 0;
  std::size_t failed = 0;
};

/// Processes every window; a callback (if set) sees each result as it
/// completes, possibly from a worker thread.
inline DeploymentResult run_deployment(
    const Deployment& dep, const PipelineConfig& cfg,
    const std::function<bool(long)>& skip = {},
    const std::function<void(const WindowResult&)>& on_done = {}) {
  DeploymentResult out;
  if (dep.span.minutes() <= 0) return out;
  Partition part = partition_windows(dep.span, cfg.window_minutes, cfg.offset_minutes);
  out.remainder_minutes = part.remainder_minutes;
  out.windows.resize(part.windows.size());
  std::mutex cb_mutex;
  parallel_for(part.windows.size(), cfg.jobs, [&](std::size_t k) {
    const auto idx = static_cast<long>(k);
    if (skip && skip(idx)) {
      out.windows[k] = skipped_window(idx, part.windows[k], dep.sources, "resumed");
      return;
    }
    out.windows[k] = process_window(idx, part.windows[k], dep, cfg);
    if (on_done) {
      std::lock_guard lock(cb_mutex);
      on_done(out.windows[k]);
    }
  });
  for (const auto& w : out.windows)
    if (w.status == WindowStatus::Skipped && w.message != "resumed") ++out.failed;
  return out;
}

}  // namespace mdlq
