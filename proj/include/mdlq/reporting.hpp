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

 Inventories, alerts and evaluation against a known release schedule.

*/
#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mdlq/core.hpp"
#include "mdlq/pipeline.hpp"

namespace mdlq {

// --- inventory -----------------------------------------------------------------

struct SourceInventory {
  std::string source_id;
  bool estimable = false;
  double total_t = 0.0;
  double ci_low_t = 0.0;
  double ci_high_t = 0.0;
  std::size_t windows_estimated = 0;
  std::size_t windows_imputed = 0;
};

struct InventoryReport {
  std::vector<SourceInventory> sources;
  double site_total_t = 0.0;
  double site_ci_low_t = 0.0;
  double site_ci_high_t = 0.0;
  std::vector<std::string> non_estimable;

  const SourceInventory& at(const std::string& id) const {
    for (const auto& s : sources)
      if (s.source_id == id) {
        if (!s.estimable) throw NonEstimableSource("source " + id + " has no estimated window");
        return s;
      }
    throw std::out_of_range("unknown source " + id);
  }
};

struct InventoryOptions {
  std::size_t replicates = 1000;
  std::uint64_t seed = 7;
  double q = 1.0;  // simulation rate the draws were produced with
};

namespace detail {

inline bool has_estimate(const WindowResult& w, std::size_t i) {
  return i < w.estimates.size() && w.estimates[i].has_value();
}

/// One rate sample (kg/hr) from window w for source i, which must be estimated.
inline double sample_rate(const WindowResult& w, std::size_t i, double q, Rng& rng) {
  if (w.status != WindowStatus::Estimated) return 0.0;
  if (!w.draws || w.draws->draws.empty()) return w.estimates[i]->rate_kghr;
  std::size_t col = 0;
  for (std::size_t k = 0; k < i; ++k) col += w.viable_mask[k] ? 1 : 0;
  std::uniform_int_distribution<std::size_t> pick(0, w.draws->draws.size() - 1);
  return w.draws->draws[pick(rng)].beta(static_cast<Eigen::Index>(col)) * q *
         kKgPerHourPerGramPerSecond;
}

}  // namespace detail

/// Totals are the sum of posterior-mean rate x window length. Windows
/// without an estimate for a source take the mean of that source's
/// estimated windows for the point total and a uniformly chosen estimated
/// window for each resampling replicate.
inline InventoryReport build_inventory(const std::vector<WindowResult>& results,
                                       const InventoryOptions& opts = {}) {
  InventoryReport rep;
  if (results.empty()) return rep;
  const auto& ids = results.front().source_ids;
  const std::size_t p = ids.size();

  std::vector<std::vector<std::size_t>> estimated(p);
  for (std::size_t w = 0; w < results.size(); ++w)
    for (std::size_t i = 0; i < p; ++i)
      if (detail::has_estimate(results[w], i)) estimated[i].push_back(w);

  rep.sources.resize(p);
  std::vector<double> mean_rate(p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    auto& s = rep.sources[i];
    s.source_id = ids[i];
    s.estimable = !estimated[i].empty();
    s.windows_estimated = estimated[i].size();
    s.windows_imputed = results.size() - estimated[i].size();
    if (!s.estimable) {
      rep.non_estimable.push_back(ids[i]);
      continue;
    }
    for (std::size_t w : estimated[i]) mean_rate[i] += results[w].estimates[i]->rate_kghr;
    mean_rate[i] /= static_cast<double>(estimated[i].size());
    for (const auto& w : results) {
      double rate = detail::has_estimate(w, i) ? w.estimates[i]->rate_kghr : mean_rate[i];
      s.total_t += rate * w.hours() / 1000.0;
    }
  }

  Rng rng(opts.seed);
  std::vector<std::vector<double>> reps(p, std::vector<double>(opts.replicates, 0.0));
  std::vector<double> site_reps(opts.replicates, 0.0);
  for (std::size_t b = 0; b < opts.replicates; ++b) {
    for (std::size_t i = 0; i < p; ++i) {
      if (!rep.sources[i].estimable) continue;
      std::uniform_int_distribution<std::size_t> pick(0, estimated[i].size() - 1);
      double total = 0.0;
      for (const auto& w : results) {
        const WindowResult* src = &w;
        if (!detail::has_estimate(w, i)) src = &results[estimated[i][pick(rng)]];
        total += detail::sample_rate(*src, i, opts.q, rng) * w.hours() / 1000.0;
      }
      reps[i][b] = total;
      site_reps[b] += total;
    }
  }
  for (std::size_t i = 0; i < p; ++i) {
    auto& s = rep.sources[i];
    if (!s.estimable) continue;
    rep.site_total_t += s.total_t;
    if (opts.replicates == 0) {
      s.ci_low_t = s.ci_high_t = s.total_t;
      continue;
    }
    s.ci_low_t = std::min(quantile(reps[i], 0.025), s.total_t);
    s.ci_high_t = std::max(quantile(reps[i], 0.975), s.total_t);
  }
  if (opts.replicates > 0) {
    rep.site_ci_low_t = std::min(quantile(site_reps, 0.025), rep.site_total_t);
    rep.site_ci_high_t = std::max(quantile(site_reps, 0.975), rep.site_total_t);
  } else {
    rep.site_ci_low_t = rep.site_ci_high_t = rep.site_total_t;
  }
  return rep;
}

// --- alerts --------------------------------------------------------------------

struct AlertRecord {
  long window_index = 0;
  TimePoint window_start{};
  std::string source_id;
  bool emitting = false;
  double z_mean = 0.0;
  double threshold = 0.0;  // mean z over the source's other windows
};

struct AlertReport {
  std::vector<AlertRecord> records;
  std::vector<std::string> insufficient_history;
};

struct AlertOptions {
  bool include_zero_shortcut = true;  // zero-shortcut windows enter the baseline as z = 0
};

/// Alerts for source `i`: emitting in a window iff its posterior inclusion
/// mean is strictly above the mean over the source's other windows.
inline std::vector<AlertRecord> alerts_for_source(const std::vector<WindowResult>& results,
                                                  std::size_t i, const AlertOptions& opts = {}) {
  std::vector<const WindowResult*> rows;
  double sum = 0.0;
  std::size_t baseline = 0;
  for (const auto& w : results) {
    if (!detail::has_estimate(w, i)) continue;
    rows.push_back(&w);
    if (w.zero_shortcut() && !opts.include_zero_shortcut) continue;
    sum += w.estimates[i]->z_mean;
    ++baseline;
  }
  const std::string id = results.empty() ? "" : results.front().source_ids.at(i);
  if (rows.size() < 2 || baseline < 2)
    throw InsufficientHistory("source " + id + " has fewer than two estimated windows");
  std::vector<AlertRecord> out;
  for (const auto* w : rows) {
    double z = w->estimates[i]->z_mean;
    bool in_baseline = !(w->zero_shortcut() && !opts.include_zero_shortcut);
    double others = in_baseline ? (sum - z) / static_cast<double>(baseline - 1)
                                : sum / static_cast<double>(baseline);
    // Ties (up to summation round-off) do not alert.
    bool emitting = z - others > 1e-12 * std::max(1.0, std::fabs(others));
    out.push_back({w->index, w->window.start, id, emitting, z, others});
  }
  return out;
}

inline AlertReport generate_alerts(const std::vector<WindowResult>& results,
                                   const AlertOptions& opts = {}) {
  AlertReport rep;
  if (results.empty()) return rep;
  for (std::size_t i = 0; i < results.front().source_ids.size(); ++i) {
    try {
      auto recs = alerts_for_source(results, i, opts);
      rep.records.insert(rep.records.end(), recs.begin(), recs.end());
    } catch (const InsufficientHistory&) {
      rep.insufficient_history.push_back(results.front().source_ids[i]);
    }
  }
  std::stable_sort(rep.records.begin(), rep.records.end(),
                   [](const AlertRecord& a, const AlertRecord& b) { return a.window_index < b.window_index; });
  return rep;
}

// --- evaluation ------------------------------------------------------------------

/// True mean rate (kg/hr) per source for one window.
struct TruthWindow {
  Interval window;
  std::vector<double> rate_kghr;
};

struct Release {
  std::string source_id;
  Interval span;
  double rate_kghr = 0.0;
};

/// Time-averaged true rate per window from a list of constant-rate releases.
inline std::vector<TruthWindow> truth_from_releases(const std::vector<Release>& releases,
                                                    const std::vector<std::string>& source_ids,
                                                    const std::vector<Interval>& windows) {
  std::vector<TruthWindow> out;
  for (const auto& w : windows) {
    TruthWindow t{w, std::vector<double>(source_ids.size(), 0.0)};
    for (const auto& r : releases) {
      auto it = std::find(source_ids.begin(), source_ids.end(), r.source_id);
      if (it == source_ids.end()) continue;
      auto lo = std::max(r.span.start, w.start);
      auto hi = std::min(r.span.end, w.end);
      if (hi <= lo) continue;
      double frac = static_cast<double>((hi - lo).count()) / static_cast<double>(w.length().count());
      t.rate_kghr[static_cast<std::size_t>(it - source_ids.begin())] += r.rate_kghr * frac;
    }
    out.push_back(std::move(t));
  }
  return out;
}

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  static double ratio(std::size_t a, std::size_t b) {
    return b == 0 ? std::numeric_limits<double>::quiet_NaN()
                  : static_cast<double>(a) / static_cast<double>(b);
  }
  double tpr() const { return ratio(tp, tp + fn); }
  double tnr() const { return ratio(tn, tn + fp); }
  double ppv() const { return ratio(tp, tp + fp); }
  double npv() const { return ratio(tn, tn + fn); }
  double accuracy() const { return ratio(tp + tn, total()); }
  void add(bool truth, bool pred) {
    if (truth && pred) ++tp;
    else if (!truth && pred) ++fp;
    else if (!truth && !pred) ++tn;
    else ++fn;
  }
};

struct ErrorSummary {
  std::size_t count = 0;
  double mean = 0.0, median = 0.0, p25 = 0.0, p75 = 0.0, iqr = 0.0, p2_5 = 0.0, p97_5 = 0.0;
};

inline ErrorSummary summarize_errors(const std::vector<double>& e) {
  ErrorSummary s;
  s.count = e.size();
  if (e.empty()) {
    s.mean = s.median = s.p25 = s.p75 = s.iqr = s.p2_5 = s.p97_5 =
        std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  for (double v : e) s.mean += v;
  s.mean /= static_cast<double>(e.size());
  s.median = quantile(e, 0.5);
  s.p25 = quantile(e, 0.25);
  s.p75 = quantile(e, 0.75);
  s.iqr = s.p75 - s.p25;
  s.p2_5 = quantile(e, 0.025);
  s.p97_5 = quantile(e, 0.975);
  return s;
}

struct ScopeEvaluation {
  std::string scope;  // source id or "site"
  Confusion confusion;
  std::vector<double> rate_errors;  // estimate - truth, kg/hr
  ErrorSummary errors;
  std::size_t covered = 0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;

  double coverage() const { return Confusion::ratio(covered, evaluated); }
};

struct EvaluationReport {
  std::vector<ScopeEvaluation> sources;
  ScopeEvaluation site;
  double mean_correct_states = 0.0;  // per complete window, out of p
};

/// Scores detections (via the alert rule), rates and interval coverage.
/// Site-level figures use only windows where every source was estimated.
inline EvaluationReport evaluate(const std::vector<WindowResult>& results,
                                 const std::vector<TruthWindow>& truth,
                                 const AlertOptions& alert_opts = {}) {
  EvaluationReport rep;
  rep.site.scope = "site";
  if (results.empty()) {
    if (!truth.empty()) throw ScheduleMismatch("truth schedule given for an empty result set");
    return rep;
  }
  std::map<TimePoint, const TruthWindow*> by_start;
  for (const auto& t : truth) by_start[t.window.start] = &t;
  if (by_start.size() != results.size())
    throw ScheduleMismatch("truth has " + std::to_string(by_start.size()) + " windows, results " +
                           std::to_string(results.size()));
  const auto& ids = results.front().source_ids;
  const std::size_t p = ids.size();
  for (const auto& w : results) {
    auto it = by_start.find(w.window.start);
    if (it == by_start.end() || !(it->second->window == w.window) || it->second->rate_kghr.size() != p)
      throw ScheduleMismatch("no matching truth window for " + format_timestamp(w.window.start));
  }

  std::map<std::pair<long, std::size_t>, bool> alert_state;
  auto alerts = generate_alerts(results, alert_opts);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < p; ++i) col[ids[i]] = i;
  for (const auto& a : alerts.records) alert_state[{a.window_index, col[a.source_id]}] = a.emitting;

  rep.sources.resize(p);
  for (std::size_t i = 0; i < p; ++i) rep.sources[i].scope = ids[i];
  std::size_t complete = 0;
  double correct_sum = 0.0;
  for (const auto& w : results) {
    const auto& t = *by_start.at(w.window.start);
    bool all = true;
    std::size_t correct = 0;
    bool site_pred = false;
    for (std::size_t i = 0; i < p; ++i) {
      auto& sc = rep.sources[i];
      auto st = alert_state.find({w.index, i});
      if (!detail::has_estimate(w, i) || st == alert_state.end()) {
        ++sc.excluded;
        all = false;
        continue;
      }
      const auto& est = *w.estimates[i];
      bool truth_on = t.rate_kghr[i] > 0.0;
      sc.confusion.add(truth_on, st->second);
      correct += truth_on == st->second ? 1 : 0;
      site_pred = site_pred || st->second;
      sc.rate_errors.push_back(est.rate_kghr - t.rate_kghr[i]);
      ++sc.evaluated;
      if (est.ci_low <= t.rate_kghr[i] && t.rate_kghr[i] <= est.ci_high) ++sc.covered;
    }
    if (!all || !w.site) {
      ++rep.site.excluded;
      continue;
    }
    double site_truth = 0.0;
    bool site_on = false;
    for (double r : t.rate_kghr) {
      site_truth += r;
      site_on = site_on || r > 0.0;
    }
    rep.site.confusion.add(site_on, site_pred);
    rep.site.rate_errors.push_back(w.site->rate_kghr - site_truth);
    ++rep.site.evaluated;
    if (w.site->ci_low <= site_truth && site_truth <= w.site->ci_high) ++rep.site.covered;
    ++complete;
    correct_sum += static_cast<double>(correct);
  }
  for (auto& s : rep.sources) s.errors = summarize_errors(s.rate_errors);
  rep.site.errors = summarize_errors(rep.site.rate_errors);
  rep.mean_correct_states = complete ? correct_sum / static_cast<double>(complete)
                                     : std::numeric_limits<double>::quiet_NaN();
  return rep;
}

struct Histogram {
  double lo = 0.0, hi = 0.0;
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [lo, hi]; values outside are clamped to the edge bins.
inline Histogram histogram(const std::vector<double>& v, std::size_t bins, double lo, double hi) {
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
  if (bins == 0 || !(hi > lo)) return h;
  for (double x : v) {
    if (std::isnan(x)) continue;
    double pos = (x - lo) / (hi - lo) * static_cast<double>(bins);
    auto k = static_cast<long>(std::floor(pos));
    k = std::clamp(k, 0L, static_cast<long>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(k)];
  }
  return h;
}

}  // namespace mdlq
