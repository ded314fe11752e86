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

 CSV readers and writers for site geometry, raw measurements, design
 matrices, window results and report tables.

 Readers locate columns by header name, so column order is free. Numbers
 are written with 17 significant digits so files round-trip exactly.

*/
#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mdlq/core.hpp"
#include "mdlq/forward_model.hpp"
#include "mdlq/pipeline.hpp"
#include "mdlq/preprocess.hpp"
#include "mdlq/reporting.hpp"
#include "mdlq/simstudy.hpp"
#include "mdlq/types.hpp"

namespace mdlq {

/// A file that could not be opened or parsed. Carries the path.
struct DataError : Error {
  DataError(const std::filesystem::path& p, const std::string& what)
      : Error(p.string() + ": " + what), path(p) {}
  std::filesystem::path path;
};

namespace csv {

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') { cur += '"'; ++i; }
      else if (c == '"') quoted = false;
      else cur += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    auto b = f.find_first_not_of(" \t");
    auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

/// Header-indexed table. Lines starting with '#' and blank lines are skipped.
class Table {
 public:
  static Table read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path, "cannot open");
    Table t;
    t.path_ = path;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line == "\r") {
        if (header && line.rfind("#", 0) == 0) t.comments_.push_back(line.substr(1));
        continue;
      }
      auto fields = split(line);
      if (header) {
        for (std::size_t i = 0; i < fields.size(); ++i) t.index_[fields[i]] = i;
        t.columns_ = fields;
        header = false;
      } else {
        if (fields.size() != t.columns_.size())
          throw DataError(path, "row " + std::to_string(t.rows_.size() + 2) + " has " +
                                    std::to_string(fields.size()) + " fields, expected " +
                                    std::to_string(t.columns_.size()));
        t.rows_.push_back(std::move(fields));
      }
    }
    if (header) throw DataError(path, "missing header row");
    return t;
  }

  std::size_t size() const { return rows_.size(); }
  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::string>& comments() const { return comments_; }
  bool has(const std::string& col) const { return index_.count(col) > 0; }

  std::size_t column(const std::string& col) const {
    auto it = index_.find(col);
    if (it == index_.end()) throw DataError(path_, "missing column '" + col + "'");
    return it->second;
  }
  const std::string& str(std::size_t row, const std::string& col) const { return rows_[row][column(col)]; }
  const std::string& cell(std::size_t row, std::size_t col) const { return rows_[row][col]; }

  double num(std::size_t row, const std::string& col) const { return to_double(rows_[row][column(col)], row); }
  double num_at(std::size_t row, std::size_t col) const { return to_double(rows_[row][col], row); }

  bool flag(std::size_t row, const std::string& col) const {
    const auto& s = str(row, col);
    if (s == "1" || s == "true" || s == "TRUE" || s == "True" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "FALSE" || s == "False" || s == "no" || s.empty()) return false;
    throw DataError(path_, "row " + std::to_string(row + 2) + ": bad flag '" + s + "'");
  }

  TimePoint time(std::size_t row, const std::string& col) const {
    try {
      return parse_timestamp(str(row, col));
    } catch (const ParseError& e) {
      throw DataError(path_, "row " + std::to_string(row + 2) + ": " + e.what());
    }
  }

 private:
  double to_double(const std::string& s, std::size_t row) const {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
      if (s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
      throw DataError(path_, "row " + std::to_string(row + 2) + ": bad number '" + s + "'");
    }
    return v;
  }

  std::filesystem::path path_;
  std::vector<std::string> columns_;
  std::vector<std::string> comments_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<std::string>> rows_;
};

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path, "cannot open for writing");
  return out;
}

}  // namespace csv

// --- geometry and measurements -------------------------------------------------

inline std::vector<SensorSpec> read_sensors(const std::filesystem::path& path) {
  auto t = csv::Table::read(path);
  std::vector<SensorSpec> out;
  for (std::size_t r = 0; r < t.size(); ++r) {
    SensorSpec s{t.str(r, "id"), t.num(r, "x"), t.num(r, "y"), t.num(r, "z"),
                 t.has("has_anemometer") && t.flag(r, "has_anemometer")};
    if (s.z < 0) throw DataError(path, "sensor " + s.id + " has negative z");
    for (const auto& o : out)
      if (o.id == s.id) throw DataError(path, "duplicate sensor id " + s.id);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<SourceSpec> read_sources(const std::filesystem::path& path) {
  auto t = csv::Table::read(path);
  const std::string hcol = t.has("H") ? "H" : "height";
  std::vector<SourceSpec> out;
  for (std::size_t r = 0; r < t.size(); ++r) {
    SourceSpec s{t.str(r, "id"), t.num(r, "x"), t.num(r, "y"), t.num(r, hcol)};
    if (s.height < 0) throw DataError(path, "source " + s.id + " has negative H");
    for (const auto& o : out)
      if (o.id == s.id) throw DataError(path, "duplicate source id " + s.id);
    out.push_back(std::move(s));
  }
  return out;
}

/// Wind records grouped by sensor id, each group sorted by time.
inline std::map<std::string, std::vector<WindRecord>> read_wind(const std::filesystem::path& path) {
  auto t = csv::Table::read(path);
  std::map<std::string, std::vector<WindRecord>> out;
  for (std::size_t r = 0; r < t.size(); ++r) {
    WindRecord w{t.time(r, "timestamp"), t.num(r, "speed_mps"), t.num(r, "direction_deg")};
    if (!(w.speed >= 0)) throw DataError(path, "row " + std::to_string(r + 2) + ": negative speed");
    w.direction = detail::wrap360(w.direction);
    out[t.str(r, "sensor_id")].push_back(w);
  }
  for (auto& [id, v] : out)
    std::stable_sort(v.begin(), v.end(),
                     [](const WindRecord& a, const WindRecord& b) { return a.timestamp < b.timestamp; });
  return out;
}

inline std::vector<ConcentrationRecord> read_concentrations(const std::filesystem::path& path) {
  auto t = csv::Table::read(path);
  std::vector<ConcentrationRecord> out;
  out.reserve(t.size());
  for (std::size_t r = 0; r < t.size(); ++r)
    out.push_back({t.time(r, "timestamp"), t.str(r, "sensor_id"), t.num(r, "methane_ppm")});
  return out;
}

inline void write_sensors(const std::filesystem::path& path, const std::vector<SensorSpec>& sensors) {
  auto out = csv::open_out(path);
  out << "id,x,y,z,has_anemometer\n";
  for (const auto& s : sensors)
    out << csv::quote(s.id) << ',' << csv::fmt(s.x) << ',' << csv::fmt(s.y) << ',' << csv::fmt(s.z) << ','
        << (s.has_anemometer ? 1 : 0) << '\n';
}

inline void write_sources(const std::filesystem::path& path, const std::vector<SourceSpec>& sources) {
  auto out = csv::open_out(path);
  out << "id,x,y,H\n";
  for (const auto& s : sources)
    out << csv::quote(s.id) << ',' << csv::fmt(s.x) << ',' << csv::fmt(s.y) << ',' << csv::fmt(s.height)
        << '\n';
}

inline void write_wind(const std::filesystem::path& path,
                       const std::map<std::string, std::vector<WindRecord>>& wind) {
  auto out = csv::open_out(path);
  out << "timestamp,sensor_id,speed_mps,direction_deg\n";
  for (const auto& [id, recs] : wind)
    for (const auto& w : recs)
      out << format_timestamp(w.timestamp) << ',' << csv::quote(id) << ',' << csv::fmt(w.speed) << ','
          << csv::fmt(w.direction) << '\n';
}

inline void write_concentrations(const std::filesystem::path& path,
                                 const std::vector<ConcentrationRecord>& recs) {
  auto out = csv::open_out(path);
  out << "timestamp,sensor_id,methane_ppm\n";
  for (const auto& r : recs)
    out << format_timestamp(r.timestamp) << ',' << csv::quote(r.sensor_id) << ',' << csv::fmt(r.ppm) << '\n';
}

/// Releases: source_id,start,end,rate_kghr.
inline std::vector<Release> read_releases(const std::filesystem::path& path) {
  auto t = csv::Table::read(path);
  std::vector<Release> out;
  for (std::size_t r = 0; r < t.size(); ++r)
    out.push_back({t.str(r, "source_id"), {t.time(r, "start"), t.time(r, "end")}, t.num(r, "rate_kghr")});
  return out;
}

inline void write_releases(const std::filesystem::path& path, const std::vector<Release>& rel) {
  auto out = csv::open_out(path);
  out << "source_id,start,end,rate_kghr\n";
  for (const auto& r : rel)
    out << csv::quote(r.source_id) << ',' << format_timestamp(r.span.start) << ','
        << format_timestamp(r.span.end) << ',' << csv::fmt(r.rate_kghr) << '\n';
}

// --- matrices and observations ---------------------------------------------------

/// Design matrix with layout columns: sensor_id,minute,<source ids...>.
/// The metadata line records the window start.
inline void write_design_matrix(const std::filesystem::path& path, const DesignMatrix& dm,
                                const Eigen::VectorXd* y = nullptr) {
  auto out = csv::open_out(path);
  out << "# window_start=" << format_timestamp(dm.layout.start) << " minutes=" << dm.layout.minutes << '\n';
  out << "sensor_id,minute";
  for (const auto& id : dm.source_ids) out << ',' << csv::quote(id);
  if (y) out << ",y";
  out << '\n';
  for (Eigen::Index r = 0; r < dm.values.rows(); ++r) {
    auto row = static_cast<std::size_t>(r);
    out << csv::quote(dm.layout.sensor_ids[dm.layout.sensor_of(row)]) << ',' << dm.layout.minute_of(row);
    for (Eigen::Index c = 0; c < dm.values.cols(); ++c) out << ',' << csv::fmt(dm.values(r, c));
    if (y) out << ',' << csv::fmt((*y)(r));
    out << '\n';
  }
}

/// Reads a design matrix written by write_design_matrix. A trailing `y`
/// column, if present, is returned through `y`.
inline DesignMatrix read_design_matrix(const std::filesystem::path& path, Eigen::VectorXd* y = nullptr) {
  auto t = csv::Table::read(path);
  DesignMatrix dm;
  for (const auto& c : t.comments()) {
    auto pos = c.find("window_start=");
    if (pos != std::string::npos) {
      auto end = c.find(' ', pos);
      dm.layout.start = parse_timestamp(c.substr(pos + 13, end - pos - 13));
    }
  }
  const auto& cols = t.columns();
  if (cols.size() < 2 || cols[0] != "sensor_id" || cols[1] != "minute")
    throw DataError(path, "design matrix must start with sensor_id,minute");
  bool has_y = cols.back() == "y";
  std::size_t p = cols.size() - 2 - (has_y ? 1 : 0);
  dm.source_ids.assign(cols.begin() + 2, cols.begin() + 2 + static_cast<long>(p));
  dm.values.resize(static_cast<Eigen::Index>(t.size()), static_cast<Eigen::Index>(p));
  if (y) y->resize(static_cast<Eigen::Index>(t.size()));
  long max_minute = -1;
  for (std::size_t r = 0; r < t.size(); ++r) {
    const auto& sid = t.cell(r, 0);
    if (dm.layout.sensor_ids.empty() || dm.layout.sensor_ids.back() != sid) dm.layout.sensor_ids.push_back(sid);
    max_minute = std::max(max_minute, static_cast<long>(t.num_at(r, 1)));
    for (std::size_t c = 0; c < p; ++c)
      dm.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.num_at(r, c + 2);
    if (y && has_y) (*y)(static_cast<Eigen::Index>(r)) = t.num_at(r, cols.size() - 1);
  }
  dm.layout.minutes = max_minute + 1;
  if (dm.layout.rows() != t.size()) throw DataError(path, "rows do not match sensors x minutes");
  return dm;
}

// --- results ---------------------------------------------------------------------

inline void write_results_csv(const std::filesystem::path& path, const std::vector<WindowResult>& results) {
  auto out = csv::open_out(path);
  out << "window_start,window_end,source_id,rate_kghr,ci_low,ci_high,z_mean,viable,zero_shortcut\n";
  for (const auto& w : results) {
    for (std::size_t i = 0; i < w.source_ids.size(); ++i) {
      out << format_timestamp(w.window.start) << ',' << format_timestamp(w.window.end) << ','
          << csv::quote(w.source_ids[i]) << ',';
      if (w.estimates[i]) {
        const auto& e = *w.estimates[i];
        out << csv::fmt(e.rate_kghr) << ',' << csv::fmt(e.ci_low) << ',' << csv::fmt(e.ci_high) << ','
            << csv::fmt(e.z_mean);
      } else {
        out << ",,,";
      }
      out << ',' << (w.viable_mask[i] ? 1 : 0) << ',' << (w.zero_shortcut() ? 1 : 0) << '\n';
    }
  }
}

inline void write_inventory_csv(const std::filesystem::path& path, const InventoryReport& inv) {
  auto out = csv::open_out(path);
  out << "source_id,total_t,ci_low_t,ci_high_t,n_windows_estimated,n_windows_imputed\n";
  for (const auto& s : inv.sources) {
    out << csv::quote(s.source_id) << ',';
    if (s.estimable)
      out << csv::fmt(s.total_t) << ',' << csv::fmt(s.ci_low_t) << ',' << csv::fmt(s.ci_high_t);
    else
      out << ",,";
    out << ',' << s.windows_estimated << ',' << s.windows_imputed << '\n';
  }
  if (!inv.sources.empty())
    out << "site," << csv::fmt(inv.site_total_t) << ',' << csv::fmt(inv.site_ci_low_t) << ','
        << csv::fmt(inv.site_ci_high_t) << ",,\n";
}

inline void write_alerts_csv(const std::filesystem::path& path, const AlertReport& rep) {
  auto out = csv::open_out(path);
  out << "window_start,source_id,emitting,z_mean\n";
  for (const auto& a : rep.records)
    out << format_timestamp(a.window_start) << ',' << csv::quote(a.source_id) << ',' << (a.emitting ? 1 : 0)
        << ',' << csv::fmt(a.z_mean) << '\n';
}

inline void write_evaluation_csv(const std::filesystem::path& path, const EvaluationReport& rep) {
  auto out = csv::open_out(path);
  out << "metric,scope,value\n";
  auto scope_rows = [&](const ScopeEvaluation& s) {
    const auto& c = s.confusion;
    const std::pair<const char*, double> rows[] = {
        {"tpr", c.tpr()},
        {"tnr", c.tnr()},
        {"ppv", c.ppv()},
        {"npv", c.npv()},
        {"accuracy", c.accuracy()},
        {"tp", static_cast<double>(c.tp)},
        {"fp", static_cast<double>(c.fp)},
        {"tn", static_cast<double>(c.tn)},
        {"fn", static_cast<double>(c.fn)},
        {"coverage", s.coverage()},
        {"n_evaluated", static_cast<double>(s.evaluated)},
        {"n_excluded", static_cast<double>(s.excluded)},
        {"rate_error_mean", s.errors.mean},
        {"rate_error_median", s.errors.median},
        {"rate_error_p25", s.errors.p25},
        {"rate_error_p75", s.errors.p75},
        {"rate_error_iqr", s.errors.iqr},
        {"rate_error_p2.5", s.errors.p2_5},
        {"rate_error_p97.5", s.errors.p97_5},
    };
    for (const auto& [name, v] : rows) out << name << ',' << csv::quote(s.scope) << ',' << csv::fmt(v) << '\n';
  };
  for (const auto& s : rep.sources) scope_rows(s);
  scope_rows(rep.site);
  out << "mean_correct_states,site," << csv::fmt(rep.mean_correct_states) << '\n';
}

inline void write_histogram_csv(const std::filesystem::path& path, const Histogram& h) {
  auto out = csv::open_out(path);
  out << "bin_low,bin_high,count\n";
  const double width = (h.hi - h.lo) / static_cast<double>(std::max<std::size_t>(1, h.counts.size()));
  for (std::size_t b = 0; b < h.counts.size(); ++b)
    out << csv::fmt(h.lo + width * static_cast<double>(b)) << ',' << csv::fmt(h.lo + width * static_cast<double>(b + 1))
        << ',' << h.counts[b] << '\n';
}

inline void write_sweep_csv(const std::filesystem::path& path, const SweepReport& rep) {
  auto out = csv::open_out(path);
  out << "M,metric,scope,mean,p2.5,p97.5\n";
  for (const auto& r : rep.rows)
    out << csv::fmt(r.m_percent) << ',' << r.metric << ',' << csv::quote(r.scope) << ',' << csv::fmt(r.mean)
        << ',' << csv::fmt(r.p2_5) << ',' << csv::fmt(r.p97_5) << '\n';
}

}  // namespace mdlq
