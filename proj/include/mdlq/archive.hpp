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

 Machine-readable results: posterior draw files and the window-result
 archive.

 A draw file is CSV with '#'-prefixed metadata lines (key=value) followed by
 one row per retained draw:

   # window_id=2024-05-01T00:00:00Z
   # seed=...
   # source_ids=S1;S2;S3
   # viable_mask=1;0;1
   # accept_nu=...  accept_r=...
   # config={...}
   draw,beta_S1,beta_S3,z_S1,z_S3,theta_S1,theta_S3,tau2_S1,tau2_S3,sigma2,nu,r

 Only viable sources get columns. The archive is a JSON document holding
 one object per window; each object names its draw file relative to the
 archive.

*/
#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mdlq/config.hpp"
#include "mdlq/io.hpp"
#include "mdlq/model.hpp"
#include "mdlq/pipeline.hpp"

namespace mdlq {

inline constexpr const char* kArchiveFormat = "mdlq-results/1";

namespace archive_detail {

inline std::string join(const std::vector<std::string>& v, char sep = ';') {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(1, sep) : "") + v[i];
  return out;
}

inline std::vector<std::string> split(const std::string& s, char sep = ';') {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t pos = 0;
  for (;;) {
    auto next = s.find(sep, pos);
    out.push_back(s.substr(pos, next - pos));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

/// Writes to a sibling temp file and renames, so readers never see a torn file.
template <class F>
void atomic_write(const std::filesystem::path& path, F&& body) {
  auto tmp = path;
  tmp += ".tmp";
  {
    auto out = csv::open_out(tmp);
    body(out);
    out.flush();
    if (!out) throw DataError(tmp, "write failed");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace archive_detail

inline Json sampler_json(const SamplerConfig& s) {
  Json j;
  j["iterations"] = s.iterations;
  j["burn_in"] = s.burn_in;
  j["thin"] = s.thin;
  j["seed"] = s.seed;
  j["prop_sd_nu"] = s.prop_sd_nu;
  j["prop_sd_r"] = s.prop_sd_r;
  j["ar_structure"] = s.ar_structure == ArStructure::BlockPerSensor ? "block_per_sensor" : "full_concatenated";
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  j["fixed_sigma2"] = opt(s.fixed_sigma2);
  j["fixed_nu"] = opt(s.fixed_nu);
  j["fixed_r"] = opt(s.fixed_r);
  j["fixed_tau2"] = opt(s.fixed_tau2);
  j["force_inclusion"] = s.force_inclusion;
  return j;
}

inline void write_draws(const std::filesystem::path& path, const PosteriorDraws& d) {
  std::vector<std::string> mask;
  for (bool b : d.viable_mask) mask.push_back(b ? "1" : "0");
  const auto& viable_ids = d.source_ids;  // viable columns only

  archive_detail::atomic_write(path, [&](std::ofstream& out) {
    out << "# window_id=" << d.window_id << '\n';
    out << "# seed=" << d.config.seed << '\n';
    out << "# source_ids=" << archive_detail::join(viable_ids) << '\n';
    out << "# viable_mask=" << archive_detail::join(mask) << '\n';
    out << "# accept_nu=" << csv::fmt(d.accept_nu) << '\n';
    out << "# accept_r=" << csv::fmt(d.accept_r) << '\n';
    out << "# config=" << sampler_json(d.config).dump() << '\n';
    out << "draw";
    for (const char* name : {"beta_", "z_", "theta_", "tau2_"})
      for (const auto& id : viable_ids) out << ',' << name << id;
    out << ",sigma2,nu,r\n";
    for (std::size_t k = 0; k < d.draws.size(); ++k) {
      const auto& s = d.draws[k];
      out << k;
      for (Eigen::Index i = 0; i < s.beta.size(); ++i) out << ',' << csv::fmt(s.beta(i));
      for (auto z : s.z) out << ',' << static_cast<int>(z);
      for (Eigen::Index i = 0; i < s.theta.size(); ++i) out << ',' << csv::fmt(s.theta(i));
      for (Eigen::Index i = 0; i < s.tau2.size(); ++i) out << ',' << csv::fmt(s.tau2(i));
      out << ',' << csv::fmt(s.sigma2) << ',' << csv::fmt(s.nu) << ',' << csv::fmt(s.r) << '\n';
    }
  });
}

inline PosteriorDraws read_draws(const std::filesystem::path& path) {
  auto t = csv::Table::read(path);
  PosteriorDraws d;
  std::map<std::string, std::string> meta;
  for (const auto& c : t.comments()) {
    auto s = c;
    while (!s.empty() && s.front() == ' ') s.erase(s.begin());
    auto eq = s.find('=');
    if (eq != std::string::npos) meta[s.substr(0, eq)] = s.substr(eq + 1);
  }
  d.window_id = meta["window_id"];
  d.source_ids = archive_detail::split(meta["source_ids"]);
  for (const auto& b : archive_detail::split(meta["viable_mask"])) d.viable_mask.push_back(b == "1");
  try {
    d.config.seed = std::stoull(meta.at("seed"));
    d.accept_nu = std::stod(meta.at("accept_nu"));
    d.accept_r = std::stod(meta.at("accept_r"));
  } catch (const std::exception&) {
    throw DataError(path, "incomplete draw metadata");
  }
  const std::size_t p = d.source_ids.size();
  if (t.columns().size() != 4 + 4 * p) throw DataError(path, "draw columns do not match source_ids");
  for (std::size_t r = 0; r < t.size(); ++r) {
    ModelState s;
    s.beta.resize(static_cast<Eigen::Index>(p));
    s.theta.resize(static_cast<Eigen::Index>(p));
    s.tau2.resize(static_cast<Eigen::Index>(p));
    s.z.resize(p);
    for (std::size_t i = 0; i < p; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      s.beta(ii) = t.num_at(r, 1 + i);
      s.z[i] = static_cast<std::uint8_t>(t.num_at(r, 1 + p + i));
      s.theta(ii) = t.num_at(r, 1 + 2 * p + i);
      s.tau2(ii) = t.num_at(r, 1 + 3 * p + i);
    }
    s.sigma2 = t.num_at(r, 1 + 4 * p);
    s.nu = t.num_at(r, 2 + 4 * p);
    s.r = t.num_at(r, 3 + 4 * p);
    d.draws.push_back(std::move(s));
  }
  return d;
}

// --- window results --------------------------------------------------------------

inline Json estimate_json(const std::optional<SourceEstimate>& e) {
  if (!e) return nullptr;
  return Json{{"rate_kghr", e->rate_kghr}, {"ci_low", e->ci_low}, {"ci_high", e->ci_high}, {"z_mean", e->z_mean}};
}

inline std::optional<SourceEstimate> estimate_from_json(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return SourceEstimate{j.at("rate_kghr").get<double>(), j.at("ci_low").get<double>(),
                        j.at("ci_high").get<double>(), j.at("z_mean").get<double>()};
}

inline Json window_json(const WindowResult& w, const std::string& draws_file = {}) {
  Json j;
  j["index"] = w.index;
  j["window_start"] = format_timestamp(w.window.start);
  j["window_end"] = format_timestamp(w.window.end);
  j["status"] = to_string(w.status);
  j["message"] = w.message;
  j["source_ids"] = w.source_ids;
  j["viable_mask"] = w.viable_mask;
  Json est = Json::array();
  for (const auto& e : w.estimates) est.push_back(estimate_json(e));
  j["estimates"] = est;
  j["site"] = estimate_json(w.site);
  j["sigma2_mean"] = w.sigma2_mean;
  j["r_mean"] = w.r_mean;
  j["nu_mean"] = w.nu_mean;
  j["accept_nu"] = w.accept_nu;
  j["accept_r"] = w.accept_r;
  j["draws_file"] = draws_file.empty() ? Json(nullptr) : Json(draws_file);
  return j;
}

inline WindowStatus status_from_string(const std::string& s) {
  if (s == "estimated") return WindowStatus::Estimated;
  if (s == "zero_shortcut") return WindowStatus::ZeroShortcut;
  if (s == "no_information") return WindowStatus::NoInformation;
  if (s == "skipped") return WindowStatus::Skipped;
  throw ParseError("unknown window status '" + s + "'");
}

/// Rebuilds a WindowResult; draws are loaded from `base_dir` when referenced.
inline WindowResult window_from_json(const Json& j, const std::filesystem::path& base_dir, bool load_draws = true) {
  WindowResult w;
  w.index = j.at("index").get<long>();
  w.window = {parse_timestamp(j.at("window_start").get<std::string>()),
              parse_timestamp(j.at("window_end").get<std::string>())};
  w.status = status_from_string(j.at("status").get<std::string>());
  w.message = j.at("message").get<std::string>();
  w.source_ids = j.at("source_ids").get<std::vector<std::string>>();
  w.viable_mask = j.at("viable_mask").get<std::vector<bool>>();
  for (const auto& e : j.at("estimates")) w.estimates.push_back(estimate_from_json(e));
  w.site = estimate_from_json(j.at("site"));
  w.sigma2_mean = j.at("sigma2_mean").get<double>();
  w.r_mean = j.at("r_mean").get<double>();
  w.nu_mean = j.at("nu_mean").get<double>();
  w.accept_nu = j.at("accept_nu").get<double>();
  w.accept_r = j.at("accept_r").get<double>();
  if (w.source_ids.size() != w.viable_mask.size() || w.source_ids.size() != w.estimates.size())
    throw ParseError("window " + std::to_string(w.index) + ": inconsistent source arrays");
  if (load_draws && j.at("draws_file").is_string())
    w.draws = std::make_shared<PosteriorDraws>(read_draws(base_dir / j.at("draws_file").get<std::string>()));
  return w;
}

struct ResultsArchive {
  double q = 1.0;
  long remainder_minutes = 0;
  std::vector<WindowResult> windows;
};

/// Writes the archive; draw files are referenced by `draw_files[k]` (same
/// order as windows, empty entry = none).
inline void write_results_archive(const std::filesystem::path& path, const ResultsArchive& a,
                                  const std::vector<std::string>& draw_files) {
  Json j;
  j["format"] = kArchiveFormat;
  j["q"] = a.q;
  j["remainder_minutes"] = a.remainder_minutes;
  Json ws = Json::array();
  for (std::size_t k = 0; k < a.windows.size(); ++k)
    ws.push_back(window_json(a.windows[k], k < draw_files.size() ? draw_files[k] : std::string()));
  j["windows"] = ws;
  archive_detail::atomic_write(path, [&](std::ofstream& out) { out << j.dump(1) << '\n'; });
}

inline ResultsArchive read_results_archive(const std::filesystem::path& path, bool load_draws = true) {
  std::ifstream in(path);
  if (!in) throw DataError(path, "cannot open");
  ResultsArchive a;
  try {
    Json j = Json::parse(in);
    if (j.at("format").get<std::string>() != kArchiveFormat) throw DataError(path, "unknown archive format");
    a.q = j.at("q").get<double>();
    a.remainder_minutes = j.at("remainder_minutes").get<long>();
    for (const auto& w : j.at("windows")) a.windows.push_back(window_from_json(w, path.parent_path(), load_draws));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path, e.what());
  } catch (const ParseError& e) {
    throw DataError(path, e.what());
  }
  return a;
}

}  // namespace mdlq
