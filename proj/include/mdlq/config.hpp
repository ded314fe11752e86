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

 Run configuration as a single JSON document. Every key is optional and
 defaults to the module defaults; unknown keys are rejected so that a typo
 cannot silently change a run. Relative input paths resolve against the
 config file's directory.

 Top-level sections: seed, jobs, inputs, span, synthetic, forward_model,
 preprocess, pipeline, sampler, hyper, report, simulate, simstudy.
 See README.md for the key list.

*/
#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mdlq/core.hpp"
#include "mdlq/dispersion.hpp"
#include "mdlq/forward_model.hpp"
#include "mdlq/model.hpp"
#include "mdlq/pipeline.hpp"
#include "mdlq/preprocess.hpp"
#include "mdlq/simstudy.hpp"

namespace mdlq {

struct ConfigError : Error { using Error::Error; };

using Json = nlohmann::ordered_json;

struct InputPaths {
  std::filesystem::path sensors, sources, wind, concentrations, releases;
};

struct PreprocessConfig {
  bool remove_background = true;  // off for inputs that are already enhancements
  SpikeParams spikes;
};

struct ReportConfig {
  std::size_t replicates = 1000;
  bool include_zero_shortcut = true;
  std::size_t histogram_bins = 40;
  double histogram_lo = -5.0;
  double histogram_hi = 5.0;
};

struct SimulateConfig {
  double noise_sd = 1.0;  // ppm
  double noise_r = 0.0;
  bool write_observations = true;
};

struct SimstudyConfig {
  std::vector<double> ms{std::begin(kDefaultMisalignments), std::end(kDefaultMisalignments)};
  std::size_t windows = 200;
  double noise_sd = 1.0;
  double noise_r = 0.0;
  SyntheticReleaseOptions truth;
};

struct SyntheticConfig {
  bool enabled = false;
  SyntheticSiteOptions site;
  SyntheticWindOptions wind;
  SyntheticReleaseOptions releases;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  InputPaths inputs;
  std::optional<Interval> span;
  SyntheticConfig synthetic;
  PreprocessConfig preprocess;
  PipelineConfig pipeline;
  ReportConfig report;
  SimulateConfig simulate;
  SimstudyConfig simstudy;
  Json source;  // the parsed document, for hashing and echo
};

namespace config_detail {

/// Walks one JSON object, rejecting keys that were never read.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + path_ + "." + it.key() + "'");
  }

  bool has(const std::string& k) {
    seen_.insert(k);
    return j_.contains(k);
  }
  Section sub(const std::string& k) { seen_.insert(k); return Section(j_.at(k), path_ + "." + k); }

  template <class T>
  void get(const std::string& k, T& out) {
    if (!has(k)) return;
    try {
      out = j_.at(k).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + "." + k + ": wrong type");
    }
  }
  template <class T>
  void get_opt(const std::string& k, std::optional<T>& out) {
    if (!has(k) || j_.at(k).is_null()) return;
    T v{};
    get(k, v);
    out = v;
  }
  /// Number or array of numbers.
  void get_vec(const std::string& k, std::vector<double>& out) {
    if (!has(k)) return;
    const auto& v = j_.at(k);
    if (v.is_number()) out = {v.get<double>()};
    else if (v.is_array()) out = v.get<std::vector<double>>();
    else throw ConfigError(path_ + "." + k + ": expected a number or an array");
  }
  const Json& at(const std::string& k) { seen_.insert(k); return j_.at(k); }
  const std::string& path() const { return path_; }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace config_detail

inline RunConfig parse_config(const Json& doc, const std::filesystem::path& base_dir = {}) {
  using config_detail::require;
  using config_detail::Section;
  RunConfig c;
  c.source = doc;
  {
    Section root(doc, "config");
    root.get("seed", c.seed);
    root.get("jobs", c.jobs);

    if (root.has("inputs")) {
      auto s = root.sub("inputs");
      auto path = [&](const char* k, std::filesystem::path& out) {
        std::string v;
        s.get(k, v);
        if (!v.empty()) out = std::filesystem::path(v).is_absolute() ? std::filesystem::path(v) : base_dir / v;
      };
      path("sensors", c.inputs.sensors);
      path("sources", c.inputs.sources);
      path("wind", c.inputs.wind);
      path("concentrations", c.inputs.concentrations);
      path("releases", c.inputs.releases);
    }
    if (root.has("span")) {
      auto s = root.sub("span");
      std::string a, b;
      s.get("start", a);
      s.get("end", b);
      try {
        c.span = Interval{parse_timestamp(a), parse_timestamp(b)};
      } catch (const ParseError& e) {
        throw ConfigError(std::string("span: ") + e.what());
      }
      require(c.span->end > c.span->start, "span: end must follow start");
    }
    if (root.has("synthetic")) {
      auto s = root.sub("synthetic");
      c.synthetic.enabled = true;
      s.get("enabled", c.synthetic.enabled);
      s.get("sources", c.synthetic.site.sources);
      s.get("sensors", c.synthetic.site.sensors);
      s.get("source_radius", c.synthetic.site.source_radius);
      s.get("sensor_radius", c.synthetic.site.sensor_radius);
      s.get("sensor_height", c.synthetic.site.sensor_height);
      s.get("anemometers", c.synthetic.site.anemometers);
      s.get("mean_speed", c.synthetic.wind.mean_speed);
      s.get("speed_sd", c.synthetic.wind.speed_sd);
      s.get("direction_step", c.synthetic.wind.direction_step);
      s.get("on_probability", c.synthetic.releases.on_probability);
      s.get("min_rate", c.synthetic.releases.min_rate);
      s.get("max_rate", c.synthetic.releases.max_rate);
      s.get("mean_blocks", c.synthetic.releases.mean_blocks);
      require(c.synthetic.site.sources >= 1 && c.synthetic.site.sensors >= 1, "synthetic: need sources and sensors");
    }
    if (root.has("forward_model")) {
      auto s = root.sub("forward_model");
      auto& f = c.pipeline.sim;
      s.get("dt", f.dt);
      s.get("q", f.q);
      s.get("cutoff", f.cutoff);
      s.get("sigma_floor", f.sigma_floor);
      s.get("max_wind_gap_minutes", f.max_wind_gap_minutes);
      require(f.dt > 0 && std::fmod(60.0, f.dt) == 0.0, "forward_model.dt must be positive and divide 60");
      require(f.q > 0, "forward_model.q must be positive");
      require(f.cutoff >= 0, "forward_model.cutoff must be >= 0");
      require(f.sigma_floor > 0, "forward_model.sigma_floor must be positive");
      if (s.has("stability")) {
        auto st = s.sub("stability");
        auto& p = f.stability;
        st.get("utc_offset_hours", p.utc_offset_hours);
        st.get("day_start_hour", p.day_start_hour);
        st.get("day_end_hour", p.day_end_hour);
        std::string ins, cloud, fixed;
        st.get("insolation", ins);
        st.get("night_cloud", cloud);
        st.get("fixed_class", fixed);
        if (ins == "strong") p.insolation = Insolation::Strong;
        else if (ins == "moderate" || ins.empty()) p.insolation = Insolation::Moderate;
        else if (ins == "slight") p.insolation = Insolation::Slight;
        else throw ConfigError("forward_model.stability.insolation: strong|moderate|slight");
        if (cloud == "clear" || cloud.empty()) p.night_cloud = NightCloud::Clear;
        else if (cloud == "overcast") p.night_cloud = NightCloud::Overcast;
        else throw ConfigError("forward_model.stability.night_cloud: clear|overcast");
        if (!fixed.empty()) {
          require(fixed.size() == 1, "forward_model.stability.fixed_class: one of A-F");
          try {
            p.fixed_class = stability_from_char(fixed[0]);
          } catch (const std::exception&) {
            throw ConfigError("forward_model.stability.fixed_class: one of A-F");
          }
        }
      }
    }
    if (root.has("preprocess")) {
      auto s = root.sub("preprocess");
      s.get("remove_background", c.preprocess.remove_background);
      s.get("grad_threshold", c.preprocess.spikes.grad_threshold);
      s.get("merge_gap", c.preprocess.spikes.merge_gap);
      s.get("flank", c.preprocess.spikes.flank);
      s.get("max_missing_fraction", c.pipeline.max_missing_fraction);
    }
    if (root.has("pipeline")) {
      auto s = root.sub("pipeline");
      s.get("window_minutes", c.pipeline.window_minutes);
      s.get("offset_minutes", c.pipeline.offset_minutes);
      s.get("viability_threshold", c.pipeline.viability_threshold);
      s.get("nonzero_tol", c.pipeline.nonzero_tol);
      s.get("keep_draws", c.pipeline.keep_draws);
      require(c.pipeline.window_minutes >= 1, "pipeline.window_minutes must be >= 1");
      require(c.pipeline.viability_threshold >= 1, "pipeline.viability_threshold must be >= 1");
      require(c.pipeline.offset_minutes >= 0, "pipeline.offset_minutes must be >= 0");
    }
    if (root.has("sampler")) {
      auto s = root.sub("sampler");
      auto& sc = c.pipeline.sampler;
      s.get("iterations", sc.iterations);
      s.get("burn_in", sc.burn_in);
      s.get("thin", sc.thin);
      s.get("prop_sd_nu", sc.prop_sd_nu);
      s.get("prop_sd_r", sc.prop_sd_r);
      std::string ar;
      s.get("ar_structure", ar);
      if (ar == "block_per_sensor" || ar.empty()) sc.ar_structure = ArStructure::BlockPerSensor;
      else if (ar == "full_concatenated") sc.ar_structure = ArStructure::FullConcatenated;
      else throw ConfigError("sampler.ar_structure: block_per_sensor|full_concatenated");
      s.get_opt("fixed_sigma2", sc.fixed_sigma2);
      s.get_opt("fixed_nu", sc.fixed_nu);
      s.get_opt("fixed_r", sc.fixed_r);
      s.get_opt("fixed_tau2", sc.fixed_tau2);
      if (sc.fixed_r) require(*sc.fixed_r >= 0 && *sc.fixed_r < 1, "sampler.fixed_r must lie in [0, 1)");
      try {
        sc.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    if (root.has("hyper")) {
      auto s = root.sub("hyper");
      auto& h = c.pipeline.hyper;
      s.get_vec("a", h.a);
      s.get_vec("b", h.b);
      s.get_vec("c", h.c);
      s.get_vec("d", h.d);
      s.get("alpha1", h.alpha1);
      s.get("alpha2", h.alpha2);
      for (const auto* v : {&h.a, &h.b, &h.c, &h.d}) {
        require(!v->empty(), "hyper: empty vector");
        for (double x : *v) require(x > 0, "hyper: parameters must be positive");
      }
      require(h.alpha1 > 0 && h.alpha2 > 0, "hyper: alpha1/alpha2 must be positive");
    }
    if (root.has("report")) {
      auto s = root.sub("report");
      s.get("replicates", c.report.replicates);
      s.get("include_zero_shortcut", c.report.include_zero_shortcut);
      s.get("histogram_bins", c.report.histogram_bins);
      s.get("histogram_lo", c.report.histogram_lo);
      s.get("histogram_hi", c.report.histogram_hi);
    }
    if (root.has("simulate")) {
      auto s = root.sub("simulate");
      s.get("noise_sd", c.simulate.noise_sd);
      s.get("noise_r", c.simulate.noise_r);
      s.get("write_observations", c.simulate.write_observations);
      require(c.simulate.noise_sd >= 0, "simulate.noise_sd must be >= 0");
      require(c.simulate.noise_r >= 0 && c.simulate.noise_r < 1, "simulate.noise_r must lie in [0, 1)");
    }
    if (root.has("simstudy")) {
      auto s = root.sub("simstudy");
      s.get("Ms", c.simstudy.ms);
      s.get("windows", c.simstudy.windows);
      s.get("noise_sd", c.simstudy.noise_sd);
      s.get("noise_r", c.simstudy.noise_r);
      s.get("on_probability", c.simstudy.truth.on_probability);
      s.get("min_rate", c.simstudy.truth.min_rate);
      s.get("max_rate", c.simstudy.truth.max_rate);
      require(!c.simstudy.ms.empty(), "simstudy.Ms must not be empty");
      for (double m : c.simstudy.ms) require(m >= 0 && m <= 50, "simstudy.Ms must lie in [0, 50]");
      require(c.simstudy.windows >= 1, "simstudy.windows must be >= 1");
      require(c.simstudy.noise_r >= 0 && c.simstudy.noise_r < 1, "simstudy.noise_r must lie in [0, 1)");
    }
  }
  c.pipeline.jobs = c.jobs;
  c.pipeline.sampler.seed = c.seed;
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  Json doc;
  try {
    doc = Json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

/// Applies the seed and parallelism overrides (flags or environment).
inline void apply_overrides(RunConfig& c, std::optional<std::uint64_t> seed, std::optional<std::size_t> jobs) {
  if (seed) c.seed = *seed;
  if (jobs) c.jobs = std::max<std::size_t>(1, *jobs);
  c.pipeline.jobs = c.jobs;
  c.pipeline.sampler.seed = c.seed;
}

}  // namespace mdlq
