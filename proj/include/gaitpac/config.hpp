#ifndef GAITPAC_CONFIG_HPP
#define GAITPAC_CONFIG_HPP

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "gaitpac/environment.hpp"
#include "gaitpac/errors.hpp"
#include "gaitpac/es_trainer.hpp"
#include "gaitpac/gait_library.hpp"
#include "gaitpac/rng.hpp"
#include "gaitpac/simulator.hpp"

namespace gaitpac {

using json = nlohmann::json;

struct PacConfig {
  int policy_count = 20;   // m
  int env_count = 1000;    // N
  int holdout_count = 1000;
  double delta = 0.01;
  double tolerance = 1e-8;
  int max_iterations = 200000;
};

/// Everything a pipeline run depends on. Seeds of individual stages are
/// derived from master_seed.
struct RunConfig {
  std::string preset = "paper";
  std::uint64_t master_seed = 1;
  std::size_t workers = 0;
  std::string output_dir = "run";
  GaitLibraryParams library;
  EnvDistributionParams env;
  SimConfig sim;
  ESConfig es;
  PacConfig pac;

  /// Propagates master_seed/workers into the stage configs and checks consistency.
  void finalize() {
    env.master_seed = master_seed;
    es.seed = derive_key(master_seed, 0, Purpose::kEsSeed);
    es.workers = workers;
    try {
      make_library(library);
      env.validate();
      sim.validate();
      es.validate();
    } catch (const InvalidParameter& e) {
      throw ConfigError(e.what());
    }
    if (pac.policy_count < 2) throw ConfigError("pac.policy_count must be at least 2");
    if (pac.env_count < 1 || pac.holdout_count < 1) throw ConfigError("pac dataset sizes must be at least 1");
    if (!(pac.delta > 0.0 && pac.delta < 1.0)) throw ConfigError("pac.delta must lie in (0, 1)");
    if (!(pac.tolerance > 0.0) || pac.max_iterations < 1) throw ConfigError("invalid solver settings");
  }

  std::uint64_t discretize_key() const { return derive_key(master_seed, 0, Purpose::kDiscretize); }
  std::uint64_t posterior_draw_key() const { return derive_key(master_seed, 0, Purpose::kPosteriorDraw); }
};

/// Paper scale: 500 prior envs, 1000 bound envs, 20 policies, 1000 held out.
/// Desk scale: 100 / 100 / 10 / 200.
inline RunConfig preset_config(std::string_view name) {
  RunConfig cfg;
  if (name == "paper") {
    cfg.preset = "paper";
  } else if (name == "desk") {
    cfg.preset = "desk";
    cfg.es.env_count = 100;
    cfg.pac.env_count = 100;
    cfg.pac.policy_count = 10;
    cfg.pac.holdout_count = 200;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected paper or desk)");
  }
  cfg.finalize();
  return cfg;
}

namespace detail {

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }
  ObjectReader(const ObjectReader&) = delete;
  ObjectReader& operator=(const ObjectReader&) = delete;

  ~ObjectReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key " + path_ + "." + key);
    }
  }

  template <class T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for " + path_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void read_diag(ObjectReader& r, const std::string& key, Eigen::Matrix2d& m) {
  std::array<double, 2> d{m(0, 0), m(1, 1)};
  r.read(key, d);
  m = Eigen::Vector2d(d[0], d[1]).asDiagonal();
}

}  // namespace detail

inline json env_params_to_json(const EnvDistributionParams& p) {
  return {{"heading_noise_std", p.heading_noise_std}, {"force_noise_std", p.force_noise_std},
          {"segment_length", p.segment_length},       {"segment_count", p.segment_count},
          {"slope_range", p.slope_range},             {"duration", p.duration},
          {"speed", p.speed},                         {"master_seed", p.master_seed}};
}

inline EnvDistributionParams env_params_from_json(const json& j) {
  EnvDistributionParams p;
  detail::ObjectReader r(j, "env_params");
  r.read("heading_noise_std", p.heading_noise_std);
  r.read("force_noise_std", p.force_noise_std);
  r.read("segment_length", p.segment_length);
  r.read("segment_count", p.segment_count);
  r.read("slope_range", p.slope_range);
  r.read("duration", p.duration);
  r.read("speed", p.speed);
  r.read("master_seed", p.master_seed);
  return p;
}

inline json to_json(const RunConfig& c) {
  const auto& B = c.library.force_gain;
  return {
      {"preset", c.preset},
      {"master_seed", c.master_seed},
      {"workers", c.workers},
      {"output_dir", c.output_dir},
      {"library",
       {{"nominal_stride", c.library.nominal_stride},
        {"contraction_rate", c.library.contraction_rate},
        {"force_gain", {{B(0, 0), B(0, 1)}, {B(1, 0), B(1, 1)}}}}},
      {"environment",
       {{"heading_noise_std_deg", c.env.heading_noise_std / kDegree},
        {"force_noise_std", c.env.force_noise_std},
        {"segment_length", c.env.segment_length},
        {"segment_count", c.env.segment_count},
        {"slope_range_deg", c.env.slope_range / kDegree},
        {"duration", c.env.duration},
        {"speed", c.env.speed}}},
      {"simulation",
       {{"stride_duration", c.sim.stride_duration},
        {"substeps_per_stride", c.sim.substeps_per_stride},
        {"tube_radius", c.sim.tube_radius},
        {"stiffness", {c.sim.impedance.stiffness(0, 0), c.sim.impedance.stiffness(1, 1)}},
        {"damping", {c.sim.impedance.damping(0, 0), c.sim.impedance.damping(1, 1)}}}},
      {"es",
       {{"env_count", c.es.env_count},
        {"minibatch", c.es.minibatch},
        {"pair_count", c.es.pair_count},
        {"lr_mean", c.es.lr_mean},
        {"lr_logvar", c.es.lr_logvar},
        {"epochs", c.es.epochs}}},
      {"pac",
       {{"policy_count", c.pac.policy_count},
        {"env_count", c.pac.env_count},
        {"holdout_count", c.pac.holdout_count},
        {"delta", c.pac.delta},
        {"tolerance", c.pac.tolerance},
        {"max_iterations", c.pac.max_iterations}}},
  };
}

/// Applies the keys present in `j` on top of `base`. Unknown keys are errors.
inline RunConfig apply_json(RunConfig c, const json& j) {
  detail::ObjectReader top(j, "config");
  top.read("preset", c.preset);
  top.read("master_seed", c.master_seed);
  top.read("workers", c.workers);
  top.read("output_dir", c.output_dir);
  if (const json* lib = top.child("library")) {
    detail::ObjectReader r(*lib, "library");
    r.read("nominal_stride", c.library.nominal_stride);
    r.read("contraction_rate", c.library.contraction_rate);
    std::array<std::array<double, 2>, 2> b{{{c.library.force_gain(0, 0), c.library.force_gain(0, 1)},
                                            {c.library.force_gain(1, 0), c.library.force_gain(1, 1)}}};
    r.read("force_gain", b);
    c.library.force_gain << b[0][0], b[0][1], b[1][0], b[1][1];
  }
  if (const json* env = top.child("environment")) {
    detail::ObjectReader r(*env, "environment");
    double heading_deg = c.env.heading_noise_std / kDegree;
    double slope_deg = c.env.slope_range / kDegree;
    r.read("heading_noise_std_deg", heading_deg);
    r.read("slope_range_deg", slope_deg);
    c.env.heading_noise_std = heading_deg * kDegree;
    c.env.slope_range = slope_deg * kDegree;
    r.read("force_noise_std", c.env.force_noise_std);
    r.read("segment_length", c.env.segment_length);
    r.read("segment_count", c.env.segment_count);
    r.read("duration", c.env.duration);
    r.read("speed", c.env.speed);
  }
  if (const json* sim = top.child("simulation")) {
    detail::ObjectReader r(*sim, "simulation");
    r.read("stride_duration", c.sim.stride_duration);
    r.read("substeps_per_stride", c.sim.substeps_per_stride);
    r.read("tube_radius", c.sim.tube_radius);
    detail::read_diag(r, "stiffness", c.sim.impedance.stiffness);
    detail::read_diag(r, "damping", c.sim.impedance.damping);
  }
  if (const json* es = top.child("es")) {
    detail::ObjectReader r(*es, "es");
    r.read("env_count", c.es.env_count);
    r.read("minibatch", c.es.minibatch);
    r.read("pair_count", c.es.pair_count);
    r.read("lr_mean", c.es.lr_mean);
    r.read("lr_logvar", c.es.lr_logvar);
    r.read("epochs", c.es.epochs);
  }
  if (const json* pac = top.child("pac")) {
    detail::ObjectReader r(*pac, "pac");
    r.read("policy_count", c.pac.policy_count);
    r.read("env_count", c.pac.env_count);
    r.read("holdout_count", c.pac.holdout_count);
    r.read("delta", c.pac.delta);
    r.read("tolerance", c.pac.tolerance);
    r.read("max_iterations", c.pac.max_iterations);
  }
  return c;
}

struct ConfigOverrides {
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

/// Resolution order: preset (flag, else file's "preset", else paper), then
/// file values, then command-line overrides.
inline RunConfig resolve_config(const std::optional<json>& file, const ConfigOverrides& ov = {}) {
  std::string preset = "paper";
  if (file && file->contains("preset")) {
    if (!file->at("preset").is_string()) throw ConfigError("config.preset must be a string");
    preset = file->at("preset").get<std::string>();
  }
  if (ov.preset) preset = *ov.preset;
  RunConfig c = preset_config(preset);
  if (file) c = apply_json(c, *file);
  c.preset = preset;
  if (ov.seed) c.master_seed = *ov.seed;
  if (ov.workers) c.workers = *ov.workers;
  c.finalize();
  return c;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the canonical serialization. Excludes fields that do not change
/// any artifact's content: preset label, output_dir, workers, and the two
/// dataset sizes (recorded in the artifacts themselves).
inline std::uint64_t config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("preset");
  j.erase("output_dir");
  j.erase("workers");
  j["pac"].erase("env_count");
  j["pac"].erase("holdout_count");
  return fnv1a64(j.dump());
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

inline std::uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 16) throw FormatError("bad hash string '" + s + "'");
  std::uint64_t v = 0;
  for (char ch : s) {
    v <<= 4;
    if (ch >= '0' && ch <= '9') v |= static_cast<std::uint64_t>(ch - '0');
    else if (ch >= 'a' && ch <= 'f') v |= static_cast<std::uint64_t>(ch - 'a' + 10);
    else throw FormatError("bad hash string '" + s + "'");
  }
  return v;
}

}  // namespace gaitpac

#endif  // GAITPAC_CONFIG_HPP
