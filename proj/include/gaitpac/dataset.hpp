#ifndef GAITPAC_DATASET_HPP
#define GAITPAC_DATASET_HPP

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gaitpac/config.hpp"
#include "gaitpac/environment.hpp"
#include "gaitpac/errors.hpp"
#include "gaitpac/parallel.hpp"

namespace gaitpac {

// Each split owns a disjoint block of environment indices.
enum class Split { kPrior, kPac, kHoldout };

inline constexpr std::uint64_t kSplitStride = std::uint64_t{1} << 40;

inline std::uint64_t split_base(Split s) { return static_cast<std::uint64_t>(s) * kSplitStride; }

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::kPrior: return "prior";
    case Split::kPac: return "pac";
    case Split::kHoldout: return "holdout";
  }
  return "?";
}

inline Split parse_split(std::string_view name) {
  if (name == "prior") return Split::kPrior;
  if (name == "pac") return Split::kPac;
  if (name == "holdout") return Split::kHoldout;
  throw ConfigError("unknown split '" + std::string(name) + "' (expected prior, pac or holdout)");
}

/// Half-open index range [begin, end).
struct IndexRange {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;

  bool empty() const { return end <= begin; }
  bool overlaps(const IndexRange& o) const { return !empty() && !o.empty() && begin < o.end && o.begin < end; }
  bool operator==(const IndexRange&) const = default;
};

inline void require_disjoint(const IndexRange& a, std::string_view a_name, const IndexRange& b, std::string_view b_name) {
  if (a.overlaps(b)) {
    throw SplitOverlap(std::string(a_name) + " range [" + std::to_string(a.begin) + ", " + std::to_string(a.end) +
                       ") overlaps " + std::string(b_name) + " range [" + std::to_string(b.begin) + ", " +
                       std::to_string(b.end) + ")");
  }
}

struct Dataset {
  Split split = Split::kPrior;
  std::uint64_t config_hash = 0;
  IndexRange range;
  bool full = false;  // waypoints stored alongside seeds
  EnvDistributionParams params;
  std::vector<Environment> envs;
};

/// Regenerates `count` environments starting at the split's base index.
inline Dataset generate_dataset(const RunConfig& cfg, Split split, std::uint64_t count, bool full = false) {
  Dataset d;
  d.split = split;
  d.config_hash = config_hash(cfg);
  d.range = {split_base(split), split_base(split) + count};
  d.full = full;
  d.params = cfg.env;
  d.envs.resize(count);
  parallel_for(count, cfg.workers, [&](std::size_t i) { d.envs[i] = sample_environment(cfg.env, d.range.begin + i); });
  return d;
}

inline void write_dataset(std::ostream& os, const Dataset& d) {
  json header = {{"kind", "gaitpac-envs"},
                 {"version", 1},
                 {"config_hash", hex64(d.config_hash)},
                 {"split", split_name(d.split)},
                 {"index_begin", d.range.begin},
                 {"count", d.range.end - d.range.begin},
                 {"mode", d.full ? "full" : "compact"},
                 {"env_params", env_params_to_json(d.params)}};
  os << header.dump() << '\n';
  for (const auto& e : d.envs) {
    json rec = {{"env_index", e.env_index},
                {"initial_heading", e.initial_heading},
                {"leader_seed", e.leader_seed},
                {"force_noise_seed", e.force_noise_seed}};
    if (d.full) {
      json pts = json::array();
      for (const auto& p : e.leader.waypoints()) pts.push_back({p.x(), p.y()});
      rec["spacing"] = e.leader.spacing();
      rec["waypoints"] = std::move(pts);
    }
    os << rec.dump() << '\n';
  }
  if (!os) throw std::runtime_error("failed writing dataset");
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_dataset(os, d);
}

/// Reads a dataset and rebuilds every environment from its index. Stored seeds,
/// headings and (in full mode) waypoints must match the regeneration exactly.
inline Dataset read_dataset(std::istream& is, std::size_t workers = 1) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("dataset is empty");
  Dataset d;
  std::vector<json> records;
  try {
    const json h = json::parse(line);
    if (h.at("kind") != "gaitpac-envs" || h.at("version") != 1) throw FormatError("not an environment dataset");
    d.config_hash = parse_hex64(h.at("config_hash").get<std::string>());
    d.split = parse_split(h.at("split").get<std::string>());
    d.range.begin = h.at("index_begin").get<std::uint64_t>();
    d.range.end = d.range.begin + h.at("count").get<std::uint64_t>();
    const auto mode = h.at("mode").get<std::string>();
    if (mode != "full" && mode != "compact") throw FormatError("unknown dataset mode " + mode);
    d.full = mode == "full";
    d.params = env_params_from_json(h.at("env_params"));
    while (std::getline(is, line)) {
      if (!line.empty()) records.push_back(json::parse(line));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed dataset: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed dataset: ") + e.what());
  }
  if (records.size() != d.range.end - d.range.begin) throw FormatError("dataset record count does not match header");

  d.envs.resize(records.size());
  parallel_for(records.size(), workers, [&](std::size_t i) {
    const json& r = records[i];
    const std::uint64_t idx = d.range.begin + i;
    try {
      if (r.at("env_index").get<std::uint64_t>() != idx) throw FormatError("dataset indices are not contiguous");
      Environment e = sample_environment(d.params, idx);
      if (r.at("leader_seed").get<std::uint64_t>() != e.leader_seed ||
          r.at("force_noise_seed").get<std::uint64_t>() != e.force_noise_seed ||
          r.at("initial_heading").get<double>() != e.initial_heading) {
        throw FormatError("environment " + std::to_string(idx) + " does not match its regeneration");
      }
      if (d.full) {
        const auto& pts = r.at("waypoints");
        const auto& wp = e.leader.waypoints();
        if (pts.size() != wp.size()) throw FormatError("waypoint count mismatch in environment " + std::to_string(idx));
        for (std::size_t k = 0; k < wp.size(); ++k) {
          if (pts[k][0].get<double>() != wp[k].x() || pts[k][1].get<double>() != wp[k].y()) {
            throw FormatError("waypoint mismatch in environment " + std::to_string(idx));
          }
        }
      }
      d.envs[i] = std::move(e);
    } catch (const json::exception& ex) {
      throw FormatError(std::string("malformed dataset record: ") + ex.what());
    }
  });
  return d;
}

inline Dataset load_dataset(const std::filesystem::path& path, std::size_t workers = 1) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_dataset(is, workers);
}

inline std::uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return fnv1a64(ss.str());
}

}  // namespace gaitpac

#endif  // GAITPAC_DATASET_HPP
