#ifndef GAITPAC_PIPELINE_HPP
#define GAITPAC_PIPELINE_HPP

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gaitpac/checkpoint.hpp"
#include "gaitpac/config.hpp"
#include "gaitpac/dataset.hpp"
#include "gaitpac/environment.hpp"
#include "gaitpac/errors.hpp"
#include "gaitpac/es_trainer.hpp"
#include "gaitpac/gait_library.hpp"
#include "gaitpac/pac_bayes.hpp"
#include "gaitpac/policy.hpp"
#include "gaitpac/simulator.hpp"

namespace gaitpac {

namespace fs = std::filesystem;

/// Fixed artifact names inside an output directory.
struct Workspace {
  fs::path dir;

  fs::path envs(Split s) const { return dir / ("envs_" + std::string(split_name(s)) + ".jsonl"); }
  fs::path prior() const { return dir / "prior.ckpt"; }
  fs::path prior_trace() const { return dir / "prior_trace.jsonl"; }
  fs::path policies() const { return dir / "policies.ckpt"; }
  fs::path cost_matrix() const { return dir / "cost_matrix.csv"; }
  fs::path bound() const { return dir / "bound.json"; }
  fs::path report() const { return dir / "report.json"; }
  fs::path timings() const { return dir / "timings.json"; }
  fs::path trace(std::uint64_t env_index) const { return dir / ("trace_" + std::to_string(env_index) + ".csv"); }
};

inline Workspace workspace_for(const RunConfig& cfg) { return {fs::path(cfg.output_dir)}; }

namespace detail {

inline void require_hash(std::uint64_t found, const RunConfig& cfg, const std::string& what) {
  if (found != config_hash(cfg)) {
    throw ConfigError(what + " was produced under config hash " + hex64(found) + ", current config hash is " +
                      hex64(config_hash(cfg)));
  }
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

inline json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline json range_json(const IndexRange& r) { return json::array({r.begin, r.end}); }

inline IndexRange range_from(const json& j) { return {j.at(0).get<std::uint64_t>(), j.at(1).get<std::uint64_t>()}; }

inline json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

// Wall-clock seconds are kept apart from report.json so that the report stays
// bit-identical across runs.
inline void record_timing(const Workspace& ws, const std::string& stage, double seconds) {
  json t = json::object();
  if (fs::exists(ws.timings())) {
    try {
      t = read_json(ws.timings());
    } catch (const FormatError&) {
      t = json::object();
    }
  }
  t[stage] = seconds;
  write_text(ws.timings(), t.dump(2) + "\n");
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::vector<Environment> prefix(const Dataset& d, std::size_t count, const std::string& what) {
  if (d.envs.size() < count) {
    throw ConfigError(what + " dataset holds " + std::to_string(d.envs.size()) + " environments, config needs " +
                      std::to_string(count));
  }
  return {d.envs.begin(), d.envs.begin() + static_cast<std::ptrdiff_t>(count)};
}

}  // namespace detail

// ---------------------------------------------------------------- gen-envs

inline fs::path cmd_gen_envs(const RunConfig& cfg, std::uint64_t count, Split split, bool full = false) {
  if (count < 1) throw ConfigError("gen-envs needs count >= 1");
  detail::Stopwatch clock;
  const Workspace ws = workspace_for(cfg);
  fs::create_directories(ws.dir);
  const Dataset d = generate_dataset(cfg, split, count, full);
  save_dataset(ws.envs(split), d);
  detail::record_timing(ws, "gen_envs_" + std::string(split_name(split)), clock.seconds());
  return ws.envs(split);
}

// ------------------------------------------------------------- train-prior

struct TrainPriorOutput {
  PolicyDistribution prior;
  ESTrace trace;
  IndexRange range;
};

inline TrainPriorOutput cmd_train_prior(const RunConfig& cfg, const fs::path& dataset_path) {
  detail::Stopwatch clock;
  const Workspace ws = workspace_for(cfg);
  fs::create_directories(ws.dir);
  const Dataset d = load_dataset(dataset_path, cfg.workers);
  detail::require_hash(d.config_hash, cfg, dataset_path.string());
  const auto envs = detail::prefix(d, static_cast<std::size_t>(cfg.es.env_count), "prior-training");
  const IndexRange used{d.range.begin, d.range.begin + envs.size()};

  const GaitLibrary lib = make_library(cfg.library);
  const PolicyArch arch;
  ESResult res = train_prior(cfg.es, envs, lib, cfg.sim, arch);

  Checkpoint ck{CheckpointKind::kDistribution, arch, config_hash(cfg), used.begin, used.end,
                {res.distribution.mean, res.distribution.log_var}};
  save_checkpoint(ws.prior(), ck);

  std::ostringstream os;
  os << json{{"kind", "gaitpac-es-trace"}, {"config_hash", hex64(config_hash(cfg))}, {"range", detail::range_json(used)}}
            .dump()
     << '\n';
  for (const auto& r : res.trace.records) {
    os << json{{"iteration", r.iteration},          {"epoch", r.epoch},
               {"mean_cost", r.mean_cost},          {"grad_mean_norm", r.grad_mean_norm},
               {"grad_sigma_norm", r.grad_sigma_norm}, {"mean_norm", r.mean_norm}}
              .dump()
       << '\n';
  }
  for (std::size_t e = 0; e < res.trace.epoch_mean_costs.size(); ++e) {
    os << json{{"epoch_summary", e}, {"mean_cost", res.trace.epoch_mean_costs[e]}}.dump() << '\n';
  }
  detail::write_text(ws.prior_trace(), os.str());
  detail::record_timing(ws, "train_prior", clock.seconds());
  return {std::move(res.distribution), std::move(res.trace), used};
}

// ----------------------------------------------------------------- certify

struct CertifyOutput {
  DiscretePolicySet policies;
  CostMatrix matrix;
  BoundResult bound;
  IndexRange prior_range;
  IndexRange pac_range;
};

inline json bound_json(const RunConfig& cfg, const CertifyOutput& c) {
  const BoundResult& b = c.bound;
  json replaced = json::array();
  for (auto id : c.matrix.skipped_env_ids) replaced.push_back(id);
  return {{"kind", "gaitpac-bound"},
          {"config_hash", hex64(config_hash(cfg))},
          {"N", b.n},
          {"m", c.policies.size()},
          {"delta", b.delta},
          {"posterior", detail::vec_json(b.posterior)},
          {"prior_probs", detail::vec_json(c.policies.probs)},
          {"column_means", detail::vec_json(c.matrix.column_means())},
          {"empirical_cost", b.empirical_cost},
          {"kl", b.kl},
          {"regularizer", b.regularizer},
          {"bound", b.bound},
          {"pac_success_pct", (1.0 - b.bound) * 100.0},
          {"iterations", b.iterations},
          {"stationarity", b.stationarity},
          {"converged", b.converged},
          {"prior_range", detail::range_json(c.prior_range)},
          {"pac_range", detail::range_json(c.pac_range)},
          {"skipped_env_ids", replaced},
          {"policies_file", "policies.ckpt"},
          {"cost_matrix_file", "cost_matrix.csv"}};
}

inline std::string cost_matrix_csv(const RunConfig& cfg, const CostMatrix& m) {
  std::ostringstream os;
  os << "# config_hash=" << hex64(config_hash(cfg)) << '\n' << "env_id";
  for (int id : m.policy_ids) os << ",policy_" << id;
  os << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    os << m.env_ids[i];
    for (std::size_t j = 0; j < m.cols(); ++j) {
      os << ',' << detail::fmt(m.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    os << '\n';
  }
  return os.str();
}

/// Stage 2 on explicit inputs: discretize the prior, score the policy set on
/// `envs`, minimize the bound. Degenerate environments are replaced by fresh
/// draws taken just past `envs` so the matrix keeps N rows.
inline CertifyOutput certify(const RunConfig& cfg, const PolicyDistribution& prior, const std::vector<Environment>& envs) {
  if (envs.empty()) throw ConfigError("certify needs at least one environment");
  const GaitLibrary lib = make_library(cfg.library);
  const PolicyArch arch;
  CertifyOutput out;
  out.policies = discretize_policy_space(prior, static_cast<std::size_t>(cfg.pac.policy_count), cfg.discretize_key(), arch);
  out.matrix = compute_cost_matrix(out.policies, envs, lib, cfg.sim, cfg.workers);

  std::uint64_t next = envs.back().env_index + 1;
  const std::uint64_t budget = 10 * envs.size();
  std::vector<std::uint64_t> all_skipped = out.matrix.skipped_env_ids;
  while (out.matrix.rows() < envs.size()) {
    if (next - envs.back().env_index > budget) {
      throw DegenerateEnvironment("too many degenerate environments; cannot assemble the bound dataset");
    }
    std::vector<Environment> extra;
    for (std::size_t k = out.matrix.rows(); k < envs.size(); ++k) extra.push_back(sample_environment(cfg.env, next++));
    const CostMatrix more = compute_cost_matrix(out.policies, extra, lib, cfg.sim, cfg.workers);
    all_skipped.insert(all_skipped.end(), more.skipped_env_ids.begin(), more.skipped_env_ids.end());
    Eigen::MatrixXd joined(out.matrix.entries.rows() + more.entries.rows(), out.matrix.entries.cols());
    joined << out.matrix.entries, more.entries;
    out.matrix.entries = std::move(joined);
    out.matrix.env_ids.insert(out.matrix.env_ids.end(), more.env_ids.begin(), more.env_ids.end());
  }
  out.matrix.skipped_env_ids = std::move(all_skipped);
  out.pac_range = {envs.front().env_index, next};

  SolverOptions opts;
  opts.tolerance = cfg.pac.tolerance;
  opts.max_iterations = cfg.pac.max_iterations;
  out.bound = optimize_posterior(out.matrix, cfg.pac.delta, opts);
  return out;
}

inline CertifyOutput cmd_certify(const RunConfig& cfg, const fs::path& prior_path, const fs::path& dataset_path) {
  detail::Stopwatch clock;
  const Workspace ws = workspace_for(cfg);
  fs::create_directories(ws.dir);
  const Checkpoint ck = load_checkpoint(prior_path);
  detail::require_hash(ck.config_hash, cfg, prior_path.string());
  const Dataset d = load_dataset(dataset_path, cfg.workers);
  detail::require_hash(d.config_hash, cfg, dataset_path.string());
  const IndexRange prior_range{ck.range_begin, ck.range_end};
  const auto envs = detail::prefix(d, static_cast<std::size_t>(cfg.pac.env_count), "bound-training");
  require_disjoint(prior_range, "prior-training", {d.range.begin, d.range.begin + envs.size()}, "bound-training");

  CertifyOutput out = certify(cfg, distribution_from(ck), envs);
  out.prior_range = prior_range;
  // Replacement draws run past the dataset; they must stay clear of the prior too.
  require_disjoint(prior_range, "prior-training", out.pac_range, "bound-training");

  Checkpoint set_ck{CheckpointKind::kPolicySet, out.policies.arch, config_hash(cfg), prior_range.begin, prior_range.end,
                    out.policies.policies};
  save_checkpoint(ws.policies(), set_ck);
  detail::write_text(ws.cost_matrix(), cost_matrix_csv(cfg, out.matrix));
  detail::write_text(ws.bound(), bound_json(cfg, out).dump(2) + "\n");
  detail::record_timing(ws, "certify", clock.seconds());
  if (!out.bound.converged) {
    throw SolverNonConvergence("bound optimizer stopped after " + std::to_string(out.bound.iterations) +
                               " iterations with stationarity " + detail::fmt(out.bound.stationarity));
  }
  return out;
}

// ---------------------------------------------------------------- evaluate

/// Typed view of report.json; `doc` is exactly what was written.
struct ExperimentReport {
  double pac_bound = 0.0;
  double pac_success_pct = 0.0;
  double true_cost = 0.0;
  double true_success_pct = 0.0;
  json doc;

  static ExperimentReport from(json doc) {
    ExperimentReport r;
    r.pac_bound = doc.at("pac_bound").get<double>();
    r.pac_success_pct = doc.at("pac_success_pct").get<double>();
    r.true_cost = doc.at("true_cost").get<double>();
    r.true_success_pct = doc.at("true_success_pct").get<double>();
    r.doc = std::move(doc);
    return r;
  }
};

struct LoadedBound {
  json doc;
  DiscretePolicySet policies;
  Eigen::VectorXd posterior;
  IndexRange prior_range;
  IndexRange pac_range;
};

inline LoadedBound load_bound(const RunConfig& cfg, const fs::path& bound_path) {
  LoadedBound b;
  b.doc = detail::read_json(bound_path);
  try {
    if (b.doc.at("kind") != "gaitpac-bound") throw FormatError(bound_path.string() + " is not a bound file");
    detail::require_hash(parse_hex64(b.doc.at("config_hash").get<std::string>()), cfg, bound_path.string());
    const auto& post = b.doc.at("posterior");
    b.posterior.resize(static_cast<Eigen::Index>(post.size()));
    for (std::size_t j = 0; j < post.size(); ++j) b.posterior[static_cast<Eigen::Index>(j)] = post[j].get<double>();
    b.prior_range = detail::range_from(b.doc.at("prior_range"));
    b.pac_range = detail::range_from(b.doc.at("pac_range"));
    const fs::path set_path = bound_path.parent_path() / b.doc.at("policies_file").get<std::string>();
    const Checkpoint ck = load_checkpoint(set_path);
    detail::require_hash(ck.config_hash, cfg, set_path.string());
    if (ck.kind != CheckpointKind::kPolicySet) throw FormatError(set_path.string() + " does not hold a policy set");
    b.policies.arch = ck.arch;
    b.policies.policies = ck.vectors;
    b.policies.probs = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(ck.vectors.size()),
                                                 1.0 / static_cast<double>(ck.vectors.size()));
  } catch (const json::exception& e) {
    throw FormatError(bound_path.string() + ": " + e.what());
  }
  if (static_cast<std::size_t>(b.posterior.size()) != b.policies.size()) {
    throw FormatError("posterior length does not match the policy set");
  }
  return b;
}

/// Held-out evaluation of a posterior; the bound document supplies the certified numbers.
inline json evaluate_report(const RunConfig& cfg, const LoadedBound& b, const std::vector<Environment>& holdout,
                            const json& hashes) {
  const GaitLibrary lib = make_library(cfg.library);
  const TrueCostEstimate est =
      estimate_true_cost(b.policies, b.posterior, holdout, lib, cfg.sim, cfg.posterior_draw_key(), cfg.workers);
  json per_env = json::array();
  for (std::size_t i = 0; i < holdout.size(); ++i) {
    per_env.push_back({{"env_index", holdout[i].env_index}, {"policy", est.sampled_policy[i]}, {"cost", est.per_env[i]}});
  }
  const double bound = b.doc.at("bound").get<double>();
  return {{"kind", "gaitpac-report"},
          {"config_hash", hex64(config_hash(cfg))},
          {"N", b.doc.at("N")},
          {"m", b.doc.at("m")},
          {"delta", b.doc.at("delta")},
          {"empirical_cost", b.doc.at("empirical_cost")},
          {"kl", b.doc.at("kl")},
          {"pac_bound", bound},
          {"pac_success_pct", (1.0 - bound) * 100.0},
          {"true_cost", est.mean},
          {"true_success_pct", (1.0 - est.mean) * 100.0},
          {"holdout_count", holdout.size()},
          {"posterior", b.doc.at("posterior")},
          {"per_policy_holdout_means", detail::vec_json(est.per_policy_means)},
          {"ranges",
           {{"prior", detail::range_json(b.prior_range)},
            {"pac", detail::range_json(b.pac_range)},
            {"holdout", json::array({holdout.front().env_index, holdout.back().env_index + 1})}}},
          {"hashes", hashes},
          {"per_env", per_env},
          {"timings_file", "timings.json"}};
}

inline ExperimentReport cmd_evaluate(const RunConfig& cfg, const fs::path& bound_path, const fs::path& holdout_path) {
  detail::Stopwatch clock;
  const Workspace ws = workspace_for(cfg);
  fs::create_directories(ws.dir);
  const LoadedBound b = load_bound(cfg, bound_path);
  const Dataset d = load_dataset(holdout_path, cfg.workers);
  detail::require_hash(d.config_hash, cfg, holdout_path.string());
  const auto envs = detail::prefix(d, static_cast<std::size_t>(cfg.pac.holdout_count), "held-out");
  const IndexRange used{d.range.begin, d.range.begin + envs.size()};
  require_disjoint(b.prior_range, "prior-training", used, "held-out");
  require_disjoint(b.pac_range, "bound-training", used, "held-out");

  const json hashes = {{"config", hex64(config_hash(cfg))},
                       {"bound_file", hex64(file_hash(bound_path))},
                       {"cost_matrix_file", hex64(file_hash(bound_path.parent_path() / "cost_matrix.csv"))},
                       {"holdout_dataset", hex64(file_hash(holdout_path))}};
  const json report = evaluate_report(cfg, b, envs, hashes);
  detail::write_text(ws.report(), report.dump(2) + "\n");
  detail::record_timing(ws, "evaluate", clock.seconds());
  return ExperimentReport::from(report);
}

// ------------------------------------------------------------ export-trace

inline std::string trace_csv(const RunConfig& cfg, const RolloutResult& r) {
  std::ostringstream os;
  os << "# config_hash=" << hex64(config_hash(cfg)) << " tube_radius=" << detail::fmt(cfg.sim.tube_radius)
     << " tube_cost=" << detail::fmt(r.tube_cost) << " prior_cost=" << detail::fmt(r.prior_cost) << '\n';
  os << "t,robot_x,robot_y,robot_heading,leader_x,leader_y,leader_heading,force_x,force_y,noisy_force_x,"
        "noisy_force_y,noisy_force_norm,distance,primitive\n";
  for (const auto& s : r.trace) {
    os << detail::fmt(s.t) << ',' << detail::fmt(s.robot.x()) << ',' << detail::fmt(s.robot.y()) << ','
       << detail::fmt(s.robot_heading) << ',' << detail::fmt(s.leader.x()) << ',' << detail::fmt(s.leader.y()) << ','
       << detail::fmt(s.leader_heading) << ',' << detail::fmt(s.force.x()) << ',' << detail::fmt(s.force.y()) << ','
       << detail::fmt(s.noisy_force.x()) << ',' << detail::fmt(s.noisy_force.y()) << ','
       << detail::fmt(s.noisy_force.norm()) << ',' << detail::fmt((s.leader - s.robot).norm()) << ',' << s.primitive
       << '\n';
  }
  return os.str();
}

inline RolloutResult export_trace(const RunConfig& cfg, const PolicyParams& policy, const Environment& env,
                                  const fs::path& out) {
  const GaitLibrary lib = make_library(cfg.library);
  RolloutResult r = rollout(policy, env, lib, cfg.sim, {.record_trace = true});
  detail::write_text(out, trace_csv(cfg, r));
  return r;
}

/// Picks the policy to trace from a bound file (posterior mode unless `policy`
/// is given), a policy-set checkpoint (`policy`, default 0), a distribution
/// checkpoint (its mean) or a single-policy checkpoint.
inline PolicyParams resolve_trace_policy(const RunConfig& cfg, const fs::path& source, std::optional<std::size_t> policy) {
  if (source.extension() == ".json") {
    const LoadedBound b = load_bound(cfg, source);
    std::size_t j = 0;
    if (policy) {
      j = *policy;
    } else {
      Eigen::Index best = 0;
      b.posterior.maxCoeff(&best);
      j = static_cast<std::size_t>(best);
    }
    if (j >= b.policies.size()) throw ConfigError("policy index out of range");
    return b.policies.params(j);
  }
  const Checkpoint ck = load_checkpoint(source);
  detail::require_hash(ck.config_hash, cfg, source.string());
  switch (ck.kind) {
    case CheckpointKind::kDistribution:
      return PolicyParams(ck.arch, distribution_from(ck).mean);
    case CheckpointKind::kPolicySet: {
      const std::size_t j = policy.value_or(0);
      if (j >= ck.vectors.size()) throw ConfigError("policy index out of range");
      return PolicyParams(ck.arch, ck.vectors[j]);
    }
    case CheckpointKind::kParams:
      if (ck.vectors.size() != 1) throw FormatError("parameter checkpoint must hold one vector");
      return PolicyParams(ck.arch, ck.vectors[0]);
  }
  throw FormatError("unknown checkpoint kind");
}

inline fs::path cmd_export_trace(const RunConfig& cfg, const fs::path& source, std::uint64_t env_index,
                                 std::optional<std::size_t> policy = std::nullopt) {
  const Workspace ws = workspace_for(cfg);
  const PolicyParams p = resolve_trace_policy(cfg, source, policy);
  export_trace(cfg, p, sample_environment(cfg.env, env_index), ws.trace(env_index));
  return ws.trace(env_index);
}

// ------------------------------------------------------------------ report

/// One results-table row from a report file.
inline std::string format_report_row(const json& report) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%8s %4s %10s %18s %12s %18s\n", "N", "m", "C_QPAC", "(1-C_QPAC)x100", "true cost",
                "true success (%)");
  std::string out = buf;
  std::snprintf(buf, sizeof buf, "%8llu %4llu %10.4f %18.2f %12.4f %18.2f\n",
                static_cast<unsigned long long>(report.at("N").get<std::uint64_t>()),
                static_cast<unsigned long long>(report.at("m").get<std::uint64_t>()), report.at("pac_bound").get<double>(),
                report.at("pac_success_pct").get<double>(), report.at("true_cost").get<double>(),
                report.at("true_success_pct").get<double>());
  return out + buf;
}

inline std::string cmd_report(const RunConfig& cfg, std::optional<fs::path> report_path = std::nullopt) {
  const fs::path path = report_path.value_or(workspace_for(cfg).report());
  const json r = detail::read_json(path);
  try {
    if (r.at("kind") != "gaitpac-report") throw FormatError(path.string() + " is not a report");
    detail::require_hash(parse_hex64(r.at("config_hash").get<std::string>()), cfg, path.string());
    return format_report_row(r);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace gaitpac

#endif  // GAITPAC_PIPELINE_HPP
