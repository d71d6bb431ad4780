// gaitpac: experiment driver for certified gait-switching supervisors.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "gaitpac/pipeline.hpp"

namespace {

using namespace gaitpac;

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSplit = 3;
constexpr int kExitSolver = 4;

struct GlobalFlags {
  std::optional<std::string> config_path;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> output_dir;

  RunConfig load() const {
    std::optional<json> file;
    if (config_path) file = read_json_file(*config_path);
    RunConfig cfg = resolve_config(file, {preset, seed, workers});
    if (output_dir) cfg.output_dir = *output_dir;
    return cfg;
  }
};

std::uint64_t default_count(const RunConfig& cfg, Split s) {
  switch (s) {
    case Split::kPrior: return static_cast<std::uint64_t>(cfg.es.env_count);
    case Split::kPac: return static_cast<std::uint64_t>(cfg.pac.env_count);
    case Split::kHoldout: return static_cast<std::uint64_t>(cfg.pac.holdout_count);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train, certify and evaluate gait-switching supervisors with PAC-Bayes guarantees"};
  app.require_subcommand(1);

  GlobalFlags g;
  app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--preset", g.preset, "base preset (paper or desk)")->check(CLI::IsMember({"paper", "desk"}));
  app.add_option("--seed", g.seed, "master seed override");
  app.add_option("--workers", g.workers, "worker threads (0 = all cores)");
  app.add_option("--output-dir", g.output_dir, "artifact directory override");

  auto* gen = app.add_subcommand("gen-envs", "materialize an environment dataset");
  std::string split_tag;
  std::optional<std::uint64_t> count;
  bool full = false;
  gen->add_option("--split", split_tag, "prior, pac or holdout")->required()->check(CLI::IsMember({"prior", "pac", "holdout"}));
  gen->add_option("--count", count, "number of environments (default from config)");
  gen->add_flag("--full", full, "store leader waypoints as well as seeds");

  auto* train = app.add_subcommand("train-prior", "stage 1: ES training of the prior distribution");
  std::optional<std::string> train_dataset;
  train->add_option("--dataset", train_dataset, "prior-training dataset (default <out>/envs_prior.jsonl)");

  auto* certify = app.add_subcommand("certify", "stage 2: policy set, cost matrix and bound minimization");
  std::optional<std::string> prior_path, certify_dataset;
  certify->add_option("--prior", prior_path, "prior checkpoint (default <out>/prior.ckpt)");
  certify->add_option("--dataset", certify_dataset, "bound-training dataset (default <out>/envs_pac.jsonl)");

  auto* evaluate = app.add_subcommand("evaluate", "held-out estimate of the true cost");
  std::optional<std::string> bound_path, holdout_path;
  evaluate->add_option("--bound", bound_path, "bound file (default <out>/bound.json)");
  evaluate->add_option("--dataset", holdout_path, "held-out dataset (default <out>/envs_holdout.jsonl)");

  auto* trace = app.add_subcommand("export-trace", "write the substep trace of one rollout as CSV");
  std::uint64_t env_index = 0;
  std::optional<std::string> source;
  std::optional<std::size_t> policy;
  trace->add_option("--env", env_index, "global environment index")->required();
  trace->add_option("--source", source, "bound.json or a checkpoint (default <out>/bound.json)");
  trace->add_option("--policy", policy, "policy index within the set (default: posterior mode)");

  auto* report = app.add_subcommand("report", "print a results-table row");
  std::optional<std::string> report_path;
  report->add_option("--report", report_path, "report file (default <out>/report.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    const RunConfig cfg = g.load();
    const Workspace ws = workspace_for(cfg);
    auto or_default = [](const std::optional<std::string>& p, const fs::path& d) { return p ? fs::path(*p) : d; };

    if (*gen) {
      const Split s = parse_split(split_tag);
      const auto path = cmd_gen_envs(cfg, count.value_or(default_count(cfg, s)), s, full);
      std::cout << "wrote " << path.string() << '\n';
    } else if (*train) {
      const auto out = cmd_train_prior(cfg, or_default(train_dataset, ws.envs(Split::kPrior)));
      const auto& costs = out.trace.epoch_mean_costs;
      if (!costs.empty()) std::cout << "epoch-mean cost " << costs.front() << " -> " << costs.back() << '\n';
      std::cout << "wrote " << ws.prior().string() << '\n';
    } else if (*certify) {
      const auto out = cmd_certify(cfg, or_default(prior_path, ws.prior()), or_default(certify_dataset, ws.envs(Split::kPac)));
      std::cout << "C_QPAC = " << out.bound.bound << "  (1 - C_QPAC) x 100 = " << (1.0 - out.bound.bound) * 100.0
                << "  empirical = " << out.bound.empirical_cost << "  KL = " << out.bound.kl << '\n';
      std::cout << "wrote " << ws.bound().string() << '\n';
    } else if (*evaluate) {
      const auto r = cmd_evaluate(cfg, or_default(bound_path, ws.bound()), or_default(holdout_path, ws.envs(Split::kHoldout)));
      std::cout << format_report_row(r.doc);
      std::cout << "wrote " << ws.report().string() << '\n';
    } else if (*trace) {
      const auto path = cmd_export_trace(cfg, or_default(source, ws.bound()), env_index, policy);
      std::cout << "wrote " << path.string() << '\n';
    } else if (*report) {
      std::cout << cmd_report(cfg, report_path ? std::optional<fs::path>(*report_path) : std::nullopt);
    }
    return kExitOk;
  } catch (const SplitOverlap& e) {
    std::cerr << "split overlap: " << e.what() << '\n';
    return kExitSplit;
  } catch (const SolverNonConvergence& e) {
    std::cerr << "solver: " << e.what() << '\n';
    return kExitSolver;
  } catch (const ConfigError& e) {
    std::cerr << "config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidParameter& e) {
    std::cerr << "config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
}
