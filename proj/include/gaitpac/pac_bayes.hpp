#ifndef GAITPAC_PAC_BAYES_HPP
#define GAITPAC_PAC_BAYES_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "gaitpac/environment.hpp"
#include "gaitpac/errors.hpp"
#include "gaitpac/parallel.hpp"
#include "gaitpac/policy.hpp"
#include "gaitpac/rng.hpp"
#include "gaitpac/simulator.hpp"

namespace gaitpac {

/// Tube costs C(pi_j; E_i), one row per environment and one column per policy.
struct CostMatrix {
  Eigen::MatrixXd entries;
  std::vector<std::uint64_t> env_ids;
  std::vector<int> policy_ids;
  std::vector<std::uint64_t> skipped_env_ids;  // rejected by the zero-travel guard

  std::size_t rows() const { return static_cast<std::size_t>(entries.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(entries.cols()); }
  Eigen::VectorXd column_means() const { return entries.colwise().mean().transpose(); }
};

/// Solution of the bound minimization over the simplex.
struct BoundResult {
  Eigen::VectorXd posterior;
  double empirical_cost = 0.0;
  double kl = 0.0;
  double regularizer = 0.0;
  double bound = 0.0;
  std::size_t n = 0;
  double delta = 0.0;
  int iterations = 0;
  double stationarity = 0.0;
  bool converged = false;
  std::vector<double> objective_history;  // value after each accepted step, starting at the uniform prior
};

/// m iid draws from the prior distribution, uniform weights.
inline DiscretePolicySet discretize_policy_space(const PolicyDistribution& prior, std::size_t m,
                                                 std::uint64_t stream_key, const PolicyArch& arch = {}) {
  if (m < 2) throw InvalidParameter("policy set needs at least two members");
  if (prior.dim() != param_count(arch)) throw InvalidParameter("prior dimension does not match the policy architecture");
  DiscretePolicySet set;
  set.arch = arch;
  const Eigen::VectorXd sigma = prior.sigma();
  for (std::size_t j = 0; j < m; ++j) {
    Stream stream(derive_key(stream_key, j, Purpose::kDiscretize));
    set.policies.push_back(prior.mean + sigma.cwiseProduct(standard_normal(prior.dim(), stream)));
  }
  set.probs = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), 1.0 / static_cast<double>(m));
  return set;
}

/// Evaluates every (environment, policy) pair. Environments whose rollout is
/// degenerate are listed in `skipped_env_ids` and left out of the matrix.
inline CostMatrix compute_cost_matrix(const DiscretePolicySet& set, const std::vector<Environment>& envs,
                                      const GaitLibrary& library, const SimConfig& cfg, std::size_t workers = 1) {
  const std::size_t m = set.size();
  const std::size_t n = envs.size();
  std::vector<double> values(n * m, 0.0);
  std::vector<char> degenerate(n, 0);
  parallel_for(n * m, workers, [&](std::size_t idx) {
    const std::size_t i = idx / m;
    const std::size_t j = idx % m;
    try {
      values[idx] = rollout(set.params(j), envs[i], library, cfg).tube_cost;
    } catch (const DegenerateEnvironment&) {
      degenerate[i] = 1;
    }
  });

  CostMatrix out;
  for (std::size_t j = 0; j < m; ++j) out.policy_ids.push_back(static_cast<int>(j));
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (degenerate[i]) {
      out.skipped_env_ids.push_back(envs[i].env_index);
    } else {
      kept.push_back(i);
      out.env_ids.push_back(envs[i].env_index);
    }
  }
  out.entries.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(m));
  for (std::size_t r = 0; r < kept.size(); ++r) {
    for (std::size_t j = 0; j < m; ++j) {
      out.entries(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = values[kept[r] * m + j];
    }
  }
  return out;
}

/// KL(p || q) with 0 log 0 = 0; +infinity when p puts mass where q has none.
inline double kl_discrete(const Eigen::Ref<const Eigen::VectorXd>& p, const Eigen::Ref<const Eigen::VectorXd>& q) {
  if (p.size() != q.size()) throw InvalidParameter("kl_discrete: size mismatch");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, 0.0);
}

/// (KL + log(2 sqrt(N) / delta)) / (2N).
inline double regularizer(double kl, std::size_t n, double delta) {
  if (n < 1) throw InvalidParameter("regularizer needs N >= 1");
  if (!(kl >= 0.0)) throw InvalidParameter("KL must be nonnegative");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidParameter("delta must lie in (0, 1)");
  const double nn = static_cast<double>(n);
  return (kl + std::log(2.0 * std::sqrt(nn) / delta)) / (2.0 * nn);
}

/// (sqrt(C + R) + sqrt(R))^2.
inline double quad_bound(double empirical, double reg) {
  const double root = std::sqrt(empirical + reg) + std::sqrt(reg);
  return root * root;
}

struct SolverOptions {
  double tolerance = 1e-8;
  int max_iterations = 200000;
  double initial_step = 1.0;
};

namespace detail {

struct BoundObjective {
  const Eigen::VectorXd& cbar;
  std::size_t n;
  double delta;

  struct Eval {
    double value;
    double empirical;
    double kl;
    double reg;
    Eigen::VectorXd grad;
  };

  // p and log p are passed separately so entries below the double range keep a finite log.
  Eval operator()(const Eigen::VectorXd& p, const Eigen::VectorXd& log_p) const {
    const auto m = static_cast<double>(p.size());
    double kl = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) kl += p[i] * (log_p[i] + std::log(m));
    kl = std::max(kl, 0.0);
    const double emp = cbar.dot(p);
    const double reg = regularizer(kl, n, delta);
    const double sa = std::sqrt(emp + reg);
    const double sb = std::sqrt(reg);
    Eval e{(sa + sb) * (sa + sb), emp, kl, reg, {}};
    // grad R = (log(m p) + 1) / (2N);  grad f = (sa + sb) (grad(C + R) / sa + grad R / sb)
    const Eigen::VectorXd grad_r = ((log_p.array() + std::log(m) + 1.0) / (2.0 * static_cast<double>(n))).matrix();
    e.grad = (sa + sb) * ((cbar + grad_r) / sa + grad_r / sb);
    return e;
  }
};

inline double log_sum_exp(const Eigen::VectorXd& x) {
  const double top = x.maxCoeff();
  return top + std::log((x.array() - top).exp().sum());
}

}  // namespace detail

/// Minimizes the quadratic PAC-Bayes bound over the simplex for column-mean
/// costs `cbar`, dataset size `n` and confidence `delta`, with a uniform prior.
///
/// Exponentiated-gradient (mirror) descent in log space with backtracking on
/// the Bregman sufficient-decrease condition. Stops when the p-weighted
/// deviation of the gradient from its p-average falls below the tolerance.
inline BoundResult optimize_posterior(const Eigen::VectorXd& cbar, std::size_t n, double delta,
                                      const SolverOptions& opts = {}) {
  const Eigen::Index m = cbar.size();
  if (m < 1) throw InvalidParameter("optimize_posterior needs at least one policy");
  if (cbar.minCoeff() < 0.0 || cbar.maxCoeff() > 1.0) throw InvalidParameter("costs must lie in [0, 1]");
  regularizer(0.0, n, delta);  // validates n, delta

  const detail::BoundObjective objective{cbar, n, delta};
  Eigen::VectorXd log_p = Eigen::VectorXd::Constant(m, -std::log(static_cast<double>(m)));
  Eigen::VectorXd p = log_p.array().exp().matrix();
  auto cur = objective(p, log_p);
  double step = opts.initial_step;

  auto stationarity = [&](const Eigen::VectorXd& probs, const Eigen::VectorXd& g) {
    const double avg = probs.dot(g);
    return probs.dot((g.array() - avg).abs().matrix());
  };

  BoundResult res;
  res.objective_history.push_back(cur.value);
  double gap = stationarity(p, cur.grad);
  int it = 0;
  while (gap > opts.tolerance && it < opts.max_iterations) {
    bool accepted = false;
    while (step > 1e-300) {
      Eigen::VectorXd trial_log = log_p - step * cur.grad;
      trial_log.array() -= detail::log_sum_exp(trial_log);
      const Eigen::VectorXd trial_p = trial_log.array().exp().matrix();
      auto next = objective(trial_p, trial_log);
      const double bregman = trial_p.dot(trial_log - log_p);
      if (next.value <= cur.value + cur.grad.dot(trial_p - p) + bregman / step) {
        log_p = trial_log;
        p = trial_p;
        cur = std::move(next);
        res.objective_history.push_back(cur.value);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++it;
    if (!accepted) break;
    step *= 2.0;
    gap = stationarity(p, cur.grad);
  }

  p /= p.sum();
  res.posterior = p;
  res.empirical_cost = cbar.dot(p);
  res.kl = kl_discrete(p, Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m)));
  res.regularizer = regularizer(res.kl, n, delta);
  res.bound = quad_bound(res.empirical_cost, res.regularizer);
  res.n = n;
  res.delta = delta;
  res.iterations = it;
  res.stationarity = gap;
  res.converged = gap <= opts.tolerance;
  return res;
}

inline BoundResult optimize_posterior(const CostMatrix& matrix, double delta, const SolverOptions& opts = {}) {
  if (matrix.rows() == 0) throw InvalidParameter("cost matrix has no environments");
  if (matrix.entries.minCoeff() < 0.0 || matrix.entries.maxCoeff() > 1.0) {
    throw InvalidParameter("cost matrix entries must lie in [0, 1]");
  }
  return optimize_posterior(matrix.column_means(), matrix.rows(), delta, opts);
}

/// Index drawn from `probs` by inverse CDF with uniform u in (0, 1).
inline std::size_t sample_index(const Eigen::VectorXd& probs, double u) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < probs.size(); ++j) {
    acc += probs[j];
    if (u < acc) return static_cast<std::size_t>(j);
  }
  for (Eigen::Index j = probs.size() - 1; j > 0; --j) {
    if (probs[j] > 0.0) return static_cast<std::size_t>(j);
  }
  return 0;
}

struct TrueCostEstimate {
  double mean = 0.0;
  std::vector<double> per_env;              // cost under the sampled policy
  std::vector<std::size_t> sampled_policy;  // index drawn per environment
  Eigen::VectorXd per_policy_means;         // diagnostics: every policy on every environment
};

/// Held-out estimate: each environment draws one policy from the posterior.
inline TrueCostEstimate estimate_true_cost(const DiscretePolicySet& set, const Eigen::VectorXd& posterior,
                                           const std::vector<Environment>& held_out, const GaitLibrary& library,
                                           const SimConfig& cfg, std::uint64_t stream_key, std::size_t workers = 1) {
  if (static_cast<std::size_t>(posterior.size()) != set.size()) throw InvalidParameter("posterior size mismatch");
  if (held_out.empty()) throw InvalidParameter("held-out set is empty");
  const std::size_t m = set.size();
  const std::size_t n = held_out.size();
  std::vector<double> all(n * m);
  parallel_for(n * m, workers, [&](std::size_t idx) {
    all[idx] = rollout(set.params(idx % m), held_out[idx / m], library, cfg).tube_cost;
  });

  TrueCostEstimate est;
  est.per_policy_means = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Stream stream(derive_key(stream_key, held_out[i].env_index, Purpose::kPosteriorDraw));
    const std::size_t j = sample_index(posterior, stream.uniform());
    est.sampled_policy.push_back(j);
    est.per_env.push_back(all[i * m + j]);
    total += all[i * m + j];
    for (std::size_t k = 0; k < m; ++k) est.per_policy_means[static_cast<Eigen::Index>(k)] += all[i * m + k];
  }
  est.per_policy_means /= static_cast<double>(n);
  est.mean = total / static_cast<double>(n);
  return est;
}

}  // namespace gaitpac

#endif  // GAITPAC_PAC_BAYES_HPP
