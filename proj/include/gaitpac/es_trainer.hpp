#ifndef GAITPAC_ES_TRAINER_HPP
#define GAITPAC_ES_TRAINER_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "gaitpac/environment.hpp"
#include "gaitpac/errors.hpp"
#include "gaitpac/parallel.hpp"
#include "gaitpac/policy.hpp"
#include "gaitpac/rng.hpp"
#include "gaitpac/simulator.hpp"

namespace gaitpac {

inline constexpr double kSigmaFloor = 1e-8;

struct ESConfig {
  int env_count = 500;
  int minibatch = 20;
  int pair_count = 2;
  double lr_mean = 0.1;
  double lr_logvar = 0.01;
  int epochs = 20;
  std::uint64_t seed = 0;
  std::size_t workers = 0;

  void validate() const {
    if (env_count < 1 || minibatch < 1 || pair_count < 1 || epochs < 0) {
      throw InvalidParameter("ES counts must be at least 1 (epochs at least 0)");
    }
    if (minibatch > env_count) throw InvalidParameter("minibatch larger than env_count");
    if (!(lr_mean > 0.0) || !(lr_logvar > 0.0)) throw InvalidParameter("ES learning rates must be positive");
  }
};

struct ESTraceRecord {
  int iteration = 0;
  int epoch = 0;
  double mean_cost = 0.0;
  double grad_mean_norm = 0.0;
  double grad_sigma_norm = 0.0;
  double mean_norm = 0.0;
};

struct ESTrace {
  std::vector<ESTraceRecord> records;
  std::vector<double> epoch_mean_costs;
};

struct GradientEstimate {
  Eigen::VectorXd grad_mean;
  Eigen::VectorXd grad_sigma;
  double mean_cost = 0.0;
  std::size_t evaluations = 0;
};

/// Antithetic ES estimate of the gradients of E_w[cost] w.r.t. mean and sigma.
///
/// `cost(w, slot)` scores weight vector `w` on batch member `slot`; it must be
/// safe to call concurrently. Each slot draws `pair_count` perturbations from
/// its own stream, and each pair contributes both its +eps and -eps
/// evaluations. Reduction order is fixed, so the result does not depend on
/// the worker count.
template <class Cost>
GradientEstimate estimate_gradient(const PolicyDistribution& dist, std::size_t batch_size, int pair_count,
                                   std::uint64_t stream_key, Cost&& cost, std::size_t workers = 1) {
  if (batch_size == 0) throw InvalidParameter("estimate_gradient needs a nonempty minibatch");
  if (pair_count < 1) throw InvalidParameter("pair_count must be at least 1");
  const auto pairs = static_cast<std::size_t>(pair_count);
  const std::size_t draws = batch_size * pairs;
  const Eigen::VectorXd sigma = dist.sigma().cwiseMax(kSigmaFloor);

  std::vector<Eigen::VectorXd> eps(draws);
  std::vector<double> c_plus(draws), c_minus(draws);
  parallel_for(draws, workers, [&](std::size_t i) {
    Stream stream(derive_key(stream_key, i));
    eps[i] = standard_normal(dist.dim(), stream);
    const Eigen::VectorXd step = sigma.cwiseProduct(eps[i]);
    c_plus[i] = cost(Eigen::VectorXd(dist.mean + step), i / pairs);
    c_minus[i] = cost(Eigen::VectorXd(dist.mean - step), i / pairs);
  });

  GradientEstimate g;
  g.grad_mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dist.dim()));
  g.grad_sigma = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dist.dim()));
  double total = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    if (!std::isfinite(c_plus[i]) || !std::isfinite(c_minus[i])) throw NonFiniteValue("non-finite cost in ES batch");
    // +eps and -eps samples: C+ eps + C- (-eps), and (C+ + C-)(eps^2 - 1).
    g.grad_mean += (c_plus[i] - c_minus[i]) * eps[i];
    g.grad_sigma += (c_plus[i] + c_minus[i]) * (eps[i].array().square() - 1.0).matrix();
    total += c_plus[i] + c_minus[i];
  }
  const double n = 2.0 * static_cast<double>(draws);
  g.grad_mean = (g.grad_mean / n).cwiseQuotient(sigma);
  g.grad_sigma = (g.grad_sigma / n).cwiseQuotient(sigma);
  g.mean_cost = total / n;
  g.evaluations = 2 * draws;
  return g;
}

struct ESResult {
  PolicyDistribution distribution;
  ESTrace trace;
};

/// Epoch permutation of [0, n), Fisher-Yates on the counter stream.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t key) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Stream stream(key);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[stream.below(i)]);
  return idx;
}

/// Minimizes E_{w ~ N(mean, sigma^2)}[cost] over (mean, log sigma^2) starting from `init`.
///
/// `cost(w, dataset_index)` scores `w` on one dataset element. Each epoch
/// visits a fresh permutation of the dataset in floor(size / minibatch)
/// minibatches.
template <class Cost>
ESResult train_distribution(PolicyDistribution init, std::size_t dataset_size, const ESConfig& cfg, Cost&& cost) {
  cfg.validate();
  if (dataset_size < static_cast<std::size_t>(cfg.minibatch)) throw InvalidParameter("dataset smaller than minibatch");
  if (init.mean.size() != init.log_var.size()) throw InvalidParameter("distribution mean and log_var sizes differ");
  ESResult out{std::move(init), {}};
  PolicyDistribution& dist = out.distribution;
  const std::size_t batch = static_cast<std::size_t>(cfg.minibatch);
  const std::size_t per_epoch = dataset_size / batch;

  int iteration = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(dataset_size, derive_key(cfg.seed, static_cast<std::uint64_t>(epoch), Purpose::kShuffle));
    double epoch_cost = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b, ++iteration) {
      const std::size_t offset = b * batch;
      auto batch_cost = [&](const Eigen::VectorXd& w, std::size_t slot) { return cost(w, order[offset + slot]); };
      const GradientEstimate g = estimate_gradient(
          dist, batch, cfg.pair_count, derive_key(cfg.seed, static_cast<std::uint64_t>(iteration), Purpose::kPerturbation),
          batch_cost, cfg.workers);

      const Eigen::VectorXd sigma = dist.sigma();
      dist.mean -= cfg.lr_mean * g.grad_mean;
      // d/d(log sigma^2) = (sigma / 2) d/d(sigma)
      dist.log_var -= cfg.lr_logvar * (0.5 * sigma.cwiseProduct(g.grad_sigma));
      if (!dist.mean.allFinite() || !dist.log_var.allFinite()) throw NonFiniteValue("ES parameters became non-finite");

      out.trace.records.push_back({iteration, epoch, g.mean_cost, g.grad_mean.norm(), g.grad_sigma.norm(), dist.mean.norm()});
      epoch_cost += g.mean_cost;
    }
    out.trace.epoch_mean_costs.push_back(per_epoch ? epoch_cost / static_cast<double>(per_epoch) : 0.0);
  }
  return out;
}

/// Same, from the standard normal N(0, I).
template <class Cost>
ESResult train_distribution(std::size_t dim, std::size_t dataset_size, const ESConfig& cfg, Cost&& cost) {
  return train_distribution(PolicyDistribution::standard(dim), dataset_size, cfg, std::forward<Cost>(cost));
}

/// Stage-1 training of the inductive-bias distribution on the prior-training dataset.
inline ESResult train_prior(const ESConfig& cfg, const std::vector<Environment>& dataset, const GaitLibrary& library,
                            const SimConfig& sim, const PolicyArch& arch = {}) {
  if (dataset.size() != static_cast<std::size_t>(cfg.env_count)) {
    throw InvalidParameter("prior dataset has " + std::to_string(dataset.size()) + " environments, config expects " +
                           std::to_string(cfg.env_count));
  }
  auto cost = [&](const Eigen::VectorXd& w, std::size_t i) {
    return rollout(PolicyParams(arch, w), dataset[i], library, sim).prior_cost;
  };
  return train_distribution(param_count(arch), dataset.size(), cfg, cost);
}

}  // namespace gaitpac

#endif  // GAITPAC_ES_TRAINER_HPP
