#ifndef GAITPAC_POLICY_HPP
#define GAITPAC_POLICY_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "gaitpac/errors.hpp"
#include "gaitpac/rng.hpp"

namespace gaitpac {

/// Fully connected layer sizes of the supervisor network.
struct PolicyArch {
  int input = 6;
  std::vector<int> hidden{10, 20};
  int output = 19;

  bool operator==(const PolicyArch&) const = default;
};

/// Sum over layers of (in * out + out).
inline std::size_t param_count(const PolicyArch& arch) {
  std::size_t total = 0;
  int in = arch.input;
  for (int h : arch.hidden) {
    total += static_cast<std::size_t>(in) * h + h;
    in = h;
  }
  total += static_cast<std::size_t>(in) * arch.output + arch.output;
  return total;
}

/// Flat weights laid out as [W1 row-major, b1, W2 row-major, b2, ..., Wout, bout],
/// where W_l has shape (out, in).
struct PolicyParams {
  PolicyArch arch;
  Eigen::VectorXd weights;

  PolicyParams() : weights(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(param_count(arch)))) {}
  PolicyParams(PolicyArch a, Eigen::VectorXd w) : arch(std::move(a)), weights(std::move(w)) {
    if (static_cast<std::size_t>(weights.size()) != param_count(arch)) {
      throw InvalidParameter("policy weight vector has " + std::to_string(weights.size()) + " entries, architecture needs " +
                             std::to_string(param_count(arch)));
    }
  }
};

inline double elu(double z) { return z >= 0.0 ? z : std::expm1(z); }

/// Numerically stable softmax.
inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double top = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - top).exp().matrix();
  return e / e.sum();
}

/// Logits of the network; hidden layers use ELU.
inline Eigen::VectorXd forward_logits(const PolicyArch& arch, const Eigen::Ref<const Eigen::VectorXd>& weights,
                                      const Eigen::Ref<const Eigen::VectorXd>& input) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (input.size() != arch.input) throw InvalidParameter("policy input has wrong dimension");
  if (!input.allFinite()) throw InvalidParameter("policy input must be finite");

  Eigen::VectorXd act = input;
  Eigen::Index offset = 0;
  auto layer = [&](int out) {
    const auto in = act.size();
    Eigen::Map<const RowMajor> w(weights.data() + offset, out, in);
    offset += out * in;
    Eigen::Map<const Eigen::VectorXd> b(weights.data() + offset, out);
    offset += out;
    return Eigen::VectorXd(w * act + b);
  };
  for (int h : arch.hidden) act = layer(h).unaryExpr(&elu);
  return layer(arch.output);
}

/// Score vector over gait primitives (softmax of the output layer).
inline Eigen::VectorXd forward(const PolicyParams& w, const Eigen::Ref<const Eigen::VectorXd>& input) {
  return softmax(forward_logits(w.arch, w.weights, input));
}

/// Argmax with ties resolved toward the lowest index.
inline std::size_t select_primitive(const Eigen::Ref<const Eigen::VectorXd>& scores) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
  }
  return best;
}

/// Diagonal Gaussian over weight vectors, stored as mean and log variance.
struct PolicyDistribution {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_var;

  static PolicyDistribution standard(std::size_t dim) {
    const auto n = static_cast<Eigen::Index>(dim);
    return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  }
  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
  Eigen::VectorXd sigma() const { return (0.5 * log_var.array()).exp().matrix(); }
};

struct AntitheticSample {
  Eigen::VectorXd plus;
  Eigen::VectorXd minus;
  Eigen::VectorXd eps;
};

inline Eigen::VectorXd standard_normal(std::size_t dim, Stream& stream) {
  Eigen::VectorXd eps(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = stream.normal();
  return eps;
}

/// w+- = mean +- sigma * eps with eps ~ N(0, I).
inline AntitheticSample sample_weights(const PolicyDistribution& dist, Stream& stream) {
  AntitheticSample s;
  s.eps = standard_normal(dist.dim(), stream);
  const Eigen::VectorXd step = dist.sigma().cwiseProduct(s.eps);
  s.plus = dist.mean + step;
  s.minus = dist.mean - step;
  return s;
}

/// Finite support of a posterior: m weight vectors with probabilities.
struct DiscretePolicySet {
  PolicyArch arch;
  std::vector<Eigen::VectorXd> policies;
  Eigen::VectorXd probs;

  std::size_t size() const noexcept { return policies.size(); }
  PolicyParams params(std::size_t j) const { return PolicyParams(arch, policies.at(j)); }
};

/// Zero network with a single large output bias: always selects `index`.
inline PolicyParams constant_policy(const PolicyArch& arch, std::size_t index, double logit = 10.0) {
  PolicyParams p(arch, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(param_count(arch))));
  const auto bias_start = p.weights.size() - arch.output;
  p.weights[bias_start + static_cast<Eigen::Index>(index)] = logit;
  return p;
}

}  // namespace gaitpac

#endif  // GAITPAC_POLICY_HPP
