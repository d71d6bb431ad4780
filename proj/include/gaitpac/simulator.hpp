#ifndef GAITPAC_SIMULATOR_HPP
#define GAITPAC_SIMULATOR_HPP

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "gaitpac/environment.hpp"
#include "gaitpac/errors.hpp"
#include "gaitpac/gait_library.hpp"
#include "gaitpac/policy.hpp"
#include "gaitpac/rng.hpp"

namespace gaitpac {

struct SimConfig {
  double stride_duration = 0.4;  // s
  int substeps_per_stride = 10;
  double tube_radius = 0.5;  // m
  ImpedanceParams impedance;

  void validate() const {
    if (!(stride_duration > 0.0)) throw InvalidParameter("stride_duration must be positive");
    if (substeps_per_stride < 2) throw InvalidParameter("substeps_per_stride must be at least 2");
    if (!(tube_radius > 0.0)) throw InvalidParameter("tube_radius must be positive");
    impedance.validate();
  }
};

/// What the supervisor sees at the start of a stride.
struct ObservationVector {
  double heading = 0.0;       // rad, wrapped
  double stride_len = 0.0;    // m
  double heading_rate = 0.0;  // rad/s
  double stride_rate = 0.0;   // m/s
  double force_int_x = 0.0;   // N*s, body frame
  double force_int_y = 0.0;   // N*s, body frame

  std::array<double, 6> values() const {
    return {heading, stride_len, heading_rate, stride_rate, force_int_x, force_int_y};
  }
};

/// Fixed divisors applied to observations before the network.
struct FeatureScales {
  std::array<double, 6> divisors{};

  static FeatureScales defaults(double nominal_stride, double stride_duration) {
    constexpr double quarter_pi = std::numbers::pi / 4.0;
    return {{quarter_pi, nominal_stride, quarter_pi / stride_duration, nominal_stride / stride_duration, 10.0, 10.0}};
  }

  Eigen::VectorXd apply(const ObservationVector& y) const {
    const auto v = y.values();
    Eigen::VectorXd out(6);
    for (std::size_t i = 0; i < 6; ++i) out[static_cast<Eigen::Index>(i)] = v[i] / divisors[i];
    return out;
  }
};

/// Summary of one completed stride; input to extract_features.
struct StrideRecord {
  double heading_start = 0.0;  // raw accumulated heading
  double heading_end = 0.0;
  double stride_len = 0.0;
  double prev_stride_len = 0.0;
  Eigen::Vector2d impulse = Eigen::Vector2d::Zero();  // body frame at stride start
};

inline ObservationVector extract_features(const StrideRecord& rec, double stride_duration) {
  ObservationVector y;
  y.heading = wrap_angle(rec.heading_end);
  y.stride_len = rec.stride_len;
  y.heading_rate = (rec.heading_end - rec.heading_start) / stride_duration;
  y.stride_rate = (rec.stride_len - rec.prev_stride_len) / stride_duration;
  y.force_int_x = rec.impulse.x();
  y.force_int_y = rec.impulse.y();
  return y;
}

/// One time sample of a rollout.
struct TraceSample {
  double t = 0.0;
  Eigen::Vector2d robot = Eigen::Vector2d::Zero();
  double robot_heading = 0.0;
  Eigen::Vector2d leader = Eigen::Vector2d::Zero();
  double leader_heading = 0.0;
  Eigen::Vector2d force = Eigen::Vector2d::Zero();
  Eigen::Vector2d noisy_force = Eigen::Vector2d::Zero();
  int primitive = 0;
};

struct RolloutResult {
  int stride_count = 0;
  double prior_cost = 0.0;
  double tube_cost = 0.0;
  std::vector<int> switching;      // primitive per stride
  std::vector<TraceSample> trace;  // stride_count * substeps records when requested
};

inline int stride_count(double duration, double stride_duration) {
  return static_cast<int>(std::floor(duration / stride_duration + 1e-9));
}

/// (1/L) * integral of (e_p^2 + e_phi^2) dt by the trapezoidal rule on the sample times.
inline double prior_cost(std::span<const TraceSample> trace, double leader_distance) {
  if (trace.empty()) throw InvalidParameter("prior_cost needs a nonempty trace");
  if (!(leader_distance > 0.0)) throw DegenerateEnvironment("leader travels zero distance");
  auto integrand = [](const TraceSample& s) {
    const double ep2 = (s.leader - s.robot).squaredNorm();
    const double dc = std::cos(s.leader_heading) - std::cos(s.robot_heading);
    const double ds = std::sin(s.leader_heading) - std::sin(s.robot_heading);
    return ep2 + dc * dc + ds * ds;
  };
  double integral = 0.0;
  double prev = integrand(trace[0]);
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const double cur = integrand(trace[i]);
    integral += 0.5 * (prev + cur) * (trace[i].t - trace[i - 1].t);
    prev = cur;
  }
  return integral / leader_distance;
}

inline double prior_cost(std::span<const TraceSample> trace, const LeaderTrajectory& leader) {
  return prior_cost(trace, leader.length());
}

/// Fraction of samples at distance >= r from the leader.
inline double tube_cost(std::span<const TraceSample> trace, double radius) {
  if (!(radius > 0.0)) throw InvalidParameter("tube radius must be positive");
  if (trace.empty()) return 0.0;
  std::size_t outside = 0;
  for (const auto& s : trace) {
    if ((s.leader - s.robot).norm() >= radius) ++outside;
  }
  return static_cast<double>(outside) / static_cast<double>(trace.size());
}

struct RolloutOptions {
  bool record_trace = false;
};

/// Simulates the switched closed loop for one policy in one environment.
///
/// Per stride k: observe stride k-1, select a primitive, apply the stride map
/// (the impulse measured over stride k-1 perturbs the stride being executed),
/// then sample the stride on a uniform substep grid, moving the robot along the
/// mid-heading arc while accumulating the noisy body-frame impulse for stride k.
///
/// `supervisor` maps an ObservationVector to a primitive index.
template <class Supervisor>
RolloutResult simulate(Supervisor&& supervisor, const Environment& env, const GaitLibrary& library,
                       const SimConfig& cfg, RolloutOptions options = {}) {
  cfg.validate();
  const LeaderTrajectory& leader = env.leader;
  const double L = leader.length();
  if (!(L > 0.0)) throw DegenerateEnvironment("leader travels zero distance");
  const int strides = stride_count(leader.duration(), cfg.stride_duration);
  if (strides < 1) throw DegenerateEnvironment("horizon shorter than one stride");

  const int n = cfg.substeps_per_stride;
  const double Ts = cfg.stride_duration;
  const double dt = Ts / n;
  Stream noise(env.force_noise_seed);

  RolloutResult out;
  out.stride_count = strides;
  out.switching.reserve(static_cast<std::size_t>(strides));
  std::vector<TraceSample> samples;
  samples.reserve(static_cast<std::size_t>(strides) * n + 1);

  RobotPose pose{Eigen::Vector2d::Zero(), env.initial_heading};
  StrideState state = library[library.straight_index()].fixed_point();
  StrideRecord prev{pose.heading, pose.heading, state.stride, state.stride, Eigen::Vector2d::Zero()};

  for (int k = 0; k < strides; ++k) {
    const ObservationVector y = extract_features(prev, Ts);
    const std::size_t r = supervisor(y);
    if (r >= library.size()) throw InvalidParameter("supervisor selected a primitive outside the library");
    out.switching.push_back(static_cast<int>(r));
    const double prev_stride = state.stride;
    state = stride_map(library[r], state, prev.impulse);

    const double c = std::cos(pose.heading);
    const double s_ = std::sin(pose.heading);
    Eigen::Vector2d impulse = Eigen::Vector2d::Zero();
    for (int j = 0; j <= n; ++j) {
      const double s = static_cast<double>(j) / n;
      const double t = static_cast<double>(k * n + j) * dt;
      const double alpha = pose.heading + 0.5 * s * state.turn;
      const Eigen::Vector2d dir(std::cos(alpha), std::sin(alpha));
      const Eigen::Vector2d normal(-dir.y(), dir.x());

      TraceSample smp;
      smp.t = t;
      smp.robot = pose.position + s * state.stride * dir;
      smp.robot_heading = pose.heading + s * state.turn;
      const Eigen::Vector2d v_robot = (state.stride * dir + s * state.stride * 0.5 * state.turn * normal) / Ts;
      const LeaderSample lead = leader_pose(leader, std::min(t, leader.duration()));
      smp.leader = lead.position;
      smp.leader_heading = lead.heading;
      smp.force = impedance_force(lead.position, lead.velocity, smp.robot, v_robot, cfg.impedance);
      smp.noisy_force = noisy_force(smp.force, noise, env.force_noise_std);
      smp.primitive = static_cast<int>(r);

      const Eigen::Vector2d body(c * smp.noisy_force.x() + s_ * smp.noisy_force.y(),
                                 -s_ * smp.noisy_force.x() + c * smp.noisy_force.y());
      impulse += ((j == 0 || j == n) ? 0.5 : 1.0) * dt * body;
      if (j < n || k == strides - 1) samples.push_back(smp);
    }

    prev = StrideRecord{pose.heading, pose.heading + state.turn, state.stride, prev_stride, impulse};
    pose = advance_pose(pose, state);
  }

  out.prior_cost = prior_cost(samples, L);
  out.tube_cost = tube_cost(std::span<const TraceSample>(samples).first(samples.size() - 1), cfg.tube_radius);
  if (options.record_trace) {
    samples.pop_back();
    out.trace = std::move(samples);
  }
  return out;
}

/// Rollout under the network supervisor.
inline RolloutResult rollout(const PolicyParams& policy, const Environment& env, const GaitLibrary& library,
                             const SimConfig& cfg, RolloutOptions options = {}) {
  if (static_cast<std::size_t>(policy.arch.output) != library.size()) {
    throw InvalidParameter("policy output dimension does not match the gait library size");
  }
  const FeatureScales scales = FeatureScales::defaults(library.nominal_stride(), cfg.stride_duration);
  auto choose = [&](const ObservationVector& y) { return select_primitive(forward(policy, scales.apply(y))); };
  return simulate(choose, env, library, cfg, options);
}

}  // namespace gaitpac

#endif  // GAITPAC_SIMULATOR_HPP
