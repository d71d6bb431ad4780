#ifndef GAITPAC_ENVIRONMENT_HPP
#define GAITPAC_ENVIRONMENT_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gaitpac/errors.hpp"
#include "gaitpac/gait_library.hpp"
#include "gaitpac/rng.hpp"

namespace gaitpac {

inline constexpr double kCornerWindow = 1.0;         // m, centered on each corner
inline constexpr double kResampleResolution = 0.01;  // m
inline constexpr int kBezierSamples = 256;

/// Dense, uniformly spaced polyline traversed at constant speed over [0, duration].
class LeaderTrajectory {
 public:
  LeaderTrajectory() = default;
  LeaderTrajectory(std::vector<Eigen::Vector2d> waypoints, double spacing, double duration, double speed)
      : waypoints_(std::move(waypoints)), spacing_(spacing), duration_(duration), speed_(speed) {}

  const std::vector<Eigen::Vector2d>& waypoints() const noexcept { return waypoints_; }
  double spacing() const noexcept { return spacing_; }
  double duration() const noexcept { return duration_; }
  double speed() const noexcept { return speed_; }
  /// Distance traveled by the leader over [0, duration].
  double length() const noexcept {
    return waypoints_.size() < 2 ? 0.0 : spacing_ * static_cast<double>(waypoints_.size() - 1);
  }

 private:
  std::vector<Eigen::Vector2d> waypoints_;
  double spacing_ = 0.0;
  double duration_ = 0.0;
  double speed_ = 0.0;
};

/// Diagonal stiffness K_L (N/m) and damping N_L (N*s/m) of the leader coupling.
struct ImpedanceParams {
  Eigen::Matrix2d stiffness = Eigen::Matrix2d::Identity() * 30.0;
  Eigen::Matrix2d damping = Eigen::Matrix2d::Identity() * 15.0;

  void validate() const {
    if (stiffness(0, 1) != 0.0 || stiffness(1, 0) != 0.0 || damping(0, 1) != 0.0 || damping(1, 0) != 0.0) {
      throw InvalidParameter("impedance matrices must be diagonal");
    }
    if (stiffness.diagonal().minCoeff() < 0.0 || damping.diagonal().minCoeff() < 0.0) {
      throw InvalidParameter("impedance diagonal entries must be nonnegative");
    }
  }
};

/// Parameters of the environment distribution.
struct EnvDistributionParams {
  double heading_noise_std = 5.0 * kDegree;  // rad
  double force_noise_std = 1.0;              // N
  double segment_length = 5.0;               // m
  int segment_count = 8;
  double slope_range = 15.0 * kDegree;  // max per-segment turn, rad
  double duration = 30.0;               // s
  double speed = 1.25;                  // m/s
  std::uint64_t master_seed = 1;

  void validate() const {
    if (!(heading_noise_std >= 0.0) || !(force_noise_std >= 0.0) || !(segment_length >= 0.0) ||
        segment_count < 0 || !(duration >= 0.0) || !(speed >= 0.0)) {
      throw InvalidParameter("environment parameters must be nonnegative");
    }
    if (!(slope_range >= 0.0 && slope_range <= std::numbers::pi / 2)) {
      throw InvalidParameter("slope_range must lie in [0, pi/2]");
    }
  }
};

/// One sampled environment: initial heading, force-noise stream and leader path.
struct Environment {
  std::uint64_t env_index = 0;
  double initial_heading = 0.0;
  double force_noise_std = 0.0;
  std::uint64_t leader_seed = 0;
  std::uint64_t force_noise_seed = 0;
  LeaderTrajectory leader;
};

struct LeaderSample {
  Eigen::Vector2d position;
  Eigen::Vector2d velocity;
  double heading;
};

namespace detail {

inline Eigen::Vector2d bezier(const Eigen::Vector2d& a, const Eigen::Vector2d& c, const Eigen::Vector2d& b,
                              double t) {
  const double u = 1.0 - t;
  return u * u * a + 2.0 * u * t * c + t * t * b;
}

/// Walks along `curve` emitting points whose consecutive chord lengths are exactly `h`.
inline std::vector<Eigen::Vector2d> chord_resample(const std::vector<Eigen::Vector2d>& curve, double h,
                                                   std::size_t intervals) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(intervals + 1);
  Eigen::Vector2d cur = curve.front();
  out.push_back(cur);
  std::size_t seg = 0;
  while (out.size() < intervals + 1) {
    bool found = false;
    for (std::size_t j = seg; j + 1 < curve.size(); ++j) {
      const Eigen::Vector2d& b = curve[j + 1];
      if ((b - cur).norm() < h) continue;
      const Eigen::Vector2d s = (j == seg) ? cur : curve[j];
      const Eigen::Vector2d d = b - s;
      const Eigen::Vector2d e = s - cur;
      const double dd = d.dot(d);
      const double ed = e.dot(d);
      const double disc = std::max(0.0, ed * ed - dd * (e.dot(e) - h * h));
      const double t = std::clamp((-ed + std::sqrt(disc)) / dd, 0.0, 1.0);
      cur = s + t * d;
      seg = j;
      out.push_back(cur);
      found = true;
      break;
    }
    if (!found) throw InvalidParameter("leader path too short for requested duration");
  }
  return out;
}

}  // namespace detail

/// Rounds each interior corner of `vertices` with a quadratic blend spanning
/// `window` meters (half before, half after the corner) and returns a dense
/// polyline of the smoothed curve.
inline std::vector<Eigen::Vector2d> smooth_polyline(std::span<const Eigen::Vector2d> vertices,
                                                    double window = kCornerWindow) {
  if (vertices.size() < 2) throw InvalidParameter("polyline needs at least two vertices");
  std::vector<Eigen::Vector2d> out;
  out.push_back(vertices.front());
  for (std::size_t i = 1; i + 1 < vertices.size(); ++i) {
    const Eigen::Vector2d in = vertices[i] - vertices[i - 1];
    const Eigen::Vector2d outv = vertices[i + 1] - vertices[i];
    const double half = std::min({0.5 * window, 0.5 * in.norm(), 0.5 * outv.norm()});
    if (half <= 0.0) continue;
    const Eigen::Vector2d a = vertices[i] - half * in.normalized();
    const Eigen::Vector2d b = vertices[i] + half * outv.normalized();
    if ((a - out.back()).norm() > 0.0) out.push_back(a);
    for (int k = 1; k <= kBezierSamples; ++k) {
      out.push_back(detail::bezier(a, vertices[i], b, static_cast<double>(k) / kBezierSamples));
    }
  }
  if ((vertices.back() - out.back()).norm() > 0.0) out.push_back(vertices.back());
  return out;
}

inline double polyline_length(std::span<const Eigen::Vector2d> pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += (pts[i] - pts[i - 1]).norm();
  return len;
}

/// Leader path from per-segment absolute headings (segment k starts where k-1 ends).
inline LeaderTrajectory leader_from_headings(std::span<const double> headings, double segment_length,
                                             double speed, double duration) {
  if (headings.empty()) throw InvalidParameter("segment_count must be at least 1");
  const double total = segment_length * static_cast<double>(headings.size());
  const double needed = speed * duration;
  if (total < needed) {
    throw InvalidParameter("total segment length " + std::to_string(total) + " m is shorter than speed x duration " +
                           std::to_string(needed) + " m");
  }

  std::vector<Eigen::Vector2d> vertices;
  vertices.reserve(headings.size() + 1);
  vertices.emplace_back(0.0, 0.0);
  for (double h : headings) {
    vertices.push_back(vertices.back() + segment_length * Eigen::Vector2d(std::cos(h), std::sin(h)));
  }
  std::vector<Eigen::Vector2d> fine = smooth_polyline(vertices);
  // Corner rounding shortens the path slightly; a straight run-out past the
  // last vertex keeps the resampler from running dry.
  const double h_last = headings.back();
  fine.push_back(fine.back() + (1.0 + needed - std::min(needed, polyline_length(fine))) *
                                   Eigen::Vector2d(std::cos(h_last), std::sin(h_last)));

  if (needed <= 0.0) {
    return LeaderTrajectory({vertices.front(), vertices.front()}, 0.0, duration, speed);
  }
  const auto intervals = static_cast<std::size_t>(std::ceil(needed / kResampleResolution - 1e-9));
  const double spacing = needed / static_cast<double>(intervals);
  return LeaderTrajectory(detail::chord_resample(fine, spacing, intervals), spacing, duration, speed);
}

/// Samples a wandering leader path: segment headings perform a random walk with
/// increments uniform in [-slope_range, slope_range], the first heading is 0.
inline LeaderTrajectory generate_leader_trajectory(const EnvDistributionParams& params, Stream& stream) {
  if (params.segment_count < 1) throw InvalidParameter("segment_count must be at least 1");
  std::vector<double> headings(static_cast<std::size_t>(params.segment_count));
  headings[0] = 0.0;
  for (std::size_t k = 1; k < headings.size(); ++k) {
    headings[k] = headings[k - 1] + stream.uniform(-params.slope_range, params.slope_range);
  }
  return leader_from_headings(headings, params.segment_length, params.speed, params.duration);
}

/// Turn increments that generate_leader_trajectory would draw for `stream`.
inline std::vector<double> sample_segment_turns(const EnvDistributionParams& params, Stream stream) {
  std::vector<double> turns;
  for (int k = 1; k < params.segment_count; ++k) turns.push_back(stream.uniform(-params.slope_range, params.slope_range));
  return turns;
}

/// Deterministic in (master_seed, env_index).
inline Environment sample_environment(const EnvDistributionParams& params, std::uint64_t env_index) {
  params.validate();
  Environment env;
  env.env_index = env_index;
  env.force_noise_std = params.force_noise_std;
  env.leader_seed = derive_key(params.master_seed, env_index, Purpose::kLeader);
  env.force_noise_seed = derive_key(params.master_seed, env_index, Purpose::kForceNoise);
  Stream heading_stream(derive_key(params.master_seed, env_index, Purpose::kHeading));
  env.initial_heading = params.heading_noise_std * heading_stream.normal();
  Stream leader_stream(env.leader_seed);
  env.leader = generate_leader_trajectory(params, leader_stream);
  return env;
}

/// Position, velocity and heading of the leader at time t in [0, T].
inline LeaderSample leader_pose(const LeaderTrajectory& traj, double t) {
  const double T = traj.duration();
  const double slack = 1e-9 * std::max(1.0, T);
  if (!(t >= -slack && t <= T + slack)) {
    throw OutOfRangeTime("leader_pose: t = " + std::to_string(t) + " outside [0, " + std::to_string(T) + "]");
  }
  const auto& w = traj.waypoints();
  if (w.size() < 2 || traj.spacing() <= 0.0) {
    return {w.empty() ? Eigen::Vector2d::Zero() : w.front(), Eigen::Vector2d::Zero(), 0.0};
  }
  t = std::clamp(t, 0.0, T);
  const std::size_t last = w.size() - 1;
  const double s = traj.speed() * t / traj.spacing();
  auto i = static_cast<std::size_t>(std::floor(s));
  double frac = s - static_cast<double>(i);
  if (i >= last) {
    i = last - 1;
    frac = 1.0;
  }
  const Eigen::Vector2d d = w[i + 1] - w[i];
  LeaderSample out;
  out.position = w[i] + frac * d;
  out.velocity = d * (traj.speed() / traj.spacing());
  out.heading = std::atan2(d.y(), d.x());
  return out;
}

/// F_e = K_L (p_L - p_R) + N_L (v_L - v_R).
inline Eigen::Vector2d impedance_force(const Eigen::Vector2d& p_leader, const Eigen::Vector2d& v_leader,
                                       const Eigen::Vector2d& p_robot, const Eigen::Vector2d& v_robot,
                                       const ImpedanceParams& params) {
  return params.stiffness * (p_leader - p_robot) + params.damping * (v_leader - v_robot);
}

/// Adds independent N(0, sigma^2) noise to each component.
inline Eigen::Vector2d noisy_force(const Eigen::Vector2d& force, Stream& stream, double sigma) {
  if (!(sigma >= 0.0)) throw InvalidParameter("force noise std must be nonnegative");
  const double nx = stream.normal();
  const double ny = stream.normal();
  if (sigma == 0.0) return force;
  return force + sigma * Eigen::Vector2d(nx, ny);
}

}  // namespace gaitpac

#endif  // GAITPAC_ENVIRONMENT_HPP
