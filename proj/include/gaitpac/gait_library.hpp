#ifndef GAITPAC_GAIT_LIBRARY_HPP
#define GAITPAC_GAIT_LIBRARY_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "gaitpac/errors.hpp"

namespace gaitpac {

inline constexpr double kDegree = std::numbers::pi / 180.0;

inline constexpr int kPrimitiveCount = 19;
inline constexpr double kTurnStep = 5.0 * kDegree;
inline constexpr double kMaxPrimitiveTurn = 45.0 * kDegree;

// Admissible stride-state box. Extreme forces saturate here.
inline constexpr double kMinStride = 0.1;
inline constexpr double kMaxStride = 1.0;
inline constexpr double kMaxTurn = 60.0 * kDegree;

/// Heading change and stride length executed over one stride.
struct StrideState {
  double turn = 0.0;
  double stride = 0.5;

  Eigen::Vector2d vec() const { return {turn, stride}; }
  static StrideState from(const Eigen::Vector2d& v) { return {v.x(), v.y()}; }
  bool operator==(const StrideState&) const = default;
};

/// One gait primitive: an exponentially stable fixed point of the stride map
/// plus the local affine dynamics around it.
///
/// `contraction` acts on (turn, stride). `force_gain` has rows (stride, turn)
/// and columns (forward, lateral) and maps a body-frame impulse in N*s to a
/// state perturbation.
struct GaitPrimitive {
  int index = 0;
  double turn_angle = 0.0;
  double nominal_stride = 0.5;
  Eigen::Matrix2d contraction = Eigen::Matrix2d::Identity() * 0.5;
  Eigen::Matrix2d force_gain = Eigen::Matrix2d::Zero();

  StrideState fixed_point() const { return {turn_angle, nominal_stride}; }
};

struct GaitLibraryParams {
  double nominal_stride = 0.5;
  double contraction_rate = 0.5;
  Eigen::Matrix2d force_gain = (Eigen::Matrix2d() << 0.02, 0.0, 0.0, 0.05).finished();
};

class GaitLibrary {
 public:
  GaitLibrary() = default;
  explicit GaitLibrary(std::vector<GaitPrimitive> primitives) : primitives_(std::move(primitives)) {
    if (primitives_.size() != static_cast<std::size_t>(kPrimitiveCount)) {
      throw InvalidParameter("gait library must hold exactly 19 primitives");
    }
    for (std::size_t i = 1; i < primitives_.size(); ++i) {
      if (!(primitives_[i].turn_angle > primitives_[i - 1].turn_angle)) {
        throw InvalidParameter("gait library turn angles must be strictly increasing");
      }
      if (primitives_[i].nominal_stride != primitives_[0].nominal_stride) {
        throw InvalidParameter("gait library primitives must share the nominal stride");
      }
    }
  }

  std::size_t size() const noexcept { return primitives_.size(); }
  const GaitPrimitive& operator[](std::size_t i) const { return primitives_[i]; }
  const GaitPrimitive& at(std::size_t i) const { return primitives_.at(i); }
  const std::vector<GaitPrimitive>& primitives() const noexcept { return primitives_; }
  double nominal_stride() const { return primitives_.front().nominal_stride; }
  std::size_t straight_index() const noexcept { return kPrimitiveCount / 2; }

  auto begin() const noexcept { return primitives_.begin(); }
  auto end() const noexcept { return primitives_.end(); }

 private:
  std::vector<GaitPrimitive> primitives_;
};

/// Builds the 19-gait library with turning angles -45..45 degrees in 5 degree steps.
inline GaitLibrary make_library(double nominal_stride, double contraction_rate,
                                const Eigen::Matrix2d& force_gain) {
  if (!(nominal_stride > 0.0) || !std::isfinite(nominal_stride)) {
    throw InvalidParameter("nominal_stride must be positive, got " + std::to_string(nominal_stride));
  }
  if (!(contraction_rate > 0.0 && contraction_rate < 1.0)) {
    throw InvalidParameter("contraction_rate must lie in (0, 1), got " + std::to_string(contraction_rate));
  }
  if (!force_gain.allFinite()) throw InvalidParameter("force_gain must be finite");

  std::vector<GaitPrimitive> primitives;
  primitives.reserve(kPrimitiveCount);
  for (int i = 0; i < kPrimitiveCount; ++i) {
    GaitPrimitive p;
    p.index = i;
    // Integer degrees keep primitive[i] and primitive[18 - i] exact negatives.
    p.turn_angle = static_cast<double>(5 * (i - kPrimitiveCount / 2)) * kDegree;
    p.nominal_stride = nominal_stride;
    p.contraction = Eigen::Matrix2d::Identity() * contraction_rate;
    p.force_gain = force_gain;
    primitives.push_back(p);
  }
  return GaitLibrary(std::move(primitives));
}

inline GaitLibrary make_library(const GaitLibraryParams& params) {
  return make_library(params.nominal_stride, params.contraction_rate, params.force_gain);
}

/// Affine stride update without saturation: x* + A (x - x*) + B f, in (turn, stride) order.
inline StrideState stride_map_unclamped(const GaitPrimitive& primitive, const StrideState& state,
                                        const Eigen::Vector2d& force_impulse) {
  const Eigen::Vector2d fixed = primitive.fixed_point().vec();
  const Eigen::Vector2d pushed = primitive.force_gain * force_impulse;  // (stride, turn)
  Eigen::Vector2d next = fixed + primitive.contraction * (state.vec() - fixed);
  next.x() += pushed.y();
  next.y() += pushed.x();
  return StrideState::from(next);
}

inline StrideState clamp_state(StrideState s) {
  s.turn = std::clamp(s.turn, -kMaxTurn, kMaxTurn);
  s.stride = std::clamp(s.stride, kMinStride, kMaxStride);
  return s;
}

/// One stride of the reduced dynamics under primitive `primitive`.
inline StrideState stride_map(const GaitPrimitive& primitive, const StrideState& state,
                              const Eigen::Vector2d& force_impulse) {
  return clamp_state(stride_map_unclamped(primitive, state, force_impulse));
}

/// Planar pose of the interaction point. Heading is accumulated without wrapping.
struct RobotPose {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double heading = 0.0;
};

/// Advances the pose by one stride using the mid-stride heading for displacement.
inline RobotPose advance_pose(const RobotPose& pose, const StrideState& state) {
  const double mid = pose.heading + 0.5 * state.turn;
  RobotPose out;
  out.position = pose.position + state.stride * Eigen::Vector2d(std::cos(mid), std::sin(mid));
  out.heading = pose.heading + state.turn;
  return out;
}

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::remainder(a, two_pi);
  if (w <= -std::numbers::pi) w += two_pi;
  return w;
}

}  // namespace gaitpac

#endif  // GAITPAC_GAIT_LIBRARY_HPP
