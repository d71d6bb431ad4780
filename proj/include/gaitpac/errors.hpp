#ifndef GAITPAC_ERRORS_HPP
#define GAITPAC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace gaitpac {

/// A constructor or operation received parameters outside its domain.
class InvalidParameter : public std::invalid_argument {
 public:
  explicit InvalidParameter(const std::string& what) : std::invalid_argument(what) {}
};

/// A query outside the time horizon of a trajectory.
class OutOfRangeTime : public std::out_of_range {
 public:
  explicit OutOfRangeTime(const std::string& what) : std::out_of_range(what) {}
};

/// The environment cannot be scored (zero leader travel, empty horizon).
class DegenerateEnvironment : public std::runtime_error {
 public:
  explicit DegenerateEnvironment(const std::string& what) : std::runtime_error(what) {}
};

/// Training produced a NaN/inf cost or parameter.
class NonFiniteValue : public std::runtime_error {
 public:
  explicit NonFiniteValue(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent run configuration, or artifacts stamped with a different config.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Two pipeline stages were handed datasets with overlapping environment indices.
class SplitOverlap : public std::runtime_error {
 public:
  explicit SplitOverlap(const std::string& what) : std::runtime_error(what) {}
};

/// The bound optimizer stopped before reaching its stationarity tolerance.
class SolverNonConvergence : public std::runtime_error {
 public:
  explicit SolverNonConvergence(const std::string& what) : std::runtime_error(what) {}
};

/// An artifact file is malformed or does not match what it claims to contain.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gaitpac

#endif  // GAITPAC_ERRORS_HPP
