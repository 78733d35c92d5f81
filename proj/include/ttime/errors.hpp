#pragma once

#include <stdexcept>
#include <string>

namespace ttime {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : Error { using Error::Error; };
struct ConvergenceError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct StateError : Error { using Error::Error; };
struct EmptyInputError : Error { using Error::Error; };
struct LabelError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct MetricError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };

}  // namespace ttime
