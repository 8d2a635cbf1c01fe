#pragma once

#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace palsim {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;
inline constexpr double kDegToRad = std::numbers::pi / 180.0;

/// Input violated a documented precondition. `field()` names the offending
/// parameter when there is one.
class ValidationError : public std::invalid_argument {
public:
  explicit ValidationError(const std::string& what, std::string field = {})
      : std::invalid_argument(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

/// Malformed serialized input. `location()` is a byte offset for binary
/// formats and a 1-based line number for text formats.
class FormatError : public std::runtime_error {
public:
  FormatError(const std::string& what, std::size_t location)
      : std::runtime_error(what), location_(location) {}
  std::size_t location() const noexcept { return location_; }

private:
  std::size_t location_;
};

/// Selects between the OpenMP kernel and the serial reference path.
enum class Exec { serial, parallel };

/// Row-major scalar raster. Row 0 is the top row.
struct Grid {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), values(w * h, fill) {}

  double& at(std::size_t col, std::size_t row) { return values[row * width + col]; }
  double at(std::size_t col, std::size_t row) const { return values[row * width + col]; }
  std::size_t size() const noexcept { return values.size(); }
};

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a) noexcept;

}  // namespace palsim
