#pragma once

#include <cstddef>
#include <optional>

#include "palsim/common.hpp"

namespace palsim {

/// Progressive addition lens prescription and fitting geometry.
struct LensSpec {
  double sphere_power = 0.0;          // D
  double addition_power = 0.0;        // D
  double corridor_length_mm = 14.0;
  double base_curve = 5.28;
  double refractive_index = 1.5;
  double pantoscopic_angle_deg = 7.5;
  double vertex_distance_mm = 12.0;
  double nasal_inset_mm = 2.5;

  /// Throws ValidationError naming the first bad field.
  void validate() const;
};

/// Gridded displacement field over tangent-plane coordinates.
///
/// Column i and row j sit at x = -E + 2E i/(W-1), y = E - 2E j/(H-1), with
/// E = domain_half_extent; a single column or row sits at 0. The source
/// point (x, y) is seen at (x + dx, y + dy).
struct DistortionField {
  std::size_t width_px = 0;
  std::size_t height_px = 0;
  double domain_half_extent = 1.0;
  std::vector<double> dx;
  std::vector<double> dy;

  DistortionField() = default;
  DistortionField(std::size_t w, std::size_t h, double half_extent);

  double x_at(std::size_t col) const noexcept;
  double y_at(std::size_t row) const noexcept;
  double spacing_x() const noexcept;
  double spacing_y() const noexcept;
  std::size_t index(std::size_t col, std::size_t row) const noexcept { return row * width_px + col; }

  void validate() const;
};

/// Per-cell distortion descriptors derived from the field's Jacobian.
struct DecompositionMaps {
  Grid displacement_deg;
  Grid magnification;
  Grid aspect;
  Grid skew_deg;
  Grid rotation_deg;
  double domain_half_extent = 1.0;
  /// Cells whose Jacobian has det <= 0. Their magnification, aspect and skew
  /// hold NaN.
  std::size_t degenerate_cells = 0;
};

/// Local first-order shape of a 2x2 Jacobian J = R(theta) * [[a, s], [0, b]].
struct JacobianShape {
  double magnification = 1.0;  // sqrt(a b)
  double aspect = 1.0;         // a / b
  double skew_deg = 0.0;       // atan(s / b)
  double rotation_deg = 0.0;   // theta
  bool degenerate = false;
};

/// QR split of J with a positive diagonal. Degenerate when det(J) <= 0.
JacobianShape decompose_jacobian(double j11, double j12, double j21, double j22) noexcept;

/// Parametric PAL surrogate: sigmoid power progression down the corridor,
/// Minkwitz lateral astigmatism, pantoscopic-tilt induced power, and
/// Prentice-rule prism converted to tangent units.
DistortionField synth_pal_field(const LensSpec& spec, std::size_t width_px,
                                std::size_t height_px, double domain_half_extent);

/// Visual angle in degrees between the rays through (x, y) and (xd, yd) on
/// the z = 1 plane.
double angular_displacement(double x, double y, double xd, double yd) noexcept;

Grid displacement_map(const DistortionField& field, Exec exec = Exec::parallel);

/// Requires width and height >= 3.
DecompositionMaps decompose(const DistortionField& field, Exec exec = Exec::parallel);

/// Bilinear lookup on a grid spanning [-E, E]^2 with the field's node layout.
/// Returns nullopt outside the domain.
std::optional<double> sample_bilinear(const Grid& map, double domain_half_extent, double x,
                                      double y) noexcept;

namespace reference {
Grid displacement_map(const DistortionField& field);
DecompositionMaps decompose(const DistortionField& field);
}  // namespace reference

}  // namespace palsim
