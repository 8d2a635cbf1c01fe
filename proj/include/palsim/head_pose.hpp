#pragma once

#include <array>

namespace palsim {

/// Unit quaternion (w, x, y, z) in the tracker's left-handed frame
/// (x right, y up, z forward).
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const noexcept;
  /// Throws ValidationError on a non-finite or zero quaternion.
  Quaternion normalized() const;
};

/// Tait-Bryan angles in radians, each in (-pi, pi].
struct EulerAngles {
  double roll = 0.0;   // about the analysis-frame x (forward) axis
  double pitch = 0.0;  // about y (left)
  double yaw = 0.0;    // about z (up)
};

using Mat3 = std::array<std::array<double, 3>, 3>;

/// Reorders a tracker quaternion into the right-handed analysis frame
/// (x forward, y left, z up): (w, x, y, z) -> (w, z, -x, y).
Quaternion to_analysis_frame(const Quaternion& q) noexcept;
/// Inverse of to_analysis_frame.
Quaternion from_analysis_frame(const Quaternion& q) noexcept;

Mat3 rotation_matrix(const Quaternion& q) noexcept;

/// R = Rx(roll) * Ry(pitch) * Rz(yaw).
Mat3 euler_xyz_matrix(const EulerAngles& e) noexcept;

/// Intrinsic X-Y-Z angles of the analysis-frame rotation. Within 1e-7 of
/// |pitch| = pi/2 roll is set to 0 and yaw carries the combined angle.
EulerAngles quat_to_euler(const Quaternion& q);

/// Analysis-frame angles back to a tracker quaternion; quat_to_euler inverts it.
Quaternion euler_to_quat(const EulerAngles& e) noexcept;

/// Rotates v by q (same algebra in either frame).
std::array<double, 3> rotate(const Quaternion& q, const std::array<double, 3>& v) noexcept;

}  // namespace palsim
