#include "palsim/head_pose.hpp"

#include <algorithm>
#include <cmath>

#include "palsim/common.hpp"

namespace palsim {

namespace {
constexpr double kGimbalTolerance = 1e-7;

double to_half_open(double a) noexcept { return a <= -kPi ? a + kTwoPi : a; }
}  // namespace

double Quaternion::norm() const noexcept { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
  const double n = norm();
  if (!std::isfinite(n) || n == 0.0) throw ValidationError("quaternion must be finite and non-zero", "head_rot");
  return {w / n, x / n, y / n, z / n};
}

Quaternion to_analysis_frame(const Quaternion& q) noexcept { return {q.w, q.z, -q.x, q.y}; }

Quaternion from_analysis_frame(const Quaternion& q) noexcept { return {q.w, -q.y, q.z, q.x}; }

Mat3 rotation_matrix(const Quaternion& q) noexcept {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  return {{{w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z}}};
}

Mat3 euler_xyz_matrix(const EulerAngles& e) noexcept {
  const double ca = std::cos(e.roll), sa = std::sin(e.roll);
  const double cb = std::cos(e.pitch), sb = std::sin(e.pitch);
  const double cc = std::cos(e.yaw), sc = std::sin(e.yaw);
  return {{{cb * cc, -cb * sc, sb},
           {ca * sc + sa * sb * cc, ca * cc - sa * sb * sc, -sa * cb},
           {sa * sc - ca * sb * cc, sa * cc + ca * sb * sc, ca * cb}}};
}

EulerAngles quat_to_euler(const Quaternion& q) {
  const Quaternion r = to_analysis_frame(q.normalized());
  const Mat3 m = rotation_matrix(r);
  EulerAngles e;
  const double sin_pitch = std::clamp(m[0][2], -1.0, 1.0);
  const double cos_pitch = std::hypot(m[0][0], m[0][1]);
  e.pitch = std::atan2(sin_pitch, cos_pitch);
  if (std::abs(std::abs(e.pitch) - kPi / 2) < kGimbalTolerance) {
    e.roll = 0.0;
    e.yaw = to_half_open(std::atan2(m[1][0], m[1][1]));
    return e;
  }
  e.roll = to_half_open(std::atan2(-m[1][2], m[2][2]));
  e.yaw = to_half_open(std::atan2(-m[0][1], m[0][0]));
  return e;
}

Quaternion euler_to_quat(const EulerAngles& e) noexcept {
  // q = qx(roll) * qy(pitch) * qz(yaw) in the analysis frame.
  const double ca = std::cos(e.roll / 2), sa = std::sin(e.roll / 2);
  const double cb = std::cos(e.pitch / 2), sb = std::sin(e.pitch / 2);
  const double cc = std::cos(e.yaw / 2), sc = std::sin(e.yaw / 2);
  const Quaternion r{ca * cb * cc - sa * sb * sc, sa * cb * cc + ca * sb * sc,
                     ca * sb * cc - sa * cb * sc, ca * cb * sc + sa * sb * cc};
  return from_analysis_frame(r);
}

std::array<double, 3> rotate(const Quaternion& q, const std::array<double, 3>& v) noexcept {
  const Mat3 m = rotation_matrix(q);
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

}  // namespace palsim
