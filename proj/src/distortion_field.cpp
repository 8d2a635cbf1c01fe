#include "palsim/distortion_field.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace palsim {

double wrap_angle(double a) noexcept {
  double r = std::remainder(a, kTwoPi);  // [-pi, pi]
  if (r <= -kPi) r += kTwoPi;
  return r;
}

namespace {

// Distance from the eye's centre of rotation to the corneal apex; the gaze
// ray through tangent point (x, y) crosses the lens at L * (x, y) mm with
// L = vertex distance + this.
constexpr double kRotationCentreToCornea = 13.5;

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw ValidationError(std::string(name) + " must be finite", name);
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

void LensSpec::validate() const {
  require_finite(sphere_power, "sphere_power");
  require_finite(addition_power, "addition_power");
  require_finite(corridor_length_mm, "corridor_length_mm");
  require_finite(base_curve, "base_curve");
  require_finite(refractive_index, "refractive_index");
  require_finite(pantoscopic_angle_deg, "pantoscopic_angle_deg");
  require_finite(vertex_distance_mm, "vertex_distance_mm");
  require_finite(nasal_inset_mm, "nasal_inset_mm");
  if (addition_power < 0.0) throw ValidationError("addition_power must be >= 0", "addition_power");
  if (corridor_length_mm <= 0.0)
    throw ValidationError("corridor_length_mm must be > 0", "corridor_length_mm");
  if (refractive_index <= 1.0)
    throw ValidationError("refractive_index must be > 1", "refractive_index");
  if (vertex_distance_mm < 0.0)
    throw ValidationError("vertex_distance_mm must be >= 0", "vertex_distance_mm");
  if (std::abs(pantoscopic_angle_deg) >= 45.0)
    throw ValidationError("pantoscopic_angle_deg must be within (-45, 45)", "pantoscopic_angle_deg");
}

DistortionField::DistortionField(std::size_t w, std::size_t h, double half_extent)
    : width_px(w), height_px(h), domain_half_extent(half_extent), dx(w * h, 0.0),
      dy(w * h, 0.0) {}

double DistortionField::x_at(std::size_t col) const noexcept {
  if (width_px < 2) return 0.0;
  return -domain_half_extent + spacing_x() * static_cast<double>(col);
}

double DistortionField::y_at(std::size_t row) const noexcept {
  if (height_px < 2) return 0.0;
  return domain_half_extent - spacing_y() * static_cast<double>(row);
}

double DistortionField::spacing_x() const noexcept {
  return width_px < 2 ? 0.0 : 2.0 * domain_half_extent / static_cast<double>(width_px - 1);
}

double DistortionField::spacing_y() const noexcept {
  return height_px < 2 ? 0.0 : 2.0 * domain_half_extent / static_cast<double>(height_px - 1);
}

void DistortionField::validate() const {
  if (width_px == 0 || height_px == 0) throw ValidationError("field grid must be non-empty", "width_px");
  if (!(domain_half_extent > 0.0) || !std::isfinite(domain_half_extent))
    throw ValidationError("domain_half_extent must be finite and > 0", "domain_half_extent");
  const std::size_t n = width_px * height_px;
  if (dx.size() != n || dy.size() != n) throw ValidationError("dx/dy size mismatch", "dx");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(dx[i]) || !std::isfinite(dy[i]))
      throw ValidationError("non-finite offset at cell " + std::to_string(i), "dx");
  }
}

JacobianShape decompose_jacobian(double j11, double j12, double j21, double j22) noexcept {
  JacobianShape out;
  const double a = std::hypot(j11, j21);
  const double theta = std::atan2(j21, j11);
  out.rotation_deg = theta * kRadToDeg;
  const double det = j11 * j22 - j12 * j21;
  if (!(a > 0.0) || !(det > 0.0)) {
    out.degenerate = true;
    out.magnification = out.aspect = out.skew_deg = std::nan("");
    return out;
  }
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double shear = c * j12 + s * j22;
  const double b = det / a;
  out.magnification = std::sqrt(a * b);
  out.aspect = a / b;
  out.skew_deg = std::atan(shear / b) * kRadToDeg;
  return out;
}

DistortionField synth_pal_field(const LensSpec& spec, std::size_t width_px, std::size_t height_px,
                                double domain_half_extent) {
  spec.validate();
  if (width_px == 0 || height_px == 0) throw ValidationError("grid size must be positive", "width_px");
  if (!(domain_half_extent > 0.0) || !std::isfinite(domain_half_extent))
    throw ValidationError("domain_half_extent must be finite and > 0", "domain_half_extent");

  DistortionField field(width_px, height_px, domain_half_extent);

  const double lever_mm = spec.vertex_distance_mm + kRotationCentreToCornea;
  const double panto = spec.pantoscopic_angle_deg * kDegToRad;
  const double tilt_sphere = 1.0 + std::sin(panto) * std::sin(panto) / (2.0 * spec.refractive_index);
  const double tilt_cyl = std::tan(panto) * std::tan(panto);
  // Progression from the fitting cross (v = 0) down to the near point
  // (v = -corridor); the logistic is centred mid-corridor.
  const double centre_v = -0.5 * spec.corridor_length_mm;
  const double width_v = spec.corridor_length_mm / 8.0;
  const double oblique = std::sqrt(0.5);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t row = 0; row < static_cast<std::ptrdiff_t>(height_px); ++row) {
    const double y = field.y_at(static_cast<std::size_t>(row));
    const double v = lever_mm * y;
    const double t = logistic((centre_v - v) / width_v);
    const double dt_dv = -t * (1.0 - t) / width_v;
    const double umbilic_u = -spec.nasal_inset_mm * t;  // OD: nasal is -x
    const double mean_power = tilt_sphere * (spec.sphere_power + spec.addition_power * t);
    const double power_slope = std::abs(tilt_sphere * spec.addition_power * dt_dv);

    for (std::size_t col = 0; col < width_px; ++col) {
      const double x = field.x_at(col);
      const double u = lever_mm * x;
      const double lateral = u - umbilic_u;
      // Minkwitz: cylinder grows at twice the vertical power gradient per mm
      // of lateral distance; principal meridians at +-45 deg, mean preserved.
      const double cyl = 2.0 * power_slope * std::abs(lateral);
      const double nx = oblique;
      const double ny = lateral >= 0.0 ? oblique : -oblique;
      // Power matrix: P I + cyl/2 (n n' - m m') + tilt cylinder in the
      // vertical meridian. n n' - m m' for unit n, m = n rotated 90 deg.
      const double half = 0.5 * cyl;
      const double m11 = mean_power + half * (nx * nx - ny * ny);
      const double m12 = half * (2.0 * nx * ny);
      const double m22 = mean_power + half * (ny * ny - nx * nx) + mean_power * tilt_cyl;
      // Prentice: prism dioptres = D * cm; tangent = prism / 100.
      const std::size_t k = field.index(col, static_cast<std::size_t>(row));
      field.dx[k] = (m11 * u + m12 * v) / 1000.0;
      field.dy[k] = (m12 * u + m22 * v) / 1000.0;
    }
  }
  return field;
}

double angular_displacement(double x, double y, double xd, double yd) noexcept {
  const double num = xd * x + yd * y + 1.0;
  const double den = std::sqrt((xd * xd + yd * yd + 1.0) * (x * x + y * y + 1.0));
  const double c = std::clamp(num / den, -1.0, 1.0);
  return std::acos(c) * kRadToDeg;
}

namespace {

void displacement_row(const DistortionField& field, std::size_t row, Grid& out) {
  const double y = field.y_at(row);
  for (std::size_t col = 0; col < field.width_px; ++col) {
    const double x = field.x_at(col);
    const std::size_t k = field.index(col, row);
    out.values[k] = angular_displacement(x, y, x + field.dx[k], y + field.dy[k]);
  }
}

// Derivative of `f` along columns (x) and rows (y) at a cell; central in the
// interior, one-sided at the borders.
struct Partials {
  double dfdx;
  double dfdy;
};

Partials partials(const DistortionField& field, const std::vector<double>& f, std::size_t col,
                  std::size_t row) {
  const std::size_t w = field.width_px;
  const std::size_t h = field.height_px;
  const double hx = field.spacing_x();
  const double hy = field.spacing_y();
  auto at = [&](std::size_t c, std::size_t r) { return f[r * w + c]; };
  double dfdx;
  if (col == 0) {
    dfdx = (at(1, row) - at(0, row)) / hx;
  } else if (col + 1 == w) {
    dfdx = (at(col, row) - at(col - 1, row)) / hx;
  } else {
    dfdx = (at(col + 1, row) - at(col - 1, row)) / (2.0 * hx);
  }
  // Row index grows downwards while y grows upwards.
  double dfdy;
  if (row == 0) {
    dfdy = -(at(col, 1) - at(col, 0)) / hy;
  } else if (row + 1 == h) {
    dfdy = -(at(col, row) - at(col, row - 1)) / hy;
  } else {
    dfdy = -(at(col, row + 1) - at(col, row - 1)) / (2.0 * hy);
  }
  return {dfdx, dfdy};
}

DecompositionMaps make_maps(const DistortionField& field) {
  if (field.width_px < 3 || field.height_px < 3)
    throw ValidationError("decompose needs at least a 3x3 grid", "width_px");
  DecompositionMaps maps;
  const std::size_t w = field.width_px;
  const std::size_t h = field.height_px;
  maps.displacement_deg = Grid(w, h);
  maps.magnification = Grid(w, h);
  maps.aspect = Grid(w, h);
  maps.skew_deg = Grid(w, h);
  maps.rotation_deg = Grid(w, h);
  maps.domain_half_extent = field.domain_half_extent;
  return maps;
}

std::size_t decompose_row(const DistortionField& field, std::size_t row, DecompositionMaps& maps) {
  std::size_t degenerate = 0;
  displacement_row(field, row, maps.displacement_deg);
  for (std::size_t col = 0; col < field.width_px; ++col) {
    const Partials px = partials(field, field.dx, col, row);
    const Partials py = partials(field, field.dy, col, row);
    const JacobianShape shape =
        decompose_jacobian(1.0 + px.dfdx, px.dfdy, py.dfdx, 1.0 + py.dfdy);
    const std::size_t k = field.index(col, row);
    maps.magnification.values[k] = shape.magnification;
    maps.aspect.values[k] = shape.aspect;
    maps.skew_deg.values[k] = shape.skew_deg;
    maps.rotation_deg.values[k] = shape.rotation_deg;
    degenerate += shape.degenerate ? 1 : 0;
  }
  return degenerate;
}

}  // namespace

Grid displacement_map(const DistortionField& field, Exec exec) {
  Grid out(field.width_px, field.height_px);
  const auto rows = static_cast<std::ptrdiff_t>(field.height_px);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::ptrdiff_t row = 0; row < rows; ++row) {
    displacement_row(field, static_cast<std::size_t>(row), out);
  }
  return out;
}

DecompositionMaps decompose(const DistortionField& field, Exec exec) {
  DecompositionMaps maps = make_maps(field);
  const auto rows = static_cast<std::ptrdiff_t>(field.height_px);
  std::size_t degenerate = 0;
#pragma omp parallel for schedule(static) reduction(+ : degenerate) if (exec == Exec::parallel)
  for (std::ptrdiff_t row = 0; row < rows; ++row) {
    degenerate += decompose_row(field, static_cast<std::size_t>(row), maps);
  }
  maps.degenerate_cells = degenerate;
  return maps;
}

std::optional<double> sample_bilinear(const Grid& map, double domain_half_extent, double x,
                                      double y) noexcept {
  if (map.width == 0 || map.height == 0 || !std::isfinite(x) || !std::isfinite(y))
    return std::nullopt;
  const double e = domain_half_extent;
  const double slack = 1e-12 * e;
  if (x < -e - slack || x > e + slack || y < -e - slack || y > e + slack) return std::nullopt;

  auto locate = [&](double frac, std::size_t n, std::size_t& i0, double& t) {
    if (n < 2) {
      i0 = 0;
      t = 0.0;
      return;
    }
    const double pos = std::clamp(frac, 0.0, 1.0) * static_cast<double>(n - 1);
    i0 = std::min(static_cast<std::size_t>(pos), n - 2);
    t = pos - static_cast<double>(i0);
  };

  std::size_t c0, r0;
  double tx, ty;
  locate((x + e) / (2.0 * e), map.width, c0, tx);
  locate((e - y) / (2.0 * e), map.height, r0, ty);
  const std::size_t c1 = map.width < 2 ? c0 : c0 + 1;
  const std::size_t r1 = map.height < 2 ? r0 : r0 + 1;

  const double v00 = map.at(c0, r0);
  const double v10 = map.at(c1, r0);
  const double v01 = map.at(c0, r1);
  const double v11 = map.at(c1, r1);
  const double top = v00 + (v10 - v00) * tx;
  const double bottom = v01 + (v11 - v01) * tx;
  return top + (bottom - top) * ty;
}

namespace reference {

Grid displacement_map(const DistortionField& field) {
  Grid out(field.width_px, field.height_px);
  for (std::size_t row = 0; row < field.height_px; ++row) displacement_row(field, row, out);
  return out;
}

DecompositionMaps decompose(const DistortionField& field) {
  DecompositionMaps maps = make_maps(field);
  for (std::size_t row = 0; row < field.height_px; ++row)
    maps.degenerate_cells += decompose_row(field, row, maps);
  return maps;
}

}  // namespace reference

}  // namespace palsim
