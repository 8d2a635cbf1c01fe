#include "palsim/gaze_events.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "palsim/common.hpp"

namespace palsim {

namespace {

double dist2(const Vec3& a, const Vec3& b) noexcept {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// Index ranges [begin, end) of consecutive valid frames.
std::vector<std::pair<std::size_t, std::size_t>> valid_segments(std::span<const FrameSample> frames) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t i = 0;
  while (i < frames.size()) {
    if (!frames[i].valid) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < frames.size() && frames[j].valid) ++j;
    out.emplace_back(i, j);
    i = j;
  }
  return out;
}

double median(std::vector<double>& v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<Fixation> detect_fixations(std::span<const FrameSample> frames, const FixationParams& params) {
  std::vector<Fixation> out;
  const double r2 = params.radius_m * params.radius_m;
  std::size_t start = 0;
  while (start < frames.size()) {
    if (!frames[start].valid) {
      ++start;
      continue;
    }
    Vec3 sum = frames[start].hit_point;
    std::size_t end = start + 1;  // exclusive
    while (end < frames.size() && frames[end].valid) {
      const double n = static_cast<double>(end - start + 1);
      const Vec3 c{(sum[0] + frames[end].hit_point[0]) / n, (sum[1] + frames[end].hit_point[1]) / n,
                   (sum[2] + frames[end].hit_point[2]) / n};
      bool inside = true;
      for (std::size_t k = start; k <= end && inside; ++k) inside = dist2(frames[k].hit_point, c) <= r2;
      if (!inside) break;
      for (int d = 0; d < 3; ++d) sum[d] += frames[end].hit_point[d];
      ++end;
    }
    const double span = frames[end - 1].t - frames[start].t;
    if (span > params.min_duration_s) {
      const double n = static_cast<double>(end - start);
      out.push_back({frames[start].t, frames[end - 1].t, {sum[0] / n, sum[1] / n, sum[2] / n}, end - start, start});
    }
    start = end;
  }
  return out;
}

SphericalAngles spherical_angles(const Vec3& v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (!(n > 0.0) || !std::isfinite(n)) throw ValidationError("gaze direction must be a finite nonzero vector", "gaze_dir");
  const double x = v[0] / n, y = v[1] / n, z = v[2] / n;
  // atan2(0, 0) is 0, which is the pole convention we want.
  return {std::atan2(y, x), std::acos(std::clamp(z, -1.0, 1.0))};
}

double angular_distance_psi(const SphericalAngles& a, const SphericalAngles& b) noexcept {
  const double c = std::sin(a.theta) * std::sin(b.theta) * std::cos(a.phi - b.phi) +
                   std::cos(a.theta) * std::cos(b.theta);
  return std::acos(std::clamp(c, -1.0, 1.0)) * kRadToDeg;
}

std::vector<double> savitzky_golay_coefficients(int window, int order, int pos) {
  if (window < 1 || window % 2 == 0) throw ValidationError("window must be odd and positive", "window");
  if (order < 0 || order >= window) throw ValidationError("order must be in [0, window)", "poly_order");
  const int half = window / 2;
  if (pos < -half || pos > half) throw ValidationError("evaluation offset outside window", "pos");
  const int m = order + 1;

  // Normal matrix A^T A with A[i][k] = (i - half)^k, inverted by Gauss-Jordan.
  std::vector<double> g(static_cast<std::size_t>(m * 2 * m), 0.0);
  auto at = [&](int r, int c) -> double& { return g[static_cast<std::size_t>(r * 2 * m + c)]; };
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < m; ++c) {
      double s = 0.0;
      for (int i = -half; i <= half; ++i) s += std::pow(i, r + c);
      at(r, c) = s;
    }
    at(r, m + r) = 1.0;
  }
  for (int c = 0; c < m; ++c) {
    int piv = c;
    for (int r = c + 1; r < m; ++r)
      if (std::abs(at(r, c)) > std::abs(at(piv, c))) piv = r;
    for (int k = 0; k < 2 * m; ++k) std::swap(at(c, k), at(piv, k));
    const double d = at(c, c);
    for (int k = 0; k < 2 * m; ++k) at(c, k) /= d;
    for (int r = 0; r < m; ++r) {
      if (r == c) continue;
      const double f = at(r, c);
      for (int k = 0; k < 2 * m; ++k) at(r, k) -= f * at(c, k);
    }
  }

  // h_i = sum_k pos^k [(A^T A)^-1 A^T]_{k,i}
  std::vector<double> h(static_cast<std::size_t>(window), 0.0);
  for (int i = -half; i <= half; ++i) {
    double s = 0.0;
    for (int k = 0; k < m; ++k) {
      double row = 0.0;
      for (int j = 0; j < m; ++j) row += at(k, m + j) * std::pow(i, j);
      s += std::pow(pos, k) * row;
    }
    h[static_cast<std::size_t>(i + half)] = s;
  }
  return h;
}

SmoothedSignal savitzky_golay(std::span<const double> signal, int window, int order) {
  SmoothedSignal out;
  // Validates window/order even when the signal is too short to use them.
  const std::vector<double> centre = savitzky_golay_coefficients(window, order, 0);
  const std::size_t n = signal.size(), w = static_cast<std::size_t>(window);
  if (n < w) {
    out.values.assign(signal.begin(), signal.end());
    out.passthrough = true;
    return out;
  }
  const int half = window / 2;
  out.values.resize(n);
  auto apply = [&](const std::vector<double>& h, std::size_t first) {
    double s = 0.0;
    for (std::size_t i = 0; i < w; ++i) s += h[i] * signal[first + i];
    return s;
  };
  for (std::size_t k = static_cast<std::size_t>(half); k + half < n; ++k) out.values[k] = apply(centre, k - half);
  for (int k = 0; k < half; ++k) {
    out.values[static_cast<std::size_t>(k)] = apply(savitzky_golay_coefficients(window, order, k - half), 0);
    out.values[n - 1 - static_cast<std::size_t>(k)] =
        apply(savitzky_golay_coefficients(window, order, half - k), n - w);
  }
  return out;
}

std::vector<double> gaze_speed(std::span<const FrameSample> segment, int max_lag) {
  const std::size_t n = segment.size();
  std::vector<double> speed(n, 0.0);
  if (n < 2) return speed;
  std::vector<SphericalAngles> ang(n);
  for (std::size_t i = 0; i < n; ++i) ang[i] = spherical_angles(segment[i].gaze_dir_right);
  std::vector<double> lags;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    lags.clear();
    for (int i = 1; i <= max_lag && k + static_cast<std::size_t>(i) < n; ++i) {
      const std::size_t j = k + static_cast<std::size_t>(i);
      lags.push_back(angular_distance_psi(ang[k], ang[j]) / (segment[j].t - segment[k].t));
    }
    speed[k] = median(lags);
  }
  speed[n - 1] = speed[n - 2];
  return speed;
}

std::vector<Saccade> detect_saccades(std::span<const FrameSample> frames, const SaccadeParams& params) {
  std::vector<Saccade> out;
  for (const auto& [begin, end] : valid_segments(frames)) {
    const std::size_t n = end - begin;
    if (n < params.min_segment_frames) continue;
    const auto seg = frames.subspan(begin, n);
    const std::vector<double> raw = gaze_speed(seg, params.max_lag);
    const std::vector<double> smooth = savitzky_golay(raw, params.sg_window, params.sg_order).values;

    std::size_t k = 0;
    while (k < n) {
      if (!(smooth[k] > params.speed_threshold_dps)) {
        ++k;
        continue;
      }
      std::size_t last = k;
      while (last + 1 < n && smooth[last + 1] > params.speed_threshold_dps) ++last;
      // Speeds look forward, so the motion of a run ends one frame later.
      const std::size_t stop = std::min(last + 1, n - 1);
      const double amp = angular_distance_psi(spherical_angles(seg[k].gaze_dir_right),
                                              spherical_angles(seg[stop].gaze_dir_right));
      if (amp >= params.min_amplitude_deg) {
        Saccade s;
        s.start_t = seg[k].t;
        s.end_t = seg[stop].t;
        s.amplitude_deg = amp;
        s.peak_velocity_dps = *std::max_element(smooth.begin() + static_cast<std::ptrdiff_t>(k),
                                                smooth.begin() + static_cast<std::ptrdiff_t>(last + 1));
        s.peak_raw_velocity_dps = *std::max_element(raw.begin() + static_cast<std::ptrdiff_t>(k),
                                                    raw.begin() + static_cast<std::ptrdiff_t>(last + 1));
        s.first_frame = begin + k;
        s.last_frame = begin + last;
        out.push_back(s);
      }
      k = last + 1;
    }
  }
  return out;
}

GazeEventSummary summarize_events(std::span<const FrameSample> frames, std::span<const Fixation> fixations,
                                  std::span<const Saccade> saccades) {
  GazeEventSummary s;
  for (std::size_t i = 1; i < frames.size(); ++i)
    if (frames[i].valid && frames[i - 1].valid) s.tracked_duration_s += frames[i].t - frames[i - 1].t;
  if (!(s.tracked_duration_s > 0.0)) throw ValidationError("trial has zero tracked duration", "frames");
  const double minutes = s.tracked_duration_s / 60.0;

  s.fixations_per_min = static_cast<double>(fixations.size()) / minutes;
  s.no_fixations = fixations.empty();
  for (const auto& f : fixations) s.mean_fixation_duration_s += f.duration();
  if (!fixations.empty()) s.mean_fixation_duration_s /= static_cast<double>(fixations.size());

  s.saccades_per_min = static_cast<double>(saccades.size()) / minutes;
  s.no_saccades = saccades.empty();
  for (const auto& c : saccades) {
    s.mean_saccade_amplitude_deg += c.amplitude_deg;
    s.max_peak_velocity_dps = std::max(s.max_peak_velocity_dps, c.peak_velocity_dps);
  }
  if (!saccades.empty()) s.mean_saccade_amplitude_deg /= static_cast<double>(saccades.size());
  return s;
}

nlohmann::json to_json(const Fixation& f) {
  return {{"type", "fixation"},  {"start_t", f.start_t},   {"end_t", f.end_t},
          {"centroid", f.centroid}, {"n_frames", f.n_frames}, {"duration_s", f.duration()}};
}

nlohmann::json to_json(const Saccade& s) {
  return {{"type", "saccade"},
          {"start_t", s.start_t},
          {"end_t", s.end_t},
          {"amplitude_deg", s.amplitude_deg},
          {"peak_velocity_dps", s.peak_velocity_dps},
          {"peak_raw_velocity_dps", s.peak_raw_velocity_dps}};
}

nlohmann::json to_json(const GazeEventSummary& s) {
  return {{"fixations_per_min", s.fixations_per_min},
          {"mean_fixation_duration_s", s.mean_fixation_duration_s},
          {"saccades_per_min", s.saccades_per_min},
          {"mean_saccade_amplitude_deg", s.mean_saccade_amplitude_deg},
          {"max_peak_velocity_dps", s.max_peak_velocity_dps},
          {"tracked_duration_s", s.tracked_duration_s},
          {"no_fixations", s.no_fixations},
          {"no_saccades", s.no_saccades}};
}

}  // namespace palsim
