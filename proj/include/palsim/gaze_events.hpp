#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "palsim/head_pose.hpp"

namespace palsim {

using Vec3 = std::array<double, 3>;

/// One tracked frame. Gaze is the right-eye direction in the headset frame
/// (x right, y up, z forward); the hit point is in world metres.
struct FrameSample {
  double t = 0.0;
  Vec3 head_pos{};
  Quaternion head_rot{};
  Vec3 gaze_dir_right{0.0, 0.0, 1.0};
  Vec3 hit_point{};
  bool valid = true;
};

struct Fixation {
  double start_t = 0.0;
  double end_t = 0.0;
  Vec3 centroid{};
  std::size_t n_frames = 0;
  std::size_t first_frame = 0;

  double duration() const noexcept { return end_t - start_t; }
};

struct Saccade {
  double start_t = 0.0;
  double end_t = 0.0;
  double amplitude_deg = 0.0;
  double peak_velocity_dps = 0.0;      // smoothed speed
  double peak_raw_velocity_dps = 0.0;  // median-of-lags speed before smoothing
  std::size_t first_frame = 0;
  std::size_t last_frame = 0;          // inclusive, last supra-threshold frame
};

struct GazeEventSummary {
  double fixations_per_min = 0.0;
  double mean_fixation_duration_s = 0.0;
  double saccades_per_min = 0.0;
  double mean_saccade_amplitude_deg = 0.0;
  double max_peak_velocity_dps = 0.0;
  double tracked_duration_s = 0.0;
  bool no_fixations = false;
  bool no_saccades = false;
};

struct FixationParams {
  double radius_m = 0.05;
  double min_duration_s = 0.200;  // strictly exceeded
};

struct SaccadeParams {
  double speed_threshold_dps = 50.0;
  double min_amplitude_deg = 1.0;
  int max_lag = 5;
  int sg_window = 9;
  int sg_order = 2;
  std::size_t min_segment_frames = 6;
};

/// Greedy dispersion clustering of world hit points. A cluster grows while
/// every member stays within the radius of the running centroid; invalid
/// frames end the cluster. Emitted when end_t - start_t > min duration.
std::vector<Fixation> detect_fixations(std::span<const FrameSample> frames,
                                       const FixationParams& params = {});

struct SphericalAngles {
  double phi = 0.0;    // atan2(y, x)
  double theta = 0.0;  // acos(z)
};

/// Throws ValidationError for a zero or non-finite vector. The input is
/// normalised first, so small norm errors are tolerated.
SphericalAngles spherical_angles(const Vec3& v);

/// Great-circle angle between two directions, degrees.
double angular_distance_psi(const SphericalAngles& a, const SphericalAngles& b) noexcept;

/// Coefficients that evaluate the local least-squares polynomial at offset
/// `pos` (in [-half, half]) from the window centre.
std::vector<double> savitzky_golay_coefficients(int window, int order, int pos);

struct SmoothedSignal {
  std::vector<double> values;
  /// Signal shorter than the window; values are the input unchanged.
  bool passthrough = false;
};

/// Edge samples are evaluated from the first/last full window's polynomial,
/// so polynomials up to `order` are reproduced everywhere.
SmoothedSignal savitzky_golay(std::span<const double> signal, int window = 9, int order = 2);

/// Per-frame gaze speed in deg/s over one run of valid frames: median over
/// lags 1..max_lag of psi(n, n+i) / (t[n+i] - t[n]). The last frame repeats
/// its predecessor.
std::vector<double> gaze_speed(std::span<const FrameSample> segment, int max_lag = 5);

std::vector<Saccade> detect_saccades(std::span<const FrameSample> frames,
                                     const SaccadeParams& params = {});

/// Throws ValidationError when no time elapses between valid frames.
GazeEventSummary summarize_events(std::span<const FrameSample> frames,
                                  std::span<const Fixation> fixations,
                                  std::span<const Saccade> saccades);

nlohmann::json to_json(const Fixation& f);
nlohmann::json to_json(const Saccade& s);
nlohmann::json to_json(const GazeEventSummary& s);

}  // namespace palsim
