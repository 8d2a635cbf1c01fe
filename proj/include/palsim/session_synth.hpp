#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "palsim/distortion_exposure.hpp"
#include "palsim/gaze_events.hpp"

namespace palsim {

/// Booth geometry in the tracker world frame (x right, y up, z forward),
/// metres. The seated head sits at `head_origin`.
struct SceneLayout {
  Vec3 room_min{-1.5, 0.0, -1.5};
  Vec3 room_max{1.5, 2.5, 1.5};
  Vec3 head_origin{0.0, 1.2, 0.0};
  Vec3 cube_spawn{1.2, 0.8, -0.1};
  Vec3 plate{-1.0, 0.8, -0.2};
  Vec3 whiteboard{-1.45, 1.5, -0.28};

  /// Head yaw (analysis frame, radians) that faces a world point.
  double bearing(const Vec3& p) const noexcept;
  /// Throws ValidationError if a target lies outside the room.
  void validate() const;
};

/// Weights of the ground-truth discomfort score on the trial's observed
/// exposure (mean |displacement| in degrees, SD of |skew| in degrees, SD of
/// |aspect|).
struct RatingWeights {
  double displacement_mean = 1.5;
  double skew_sd = 0.5;
  double aspect_sd = 15.0;
};

struct SubjectProfile {
  std::string id;
  double age = 25.0;
  std::string gender = "f";
  std::array<double, 2> yaw_peaks{-1.65, 1.76};  // cube spawn, plate/whiteboard
  std::array<double, 2> pitch_modes{-0.33, -0.05};
  double cube_side_weight = 0.59;  // share of head dwells facing the cube spawn
  double yaw_kappa = 40.0;         // spread of dwell yaw about its peak
  double roll_kappa = 400.0;
  int rating_bias = 1;       // integer raw-rating offset
  double sensitivity = 1.0;  // multiplies the ground-truth score
  double rating_noise_sd = 0.3;
};

struct SynthConfig {
  double frame_rate = 90.0;
  double mean_duration_s = 36.0;
  double min_duration_s = 18.0;
  double max_duration_s = 101.0;
  RatingWeights weights;
  double rating_noise_sd = 0.3;
  /// Subject rating biases are drawn uniformly from these integers.
  int rating_bias_min = 0;
  int rating_bias_max = 2;
};

struct GeneratedTrial {
  std::string subject_id;
  LensCondition lens_condition = LensCondition::baseline;
  int trial_id = 0;
  double frame_rate = 90.0;
  std::vector<FrameSample> frames;
  int raw_rating = 0;
  /// Noise-free score before bias, rounding and clipping.
  double true_score = 0.0;
  ObservedDistortionStats true_exposure;
  /// Injected saccades completed within the trial.
  std::vector<Saccade> true_saccades;
};

/// Main-sequence peak velocity (deg/s) for an amplitude in degrees.
double main_sequence_peak_velocity(double amplitude_deg) noexcept;

/// Seeded subject with the layout's bearings plus individual offsets.
SubjectProfile make_subject_profile(int index, const SceneLayout& layout, const SynthConfig& config,
                                    std::uint64_t seed);

/// Draws a trial duration from a gamma law with the configured mean,
/// clipped to [min, max].
double draw_trial_duration(const SynthConfig& config, std::uint64_t seed);

/// One trial seen through `lens_maps`. Head yaw alternates between the two
/// task bearings; gaze alternates gamma-dwell fixations and main-sequence
/// saccades; hit points come from intersecting the gaze ray with the room.
/// Throws ValidationError for a duration outside [18, 101] s or a
/// non-positive frame rate.
GeneratedTrial generate_trial(const SubjectProfile& profile, const SceneLayout& layout,
                              const DecompositionMaps& lens_maps, LensCondition lens, int trial_id,
                              double duration_s, double frame_rate, std::uint64_t seed,
                              const SynthConfig& config = {});

/// n_subjects x (5 lenses x trials_per_lens) trials in (subject, lens, trial)
/// order. Trials are generated in parallel; output does not depend on the
/// thread count.
std::vector<GeneratedTrial> generate_study(int n_subjects, int trials_per_lens,
                                           const std::map<LensCondition, DecompositionMaps>& maps,
                                           const SceneLayout& layout, const SynthConfig& config,
                                           std::uint64_t seed, std::vector<SubjectProfile>* profiles = nullptr);

}  // namespace palsim
