#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "palsim/distortion_field.hpp"
#include "palsim/gaze_events.hpp"

namespace palsim {

struct MapStats {
  double mean = 0.0;
  double sd = 0.0;  // population
};

/// Absolute map values sampled at the foveal gaze point, summarised per trial.
struct ObservedDistortionStats {
  MapStats displacement_deg;
  MapStats magnification;
  MapStats aspect;
  MapStats skew_deg;
  MapStats rotation_deg;
  std::size_t n_valid_frames = 0;
  std::size_t n_out_of_domain = 0;  // includes NaN (degenerate) samples
  std::size_t n_invalid = 0;        // tracker-invalid frames

  bool empty() const noexcept { return n_valid_frames == 0; }
};

/// Projects a headset-frame gaze direction onto the z = 1 tangent plane.
/// nullopt for directions at or behind the eye plane.
std::optional<std::pair<double, double>> gaze_to_tangent(const Vec3& gaze) noexcept;

/// Check `empty()` on the result: zero usable frames leaves all stats at 0.
ObservedDistortionStats observed_stats(std::span<const FrameSample> frames, const DecompositionMaps& maps);

enum class LensCondition { baseline, plano_add2, plano_add3, minus2_add2, plus2_add2 };

inline constexpr LensCondition kAllLensConditions[] = {LensCondition::baseline, LensCondition::plano_add2,
                                                       LensCondition::plano_add3, LensCondition::minus2_add2,
                                                       LensCondition::plus2_add2};

/// "baseline", "plano/add2", "plano/add3", "minus2/add2", "plus2/add2".
std::string lens_name(LensCondition c);
/// Throws ValidationError for unknown names.
LensCondition parse_lens_condition(const std::string& name);
/// Prescription of each condition; baseline is a zero-power lens.
LensSpec lens_spec_for(LensCondition c);

struct RatingRecord {
  std::string subject_id;
  LensCondition lens_condition = LensCondition::baseline;
  int raw_rating = 0;
  double normalized_rating = 0.0;
};

/// raw * 10/7 + 1, mapping the 0-7 scale onto 1-11.
double rescale_rating(int raw);

/// Fills normalized_rating = R / mean baseline R of the same subject.
/// Throws ValidationError naming the subject when it has no baseline trial,
/// or for a raw rating outside 0-7.
void normalize_ratings(std::vector<RatingRecord>& records);

nlohmann::json to_json(const ObservedDistortionStats& s);

}  // namespace palsim
