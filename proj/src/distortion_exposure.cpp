#include "palsim/distortion_exposure.hpp"

#include <array>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "palsim/common.hpp"

namespace palsim {

std::optional<std::pair<double, double>> gaze_to_tangent(const Vec3& gaze) noexcept {
  if (!(gaze[2] > 0.0)) return std::nullopt;
  return std::make_pair(gaze[0] / gaze[2], gaze[1] / gaze[2]);
}

ObservedDistortionStats observed_stats(std::span<const FrameSample> frames, const DecompositionMaps& maps) {
  const std::array<const Grid*, 5> grids = {&maps.displacement_deg, &maps.magnification, &maps.aspect,
                                            &maps.skew_deg, &maps.rotation_deg};
  std::array<std::vector<double>, 5> samples;
  ObservedDistortionStats out;
  for (const auto& f : frames) {
    if (!f.valid) {
      ++out.n_invalid;
      continue;
    }
    const auto xy = gaze_to_tangent(f.gaze_dir_right);
    std::array<double, 5> v{};
    bool ok = xy.has_value();
    for (std::size_t k = 0; k < grids.size() && ok; ++k) {
      const auto s = sample_bilinear(*grids[k], maps.domain_half_extent, xy->first, xy->second);
      ok = s && std::isfinite(*s);
      if (ok) v[k] = std::abs(*s);
    }
    if (!ok) {
      ++out.n_out_of_domain;
      continue;
    }
    for (std::size_t k = 0; k < grids.size(); ++k) samples[k].push_back(v[k]);
    ++out.n_valid_frames;
  }
  if (out.empty()) return out;

  const std::array<MapStats*, 5> dest = {&out.displacement_deg, &out.magnification, &out.aspect, &out.skew_deg,
                                         &out.rotation_deg};
  const double n = static_cast<double>(out.n_valid_frames);
  for (std::size_t k = 0; k < grids.size(); ++k) {
    double sum = 0.0;
    for (double x : samples[k]) sum += x;
    const double mean = sum / n;
    double ss = 0.0;
    for (double x : samples[k]) ss += (x - mean) * (x - mean);
    *dest[k] = {mean, std::sqrt(ss / n)};
  }
  return out;
}

std::string lens_name(LensCondition c) {
  switch (c) {
    case LensCondition::baseline: return "baseline";
    case LensCondition::plano_add2: return "plano/add2";
    case LensCondition::plano_add3: return "plano/add3";
    case LensCondition::minus2_add2: return "minus2/add2";
    case LensCondition::plus2_add2: return "plus2/add2";
  }
  return "baseline";
}

LensCondition parse_lens_condition(const std::string& name) {
  for (LensCondition c : kAllLensConditions)
    if (lens_name(c) == name) return c;
  throw ValidationError("unknown lens condition '" + name + "'", "lens_condition");
}

LensSpec lens_spec_for(LensCondition c) {
  LensSpec s;
  switch (c) {
    case LensCondition::baseline: break;
    case LensCondition::plano_add2: s.addition_power = 2.0; break;
    case LensCondition::plano_add3: s.addition_power = 3.0; break;
    case LensCondition::minus2_add2: s.sphere_power = -2.0; s.addition_power = 2.0; break;
    case LensCondition::plus2_add2: s.sphere_power = 2.0; s.addition_power = 2.0; break;
  }
  return s;
}

double rescale_rating(int raw) { return raw * 10.0 / 7.0 + 1.0; }

void normalize_ratings(std::vector<RatingRecord>& records) {
  // Running mean, so identical baselines give exactly that value.
  std::map<std::string, std::pair<double, int>> baseline;
  for (const auto& r : records) {
    if (r.raw_rating < 0 || r.raw_rating > 7)
      throw ValidationError("raw rating outside 0-7 for subject " + r.subject_id, "raw_rating");
    if (r.lens_condition != LensCondition::baseline) continue;
    auto& [mean, n] = baseline[r.subject_id];
    ++n;
    mean += (rescale_rating(r.raw_rating) - mean) / n;
  }
  for (auto& r : records) {
    const auto it = baseline.find(r.subject_id);
    if (it == baseline.end()) throw ValidationError("missing baseline for subject " + r.subject_id, r.subject_id);
    r.normalized_rating = rescale_rating(r.raw_rating) / it->second.first;
  }
}

nlohmann::json to_json(const ObservedDistortionStats& s) {
  auto ms = [](const MapStats& m) { return nlohmann::json{{"mean", m.mean}, {"sd", m.sd}}; };
  return {{"displacement_deg", ms(s.displacement_deg)},
          {"magnification", ms(s.magnification)},
          {"aspect", ms(s.aspect)},
          {"skew_deg", ms(s.skew_deg)},
          {"rotation_deg", ms(s.rotation_deg)},
          {"n_valid_frames", s.n_valid_frames},
          {"n_out_of_domain", s.n_out_of_domain},
          {"n_invalid", s.n_invalid}};
}

}  // namespace palsim
