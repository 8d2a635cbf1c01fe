#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "palsim/distortion_field.hpp"
#include "palsim/head_pose.hpp"
#include "palsim/session_synth.hpp"

using namespace palsim;

namespace {

const DecompositionMaps& maps_for(LensCondition c) {
  static std::map<LensCondition, DecompositionMaps> cache;
  auto it = cache.find(c);
  if (it == cache.end()) it = cache.emplace(c, decompose(synth_pal_field(lens_spec_for(c), 101, 101, 1.0))).first;
  return it->second;
}

}  // namespace

TEST(Synth, BaselineWithoutNoiseRatesTheBias) {
  SceneLayout layout;
  SynthConfig cfg;
  cfg.rating_noise_sd = 0.0;
  for (int s = 0; s < 6; ++s) {
    const auto p = make_subject_profile(s, layout, cfg, 3);
    EXPECT_GE(p.rating_bias, cfg.rating_bias_min);
    EXPECT_LE(p.rating_bias, cfg.rating_bias_max);
    const auto t = generate_trial(p, layout, maps_for(LensCondition::baseline), LensCondition::baseline, 0, 20.0,
                                  90.0, 100 + s, cfg);
    EXPECT_EQ(t.raw_rating, p.rating_bias);
    EXPECT_NEAR(t.true_score, 0.0, 1e-12);
  }
}

TEST(Synth, SameSeedSameFrames) {
  SceneLayout layout;
  SynthConfig cfg;
  const auto p = make_subject_profile(0, layout, cfg, 1);
  const auto& m = maps_for(LensCondition::plano_add2);
  const auto a = generate_trial(p, layout, m, LensCondition::plano_add2, 1, 25.0, 90.0, 77, cfg);
  const auto b = generate_trial(p, layout, m, LensCondition::plano_add2, 1, 25.0, 90.0, 77, cfg);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  EXPECT_EQ(a.frames.size(), static_cast<std::size_t>(25.0 * 90.0) + 1);
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    EXPECT_EQ(a.frames[i].gaze_dir_right, b.frames[i].gaze_dir_right);
    EXPECT_EQ(a.frames[i].hit_point, b.frames[i].hit_point);
    EXPECT_EQ(a.frames[i].head_rot.w, b.frames[i].head_rot.w);
  }
  EXPECT_EQ(a.raw_rating, b.raw_rating);
  const auto c = generate_trial(p, layout, m, LensCondition::plano_add2, 1, 25.0, 90.0, 78, cfg);
  EXPECT_NE(c.frames[500].gaze_dir_right, a.frames[500].gaze_dir_right);
}

TEST(Synth, InvalidArguments) {
  SceneLayout layout;
  SynthConfig cfg;
  const auto p = make_subject_profile(0, layout, cfg, 1);
  const auto& m = maps_for(LensCondition::baseline);
  EXPECT_THROW(generate_trial(p, layout, m, LensCondition::baseline, 0, 10.0, 90.0, 1, cfg), ValidationError);
  EXPECT_THROW(generate_trial(p, layout, m, LensCondition::baseline, 0, 120.0, 90.0, 1, cfg), ValidationError);
  EXPECT_THROW(generate_trial(p, layout, m, LensCondition::baseline, 0, 30.0, 0.0, 1, cfg), ValidationError);
  cfg.rating_bias_min = 3;
  cfg.rating_bias_max = 2;
  EXPECT_THROW(make_subject_profile(0, layout, cfg, 1), ValidationError);
}

TEST(Synth, SaccadesAreRecoveredByDetector) {
  SceneLayout layout;
  SynthConfig cfg;
  std::vector<Saccade> truth, found;
  for (int s = 0; s < 4; ++s) {
    const auto p = make_subject_profile(s, layout, cfg, 9);
    const auto t = generate_trial(p, layout, maps_for(LensCondition::plano_add3), LensCondition::plano_add3, 0, 36.0,
                                  90.0, 200 + s, cfg);
    const auto det = detect_saccades(t.frames);
    const auto m = oracle::match_saccades(t.true_saccades, det, 1.0 / 90.0);
    EXPECT_LE(m.count_error(), 0.10) << "subject " << s;
    EXPECT_LE(std::abs(m.amplitude_bias_deg), 0.5) << "subject " << s;
  }
}

TEST(Synth, YawIsBimodalAtConfiguredBearings) {
  SceneLayout layout;
  SynthConfig cfg;
  const auto p = make_subject_profile(2, layout, cfg, 4);
  const int bins = 126;  // 0.05 rad
  std::vector<double> h(bins, 0.0);
  for (int k = 0; k < 4; ++k) {
    const auto t =
        generate_trial(p, layout, maps_for(LensCondition::baseline), LensCondition::baseline, k, 60.0, 90.0, 50 + k, cfg);
    for (const auto& f : t.frames) {
      const double yaw = quat_to_euler(f.head_rot).yaw;
      const int b = std::clamp(static_cast<int>((yaw + M_PI) / (2 * M_PI) * bins), 0, bins - 1);
      h[static_cast<std::size_t>(b)] += 1.0;
    }
  }
  auto peak_in = [&](double lo, double hi) {
    int best = -1;
    for (int b = 0; b < bins; ++b) {
      const double c = -M_PI + (b + 0.5) * 2 * M_PI / bins;
      if (c < lo || c > hi) continue;
      if (best < 0 || h[static_cast<std::size_t>(b)] > h[static_cast<std::size_t>(best)]) best = b;
    }
    return -M_PI + (best + 0.5) * 2 * M_PI / bins;
  };
  EXPECT_NEAR(peak_in(-M_PI, 0.0), p.yaw_peaks[0], 0.2);
  EXPECT_NEAR(peak_in(0.0, M_PI), p.yaw_peaks[1], 0.2);
  EXPECT_NEAR(p.yaw_peaks[0], -1.65, 0.3);
  EXPECT_NEAR(p.yaw_peaks[1], 1.76, 0.3);
}

TEST(Synth, MeanDurationMatchesConfig) {
  SynthConfig cfg;
  double sum = 0.0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const double d = draw_trial_duration(cfg, static_cast<std::uint64_t>(i));
    EXPECT_GE(d, 18.0);
    EXPECT_LE(d, 101.0);
    sum += d;
  }
  EXPECT_NEAR(sum / n, 36.0, 1.0);
  cfg.mean_duration_s = 50.0;
  sum = 0.0;
  for (int i = 0; i < n; ++i) sum += draw_trial_duration(cfg, static_cast<std::uint64_t>(i));
  EXPECT_NEAR(sum / n, 50.0, 1.5);
}

TEST(Synth, StudyOrderAndThreadIndependence) {
  std::map<LensCondition, DecompositionMaps> maps;
  for (LensCondition c : kAllLensConditions) maps[c] = maps_for(c);
  SynthConfig cfg;
  cfg.mean_duration_s = 20.0;
  std::vector<SubjectProfile> profiles;
  const auto study = generate_study(2, 1, maps, SceneLayout{}, cfg, 5, &profiles);
  ASSERT_EQ(study.size(), 10u);
  ASSERT_EQ(profiles.size(), 2u);
  EXPECT_EQ(study[0].subject_id, "S01");
  EXPECT_EQ(study[5].subject_id, "S02");
  EXPECT_EQ(study[1].lens_condition, LensCondition::plano_add2);
  const auto again = generate_study(2, 1, maps, SceneLayout{}, cfg, 5);
  for (std::size_t i = 0; i < study.size(); ++i) {
    EXPECT_EQ(study[i].raw_rating, again[i].raw_rating);
    EXPECT_EQ(study[i].frames.back().gaze_dir_right, again[i].frames.back().gaze_dir_right);
  }
}
