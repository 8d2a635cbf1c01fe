#include "palsim/session_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "palsim/circular.hpp"
#include "palsim/common.hpp"
#include "palsim/head_pose.hpp"

namespace palsim {

namespace {

constexpr double kTremorDeg = 0.03;
constexpr double kGazeAzSdDeg = 9.0;
constexpr double kGazeElMeanDeg = -18.0;
constexpr double kGazeElSdDeg = 7.0;
constexpr double kMinSaccadeDeg = 4.0;

std::mt19937_64 make_rng(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (std::uint64_t p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / n, v[1] / n, v[2] / n};
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

// Headset frame: x right, y up, z forward.
Vec3 eye_direction(double az_deg, double el_deg) {
  const double az = az_deg * kDegToRad, el = el_deg * kDegToRad;
  return {std::sin(az) * std::cos(el), std::sin(el), std::cos(az) * std::cos(el)};
}

Vec3 slerp(const Vec3& a, const Vec3& b, double f) {
  const double omega = std::acos(std::clamp(dot(a, b), -1.0, 1.0));
  if (omega < 1e-12) return a;
  const double s = std::sin(omega);
  const double wa = std::sin((1.0 - f) * omega) / s, wb = std::sin(f * omega) / s;
  return normalized({wa * a[0] + wb * b[0], wa * a[1] + wb * b[1], wa * a[2] + wb * b[2]});
}

double min_jerk(double u) { return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u); }

struct HeadKey {
  double t_start, t_hold_end, t_move_end;  // hold, then move to the next key
  EulerAngles pose;
};

struct EyeSegment {
  double t_start, t_end;
  Vec3 from, to;
  bool saccade;
};

Vec3 room_hit(const Vec3& origin, const Vec3& dir, const SceneLayout& layout) {
  double t_exit = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 0.0) t_exit = std::min(t_exit, (layout.room_max[a] - origin[a]) / dir[a]);
    else if (dir[a] < 0.0) t_exit = std::min(t_exit, (layout.room_min[a] - origin[a]) / dir[a]);
  }
  return {origin[0] + t_exit * dir[0], origin[1] + t_exit * dir[1], origin[2] + t_exit * dir[2]};
}

}  // namespace

double SceneLayout::bearing(const Vec3& p) const noexcept {
  // Analysis frame: x forward = world z, y left = -world x.
  return std::atan2(-(p[0] - head_origin[0]), p[2] - head_origin[2]);
}

void SceneLayout::validate() const {
  auto inside = [&](const Vec3& p) {
    for (int a = 0; a < 3; ++a)
      if (!(p[a] >= room_min[a] && p[a] <= room_max[a])) return false;
    return true;
  };
  if (!inside(head_origin)) throw ValidationError("head origin outside room", "head_origin");
  if (!inside(cube_spawn)) throw ValidationError("cube spawn outside room", "cube_spawn");
  if (!inside(plate)) throw ValidationError("plate outside room", "plate");
  if (!inside(whiteboard)) throw ValidationError("whiteboard outside room", "whiteboard");
}

double main_sequence_peak_velocity(double amplitude_deg) noexcept {
  return 500.0 * (1.0 - std::exp(-amplitude_deg / 14.0));
}

SubjectProfile make_subject_profile(int index, const SceneLayout& layout, const SynthConfig& config,
                                    std::uint64_t seed) {
  if (config.rating_bias_min < 0 || config.rating_bias_max > 7 || config.rating_bias_min > config.rating_bias_max)
    throw ValidationError("rating bias range must satisfy 0 <= min <= max <= 7", "rating_bias_min");
  auto rng = make_rng({seed, 0x5b1ec7ULL, static_cast<std::uint64_t>(index)});
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  SubjectProfile p;
  char id[16];
  std::snprintf(id, sizeof id, "S%02d", index + 1);
  p.id = id;
  p.age = std::floor(20.0 + 15.0 * u01(rng));
  p.gender = u01(rng) < 0.5 ? "f" : "m";
  const double plate_side = 0.5 * (layout.bearing(layout.plate) + layout.bearing(layout.whiteboard));
  p.yaw_peaks = {layout.bearing(layout.cube_spawn) + 0.05 * n01(rng), plate_side + 0.05 * n01(rng)};
  p.pitch_modes = {-0.33 + 0.03 * n01(rng), -0.05 + 0.03 * n01(rng)};
  p.cube_side_weight = 0.5 + 0.18 * u01(rng);
  p.yaw_kappa = 25.0 + 35.0 * u01(rng);
  p.roll_kappa = 200.0 + 600.0 * u01(rng);
  p.rating_bias = std::uniform_int_distribution<int>(config.rating_bias_min, config.rating_bias_max)(rng);
  p.sensitivity = 0.8 + 0.4 * u01(rng);
  p.rating_noise_sd = config.rating_noise_sd;
  return p;
}

double draw_trial_duration(const SynthConfig& config, std::uint64_t seed) {
  auto rng = make_rng({seed, 0xd0a7ULL});
  const double shape = 9.0;
  std::gamma_distribution<double> g(shape, config.mean_duration_s / shape);
  return std::clamp(g(rng), config.min_duration_s, config.max_duration_s);
}

GeneratedTrial generate_trial(const SubjectProfile& profile, const SceneLayout& layout,
                              const DecompositionMaps& lens_maps, LensCondition lens, int trial_id,
                              double duration_s, double frame_rate, std::uint64_t seed, const SynthConfig& config) {
  if (!(frame_rate > 0.0) || !std::isfinite(frame_rate)) throw ValidationError("frame rate must be positive", "frame_rate");
  if (!(duration_s >= 18.0 && duration_s <= 101.0))
    throw ValidationError("trial duration must lie in [18, 101] s", "duration_s");
  layout.validate();

  auto rng = make_rng({seed});
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double dt = 1.0 / frame_rate;
  const std::size_t n_frames = static_cast<std::size_t>(std::floor(duration_s * frame_rate)) + 1;
  const double t_end = static_cast<double>(n_frames - 1) * dt;

  // Head: hold a task-directed pose, then a minimum-jerk move to the next.
  std::vector<HeadKey> head;
  {
    std::gamma_distribution<double> hold(3.0, 0.9);
    double t = 0.0;
    auto draw_pose = [&] {
      const int m = u01(rng) < profile.cube_side_weight ? 0 : 1;
      return EulerAngles{sample_vonmises(rng, 0.0, profile.roll_kappa), sample_vonmises(rng, profile.pitch_modes[m], 60.0),
                         sample_vonmises(rng, profile.yaw_peaks[m], profile.yaw_kappa)};
    };
    EulerAngles pose = draw_pose();
    while (t <= t_end) {
      const EulerAngles next = draw_pose();
      const double hold_end = t + 0.5 + hold(rng);
      const double move_end = hold_end + 0.35 + 0.25 * std::abs(next.yaw - pose.yaw);
      head.push_back({t, hold_end, move_end, pose});
      pose = next;
      t = move_end;
    }
    head.push_back({t, t + 1e9, t + 1e9, pose});
  }

  // Eyes: fixation dwell, then a saccade of at least 4 degrees.
  std::vector<EyeSegment> eye;
  std::vector<Saccade> truth;
  {
    std::gamma_distribution<double> dwell(2.0, 0.1);
    auto draw_target = [&] {
      const double az = std::clamp(kGazeAzSdDeg * n01(rng), -30.0, 30.0);
      const double el = std::clamp(kGazeElMeanDeg + kGazeElSdDeg * n01(rng), -40.0, 10.0);
      return std::make_pair(az, el);
    };
    auto cur = draw_target();
    double t = 0.0;
    while (t <= t_end) {
      const Vec3 here = eye_direction(cur.first, cur.second);
      const double fix_end = t + 0.15 + dwell(rng);
      eye.push_back({t, fix_end, here, here, false});
      std::pair<double, double> next;
      double amp = 0.0;
      for (int attempt = 0; attempt < 100 && amp < kMinSaccadeDeg; ++attempt) {
        next = draw_target();
        amp = std::acos(std::clamp(dot(here, eye_direction(next.first, next.second)), -1.0, 1.0)) * kRadToDeg;
      }
      const double v = main_sequence_peak_velocity(amp);
      const double sac_end = fix_end + 2.0 * amp / v;
      eye.push_back({fix_end, sac_end, here, eye_direction(next.first, next.second), true});
      if (sac_end <= t_end) {
        Saccade s;
        s.start_t = fix_end;
        s.end_t = sac_end;
        s.amplitude_deg = amp;
        s.peak_velocity_dps = v;
        s.peak_raw_velocity_dps = v;
        s.first_frame = static_cast<std::size_t>(std::ceil(fix_end * frame_rate));
        s.last_frame = static_cast<std::size_t>(std::floor(sac_end * frame_rate));
        truth.push_back(s);
      }
      cur = next;
      t = sac_end;
    }
  }

  GeneratedTrial out;
  out.subject_id = profile.id;
  out.lens_condition = lens;
  out.trial_id = trial_id;
  out.frame_rate = frame_rate;
  out.true_saccades = std::move(truth);
  out.frames.resize(n_frames);

  const double tau = 0.5;
  std::array<double, 3> jitter{};  // roll, pitch, yaw OU state
  const std::array<double, 3> jitter_sd{0.004, 0.01, 0.015};
  Vec3 sway{};
  std::size_t hk = 0, ek = 0;
  for (std::size_t i = 0; i < n_frames; ++i) {
    const double t = static_cast<double>(i) * dt;
    for (int a = 0; a < 3; ++a) jitter[a] += -jitter[a] * dt / tau + jitter_sd[a] * std::sqrt(2.0 * dt / tau) * n01(rng);
    for (int a = 0; a < 3; ++a) sway[a] += -sway[a] * dt / tau + 0.01 * std::sqrt(2.0 * dt / tau) * n01(rng);

    while (t >= head[hk].t_move_end) ++hk;
    EulerAngles pose = head[hk].pose;
    if (t > head[hk].t_hold_end) {
      const EulerAngles& to = head[hk + 1].pose;
      const double s = min_jerk((t - head[hk].t_hold_end) / (head[hk].t_move_end - head[hk].t_hold_end));
      pose.roll += s * (to.roll - pose.roll);
      pose.pitch += s * (to.pitch - pose.pitch);
      pose.yaw += s * (to.yaw - pose.yaw);
    }
    pose.roll = wrap_angle(pose.roll + jitter[0]);
    pose.pitch = wrap_angle(pose.pitch + jitter[1]);
    pose.yaw = wrap_angle(pose.yaw + jitter[2]);

    while (t >= eye[ek].t_end) ++ek;
    const EyeSegment& seg = eye[ek];
    Vec3 g = seg.from;
    if (seg.saccade) {
      // Raised-cosine velocity profile.
      const double u = (t - seg.t_start) / (seg.t_end - seg.t_start);
      g = slerp(seg.from, seg.to, u - std::sin(kTwoPi * u) / kTwoPi);
    }
    const double tremor = kTremorDeg * kDegToRad;
    g = normalized({g[0] + tremor * n01(rng), g[1] + tremor * n01(rng), g[2]});

    FrameSample& f = out.frames[i];
    f.t = t;
    f.head_pos = {layout.head_origin[0] + sway[0], layout.head_origin[1] + sway[1], layout.head_origin[2] + sway[2]};
    f.head_rot = euler_to_quat(pose);
    f.gaze_dir_right = g;
    f.hit_point = room_hit(f.head_pos, normalized(rotate(f.head_rot, g)), layout);
    f.valid = true;
  }

  out.true_exposure = observed_stats(out.frames, lens_maps);
  const RatingWeights& w = config.weights;
  out.true_score = profile.sensitivity * (w.displacement_mean * out.true_exposure.displacement_deg.mean +
                                          w.skew_sd * out.true_exposure.skew_deg.sd +
                                          w.aspect_sd * out.true_exposure.aspect.sd);
  double r = profile.rating_bias + out.true_score;
  if (profile.rating_noise_sd > 0.0) r += profile.rating_noise_sd * n01(rng);
  out.raw_rating = static_cast<int>(std::clamp(std::round(r), 0.0, 7.0));
  return out;
}

std::vector<GeneratedTrial> generate_study(int n_subjects, int trials_per_lens,
                                           const std::map<LensCondition, DecompositionMaps>& maps,
                                           const SceneLayout& layout, const SynthConfig& config, std::uint64_t seed,
                                           std::vector<SubjectProfile>* profiles_out) {
  if (n_subjects < 1) throw ValidationError("need at least one subject", "n_subjects");
  if (trials_per_lens < 1) throw ValidationError("need at least one trial per lens", "trials_per_lens");
  for (LensCondition c : kAllLensConditions)
    if (!maps.count(c)) throw ValidationError("no maps for lens " + lens_name(c), "lenses");

  std::vector<SubjectProfile> profiles;
  for (int s = 0; s < n_subjects; ++s) profiles.push_back(make_subject_profile(s, layout, config, seed));

  const int per_subject = 5 * trials_per_lens;
  const int total = n_subjects * per_subject;
  std::vector<GeneratedTrial> out(static_cast<std::size_t>(total));
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < total; ++k) {
    const int s = k / per_subject, j = k % per_subject;
    const LensCondition lens = kAllLensConditions[j / trials_per_lens];
    const std::uint64_t trial_seed =
        make_rng({seed, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(j)})();
    const double duration = draw_trial_duration(config, trial_seed);
    out[static_cast<std::size_t>(k)] = generate_trial(profiles[static_cast<std::size_t>(s)], layout, maps.at(lens), lens,
                                                      j, duration, config.frame_rate, trial_seed, config);
  }
  if (profiles_out) *profiles_out = std::move(profiles);
  return out;
}

}  // namespace palsim
