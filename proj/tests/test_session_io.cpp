#include <algorithm>
#include <filesystem>
#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "palsim/common.hpp"
#include "palsim/distortion_field.hpp"
#include "palsim/session_io.hpp"
#include "palsim/session_synth.hpp"

using namespace palsim;
namespace fs = std::filesystem;

namespace {

Session random_session(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  Session s;
  s.header.subject_id = "S07";
  s.header.lens_condition = LensCondition::minus2_add2;
  s.header.trial_id = 3;
  s.header.raw_rating = 4;
  s.header.age = 31;
  s.header.gender = "m";
  s.header.extra["operator"] = "jd";
  double t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    FrameSample f;
    t += 0.011 + 0.001 * std::abs(g(rng));
    f.t = t;
    f.head_pos = {g(rng), g(rng), g(rng)};
    f.head_rot = Quaternion{g(rng), g(rng), g(rng), g(rng)}.normalized();
    f.gaze_dir_right = {g(rng), g(rng), g(rng)};
    const double norm = std::sqrt(f.gaze_dir_right[0] * f.gaze_dir_right[0] + f.gaze_dir_right[1] * f.gaze_dir_right[1] +
                                  f.gaze_dir_right[2] * f.gaze_dir_right[2]);
    for (double& v : f.gaze_dir_right) v /= norm;
    f.hit_point = {g(rng), g(rng), g(rng)};
    f.valid = g(rng) > -2.0;
    s.frames.push_back(f);
  }
  s.frame_extra[2] = {{"pupil_mm", 3.5}};
  return s;
}

std::size_t error_line(const std::string& text) {
  try {
    decode_session(text);
  } catch (const FormatError& e) {
    return e.location();
  }
  return 0;
}

struct Study {
  std::map<LensCondition, DecompositionMaps> maps;
  std::vector<Session> sessions;
};

const Study& small_study() {
  static const Study s = [] {
    Study st;
    for (LensCondition c : kAllLensConditions) st.maps[c] = decompose(synth_pal_field(lens_spec_for(c), 101, 101, 1.0));
    SynthConfig cfg;
    cfg.mean_duration_s = 20.0;
    std::vector<SubjectProfile> profiles;
    const auto trials = generate_study(2, 1, st.maps, SceneLayout{}, cfg, 11, &profiles);
    for (const auto& t : trials) {
      const auto& p = *std::find_if(profiles.begin(), profiles.end(), [&](auto& q) { return q.id == t.subject_id; });
      st.sessions.push_back(session_from_trial(t, p));
    }
    return st;
  }();
  return s;
}

}  // namespace

TEST(SessionFormat, RoundTripIsLossless) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Session s = random_session(seed, 200);
    const std::string text = encode_session(s);
    const Session back = decode_session(text);
    EXPECT_EQ(back.header.subject_id, s.header.subject_id);
    EXPECT_EQ(back.header.lens_condition, s.header.lens_condition);
    EXPECT_EQ(back.header.raw_rating, s.header.raw_rating);
    EXPECT_EQ(back.header.extra, s.header.extra);
    ASSERT_EQ(back.frames.size(), s.frames.size());
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
      EXPECT_EQ(back.frames[i].t, s.frames[i].t);
      EXPECT_EQ(back.frames[i].head_pos, s.frames[i].head_pos);
      EXPECT_EQ(back.frames[i].head_rot.x, s.frames[i].head_rot.x);
      EXPECT_EQ(back.frames[i].gaze_dir_right, s.frames[i].gaze_dir_right);
      EXPECT_EQ(back.frames[i].hit_point, s.frames[i].hit_point);
      EXPECT_EQ(back.frames[i].valid, s.frames[i].valid);
    }
    EXPECT_EQ(back.frame_extra, s.frame_extra);
    EXPECT_EQ(encode_session(back), text);
  }
}

TEST(SessionFormat, FileRoundTrip) {
  const fs::path p = fs::temp_directory_path() / "palsim_test_session.jsonl";
  const Session s = random_session(9, 50);
  write_session(s, p);
  EXPECT_EQ(encode_session(read_session(p)), encode_session(s));
  fs::remove(p);
  EXPECT_THROW(read_session(p), std::exception);
}

TEST(SessionFormat, HeaderOnlyIsEmptyTrial) {
  Session s;
  s.header.subject_id = "S01";
  const std::string text = encode_session(s);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
  const Session back = decode_session(text);
  EXPECT_TRUE(back.frames.empty());
  EXPECT_EQ(back.header.subject_id, "S01");
}

TEST(SessionFormat, ErrorsCiteLines) {
  const Session s = random_session(1, 10);
  std::string text = encode_session(s);
  std::vector<std::string> lines;
  std::stringstream ss(text);
  for (std::string l; std::getline(ss, l);) lines.push_back(l);
  auto join = [](const std::vector<std::string>& v) {
    std::string o;
    for (const auto& l : v) o += l + "\n";
    return o;
  };

  // Line 7 holds frame 6; push its timestamp behind frame 5's.
  auto regress = lines;
  auto j = nlohmann::json::parse(regress[6]);
  j["t"] = s.frames[4].t - 0.001;
  regress[6] = j.dump();
  EXPECT_EQ(error_line(join(regress)), 7u);

  auto broken = lines;
  broken[3] = "{\"t\": 1.0,";
  EXPECT_EQ(error_line(join(broken)), 4u);

  auto missing = lines;
  j = nlohmann::json::parse(missing[2]);
  j.erase("hit_point");
  missing[2] = j.dump();
  EXPECT_EQ(error_line(join(missing)), 3u);

  auto schema = lines;
  j = nlohmann::json::parse(schema[0]);
  j["schema_version"] = 99;
  schema[0] = j.dump();
  EXPECT_EQ(error_line(join(schema)), 1u);

  auto lens = lines;
  j = nlohmann::json::parse(lens[0]);
  j["lens_condition"] = "plano/add9";
  lens[0] = j.dump();
  EXPECT_EQ(error_line(join(lens)), 1u);

  EXPECT_EQ(error_line(""), 1u);
}

TEST(FeatureCsv, RoundTripAndColumnErrors) {
  FeatureTable t;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 10);
  for (int i = 0; i < 6; ++i) {
    FeatureRow r;
    r.subject_id = "S0" + std::to_string(i / 3);
    r.lens_condition = kAllLensConditions[i % 5];
    r.trial_id = i;
    r.values.resize(feature_columns().size() - 1);
    for (double& v : r.values) v = g(rng);
    r.normalized_rating = std::abs(g(rng));
    t.rows.push_back(r);
  }
  const std::string csv = encode_feature_csv(t);
  const FeatureTable back = decode_feature_csv(csv);
  ASSERT_EQ(back.rows.size(), t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].values, t.rows[i].values);
    EXPECT_EQ(back.rows[i].normalized_rating, t.rows[i].normalized_rating);
    EXPECT_EQ(back.rows[i].lens_condition, t.rows[i].lens_condition);
  }
  EXPECT_EQ(encode_feature_csv(back), csv);

  std::string no_target = csv;
  no_target.replace(no_target.find(",normalized_rating"), 18, "");
  try {
    decode_feature_csv(no_target);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("normalized_rating"), std::string::npos);
  }
  std::string bad_cell = csv;
  const std::size_t third_line = bad_cell.find('\n', bad_cell.find('\n') + 1) + 1;
  bad_cell.replace(bad_cell.find(',', bad_cell.find(',', bad_cell.find(',', third_line) + 1) + 1) + 1, 0, "x");
  try {
    decode_feature_csv(bad_cell);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.location(), 3u);
  }
}

TEST(Dataset, BuildsRowsInOrderAndIsIdempotent) {
  const auto& st = small_study();
  const auto a = build_dataset(st.sessions, st.maps);
  EXPECT_TRUE(a.rejected.empty());
  ASSERT_EQ(a.table.rows.size(), 10u);
  for (std::size_t i = 1; i < a.table.rows.size(); ++i) {
    const auto& p = a.table.rows[i - 1];
    const auto& q = a.table.rows[i];
    EXPECT_LE(std::tie(p.subject_id, p.lens_condition, p.trial_id), std::tie(q.subject_id, q.lens_condition, q.trial_id));
  }
  // Shuffled input order gives the same bytes.
  auto shuffled = st.sessions;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(4));
  const auto b = build_dataset(shuffled, st.maps);
  EXPECT_EQ(encode_feature_csv(a.table), encode_feature_csv(b.table));

  // Exposure columns agree with a direct recomputation from the session.
  const auto& cols = feature_columns();
  const auto col = [&](const char* name) {
    return static_cast<std::size_t>(std::find(cols.begin(), cols.end(), name) - cols.begin());
  };
  for (const auto& row : a.table.rows) {
    const auto& s = *std::find_if(st.sessions.begin(), st.sessions.end(), [&](const Session& x) {
      return x.header.subject_id == row.subject_id && x.header.lens_condition == row.lens_condition &&
             x.header.trial_id == row.trial_id;
    });
    const auto e = observed_stats(s.frames, st.maps.at(row.lens_condition));
    EXPECT_EQ(row.values[col("displacement_mean")], e.displacement_deg.mean);
    EXPECT_EQ(row.values[col("skew_sd")], e.skew_deg.sd);
    EXPECT_EQ(row.values[col("aspect_sd")], e.aspect.sd);
    if (row.lens_condition == LensCondition::baseline) EXPECT_EQ(row.values[col("displacement_mean")], 0.0);
  }
}

TEST(Dataset, MissingBaselineRejectsSubject) {
  const auto& st = small_study();
  std::vector<Session> sessions;
  for (const auto& s : st.sessions)
    if (!(s.header.subject_id == "S02" && s.header.lens_condition == LensCondition::baseline)) sessions.push_back(s);
  const auto d = build_dataset(sessions, st.maps);
  EXPECT_EQ(d.table.rows.size(), 5u);
  ASSERT_EQ(d.rejected.size(), 4u);
  for (const auto& r : d.rejected) {
    EXPECT_EQ(r.subject_id, "S02");
    EXPECT_EQ(r.reason, "missing baseline");
  }
}

TEST(Dataset, BrokenTrialIsSkippedNotFatal) {
  const auto& st = small_study();
  auto sessions = st.sessions;
  sessions[3].frames.resize(3);
  sessions[4].header.raw_rating.reset();
  const auto d = build_dataset(sessions, st.maps);
  EXPECT_EQ(d.table.rows.size(), 8u);
  EXPECT_EQ(d.rejected.size(), 2u);
}
