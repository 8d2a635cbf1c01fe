#include "palsim/session_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "palsim/common.hpp"
#include "palsim/field_io.hpp"
#include "palsim/head_pose.hpp"

namespace palsim {

namespace {

const std::set<std::string> kHeaderKeys = {"schema_version", "subject_id", "lens_condition", "trial_id",
                                           "frame_rate",     "raw_rating", "age",            "gender"};
const std::set<std::string> kFrameKeys = {"t", "head_pos", "head_rot", "gaze_dir_right", "hit_point", "valid"};

// Shortest representation that parses back to the same double.
void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

template <std::size_t N>
void append_array(std::string& out, const char* key, const std::array<double, N>& v) {
  out += ",\"";
  out += key;
  out += "\":[";
  for (std::size_t i = 0; i < N; ++i) {
    if (i) out += ',';
    append_double(out, v[i]);
  }
  out += ']';
}

[[noreturn]] void fail(const std::string& what, std::size_t line) {
  throw FormatError("line " + std::to_string(line) + ": " + what, line);
}

const nlohmann::json& member(const nlohmann::json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) fail(std::string("missing key '") + key + "'", line);
  return *it;
}

double number(const nlohmann::json& obj, const char* key, std::size_t line) {
  const auto& v = member(obj, key, line);
  if (!v.is_number()) fail(std::string("key '") + key + "' must be a number", line);
  return v.get<double>();
}

template <std::size_t N>
std::array<double, N> number_array(const nlohmann::json& obj, const char* key, std::size_t line) {
  const auto& v = member(obj, key, line);
  if (!v.is_array() || v.size() != N) fail(std::string("key '") + key + "' must be an array of " + std::to_string(N), line);
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!v[i].is_number()) fail(std::string("key '") + key + "' must hold numbers", line);
    out[i] = v[i].get<double>();
  }
  return out;
}

std::vector<double> valid_angles(const std::vector<FrameSample>& frames, double EulerAngles::*which) {
  std::vector<double> out;
  out.reserve(frames.size());
  for (const auto& f : frames)
    if (f.valid) out.push_back(quat_to_euler(f.head_rot).*which);
  return out;
}

}  // namespace

std::string encode_session(const Session& s) {
  nlohmann::json h = s.header.extra.is_object() ? s.header.extra : nlohmann::json::object();
  h["schema_version"] = s.header.schema_version;
  h["subject_id"] = s.header.subject_id;
  h["lens_condition"] = lens_name(s.header.lens_condition);
  h["trial_id"] = s.header.trial_id;
  h["frame_rate"] = s.header.frame_rate;
  if (s.header.raw_rating) h["raw_rating"] = *s.header.raw_rating;
  if (s.header.age) h["age"] = *s.header.age;
  if (s.header.gender) h["gender"] = *s.header.gender;

  std::string out = h.dump();
  out += '\n';
  out.reserve(out.size() + s.frames.size() * 320);
  for (std::size_t i = 0; i < s.frames.size(); ++i) {
    const FrameSample& f = s.frames[i];
    out += "{\"t\":";
    append_double(out, f.t);
    append_array(out, "head_pos", f.head_pos);
    append_array(out, "head_rot", std::array<double, 4>{f.head_rot.w, f.head_rot.x, f.head_rot.y, f.head_rot.z});
    append_array(out, "gaze_dir_right", f.gaze_dir_right);
    append_array(out, "hit_point", f.hit_point);
    out += f.valid ? ",\"valid\":true" : ",\"valid\":false";
    const auto extra = s.frame_extra.find(i);
    if (extra != s.frame_extra.end()) {
      for (const auto& [k, v] : extra->second.items()) {
        out += ',';
        out += nlohmann::json(k).dump();
        out += ':';
        out += v.dump();
      }
    }
    out += "}\n";
  }
  return out;
}

Session decode_session(const std::string& text) {
  Session s;
  std::size_t line_no = 0, pos = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(std::string("malformed JSON: ") + e.what(), line_no);
    }
    if (!j.is_object()) fail("expected a JSON object", line_no);

    if (!have_header) {
      have_header = true;
      SessionHeader& h = s.header;
      const double version = number(j, "schema_version", line_no);
      if (version != kSessionSchemaVersion) fail("unsupported schema_version " + member(j, "schema_version", line_no).dump(), line_no);
      const auto& subject = member(j, "subject_id", line_no);
      if (!subject.is_string()) fail("subject_id must be a string", line_no);
      h.subject_id = subject.get<std::string>();
      const auto& lens = member(j, "lens_condition", line_no);
      if (!lens.is_string()) fail("lens_condition must be a string", line_no);
      try {
        h.lens_condition = parse_lens_condition(lens.get<std::string>());
      } catch (const ValidationError& e) {
        fail(e.what(), line_no);
      }
      const auto& trial = member(j, "trial_id", line_no);
      if (!trial.is_number_integer()) fail("trial_id must be an integer", line_no);
      h.trial_id = trial.get<int>();
      h.frame_rate = number(j, "frame_rate", line_no);
      if (!(h.frame_rate > 0.0)) fail("frame_rate must be positive", line_no);
      if (j.contains("raw_rating")) {
        if (!j["raw_rating"].is_number_integer()) fail("raw_rating must be an integer", line_no);
        h.raw_rating = j["raw_rating"].get<int>();
      }
      if (j.contains("age")) h.age = number(j, "age", line_no);
      if (j.contains("gender")) {
        if (!j["gender"].is_string()) fail("gender must be a string", line_no);
        h.gender = j["gender"].get<std::string>();
      }
      for (const auto& [k, v] : j.items())
        if (!kHeaderKeys.count(k)) h.extra[k] = v;
      continue;
    }

    FrameSample f;
    f.t = number(j, "t", line_no);
    f.head_pos = number_array<3>(j, "head_pos", line_no);
    const auto q = number_array<4>(j, "head_rot", line_no);
    f.head_rot = {q[0], q[1], q[2], q[3]};
    f.gaze_dir_right = number_array<3>(j, "gaze_dir_right", line_no);
    f.hit_point = number_array<3>(j, "hit_point", line_no);
    const auto& valid = member(j, "valid", line_no);
    if (!valid.is_boolean()) fail("valid must be a boolean", line_no);
    f.valid = valid.get<bool>();
    if (!s.frames.empty() && !(f.t > s.frames.back().t)) fail("timestamp does not increase", line_no);
    nlohmann::json extra = nlohmann::json::object();
    for (const auto& [k, v] : j.items())
      if (!kFrameKeys.count(k)) extra[k] = v;
    if (!extra.empty()) s.frame_extra[s.frames.size()] = std::move(extra);
    s.frames.push_back(f);
  }
  if (!have_header) throw FormatError("line 1: empty session file", 1);
  return s;
}

Session session_from_trial(const GeneratedTrial& trial, const SubjectProfile& profile) {
  Session s;
  s.header.subject_id = trial.subject_id;
  s.header.lens_condition = trial.lens_condition;
  s.header.trial_id = trial.trial_id;
  s.header.frame_rate = trial.frame_rate;
  s.header.raw_rating = trial.raw_rating;
  s.header.age = profile.age;
  s.header.gender = profile.gender;
  s.frames = trial.frames;
  return s;
}

void write_session(const Session& s, const std::filesystem::path& path) {
  write_text_atomic(path, encode_session(s));
}

Session read_session(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_session(std::string(bytes.begin(), bytes.end()));
}

// ---- Analysis ------------------------------------------------------------------

TrialAnalysis analyze_trial(const Session& s, const DecompositionMaps& maps, const AnalysisOptions& options) {
  TrialAnalysis a;
  const auto yaw = valid_angles(s.frames, &EulerAngles::yaw);
  if (yaw.size() < 50) throw ValidationError("fewer than 50 valid frames", "frames");
  BatscheletOptions bo;
  bo.seed = options.seed;
  a.yaw = fit_batschelet_mixture2(yaw, bo);
  MixtureOptions mo;
  mo.seed = options.seed;
  a.pitch = fit_vonmises_mixture2(valid_angles(s.frames, &EulerAngles::pitch), mo);
  a.roll = fit_vonmises(valid_angles(s.frames, &EulerAngles::roll));
  a.fixations = detect_fixations(s.frames);
  a.saccades = detect_saccades(s.frames);
  a.events = summarize_events(s.frames, a.fixations, a.saccades);
  a.exposure = observed_stats(s.frames, maps);
  if (a.exposure.empty()) throw ValidationError("no gaze sample inside the distortion maps", "frames");
  a.duration_s = s.frames.back().t - s.frames.front().t;
  return a;
}

nlohmann::json to_json(const TrialAnalysis& a) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& f : a.fixations) events.push_back(to_json(f));
  for (const auto& c : a.saccades) events.push_back(to_json(c));
  return {{"duration_s", a.duration_s},   {"yaw", to_json(a.yaw)},           {"pitch", to_json(a.pitch)},
          {"roll", to_json(a.roll)},      {"events", to_json(a.events)},     {"exposure", to_json(a.exposure)},
          {"event_list", std::move(events)}};
}

// ---- Feature table -------------------------------------------------------------

const std::vector<std::string>& feature_columns() {
  static const std::vector<std::string> cols = {
      "age", "gender", "baseline_rating", "max_rating", "min_rating", "duration_s", "lens_code",
      "displacement_mean", "displacement_sd", "magnification_mean", "magnification_sd", "aspect_mean", "aspect_sd",
      "skew_mean", "skew_sd", "rotation_mean", "rotation_sd",
      "yaw_mu1", "yaw_kappa1", "yaw_lambda1", "yaw_fwhm1", "yaw_omega", "yaw_mu2", "yaw_kappa2", "yaw_lambda2",
      "yaw_fwhm2",
      "pitch_mu1", "pitch_kappa1", "pitch_fwhm1", "pitch_omega", "pitch_mu2", "pitch_kappa2", "pitch_fwhm2",
      "roll_mu", "roll_kappa", "roll_fwhm",
      "fixations_per_min", "mean_fixation_duration_s", "saccades_per_min", "mean_saccade_amplitude_deg",
      "max_peak_velocity_dps",
      kTargetColumn};
  return cols;
}

std::size_t lens_code_column() { return 6; }

namespace {

const std::vector<std::string> kIdColumns = {"subject_id", "lens_condition", "trial_id"};

double gender_code(const std::optional<std::string>& g) {
  if (!g) return 2.0;
  if (*g == "f") return 0.0;
  if (*g == "m") return 1.0;
  return 2.0;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

}  // namespace

std::string encode_feature_csv(const FeatureTable& t) {
  std::string out;
  for (const auto& c : kIdColumns) out += c + ',';
  const auto& cols = feature_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out += cols[i] + (i + 1 < cols.size() ? "," : "\n");
  for (const auto& r : t.rows) {
    out += r.subject_id + ',' + lens_name(r.lens_condition) + ',' + std::to_string(r.trial_id);
    for (double v : r.values) {
      out += ',';
      append_double(out, v);
    }
    out += ',';
    append_double(out, r.normalized_rating);
    out += '\n';
  }
  return out;
}

FeatureTable decode_feature_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("line 1: empty feature table", 1);
  const auto header = split_csv_line(line);
  std::vector<std::string> expected = kIdColumns;
  for (const auto& c : feature_columns()) expected.push_back(c);
  for (const auto& name : expected)
    if (std::find(header.begin(), header.end(), name) == header.end())
      throw FormatError("line 1: missing column '" + name + "'", 1);
  if (header != expected) {
    for (const auto& name : header)
      if (std::find(expected.begin(), expected.end(), name) == expected.end())
        throw FormatError("line 1: unexpected column '" + name + "'", 1);
    throw FormatError("line 1: columns out of order", 1);
  }

  FeatureTable t;
  const std::size_t n_features = feature_columns().size() - 1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != expected.size())
      fail("expected " + std::to_string(expected.size()) + " cells, got " + std::to_string(cells.size()), line_no);
    FeatureRow r;
    r.subject_id = cells[0];
    try {
      r.lens_condition = parse_lens_condition(cells[1]);
    } catch (const ValidationError& e) {
      fail(e.what(), line_no);
    }
    auto parse_num = [&](const std::string& cell, const std::string& col) {
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v))
        fail("column '" + col + "' is not a finite number", line_no);
      return v;
    };
    const double trial = parse_num(cells[2], "trial_id");
    if (trial != std::floor(trial)) fail("column 'trial_id' is not an integer", line_no);
    r.trial_id = static_cast<int>(trial);
    r.values.resize(n_features);
    for (std::size_t k = 0; k < n_features; ++k) r.values[k] = parse_num(cells[3 + k], feature_columns()[k]);
    r.normalized_rating = parse_num(cells.back(), kTargetColumn);
    t.rows.push_back(std::move(r));
  }
  return t;
}

void write_feature_csv(const FeatureTable& t, const std::filesystem::path& path) {
  write_text_atomic(path, encode_feature_csv(t));
}

FeatureTable read_feature_csv(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_feature_csv(std::string(bytes.begin(), bytes.end()));
}

// ---- Dataset assembly ----------------------------------------------------------

DatasetBuild build_dataset(const std::vector<Session>& sessions,
                           const std::map<LensCondition, DecompositionMaps>& maps, const AnalysisOptions& options) {
  const std::size_t n = sessions.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ha = sessions[a].header;
    const auto& hb = sessions[b].header;
    return std::tie(ha.subject_id, ha.lens_condition, ha.trial_id) < std::tie(hb.subject_id, hb.lens_condition, hb.trial_id);
  });

  std::vector<std::optional<TrialAnalysis>> analysis(n);
  std::vector<std::string> error(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < n; ++k) {
    const Session& s = sessions[order[k]];
    try {
      const auto it = maps.find(s.header.lens_condition);
      if (it == maps.end()) throw ValidationError("no distortion maps for lens " + lens_name(s.header.lens_condition));
      if (!s.header.raw_rating) throw ValidationError("missing rating");
      analysis[k] = analyze_trial(s, it->second, options);
    } catch (const std::exception& e) {
      error[k] = e.what();
    }
  }

  DatasetBuild out;
  auto reject = [&](const SessionHeader& h, const std::string& reason) {
    out.rejected.push_back({h.subject_id, h.lens_condition, h.trial_id, reason});
  };

  // Usable trials grouped by subject, in output order.
  std::map<std::string, std::vector<std::size_t>> by_subject;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& h = sessions[order[k]].header;
    if (!analysis[k]) {
      reject(h, error[k]);
      continue;
    }
    if (*h.raw_rating < 0 || *h.raw_rating > 7) {
      reject(h, "raw rating outside 0-7");
      continue;
    }
    by_subject[h.subject_id].push_back(k);
  }

  for (const auto& [subject, ks] : by_subject) {
    std::vector<RatingRecord> ratings;
    for (std::size_t k : ks) {
      const auto& h = sessions[order[k]].header;
      ratings.push_back({h.subject_id, h.lens_condition, *h.raw_rating, 0.0});
    }
    const bool has_baseline = std::any_of(ratings.begin(), ratings.end(),
                                          [](const RatingRecord& r) { return r.lens_condition == LensCondition::baseline; });
    if (!has_baseline) {
      for (std::size_t k : ks) reject(sessions[order[k]].header, "missing baseline");
      continue;
    }
    normalize_ratings(ratings);
    double baseline_sum = 0.0;
    int baseline_n = 0;
    double max_r = -HUGE_VAL, min_r = HUGE_VAL;
    for (const auto& r : ratings) {
      if (r.lens_condition == LensCondition::baseline) {
        baseline_sum += rescale_rating(r.raw_rating);
        ++baseline_n;
      }
      max_r = std::max(max_r, r.normalized_rating);
      min_r = std::min(min_r, r.normalized_rating);
    }

    for (std::size_t i = 0; i < ks.size(); ++i) {
      const std::size_t k = ks[i];
      const auto& h = sessions[order[k]].header;
      const TrialAnalysis& a = *analysis[k];
      const auto& yaw = a.yaw.components;
      const auto& pitch = a.pitch.components;
      // A collapsed pitch mixture repeats its single component with weight 1.
      const CircularComponent& p0 = pitch.front();
      const CircularComponent& p1 = pitch.size() > 1 ? pitch[1] : pitch.front();
      const auto& roll = a.roll.components.front();
      const auto& e = a.exposure;
      FeatureRow row;
      row.subject_id = h.subject_id;
      row.lens_condition = h.lens_condition;
      row.trial_id = h.trial_id;
      row.values = {h.age.value_or(0.0), gender_code(h.gender), baseline_sum / baseline_n, max_r, min_r, a.duration_s,
                    static_cast<double>(static_cast<int>(h.lens_condition)),
                    e.displacement_deg.mean, e.displacement_deg.sd, e.magnification.mean, e.magnification.sd,
                    e.aspect.mean, e.aspect.sd, e.skew_deg.mean, e.skew_deg.sd, e.rotation_deg.mean, e.rotation_deg.sd,
                    yaw[0].mu, yaw[0].kappa, yaw[0].lambda, yaw[0].fwhm, yaw[0].omega, yaw[1].mu, yaw[1].kappa,
                    yaw[1].lambda, yaw[1].fwhm,
                    p0.mu, p0.kappa, p0.fwhm, pitch.size() > 1 ? p0.omega : 1.0, p1.mu, p1.kappa, p1.fwhm,
                    roll.mu, roll.kappa, roll.fwhm,
                    a.events.fixations_per_min, a.events.mean_fixation_duration_s, a.events.saccades_per_min,
                    a.events.mean_saccade_amplitude_deg, a.events.max_peak_velocity_dps};
      row.normalized_rating = ratings[i].normalized_rating;
      out.table.rows.push_back(std::move(row));
      out.analyses.push_back(a);
    }
  }
  return out;
}

}  // namespace palsim
