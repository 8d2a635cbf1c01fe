#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "palsim/circular.hpp"
#include "palsim/distortion_exposure.hpp"
#include "palsim/gaze_events.hpp"
#include "palsim/session_synth.hpp"

namespace palsim {

inline constexpr int kSessionSchemaVersion = 1;

/// First line of a session file. Keys not listed here are kept in `extra`
/// and written back unchanged.
struct SessionHeader {
  std::string subject_id;
  LensCondition lens_condition = LensCondition::baseline;
  int trial_id = 0;
  double frame_rate = 90.0;
  int schema_version = kSessionSchemaVersion;
  std::optional<int> raw_rating;
  std::optional<double> age;
  std::optional<std::string> gender;
  nlohmann::json extra = nlohmann::json::object();
};

struct Session {
  SessionHeader header;
  std::vector<FrameSample> frames;
  /// Unknown per-frame keys, by frame index.
  std::map<std::size_t, nlohmann::json> frame_extra;
};

/// One JSON object per line: the header, then one frame per line with keys
/// t, head_pos[3], head_rot[w,x,y,z], gaze_dir_right[3], hit_point[3], valid.
std::string encode_session(const Session& s);
/// Throws FormatError with the 1-based line number of the first problem:
/// malformed JSON, missing or mistyped keys, unknown schema version or lens,
/// timestamps that do not strictly increase.
Session decode_session(const std::string& text);
void write_session(const Session& s, const std::filesystem::path& path);
/// Session record of a synthetic trial; the profile supplies age and gender.
Session session_from_trial(const GeneratedTrial& trial, const SubjectProfile& profile);
Session read_session(const std::filesystem::path& path);

// ---- Per-trial analysis -----------------------------------------------------

struct TrialAnalysis {
  CircularFitResult yaw;    // two Batschelet components
  CircularFitResult pitch;  // two von Mises components
  CircularFitResult roll;   // single von Mises
  std::vector<Fixation> fixations;
  std::vector<Saccade> saccades;
  GazeEventSummary events;
  ObservedDistortionStats exposure;
  double duration_s = 0.0;
};

struct AnalysisOptions {
  std::uint64_t seed = 1;  // EM restarts and Batschelet warm starts
};

/// Throws ValidationError when the trial cannot be analysed (too few valid
/// frames for the fits, no tracked time, no gaze inside the maps).
TrialAnalysis analyze_trial(const Session& s, const DecompositionMaps& maps, const AnalysisOptions& options = {});

nlohmann::json to_json(const TrialAnalysis& a);

// ---- Feature table -----------------------------------------------------------

/// Column names after the id columns (subject_id, lens_condition, trial_id),
/// in file order. The last column is the target, normalized_rating.
const std::vector<std::string>& feature_columns();
inline constexpr const char* kTargetColumn = "normalized_rating";
/// Index of lens_code within feature_columns(); excluded from model inputs
/// unless asked for.
std::size_t lens_code_column();

struct FeatureRow {
  std::string subject_id;
  LensCondition lens_condition = LensCondition::baseline;
  int trial_id = 0;
  std::vector<double> values;  // feature_columns().size() - 1 features
  double normalized_rating = 0.0;
};

struct FeatureTable {
  std::vector<FeatureRow> rows;
};

std::string encode_feature_csv(const FeatureTable& t);
/// Throws FormatError naming the first missing or unexpected column, or the
/// line of a cell that does not parse.
FeatureTable decode_feature_csv(const std::string& text);
void write_feature_csv(const FeatureTable& t, const std::filesystem::path& path);
FeatureTable read_feature_csv(const std::filesystem::path& path);

struct RejectedTrial {
  std::string subject_id;
  LensCondition lens_condition = LensCondition::baseline;
  int trial_id = 0;
  std::string reason;
};

struct DatasetBuild {
  FeatureTable table;
  std::vector<RejectedTrial> rejected;
  /// Parallel to table.rows.
  std::vector<TrialAnalysis> analyses;
};

/// Analyses every session against its lens maps, normalises ratings per
/// subject and assembles feature rows in (subject, lens, trial) order.
/// Trials that fail, lack a rating, or belong to a subject without a usable
/// baseline trial are skipped with a reason instead of aborting the batch.
DatasetBuild build_dataset(const std::vector<Session>& sessions,
                           const std::map<LensCondition, DecompositionMaps>& maps,
                           const AnalysisOptions& options = {});

}  // namespace palsim
