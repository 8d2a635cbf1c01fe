#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "palsim/discomfort_model.hpp"
#include "palsim/session_io.hpp"

namespace palsim {

struct ModelDataOptions {
  bool include_lens_code = false;
  /// baseline/max/min rating columns; these can identify the subject.
  bool include_subject_ratings = true;
};

/// FeatureTable flattened for training. X keeps every feature column so
/// indices match feature_columns(); `candidates` lists the ones the model may
/// use.
struct ModelData {
  Matrix X;
  std::vector<double> y;
  std::vector<std::string> groups;  // subject_id
  std::vector<std::string> strata;  // lens name
  std::vector<std::string> names;
  std::vector<std::size_t> candidates;
};

ModelData make_model_data(const FeatureTable& table, const ModelDataOptions& options = {});

struct TrainConfig {
  double test_fraction = 0.3;
  std::uint64_t seed = 1;
  GbrParams selection_params{100, 0.1, 3, 1.0, 1, 1};
  std::size_t max_features = kMaxShapleyFeatures;
  SearchSpace space;
  int n_candidates = 20;
  int k_folds = 5;
  std::size_t background_size = 100;
  Exec exec = Exec::parallel;
};

struct FeatureAttribution {
  std::size_t column = 0;
  std::string name;
  double mean_abs = 0.0;
};

struct TrainOutcome {
  SplitResult split;
  FeatureSelection selection;
  SearchResult search;
  BoostedModel model;
  EvalMetrics train_metrics;
  EvalMetrics test_metrics;
};

/// Split, feature selection, random search over grouped folds, final fit on
/// the training rows and evaluation on both sides.
TrainOutcome train_pipeline(const ModelData& data, const TrainConfig& config);

/// Seeded background rows drawn without replacement from `rows`.
Matrix background_sample(const Matrix& X, std::span<const std::size_t> rows, std::size_t n, std::uint64_t seed);

/// Shapley values for each of `rows`, plus features ranked by mean |phi|.
struct ShapSummary {
  std::vector<std::size_t> rows;
  std::vector<ShapExplanation> explanations;
  std::vector<FeatureAttribution> ranking;  // masked features, descending
};

ShapSummary explain_rows(const BoostedModel& model, const Matrix& X, std::span<const std::size_t> rows,
                         const Matrix& background, Exec exec = Exec::parallel);

/// Test R^2 of fixed hyperparameters over `n_seeds` different splits.
struct SeedSweep {
  std::vector<std::uint64_t> seeds;
  std::vector<double> r2_test;
  double mean = 0.0;
  double sd = 0.0;
};

SeedSweep sweep_split_seeds(const ModelData& data, const TrainConfig& config, const GbrParams& params, int n_seeds);

nlohmann::json to_json(const TrainOutcome& o, const ModelData& data);
nlohmann::json to_json(const ShapSummary& s);
nlohmann::json to_json(const SeedSweep& s);

}  // namespace palsim
