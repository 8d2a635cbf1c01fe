#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "palsim/common.hpp"

namespace palsim {

/// Dense row-major design matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
};

// ---- Trees ----------------------------------------------------------------------

/// Internal nodes send x[feature] <= threshold to `left`. Leaves have
/// feature == -1.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  double gain = 0.0;  // SSE decrease of the split
  std::size_t n_samples = 0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(const double* x) const noexcept;
  /// Distinct split features, ascending.
  std::vector<int> used_features() const;
  int depth() const;
};

struct TreeParams {
  int max_depth = 3;
  std::size_t min_samples_leaf = 1;
};

/// Least-squares CART on the given rows. Thresholds are midpoints between
/// consecutive distinct values; the best split maximises the SSE decrease
/// with ties going to the lowest feature index, then the lowest threshold.
/// `features` restricts the candidate columns (empty = all).
RegressionTree fit_tree(const Matrix& X, std::span<const double> residuals, std::span<const std::size_t> rows,
                        const TreeParams& params, std::span<const std::size_t> features = {});
/// All rows.
RegressionTree fit_tree(const Matrix& X, std::span<const double> residuals, const TreeParams& params);

// ---- Boosting -----------------------------------------------------------------

struct GbrParams {
  int n_estimators = 100;
  double learning_rate = 0.1;
  int max_depth = 3;
  double subsample = 1.0;
  std::size_t min_samples_leaf = 1;
  std::uint64_t seed = 1;
};

struct BoostedModel {
  double init_value = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;
  /// Original column indices the trees may split on, ascending.
  std::vector<std::size_t> feature_mask;
  std::vector<std::string> feature_names;  // all columns of the design matrix
  GbrParams params;

  double predict(const double* x) const noexcept;
  std::vector<double> predict(const Matrix& X) const;
  /// Total split gain per column over all trees, normalised to sum 1.
  /// All zeros when no tree splits.
  std::vector<double> feature_importances() const;
};

/// F0 = mean(y); each round fits a tree to the residuals on a seeded
/// subsample drawn without replacement and adds learning_rate * tree.
/// `loss_trace`, when given, receives the full training MSE after each round.
BoostedModel train_gbr(const Matrix& X, std::span<const double> y, const GbrParams& params,
                       std::vector<std::size_t> feature_mask = {}, std::vector<double>* loss_trace = nullptr);

// ---- Splits and selection -------------------------------------------------------

struct SplitResult {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Each (group, stratum) cell gets floor(f n) test rows plus at most one
/// more, handed out in seeded cell order so the total is round(f N).
/// Throws ValidationError naming a cell with fewer than 2 rows.
SplitResult grouped_stratified_split(std::span<const std::string> groups, std::span<const std::string> strata,
                                     double test_fraction, std::uint64_t seed);

struct FeatureSelection {
  std::vector<std::size_t> mask;
  std::vector<double> importances;  // per column of X
  double threshold = 0.0;
  bool all_zero = false;  // no split anywhere; every candidate kept
};

/// Trains a preliminary model on `candidates`, keeps columns whose importance
/// is at least the median candidate importance, then the `max_features` most
/// important of those.
FeatureSelection select_features(const Matrix& X, std::span<const double> y, const GbrParams& params,
                                 std::span<const std::size_t> candidates, std::size_t max_features = 15);

// ---- Metrics and search ---------------------------------------------------------

struct EvalMetrics {
  double r2 = 0.0;
  double mape = 0.0;
  double mse = 0.0;
  double max_error = 0.0;
  bool r2_defined = true;  // false when the targets are constant
  std::size_t n = 0;
};

EvalMetrics evaluate(std::span<const double> predicted, std::span<const double> actual);
EvalMetrics evaluate(const BoostedModel& model, const Matrix& X, std::span<const double> y);

/// Fold index per row. Groups are shuffled with the seed and dealt round
/// robin, so no group straddles two folds. Throws when k exceeds the number
/// of groups or is below 2.
std::vector<int> group_kfold(std::span<const std::string> groups, int k, std::uint64_t seed);

struct SearchSpace {
  int n_estimators_min = 50, n_estimators_max = 400;
  double learning_rate_min = 0.01, learning_rate_max = 0.3;  // log-uniform
  int max_depth_min = 1, max_depth_max = 5;
  double subsample_min = 0.5, subsample_max = 1.0;
  int min_samples_leaf_min = 1, min_samples_leaf_max = 10;
};

struct CandidateScore {
  GbrParams params;
  double score = 0.0;  // mean validation R^2
};

struct SearchResult {
  GbrParams best;
  double best_score = 0.0;
  std::vector<CandidateScore> candidates;
};

std::vector<GbrParams> draw_candidates(const SearchSpace& space, int n, std::uint64_t seed);

/// Mean validation R^2 over the folds for every candidate; best is the first
/// maximum. Candidates run in parallel under Exec::parallel.
SearchResult cross_validate(const Matrix& X, std::span<const double> y, std::span<const int> folds,
                            std::span<const GbrParams> candidates, std::span<const std::size_t> feature_mask,
                            Exec exec = Exec::parallel);

SearchResult random_search_cv(const Matrix& X, std::span<const double> y, std::span<const std::string> groups,
                              const SearchSpace& space, int n_candidates, int k_folds, std::uint64_t seed,
                              std::span<const std::size_t> feature_mask, Exec exec = Exec::parallel);

// ---- Shapley --------------------------------------------------------------------

inline constexpr std::size_t kMaxShapleyFeatures = 15;

struct ShapExplanation {
  double base_value = 0.0;
  std::vector<double> values;  // per column of X; zero outside the mask
  double prediction = 0.0;
};

/// Exact interventional Shapley values against the background rows. The
/// model is a sum of trees, so each tree's game is solved over the subsets
/// of the features it splits on and the results are added.
/// Throws ValidationError for more than 15 masked features or an empty
/// background.
ShapExplanation shapley_explain(const BoostedModel& model, const double* x, const Matrix& background,
                                Exec exec = Exec::parallel);

namespace reference {
/// Whole-model enumeration over all 2^|mask| coalitions. Exponential; for
/// testing the per-tree path.
ShapExplanation shapley_explain(const BoostedModel& model, const double* x, const Matrix& background);
}  // namespace reference

nlohmann::json to_json(const BoostedModel& m);
BoostedModel boosted_model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalMetrics& m);
nlohmann::json to_json(const GbrParams& p);

}  // namespace palsim
