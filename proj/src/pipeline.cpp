#include "palsim/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

namespace palsim {

namespace {

constexpr std::size_t kSubjectRatingColumns[] = {2, 3, 4};  // baseline, max, min

Matrix gather_rows(const Matrix& X, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), X.cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(X.row(rows[r]), X.row(rows[r]) + X.cols, out.data.begin() + static_cast<std::ptrdiff_t>(r * X.cols));
  return out;
}

template <class T>
std::vector<T> gather(const std::vector<T>& v, std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(v[r]);
  return out;
}

}  // namespace

ModelData make_model_data(const FeatureTable& table, const ModelDataOptions& options) {
  const auto& cols = feature_columns();
  const std::size_t p = cols.size() - 1;
  ModelData d;
  d.X = Matrix(table.rows.size(), p);
  d.names.assign(cols.begin(), cols.end() - 1);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const FeatureRow& r = table.rows[i];
    if (r.values.size() != p) throw ValidationError("feature row has the wrong number of values", r.subject_id);
    std::copy(r.values.begin(), r.values.end(), d.X.data.begin() + static_cast<std::ptrdiff_t>(i * p));
    d.y.push_back(r.normalized_rating);
    d.groups.push_back(r.subject_id);
    d.strata.push_back(lens_name(r.lens_condition));
  }
  for (std::size_t c = 0; c < p; ++c) {
    if (c == lens_code_column() && !options.include_lens_code) continue;
    if (!options.include_subject_ratings &&
        std::find(std::begin(kSubjectRatingColumns), std::end(kSubjectRatingColumns), c) != std::end(kSubjectRatingColumns))
      continue;
    d.candidates.push_back(c);
  }
  return d;
}

TrainOutcome train_pipeline(const ModelData& data, const TrainConfig& config) {
  if (data.X.rows < 10) throw ValidationError("need at least 10 feature rows to train", "features");
  TrainOutcome o;
  o.split = grouped_stratified_split(data.groups, data.strata, config.test_fraction, config.seed);

  const Matrix Xtr = gather_rows(data.X, o.split.train);
  const std::vector<double> ytr = gather(data.y, o.split.train);
  const std::vector<std::string> gtr = gather(data.groups, o.split.train);

  GbrParams sel_params = config.selection_params;
  sel_params.seed = config.seed;
  o.selection = select_features(Xtr, ytr, sel_params, data.candidates, config.max_features);

  o.search = random_search_cv(Xtr, ytr, gtr, config.space, config.n_candidates, config.k_folds, config.seed,
                              o.selection.mask, config.exec);
  o.model = train_gbr(Xtr, ytr, o.search.best, o.selection.mask);
  o.model.feature_names = data.names;
  o.train_metrics = evaluate(o.model, Xtr, ytr);
  if (!o.split.test.empty()) {
    const Matrix Xte = gather_rows(data.X, o.split.test);
    o.test_metrics = evaluate(o.model, Xte, gather(data.y, o.split.test));
  }
  return o;
}

Matrix background_sample(const Matrix& X, std::span<const std::size_t> rows, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> pool(rows.begin(), rows.end());
  if (pool.empty()) throw ValidationError("no rows to draw a background from", "background");
  n = std::min(n, pool.size());
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return gather_rows(X, pool);
}

ShapSummary explain_rows(const BoostedModel& model, const Matrix& X, std::span<const std::size_t> rows,
                         const Matrix& background, Exec exec) {
  ShapSummary s;
  s.rows.assign(rows.begin(), rows.end());
  std::vector<double> mean_abs(X.cols, 0.0);
  for (std::size_t r : rows) {
    s.explanations.push_back(shapley_explain(model, X.row(r), background, exec));
    for (std::size_t f = 0; f < X.cols; ++f) mean_abs[f] += std::abs(s.explanations.back().values[f]);
  }
  for (std::size_t f : model.feature_mask) {
    const std::string name = f < model.feature_names.size() ? model.feature_names[f] : std::to_string(f);
    s.ranking.push_back({f, name, rows.empty() ? 0.0 : mean_abs[f] / static_cast<double>(rows.size())});
  }
  std::stable_sort(s.ranking.begin(), s.ranking.end(),
                   [](const FeatureAttribution& a, const FeatureAttribution& b) { return a.mean_abs > b.mean_abs; });
  return s;
}

SeedSweep sweep_split_seeds(const ModelData& data, const TrainConfig& config, const GbrParams& params, int n_seeds) {
  if (n_seeds < 1) throw ValidationError("sweep needs at least one seed", "sweep_seeds");
  SeedSweep sw;
  sw.r2_test.resize(static_cast<std::size_t>(n_seeds));
  for (int i = 0; i < n_seeds; ++i) sw.seeds.push_back(config.seed + static_cast<std::uint64_t>(i));
#pragma omp parallel for schedule(dynamic) if (config.exec == Exec::parallel)
  for (int i = 0; i < n_seeds; ++i) {
    const std::uint64_t seed = sw.seeds[static_cast<std::size_t>(i)];
    const SplitResult split = grouped_stratified_split(data.groups, data.strata, config.test_fraction, seed);
    const Matrix Xtr = gather_rows(data.X, split.train);
    const std::vector<double> ytr = gather(data.y, split.train);
    GbrParams sp = config.selection_params;
    sp.seed = seed;
    const FeatureSelection sel = select_features(Xtr, ytr, sp, data.candidates, config.max_features);
    GbrParams p = params;
    p.seed = seed;
    const BoostedModel m = train_gbr(Xtr, ytr, p, sel.mask);
    const EvalMetrics e = evaluate(m, gather_rows(data.X, split.test), gather(data.y, split.test));
    sw.r2_test[static_cast<std::size_t>(i)] = e.r2;
  }
  const double n = static_cast<double>(n_seeds);
  sw.mean = std::accumulate(sw.r2_test.begin(), sw.r2_test.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : sw.r2_test) ss += (v - sw.mean) * (v - sw.mean);
  sw.sd = n_seeds > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return sw;
}

nlohmann::json to_json(const TrainOutcome& o, const ModelData& data) {
  nlohmann::json selected = nlohmann::json::array();
  for (std::size_t f : o.selection.mask) selected.push_back(data.names[f]);
  nlohmann::json importances = nlohmann::json::object();
  for (std::size_t f : data.candidates) importances[data.names[f]] = o.selection.importances[f];
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : o.search.candidates)
    cands.push_back({{"params", to_json(c.params)}, {"cv_r2", std::isfinite(c.score) ? nlohmann::json(c.score) : nlohmann::json(nullptr)}});
  return {{"n_train", o.split.train.size()},
          {"n_test", o.split.test.size()},
          {"selected_features", std::move(selected)},
          {"selection_threshold", o.selection.threshold},
          {"selection_all_zero", o.selection.all_zero},
          {"preliminary_importances", std::move(importances)},
          {"best_params", to_json(o.search.best)},
          {"best_cv_r2", o.search.best_score},
          {"candidates", std::move(cands)},
          {"train", to_json(o.train_metrics)},
          {"test", to_json(o.test_metrics)}};
}

nlohmann::json to_json(const ShapSummary& s) {
  nlohmann::json ranking = nlohmann::json::array();
  for (const auto& a : s.ranking) ranking.push_back({{"feature", a.name}, {"column", a.column}, {"mean_abs_shap", a.mean_abs}});
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    const auto& e = s.explanations[i];
    nlohmann::json phi = nlohmann::json::object();
    for (const auto& a : s.ranking) phi[a.name] = e.values[a.column];
    rows.push_back({{"row", s.rows[i]}, {"base_value", e.base_value}, {"prediction", e.prediction}, {"shap", std::move(phi)}});
  }
  return {{"ranking", std::move(ranking)}, {"rows", std::move(rows)}};
}

nlohmann::json to_json(const SeedSweep& s) {
  return {{"seeds", s.seeds}, {"r2_test", s.r2_test}, {"mean", s.mean}, {"sd", s.sd}};
}

}  // namespace palsim
