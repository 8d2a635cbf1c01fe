#include "palsim/discomfort_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

namespace palsim {

// ---- Trees ----------------------------------------------------------------------

double RegressionTree::predict(const double* x) const noexcept {
  int k = 0;
  while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
    const TreeNode& n = nodes[static_cast<std::size_t>(k)];
    k = x[n.feature] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(k)].value;
}

std::vector<int> RegressionTree::used_features() const {
  std::vector<int> out;
  for (const auto& n : nodes)
    if (n.feature >= 0) out.push_back(n.feature);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

int RegressionTree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

namespace {

// Split gains below this fraction of the node's sum of squares are treated
// as rounding noise.
constexpr double kMinRelativeGain = 1e-12;

class TreeBuilder {
public:
  TreeBuilder(const Matrix& X, std::span<const double> r, const TreeParams& p, std::vector<std::size_t> features)
      : X_(X), r_(r), p_(p), features_(std::move(features)) {}

  RegressionTree build(std::vector<std::size_t> rows) {
    grow(rows, 0);
    return std::move(tree_);
  }

private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  int grow(std::vector<std::size_t>& rows, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double sum = 0.0, sq = 0.0;
    for (std::size_t i : rows) {
      sum += r_[i];
      sq += r_[i] * r_[i];
    }
    const double n = static_cast<double>(rows.size());
    tree_.nodes[static_cast<std::size_t>(id)].value = sum / n;
    tree_.nodes[static_cast<std::size_t>(id)].n_samples = rows.size();
    if (depth >= p_.max_depth || rows.size() < 2 * std::max<std::size_t>(p_.min_samples_leaf, 1)) return id;

    const Split s = best_split(rows, sum);
    if (s.feature < 0 || !(s.gain > kMinRelativeGain * sq)) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t i : rows) (X_.at(i, static_cast<std::size_t>(s.feature)) <= s.threshold ? left : right).push_back(i);
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    TreeNode& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = s.feature;
    node.threshold = s.threshold;
    node.gain = s.gain;
    node.left = l;
    node.right = r;
    return id;
  }

  Split best_split(const std::vector<std::size_t>& rows, double total) const {
    Split best;
    const std::size_t n = rows.size();
    const std::size_t min_leaf = std::max<std::size_t>(p_.min_samples_leaf, 1);
    std::vector<std::pair<double, std::size_t>> order(n);
    for (std::size_t f : features_) {
      for (std::size_t k = 0; k < n; ++k) order[k] = {X_.at(rows[k], f), rows[k]};
      std::sort(order.begin(), order.end());
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left_sum += r_[order[k].second];
        const std::size_t nl = k + 1, nr = n - nl;
        if (nl < min_leaf) continue;
        if (nr < min_leaf) break;
        const double a = order[k].first, b = order[k + 1].first;
        if (!(a < b)) continue;
        const double ml = left_sum / static_cast<double>(nl);
        const double mr = (total - left_sum) / static_cast<double>(nr);
        // SSE decrease, written without cancellation.
        const double gain = static_cast<double>(nl) * static_cast<double>(nr) / static_cast<double>(n) * (ml - mr) * (ml - mr);
        if (gain > best.gain) {
          double thr = a + 0.5 * (b - a);
          if (!(thr < b)) thr = a;
          best = {static_cast<int>(f), thr, gain};
        }
      }
    }
    return best;
  }

  const Matrix& X_;
  std::span<const double> r_;
  TreeParams p_;
  std::vector<std::size_t> features_;
  RegressionTree tree_;
};

std::vector<std::size_t> all_columns(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

RegressionTree fit_tree(const Matrix& X, std::span<const double> residuals, std::span<const std::size_t> rows,
                        const TreeParams& params, std::span<const std::size_t> features) {
  if (rows.empty()) throw ValidationError("fit_tree needs at least one row", "rows");
  if (params.max_depth < 0) throw ValidationError("max_depth must be >= 0", "max_depth");
  for (std::size_t i : rows)
    if (!std::isfinite(residuals[i])) throw ValidationError("residuals must be finite", "residuals");
  std::vector<std::size_t> cols = features.empty() ? all_columns(X.cols)
                                                   : std::vector<std::size_t>(features.begin(), features.end());
  TreeBuilder b(X, residuals, params, std::move(cols));
  return b.build(std::vector<std::size_t>(rows.begin(), rows.end()));
}

RegressionTree fit_tree(const Matrix& X, std::span<const double> residuals, const TreeParams& params) {
  const auto rows = all_columns(X.rows);
  return fit_tree(X, residuals, rows, params);
}

// ---- Boosting -----------------------------------------------------------------

double BoostedModel::predict(const double* x) const noexcept {
  double f = init_value;
  for (const auto& t : trees) f += learning_rate * t.predict(x);
  return f;
}

std::vector<double> BoostedModel::predict(const Matrix& X) const {
  std::vector<double> out(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) out[i] = predict(X.row(i));
  return out;
}

std::vector<double> BoostedModel::feature_importances() const {
  std::vector<double> imp(feature_names.size(), 0.0);
  for (const auto& t : trees)
    for (const auto& n : t.nodes)
      if (n.feature >= 0) {
        if (static_cast<std::size_t>(n.feature) >= imp.size()) imp.resize(static_cast<std::size_t>(n.feature) + 1, 0.0);
        imp[static_cast<std::size_t>(n.feature)] += n.gain;
      }
  const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (total > 0.0)
    for (double& v : imp) v /= total;
  return imp;
}

BoostedModel train_gbr(const Matrix& X, std::span<const double> y, const GbrParams& params,
                       std::vector<std::size_t> feature_mask, std::vector<double>* loss_trace) {
  if (y.size() != X.rows) throw ValidationError("target length differs from row count", "y");
  if (X.rows < 2) throw ValidationError("need at least 2 rows", "X");
  for (double v : y)
    if (!std::isfinite(v)) throw ValidationError("targets must be finite", "y");
  if (params.n_estimators < 0) throw ValidationError("n_estimators must be >= 0", "n_estimators");
  if (!(params.learning_rate > 0.0 && params.learning_rate <= 1.0))
    throw ValidationError("learning_rate must be in (0, 1]", "learning_rate");
  if (!(params.subsample > 0.0 && params.subsample <= 1.0)) throw ValidationError("subsample must be in (0, 1]", "subsample");
  if (feature_mask.empty()) feature_mask = all_columns(X.cols);
  std::sort(feature_mask.begin(), feature_mask.end());
  feature_mask.erase(std::unique(feature_mask.begin(), feature_mask.end()), feature_mask.end());
  for (std::size_t f : feature_mask)
    if (f >= X.cols) throw ValidationError("feature mask index out of range", "feature_mask");

  const std::size_t n = X.rows;
  BoostedModel m;
  m.learning_rate = params.learning_rate;
  m.params = params;
  m.feature_mask = feature_mask;
  m.feature_names.resize(X.cols);
  m.init_value = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);

  std::vector<double> F(n, m.init_value), residual(n);
  const std::size_t n_sub = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(params.subsample * static_cast<double>(n))),
                                                    std::min<std::size_t>(2, n), n);
  std::mt19937_64 rng(params.seed);
  std::vector<std::size_t> perm = all_columns(n);
  const TreeParams tp{params.max_depth, params.min_samples_leaf};

  for (int it = 0; it < params.n_estimators; ++it) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - F[i];
    std::vector<std::size_t> rows;
    if (n_sub == n) {
      rows = perm;
    } else {
      // Partial Fisher-Yates: first n_sub entries are the sample.
      for (std::size_t i = 0; i < n_sub; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(perm[i], perm[pick(rng)]);
      }
      rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_sub));
      std::sort(rows.begin(), rows.end());
    }
    m.trees.push_back(fit_tree(X, residual, rows, tp, feature_mask));
    const RegressionTree& t = m.trees.back();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      F[i] += m.learning_rate * t.predict(X.row(i));
      loss += (y[i] - F[i]) * (y[i] - F[i]);
    }
    if (loss_trace) loss_trace->push_back(loss / static_cast<double>(n));
  }
  return m;
}

// ---- Splits and selection -------------------------------------------------------

SplitResult grouped_stratified_split(std::span<const std::string> groups, std::span<const std::string> strata,
                                     double test_fraction, std::uint64_t seed) {
  if (groups.size() != strata.size()) throw ValidationError("groups and strata differ in length", "strata");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ValidationError("test_fraction must be in [0, 1)", "test_fraction");
  SplitResult out;
  if (test_fraction == 0.0) {
    out.train = all_columns(groups.size());
    return out;
  }

  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < groups.size(); ++i) cells[{groups[i], strata[i]}].push_back(i);
  for (const auto& [key, rows] : cells)
    if (rows.size() < 2)
      throw ValidationError("cell (" + key.first + ", " + key.second + ") has fewer than 2 rows", key.first + "/" + key.second);

  std::mt19937_64 rng(seed);
  auto shuffle = [&](auto& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(v[i - 1], v[pick(rng)]);
    }
  };

  const std::size_t target = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(groups.size())));
  std::vector<std::pair<const std::vector<std::size_t>*, std::size_t>> plan;  // cell, n_test
  std::vector<std::size_t> fractional;
  std::size_t assigned = 0;
  for (const auto& [key, rows] : cells) {
    const double exact = test_fraction * static_cast<double>(rows.size());
    const std::size_t base = static_cast<std::size_t>(std::floor(exact));
    if (exact > static_cast<double>(base)) fractional.push_back(plan.size());
    plan.emplace_back(&rows, base);
    assigned += base;
  }
  shuffle(fractional);
  for (std::size_t k = 0; k < fractional.size() && assigned < target; ++k, ++assigned) ++plan[fractional[k]].second;

  for (auto& [rows, n_test] : plan) {
    std::vector<std::size_t> r = *rows;
    shuffle(r);
    out.test.insert(out.test.end(), r.begin(), r.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.train.insert(out.train.end(), r.begin() + static_cast<std::ptrdiff_t>(n_test), r.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

FeatureSelection select_features(const Matrix& X, std::span<const double> y, const GbrParams& params,
                                 std::span<const std::size_t> candidates, std::size_t max_features) {
  std::vector<std::size_t> cand(candidates.begin(), candidates.end());
  if (cand.empty()) cand = all_columns(X.cols);
  BoostedModel pre = train_gbr(X, y, params, cand);
  FeatureSelection sel;
  sel.importances = pre.feature_importances();
  sel.importances.resize(X.cols, 0.0);

  std::vector<double> ci;
  for (std::size_t f : pre.feature_mask) ci.push_back(sel.importances[f]);
  if (std::all_of(ci.begin(), ci.end(), [](double v) { return v == 0.0; })) {
    sel.all_zero = true;
    sel.mask = pre.feature_mask;
    return sel;
  }
  std::vector<double> sorted = ci;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  sel.threshold = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);

  std::vector<std::size_t> kept;
  for (std::size_t f : pre.feature_mask)
    if (sel.importances[f] >= sel.threshold) kept.push_back(f);
  std::stable_sort(kept.begin(), kept.end(),
                   [&](std::size_t a, std::size_t b) { return sel.importances[a] > sel.importances[b]; });
  if (kept.size() > max_features) kept.resize(max_features);
  std::sort(kept.begin(), kept.end());
  sel.mask = kept;
  return sel;
}

// ---- Metrics and search ---------------------------------------------------------

EvalMetrics evaluate(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size() || actual.empty())
    throw ValidationError("evaluation needs equal, nonempty prediction and target sets", "y");
  EvalMetrics m;
  m.n = actual.size();
  const double n = static_cast<double>(m.n);
  const double mean = std::accumulate(actual.begin(), actual.end(), 0.0) / n;
  double sse = 0.0, sst = 0.0, ape = 0.0;
  for (std::size_t i = 0; i < m.n; ++i) {
    const double e = predicted[i] - actual[i];
    sse += e * e;
    sst += (actual[i] - mean) * (actual[i] - mean);
    ape += std::abs(e) / std::abs(actual[i]);
    m.max_error = std::max(m.max_error, std::abs(e));
  }
  m.mse = sse / n;
  m.mape = ape / n;
  if (sst > 0.0) {
    m.r2 = 1.0 - sse / sst;
  } else {
    m.r2_defined = false;
    m.r2 = 0.0;
  }
  return m;
}

EvalMetrics evaluate(const BoostedModel& model, const Matrix& X, std::span<const double> y) {
  return evaluate(model.predict(X), y);
}

std::vector<int> group_kfold(std::span<const std::string> groups, int k, std::uint64_t seed) {
  std::vector<std::string> unique(groups.begin(), groups.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  if (k < 2) throw ValidationError("k_folds must be >= 2", "k_folds");
  if (static_cast<std::size_t>(k) > unique.size())
    throw ValidationError("k_folds exceeds the number of subjects (" + std::to_string(unique.size()) + ")", "k_folds");
  std::mt19937_64 rng(seed);
  for (std::size_t i = unique.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(unique[i - 1], unique[pick(rng)]);
  }
  std::map<std::string, int> fold;
  for (std::size_t i = 0; i < unique.size(); ++i) fold[unique[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  std::vector<int> out(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) out[i] = fold[groups[i]];
  return out;
}

std::vector<GbrParams> draw_candidates(const SearchSpace& s, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GbrParams> out;
  for (int i = 0; i < n; ++i) {
    GbrParams p;
    p.n_estimators = std::uniform_int_distribution<int>(s.n_estimators_min, s.n_estimators_max)(rng);
    p.learning_rate = std::exp(std::uniform_real_distribution<double>(std::log(s.learning_rate_min),
                                                                      std::log(s.learning_rate_max))(rng));
    p.max_depth = std::uniform_int_distribution<int>(s.max_depth_min, s.max_depth_max)(rng);
    p.subsample = std::uniform_real_distribution<double>(s.subsample_min, s.subsample_max)(rng);
    p.min_samples_leaf = static_cast<std::size_t>(
        std::uniform_int_distribution<int>(s.min_samples_leaf_min, s.min_samples_leaf_max)(rng));
    p.seed = seed + static_cast<std::uint64_t>(i) + 1;
    out.push_back(p);
  }
  return out;
}

SearchResult cross_validate(const Matrix& X, std::span<const double> y, std::span<const int> folds,
                            std::span<const GbrParams> candidates, std::span<const std::size_t> feature_mask, Exec exec) {
  if (candidates.empty()) throw ValidationError("no candidates to evaluate", "n_candidates");
  const int k = folds.empty() ? 0 : *std::max_element(folds.begin(), folds.end()) + 1;
  std::vector<Matrix> train_x(static_cast<std::size_t>(k)), test_x(static_cast<std::size_t>(k));
  std::vector<std::vector<double>> train_y(static_cast<std::size_t>(k)), test_y(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < X.rows; ++i) (folds[i] == f ? te : tr).push_back(i);
    auto gather = [&](const std::vector<std::size_t>& idx, Matrix& m, std::vector<double>& v) {
      m = Matrix(idx.size(), X.cols);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        std::copy(X.row(idx[r]), X.row(idx[r]) + X.cols, m.data.begin() + static_cast<std::ptrdiff_t>(r * X.cols));
        v.push_back(y[idx[r]]);
      }
    };
    gather(tr, train_x[static_cast<std::size_t>(f)], train_y[static_cast<std::size_t>(f)]);
    gather(te, test_x[static_cast<std::size_t>(f)], test_y[static_cast<std::size_t>(f)]);
  }

  const std::vector<std::size_t> mask(feature_mask.begin(), feature_mask.end());
  SearchResult res;
  res.candidates.resize(candidates.size());
  const int nc = static_cast<int>(candidates.size());
#pragma omp parallel for schedule(dynamic) if (exec == Exec::parallel)
  for (int c = 0; c < nc; ++c) {
    double total = 0.0;
    int used = 0;
    for (int f = 0; f < k; ++f) {
      const auto fs = static_cast<std::size_t>(f);
      if (test_y[fs].empty() || train_y[fs].size() < 2) continue;
      const BoostedModel m = train_gbr(train_x[fs], train_y[fs], candidates[static_cast<std::size_t>(c)], mask);
      const EvalMetrics e = evaluate(m, test_x[fs], test_y[fs]);
      if (!e.r2_defined) continue;
      total += e.r2;
      ++used;
    }
    res.candidates[static_cast<std::size_t>(c)] = {candidates[static_cast<std::size_t>(c)],
                                                   used ? total / used : -std::numeric_limits<double>::infinity()};
  }
  res.best = res.candidates.front().params;
  res.best_score = res.candidates.front().score;
  for (const auto& c : res.candidates)
    if (c.score > res.best_score) {
      res.best = c.params;
      res.best_score = c.score;
    }
  return res;
}

SearchResult random_search_cv(const Matrix& X, std::span<const double> y, std::span<const std::string> groups,
                              const SearchSpace& space, int n_candidates, int k_folds, std::uint64_t seed,
                              std::span<const std::size_t> feature_mask, Exec exec) {
  const std::vector<int> folds = group_kfold(groups, k_folds, seed);
  const std::vector<GbrParams> cands = draw_candidates(space, n_candidates, seed);
  return cross_validate(X, y, folds, cands, feature_mask, exec);
}

// ---- Shapley --------------------------------------------------------------------

namespace {

// Shapley weight |S|! (n - |S| - 1)! / n! for every coalition size.
std::vector<double> shapley_weights(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t s = 0; s < n; ++s)
    w[s] = std::exp(std::lgamma(static_cast<double>(s) + 1.0) + std::lgamma(static_cast<double>(n - s)) -
                    std::lgamma(static_cast<double>(n) + 1.0));
  return w;
}

// Tree output when the features flagged in `from_x` come from x and the rest
// from b.
double hybrid_predict(const RegressionTree& t, const double* x, const double* b, const std::vector<char>& from_x) {
  int k = 0;
  while (t.nodes[static_cast<std::size_t>(k)].feature >= 0) {
    const TreeNode& n = t.nodes[static_cast<std::size_t>(k)];
    const double v = from_x[static_cast<std::size_t>(n.feature)] ? x[n.feature] : b[n.feature];
    k = v <= n.threshold ? n.left : n.right;
  }
  return t.nodes[static_cast<std::size_t>(k)].value;
}

void check_shapley_inputs(const BoostedModel& model, const Matrix& background) {
  if (model.feature_mask.size() > kMaxShapleyFeatures)
    throw ValidationError("exact Shapley needs at most 15 selected features; run feature selection first",
                          "feature_mask");
  if (background.rows == 0) throw ValidationError("background sample is empty", "background");
}

}  // namespace

ShapExplanation shapley_explain(const BoostedModel& model, const double* x, const Matrix& background, Exec exec) {
  check_shapley_inputs(model, background);
  const std::size_t p = background.cols, nb = background.rows, nt = model.trees.size();
  std::vector<std::vector<double>> per_tree(nt, std::vector<double>(p, 0.0));

#pragma omp parallel for schedule(dynamic) if (exec == Exec::parallel)
  for (std::size_t ti = 0; ti < nt; ++ti) {
    const RegressionTree& t = model.trees[ti];
    const std::vector<int> used = t.used_features();
    std::vector<char> from_x(p, 1);
    std::vector<double>& phi = per_tree[ti];
    std::vector<int> players;
    std::vector<double> v;
    for (std::size_t bi = 0; bi < nb; ++bi) {
      const double* b = background.row(bi);
      // Features whose split decisions agree between x and b are dummies in
      // this background row's game.
      players.clear();
      for (int f : used) {
        bool differs = false;
        for (const auto& n : t.nodes)
          if (n.feature == f && ((x[f] <= n.threshold) != (b[f] <= n.threshold))) {
            differs = true;
            break;
          }
        if (differs) players.push_back(f);
      }
      const std::size_t r = players.size();
      if (r == 0) continue;
      const std::size_t n_masks = std::size_t{1} << r;
      v.assign(n_masks, 0.0);
      for (std::size_t m = 0; m < n_masks; ++m) {
        for (std::size_t j = 0; j < r; ++j) from_x[static_cast<std::size_t>(players[j])] = (m >> j) & 1U;
        v[m] = hybrid_predict(t, x, b, from_x);
      }
      for (int f : players) from_x[static_cast<std::size_t>(f)] = 1;
      const std::vector<double> w = shapley_weights(r);
      for (std::size_t j = 0; j < r; ++j) {
        const std::size_t bit = std::size_t{1} << j;
        double s = 0.0;
        for (std::size_t m = 0; m < n_masks; ++m)
          if (!(m & bit)) s += w[static_cast<std::size_t>(std::popcount(m))] * (v[m | bit] - v[m]);
        phi[static_cast<std::size_t>(players[j])] += s;
      }
    }
  }

  ShapExplanation e;
  e.values.assign(p, 0.0);
  for (std::size_t ti = 0; ti < nt; ++ti)
    for (std::size_t f = 0; f < p; ++f) e.values[f] += model.learning_rate * per_tree[ti][f] / static_cast<double>(nb);
  double base = 0.0;
  for (std::size_t bi = 0; bi < nb; ++bi) base += model.predict(background.row(bi));
  e.base_value = base / static_cast<double>(nb);
  e.prediction = model.predict(x);
  return e;
}

namespace reference {

ShapExplanation shapley_explain(const BoostedModel& model, const double* x, const Matrix& background) {
  check_shapley_inputs(model, background);
  const std::size_t p = background.cols, nb = background.rows;
  const std::vector<std::size_t>& players = model.feature_mask;
  const std::size_t r = players.size();
  const std::size_t n_masks = std::size_t{1} << r;
  std::vector<double> v(n_masks, 0.0), z(p);
  for (std::size_t m = 0; m < n_masks; ++m) {
    double s = 0.0;
    for (std::size_t bi = 0; bi < nb; ++bi) {
      std::copy(background.row(bi), background.row(bi) + p, z.begin());
      for (std::size_t j = 0; j < r; ++j)
        if ((m >> j) & 1U) z[players[j]] = x[players[j]];
      s += model.predict(z.data());
    }
    v[m] = s / static_cast<double>(nb);
  }
  ShapExplanation e;
  e.values.assign(p, 0.0);
  const std::vector<double> w = shapley_weights(r);
  for (std::size_t j = 0; j < r; ++j) {
    const std::size_t bit = std::size_t{1} << j;
    double s = 0.0;
    for (std::size_t m = 0; m < n_masks; ++m)
      if (!(m & bit)) s += w[static_cast<std::size_t>(std::popcount(m))] * (v[m | bit] - v[m]);
    e.values[players[j]] = s;
  }
  e.base_value = v[0];
  e.prediction = model.predict(x);
  return e;
}

}  // namespace reference

// ---- JSON -----------------------------------------------------------------------

namespace {

nlohmann::json node_json(const RegressionTree& t, int k) {
  const TreeNode& n = t.nodes[static_cast<std::size_t>(k)];
  if (n.feature < 0) return {{"value", n.value}, {"n_samples", n.n_samples}};
  return {{"feature", n.feature}, {"threshold", n.threshold}, {"gain", n.gain}, {"value", n.value},
          {"n_samples", n.n_samples}, {"left", node_json(t, n.left)}, {"right", node_json(t, n.right)}};
}

int node_from_json(const nlohmann::json& j, RegressionTree& t) {
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  TreeNode n;
  n.value = j.at("value").get<double>();
  n.n_samples = j.value("n_samples", std::size_t{0});
  if (j.contains("feature")) {
    n.feature = j.at("feature").get<int>();
    n.threshold = j.at("threshold").get<double>();
    n.gain = j.value("gain", 0.0);
    n.left = node_from_json(j.at("left"), t);
    n.right = node_from_json(j.at("right"), t);
  }
  t.nodes[static_cast<std::size_t>(id)] = n;
  return id;
}

}  // namespace

nlohmann::json to_json(const GbrParams& p) {
  return {{"n_estimators", p.n_estimators}, {"learning_rate", p.learning_rate}, {"max_depth", p.max_depth},
          {"subsample", p.subsample},       {"min_samples_leaf", p.min_samples_leaf}, {"seed", p.seed}};
}

nlohmann::json to_json(const BoostedModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) trees.push_back(node_json(t, 0));
  return {{"schema_version", 1},          {"init_value", m.init_value},     {"learning_rate", m.learning_rate},
          {"params", to_json(m.params)},  {"feature_names", m.feature_names}, {"feature_mask", m.feature_mask},
          {"trees", std::move(trees)}};
}

BoostedModel boosted_model_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != 1) throw ValidationError("unsupported model schema_version", "schema_version");
  BoostedModel m;
  m.init_value = j.at("init_value").get<double>();
  m.learning_rate = j.at("learning_rate").get<double>();
  const auto& p = j.at("params");
  m.params.n_estimators = p.at("n_estimators").get<int>();
  m.params.learning_rate = p.at("learning_rate").get<double>();
  m.params.max_depth = p.at("max_depth").get<int>();
  m.params.subsample = p.at("subsample").get<double>();
  m.params.min_samples_leaf = p.at("min_samples_leaf").get<std::size_t>();
  m.params.seed = p.at("seed").get<std::uint64_t>();
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.feature_mask = j.at("feature_mask").get<std::vector<std::size_t>>();
  for (const auto& tj : j.at("trees")) {
    RegressionTree t;
    node_from_json(tj, t);
    m.trees.push_back(std::move(t));
  }
  return m;
}

nlohmann::json to_json(const EvalMetrics& m) {
  return {{"r2", m.r2_defined ? nlohmann::json(m.r2) : nlohmann::json(nullptr)},
          {"mape", m.mape},
          {"mse", m.mse},
          {"max_error", m.max_error},
          {"n", m.n}};
}

}  // namespace palsim
