#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "palsim/discomfort_model.hpp"

using namespace palsim;

namespace {

Matrix step_x() {
  Matrix X(4, 1);
  for (std::size_t i = 0; i < 4; ++i) X.at(i, 0) = static_cast<double>(i);
  return X;
}

double sse(const RegressionTree& t, const Matrix& X, const std::vector<double>& y) {
  double s = 0;
  for (std::size_t i = 0; i < X.rows; ++i) s += std::pow(t.predict(X.row(i)) - y[i], 2);
  return s;
}

struct Data {
  Matrix X;
  std::vector<double> y;
};

// y = sin(3 x0) + x1 * x2 plus noise, with two pure-noise columns.
Data nonlinear(std::size_t n, std::uint64_t seed, double noise = 0.05) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::normal_distribution<double> e(0, noise);
  Data d{Matrix(n, 5), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 5; ++c) d.X.at(i, c) = u(rng);
    d.y[i] = std::sin(3 * d.X.at(i, 0)) + d.X.at(i, 1) * d.X.at(i, 2) + e(rng);
  }
  return d;
}

std::vector<std::string> subject_groups(std::size_t n, std::size_t per) {
  std::vector<std::string> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = "S" + std::to_string(i / per);
  return g;
}

}  // namespace

TEST(Tree, ConstantResidualsGiveOneLeaf) {
  Matrix X(6, 2);
  for (std::size_t i = 0; i < 6; ++i) X.at(i, 0) = static_cast<double>(i), X.at(i, 1) = static_cast<double>(i % 3);
  std::vector<double> r(6, 2.5);
  const auto t = fit_tree(X, r, TreeParams{3, 1});
  ASSERT_EQ(t.nodes.size(), 1u);
  EXPECT_EQ(t.nodes[0].feature, -1);
  EXPECT_EQ(t.nodes[0].value, 2.5);
}

TEST(Tree, StepDataSplitsAtMidpoint) {
  const Matrix X = step_x();
  const std::vector<double> y{0, 0, 1, 1};
  const auto t = fit_tree(X, y, TreeParams{1, 1});
  ASSERT_EQ(t.nodes.size(), 3u);
  EXPECT_EQ(t.nodes[0].feature, 0);
  EXPECT_EQ(t.nodes[0].threshold, 1.5);
  EXPECT_EQ(t.nodes[t.nodes[0].left].value, 0.0);
  EXPECT_EQ(t.nodes[t.nodes[0].right].value, 1.0);
  EXPECT_DOUBLE_EQ(t.nodes[0].gain, 1.0);
}

TEST(Tree, TiesGoToLowestFeatureThenThreshold) {
  Matrix X(4, 2);
  for (std::size_t i = 0; i < 4; ++i) X.at(i, 0) = X.at(i, 1) = static_cast<double>(i);
  const std::vector<double> y{0, 0, 1, 1};
  EXPECT_EQ(fit_tree(X, y, TreeParams{1, 1}).nodes[0].feature, 0);
  // Symmetric target: splits at 0.5 and 2.5 tie, the lower wins.
  const std::vector<double> v{1, 0, 0, 1};
  EXPECT_EQ(fit_tree(X, v, TreeParams{1, 1}).nodes[0].threshold, 0.5);
}

TEST(Tree, DeeperTreesFitNoWorse) {
  const auto d = nonlinear(300, 3);
  double prev = INFINITY;
  for (int depth = 0; depth <= 6; ++depth) {
    const auto t = fit_tree(d.X, d.y, TreeParams{depth, 1});
    EXPECT_LE(t.depth(), depth);
    const double s = sse(t, d.X, d.y);
    EXPECT_LE(s, prev + 1e-9);
    prev = s;
  }
}

TEST(Tree, MinSamplesLeafAndFeatureRestriction) {
  const auto d = nonlinear(200, 4);
  const auto t = fit_tree(d.X, d.y, TreeParams{8, 15});
  for (const auto& n : t.nodes)
    if (n.feature == -1) EXPECT_GE(n.n_samples, 15u);
  std::vector<std::size_t> rows(200);
  std::iota(rows.begin(), rows.end(), 0);
  const std::vector<std::size_t> feats{3, 4};
  const auto u = fit_tree(d.X, d.y, rows, TreeParams{4, 1}, feats);
  for (int f : u.used_features()) EXPECT_TRUE(f == 3 || f == 4);
  EXPECT_THROW(fit_tree(d.X, d.y, TreeParams{-1, 1}), ValidationError);
}

TEST(Boosting, StepDataExact) {
  const Matrix X = step_x();
  const std::vector<double> y{0, 0, 1, 1};
  const auto m = train_gbr(X, y, GbrParams{1, 1.0, 1, 1.0, 1, 1});
  EXPECT_EQ(m.init_value, 0.5);
  const auto p = m.predict(X);
  EXPECT_EQ(p, (std::vector<double>{0, 0, 1, 1}));
}

TEST(Boosting, ConstantTarget) {
  const auto d = nonlinear(50, 5);
  const std::vector<double> y(50, 3.75);
  const auto m = train_gbr(d.X, y, GbrParams{20, 0.3, 3, 0.7, 1, 9});
  for (double p : m.predict(d.X)) EXPECT_EQ(p, 3.75);
}

TEST(Boosting, TrainingLossNonIncreasing) {
  const auto d = nonlinear(200, 6);
  std::vector<double> trace;
  train_gbr(d.X, d.y, GbrParams{500, 0.1, 3, 1.0, 1, 1}, {}, &trace);
  ASSERT_EQ(trace.size(), 500u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] + 1e-12) << i;
}

TEST(Boosting, DeterministicAndSeedSensitive) {
  const auto d = nonlinear(150, 7);
  const GbrParams p{60, 0.1, 3, 0.6, 2, 11};
  const auto a = train_gbr(d.X, d.y, p), b = train_gbr(d.X, d.y, p);
  EXPECT_EQ(a.predict(d.X), b.predict(d.X));
  GbrParams q = p;
  q.seed = 12;
  EXPECT_NE(a.predict(d.X), train_gbr(d.X, d.y, q).predict(d.X));
}

TEST(Boosting, Errors) {
  const auto d = nonlinear(20, 8);
  auto y = d.y;
  y[3] = NAN;
  EXPECT_THROW(train_gbr(d.X, y, GbrParams{}), ValidationError);
  EXPECT_THROW(train_gbr(d.X, d.y, GbrParams{10, 0.0, 3, 1.0, 1, 1}), ValidationError);
  EXPECT_THROW(train_gbr(d.X, d.y, GbrParams{10, 0.1, 3, 1.5, 1, 1}), ValidationError);
  EXPECT_THROW(train_gbr(d.X, d.y, GbrParams{}, {7}), ValidationError);
}

TEST(Boosting, MaskRestrictsSplits) {
  const auto d = nonlinear(150, 9);
  const auto m = train_gbr(d.X, d.y, GbrParams{30, 0.1, 3, 1.0, 1, 1}, {1, 2});
  for (const auto& t : m.trees)
    for (int f : t.used_features()) EXPECT_TRUE(f == 1 || f == 2);
  const auto imp = m.feature_importances();
  EXPECT_NEAR(std::accumulate(imp.begin(), imp.end(), 0.0), 1.0, 1e-9);
  EXPECT_EQ(imp[0], 0.0);
}

TEST(Split, PaperShapedStudy) {
  std::vector<std::string> g, s;
  const char* lenses[] = {"baseline", "plano/add2", "plano/add3", "minus2/add2", "plus2/add2"};
  for (int subj = 0; subj < 18; ++subj)
    for (const char* l : lenses)
      for (int t = 0; t < 5; ++t) g.push_back("S" + std::to_string(subj)), s.push_back(l);
  const auto r = grouped_stratified_split(g, s, 0.3, 42);
  EXPECT_EQ(r.train.size() + r.test.size(), 450u);
  EXPECT_NEAR(static_cast<double>(r.test.size()) / 450.0, 0.3, 0.02);
  std::set<std::size_t> all(r.train.begin(), r.train.end());
  for (std::size_t i : r.test) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 450u);
  std::map<std::pair<std::string, std::string>, int> test_per_cell;
  for (std::size_t i : r.test) ++test_per_cell[{g[i], s[i]}];
  EXPECT_EQ(test_per_cell.size(), 90u);
  for (const auto& [cell, n] : test_per_cell) {
    EXPECT_GE(n, 1);
    EXPECT_LE(n, 2);
  }
  const auto again = grouped_stratified_split(g, s, 0.3, 42);
  EXPECT_EQ(again.test, r.test);
}

TEST(Split, ZeroFractionAndUndersizedCell) {
  const std::vector<std::string> g{"a", "a", "b", "b"}, s{"x", "x", "x", "x"};
  const auto r = grouped_stratified_split(g, s, 0.0, 1);
  EXPECT_EQ(r.train.size(), 4u);
  EXPECT_TRUE(r.test.empty());
  const std::vector<std::string> g2{"a", "a", "b"}, s2{"x", "x", "x"};
  try {
    grouped_stratified_split(g2, s2, 0.3, 1);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("(b, x)"), std::string::npos);
  }
}

TEST(Selection, CopyFeatureKeptAndNoiseRanksLower) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n(0, 1);
  Matrix X(300, 4);
  std::vector<double> y(300);
  for (std::size_t i = 0; i < 300; ++i) {
    for (std::size_t c = 0; c < 4; ++c) X.at(i, c) = n(rng);
    y[i] = X.at(i, 0);
  }
  const std::vector<std::size_t> cand{0, 1, 2, 3};
  const auto s = select_features(X, y, GbrParams{50, 0.1, 3, 1.0, 1, 1}, cand);
  EXPECT_TRUE(std::find(s.mask.begin(), s.mask.end(), 0u) != s.mask.end());
  for (std::size_t c = 1; c < 4; ++c) EXPECT_LT(s.importances[c], s.importances[0]);
  EXPECT_TRUE(std::is_sorted(s.mask.begin(), s.mask.end()));

  const auto capped = select_features(X, y, GbrParams{50, 0.1, 3, 1.0, 1, 1}, cand, 1);
  EXPECT_EQ(capped.mask, std::vector<std::size_t>{0});
}

TEST(Selection, AllZeroKeepsEverything) {
  Matrix X(20, 3);
  for (std::size_t i = 0; i < 20; ++i) X.at(i, 1) = static_cast<double>(i);
  const std::vector<double> y(20, 1.0);
  const std::vector<std::size_t> cand{0, 2};
  const auto s = select_features(X, y, GbrParams{10, 0.1, 3, 1.0, 1, 1}, cand);
  EXPECT_TRUE(s.all_zero);
  EXPECT_EQ(s.mask, cand);
}

TEST(Metrics, TrivialCases) {
  const std::vector<double> y{1, 2, 3, 4};
  const auto perfect = evaluate(y, y);
  EXPECT_EQ(perfect.r2, 1.0);
  EXPECT_EQ(perfect.mape, 0.0);
  EXPECT_EQ(perfect.mse, 0.0);
  EXPECT_EQ(perfect.max_error, 0.0);
  const std::vector<double> mean(4, 2.5);
  EXPECT_NEAR(evaluate(mean, y).r2, 0.0, 1e-15);
  const std::vector<double> p{1, 2, 3, 6};
  const auto m = evaluate(p, y);
  EXPECT_DOUBLE_EQ(m.mse, 1.0);
  EXPECT_DOUBLE_EQ(m.max_error, 2.0);
  EXPECT_DOUBLE_EQ(m.mape, 0.125);
  const std::vector<double> c(4, 1.0);
  EXPECT_FALSE(evaluate(p, c).r2_defined);
  EXPECT_THROW(evaluate(std::vector<double>{}, std::vector<double>{}), ValidationError);
}

TEST(Search, GroupFoldsKeepSubjectsTogether) {
  const auto g = subject_groups(60, 5);
  const auto f = group_kfold(g, 4, 3);
  std::map<std::string, std::set<int>> seen;
  for (std::size_t i = 0; i < g.size(); ++i) seen[g[i]].insert(f[i]);
  for (const auto& [subject, folds] : seen) EXPECT_EQ(folds.size(), 1u) << subject;
  std::set<int> used(f.begin(), f.end());
  EXPECT_EQ(used.size(), 4u);
  EXPECT_THROW(group_kfold(g, 13, 3), ValidationError);
  EXPECT_THROW(group_kfold(g, 1, 3), ValidationError);
}

TEST(Search, DrawsStayInBounds) {
  const SearchSpace sp;
  const auto c = draw_candidates(sp, 200, 5);
  ASSERT_EQ(c.size(), 200u);
  for (const auto& p : c) {
    EXPECT_GE(p.n_estimators, sp.n_estimators_min);
    EXPECT_LE(p.n_estimators, sp.n_estimators_max);
    EXPECT_GE(p.learning_rate, sp.learning_rate_min);
    EXPECT_LE(p.learning_rate, sp.learning_rate_max);
    EXPECT_GE(p.max_depth, sp.max_depth_min);
    EXPECT_LE(p.max_depth, sp.max_depth_max);
    EXPECT_GE(p.subsample, sp.subsample_min);
    EXPECT_LE(p.subsample, sp.subsample_max);
  }
  EXPECT_EQ(draw_candidates(sp, 5, 5)[3].learning_rate, c[3].learning_rate);
}

TEST(Search, DeepModelBeatsStub) {
  const auto d = nonlinear(200, 14);
  const auto g = subject_groups(200, 10);
  const auto folds = group_kfold(g, 5, 1);
  const std::vector<GbrParams> cand{GbrParams{100, 0.1, 0, 1.0, 1, 1}, GbrParams{100, 0.1, 3, 1.0, 1, 1}};
  const auto r = cross_validate(d.X, d.y, folds, cand, {});
  EXPECT_EQ(r.best.max_depth, 3);
  EXPECT_GT(r.best_score, 0.5);
  EXPECT_LE(r.candidates[0].score, 0.0);

  const std::vector<GbrParams> one{cand[0]};
  EXPECT_EQ(cross_validate(d.X, d.y, folds, one, {}).best.max_depth, 0);
  const std::vector<GbrParams> tie{cand[1], cand[1]};
  EXPECT_EQ(cross_validate(d.X, d.y, folds, tie, {}).candidates[0].score,
            cross_validate(d.X, d.y, folds, tie, {}).candidates[1].score);
}

TEST(Search, ParallelMatchesSerial) {
  const auto d = nonlinear(120, 15);
  const auto g = subject_groups(120, 10);
  SearchSpace sp;
  sp.n_estimators_max = 80;
  const auto a = random_search_cv(d.X, d.y, g, sp, 6, 3, 2, {}, Exec::serial);
  const auto b = random_search_cv(d.X, d.y, g, sp, 6, 3, 2, {}, Exec::parallel);
  ASSERT_EQ(a.candidates.size(), b.candidates.size());
  for (std::size_t i = 0; i < a.candidates.size(); ++i) EXPECT_EQ(a.candidates[i].score, b.candidates[i].score);
  EXPECT_EQ(a.best.seed, b.best.seed);
}

TEST(Shapley, SingleFeatureModel) {
  const auto d = nonlinear(100, 16);
  const auto m = train_gbr(d.X, d.y, GbrParams{40, 0.2, 3, 1.0, 1, 1}, {0});
  for (std::size_t i = 0; i < 5; ++i) {
    const auto e = shapley_explain(m, d.X.row(i), d.X);
    EXPECT_NEAR(e.values[0], e.prediction - e.base_value, 1e-12);
    for (std::size_t c = 1; c < 5; ++c) EXPECT_EQ(e.values[c], 0.0);
  }
}

TEST(Shapley, LocalAccuracy) {
  const auto d = nonlinear(200, 17);
  const auto m = train_gbr(d.X, d.y, GbrParams{80, 0.1, 4, 0.8, 1, 3});
  Matrix bg(50, 5);
  std::copy(d.X.data.begin(), d.X.data.begin() + 250, bg.data.begin());
  for (std::size_t i = 100; i < 200; ++i) {
    const auto e = shapley_explain(m, d.X.row(i), bg);
    const double sum = std::accumulate(e.values.begin(), e.values.end(), e.base_value);
    EXPECT_NEAR(sum, m.predict(d.X.row(i)), 1e-6);
    EXPECT_EQ(e.prediction, m.predict(d.X.row(i)));
  }
}

TEST(Shapley, LinearClosedForm) {
  const std::size_t n = 201;
  Matrix X(n, 2);
  std::vector<double> y(n);
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < n; ++i) {
    X.at(i, 0) = static_cast<double>(i) / (n - 1);
    X.at(i, 1) = u(rng);
    y[i] = 2 * X.at(i, 0);
  }
  const auto m = train_gbr(X, y, GbrParams{300, 0.2, 6, 1.0, 1, 1});
  const double mean_x0 = 0.5;
  for (std::size_t i = 0; i < n; i += 10) {
    const double want = 2 * (X.at(i, 0) - mean_x0);
    if (std::abs(want) < 0.2) continue;
    const auto e = shapley_explain(m, X.row(i), X);
    EXPECT_NEAR(e.values[0], want, 0.05 * std::abs(want)) << i;
  }
}

TEST(Shapley, DuplicatedFeatureSplitsAttribution) {
  const auto d = nonlinear(150, 19);
  const auto m = train_gbr(d.X, d.y, GbrParams{60, 0.1, 3, 1.0, 1, 2}, {0, 1, 2});

  // Append a copy of column 0 and move every other tree's splits onto it.
  Matrix X2(d.X.rows, 6);
  for (std::size_t i = 0; i < d.X.rows; ++i) {
    for (std::size_t c = 0; c < 5; ++c) X2.at(i, c) = d.X.at(i, c);
    X2.at(i, 5) = d.X.at(i, 0);
  }
  BoostedModel m2 = m;
  m2.feature_mask = {0, 1, 2, 5};
  for (std::size_t t = 1; t < m2.trees.size(); t += 2)
    for (auto& node : m2.trees[t].nodes)
      if (node.feature == 0) node.feature = 5;
  EXPECT_EQ(m.predict(d.X), m2.predict(X2));

  Matrix bg(40, 5), bg2(40, 6);
  std::copy(d.X.data.begin(), d.X.data.begin() + 200, bg.data.begin());
  std::copy(X2.data.begin(), X2.data.begin() + 240, bg2.data.begin());
  for (std::size_t i = 50; i < 60; ++i) {
    const auto a = shapley_explain(m, d.X.row(i), bg);
    const auto b = shapley_explain(m2, X2.row(i), bg2);
    EXPECT_NEAR(b.values[0] + b.values[5], a.values[0], 1e-6);
    EXPECT_NE(b.values[5], 0.0);
    EXPECT_NEAR(b.values[1], a.values[1], 1e-6);
    EXPECT_NEAR(b.values[2], a.values[2], 1e-6);
  }

  // Trained directly on the duplicated matrix, the copy never wins a tie.
  const auto m3 = train_gbr(X2, d.y, GbrParams{60, 0.1, 3, 1.0, 1, 2}, {0, 1, 2, 5});
  const auto c = shapley_explain(m3, X2.row(3), bg2);
  const auto a = shapley_explain(m, d.X.row(3), bg);
  EXPECT_NEAR(c.values[0] + c.values[5], a.values[0], 1e-6);
}

TEST(Shapley, PerTreeMatchesWholeModelEnumeration) {
  const auto d = nonlinear(120, 20);
  const auto m = train_gbr(d.X, d.y, GbrParams{25, 0.2, 3, 0.8, 1, 4});
  Matrix bg(15, 5);
  std::copy(d.X.data.begin(), d.X.data.begin() + 75, bg.data.begin());
  for (std::size_t i = 20; i < 25; ++i) {
    const auto a = shapley_explain(m, d.X.row(i), bg, Exec::parallel);
    const auto s = shapley_explain(m, d.X.row(i), bg, Exec::serial);
    const auto r = reference::shapley_explain(m, d.X.row(i), bg);
    EXPECT_EQ(a.values, s.values);
    EXPECT_NEAR(a.base_value, r.base_value, 1e-12);
    for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(a.values[c], r.values[c], 1e-9);
  }
}

TEST(Shapley, Errors) {
  Matrix X(30, 16);
  std::vector<double> y(30);
  for (std::size_t i = 0; i < 30; ++i) {
    for (std::size_t c = 0; c < 16; ++c) X.at(i, c) = static_cast<double>((i * (c + 3)) % 7);
    y[i] = static_cast<double>(i % 5);
  }
  const auto m = train_gbr(X, y, GbrParams{5, 0.1, 2, 1.0, 1, 1});
  EXPECT_THROW(shapley_explain(m, X.row(0), X), ValidationError);
  const auto small = train_gbr(X, y, GbrParams{5, 0.1, 2, 1.0, 1, 1}, {0, 1});
  EXPECT_THROW(shapley_explain(small, X.row(0), Matrix(0, 16)), ValidationError);
}

TEST(ModelJson, RoundTripPredictsIdentically) {
  const auto d = nonlinear(150, 21);
  auto m = train_gbr(d.X, d.y, GbrParams{50, 0.13, 4, 0.7, 2, 8}, {0, 1, 2, 4});
  m.feature_names = {"a", "b", "c", "d", "e"};
  const auto j = to_json(m);
  const auto back = boosted_model_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.predict(d.X), m.predict(d.X));
  EXPECT_EQ(back.feature_mask, m.feature_mask);
  EXPECT_EQ(back.feature_names, m.feature_names);
  EXPECT_EQ(to_json(back).dump(), j.dump());
  auto bad = j;
  bad["schema_version"] = 2;
  EXPECT_THROW(boosted_model_from_json(bad), ValidationError);
}
