// Serial reference paths against the OpenMP kernels. Set OMP_NUM_THREADS to
// compare thread counts.

#include <random>

#include <benchmark/benchmark.h>

#include "palsim/discomfort_model.hpp"
#include "palsim/distortion_exposure.hpp"
#include "palsim/distortion_field.hpp"

using namespace palsim;

namespace {

const DistortionField& lens_field() {
  static const DistortionField f = synth_pal_field(lens_spec_for(LensCondition::plano_add3), 401, 401, 1.0);
  return f;
}

struct Fitted {
  Matrix X;
  std::vector<double> y;
  std::vector<int> folds;
  BoostedModel model;
};

const Fitted& fitted() {
  static const Fitted d = [] {
    Fitted f;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    f.X = Matrix(450, 12);
    f.y.resize(450);
    for (std::size_t i = 0; i < 450; ++i) {
      for (std::size_t c = 0; c < 12; ++c) f.X.at(i, c) = u(rng);
      f.y[i] = std::sin(3 * f.X.at(i, 0)) + f.X.at(i, 1) * f.X.at(i, 2) + 0.5 * f.X.at(i, 3) + 0.1 * u(rng);
      f.folds.push_back(static_cast<int>(i / 25) % 5);
    }
    f.model = train_gbr(f.X, f.y, GbrParams{200, 0.05, 3, 0.8, 1, 1});
    return f;
  }();
  return d;
}

void BM_DisplacementMap_Reference(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(reference::displacement_map(lens_field()));
}
void BM_DisplacementMap_Parallel(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(displacement_map(lens_field(), Exec::parallel));
}
void BM_Decompose_Reference(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(reference::decompose(lens_field()));
}
void BM_Decompose_Parallel(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(decompose(lens_field(), Exec::parallel));
}

Matrix background() {
  const auto& f = fitted();
  Matrix bg(100, f.X.cols);
  std::copy(f.X.data.begin(), f.X.data.begin() + static_cast<std::ptrdiff_t>(100 * f.X.cols), bg.data.begin());
  return bg;
}

void BM_Shapley_Serial(benchmark::State& s) {
  const Matrix bg = background();
  for (auto _ : s) benchmark::DoNotOptimize(shapley_explain(fitted().model, fitted().X.row(300), bg, Exec::serial));
}
void BM_Shapley_Parallel(benchmark::State& s) {
  const Matrix bg = background();
  for (auto _ : s) benchmark::DoNotOptimize(shapley_explain(fitted().model, fitted().X.row(300), bg, Exec::parallel));
}

void run_cv(benchmark::State& s, Exec exec) {
  const auto cands = draw_candidates(SearchSpace{50, 150}, 8, 3);
  for (auto _ : s)
    benchmark::DoNotOptimize(cross_validate(fitted().X, fitted().y, fitted().folds, cands, {}, exec));
}
void BM_CrossValidate_Serial(benchmark::State& s) { run_cv(s, Exec::serial); }
void BM_CrossValidate_Parallel(benchmark::State& s) { run_cv(s, Exec::parallel); }

}  // namespace

BENCHMARK(BM_DisplacementMap_Reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DisplacementMap_Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Decompose_Reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Decompose_Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Shapley_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Shapley_Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CrossValidate_Serial)->Unit(benchmark::kMillisecond)->Iterations(1);
BENCHMARK(BM_CrossValidate_Parallel)->Unit(benchmark::kMillisecond)->Iterations(1);

BENCHMARK_MAIN();
