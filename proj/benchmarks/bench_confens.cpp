// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "confens/confens.hpp"

using namespace confens;

namespace {

std::vector<double> distribution(std::size_t v, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(v);
  double sum = 0;
  for (auto& x : p) sum += (x = e(gen));
  for (auto& x : p) x /= sum;
  return p;
}

SimSpec bench_spec() {
  SimSpec s;
  s.seed = 1;
  s.models = {"m0", "m1", "m2"};
  s.datasets = {{"d0", 0}, {"d1", 1}, {"d2", 2}};
  s.match_quality = {{0.5, 0.4, 0.4}, {0.4, 0.5, 0.4}, {0.4, 0.4, 0.5}};
  s.error_rate = {{0.05, 0.25, 0.25}, {0.25, 0.05, 0.25}, {0.25, 0.25, 0.05}};
  s.train_utterances = 100;
  s.validation_utterances = 100;
  s.test_utterances = 10;
  s.min_steps = 20;
  s.max_steps = 80;
  return s;
}

const Corpus& bench_corpus() {
  static const Corpus corpus = simulate(bench_spec());
  return corpus;
}

}  // namespace

static void BM_StepConfidence(benchmark::State& state) {
  const auto p = distribution(static_cast<std::size_t>(state.range(0)), 3);
  ConfidenceConfig cfg = presets::default_confidence();
  for (auto _ : state) benchmark::DoNotOptimize(step_confidence(p, cfg));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_StepConfidence)->Arg(32)->Arg(256)->Arg(1024);

static void BM_TemperatureSweep(benchmark::State& state) {
  const auto& corpus = bench_corpus();
  const auto records = canonical_split(corpus, Split::validation);
  const auto& s = select_layer(*records.front(), "m0", 0);
  const TemperatureSweep sweep(SearchSpace::full().alphas);
  std::vector<double> out(sweep.size());
  for (auto _ : state) {
    sweep.evaluate(s, 1.0, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(out.size()));
}
BENCHMARK(BM_TemperatureSweep);

static void BM_TrainSelector(benchmark::State& state) {
  const auto& corpus = bench_corpus();
  GridSearchOptions o;
  o.lr_grid = {{0.01, ClassWeightSpec::uniform()}};
  for (auto _ : state) benchmark::DoNotOptimize(fit_config(corpus, presets::default_confidence(), o));
}
BENCHMARK(BM_TrainSelector)->Unit(benchmark::kMillisecond);

static void BM_Wer(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 gen(5);
  std::vector<std::string> ref(n);
  std::vector<std::string> hyp(n);
  for (auto& w : ref) w = std::to_string(gen() % 50);
  for (auto& w : hyp) w = std::to_string(gen() % 50);
  for (auto _ : state) benchmark::DoNotOptimize(wer(ref, hyp));
}
BENCHMARK(BM_Wer)->Arg(20)->Arg(200);

BENCHMARK_MAIN();
