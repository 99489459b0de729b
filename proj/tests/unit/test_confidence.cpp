// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "confens/confens.hpp"
#include "entropy_oracle.hpp"
#include "fixtures.hpp"

using namespace confens;
using confens::testing::prob_stream;

namespace {

std::vector<double> random_distribution(std::mt19937_64& gen, std::size_t v) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(v);
  double sum = 0;
  for (auto& x : p) sum += (x = e(gen));
  for (auto& x : p) x /= sum;
  return p;
}

}  // namespace

TEST_CASE("renyi linear example: one peaked step over four symbols") {
  const std::vector<double> p = {0.7, 0.1, 0.1, 0.1};
  ConfidenceConfig cfg = presets::default_confidence();
  CHECK(step_confidence(p, cfg) == doctest::Approx(0.08036).epsilon(1e-4));
}

TEST_CASE("untuned max-prob multiplies emitted probabilities, blanks included") {
  const auto s = prob_stream({{0.9, 0.1}, {1.0, 0.0}, {0.2, 0.8}}, {0, 0, 1});
  CHECK(stream_confidence(s, presets::untuned_max_prob()) == doctest::Approx(0.72).epsilon(1e-12));
}

TEST_CASE("presets") {
  const auto d = presets::default_confidence();
  CHECK(d.measure == Measure::renyi);
  CHECK(d.normalization == Normalization::linear);
  CHECK(d.aggregation == Aggregation::mean);
  CHECK(d.exclude_blanks);
  CHECK(d.temperature == 1.0);
  CHECK(d.alpha == 0.25);
  CHECK(confidence_preset("default") == d);
  CHECK(confidence_preset("untuned-max-prob") == presets::untuned_max_prob());
  CHECK_THROWS_AS(confidence_preset("tuned"), ValidationError);
}

TEST_CASE("every measure and normalization matches the high-precision oracle") {
  std::mt19937_64 gen(1234);
  const std::vector<double> alphas = {0.1, 0.2, 0.25, 0.33, 0.5, 1.0, 2.0};
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t v = 2 + gen() % 63;
    const auto p = random_distribution(gen, v);
    const double alpha = alphas[gen() % alphas.size()];
    for (Measure m : {Measure::max_prob, Measure::gibbs, Measure::tsallis, Measure::renyi}) {
      for (Normalization n : {Normalization::linear, Normalization::exponential}) {
        ConfidenceConfig cfg{m, n, Aggregation::mean, false, 1.0, alpha};
        const double expected =
            oracle::confidence(p, std::string(to_string(m)), std::string(to_string(n)), alpha);
        CHECK(std::abs(step_confidence(p, cfg) - expected) <= 1e-10);
      }
    }
  }
}

TEST_CASE("raw entropies match the oracle") {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_distribution(gen, 2 + gen() % 30);
    for (double alpha : {0.1, 0.5, 3.0}) {
      CHECK(std::abs(entropy(p, Measure::gibbs, alpha) -
                     static_cast<double>(oracle::entropy(p, "gibbs", alpha))) < 1e-12);
      CHECK(std::abs(entropy(p, Measure::tsallis, alpha) -
                     static_cast<double>(oracle::entropy(p, "tsallis", alpha))) < 1e-11);
      CHECK(std::abs(entropy(p, Measure::renyi, alpha) -
                     static_cast<double>(oracle::entropy(p, "renyi", alpha))) < 1e-11);
    }
  }
}

TEST_CASE("tsallis and renyi approach gibbs as alpha approaches one") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_distribution(gen, 2 + gen() % 20);
    const double g = entropy(p, Measure::gibbs, 1.0);
    for (double a : {1.0 - 1e-6, 1.0 + 1e-6}) {
      CHECK(std::abs(entropy(p, Measure::tsallis, a) - g) < 1e-4);
      CHECK(std::abs(entropy(p, Measure::renyi, a) - g) < 1e-4);
    }
    CHECK(entropy(p, Measure::tsallis, 1.0) == g);
    CHECK(entropy(p, Measure::renyi, 1.0) == g);
  }
}

TEST_CASE("confidence is 1 for a one-hot step and 0 for a uniform step") {
  for (Measure m : {Measure::gibbs, Measure::tsallis, Measure::renyi}) {
    for (Normalization n : {Normalization::linear, Normalization::exponential}) {
      for (double a : {0.25, 1.0, 2.0}) {
        ConfidenceConfig cfg{m, n, Aggregation::mean, false, 1.0, a};
        CHECK(step_confidence(std::vector<double>{0.0, 1.0, 0.0}, cfg) == doctest::Approx(1.0));
        CHECK(step_confidence(std::vector<double>(5, 0.2), cfg) == doctest::Approx(0.0).epsilon(1e-12));
      }
    }
  }
  CHECK(max_entropy(4, Measure::gibbs, 1.0) == doctest::Approx(std::log(4.0)));
  CHECK(max_entropy(4, Measure::tsallis, 0.5) == doctest::Approx((1 - std::pow(4.0, 0.5)) / (0.5 - 1)));
  CHECK_THROWS(entropy(std::vector<double>{1.0}, Measure::max_prob, 1.0));
}

TEST_CASE("temperature: logits use softmax(z/T), probabilities are re-sharpened") {
  const std::vector<double> z = {2.0, -1.0, 0.5, 0.0};
  for (double t : {0.05, 0.5, 1.0, 4.0}) {
    const auto p = step_distribution(z, ValueKind::logits, t);
    const auto expected = oracle::softmax(z, t);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(p[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
  const auto q = oracle::softmax(z, 1.0);
  const auto back = step_distribution(q, ValueKind::probabilities, 0.5);
  const auto direct = oracle::softmax(z, 0.5);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(back[i] == doctest::Approx(direct[i]).epsilon(1e-10));

  // Extreme logits must not overflow.
  const auto sharp = step_distribution(std::vector<double>{1000.0, 0.0}, ValueKind::logits, 0.01);
  CHECK(sharp[0] == 1.0);
  CHECK(std::isfinite(sharp[1]));
  CHECK_THROWS_AS(step_distribution(std::vector<double>{0.0, 0.0}, ValueKind::probabilities, 1.0),
                  ValidationError);
}

TEST_CASE("aggregation") {
  const std::vector<double> c = {0.5, 0.25, 1.0};
  CHECK(aggregate(c, Aggregation::min) == 0.25);
  CHECK(aggregate(c, Aggregation::max) == 1.0);
  CHECK(aggregate(c, Aggregation::mean) == doctest::Approx(1.75 / 3));
  CHECK(aggregate(c, Aggregation::product) == doctest::Approx(0.125));
  CHECK(aggregate(std::vector<double>{0.5, 0.0}, Aggregation::product) == 0.0);
  // Long products stay representable through log-space accumulation.
  std::vector<double> many(2000, 0.5);
  CHECK(aggregate(many, Aggregation::product) == std::pow(0.5, 2000));
  CHECK_THROWS_AS(aggregate(std::vector<double>{}, Aggregation::mean), ValidationError);
}

TEST_CASE("blank exclusion and the all-blank fallback") {
  const auto s = prob_stream({{0.9, 0.05, 0.05}, {0.2, 0.6, 0.2}, {0.5, 0.1, 0.4}}, {0, 1, 0});
  ConfidenceConfig cfg{Measure::max_prob, Normalization::linear, Aggregation::mean, true, 1.0, 1.0};
  CHECK(stream_confidence(s, cfg) == doctest::Approx(0.6));
  cfg.exclude_blanks = false;
  CHECK(stream_confidence(s, cfg) == doctest::Approx((0.9 + 0.6 + 0.5) / 3));

  const auto blanks = prob_stream({{0.9, 0.1}, {0.7, 0.3}}, {0, 0});
  cfg.exclude_blanks = true;
  CHECK(stream_confidence(blanks, cfg) == doctest::Approx(0.8));
}

TEST_CASE("config JSON round trip and validation") {
  ConfidenceConfig cfg{Measure::tsallis, Normalization::exponential, Aggregation::min, false, 0.25, 0.33};
  CHECK(confidence_config_from_json(to_json(cfg)) == cfg);
  CHECK(confidence_config_from_json(nlohmann::json("default")) == presets::default_confidence());
  CHECK(confidence_config_from_json(nlohmann::json{{"preset", "untuned-max-prob"}}) ==
        presets::untuned_max_prob());
  CHECK_THROWS_AS(confidence_config_from_json(nlohmann::json{{"measure", "shannon"}}), ValidationError);
  CHECK_THROWS_AS(confidence_config_from_json(nlohmann::json{{"temperature", 0.0}}), ValidationError);
  CHECK_THROWS_AS(confidence_config_from_json(nlohmann::json{{"alpha", -1.0}}), ValidationError);
}

TEST_CASE("temperature sweep is bit-identical to per-config evaluation") {
  const SimSpec spec = confens::testing::small_spec(2);
  const Corpus corpus = simulate(spec);
  const std::vector<double> alphas = SearchSpace::full().alphas;
  const TemperatureSweep sweep(alphas);
  const auto configs = enumerate_space(SearchSpace::full());
  std::vector<double> out(sweep.size());
  int checked = 0;
  for (const auto& r : corpus.records.front()) {
    if (checked++ == 3) break;
    const auto& s = select_layer(r, "m1", 0);
    for (double t : {0.05, 1.0, 10.0}) {
      sweep.evaluate(s, t, out);
      for (auto cfg : configs) {
        cfg.temperature = t;
        CHECK(out[sweep.index(cfg)] == stream_confidence(s, cfg));
      }
    }
  }
}

TEST_CASE("confidence matrix follows manifest model order for any worker count") {
  const Corpus corpus = simulate(confens::testing::small_spec(3));
  const auto m = confidence_matrix(corpus, presets::default_confidence(), {0, std::nullopt, 2});
  CHECK(m.models == corpus.manifest.models);
  CHECK(m.rows.size() == corpus.num_records());
  for (const auto& [_, row] : m.rows) {
    REQUIRE(row.size() == 3);
    for (double c : row) CHECK((c >= 0.0 && c <= 1.0));
  }
  const auto serial = confidence_matrix(corpus, presets::default_confidence(), {0, std::nullopt, 1});
  CHECK(serial.rows == m.rows);
}
