// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "confens/confens.hpp"
#include "wer_oracle.hpp"

using namespace confens;

namespace {

std::vector<std::string> words(const char* text) { return split_words(text); }

UtteranceRecord record(const std::string& id, const std::string& ds, const char* ref,
                       const std::map<std::string, const char*>& hyps) {
  UtteranceRecord r;
  r.utterance_id = id;
  r.dataset_id = ds;
  r.reference_words = words(ref);
  for (const auto& [model, text] : hyps) {
    ModelOutput out;
    out.hypothesis_words = words(text);
    r.hypotheses.emplace(model, std::move(out));
  }
  return r;
}

// Two models, three datasets (a, b matched to "base"; c to "tuned"), test split only.
Corpus toy_corpus() {
  Corpus c;
  c.manifest.models = {"base", "tuned"};
  c.manifest.datasets = {{"a", "base", Split::test, "a.jsonl"},
                         {"b", "base", Split::test, "b.jsonl"},
                         {"c", "tuned", Split::test, "c.jsonl"}};
  c.records = {
      {record("a1", "a", "x y z", {{"base", "x y z"}, {"tuned", "x q z"}}),
       record("a2", "a", "x y", {{"base", "x"}, {"tuned", "x y"}})},
      {record("b1", "b", "p q r s", {{"base", "p q r s"}, {"tuned", "p r s t"}})},
      {record("c1", "c", "m n", {{"base", "k k k"}, {"tuned", "m n"}}),
       record("c2", "c", "m", {{"base", "m"}, {"tuned", "n"}})},
  };
  return c;
}

}  // namespace

TEST_CASE("WER counts") {
  auto r = wer(words("a b c d"), words("a x c d e"));
  CHECK(r.substitutions == 1);
  CHECK(r.insertions == 1);
  CHECK(r.deletions == 0);
  CHECK(r.wer == doctest::Approx(0.5));
  r = wer(words("a b c"), words(""));
  CHECK(r.deletions == 3);
  CHECK(r.wer == 1.0);
  r = wer(words("a"), words("b c d"));
  CHECK(r.edits() == 3);
  CHECK(r.wer == 3.0);
  CHECK(wer(words("same words"), words("same words")).wer == 0.0);
  CHECK_THROWS_AS(wer(words(""), words("a")), ValidationError);
}

TEST_CASE("WER matches exhaustive alignment enumeration") {
  const std::vector<std::string> vocab = {"a", "b", "c", "d"};
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> ref(1 + gen() % 6);
    std::vector<std::string> hyp(gen() % 7);
    for (auto& w : ref) w = vocab[gen() % 4];
    for (auto& w : hyp) w = vocab[gen() % 4];
    const auto r = wer(ref, hyp);
    CHECK(r.edits() == oracle::brute_force_edits(ref, hyp));
    CHECK(r.reference_length == ref.size());
  }
}

TEST_CASE("A_avg is the unweighted mean of per-dataset accuracy") {
  const Corpus c = toy_corpus();
  const Predictions p = {{"a1", 0}, {"a2", 1}, {"b1", 0}, {"c1", 1}, {"c2", 1}};
  const auto acc = per_dataset_accuracy(p, c, Split::test);
  CHECK(acc.at("a") == 0.5);
  CHECK(acc.at("b") == 1.0);
  CHECK(acc.at("c") == 1.0);
  CHECK(a_avg(acc) == doctest::Approx(2.5 / 3));
  Predictions missing = p;
  missing.erase("c2");
  CHECK_THROWS_AS(a_avg(missing, c, Split::test), ValidationError);
}

TEST_CASE("ensemble WER is pooled per dataset and can beat the matched model") {
  const Corpus c = toy_corpus();
  // c2: the "wrong" base model is perfect, the matched tuned model is not.
  const Predictions p = {{"a1", 0}, {"a2", 1}, {"b1", 0}, {"c1", 1}, {"c2", 0}};
  const auto report = evaluate_predictions(c, Split::test, p);
  CHECK(report.wer.at("base").at("a") == doctest::Approx(1.0 / 5));
  CHECK(report.wer.at("ensemble").at("a") == doctest::Approx(0.0));
  CHECK(report.wer.at("oracle").at("a") == doctest::Approx(1.0 / 5));
  CHECK(report.wer.at("ensemble").at("c") == doctest::Approx(0.0));
  CHECK(report.wer.at("ensemble").at("c") < report.wer.at("tuned").at("c"));
  CHECK(report.wer.at("oracle").at("c") == doctest::Approx(1.0 / 3));
  CHECK(report.systems == std::vector<std::string>{"base", "tuned", "ensemble", "oracle"});
}

TEST_CASE("utterances without a reference are left out of WER but still scored for accuracy") {
  Corpus c = toy_corpus();
  c.records[0][1].reference_words.clear();
  const Predictions p = {{"a1", 0}, {"a2", 0}, {"b1", 0}, {"c1", 1}, {"c2", 1}};
  const auto report = evaluate_predictions(c, Split::test, p);
  CHECK(report.counts.at("a").skipped_without_reference == 1);
  CHECK(report.wer.at("base").at("a") == 0.0);
  CHECK(report.per_dataset_accuracy.at("a") == 1.0);
}

TEST_CASE("report renders a systems x datasets grid") {
  const Corpus c = toy_corpus();
  const Predictions p = {{"a1", 0}, {"a2", 0}, {"b1", 0}, {"c1", 1}, {"c2", 1}};
  auto report = evaluate_predictions(c, Split::test, p);
  report.systems = {"base", "tuned"};
  const auto csv = report_to_csv(report);
  const auto lines = [&] {
    std::vector<std::string> out;
    std::istringstream in(csv);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
  }();
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "system,a,b,c");
  CHECK(lines[1].rfind("wer:base,", 0) == 0);
  CHECK(lines[2].rfind("wer:tuned,", 0) == 0);
  CHECK(lines[3].rfind("selection_accuracy,", 0) == 0);
  CHECK(lines[4] == "a_avg,100.00");
  CHECK(report_to_table(report).find("A_avg: 100.00%") != std::string::npos);

  const auto back = report_from_json(to_json(report));
  CHECK(to_json(back) == to_json(report));
}
