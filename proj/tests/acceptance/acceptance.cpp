// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.
//
//   confens_acceptance [path/to/confens]
//
// With the CLI path, the threshold-objective criterion also runs the three
// objectives through the command-line tool.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "confens/confens.hpp"
#include "entropy_oracle.hpp"
#include "fixtures.hpp"
#include "wer_oracle.hpp"

using namespace confens;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << x;
  return s.str();
}

std::string sci(double x) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << x;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> random_distribution(std::mt19937_64& gen, std::size_t v) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(v);
  double sum = 0;
  for (auto& x : p) sum += (x = e(gen));
  for (auto& x : p) x /= sum;
  return p;
}

// ------------------------------------------------------------------ 1

Outcome entropy_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(20260101);
  const std::vector<double> alphas = SearchSpace::full().alphas;
  double worst = 0.0;
  double worst_limit = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t v = 2 + gen() % 63;
    const auto p = random_distribution(gen, v);
    const double alpha = alphas[gen() % alphas.size()];
    for (Measure m : {Measure::max_prob, Measure::gibbs, Measure::tsallis, Measure::renyi}) {
      for (Normalization n : {Normalization::linear, Normalization::exponential}) {
        const ConfidenceConfig cfg{m, n, Aggregation::mean, false, 1.0, alpha};
        const double expected =
            oracle::confidence(p, std::string(to_string(m)), std::string(to_string(n)), alpha);
        worst = std::max(worst, std::abs(step_confidence(p, cfg) - expected));
      }
    }
    for (Measure m : {Measure::tsallis, Measure::renyi}) {
      for (double a : {1.0 - 1e-6, 1.0 + 1e-6}) {
        worst_limit = std::max(worst_limit, std::abs(entropy(p, m, a) - entropy(p, Measure::gibbs, 1.0)));
        for (Normalization n : {Normalization::linear, Normalization::exponential}) {
          const double c = step_confidence(p, {m, n, Aggregation::mean, false, 1.0, a});
          const double g = step_confidence(p, {Measure::gibbs, n, Aggregation::mean, false, 1.0, 1.0});
          worst_limit = std::max(worst_limit, std::abs(c - g));
        }
      }
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst <= 1e-10 && worst_limit <= 1e-4 && elapsed < 10.0,
          "max |err| " + sci(worst) + " (<= 1e-10), alpha->1 gap " + sci(worst_limit) +
              " (<= 1e-4), " + fmt(elapsed, 2) + " s (< 10 s)"};
}

// ------------------------------------------------------------------ 2

Outcome grid_cardinality() {
  const auto full = enumerate_space(SearchSpace::full()).size();
  const auto mp = enumerate_space(SearchSpace::max_prob_only()).size();
  return {full == 2960 && mp == 80, "full " + std::to_string(full) + " (2960), max-prob " + std::to_string(mp) + " (80)"};
}

// ------------------------------------------------------------------ 3

Outcome confidence_ordering() {
  const SimSpec spec = stress_preset("overconfident");
  const Corpus corpus = simulate(spec);
  GridSearchOptions o;
  o.seed = 42;
  const double untuned = fit_config(corpus, presets::untuned_max_prob(), o).a_avg;
  const double def = fit_config(corpus, presets::default_confidence(), o).a_avg;
  const auto t0 = std::chrono::steady_clock::now();
  const TuningResult tuned = grid_search(corpus, SearchSpace::full(), o);
  const double elapsed = seconds_since(t0);
  const double best = tuned.validation_a_avg;
  const bool pass = best >= def && def >= untuned && def - untuned >= 0.02 && elapsed < 1200.0 &&
                    tuned.leaderboard.size() == 2960;
  return {pass, "tuned " + fmt(best) + " >= default " + fmt(def) + " >= untuned " + fmt(untuned) +
                    ", gap " + fmt(def - untuned) + " (>= 0.02); grid of " +
                    std::to_string(tuned.leaderboard.size()) + " in " + fmt(elapsed, 1) +
                    " s (< 1200 s); best " + tuned.best_config.describe()};
}

// ------------------------------------------------------------------ 4, 5

double spearman(const std::vector<double>& y) {
  // x is 1..n; ties in y get average ranks.
  const std::size_t n = y.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && y[idx[j + 1]] == y[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = (static_cast<double>(i + j) / 2.0) + 1.0;
    i = j + 1;
  }
  double mx = (static_cast<double>(n) + 1) / 2.0;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i + 1) - mx;
    const double dy = rank[i] - mx;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return syy == 0 ? 0.0 : sxy / std::sqrt(sxx * syy);
}

struct TruncationSweep {
  std::vector<std::string> labels;
  std::vector<double> confidence_only;
  std::vector<double> aux_only;
  std::vector<double> fused;
};

const TruncationSweep& short_audio_sweep() {
  static const TruncationSweep sweep = [] {
    const SimSpec spec = stress_preset("short_audio");
    const Corpus corpus = simulate(spec);
    TruncationSweep s;
    const std::vector<std::optional<double>> durations = {3.0, 5.0, 10.0, 15.0, std::nullopt};
    for (const auto& d : durations) {
      GridSearchOptions o;
      o.seed = 42;
      o.duration_s = d;
      s.labels.push_back(d ? std::to_string(static_cast<int>(*d * spec.frame_rate_hz)) + " steps" : "full");
      s.confidence_only.push_back(fit_config(corpus, presets::default_confidence(), o).a_avg);
      o.aux = {{"lid", spec.models.size(), false}};
      s.fused.push_back(fit_config(corpus, presets::default_confidence(), o).a_avg);
      o.use_confidences = false;
      s.aux_only.push_back(fit_config(corpus, presets::default_confidence(), o).a_avg);
    }
    return s;
  }();
  return sweep;
}

Outcome duration_trend() {
  const auto& s = short_audio_sweep();
  const double rho = spearman(s.confidence_only);
  std::string detail = "accuracy";
  for (std::size_t i = 0; i < s.labels.size(); ++i) detail += " " + s.labels[i] + "=" + fmt(s.confidence_only[i]);
  const double gain = s.confidence_only.back() - s.confidence_only.front();
  detail += "; spearman " + fmt(rho, 3) + " (> 0), full - 30 steps " + fmt(gain) + " (>= 0.01)";
  return {rho > 0.0 && gain >= 0.01, detail};
}

Outcome fusion() {
  const auto& s = short_audio_sweep();
  const bool band = s.aux_only.front() >= 0.85 && s.aux_only.front() <= 0.95 &&
                    s.confidence_only.front() >= 0.85 && s.confidence_only.front() <= 0.95;
  bool never_worse = true;
  for (std::size_t i = 0; i < s.fused.size(); ++i) {
    never_worse = never_worse && s.fused[i] >= std::max(s.confidence_only[i], s.aux_only[i]) - 0.002;
  }
  const bool strictly = s.fused.front() > s.confidence_only.front() && s.fused.front() > s.aux_only.front();
  std::string detail = "at " + s.labels.front() + ": confidence " + fmt(s.confidence_only.front()) + ", aux " +
                       fmt(s.aux_only.front()) + " (both in [0.85, 0.95]), fused " + fmt(s.fused.front()) +
                       "; fused >= max - 0.002 at all truncations: " + (never_worse ? "yes" : "no");
  return {band && never_worse && strictly, detail};
}

// ------------------------------------------------------------------ 6

int run_cli(const std::string& cli, const std::vector<std::string>& args) {
  std::string cmd = "\"" + cli + "\"";
  for (const auto& a : args) cmd += " \"" + a + "\"";
  cmd += " > /dev/null";
  return std::system(cmd.c_str());
}

Outcome threshold_tradeoff(const std::string& cli) {
  const SimSpec spec = stress_preset("domain_shift");
  const Corpus corpus = simulate(spec);
  GridSearchOptions o;
  o.seed = 42;
  SelectorModel selector;
  fit_config(corpus, presets::default_confidence(), o, &selector);

  const auto records = canonical_split(corpus, Split::validation);
  const auto features =
      selector_features(corpus, records, presets::default_confidence(), selector.layout, std::nullopt);
  std::vector<std::string> ids;
  for (const auto* r : records) ids.push_back(r->dataset_id);

  const auto ft = tune_threshold(selector, features, ThresholdObjective::favor_target, ids);
  const auto fb = tune_threshold(selector, features, ThresholdObjective::favor_base, ids);
  const auto bal = tune_threshold(selector, features, ThresholdObjective::balanced, ids);

  // Sweep every distinct posterior between the favor-target and favor-base thresholds.
  std::set<double> thresholds = {ft.threshold, fb.threshold};
  for (const auto& f : features) {
    const double p2 = raw_posterior(selector, f.values)[1];
    if (p2 > ft.threshold && p2 < fb.threshold) thresholds.insert(p2);
  }
  bool nested = true;
  std::set<std::size_t> prev_base;    // base-domain utterances routed to the base model
  std::set<std::size_t> prev_target;  // target-domain utterances routed to the finetuned model
  bool first = true;
  for (double th : thresholds) {
    SelectorModel m = selector;
    m.threshold = th;
    std::set<std::size_t> base_routed;
    std::set<std::size_t> target_routed;
    for (std::size_t i = 0; i < features.size(); ++i) {
      const std::size_t pick = predict(m, features[i]).index;
      const bool target_domain = *features[i].true_label == 1;
      if (!target_domain && pick == 0) base_routed.insert(i);
      if (target_domain && pick == 1) target_routed.insert(i);
    }
    if (!first) {
      nested = nested && std::includes(base_routed.begin(), base_routed.end(), prev_base.begin(), prev_base.end());
      nested = nested &&
               std::includes(prev_target.begin(), prev_target.end(), target_routed.begin(), target_routed.end());
    }
    prev_base = std::move(base_routed);
    prev_target = std::move(target_routed);
    first = false;
  }

  const auto pt = operating_point(ft, features, ft.threshold, ids);
  const auto pb = operating_point(fb, features, fb.threshold, ids);
  const auto pn = operating_point(bal, features, bal.threshold, ids);
  std::set<std::pair<double, double>> points = {{pt.base_accuracy, pt.target_accuracy},
                                                {pn.base_accuracy, pn.target_accuracy},
                                                {pb.base_accuracy, pb.target_accuracy}};
  bool distinct = points.size() == 3 && ft.threshold < bal.threshold && bal.threshold < fb.threshold;
  std::string detail = "sweep of " + std::to_string(thresholds.size()) + " thresholds nested: " +
                       (nested ? "yes" : "no") + "; favor-target th=" + fmt(ft.threshold) + " (" +
                       fmt(pt.base_accuracy) + "/" + fmt(pt.target_accuracy) + "), balanced th=" +
                       fmt(bal.threshold) + " (" + fmt(pn.base_accuracy) + "/" + fmt(pn.target_accuracy) +
                       "), favor-base th=" + fmt(fb.threshold) + " (" + fmt(pb.base_accuracy) + "/" +
                       fmt(pb.target_accuracy) + ")";

  if (!cli.empty()) {
    confens::testing::TempDir dir;
    const auto corpus_dir = (dir.path() / "corpus").string();
    write_corpus(corpus, corpus_dir);
    const auto train_dir = (dir.path() / "train").string();
    bool ok = run_cli(cli, {"train-selector", "--corpus", corpus_dir, "--seed", "42", "--out", train_dir}) == 0;
    std::set<double> cli_thresholds;
    for (const char* obj : {"favor-target", "balanced", "favor-base"}) {
      const auto out = (dir.path() / obj).string();
      ok = ok && run_cli(cli, {"evaluate", "--corpus", corpus_dir, "--selector", train_dir + "/selector.json",
                               "--split", "test", "--threshold-objective", obj, "--out", out}) == 0;
      if (ok) {
        std::ifstream in(out + "/evaluation.json");
        cli_thresholds.insert(json::parse(in).at("threshold").get<double>());
      }
    }
    const bool cli_distinct = ok && cli_thresholds.size() == 3;
    distinct = distinct && cli_distinct;
    detail += "; CLI objectives distinct: " + std::string(cli_distinct ? "yes" : "no");
  }
  return {nested && distinct, detail};
}

// ------------------------------------------------------------------ 7

Outcome layers() {
  const SimSpec spec = stress_preset("layered");
  const Corpus corpus = simulate(spec);
  const auto validation = canonical_split(corpus, Split::validation);
  auto mean_entropy = [&](int layer) {
    double h = 0;
    std::size_t n = 0;
    for (const auto* r : validation) {
      for (const auto& model : corpus.manifest.models) {
        const auto& s = select_layer(*r, model, layer);
        for (std::size_t t = 0; t < s.num_steps(); ++t) {
          h += entropy(step_distribution(s.step(t).values, s.kind, 1.0), Measure::gibbs, 1.0);
          ++n;
        }
      }
    }
    return h / static_cast<double>(n);
  };
  GridSearchOptions o;
  o.seed = 42;
  o.layer_id = 4;
  const double early = fit_config(corpus, presets::default_confidence(), o).a_avg;
  o.layer_id = 0;
  const double final_layer = fit_config(corpus, presets::default_confidence(), o).a_avg;
  const double h4 = mean_entropy(4);
  const double h0 = mean_entropy(0);
  return {std::abs(final_layer - early) <= 0.05 && h4 > h0,
          "layer 4 A_avg " + fmt(early) + " vs final " + fmt(final_layer) + " (|diff| <= 0.05); mean entropy " +
              fmt(h4) + " > " + fmt(h0)};
}

// ------------------------------------------------------------------ 8

Outcome lr_correctness() {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  for (int problem = 0; problem < 20; ++problem) {
    const std::size_t k = 2 + gen() % 4;
    const std::size_t f = 1 + gen() % 6;
    const std::size_t n = 10 + gen() % 40;
    std::vector<double> x(n * f);
    for (auto& v : x) v = nd(gen);
    std::vector<std::size_t> y(n);
    for (auto& v : y) v = gen() % k;
    std::vector<double> w(n, 1.0);
    SelectorObjective obj(x, y, k, f, w, 0.05 * static_cast<double>(problem % 4));
    std::vector<double> params(obj.num_params());
    for (auto& v : params) v = nd(gen);
    std::vector<double> grad(params.size());
    obj.value_and_gradient(params, grad);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double h = 1e-6;
      auto p = params;
      p[i] += h;
      const double up = obj.value(p);
      p[i] -= 2 * h;
      const double fd = (up - obj.value(p)) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1.0, std::abs(fd)));
    }
  }

  std::vector<FeatureVector> train;
  for (std::size_t c = 0; c < 3; ++c) {
    for (int i = 0; i < 30; ++i) {
      FeatureVector fv;
      fv.utterance_id = std::to_string(c) + "/" + std::to_string(i);
      for (std::size_t j = 0; j < 3; ++j) fv.values.push_back(nd(gen) + (j == c ? 10.0 : 0.0));
      fv.true_label = c;
      train.push_back(fv);
    }
  }
  std::vector<double> trace;
  TrainOptions opts;
  opts.objective_trace = &trace;
  const auto model = train_selector(train, 3, 1e-4, ClassWeightSpec::uniform(), opts);
  std::size_t correct = 0;
  for (const auto& fv : train) correct += predict(model, fv).index == *fv.true_label ? 1 : 0;
  bool monotone = trace.size() >= 2;
  for (std::size_t i = 1; i < trace.size(); ++i) monotone = monotone && trace[i] <= trace[i - 1];
  return {worst <= 1e-5 && correct == train.size() && monotone,
          "gradient rel. err " + sci(worst) + " (<= 1e-5); separable accuracy " +
              std::to_string(correct) + "/" + std::to_string(train.size()) + "; objective monotone over " +
              std::to_string(trace.size()) + " iterates: " + (monotone ? "yes" : "no")};
}

// ------------------------------------------------------------------ 9

Outcome wer_oracle() {
  const std::vector<std::string> vocab = {"w", "x", "y", "z"};
  std::mt19937_64 gen(9);
  int agree = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> ref(1 + gen() % 6);
    std::vector<std::string> hyp(gen() % 7);
    for (auto& w : ref) w = vocab[gen() % 4];
    for (auto& w : hyp) w = vocab[gen() % 4];
    agree += wer(ref, hyp).edits() == oracle::brute_force_edits(ref, hyp) ? 1 : 0;
  }
  return {agree == 200, std::to_string(agree) + "/200 pairs agree with exhaustive alignment"};
}

// ------------------------------------------------------------------ 10

std::string pipeline_bytes(std::size_t workers) {
  SimSpec spec = confens::testing::small_spec(3, 42);
  spec.train_utterances = 60;
  spec.validation_utterances = 80;
  spec.test_utterances = 40;
  confens::testing::TempDir dir;
  write_corpus(simulate(spec, workers), dir.path());
  std::string bytes;
  const Corpus corpus = load_corpus(dir.path() / "manifest.json");
  for (const auto& entry : corpus.manifest.datasets) bytes += confens::testing::slurp(dir.path() / entry.records);
  bytes += confens::testing::slurp(dir.path() / "manifest.json");

  GridSearchOptions o;
  o.train_size = 50;
  o.seed = 42;
  o.workers = workers;
  const TuningResult r = grid_search(corpus, SearchSpace::full(), o);
  bytes += to_json(r).dump();
  bytes += to_json(evaluate_config(corpus, r.best_config, r.best_selector, Split::test, workers)).dump();
  return bytes;
}

Outcome determinism() {
  const std::string a = pipeline_bytes(1);
  const std::string b = pipeline_bytes(1);
  const std::string c = pipeline_bytes(8);
  return {a == b && a == c, "simulate + gridsearch (2960 configs) + evaluate: " + std::to_string(a.size()) +
                                " bytes; repeat identical: " + (a == b ? "yes" : "no") +
                                "; 8 workers identical: " + (a == c ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"entropy oracle equivalence", entropy_oracle},
      {"grid cardinality", grid_cardinality},
      {"confidence ordering (overconfident)", confidence_ordering},
      {"duration trend (short_audio)", duration_trend},
      {"score fusion", fusion},
      {"threshold trade-off (domain_shift)", [&] { return threshold_tradeoff(cli); }},
      {"intermediate layers (layered)", layers},
      {"logistic regression correctness", lr_correctness},
      {"WER oracle", wer_oracle},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << i + 1 << ". " << criteria[i].first
              << ": " << o.detail << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << "\n";
  return failures == 0 ? 0 : 1;
}
