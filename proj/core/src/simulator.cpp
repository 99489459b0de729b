// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#include "confens/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "confens/error.hpp"
#include "confens/parallel.hpp"
#include "confens/rng.hpp"

namespace confens {

namespace {

void check_matrix(const std::vector<std::vector<double>>& m, std::size_t rows, std::size_t cols,
                  const char* name) {
  if (m.size() != rows) {
    throw ValidationError(std::string(name) + " must have one row per dataset");
  }
  for (const auto& row : m) {
    if (row.size() != cols) throw ValidationError(std::string(name) + " must have one column per model");
  }
}

}  // namespace

void SimSpec::validate() const {
  if (models.size() < 2) throw ValidationError("simulation needs at least two models");
  if (datasets.size() < 2) throw ValidationError("simulation needs at least two datasets");
  if (std::set<std::string>(models.begin(), models.end()).size() != models.size()) {
    throw ValidationError("model ids must be unique");
  }
  std::set<std::string> ids;
  for (const auto& d : datasets) {
    if (d.dataset_id.empty()) throw ValidationError("dataset ids must be non-empty");
    if (!ids.insert(d.dataset_id).second) {
      throw ValidationError("duplicate dataset id '" + d.dataset_id + "'");
    }
    if (d.matched_model >= models.size()) {
      throw ValidationError("dataset '" + d.dataset_id + "' is matched to a nonexistent model");
    }
  }
  if (train_utterances + validation_utterances + test_utterances == 0) {
    throw ValidationError("simulation would produce no utterances");
  }
  if (vocab_size < 3) throw ValidationError("vocab_size must be at least 3");
  if (min_steps < 1 || max_steps < min_steps) {
    throw ValidationError("steps range must satisfy 1 <= min_steps <= max_steps");
  }
  if (!(frame_rate_hz > 0.0) || !std::isfinite(frame_rate_hz)) {
    throw ValidationError("frame_rate_hz must be positive");
  }
  check_matrix(match_quality, datasets.size(), models.size(), "match_quality");
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const std::size_t l = datasets[d].matched_model;
    for (std::size_t m = 0; m < models.size(); ++m) {
      const double mu = match_quality[d][m];
      if (!(mu > 0.0 && mu < 1.0)) throw ValidationError("match_quality values must lie in (0, 1)");
      if (m != l && !(match_quality[d][l] > mu)) {
        throw ValidationError("dataset '" + datasets[d].dataset_id + "': matched model '" + models[l] +
                              "' must have strictly the highest match quality");
      }
    }
  }
  if (!error_rate.empty()) {
    check_matrix(error_rate, datasets.size(), models.size(), "error_rate");
    for (const auto& row : error_rate) {
      for (double e : row) {
        if (!(e >= 0.0 && e <= 1.0)) throw ValidationError("error_rate values must lie in [0, 1]");
      }
    }
  }
  if (!(blank_rate >= 0.0 && blank_rate < 1.0)) throw ValidationError("blank_rate must lie in [0, 1)");
  if (!(overconfidence >= 0.0) || !std::isfinite(overconfidence)) {
    throw ValidationError("overconfidence must be non-negative");
  }
  if (!(aux_noise >= 0.0 && aux_noise <= 1.0)) throw ValidationError("aux_noise must lie in [0, 1]");
  std::set<int> layer_ids;
  for (const auto& l : layers) {
    if (!layer_ids.insert(l.layer_id).second) {
      throw ValidationError("duplicate layer id " + std::to_string(l.layer_id));
    }
    if (!(l.degradation > 0.0 && l.degradation <= 1.0)) {
      throw ValidationError("layer degradation must lie in (0, 1]");
    }
  }
  if (!(logit_sigma > 0.0) || !(logit_gain > 0.0)) {
    throw ValidationError("logit_sigma and logit_gain must be positive");
  }
}

nlohmann::json to_json(const SimSpec& spec) {
  nlohmann::json datasets = nlohmann::json::array();
  for (const auto& d : spec.datasets) {
    datasets.push_back({{"dataset_id", d.dataset_id}, {"matched_model", spec.models.at(d.matched_model)}});
  }
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) {
    layers.push_back({{"layer_id", l.layer_id}, {"degradation", l.degradation}});
  }
  return {{"seed", spec.seed},
          {"models", spec.models},
          {"datasets", std::move(datasets)},
          {"utterances_per_split",
           {{"train", spec.train_utterances},
            {"validation", spec.validation_utterances},
            {"test", spec.test_utterances}}},
          {"vocab_size", spec.vocab_size},
          {"steps_range", {spec.min_steps, spec.max_steps}},
          {"frame_rate_hz", spec.frame_rate_hz},
          {"match_quality", spec.match_quality},
          {"blank_rate", spec.blank_rate},
          {"overconfidence", spec.overconfidence},
          {"error_rate", spec.error_rate},
          {"aux_noise", spec.aux_noise},
          {"emit_aux", spec.emit_aux},
          {"intermediate_layers", std::move(layers)},
          {"logit_sigma", spec.logit_sigma},
          {"logit_gain", spec.logit_gain}};
}

SimSpec sim_spec_from_json(const nlohmann::json& j) {
  SimSpec s;
  try {
    if (!j.is_object()) throw ValidationError("simulation spec must be a JSON object");
    s.seed = j.value("seed", s.seed);
    s.models = j.at("models").get<std::vector<std::string>>();
    for (const auto& d : j.at("datasets")) {
      SimDataset ds;
      ds.dataset_id = d.at("dataset_id").get<std::string>();
      const auto& matched = d.at("matched_model");
      if (matched.is_string()) {
        const auto name = matched.get<std::string>();
        const auto it = std::find(s.models.begin(), s.models.end(), name);
        if (it == s.models.end()) {
          throw ValidationError("dataset '" + ds.dataset_id + "' is matched to unknown model '" + name + "'");
        }
        ds.matched_model = static_cast<std::size_t>(it - s.models.begin());
      } else {
        ds.matched_model = matched.get<std::size_t>();
      }
      s.datasets.push_back(std::move(ds));
    }
    if (j.contains("utterances_per_split")) {
      const auto& u = j.at("utterances_per_split");
      s.train_utterances = u.value("train", s.train_utterances);
      s.validation_utterances = u.value("validation", s.validation_utterances);
      s.test_utterances = u.value("test", s.test_utterances);
    }
    s.vocab_size = j.value("vocab_size", s.vocab_size);
    if (j.contains("steps_range")) {
      const auto r = j.at("steps_range").get<std::vector<int>>();
      if (r.size() != 2) throw ValidationError("steps_range must be [min, max]");
      s.min_steps = r[0];
      s.max_steps = r[1];
    }
    s.frame_rate_hz = j.value("frame_rate_hz", s.frame_rate_hz);
    s.match_quality = j.at("match_quality").get<std::vector<std::vector<double>>>();
    s.blank_rate = j.value("blank_rate", s.blank_rate);
    s.overconfidence = j.value("overconfidence", s.overconfidence);
    if (j.contains("error_rate")) s.error_rate = j.at("error_rate").get<std::vector<std::vector<double>>>();
    s.aux_noise = j.value("aux_noise", s.aux_noise);
    s.emit_aux = j.value("emit_aux", s.emit_aux);
    for (const auto& l : j.value("intermediate_layers", nlohmann::json::array())) {
      s.layers.push_back({l.at("layer_id").get<int>(), l.at("degradation").get<double>()});
    }
    s.logit_sigma = j.value("logit_sigma", s.logit_sigma);
    s.logit_gain = j.value("logit_gain", s.logit_gain);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed simulation spec: ") + e.what());
  }
  s.validate();
  return s;
}

namespace {

struct UtteranceJob {
  std::size_t dataset = 0;
  Split split = Split::train;
  std::size_t index = 0;
  std::string utterance_id;
};

int random_token(CounterRng& rng, int vocab, int blank, int avoid) {
  // Non-blank tokens other than `avoid` (pass blank to exclude nothing extra).
  std::vector<int> options;
  for (int v = 0; v < vocab; ++v) {
    if (v != blank && v != avoid) options.push_back(v);
  }
  return options[rng.uniform_int(options.size())];
}

std::vector<int> corrupt(const std::vector<int>& reference, double rate, int vocab, int blank,
                         CounterRng& rng) {
  std::vector<int> out;
  for (int tok : reference) {
    if (!rng.bernoulli(rate)) {
      out.push_back(tok);
      continue;
    }
    switch (rng.uniform_int(3)) {
      case 0: out.push_back(random_token(rng, vocab, blank, tok)); break;
      case 1: break;
      default:
        out.push_back(tok);
        out.push_back(random_token(rng, vocab, blank, blank));
        break;
    }
  }
  return out;
}

std::vector<std::string> render(const std::vector<int>& tokens) {
  std::vector<std::string> words;
  words.reserve(tokens.size());
  for (int t : tokens) words.push_back(std::to_string(t));
  return words;
}

UtteranceRecord simulate_one(const SimSpec& spec, const UtteranceJob& job) {
  constexpr int kBlank = 0;
  const int v = spec.vocab_size;
  const auto& ds = spec.datasets[job.dataset];
  const std::string& uid = job.utterance_id;

  UtteranceRecord rec;
  rec.utterance_id = uid;
  rec.dataset_id = ds.dataset_id;

  CounterRng ref_rng = CounterRng::substream(spec.seed, "reference/" + uid);
  const int span = spec.max_steps - spec.min_steps + 1;
  const int steps = spec.min_steps + static_cast<int>(ref_rng.uniform_int(static_cast<std::uint64_t>(span)));
  const auto ref_len = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(static_cast<double>(steps) * (1.0 - spec.blank_rate))));
  std::vector<int> reference(ref_len);
  for (auto& tok : reference) tok = random_token(ref_rng, v, kBlank, kBlank);
  rec.reference_words = render(reference);

  for (std::size_t m = 0; m < spec.models.size(); ++m) {
    const std::string& model = spec.models[m];
    CounterRng rng = CounterRng::substream(spec.seed, "model/" + uid + "/" + model);
    const double rate = spec.error_rate.empty() ? 0.0 : spec.error_rate[job.dataset][m];
    const std::vector<int> emitted = corrupt(reference, rate, v, kBlank, rng);

    const std::size_t total = std::max(static_cast<std::size_t>(steps), emitted.size());
    std::vector<std::size_t> slots(total);
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    for (std::size_t i = 0; i < emitted.size(); ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(total - i));
      std::swap(slots[i], slots[j]);
    }
    slots.resize(emitted.size());
    std::sort(slots.begin(), slots.end());
    std::vector<int> tokens(total, kBlank);
    for (std::size_t i = 0; i < emitted.size(); ++i) tokens[slots[i]] = emitted[i];

    const double mean = spec.logit_gain * spec.match_quality[job.dataset][m];
    const double scale = m == ds.matched_model ? 1.0 : 1.0 + spec.overconfidence;
    std::vector<double> logits(total * static_cast<std::size_t>(v));
    for (std::size_t t = 0; t < total; ++t) {
      for (int k = 0; k < v; ++k) {
        const double x = rng.normal(k == tokens[t] ? mean : 0.0, spec.logit_sigma);
        logits[t * static_cast<std::size_t>(v) + static_cast<std::size_t>(k)] = scale * x;
      }
    }

    ModelOutput out;
    out.hypothesis_words = render(emitted);
    auto make_stream = [&](int layer_id, std::vector<double> values) {
      ProbabilityStream s;
      s.utterance_id = uid;
      s.model_id = model;
      s.layer_id = layer_id;
      s.frame_rate_hz = spec.frame_rate_hz;
      s.vocab_size = v;
      s.blank_index = kBlank;
      s.kind = ValueKind::logits;
      s.values = std::move(values);
      s.emitted_tokens = tokens;
      return s;
    };
    if (spec.layers.empty()) {
      out.streams.emplace(0, make_stream(0, logits));
    } else {
      for (const auto& layer : spec.layers) {
        std::vector<double> values(logits.size());
        if (layer.degradation >= 1.0) {
          values = logits;
        } else {
          CounterRng noise = CounterRng::substream(
              spec.seed, "layer/" + uid + "/" + model + "/" + std::to_string(layer.layer_id));
          const double sd = spec.logit_sigma * (1.0 - layer.degradation);
          for (std::size_t i = 0; i < values.size(); ++i) {
            values[i] = layer.degradation * logits[i] + noise.normal(0.0, sd);
          }
        }
        out.streams.emplace(layer.layer_id, make_stream(layer.layer_id, std::move(values)));
      }
    }
    rec.hypotheses.emplace(model, std::move(out));
  }

  if (spec.emit_aux) {
    CounterRng rng = CounterRng::substream(spec.seed, "aux/" + uid);
    const std::size_t m = spec.models.size();
    std::vector<double> u(m);
    double sum = 0.0;
    for (auto& x : u) {
      x = -std::log1p(-rng.uniform());
      sum += x;
    }
    std::vector<double> lid(m);
    for (std::size_t k = 0; k < m; ++k) {
      lid[k] = spec.aux_noise * u[k] / sum + (k == ds.matched_model ? 1.0 - spec.aux_noise : 0.0);
    }
    rec.aux_scores.emplace(std::string(kAuxLidSource), std::move(lid));
  }
  return rec;
}

std::string utterance_id(const std::string& dataset, Split split, std::size_t index) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  return dataset + "-" + std::string(to_string(split)) + "-" + buf;
}

}  // namespace

Corpus simulate(const SimSpec& spec, std::size_t workers) {
  spec.validate();
  Corpus corpus;
  corpus.manifest.models = spec.models;

  std::vector<UtteranceJob> jobs;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;  // per manifest entry: [begin, end)
  for (std::size_t d = 0; d < spec.datasets.size(); ++d) {
    const auto& ds = spec.datasets[d];
    for (auto [split, count] : {std::pair{Split::train, spec.train_utterances},
                                std::pair{Split::validation, spec.validation_utterances},
                                std::pair{Split::test, spec.test_utterances}}) {
      if (count == 0) continue;
      corpus.manifest.datasets.push_back({ds.dataset_id, spec.models[ds.matched_model], split,
                                          ds.dataset_id + "." + std::string(to_string(split)) + ".jsonl"});
      const std::size_t begin = jobs.size();
      for (std::size_t i = 0; i < count; ++i) {
        jobs.push_back({d, split, i, utterance_id(ds.dataset_id, split, i)});
      }
      ranges.emplace_back(begin, jobs.size());
    }
  }

  std::vector<UtteranceRecord> generated(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t i) { generated[i] = simulate_one(spec, jobs[i]); });

  for (const auto& [begin, end] : ranges) {
    corpus.records.emplace_back(std::make_move_iterator(generated.begin() + static_cast<std::ptrdiff_t>(begin)),
                                std::make_move_iterator(generated.begin() + static_cast<std::ptrdiff_t>(end)));
  }
  return corpus;
}

}  // namespace confens
