// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#include "confens/error.hpp"
#include "confens/simulator.hpp"

namespace confens {

namespace {

// n models, n datasets, dataset i matched to model i.
SimSpec square(std::size_t n, double matched_mu, double other_mu, double matched_err, double other_err) {
  SimSpec s;
  for (std::size_t i = 0; i < n; ++i) {
    s.models.push_back("m" + std::to_string(i));
    s.datasets.push_back({"d" + std::to_string(i), i});
  }
  s.match_quality.assign(n, std::vector<double>(n, other_mu));
  s.error_rate.assign(n, std::vector<double>(n, other_err));
  for (std::size_t i = 0; i < n; ++i) {
    s.match_quality[i][i] = matched_mu;
    s.error_rate[i][i] = matched_err;
  }
  return s;
}

SimSpec overconfident() {
  SimSpec s = square(5, 0.55, 0.35, 0.05, 0.25);
  s.train_utterances = 100;
  s.validation_utterances = 500;
  s.test_utterances = 100;
  s.min_steps = 10;
  s.max_steps = 120;
  s.overconfidence = 1.0;
  return s;
}

SimSpec short_audio() {
  SimSpec s = square(3, 0.42, 0.36, 0.05, 0.25);
  s.train_utterances = 200;
  s.validation_utterances = 300;
  s.test_utterances = 100;
  s.min_steps = 30;
  s.max_steps = 300;
  s.aux_noise = 0.6;
  return s;
}

SimSpec domain_shift() {
  SimSpec s;
  s.models = {"base", "finetuned"};
  s.datasets = {{"source_a", 0}, {"source_b", 0}, {"target", 1}};
  s.match_quality = {{0.45, 0.4}, {0.45, 0.4}, {0.38, 0.45}};
  s.error_rate = {{0.1, 0.18}, {0.1, 0.18}, {0.4, 0.1}};
  s.train_utterances = 100;
  s.validation_utterances = 300;
  s.test_utterances = 100;
  s.min_steps = 10;
  s.max_steps = 40;
  return s;
}

SimSpec layered() {
  SimSpec s = square(3, 0.6, 0.4, 0.05, 0.25);
  s.train_utterances = 100;
  s.validation_utterances = 300;
  s.test_utterances = 100;
  s.layers = {{4, 0.5}, {9, 0.75}, {0, 1.0}};
  return s;
}

}  // namespace

std::vector<std::string> stress_preset_names() {
  return {"overconfident", "short_audio", "domain_shift", "layered"};
}

SimSpec stress_preset(std::string_view name) {
  if (name == "overconfident") return overconfident();
  if (name == "short_audio") return short_audio();
  if (name == "domain_shift") return domain_shift();
  if (name == "layered") return layered();
  throw ValidationError("unknown simulator preset '" + std::string(name) +
                        "' (expected overconfident, short_audio, domain_shift or layered)");
}

}  // namespace confens
