// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "confens/probstream.hpp"

namespace confens {

struct SimDataset {
  std::string dataset_id;
  std::size_t matched_model = 0;
};

struct SimLayer {
  int layer_id = 0;
  /// Logit scale of the layer relative to the final layer, in (0, 1].
  double degradation = 1.0;
};

/// Synthetic multi-expert corpus description.
///
/// Each utterance has a reference of non-blank tokens. Every model emits the
/// reference corrupted at its error rate (substitute / delete / insert with
/// equal odds) spread over the utterance's steps, the remaining steps being
/// blanks. At every step the emitted token's logit is drawn from
/// N(gain * match_quality[d][m], sigma) and the others from N(0, sigma);
/// mismatched models' logits are then multiplied by (1 + overconfidence).
/// Intermediate layers scale the final logits by their degradation and add
/// N(0, sigma * (1 - degradation)) noise. The "lid" aux vector mixes the
/// one-hot matched model with a uniformly random point of the probability
/// simplex at weight aux_noise.
struct SimSpec {
  std::uint64_t seed = 42;
  std::vector<std::string> models;
  std::vector<SimDataset> datasets;
  std::size_t train_utterances = 100;
  std::size_t validation_utterances = 100;
  std::size_t test_utterances = 100;
  int vocab_size = 10;  // index 0 is the blank
  int min_steps = 20;
  int max_steps = 60;
  double frame_rate_hz = 10.0;
  /// datasets x models, values in (0, 1).
  std::vector<std::vector<double>> match_quality;
  double blank_rate = 0.3;
  double overconfidence = 0.0;
  /// datasets x models token corruption probabilities in [0, 1].
  std::vector<std::vector<double>> error_rate;
  double aux_noise = 0.0;  // in [0, 1]
  bool emit_aux = true;
  std::vector<SimLayer> layers;  // empty means the final layer only
  double logit_sigma = 1.0;
  double logit_gain = 8.0;

  /// Throws ValidationError; requires the matched model to have strictly the
  /// highest match quality on its dataset.
  void validate() const;
};

inline constexpr std::string_view kAuxLidSource = "lid";

nlohmann::json to_json(const SimSpec& spec);
SimSpec sim_spec_from_json(const nlohmann::json& j);

/// Fully determined by spec.seed; independent of `workers`. Records files are
/// named "<dataset>.<split>.jsonl".
Corpus simulate(const SimSpec& spec, std::size_t workers = 1);

/// Named scenarios: "overconfident", "short_audio", "domain_shift", "layered".
SimSpec stress_preset(std::string_view name);
std::vector<std::string> stress_preset_names();

}  // namespace confens
