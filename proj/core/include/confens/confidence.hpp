// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "confens/probstream.hpp"

namespace confens {

enum class Measure { max_prob, gibbs, tsallis, renyi };
enum class Normalization { linear, exponential };
enum class Aggregation { min, max, mean, product };

std::string_view to_string(Measure m) noexcept;
std::string_view to_string(Normalization n) noexcept;
std::string_view to_string(Aggregation a) noexcept;
Measure parse_measure(std::string_view text);
Normalization parse_normalization(std::string_view text);
Aggregation parse_aggregation(std::string_view text);

/// How a stream of per-step distributions becomes one confidence in [0, 1].
/// `normalization` is ignored for max_prob; `alpha` is ignored for max_prob
/// and gibbs. Tsallis and Renyi at alpha == 1 are evaluated as Gibbs.
struct ConfidenceConfig {
  Measure measure = Measure::renyi;
  Normalization normalization = Normalization::linear;
  Aggregation aggregation = Aggregation::mean;
  bool exclude_blanks = true;
  double temperature = 1.0;
  double alpha = 0.25;

  void validate() const;
  std::string describe() const;
  friend bool operator==(const ConfidenceConfig&, const ConfidenceConfig&) = default;
};

namespace presets {
/// Product of the max probability at every step, blanks included, T = 1.
ConfidenceConfig untuned_max_prob();
/// Renyi entropy, linear normalization, mean over non-blank steps, T = 1, alpha = 0.25.
ConfidenceConfig default_confidence();
}  // namespace presets

/// Resolves "untuned-max-prob" or "default"; anything else is a ValidationError.
ConfidenceConfig confidence_preset(std::string_view name);

nlohmann::json to_json(const ConfidenceConfig& cfg);
/// Accepts either a flat config object or a string naming a preset.
ConfidenceConfig confidence_config_from_json(const nlohmann::json& j);

/// Temperature-scaled distribution of one step. Logits use a max-shifted
/// softmax of z / T; probabilities are renormalized q^(1/T).
void step_distribution(std::span<const double> values, ValueKind kind, double temperature,
                       std::span<double> out);
std::vector<double> step_distribution(std::span<const double> values, ValueKind kind,
                                      double temperature);

/// Entropy of p under a measure (max_prob is not an entropy and is rejected).
double entropy(std::span<const double> p, Measure measure, double alpha);
/// Entropy of the uniform distribution over `vocab_size` symbols.
double max_entropy(std::size_t vocab_size, Measure measure, double alpha);
/// Maps an entropy to [0, 1]: 1 at zero entropy, 0 at h_max.
double normalized_confidence(double h, double h_max, Normalization normalization);

double step_confidence(std::span<const double> p, const ConfidenceConfig& cfg);

/// Reduces step confidences. Product is accumulated in log space.
double aggregate(std::span<const double> step_confidences, Aggregation aggregation);

/// Confidence of a whole stream. With exclude_blanks, steps whose emitted
/// token is the blank are dropped; if that leaves nothing, all steps are used.
double stream_confidence(const ProbabilityStream& stream, const ConfidenceConfig& cfg);

/// Evaluates every (measure, normalization, alpha, aggregation, blank policy)
/// combination at one temperature in a single pass over a stream. Values are
/// bit-identical to stream_confidence for the same config.
class TemperatureSweep {
 public:
  explicit TemperatureSweep(std::vector<double> alphas);

  std::size_t size() const noexcept;
  /// Slot of a config in the output of evaluate(); the config's temperature is not consulted.
  std::size_t index(const ConfidenceConfig& cfg) const;
  void evaluate(const ProbabilityStream& stream, double temperature, std::span<double> out) const;

 private:
  std::size_t step_key(const ConfidenceConfig& cfg) const;

  std::vector<double> alphas_;
  std::size_t step_keys_;
};

/// Per-utterance confidence vectors in `models` order.
struct ConfidenceMatrix {
  std::vector<std::string> models;
  std::map<std::string, std::vector<double>> rows;
};

struct ConfidenceOptions {
  int layer_id = 0;
  std::optional<double> duration_s;
  std::size_t workers = 1;
};

/// Confidences of every record in the corpus for every manifest model.
ConfidenceMatrix confidence_matrix(const Corpus& corpus, const ConfidenceConfig& cfg,
                                   const ConfidenceOptions& options = {});
/// Same, restricted to the given records.
ConfidenceMatrix confidence_matrix(std::span<const UtteranceRecord* const> records,
                                   const CorpusManifest& manifest, const ConfidenceConfig& cfg,
                                   const ConfidenceOptions& options = {});

}  // namespace confens
