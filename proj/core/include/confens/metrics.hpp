// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "confens/probstream.hpp"

namespace confens {

struct WerResult {
  double wer = 0.0;
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;

  std::size_t edits() const noexcept { return substitutions + deletions + insertions; }
};

/// Whitespace tokenization, no normalization.
std::vector<std::string> split_words(std::string_view text);

/// Levenshtein alignment with unit costs. The backtrace prefers the diagonal
/// (match/substitution), then deletion, then insertion. Throws on an empty
/// reference.
WerResult wer(std::span<const std::string> reference, std::span<const std::string> hypothesis);

/// Utterance -> selected model index.
using Predictions = std::map<std::string, std::size_t>;

/// Per-dataset selection accuracy on one split, keyed by dataset id.
std::map<std::string, double> per_dataset_accuracy(const Predictions& predictions,
                                                   const Corpus& corpus, Split split);

/// Unweighted mean over datasets of the per-dataset accuracy.
double a_avg(const Predictions& predictions, const Corpus& corpus, Split split);
double a_avg(const std::map<std::string, double>& per_dataset);

struct DatasetCounts {
  std::size_t utterances = 0;
  std::size_t reference_words = 0;
  std::size_t skipped_without_reference = 0;
};

struct UtteranceWer {
  std::string utterance_id;
  std::string dataset_id;
  std::size_t selected_model = 0;
  double ensemble_wer = 0.0;
};

inline constexpr std::string_view kEnsembleSystem = "ensemble";
inline constexpr std::string_view kOracleSystem = "oracle";

struct EvaluationReport {
  std::string split;
  std::map<std::string, double> per_dataset_accuracy;
  double a_avg = 0.0;
  /// system -> dataset -> pooled WER (errors / reference words). Systems are
  /// each model id, "ensemble" and "oracle".
  std::map<std::string, std::map<std::string, double>> wer;
  std::vector<std::string> systems;  // display order: models, ensemble, oracle
  std::map<std::string, DatasetCounts> counts;
  std::vector<UtteranceWer> utterances;
};

/// WER of the selected hypotheses, of every model alone, and of the oracle
/// (the dataset's correct model) on one split. Utterances without a reference
/// are skipped and counted.
EvaluationReport ensemble_wer(const Corpus& corpus, Split split, const Predictions& predictions);

/// ensemble_wer plus selection accuracy and A_avg.
EvaluationReport evaluate_predictions(const Corpus& corpus, Split split,
                                      const Predictions& predictions);

nlohmann::json to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const nlohmann::json& j);

/// Systems x datasets WER grid followed by a selection-accuracy row and A_avg.
std::string report_to_csv(const EvaluationReport& report);
/// Same content as a fixed-width text table.
std::string report_to_table(const EvaluationReport& report);

}  // namespace confens
