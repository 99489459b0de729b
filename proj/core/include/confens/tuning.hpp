// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "confens/confidence.hpp"
#include "confens/metrics.hpp"
#include "confens/selector.hpp"

namespace confens {

/// Axes of the confidence search. Every measure is crossed with every
/// aggregation, blank option and temperature; entropy measures are further
/// crossed with every normalization and alpha (Gibbs included, whose alpha is
/// carried but unused). max_prob configs carry normalization = linear and
/// alpha = 1.
struct SearchSpace {
  std::vector<Measure> measures;
  std::vector<Normalization> normalizations;
  std::vector<Aggregation> aggregations;
  std::vector<bool> exclude_blanks;
  std::vector<double> temperatures;
  std::vector<double> alphas;

  /// T in {0.01, ..., 10}, alpha in {0.1, ..., 1}, all measures and axes: 2960 configs.
  static SearchSpace full();
  static SearchSpace max_prob_only();
  /// A space containing exactly one config.
  static SearchSpace single(const ConfidenceConfig& cfg);

  void validate() const;
};

nlohmann::json to_json(const SearchSpace& space);
SearchSpace search_space_from_json(const nlohmann::json& j);

/// Canonical order: measure, normalization, aggregation, blank, T, alpha.
std::vector<ConfidenceConfig> enumerate_space(const SearchSpace& space);

struct LrSetting {
  double l2_lambda = 0.01;
  ClassWeightSpec class_weights;
};

/// l2_lambda in {0.001, 0.01, 0.1, 1, 10} x {uniform, balanced}.
std::vector<LrSetting> default_lr_grid();

nlohmann::json to_json(const LrSetting& setting);
LrSetting lr_setting_from_json(const nlohmann::json& j);

struct GridSearchOptions {
  std::size_t train_size = 100;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  int layer_id = 0;
  std::optional<double> duration_s;
  std::vector<LrSetting> lr_grid = default_lr_grid();
  /// Aux sources appended to the features (score fusion).
  std::vector<AuxSource> aux;
  /// False builds aux-only features (the external-classifier baseline).
  bool use_confidences = true;
};

struct LeaderboardEntry {
  ConfidenceConfig config;
  double a_avg = 0.0;
  LrSetting lr;
  std::map<std::string, double> per_dataset_accuracy;
  std::size_t canonical_index = 0;
};

struct TuningResult {
  ConfidenceConfig best_config;
  SelectorModel best_selector;
  double validation_a_avg = 0.0;
  /// Sorted by descending A_avg, ties by canonical config order.
  std::vector<LeaderboardEntry> leaderboard;
};

nlohmann::json to_json(const TuningResult& result);
std::string leaderboard_to_csv(const TuningResult& result);

/// Per-dataset sample of `train_size` train-split utterances, drawn from a
/// substream keyed by (seed, dataset id) and kept in file order. Datasets are
/// visited in sorted id order. Throws ValidationError naming a dataset that
/// has fewer train utterances than requested.
std::vector<const UtteranceRecord*> sample_training(const Corpus& corpus, std::size_t train_size,
                                                    std::uint64_t seed);

/// Records of a split in sorted dataset order (file order within a dataset).
std::vector<const UtteranceRecord*> canonical_split(const Corpus& corpus, Split split);

/// For every config: train one selector per LR setting on the training sample,
/// keep the setting with the best validation A_avg, and rank configs by it.
/// Output is independent of the worker count and of manifest dataset order.
TuningResult grid_search(const Corpus& corpus, const SearchSpace& space,
                         const GridSearchOptions& options);

/// grid_search over a single config.
LeaderboardEntry fit_config(const Corpus& corpus, const ConfidenceConfig& cfg,
                            const GridSearchOptions& options, SelectorModel* selector = nullptr);

/// Rebuilds features from the selector's recorded layout and config, predicts
/// every utterance of `split`, and scores the predictions.
EvaluationReport evaluate_config(const Corpus& corpus, const ConfidenceConfig& cfg,
                                 const SelectorModel& selector, Split split,
                                 std::size_t workers = 1);

/// Features of `records` under a selector's layout (labels from the manifest).
std::vector<FeatureVector> selector_features(const Corpus& corpus,
                                             std::span<const UtteranceRecord* const> records,
                                             const ConfidenceConfig& cfg,
                                             const FeatureLayout& layout,
                                             std::optional<double> duration_s,
                                             std::size_t workers = 1);

}  // namespace confens
