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

#include "confens/confidence.hpp"

namespace confens {

struct FeatureVector {
  std::string utterance_id;
  std::vector<double> values;
  std::optional<std::size_t> true_label;
};

/// An auxiliary score source appended after the confidences, e.g. external
/// LID posteriors. `log_scores` feeds log(max(x, 1e-12)) instead of x.
struct AuxSource {
  std::string source_id;
  std::size_t dim = 0;
  bool log_scores = false;

  friend bool operator==(const AuxSource&, const AuxSource&) = default;
};

/// Column layout of selector features: one confidence per listed model
/// (possibly none), followed by each aux source's vector.
struct FeatureLayout {
  std::vector<std::string> confidence_models;
  std::vector<AuxSource> aux;
  int layer_id = 0;

  std::size_t dim() const noexcept;
  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

nlohmann::json to_json(const FeatureLayout& layout);
FeatureLayout feature_layout_from_json(const nlohmann::json& j);

using AuxScores = std::map<std::string, std::map<std::string, std::vector<double>>>;

/// aux_scores of the given records, keyed by utterance then source.
AuxScores collect_aux_scores(std::span<const UtteranceRecord* const> records);

/// Concatenates [confidences..., aux...] per utterance in `order`.
/// `labels` (utterance -> class index) fills true_label when provided.
std::vector<FeatureVector> assemble_features(std::span<const std::string> order,
                                             const ConfidenceMatrix& confidences,
                                             const AuxScores* aux, const FeatureLayout& layout,
                                             const std::map<std::string, std::size_t>* labels = nullptr);

enum class ClassWeighting { uniform, balanced, explicit_weights };

struct ClassWeightSpec {
  ClassWeighting mode = ClassWeighting::uniform;
  std::vector<double> values;  // explicit_weights only

  static ClassWeightSpec uniform() { return {}; }
  static ClassWeightSpec balanced() { return {ClassWeighting::balanced, {}}; }
  std::string describe() const;
  friend bool operator==(const ClassWeightSpec&, const ClassWeightSpec&) = default;
};

/// Weights per class. Balanced uses N / (K * count_k), the inverse class
/// frequency; classes absent from `train` get weight 1.
std::vector<double> resolve_class_weights(const ClassWeightSpec& spec,
                                          std::span<const FeatureVector> train,
                                          std::size_t num_classes);

struct TrainingSummary {
  int iterations = 0;
  double objective = 0.0;
  double gradient_inf_norm = 0.0;
  bool converged = false;
};

/// Multinomial logistic regression over standardized features.
struct SelectorModel {
  static constexpr int kFormatVersion = 1;

  std::size_t num_classes = 0;
  std::size_t num_features = 0;
  /// Row-major num_classes x num_features.
  std::vector<double> weights;
  std::vector<double> bias;
  std::vector<double> feature_means;
  std::vector<double> feature_stds;
  /// Zero-variance features: std forced to 1 and weights held at 0.
  std::vector<bool> pinned;
  double l2_lambda = 0.0;
  std::vector<double> class_weights;
  /// Binary decision threshold on the class-2 posterior; 0.5 is neutral.
  double threshold = 0.5;
  /// Multi-class log-offsets added to the logits; zeros are neutral.
  std::vector<double> class_offsets;

  // Provenance needed to rebuild identical features at predict time.
  std::vector<std::string> class_models;
  FeatureLayout layout;
  std::optional<ConfidenceConfig> confidence;
  std::optional<double> duration_s;
  TrainingSummary training;

  bool is_binary() const noexcept { return num_classes == 2; }
  double weight(std::size_t k, std::size_t f) const { return weights[k * num_features + f]; }
};

nlohmann::json to_json(const SelectorModel& model);
SelectorModel selector_from_json(const nlohmann::json& j);

struct TrainOptions {
  double gradient_tolerance = 1e-7;
  int max_iterations = 5000;
  /// If set, receives the objective after every accepted iteration (and the initial value first).
  std::vector<double>* objective_trace = nullptr;
};

/// Fits standardization on `train` and minimizes
///   (1/N) sum_n w[y_n] * CE(x_n, y_n) + (l2_lambda / 2) * ||W||^2
/// (bias unregularized) by L-BFGS with Armijo backtracking. Deterministic
/// for identical input order.
SelectorModel train_selector(std::span<const FeatureVector> train, std::size_t num_classes,
                             double l2_lambda, const ClassWeightSpec& class_weights,
                             const TrainOptions& options = {});

/// The training objective over the flat parameter vector [W row-major, b],
/// on already-standardized features. Exposed for gradient checks.
class SelectorObjective {
 public:
  SelectorObjective(std::vector<double> features, std::vector<std::size_t> labels,
                    std::size_t num_classes, std::size_t num_features,
                    std::vector<double> sample_weights, double l2_lambda,
                    std::vector<bool> pinned = {});

  std::size_t num_params() const noexcept { return num_classes_ * (num_features_ + 1); }
  double value(std::span<const double> params) const;
  double value_and_gradient(std::span<const double> params, std::span<double> grad) const;

 private:
  std::vector<double> features_;
  std::vector<std::size_t> labels_;
  std::size_t num_classes_;
  std::size_t num_features_;
  std::vector<double> sample_weights_;
  double l2_lambda_;
  std::vector<bool> pinned_;
  double weight_total_;
};

struct Prediction {
  std::size_t index = 0;
  /// softmax(W x_std + b + offsets); for binary models the threshold enters as
  /// a class-2 offset of -logit(threshold).
  std::vector<double> posterior;
};

/// Posterior without threshold or offsets.
std::vector<double> raw_posterior(const SelectorModel& model, std::span<const double> x);

/// Binary: class 2 iff raw posterior_2 > threshold (0.5 ties go to class 1).
/// Multi-class: argmax of offset logits, lowest index on ties.
Prediction predict(const SelectorModel& model, std::span<const double> x);
Prediction predict(const SelectorModel& model, const FeatureVector& x);

enum class ThresholdObjective { favor_base, favor_target, balanced };
std::string_view to_string(ThresholdObjective objective) noexcept;
ThresholdObjective parse_threshold_objective(std::string_view text);

/// Routing rates of a binary selector at a threshold. Class 1 (index 0) is
/// the base model, class 2 the target (finetuned) model. Rates are averaged
/// over datasets of each domain when dataset ids are given, else pooled.
struct OperatingPoint {
  double threshold = 0.5;
  double base_accuracy = 0.0;    // base-domain utterances routed to class 1
  double target_accuracy = 0.0;  // target-domain utterances routed to class 2
};

OperatingPoint operating_point(const SelectorModel& model, std::span<const FeatureVector> labeled,
                               double threshold, std::span<const std::string> dataset_ids = {});

/// Sweeps the threshold over the distinct validation posteriors. favor_base
/// maximizes base accuracy while target accuracy stays within 0.05 of its
/// value at 0.5 (favor_target mirrors it); balanced returns 0.5.
SelectorModel tune_threshold(const SelectorModel& model, std::span<const FeatureVector> validation,
                             ThresholdObjective objective,
                             std::span<const std::string> dataset_ids = {});

}  // namespace confens
