// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#include "confens/selector.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "confens/error.hpp"

namespace confens {

std::string ClassWeightSpec::describe() const {
  switch (mode) {
    case ClassWeighting::uniform: return "uniform";
    case ClassWeighting::balanced: return "balanced";
    case ClassWeighting::explicit_weights: break;
  }
  std::string s = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ",";
    s += nlohmann::json(values[i]).dump();
  }
  return s + "]";
}

std::vector<double> resolve_class_weights(const ClassWeightSpec& spec,
                                          std::span<const FeatureVector> train,
                                          std::size_t num_classes) {
  switch (spec.mode) {
    case ClassWeighting::uniform: return std::vector<double>(num_classes, 1.0);
    case ClassWeighting::explicit_weights: {
      if (spec.values.size() != num_classes) {
        throw ValidationError("explicit class weights need " + std::to_string(num_classes) + " values");
      }
      for (double w : spec.values) {
        if (!(w > 0.0) || !std::isfinite(w)) throw ValidationError("class weights must be positive");
      }
      return spec.values;
    }
    case ClassWeighting::balanced: break;
  }
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& fv : train) {
    if (fv.true_label && *fv.true_label < num_classes) ++counts[*fv.true_label];
  }
  std::vector<double> w(num_classes, 1.0);
  const double n = static_cast<double>(train.size());
  const double k = static_cast<double>(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] > 0) w[c] = n / (k * static_cast<double>(counts[c]));
  }
  return w;
}

SelectorObjective::SelectorObjective(std::vector<double> features, std::vector<std::size_t> labels,
                                     std::size_t num_classes, std::size_t num_features,
                                     std::vector<double> sample_weights, double l2_lambda,
                                     std::vector<bool> pinned)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      num_features_(num_features),
      sample_weights_(std::move(sample_weights)),
      l2_lambda_(l2_lambda),
      pinned_(std::move(pinned)),
      weight_total_(static_cast<double>(labels_.size())) {
  if (pinned_.empty()) pinned_.assign(num_features_, false);
  if (features_.size() != labels_.size() * num_features_ || sample_weights_.size() != labels_.size() ||
      pinned_.size() != num_features_) {
    throw InvariantError("SelectorObjective: inconsistent dimensions");
  }
}

double SelectorObjective::value(std::span<const double> params) const {
  const std::size_t k_count = num_classes_;
  const std::size_t f_count = num_features_;
  const double* w = params.data();
  const double* b = params.data() + k_count * f_count;
  std::vector<double> z(k_count);
  double loss = 0.0;
  for (std::size_t n = 0; n < labels_.size(); ++n) {
    const double* x = features_.data() + n * f_count;
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < k_count; ++k) {
      double acc = b[k];
      for (std::size_t f = 0; f < f_count; ++f) acc += w[k * f_count + f] * x[f];
      z[k] = acc;
      top = std::max(top, acc);
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) sum += std::exp(z[k] - top);
    loss += sample_weights_[n] * (top + std::log(sum) - z[labels_[n]]);
  }
  double reg = 0.0;
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t f = 0; f < f_count; ++f) {
      if (!pinned_[f]) reg += w[k * f_count + f] * w[k * f_count + f];
    }
  }
  return loss / weight_total_ + 0.5 * l2_lambda_ * reg;
}

double SelectorObjective::value_and_gradient(std::span<const double> params,
                                             std::span<double> grad) const {
  const std::size_t k_count = num_classes_;
  const std::size_t f_count = num_features_;
  const double* w = params.data();
  const double* b = params.data() + k_count * f_count;
  std::fill(grad.begin(), grad.end(), 0.0);
  double* gw = grad.data();
  double* gb = grad.data() + k_count * f_count;
  std::vector<double> z(k_count);
  std::vector<double> e(k_count);
  double loss = 0.0;
  const double inv_total = 1.0 / weight_total_;
  for (std::size_t n = 0; n < labels_.size(); ++n) {
    const double* x = features_.data() + n * f_count;
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < k_count; ++k) {
      double acc = b[k];
      for (std::size_t f = 0; f < f_count; ++f) acc += w[k * f_count + f] * x[f];
      z[k] = acc;
      top = std::max(top, acc);
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      e[k] = std::exp(z[k] - top);
      sum += e[k];
    }
    const double s = sample_weights_[n];
    const std::size_t y = labels_[n];
    loss += s * (top + std::log(sum) - z[y]);
    for (std::size_t k = 0; k < k_count; ++k) {
      const double dz = s * inv_total * (e[k] / sum - (k == y ? 1.0 : 0.0));
      gb[k] += dz;
      for (std::size_t f = 0; f < f_count; ++f) gw[k * f_count + f] += dz * x[f];
    }
  }
  double reg = 0.0;
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t f = 0; f < f_count; ++f) {
      const std::size_t i = k * f_count + f;
      if (pinned_[f]) {
        gw[i] = 0.0;
      } else {
        reg += w[i] * w[i];
        gw[i] += l2_lambda_ * w[i];
      }
    }
  }
  return loss * inv_total + 0.5 * l2_lambda_ * reg;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double inf_norm(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

struct CurvaturePair {
  std::vector<double> s;
  std::vector<double> y;
  double rho;
};

constexpr std::size_t kHistory = 10;
constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 60;

}  // namespace

SelectorModel train_selector(std::span<const FeatureVector> train, std::size_t num_classes,
                             double l2_lambda, const ClassWeightSpec& class_weights,
                             const TrainOptions& options) {
  if (train.empty()) throw ValidationError("cannot train a selector on zero vectors");
  if (num_classes < 2) throw ValidationError("a selector needs at least two classes");
  if (!(l2_lambda >= 0.0) || !std::isfinite(l2_lambda)) {
    throw ValidationError("l2_lambda must be finite and non-negative");
  }
  const std::size_t f_count = train.front().values.size();
  std::set<std::size_t> present;
  for (const auto& fv : train) {
    if (!fv.true_label) throw ValidationError("utterance '" + fv.utterance_id + "' has no label");
    if (*fv.true_label >= num_classes) {
      throw ValidationError("utterance '" + fv.utterance_id + "' has label out of range");
    }
    if (fv.values.size() != f_count) {
      throw ValidationError("utterance '" + fv.utterance_id + "' has feature dimension " +
                            std::to_string(fv.values.size()) + ", expected " + std::to_string(f_count));
    }
    for (double x : fv.values) {
      if (!std::isfinite(x)) {
        throw ValidationError("utterance '" + fv.utterance_id + "' has a non-finite feature");
      }
    }
    present.insert(*fv.true_label);
  }
  if (present.size() < 2) throw ValidationError("training data contains a single class");

  SelectorModel model;
  model.num_classes = num_classes;
  model.num_features = f_count;
  model.l2_lambda = l2_lambda;
  model.class_weights = resolve_class_weights(class_weights, train, num_classes);
  model.class_offsets.assign(num_classes, 0.0);

  const std::size_t n_count = train.size();
  const double n = static_cast<double>(n_count);
  model.feature_means.assign(f_count, 0.0);
  model.feature_stds.assign(f_count, 1.0);
  model.pinned.assign(f_count, false);
  for (std::size_t f = 0; f < f_count; ++f) {
    double mean = 0.0;
    for (const auto& fv : train) mean += fv.values[f];
    mean /= n;
    double var = 0.0;
    for (const auto& fv : train) var += (fv.values[f] - mean) * (fv.values[f] - mean);
    var /= n;
    model.feature_means[f] = mean;
    if (var > 0.0 && std::sqrt(var) > 1e-12 * std::max(1.0, std::abs(mean))) {
      model.feature_stds[f] = std::sqrt(var);
    } else {
      model.pinned[f] = true;
    }
  }

  std::vector<double> x(n_count * f_count);
  std::vector<std::size_t> labels(n_count);
  std::vector<double> sample_weights(n_count);
  for (std::size_t i = 0; i < n_count; ++i) {
    for (std::size_t f = 0; f < f_count; ++f) {
      x[i * f_count + f] = model.pinned[f]
                               ? 0.0
                               : (train[i].values[f] - model.feature_means[f]) / model.feature_stds[f];
    }
    labels[i] = *train[i].true_label;
    sample_weights[i] = model.class_weights[labels[i]];
  }
  const SelectorObjective objective(std::move(x), std::move(labels), num_classes, f_count,
                                    std::move(sample_weights), l2_lambda, model.pinned);

  // L-BFGS with Armijo backtracking; every accepted step decreases the objective.
  const std::size_t dim = objective.num_params();
  std::vector<double> params(dim, 0.0);
  std::vector<double> grad(dim);
  std::vector<double> dir(dim);
  std::vector<double> trial(dim);
  std::vector<double> trial_grad(dim);
  std::vector<double> alpha_hist(kHistory);
  std::deque<CurvaturePair> history;

  double value = objective.value_and_gradient(params, grad);
  if (options.objective_trace) options.objective_trace->push_back(value);
  int iter = 0;
  double gnorm = inf_norm(grad);
  while (gnorm > options.gradient_tolerance && iter < options.max_iterations) {
    for (std::size_t i = 0; i < dim; ++i) dir[i] = -grad[i];
    for (std::size_t h = history.size(); h-- > 0;) {
      alpha_hist[h] = history[h].rho * dot(history[h].s, dir);
      for (std::size_t i = 0; i < dim; ++i) dir[i] -= alpha_hist[h] * history[h].y[i];
    }
    if (!history.empty()) {
      const auto& last = history.back();
      const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
      for (double& d : dir) d *= gamma;
    }
    for (std::size_t h = 0; h < history.size(); ++h) {
      const double beta = history[h].rho * dot(history[h].y, dir);
      for (std::size_t i = 0; i < dim; ++i) dir[i] += (alpha_hist[h] - beta) * history[h].s[i];
    }
    double slope = dot(grad, dir);
    double step = 1.0;
    if (!(slope < 0.0)) {
      history.clear();
      for (std::size_t i = 0; i < dim; ++i) dir[i] = -grad[i];
      slope = dot(grad, dir);
    }
    if (history.empty()) step = std::min(1.0, 1.0 / std::max(inf_norm(grad), 1e-300));

    bool accepted = false;
    double trial_value = value;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      for (std::size_t i = 0; i < dim; ++i) trial[i] = params[i] + step * dir[i];
      trial_value = objective.value(trial);
      if (trial_value <= value + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    objective.value_and_gradient(trial, trial_grad);
    CurvaturePair pair{std::vector<double>(dim), std::vector<double>(dim), 0.0};
    for (std::size_t i = 0; i < dim; ++i) {
      pair.s[i] = trial[i] - params[i];
      pair.y[i] = trial_grad[i] - grad[i];
    }
    const double sy = dot(pair.s, pair.y);
    if (sy > 1e-12 * std::sqrt(dot(pair.s, pair.s) * dot(pair.y, pair.y))) {
      pair.rho = 1.0 / sy;
      history.push_back(std::move(pair));
      if (history.size() > kHistory) history.pop_front();
    }
    params.swap(trial);
    grad.swap(trial_grad);
    value = trial_value;
    ++iter;
    gnorm = inf_norm(grad);
    if (options.objective_trace) options.objective_trace->push_back(value);
  }

  model.weights.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(num_classes * f_count));
  model.bias.assign(params.begin() + static_cast<std::ptrdiff_t>(num_classes * f_count), params.end());
  model.training = {iter, value, gnorm, gnorm <= options.gradient_tolerance};
  return model;
}

namespace {

std::vector<double> logits(const SelectorModel& m, std::span<const double> x) {
  if (x.size() != m.num_features) {
    throw ValidationError("feature dimension " + std::to_string(x.size()) +
                          " does not match selector dimension " + std::to_string(m.num_features));
  }
  std::vector<double> z(m.bias);
  for (std::size_t f = 0; f < m.num_features; ++f) {
    if (m.pinned[f]) continue;
    const double xs = (x[f] - m.feature_means[f]) / m.feature_stds[f];
    for (std::size_t k = 0; k < m.num_classes; ++k) z[k] += m.weights[k * m.num_features + f] * xs;
  }
  return z;
}

std::vector<double> softmax(std::vector<double> z) {
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return z;
}

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

}  // namespace

std::vector<double> raw_posterior(const SelectorModel& model, std::span<const double> x) {
  return softmax(logits(model, x));
}

Prediction predict(const SelectorModel& model, std::span<const double> x) {
  std::vector<double> z = logits(model, x);
  for (std::size_t k = 0; k < model.num_classes && k < model.class_offsets.size(); ++k) {
    z[k] += model.class_offsets[k];
  }
  Prediction out;
  if (!model.is_binary()) {
    out.posterior = softmax(z);
    out.index = argmax_lowest(z);
    return out;
  }
  const double theta = model.threshold;
  const std::vector<double> raw = softmax(z);
  if (theta <= 0.0) {
    out.index = 1;
    out.posterior = {0.0, 1.0};
  } else if (theta >= 1.0) {
    out.index = 0;
    out.posterior = {1.0, 0.0};
  } else {
    out.index = raw[1] > theta ? 1 : 0;
    if (theta == 0.5) {
      out.posterior = raw;
    } else {
      z[1] -= std::log(theta / (1.0 - theta));
      out.posterior = softmax(std::move(z));
    }
  }
  return out;
}

Prediction predict(const SelectorModel& model, const FeatureVector& x) {
  return predict(model, std::span<const double>(x.values));
}

std::string_view to_string(ThresholdObjective objective) noexcept {
  switch (objective) {
    case ThresholdObjective::favor_base: return "favor-base";
    case ThresholdObjective::favor_target: return "favor-target";
    case ThresholdObjective::balanced: return "balanced";
  }
  return "?";
}

ThresholdObjective parse_threshold_objective(std::string_view text) {
  if (text == "favor-base" || text == "favor_base") return ThresholdObjective::favor_base;
  if (text == "favor-target" || text == "favor_target") return ThresholdObjective::favor_target;
  if (text == "balanced") return ThresholdObjective::balanced;
  throw ValidationError("unknown threshold objective '" + std::string(text) + "'");
}

namespace {

struct RoutingTable {
  std::vector<double> p2;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> group;  // dataset group per vector
  std::size_t groups = 0;
};

RoutingTable routing_table(const SelectorModel& model, std::span<const FeatureVector> labeled,
                           std::span<const std::string> dataset_ids) {
  if (!model.is_binary()) throw ValidationError("threshold tuning needs a binary selector");
  if (!dataset_ids.empty() && dataset_ids.size() != labeled.size()) {
    throw ValidationError("dataset ids must align with the validation vectors");
  }
  RoutingTable t;
  std::map<std::string, std::size_t> group_of;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (!labeled[i].true_label) {
      throw ValidationError("utterance '" + labeled[i].utterance_id + "' has no label");
    }
    t.p2.push_back(raw_posterior(model, labeled[i].values)[1]);
    t.labels.push_back(*labeled[i].true_label);
    const std::string key = dataset_ids.empty() ? "label-" + std::to_string(*labeled[i].true_label)
                                                : dataset_ids[i];
    t.group.push_back(group_of.emplace(key, group_of.size()).first->second);
  }
  t.groups = group_of.size();
  return t;
}

OperatingPoint evaluate_threshold(const RoutingTable& t, double theta) {
  std::vector<double> hits(t.groups, 0.0);
  std::vector<double> totals(t.groups, 0.0);
  std::vector<std::size_t> label_of_group(t.groups, 0);
  for (std::size_t i = 0; i < t.p2.size(); ++i) {
    const bool to_target = theta <= 0.0 ? true : theta >= 1.0 ? false : t.p2[i] > theta;
    const bool correct = (t.labels[i] == 1) == to_target;
    hits[t.group[i]] += correct ? 1.0 : 0.0;
    totals[t.group[i]] += 1.0;
    label_of_group[t.group[i]] = t.labels[i];
  }
  double base_sum = 0.0;
  double target_sum = 0.0;
  std::size_t base_n = 0;
  std::size_t target_n = 0;
  for (std::size_t g = 0; g < t.groups; ++g) {
    const double acc = hits[g] / totals[g];
    if (label_of_group[g] == 0) {
      base_sum += acc;
      ++base_n;
    } else {
      target_sum += acc;
      ++target_n;
    }
  }
  return {theta, base_n ? base_sum / static_cast<double>(base_n) : 0.0,
          target_n ? target_sum / static_cast<double>(target_n) : 0.0};
}

}  // namespace

OperatingPoint operating_point(const SelectorModel& model, std::span<const FeatureVector> labeled,
                               double threshold, std::span<const std::string> dataset_ids) {
  return evaluate_threshold(routing_table(model, labeled, dataset_ids), threshold);
}

SelectorModel tune_threshold(const SelectorModel& model, std::span<const FeatureVector> validation,
                             ThresholdObjective objective, std::span<const std::string> dataset_ids) {
  const RoutingTable table = routing_table(model, validation, dataset_ids);
  SelectorModel tuned = model;
  tuned.threshold = 0.5;
  if (objective == ThresholdObjective::balanced) return tuned;

  std::vector<double> candidates = table.p2;
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  if (candidates.size() < 2) return tuned;
  candidates.push_back(0.5);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  constexpr double kSlack = 0.05;
  const OperatingPoint neutral = evaluate_threshold(table, 0.5);
  const bool favor_base = objective == ThresholdObjective::favor_base;
  OperatingPoint best = neutral;
  auto primary = [&](const OperatingPoint& p) { return favor_base ? p.base_accuracy : p.target_accuracy; };
  auto secondary = [&](const OperatingPoint& p) { return favor_base ? p.target_accuracy : p.base_accuracy; };
  const double floor = secondary(neutral) - kSlack;
  for (double theta : candidates) {
    const OperatingPoint p = evaluate_threshold(table, theta);
    if (secondary(p) < floor) continue;
    const bool better =
        primary(p) > primary(best) ||
        (primary(p) == primary(best) &&
         (secondary(p) > secondary(best) ||
          (secondary(p) == secondary(best) && std::abs(p.threshold - 0.5) < std::abs(best.threshold - 0.5))));
    if (better) best = p;
  }
  tuned.threshold = best.threshold;
  return tuned;
}

nlohmann::json to_json(const SelectorModel& model) {
  nlohmann::json weights = nlohmann::json::array();
  for (std::size_t k = 0; k < model.num_classes; ++k) {
    weights.push_back(std::vector<double>(
        model.weights.begin() + static_cast<std::ptrdiff_t>(k * model.num_features),
        model.weights.begin() + static_cast<std::ptrdiff_t>((k + 1) * model.num_features)));
  }
  return {
      {"version", SelectorModel::kFormatVersion},
      {"num_classes", model.num_classes},
      {"num_features", model.num_features},
      {"weights", std::move(weights)},
      {"bias", model.bias},
      {"feature_means", model.feature_means},
      {"feature_stds", model.feature_stds},
      {"pinned", model.pinned},
      {"l2_lambda", model.l2_lambda},
      {"class_weights", model.class_weights},
      {"threshold", model.threshold},
      {"class_offsets", model.class_offsets},
      {"class_models", model.class_models},
      {"layout", to_json(model.layout)},
      {"confidence", model.confidence ? to_json(*model.confidence) : nlohmann::json(nullptr)},
      {"duration_s", model.duration_s ? nlohmann::json(*model.duration_s) : nlohmann::json(nullptr)},
      {"training",
       {{"iterations", model.training.iterations},
        {"objective", model.training.objective},
        {"gradient_inf_norm", model.training.gradient_inf_norm},
        {"converged", model.training.converged}}},
  };
}

SelectorModel selector_from_json(const nlohmann::json& j) {
  SelectorModel m;
  try {
    if (!j.contains("version")) throw ValidationError("selector model has no version field");
    const int version = j.at("version").get<int>();
    if (version != SelectorModel::kFormatVersion) {
      throw ValidationError("unsupported selector model version " + std::to_string(version));
    }
    m.num_classes = j.at("num_classes").get<std::size_t>();
    m.num_features = j.at("num_features").get<std::size_t>();
    for (const auto& row : j.at("weights")) {
      const auto r = row.get<std::vector<double>>();
      if (r.size() != m.num_features) throw ValidationError("selector weight row has wrong length");
      m.weights.insert(m.weights.end(), r.begin(), r.end());
    }
    m.bias = j.at("bias").get<std::vector<double>>();
    m.feature_means = j.at("feature_means").get<std::vector<double>>();
    m.feature_stds = j.at("feature_stds").get<std::vector<double>>();
    m.pinned = j.at("pinned").get<std::vector<bool>>();
    m.l2_lambda = j.at("l2_lambda").get<double>();
    m.class_weights = j.at("class_weights").get<std::vector<double>>();
    m.threshold = j.at("threshold").get<double>();
    m.class_offsets = j.at("class_offsets").get<std::vector<double>>();
    m.class_models = j.value("class_models", std::vector<std::string>{});
    m.layout = feature_layout_from_json(j.at("layout"));
    if (const auto& c = j.at("confidence"); !c.is_null()) m.confidence = confidence_config_from_json(c);
    if (const auto& d = j.at("duration_s"); !d.is_null()) m.duration_s = d.get<double>();
    if (const auto it = j.find("training"); it != j.end()) {
      m.training = {it->value("iterations", 0), it->value("objective", 0.0),
                    it->value("gradient_inf_norm", 0.0), it->value("converged", false)};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed selector model: ") + e.what());
  }
  if (m.weights.size() != m.num_classes * m.num_features || m.bias.size() != m.num_classes ||
      m.feature_means.size() != m.num_features || m.feature_stds.size() != m.num_features ||
      m.pinned.size() != m.num_features || m.class_offsets.size() != m.num_classes) {
    throw ValidationError("selector model arrays do not match its dimensions");
  }
  if (m.layout.dim() != m.num_features) {
    throw ValidationError("selector feature layout does not match its dimension");
  }
  for (double s : m.feature_stds) {
    if (!(s > 0.0)) throw ValidationError("selector feature_stds must be positive");
  }
  return m;
}

}  // namespace confens
