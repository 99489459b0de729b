// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#include "confens/confidence.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "confens/error.hpp"
#include "confens/parallel.hpp"

namespace confens {

std::string_view to_string(Measure m) noexcept {
  switch (m) {
    case Measure::max_prob: return "max_prob";
    case Measure::gibbs: return "gibbs";
    case Measure::tsallis: return "tsallis";
    case Measure::renyi: return "renyi";
  }
  return "?";
}

std::string_view to_string(Normalization n) noexcept {
  return n == Normalization::linear ? "linear" : "exponential";
}

std::string_view to_string(Aggregation a) noexcept {
  switch (a) {
    case Aggregation::min: return "min";
    case Aggregation::max: return "max";
    case Aggregation::mean: return "mean";
    case Aggregation::product: return "product";
  }
  return "?";
}

Measure parse_measure(std::string_view text) {
  if (text == "max_prob") return Measure::max_prob;
  if (text == "gibbs") return Measure::gibbs;
  if (text == "tsallis") return Measure::tsallis;
  if (text == "renyi") return Measure::renyi;
  throw ValidationError("unknown confidence measure '" + std::string(text) + "'");
}

Normalization parse_normalization(std::string_view text) {
  if (text == "linear") return Normalization::linear;
  if (text == "exponential") return Normalization::exponential;
  throw ValidationError("unknown normalization '" + std::string(text) + "'");
}

Aggregation parse_aggregation(std::string_view text) {
  if (text == "min") return Aggregation::min;
  if (text == "max") return Aggregation::max;
  if (text == "mean") return Aggregation::mean;
  if (text == "product") return Aggregation::product;
  throw ValidationError("unknown aggregation '" + std::string(text) + "'");
}

void ConfidenceConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ValidationError("confidence temperature must be positive and finite");
  }
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ValidationError("confidence alpha must be positive and finite");
  }
}

std::string ConfidenceConfig::describe() const {
  std::ostringstream s;
  s << to_string(measure);
  if (measure != Measure::max_prob) s << '/' << to_string(normalization);
  s << '/' << to_string(aggregation) << '/' << (exclude_blanks ? "no-blanks" : "with-blanks")
    << "/T=" << temperature;
  if (measure == Measure::tsallis || measure == Measure::renyi) s << "/alpha=" << alpha;
  return s.str();
}

namespace presets {

ConfidenceConfig untuned_max_prob() {
  return {Measure::max_prob, Normalization::linear, Aggregation::product, false, 1.0, 1.0};
}

ConfidenceConfig default_confidence() {
  return {Measure::renyi, Normalization::linear, Aggregation::mean, true, 1.0, 0.25};
}

}  // namespace presets

ConfidenceConfig confidence_preset(std::string_view name) {
  if (name == "untuned-max-prob") return presets::untuned_max_prob();
  if (name == "default") return presets::default_confidence();
  throw ValidationError("unknown confidence preset '" + std::string(name) +
                        "' (expected 'default' or 'untuned-max-prob')");
}

nlohmann::json to_json(const ConfidenceConfig& cfg) {
  return {{"measure", std::string(to_string(cfg.measure))},
          {"normalization", std::string(to_string(cfg.normalization))},
          {"aggregation", std::string(to_string(cfg.aggregation))},
          {"exclude_blanks", cfg.exclude_blanks},
          {"temperature", cfg.temperature},
          {"alpha", cfg.alpha}};
}

ConfidenceConfig confidence_config_from_json(const nlohmann::json& j) {
  if (j.is_string()) return confidence_preset(j.get<std::string>());
  if (!j.is_object()) throw ValidationError("confidence config must be an object or a preset name");
  if (auto it = j.find("preset"); it != j.end()) return confidence_preset(it->get<std::string>());
  ConfidenceConfig cfg = presets::default_confidence();
  try {
    if (auto it = j.find("measure"); it != j.end()) cfg.measure = parse_measure(it->get<std::string>());
    if (auto it = j.find("normalization"); it != j.end()) {
      cfg.normalization = parse_normalization(it->get<std::string>());
    }
    if (auto it = j.find("aggregation"); it != j.end()) {
      cfg.aggregation = parse_aggregation(it->get<std::string>());
    }
    if (auto it = j.find("exclude_blanks"); it != j.end()) cfg.exclude_blanks = it->get<bool>();
    if (auto it = j.find("temperature"); it != j.end()) cfg.temperature = it->get<double>();
    if (auto it = j.find("alpha"); it != j.end()) cfg.alpha = it->get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed confidence config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void step_distribution(std::span<const double> values, ValueKind kind, double temperature,
                       std::span<double> out) {
  if (out.size() != values.size()) throw InvariantError("step_distribution: output size mismatch");
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  double top = kNegInf;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double z;
    if (kind == ValueKind::logits) {
      z = values[i] / temperature;
    } else {
      z = values[i] > 0.0 ? std::log(values[i]) / temperature : kNegInf;
    }
    out[i] = z;
    top = std::max(top, z);
  }
  if (top == kNegInf || std::isnan(top)) throw ValidationError("degenerate step");
  double sum = 0.0;
  for (double& z : out) {
    z = std::exp(z - top);
    sum += z;
  }
  for (double& z : out) z /= sum;
}

std::vector<double> step_distribution(std::span<const double> values, ValueKind kind,
                                      double temperature) {
  std::vector<double> out(values.size());
  step_distribution(values, kind, temperature, out);
  return out;
}

namespace {

double gibbs_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

double power_sum(std::span<const double> p, double alpha) {
  double s = 0.0;
  for (double x : p) {
    if (x > 0.0) s += std::pow(x, alpha);
  }
  return s;
}

double tsallis_from_power_sum(double s, double alpha) { return (1.0 - s) / (alpha - 1.0); }
double renyi_from_power_sum(double s, double alpha) { return std::log(s) / (1.0 - alpha); }

double max_prob(std::span<const double> p) {
  return std::clamp(*std::max_element(p.begin(), p.end()), 0.0, 1.0);
}

struct Accumulator {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  double log_sum = 0.0;
  std::size_t n = 0;

  void add(double c) {
    lo = std::min(lo, c);
    hi = std::max(hi, c);
    sum += c;
    log_sum += std::log(c);
    ++n;
  }

  double finish(Aggregation a) const {
    double r = 0.0;
    switch (a) {
      case Aggregation::min: r = lo; break;
      case Aggregation::max: r = hi; break;
      case Aggregation::mean: r = sum / static_cast<double>(n); break;
      case Aggregation::product: r = std::exp(log_sum); break;
    }
    return std::clamp(r, 0.0, 1.0);
  }
};

constexpr std::size_t kAggregations = 4;
constexpr std::size_t kBlankOptions = 2;

}  // namespace

double entropy(std::span<const double> p, Measure measure, double alpha) {
  switch (measure) {
    case Measure::gibbs: return gibbs_entropy(p);
    case Measure::tsallis:
      return alpha == 1.0 ? gibbs_entropy(p) : tsallis_from_power_sum(power_sum(p, alpha), alpha);
    case Measure::renyi:
      return alpha == 1.0 ? gibbs_entropy(p) : renyi_from_power_sum(power_sum(p, alpha), alpha);
    case Measure::max_prob: break;
  }
  throw InvariantError("max_prob is not an entropy measure");
}

double max_entropy(std::size_t vocab_size, Measure measure, double alpha) {
  const double v = static_cast<double>(vocab_size);
  if (measure == Measure::tsallis && alpha != 1.0) {
    return (1.0 - std::pow(v, 1.0 - alpha)) / (alpha - 1.0);
  }
  if (measure == Measure::max_prob) throw InvariantError("max_prob is not an entropy measure");
  return std::log(v);
}

double normalized_confidence(double h, double h_max, Normalization normalization) {
  if (!(h_max > 0.0)) return 1.0;
  double c;
  if (normalization == Normalization::linear) {
    c = 1.0 - h / h_max;
  } else {
    const double floor = std::exp(-h_max);
    c = (std::exp(-h) - floor) / (1.0 - floor);
  }
  return std::clamp(c, 0.0, 1.0);
}

double step_confidence(std::span<const double> p, const ConfidenceConfig& cfg) {
  if (p.empty()) throw ValidationError("empty distribution");
  if (cfg.measure == Measure::max_prob) return max_prob(p);
  return normalized_confidence(entropy(p, cfg.measure, cfg.alpha),
                               max_entropy(p.size(), cfg.measure, cfg.alpha), cfg.normalization);
}

double aggregate(std::span<const double> step_confidences, Aggregation aggregation) {
  if (step_confidences.empty()) throw ValidationError("cannot aggregate zero step confidences");
  Accumulator acc;
  for (double c : step_confidences) acc.add(c);
  return acc.finish(aggregation);
}

namespace {

struct StreamResult {
  double value;
  bool fell_back;
};

StreamResult stream_confidence_impl(const ProbabilityStream& stream, const ConfidenceConfig& cfg) {
  cfg.validate();
  std::vector<double> p(static_cast<std::size_t>(stream.vocab_size));
  Accumulator all;
  Accumulator lexical;
  for (std::size_t t = 0; t < stream.num_steps(); ++t) {
    const StepView s = stream.step(t);
    step_distribution(s.values, stream.kind, cfg.temperature, p);
    const double c = step_confidence(p, cfg);
    all.add(c);
    if (s.emitted_token != stream.blank_index) lexical.add(c);
  }
  if (all.n == 0) throw ValidationError("stream of utterance '" + stream.utterance_id + "' has no steps");
  if (!cfg.exclude_blanks) return {all.finish(cfg.aggregation), false};
  if (lexical.n == 0) return {all.finish(cfg.aggregation), true};
  return {lexical.finish(cfg.aggregation), false};
}

}  // namespace

double stream_confidence(const ProbabilityStream& stream, const ConfidenceConfig& cfg) {
  return stream_confidence_impl(stream, cfg).value;
}

TemperatureSweep::TemperatureSweep(std::vector<double> alphas)
    : alphas_(std::move(alphas)), step_keys_(3 + 4 * alphas_.size()) {
  for (double a : alphas_) {
    if (!(a > 0.0)) throw ValidationError("alpha must be positive");
  }
}

std::size_t TemperatureSweep::size() const noexcept {
  return step_keys_ * kAggregations * kBlankOptions;
}

// Step keys: 0 max_prob, 1-2 gibbs (linear, exponential), then per alpha
// tsallis linear, tsallis exponential, renyi linear, renyi exponential.
std::size_t TemperatureSweep::step_key(const ConfidenceConfig& cfg) const {
  const std::size_t norm = cfg.normalization == Normalization::linear ? 0 : 1;
  switch (cfg.measure) {
    case Measure::max_prob: return 0;
    case Measure::gibbs: return 1 + norm;
    case Measure::tsallis:
    case Measure::renyi: {
      const auto it = std::find(alphas_.begin(), alphas_.end(), cfg.alpha);
      if (it == alphas_.end()) throw InvariantError("alpha not covered by the sweep");
      const auto a = static_cast<std::size_t>(it - alphas_.begin());
      return 3 + 4 * a + (cfg.measure == Measure::renyi ? 2 : 0) + norm;
    }
  }
  throw InvariantError("unknown measure");
}

std::size_t TemperatureSweep::index(const ConfidenceConfig& cfg) const {
  return (step_key(cfg) * kAggregations + static_cast<std::size_t>(cfg.aggregation)) * kBlankOptions +
         (cfg.exclude_blanks ? 1 : 0);
}

void TemperatureSweep::evaluate(const ProbabilityStream& stream, double temperature,
                                std::span<double> out) const {
  if (out.size() != size()) throw InvariantError("TemperatureSweep: output size mismatch");
  const auto v = static_cast<std::size_t>(stream.vocab_size);
  const std::size_t na = alphas_.size();

  double h_max_log = std::log(static_cast<double>(v));
  std::vector<double> h_max_tsallis(na);
  for (std::size_t a = 0; a < na; ++a) h_max_tsallis[a] = max_entropy(v, Measure::tsallis, alphas_[a]);
  std::vector<double> h_max_renyi(na);
  for (std::size_t a = 0; a < na; ++a) h_max_renyi[a] = max_entropy(v, Measure::renyi, alphas_[a]);

  std::vector<Accumulator> all(step_keys_);
  std::vector<Accumulator> lexical(step_keys_);
  std::vector<double> c(step_keys_);
  std::vector<double> p(v);

  for (std::size_t t = 0; t < stream.num_steps(); ++t) {
    const StepView s = stream.step(t);
    step_distribution(s.values, stream.kind, temperature, p);
    c[0] = max_prob(p);
    const double hg = gibbs_entropy(p);
    c[1] = normalized_confidence(hg, h_max_log, Normalization::linear);
    c[2] = normalized_confidence(hg, h_max_log, Normalization::exponential);
    for (std::size_t a = 0; a < na; ++a) {
      const double alpha = alphas_[a];
      double ht;
      double hr;
      if (alpha == 1.0) {
        ht = hg;
        hr = hg;
      } else {
        const double ps = power_sum(p, alpha);
        ht = tsallis_from_power_sum(ps, alpha);
        hr = renyi_from_power_sum(ps, alpha);
      }
      c[3 + 4 * a + 0] = normalized_confidence(ht, h_max_tsallis[a], Normalization::linear);
      c[3 + 4 * a + 1] = normalized_confidence(ht, h_max_tsallis[a], Normalization::exponential);
      c[3 + 4 * a + 2] = normalized_confidence(hr, h_max_renyi[a], Normalization::linear);
      c[3 + 4 * a + 3] = normalized_confidence(hr, h_max_renyi[a], Normalization::exponential);
    }
    const bool blank = s.emitted_token == stream.blank_index;
    for (std::size_t k = 0; k < step_keys_; ++k) {
      all[k].add(c[k]);
      if (!blank) lexical[k].add(c[k]);
    }
  }

  for (std::size_t k = 0; k < step_keys_; ++k) {
    const Accumulator& kept = lexical[k].n > 0 ? lexical[k] : all[k];
    for (std::size_t g = 0; g < kAggregations; ++g) {
      const auto agg = static_cast<Aggregation>(g);
      out[(k * kAggregations + g) * kBlankOptions + 0] = all[k].finish(agg);
      out[(k * kAggregations + g) * kBlankOptions + 1] = kept.finish(agg);
    }
  }
}

ConfidenceMatrix confidence_matrix(const Corpus& corpus, const ConfidenceConfig& cfg,
                                   const ConfidenceOptions& options) {
  std::vector<const UtteranceRecord*> records;
  for (const auto& group : corpus.records) {
    for (const auto& r : group) records.push_back(&r);
  }
  return confidence_matrix(records, corpus.manifest, cfg, options);
}

ConfidenceMatrix confidence_matrix(std::span<const UtteranceRecord* const> records,
                                   const CorpusManifest& manifest, const ConfidenceConfig& cfg,
                                   const ConfidenceOptions& options) {
  cfg.validate();
  const std::size_t m = manifest.models.size();
  std::vector<std::vector<double>> rows(records.size(), std::vector<double>(m));
  std::atomic<std::size_t> fallbacks{0};
  parallel_for(records.size(), options.workers, [&](std::size_t i) {
    const UtteranceRecord& r = *records[i];
    for (std::size_t k = 0; k < m; ++k) {
      const ProbabilityStream& s = select_layer(r, manifest.models[k], options.layer_id);
      const StreamResult res = options.duration_s
                                   ? stream_confidence_impl(truncate_stream(s, *options.duration_s), cfg)
                                   : stream_confidence_impl(s, cfg);
      rows[i][k] = res.value;
      if (res.fell_back) fallbacks.fetch_add(1, std::memory_order_relaxed);
    }
  });
  if (fallbacks.load() > 0) {
    std::cerr << "warning: " << fallbacks.load()
              << " stream(s) had only blank steps; their confidence uses all steps\n";
  }
  ConfidenceMatrix out;
  out.models = manifest.models;
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.rows.emplace(records[i]->utterance_id, std::move(rows[i]));
  }
  return out;
}

}  // namespace confens
