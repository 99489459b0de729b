// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#include "confens/probstream.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "confens/error.hpp"

namespace confens {

std::string_view to_string(ValueKind kind) noexcept {
  return kind == ValueKind::logits ? "logits" : "probabilities";
}

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

ValueKind parse_value_kind(std::string_view text) {
  if (text == "logits") return ValueKind::logits;
  if (text == "probabilities") return ValueKind::probabilities;
  throw ValidationError("unknown value kind '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "validation") return Split::validation;
  if (text == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(text) + "'");
}

StepView ProbabilityStream::step(std::size_t index) const {
  const auto v = static_cast<std::size_t>(vocab_size);
  return {std::span<const double>(values).subspan(index * v, v), emitted_tokens.at(index)};
}

namespace {

[[noreturn]] void stream_error(const ProbabilityStream& s, const std::string& what) {
  std::ostringstream msg;
  msg << "utterance '" << s.utterance_id << "', model '" << s.model_id << "', layer "
      << s.layer_id << ": " << what;
  throw ValidationError(msg.str());
}

}  // namespace

void ProbabilityStream::validate() const {
  if (vocab_size < 1) stream_error(*this, "vocab_size must be positive");
  if (blank_index < 0 || blank_index >= vocab_size) {
    stream_error(*this, "blank_index " + std::to_string(blank_index) + " outside [0, vocab_size)");
  }
  if (!(frame_rate_hz > 0.0) || !std::isfinite(frame_rate_hz)) {
    stream_error(*this, "frame_rate_hz must be positive");
  }
  if (emitted_tokens.empty()) stream_error(*this, "steps must be non-empty");
  const auto v = static_cast<std::size_t>(vocab_size);
  if (values.size() != emitted_tokens.size() * v) {
    stream_error(*this, "values size does not match steps x vocab_size");
  }
  for (std::size_t t = 0; t < num_steps(); ++t) {
    const StepView s = step(t);
    if (s.emitted_token < 0 || s.emitted_token >= vocab_size) {
      stream_error(*this, "steps[" + std::to_string(t) + "].emitted_token " +
                              std::to_string(s.emitted_token) + " out of range");
    }
    double sum = 0.0;
    for (double x : s.values) {
      if (!std::isfinite(x)) {
        stream_error(*this, "steps[" + std::to_string(t) + "].values contains a non-finite value");
      }
      if (kind == ValueKind::probabilities && (x < 0.0 || x > 1.0)) {
        stream_error(*this, "steps[" + std::to_string(t) + "].values has a probability outside [0, 1]");
      }
      sum += x;
    }
    if (kind == ValueKind::probabilities && std::abs(sum - 1.0) > 1e-6) {
      std::ostringstream what;
      what.precision(17);
      what << "steps[" << t << "].values sum to " << sum << ", expected 1 within 1e-6";
      stream_error(*this, what.str());
    }
  }
}

void UtteranceRecord::validate() const {
  if (utterance_id.empty()) throw ValidationError("record with empty utterance_id");
  for (const auto& [model_id, output] : hypotheses) {
    for (const auto& [layer, stream] : output.streams) {
      if (stream.utterance_id != utterance_id) {
        throw ValidationError("utterance '" + utterance_id + "': stream of model '" + model_id +
                              "' carries utterance_id '" + stream.utterance_id + "'");
      }
      if (stream.model_id != model_id) {
        throw ValidationError("utterance '" + utterance_id + "': stream under model '" + model_id +
                              "' carries model_id '" + stream.model_id + "'");
      }
      if (stream.layer_id != layer) {
        throw ValidationError("utterance '" + utterance_id + "': layer key mismatch");
      }
      stream.validate();
    }
  }
  for (const auto& [source, scores] : aux_scores) {
    for (double x : scores) {
      if (!std::isfinite(x)) {
        throw ValidationError("utterance '" + utterance_id + "': aux_scores['" + source +
                              "'] contains a non-finite value");
      }
    }
  }
}

std::optional<std::size_t> CorpusManifest::find_model(std::string_view model_id) const noexcept {
  const auto it = std::find(models.begin(), models.end(), model_id);
  if (it == models.end()) return std::nullopt;
  return static_cast<std::size_t>(it - models.begin());
}

std::size_t CorpusManifest::model_index(std::string_view model_id) const {
  if (auto idx = find_model(model_id)) return *idx;
  throw ValidationError("unknown model_id '" + std::string(model_id) + "'");
}

std::size_t CorpusManifest::label_of(std::string_view dataset_id) const {
  for (const auto& d : datasets) {
    if (d.dataset_id == dataset_id) return model_index(d.correct_model_id);
  }
  throw ValidationError("unknown dataset_id '" + std::string(dataset_id) + "'");
}

std::vector<std::string> CorpusManifest::dataset_ids() const {
  std::set<std::string> ids;
  for (const auto& d : datasets) ids.insert(d.dataset_id);
  return {ids.begin(), ids.end()};
}

std::vector<std::string> CorpusManifest::unmatched_models() const {
  std::vector<std::string> out;
  for (const auto& m : models) {
    const bool used = std::any_of(datasets.begin(), datasets.end(),
                                  [&](const DatasetEntry& d) { return d.correct_model_id == m; });
    if (!used) out.push_back(m);
  }
  return out;
}

void CorpusManifest::validate() const {
  if (models.empty()) throw ValidationError("manifest lists no models");
  std::set<std::string> seen(models.begin(), models.end());
  if (seen.size() != models.size()) throw ValidationError("manifest lists a model twice");
  std::set<std::pair<std::string, Split>> entries;
  for (const auto& d : datasets) {
    if (d.dataset_id.empty()) throw ValidationError("dataset entry with empty dataset_id");
    if (!find_model(d.correct_model_id)) {
      throw ValidationError("dataset '" + d.dataset_id + "': correct_model_id '" +
                            d.correct_model_id + "' is not a manifest model");
    }
    if (!entries.emplace(d.dataset_id, d.split).second) {
      throw ValidationError("dataset '" + d.dataset_id + "' lists split '" +
                            std::string(to_string(d.split)) + "' twice");
    }
  }
  for (const auto& d : datasets) {
    for (const auto& other : datasets) {
      if (d.dataset_id == other.dataset_id && d.correct_model_id != other.correct_model_id) {
        throw ValidationError("dataset '" + d.dataset_id + "' maps to two correct models");
      }
    }
  }
}

std::vector<const UtteranceRecord*> Corpus::split_records(Split split) const {
  std::vector<const UtteranceRecord*> out;
  for (std::size_t i = 0; i < manifest.datasets.size(); ++i) {
    if (manifest.datasets[i].split != split) continue;
    for (const auto& r : records.at(i)) out.push_back(&r);
  }
  return out;
}

std::size_t Corpus::num_records() const noexcept {
  std::size_t n = 0;
  for (const auto& group : records) n += group.size();
  return n;
}

void Corpus::validate() const {
  manifest.validate();
  if (records.size() != manifest.datasets.size()) {
    throw ValidationError("corpus has " + std::to_string(records.size()) +
                          " record groups for " + std::to_string(manifest.datasets.size()) +
                          " manifest entries");
  }
  std::set<std::string> ids;
  std::map<std::string, std::size_t> aux_dims;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& entry = manifest.datasets[i];
    for (const auto& r : records[i]) {
      r.validate();
      if (r.dataset_id != entry.dataset_id) {
        throw ValidationError("utterance '" + r.utterance_id + "': dataset_id '" + r.dataset_id +
                              "' listed under dataset '" + entry.dataset_id + "'");
      }
      if (!ids.insert(r.utterance_id).second) {
        throw ValidationError("utterance '" + r.utterance_id + "' appears twice");
      }
      for (const auto& [model_id, output] : r.hypotheses) {
        if (!manifest.find_model(model_id)) {
          throw ValidationError("utterance '" + r.utterance_id + "': unknown model_id '" +
                                model_id + "'");
        }
      }
      for (const auto& model_id : manifest.models) {
        if (!r.hypotheses.contains(model_id)) {
          throw ValidationError("utterance '" + r.utterance_id + "': missing hypotheses for model '" +
                                model_id + "'");
        }
      }
      for (const auto& [source, scores] : r.aux_scores) {
        auto [it, inserted] = aux_dims.emplace(source, scores.size());
        if (!inserted && it->second != scores.size()) {
          throw ValidationError("utterance '" + r.utterance_id + "': aux_scores['" + source +
                                "'] has length " + std::to_string(scores.size()) + ", expected " +
                                std::to_string(it->second));
        }
      }
    }
  }
}

ProbabilityStream truncate_stream(const ProbabilityStream& stream, double duration_s) {
  if (!(duration_s > 0.0)) throw ValidationError("truncation duration must be positive");
  const double wanted = std::ceil(duration_s * stream.frame_rate_hz);
  if (wanted >= static_cast<double>(stream.num_steps())) return stream;
  const auto keep = static_cast<std::size_t>(wanted);
  ProbabilityStream out = stream;
  out.emitted_tokens.resize(keep);
  out.values.resize(keep * static_cast<std::size_t>(stream.vocab_size));
  return out;
}

const ProbabilityStream& select_layer(const UtteranceRecord& record, std::string_view model_id,
                                      int layer_id) {
  const auto it = record.hypotheses.find(std::string(model_id));
  if (it == record.hypotheses.end()) {
    throw ValidationError("utterance '" + record.utterance_id + "': no output for model '" +
                          std::string(model_id) + "'");
  }
  const auto& streams = it->second.streams;
  if (auto s = streams.find(layer_id); s != streams.end()) return s->second;
  std::ostringstream msg;
  msg << "utterance '" << record.utterance_id << "', model '" << model_id << "': no layer "
      << layer_id << "; available layers [";
  bool first = true;
  for (const auto& [layer, _] : streams) {
    msg << (first ? "" : ", ") << layer;
    first = false;
  }
  msg << "]";
  throw ValidationError(msg.str());
}

}  // namespace confens
