// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace confens {

enum class ValueKind { logits, probabilities };
enum class Split { train, validation, test };

std::string_view to_string(ValueKind kind) noexcept;
std::string_view to_string(Split split) noexcept;
ValueKind parse_value_kind(std::string_view text);
Split parse_split(std::string_view text);

/// One decoder emission: a score vector over the vocabulary and the token
/// the decoder emitted at this step (the blank index for blank steps).
struct StepView {
  std::span<const double> values;
  int emitted_token;
};

/// Per-step output distributions of one model (and one layer) on one
/// utterance. Layer 0 is the final layer by convention.
struct ProbabilityStream {
  std::string utterance_id;
  std::string model_id;
  int layer_id = 0;
  double frame_rate_hz = 1.0;
  int vocab_size = 0;
  int blank_index = 0;
  ValueKind kind = ValueKind::logits;
  /// Row-major, num_steps() x vocab_size.
  std::vector<double> values;
  std::vector<int> emitted_tokens;

  std::size_t num_steps() const noexcept { return emitted_tokens.size(); }
  StepView step(std::size_t index) const;

  /// Throws ValidationError naming the utterance, field and step index.
  void validate() const;
};

struct ModelOutput {
  std::vector<std::string> hypothesis_words;
  /// Keyed by layer_id; keys are unique per model by construction.
  std::map<int, ProbabilityStream> streams;
};

struct UtteranceRecord {
  std::string utterance_id;
  std::string dataset_id;
  std::vector<std::string> reference_words;
  std::map<std::string, ModelOutput> hypotheses;
  std::map<std::string, std::vector<double>> aux_scores;

  void validate() const;
};

struct DatasetEntry {
  std::string dataset_id;
  std::string correct_model_id;
  Split split = Split::train;
  /// Records file, relative to the manifest's directory.
  std::string records;
};

/// Model order and the dataset -> correct model mapping.
struct CorpusManifest {
  std::vector<std::string> models;
  std::vector<DatasetEntry> datasets;

  std::optional<std::size_t> find_model(std::string_view model_id) const noexcept;
  std::size_t model_index(std::string_view model_id) const;
  /// Index (into `models`) of the model designated correct for a dataset.
  std::size_t label_of(std::string_view dataset_id) const;
  /// Distinct dataset ids, sorted.
  std::vector<std::string> dataset_ids() const;
  /// Models that are correct for no dataset (the mapping is then not surjective).
  std::vector<std::string> unmatched_models() const;

  void validate() const;
};

/// A loaded corpus. records[i] holds the utterances of manifest.datasets[i].
struct Corpus {
  CorpusManifest manifest;
  std::vector<std::vector<UtteranceRecord>> records;

  /// Records of one split, in manifest order then file order.
  std::vector<const UtteranceRecord*> split_records(Split split) const;
  std::size_t num_records() const noexcept;

  /// Checks every record against the manifest: known models, a hypothesis
  /// for every manifest model, constant aux dimensions, unique ids.
  void validate() const;
};

// Serialization. Objects are emitted with sorted keys and round-trip
// precision doubles, so writing a loaded corpus reproduces its records
// byte for byte.
nlohmann::json to_json(const ProbabilityStream& stream);
ProbabilityStream stream_from_json(const nlohmann::json& j, std::string_view utterance_id);
nlohmann::json to_json(const UtteranceRecord& record);
UtteranceRecord record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(const nlohmann::json& j);

std::string record_to_jsonl(const UtteranceRecord& record);
UtteranceRecord record_from_jsonl(std::string_view line);

Corpus load_corpus(const std::filesystem::path& manifest_path);

/// Writes `manifest_name` plus one JSONL file per manifest entry into `dir`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir,
                  std::string_view manifest_name = "manifest.json");

/// First ceil(duration_s * frame_rate_hz) steps; shorter streams are returned unchanged.
ProbabilityStream truncate_stream(const ProbabilityStream& stream, double duration_s);

const ProbabilityStream& select_layer(const UtteranceRecord& record, std::string_view model_id,
                                      int layer_id);

}  // namespace confens
