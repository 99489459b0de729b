// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "confens/error.hpp"
#include "confens/probstream.hpp"

namespace confens {

using nlohmann::json;

namespace {

const json& require(const json& j, const char* field, std::string_view context) {
  if (!j.is_object()) {
    throw ValidationError(std::string(context) + ": expected a JSON object");
  }
  const auto it = j.find(field);
  if (it == j.end()) {
    throw ValidationError(std::string(context) + ": missing field '" + field + "'");
  }
  return *it;
}

template <typename T>
T require_as(const json& j, const char* field, std::string_view context) {
  const json& v = require(j, field, context);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string(context) + ": field '" + field + "' has the wrong type");
  }
}

}  // namespace

json to_json(const ProbabilityStream& stream) {
  const auto v = static_cast<std::size_t>(stream.vocab_size);
  json steps = json::array();
  for (std::size_t t = 0; t < stream.num_steps(); ++t) {
    json values = json::array();
    for (std::size_t i = 0; i < v; ++i) values.push_back(stream.values[t * v + i]);
    steps.push_back({{"emitted_token", stream.emitted_tokens[t]}, {"values", std::move(values)}});
  }
  return {
      {"utterance_id", stream.utterance_id},
      {"model_id", stream.model_id},
      {"layer_id", stream.layer_id},
      {"frame_rate_hz", stream.frame_rate_hz},
      {"vocab_size", stream.vocab_size},
      {"blank_index", stream.blank_index},
      {"kind", std::string(to_string(stream.kind))},
      {"steps", std::move(steps)},
  };
}

ProbabilityStream stream_from_json(const json& j, std::string_view utterance_id) {
  const std::string ctx = "utterance '" + std::string(utterance_id) + "' stream";
  ProbabilityStream s;
  s.utterance_id = require_as<std::string>(j, "utterance_id", ctx);
  s.model_id = require_as<std::string>(j, "model_id", ctx);
  s.layer_id = require_as<int>(j, "layer_id", ctx);
  s.frame_rate_hz = require_as<double>(j, "frame_rate_hz", ctx);
  s.vocab_size = require_as<int>(j, "vocab_size", ctx);
  s.blank_index = require_as<int>(j, "blank_index", ctx);
  s.kind = parse_value_kind(require_as<std::string>(j, "kind", ctx));
  const json& steps = require(j, "steps", ctx);
  if (!steps.is_array()) throw ValidationError(ctx + ": field 'steps' must be an array");
  if (s.vocab_size < 1) throw ValidationError(ctx + ": field 'vocab_size' must be positive");
  const auto v = static_cast<std::size_t>(s.vocab_size);
  s.values.reserve(steps.size() * v);
  s.emitted_tokens.reserve(steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const std::string step_ctx = ctx + " (model '" + s.model_id + "') steps[" + std::to_string(t) + "]";
    const json& step = steps[t];
    s.emitted_tokens.push_back(require_as<int>(step, "emitted_token", step_ctx));
    const json& values = require(step, "values", step_ctx);
    if (!values.is_array() || values.size() != v) {
      throw ValidationError(step_ctx + ": field 'values' has length " +
                            std::to_string(values.is_array() ? values.size() : 0) +
                            ", expected vocab_size " + std::to_string(v));
    }
    for (const json& x : values) {
      if (!x.is_number()) throw ValidationError(step_ctx + ": field 'values' must hold numbers");
      s.values.push_back(x.get<double>());
    }
  }
  return s;
}

json to_json(const UtteranceRecord& record) {
  json hyps = json::object();
  for (const auto& [model_id, output] : record.hypotheses) {
    json streams = json::array();
    for (const auto& [layer, stream] : output.streams) streams.push_back(to_json(stream));
    hyps[model_id] = {{"hypothesis_words", output.hypothesis_words}, {"streams", std::move(streams)}};
  }
  json aux = json::object();
  for (const auto& [source, scores] : record.aux_scores) aux[source] = scores;
  return {
      {"utterance_id", record.utterance_id},
      {"dataset_id", record.dataset_id},
      {"reference_words", record.reference_words},
      {"hypotheses", std::move(hyps)},
      {"aux_scores", std::move(aux)},
  };
}

UtteranceRecord record_from_json(const json& j) {
  UtteranceRecord r;
  r.utterance_id = require_as<std::string>(j, "utterance_id", "record");
  const std::string ctx = "utterance '" + r.utterance_id + "'";
  r.dataset_id = require_as<std::string>(j, "dataset_id", ctx);
  r.reference_words = require_as<std::vector<std::string>>(j, "reference_words", ctx);
  const json& hyps = require(j, "hypotheses", ctx);
  if (!hyps.is_object()) throw ValidationError(ctx + ": field 'hypotheses' must be an object");
  for (const auto& [model_id, h] : hyps.items()) {
    const std::string hctx = ctx + " hypotheses['" + model_id + "']";
    ModelOutput out;
    out.hypothesis_words = require_as<std::vector<std::string>>(h, "hypothesis_words", hctx);
    const json& streams = require(h, "streams", hctx);
    if (!streams.is_array()) throw ValidationError(hctx + ": field 'streams' must be an array");
    for (const json& sj : streams) {
      ProbabilityStream s = stream_from_json(sj, r.utterance_id);
      const int layer = s.layer_id;
      if (!out.streams.emplace(layer, std::move(s)).second) {
        throw ValidationError(hctx + ": layer_id " + std::to_string(layer) + " appears twice");
      }
    }
    r.hypotheses.emplace(model_id, std::move(out));
  }
  if (const auto it = j.find("aux_scores"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw ValidationError(ctx + ": field 'aux_scores' must be an object");
    for (const auto& [source, scores] : it->items()) {
      try {
        r.aux_scores.emplace(source, scores.get<std::vector<double>>());
      } catch (const json::exception&) {
        throw ValidationError(ctx + ": aux_scores['" + source + "'] must be an array of numbers");
      }
    }
  }
  r.validate();
  return r;
}

json to_json(const CorpusManifest& manifest) {
  json datasets = json::array();
  for (const auto& d : manifest.datasets) {
    datasets.push_back({{"dataset_id", d.dataset_id},
                        {"correct_model_id", d.correct_model_id},
                        {"split", std::string(to_string(d.split))},
                        {"records", d.records}});
  }
  return {{"models", manifest.models}, {"datasets", std::move(datasets)}};
}

CorpusManifest manifest_from_json(const json& j) {
  CorpusManifest m;
  m.models = require_as<std::vector<std::string>>(j, "models", "manifest");
  const json& datasets = require(j, "datasets", "manifest");
  if (!datasets.is_array()) throw ValidationError("manifest: field 'datasets' must be an array");
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const std::string ctx = "manifest datasets[" + std::to_string(i) + "]";
    DatasetEntry d;
    d.dataset_id = require_as<std::string>(datasets[i], "dataset_id", ctx);
    d.correct_model_id = require_as<std::string>(datasets[i], "correct_model_id", ctx);
    d.split = parse_split(require_as<std::string>(datasets[i], "split", ctx));
    d.records = require_as<std::string>(datasets[i], "records", ctx);
    m.datasets.push_back(std::move(d));
  }
  m.validate();
  return m;
}

std::string record_to_jsonl(const UtteranceRecord& record) { return to_json(record).dump(); }

UtteranceRecord record_from_jsonl(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed record line: ") + e.what());
  }
  return record_from_json(j);
}

Corpus load_corpus(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ValidationError("cannot open manifest '" + manifest_path.string() + "'");
  json mj;
  try {
    mj = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed manifest '" + manifest_path.string() + "': " + e.what());
  }

  Corpus corpus;
  corpus.manifest = manifest_from_json(mj);
  const auto base = manifest_path.parent_path();
  for (const auto& entry : corpus.manifest.datasets) {
    const auto path = base / entry.records;
    std::ifstream rin(path);
    if (!rin) throw ValidationError("cannot open records file '" + path.string() + "'");
    std::vector<UtteranceRecord> group;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(rin, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        group.push_back(record_from_jsonl(line));
      } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    corpus.records.push_back(std::move(group));
  }
  corpus.validate();
  for (const auto& m : corpus.manifest.unmatched_models()) {
    std::cerr << "warning: model '" << m << "' is the correct model for no dataset\n";
  }
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir,
                  std::string_view manifest_name) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < corpus.manifest.datasets.size(); ++i) {
    const auto path = dir / corpus.manifest.datasets[i].records;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    for (const auto& r : corpus.records.at(i)) out << record_to_jsonl(r) << '\n';
  }
  const auto mpath = dir / manifest_name;
  std::ofstream out(mpath, std::ios::binary);
  if (!out) throw Error("cannot write '" + mpath.string() + "'");
  out << to_json(corpus.manifest).dump(2) << '\n';
}

}  // namespace confens
