// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "confens/error.hpp"
#include "confens/selector.hpp"

namespace confens {

std::size_t FeatureLayout::dim() const noexcept {
  std::size_t d = confidence_models.size();
  for (const auto& a : aux) d += a.dim;
  return d;
}

nlohmann::json to_json(const FeatureLayout& layout) {
  nlohmann::json aux = nlohmann::json::array();
  for (const auto& a : layout.aux) {
    aux.push_back({{"source_id", a.source_id}, {"dim", a.dim}, {"log_scores", a.log_scores}});
  }
  return {{"confidence_models", layout.confidence_models},
          {"aux", std::move(aux)},
          {"layer_id", layout.layer_id}};
}

FeatureLayout feature_layout_from_json(const nlohmann::json& j) {
  FeatureLayout layout;
  try {
    layout.confidence_models = j.at("confidence_models").get<std::vector<std::string>>();
    layout.layer_id = j.value("layer_id", 0);
    for (const auto& a : j.value("aux", nlohmann::json::array())) {
      layout.aux.push_back({a.at("source_id").get<std::string>(), a.at("dim").get<std::size_t>(),
                            a.value("log_scores", false)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed feature layout: ") + e.what());
  }
  return layout;
}

AuxScores collect_aux_scores(std::span<const UtteranceRecord* const> records) {
  AuxScores out;
  for (const UtteranceRecord* r : records) {
    if (!r->aux_scores.empty()) out.emplace(r->utterance_id, r->aux_scores);
  }
  return out;
}

std::vector<FeatureVector> assemble_features(std::span<const std::string> order,
                                             const ConfidenceMatrix& confidences,
                                             const AuxScores* aux, const FeatureLayout& layout,
                                             const std::map<std::string, std::size_t>* labels) {
  std::vector<std::size_t> columns;
  for (const auto& model : layout.confidence_models) {
    const auto it = std::find(confidences.models.begin(), confidences.models.end(), model);
    if (it == confidences.models.end()) {
      throw ValidationError("feature layout names model '" + model +
                            "' that has no confidence column");
    }
    columns.push_back(static_cast<std::size_t>(it - confidences.models.begin()));
  }
  if (!layout.aux.empty() && aux == nullptr) {
    throw ValidationError("feature layout requires aux scores but none were provided");
  }

  std::vector<FeatureVector> out;
  out.reserve(order.size());
  for (const auto& utt : order) {
    FeatureVector fv;
    fv.utterance_id = utt;
    fv.values.reserve(layout.dim());
    if (!columns.empty()) {
      const auto row = confidences.rows.find(utt);
      if (row == confidences.rows.end()) {
        throw ValidationError("utterance '" + utt + "' has no confidences");
      }
      for (std::size_t c : columns) fv.values.push_back(row->second.at(c));
    }
    for (const auto& source : layout.aux) {
      const auto by_utt = aux->find(utt);
      const std::vector<double>* scores = nullptr;
      if (by_utt != aux->end()) {
        if (auto s = by_utt->second.find(source.source_id); s != by_utt->second.end()) {
          scores = &s->second;
        }
      }
      if (scores == nullptr) {
        throw ValidationError("utterance '" + utt + "' is missing aux scores '" + source.source_id + "'");
      }
      if (scores->size() != source.dim) {
        throw ValidationError("utterance '" + utt + "': aux scores '" + source.source_id +
                              "' have length " + std::to_string(scores->size()) + ", layout expects " +
                              std::to_string(source.dim));
      }
      for (double x : *scores) {
        fv.values.push_back(source.log_scores ? std::log(std::max(x, 1e-12)) : x);
      }
    }
    if (labels != nullptr) {
      if (auto l = labels->find(utt); l != labels->end()) fv.true_label = l->second;
    }
    out.push_back(std::move(fv));
  }
  return out;
}

}  // namespace confens
