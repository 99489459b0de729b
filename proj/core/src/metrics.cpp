// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#include "confens/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "confens/error.hpp"

namespace confens {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

WerResult wer(std::span<const std::string> reference, std::span<const std::string> hypothesis) {
  if (reference.empty()) throw ValidationError("WER is undefined for an empty reference");
  const std::size_t n = reference.size();
  const std::size_t m = hypothesis.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  WerResult r;
  r.reference_length = n;
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = reference[i - 1] == hypothesis[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        if (!same) ++r.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++r.deletions;
      --i;
    } else {
      ++r.insertions;
      --j;
    }
  }
  r.wer = static_cast<double>(r.edits()) / static_cast<double>(n);
  return r;
}

std::map<std::string, double> per_dataset_accuracy(const Predictions& predictions,
                                                   const Corpus& corpus, Split split) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // hits, total
  for (const UtteranceRecord* r : corpus.split_records(split)) {
    const auto it = predictions.find(r->utterance_id);
    if (it == predictions.end()) {
      throw ValidationError("no prediction for utterance '" + r->utterance_id + "'");
    }
    auto& t = tally[r->dataset_id];
    t.first += it->second == corpus.manifest.label_of(r->dataset_id) ? 1 : 0;
    ++t.second;
  }
  std::map<std::string, double> out;
  for (const auto& [ds, t] : tally) {
    out[ds] = static_cast<double>(t.first) / static_cast<double>(t.second);
  }
  return out;
}

double a_avg(const std::map<std::string, double>& per_dataset) {
  if (per_dataset.empty()) throw ValidationError("A_avg over zero datasets");
  double sum = 0.0;
  for (const auto& [_, acc] : per_dataset) sum += acc;
  return sum / static_cast<double>(per_dataset.size());
}

double a_avg(const Predictions& predictions, const Corpus& corpus, Split split) {
  return a_avg(per_dataset_accuracy(predictions, corpus, split));
}

EvaluationReport ensemble_wer(const Corpus& corpus, Split split, const Predictions& predictions) {
  const auto& models = corpus.manifest.models;
  EvaluationReport report;
  report.split = std::string(to_string(split));
  report.systems = models;
  report.systems.emplace_back(kEnsembleSystem);
  report.systems.emplace_back(kOracleSystem);

  // system -> dataset -> edits
  std::map<std::string, std::map<std::string, std::size_t>> edits;
  for (const UtteranceRecord* r : corpus.split_records(split)) {
    auto& counts = report.counts[r->dataset_id];
    ++counts.utterances;
    const auto pred = predictions.find(r->utterance_id);
    if (pred == predictions.end()) {
      throw ValidationError("no prediction for utterance '" + r->utterance_id + "'");
    }
    if (r->reference_words.empty()) {
      ++counts.skipped_without_reference;
      continue;
    }
    counts.reference_words += r->reference_words.size();
    std::vector<std::size_t> per_model(models.size());
    for (std::size_t k = 0; k < models.size(); ++k) {
      const auto& hyp = r->hypotheses.at(models[k]).hypothesis_words;
      per_model[k] = wer(r->reference_words, hyp).edits();
      edits[models[k]][r->dataset_id] += per_model[k];
    }
    const std::size_t selected = pred->second;
    if (selected >= models.size()) {
      throw ValidationError("prediction for '" + r->utterance_id + "' is not a model index");
    }
    edits[std::string(kEnsembleSystem)][r->dataset_id] += per_model[selected];
    edits[std::string(kOracleSystem)][r->dataset_id] +=
        per_model[corpus.manifest.label_of(r->dataset_id)];
    report.utterances.push_back({r->utterance_id, r->dataset_id, selected,
                                 static_cast<double>(per_model[selected]) /
                                     static_cast<double>(r->reference_words.size())});
  }

  for (const auto& [system, by_dataset] : edits) {
    for (const auto& [ds, e] : by_dataset) {
      const std::size_t words = report.counts[ds].reference_words;
      if (words > 0) report.wer[system][ds] = static_cast<double>(e) / static_cast<double>(words);
    }
  }
  std::size_t skipped = 0;
  for (const auto& [_, c] : report.counts) skipped += c.skipped_without_reference;
  if (skipped > 0) {
    std::fprintf(stderr, "warning: %zu utterance(s) without a reference excluded from WER\n", skipped);
  }
  return report;
}

EvaluationReport evaluate_predictions(const Corpus& corpus, Split split,
                                      const Predictions& predictions) {
  EvaluationReport report = ensemble_wer(corpus, split, predictions);
  report.per_dataset_accuracy = per_dataset_accuracy(predictions, corpus, split);
  report.a_avg = a_avg(report.per_dataset_accuracy);
  return report;
}

nlohmann::json to_json(const EvaluationReport& report) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [ds, c] : report.counts) {
    counts[ds] = {{"utterances", c.utterances},
                  {"reference_words", c.reference_words},
                  {"skipped_without_reference", c.skipped_without_reference}};
  }
  nlohmann::json utts = nlohmann::json::array();
  for (const auto& u : report.utterances) {
    utts.push_back({{"utterance_id", u.utterance_id},
                    {"dataset_id", u.dataset_id},
                    {"selected_model", u.selected_model},
                    {"wer", u.ensemble_wer}});
  }
  return {{"split", report.split},
          {"a_avg", report.a_avg},
          {"per_dataset_accuracy", report.per_dataset_accuracy},
          {"wer", report.wer},
          {"systems", report.systems},
          {"counts", std::move(counts)},
          {"utterances", std::move(utts)}};
}

EvaluationReport report_from_json(const nlohmann::json& j) {
  EvaluationReport r;
  try {
    r.split = j.value("split", "");
    r.a_avg = j.at("a_avg").get<double>();
    r.per_dataset_accuracy = j.at("per_dataset_accuracy").get<std::map<std::string, double>>();
    r.wer = j.at("wer").get<std::map<std::string, std::map<std::string, double>>>();
    r.systems = j.at("systems").get<std::vector<std::string>>();
    const auto counts = j.value("counts", nlohmann::json::object());
    for (const auto& [ds, c] : counts.items()) {
      r.counts[ds] = {c.value("utterances", std::size_t{0}), c.value("reference_words", std::size_t{0}),
                      c.value("skipped_without_reference", std::size_t{0})};
    }
    const auto utterances = j.value("utterances", nlohmann::json::array());
    for (const auto& u : utterances) {
      r.utterances.push_back({u.at("utterance_id").get<std::string>(), u.at("dataset_id").get<std::string>(),
                              u.at("selected_model").get<std::size_t>(), u.at("wer").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed evaluation report: ") + e.what());
  }
  return r;
}

namespace {

std::vector<std::string> report_datasets(const EvaluationReport& report) {
  std::vector<std::string> ds;
  for (const auto& [d, _] : report.counts) ds.push_back(d);
  for (const auto& [d, _] : report.per_dataset_accuracy) {
    if (std::find(ds.begin(), ds.end(), d) == ds.end()) ds.push_back(d);
  }
  return ds;
}

std::string percent(double x) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * x;
  return s.str();
}

}  // namespace

std::string report_to_csv(const EvaluationReport& report) {
  const auto datasets = report_datasets(report);
  std::ostringstream out;
  out << "system";
  for (const auto& d : datasets) out << ',' << d;
  out << '\n';
  for (const auto& system : report.systems) {
    out << "wer:" << system;
    const auto it = report.wer.find(system);
    for (const auto& d : datasets) {
      out << ',';
      if (it != report.wer.end()) {
        if (auto v = it->second.find(d); v != it->second.end()) out << percent(v->second);
      }
    }
    out << '\n';
  }
  out << "selection_accuracy";
  for (const auto& d : datasets) {
    out << ',';
    if (auto v = report.per_dataset_accuracy.find(d); v != report.per_dataset_accuracy.end()) {
      out << percent(v->second);
    }
  }
  out << '\n' << "a_avg," << percent(report.a_avg) << '\n';
  return out.str();
}

std::string report_to_table(const EvaluationReport& report) {
  const auto datasets = report_datasets(report);
  std::size_t name_w = std::string("selection accuracy").size();
  for (const auto& s : report.systems) name_w = std::max(name_w, s.size());
  std::vector<std::size_t> col_w;
  for (const auto& d : datasets) col_w.push_back(std::max<std::size_t>(d.size(), 7));

  std::ostringstream out;
  auto row = [&](const std::string& name, const std::vector<std::string>& cells) {
    out << std::left << std::setw(static_cast<int>(name_w)) << name;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out << "  " << std::right << std::setw(static_cast<int>(col_w[i])) << cells[i];
    }
    out << '\n';
  };
  row("WER (%)", datasets);
  for (const auto& system : report.systems) {
    std::vector<std::string> cells;
    const auto it = report.wer.find(system);
    for (const auto& d : datasets) {
      std::string c = "-";
      if (it != report.wer.end()) {
        if (auto v = it->second.find(d); v != it->second.end()) c = percent(v->second);
      }
      cells.push_back(c);
    }
    row(system, cells);
  }
  std::vector<std::string> acc;
  for (const auto& d : datasets) {
    auto v = report.per_dataset_accuracy.find(d);
    acc.push_back(v == report.per_dataset_accuracy.end() ? "-" : percent(v->second));
  }
  row("selection accuracy", acc);
  out << "A_avg: " << percent(report.a_avg) << "%\n";
  return out.str();
}

}  // namespace confens
