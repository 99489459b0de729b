// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#include "confens/tuning.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "confens/error.hpp"
#include "confens/parallel.hpp"
#include "confens/rng.hpp"

namespace confens {

SearchSpace SearchSpace::full() {
  return {{Measure::max_prob, Measure::gibbs, Measure::tsallis, Measure::renyi},
          {Normalization::linear, Normalization::exponential},
          {Aggregation::min, Aggregation::max, Aggregation::mean, Aggregation::product},
          {false, true},
          {0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 2.0, 5.0, 10.0},
          {0.1, 0.2, 0.25, 0.33, 0.5, 1.0}};
}

SearchSpace SearchSpace::max_prob_only() {
  SearchSpace s = full();
  s.measures = {Measure::max_prob};
  return s;
}

SearchSpace SearchSpace::single(const ConfidenceConfig& cfg) {
  cfg.validate();
  return {{cfg.measure}, {cfg.normalization}, {cfg.aggregation}, {cfg.exclude_blanks},
          {cfg.temperature}, {cfg.alpha}};
}

void SearchSpace::validate() const {
  if (measures.empty() || normalizations.empty() || aggregations.empty() || exclude_blanks.empty() ||
      temperatures.empty() || alphas.empty()) {
    throw ValidationError("every search-space axis needs at least one value");
  }
  for (double t : temperatures) {
    if (!(t > 0.0)) throw ValidationError("search-space temperatures must be positive");
  }
  for (double a : alphas) {
    if (!(a > 0.0)) throw ValidationError("search-space alphas must be positive");
  }
}

nlohmann::json to_json(const SearchSpace& space) {
  nlohmann::json j;
  for (auto m : space.measures) j["measures"].push_back(std::string(to_string(m)));
  for (auto n : space.normalizations) j["normalizations"].push_back(std::string(to_string(n)));
  for (auto a : space.aggregations) j["aggregations"].push_back(std::string(to_string(a)));
  j["exclude_blanks"] = space.exclude_blanks;
  j["temperatures"] = space.temperatures;
  j["alphas"] = space.alphas;
  return j;
}

SearchSpace search_space_from_json(const nlohmann::json& j) {
  SearchSpace s = SearchSpace::full();
  try {
    if (j.contains("measures")) {
      s.measures.clear();
      for (const auto& m : j.at("measures")) s.measures.push_back(parse_measure(m.get<std::string>()));
    }
    if (j.contains("normalizations")) {
      s.normalizations.clear();
      for (const auto& n : j.at("normalizations")) {
        s.normalizations.push_back(parse_normalization(n.get<std::string>()));
      }
    }
    if (j.contains("aggregations")) {
      s.aggregations.clear();
      for (const auto& a : j.at("aggregations")) {
        s.aggregations.push_back(parse_aggregation(a.get<std::string>()));
      }
    }
    if (j.contains("exclude_blanks")) s.exclude_blanks = j.at("exclude_blanks").get<std::vector<bool>>();
    if (j.contains("temperatures")) s.temperatures = j.at("temperatures").get<std::vector<double>>();
    if (j.contains("alphas")) s.alphas = j.at("alphas").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed search space: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<ConfidenceConfig> enumerate_space(const SearchSpace& space) {
  space.validate();
  std::vector<ConfidenceConfig> out;
  for (Measure m : space.measures) {
    const bool is_max_prob = m == Measure::max_prob;
    const std::vector<Normalization> norms =
        is_max_prob ? std::vector<Normalization>{Normalization::linear} : space.normalizations;
    const std::vector<double> alphas = is_max_prob ? std::vector<double>{1.0} : space.alphas;
    for (Normalization n : norms) {
      for (Aggregation a : space.aggregations) {
        for (bool blanks : space.exclude_blanks) {
          for (double t : space.temperatures) {
            for (double alpha : alphas) out.push_back({m, n, a, blanks, t, alpha});
          }
        }
      }
    }
  }
  return out;
}

std::vector<LrSetting> default_lr_grid() {
  std::vector<LrSetting> grid;
  for (double lambda : {0.001, 0.01, 0.1, 1.0, 10.0}) {
    grid.push_back({lambda, ClassWeightSpec::uniform()});
    grid.push_back({lambda, ClassWeightSpec::balanced()});
  }
  return grid;
}

nlohmann::json to_json(const LrSetting& setting) {
  nlohmann::json weights;
  switch (setting.class_weights.mode) {
    case ClassWeighting::uniform: weights = "uniform"; break;
    case ClassWeighting::balanced: weights = "balanced"; break;
    case ClassWeighting::explicit_weights: weights = setting.class_weights.values; break;
  }
  return {{"l2_lambda", setting.l2_lambda}, {"class_weights", std::move(weights)}};
}

LrSetting lr_setting_from_json(const nlohmann::json& j) {
  LrSetting s;
  try {
    s.l2_lambda = j.at("l2_lambda").get<double>();
    const auto& w = j.value("class_weights", nlohmann::json("uniform"));
    if (w.is_string()) {
      const auto name = w.get<std::string>();
      if (name == "uniform") {
        s.class_weights = ClassWeightSpec::uniform();
      } else if (name == "balanced") {
        s.class_weights = ClassWeightSpec::balanced();
      } else {
        throw ValidationError("unknown class weighting '" + name + "'");
      }
    } else {
      s.class_weights = {ClassWeighting::explicit_weights, w.get<std::vector<double>>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed LR setting: ") + e.what());
  }
  return s;
}

std::vector<const UtteranceRecord*> canonical_split(const Corpus& corpus, Split split) {
  std::vector<const UtteranceRecord*> out;
  for (const auto& ds : corpus.manifest.dataset_ids()) {
    for (std::size_t i = 0; i < corpus.manifest.datasets.size(); ++i) {
      const auto& entry = corpus.manifest.datasets[i];
      if (entry.dataset_id != ds || entry.split != split) continue;
      for (const auto& r : corpus.records.at(i)) out.push_back(&r);
    }
  }
  return out;
}

std::vector<const UtteranceRecord*> sample_training(const Corpus& corpus, std::size_t train_size,
                                                    std::uint64_t seed) {
  if (train_size == 0) throw ValidationError("train_size must be positive");
  std::vector<const UtteranceRecord*> out;
  for (const auto& ds : corpus.manifest.dataset_ids()) {
    std::vector<const UtteranceRecord*> pool;
    for (std::size_t i = 0; i < corpus.manifest.datasets.size(); ++i) {
      const auto& entry = corpus.manifest.datasets[i];
      if (entry.dataset_id != ds || entry.split != Split::train) continue;
      for (const auto& r : corpus.records.at(i)) pool.push_back(&r);
    }
    if (pool.size() < train_size) {
      throw ValidationError("dataset '" + ds + "' has " + std::to_string(pool.size()) +
                            " train utterances, " + std::to_string(train_size) + " requested");
    }
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    CounterRng rng = CounterRng::substream(seed, "train-sample/" + ds);
    for (std::size_t i = 0; i < train_size; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(train_size);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) out.push_back(pool[i]);
  }
  return out;
}

namespace {

struct Problem {
  std::size_t num_classes = 0;
  std::vector<const UtteranceRecord*> units;  // train first, then validation
  std::size_t num_train = 0;
  std::vector<std::size_t> labels;            // per unit
  std::vector<std::size_t> val_dataset;       // per validation unit, index into dataset_ids
  std::vector<std::string> dataset_ids;
  std::vector<std::vector<double>> aux;       // per unit, already transformed
  FeatureLayout layout;
};

Problem build_problem(const Corpus& corpus, const GridSearchOptions& options) {
  Problem p;
  p.num_classes = corpus.manifest.models.size();
  if (p.num_classes < 2) throw ValidationError("model selection needs at least two models");
  p.units = sample_training(corpus, options.train_size, options.seed);
  p.num_train = p.units.size();
  const auto validation = canonical_split(corpus, Split::validation);
  if (validation.empty()) throw ValidationError("the corpus has no validation utterances");
  p.units.insert(p.units.end(), validation.begin(), validation.end());
  p.dataset_ids = corpus.manifest.dataset_ids();
  for (std::size_t u = 0; u < p.units.size(); ++u) {
    const auto& ds = p.units[u]->dataset_id;
    p.labels.push_back(corpus.manifest.label_of(ds));
    if (u >= p.num_train) {
      const auto it = std::lower_bound(p.dataset_ids.begin(), p.dataset_ids.end(), ds);
      p.val_dataset.push_back(static_cast<std::size_t>(it - p.dataset_ids.begin()));
    }
  }

  if (options.use_confidences) p.layout.confidence_models = corpus.manifest.models;
  p.layout.aux = options.aux;
  p.layout.layer_id = options.layer_id;
  if (p.layout.dim() == 0) throw ValidationError("feature layout is empty");

  p.aux.assign(p.units.size(), {});
  if (!options.aux.empty()) {
    FeatureLayout aux_only{{}, options.aux, options.layer_id};
    std::vector<std::string> order;
    for (const auto* r : p.units) order.push_back(r->utterance_id);
    const AuxScores scores = collect_aux_scores(p.units);
    const auto feats = assemble_features(order, ConfidenceMatrix{}, &scores, aux_only);
    for (std::size_t u = 0; u < feats.size(); ++u) p.aux[u] = feats[u].values;
  }
  return p;
}

struct ConfigOutcome {
  LeaderboardEntry entry;
  SelectorModel selector;
};

ConfigOutcome fit_one(const Problem& p, const ConfidenceConfig& cfg, std::size_t canonical_index,
                      const std::vector<double>* table, std::size_t table_stride, std::size_t slot,
                      const GridSearchOptions& options) {
  const std::size_t m = p.layout.confidence_models.size();
  auto features_of = [&](std::size_t u) {
    FeatureVector fv;
    fv.utterance_id = p.units[u]->utterance_id;
    fv.values.reserve(p.layout.dim());
    for (std::size_t k = 0; k < m; ++k) fv.values.push_back((*table)[(u * m + k) * table_stride + slot]);
    fv.values.insert(fv.values.end(), p.aux[u].begin(), p.aux[u].end());
    fv.true_label = p.labels[u];
    return fv;
  };
  std::vector<FeatureVector> train;
  std::vector<FeatureVector> val;
  for (std::size_t u = 0; u < p.num_train; ++u) train.push_back(features_of(u));
  for (std::size_t u = p.num_train; u < p.units.size(); ++u) val.push_back(features_of(u));

  ConfigOutcome best;
  best.entry.a_avg = -1.0;
  std::vector<std::size_t> hits(p.dataset_ids.size());
  std::vector<std::size_t> totals(p.dataset_ids.size());
  for (const LrSetting& lr : options.lr_grid) {
    SelectorModel model = train_selector(train, p.num_classes, lr.l2_lambda, lr.class_weights);
    std::fill(hits.begin(), hits.end(), 0);
    std::fill(totals.begin(), totals.end(), 0);
    for (std::size_t v = 0; v < val.size(); ++v) {
      const std::size_t d = p.val_dataset[v];
      hits[d] += predict(model, val[v]).index == *val[v].true_label ? 1 : 0;
      ++totals[d];
    }
    std::map<std::string, double> per_dataset;
    for (std::size_t d = 0; d < p.dataset_ids.size(); ++d) {
      if (totals[d] > 0) {
        per_dataset[p.dataset_ids[d]] = static_cast<double>(hits[d]) / static_cast<double>(totals[d]);
      }
    }
    const double score = a_avg(per_dataset);
    if (score > best.entry.a_avg) {
      best.entry = {cfg, score, lr, std::move(per_dataset), canonical_index};
      best.selector = std::move(model);
    }
  }
  return best;
}

}  // namespace

TuningResult grid_search(const Corpus& corpus, const SearchSpace& space,
                         const GridSearchOptions& options) {
  const auto configs = enumerate_space(space);
  if (options.lr_grid.empty()) throw ValidationError("the LR hyperparameter grid is empty");
  const Problem p = build_problem(corpus, options);
  const std::size_t m = p.layout.confidence_models.size();
  const TemperatureSweep sweep(space.alphas);
  const std::size_t stride = sweep.size();

  std::vector<ConfigOutcome> outcomes(configs.size());
  std::vector<double> table;
  for (double t : space.temperatures) {
    std::vector<std::size_t> group;
    for (std::size_t c = 0; c < configs.size(); ++c) {
      if (configs[c].temperature == t) group.push_back(c);
    }
    if (group.empty()) continue;

    table.assign(m > 0 ? p.units.size() * m * stride : 0, 0.0);
    if (m > 0) {
      parallel_for(p.units.size(), options.workers, [&](std::size_t u) {
        for (std::size_t k = 0; k < m; ++k) {
          const ProbabilityStream& s = select_layer(*p.units[u], p.layout.confidence_models[k], options.layer_id);
          std::span<double> out(table.data() + (u * m + k) * stride, stride);
          if (options.duration_s) {
            sweep.evaluate(truncate_stream(s, *options.duration_s), t, out);
          } else {
            sweep.evaluate(s, t, out);
          }
        }
      });
    }

    parallel_for(group.size(), options.workers, [&](std::size_t g) {
      const std::size_t c = group[g];
      const std::size_t slot = m > 0 ? sweep.index(configs[c]) : 0;
      outcomes[c] = fit_one(p, configs[c], c, &table, stride, slot, options);
    });
  }

  std::vector<std::size_t> order(configs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return outcomes[a].entry.a_avg > outcomes[b].entry.a_avg;
  });

  TuningResult result;
  for (std::size_t c : order) result.leaderboard.push_back(outcomes[c].entry);
  ConfigOutcome& best = outcomes[order.front()];
  result.best_config = best.entry.config;
  result.validation_a_avg = best.entry.a_avg;
  result.best_selector = std::move(best.selector);
  result.best_selector.class_models = corpus.manifest.models;
  result.best_selector.layout = p.layout;
  result.best_selector.confidence = result.best_config;
  result.best_selector.duration_s = options.duration_s;
  return result;
}

LeaderboardEntry fit_config(const Corpus& corpus, const ConfidenceConfig& cfg,
                            const GridSearchOptions& options, SelectorModel* selector) {
  TuningResult r = grid_search(corpus, SearchSpace::single(cfg), options);
  if (selector) *selector = std::move(r.best_selector);
  return r.leaderboard.front();
}

std::vector<FeatureVector> selector_features(const Corpus& corpus,
                                             std::span<const UtteranceRecord* const> records,
                                             const ConfidenceConfig& cfg,
                                             const FeatureLayout& layout,
                                             std::optional<double> duration_s,
                                             std::size_t workers) {
  ConfidenceMatrix conf;
  if (!layout.confidence_models.empty()) {
    conf = confidence_matrix(records, corpus.manifest, cfg, {layout.layer_id, duration_s, workers});
  }
  const AuxScores aux = collect_aux_scores(records);
  std::vector<std::string> order;
  std::map<std::string, std::size_t> labels;
  for (const auto* r : records) {
    order.push_back(r->utterance_id);
    labels.emplace(r->utterance_id, corpus.manifest.label_of(r->dataset_id));
  }
  return assemble_features(order, conf, &aux, layout, &labels);
}

EvaluationReport evaluate_config(const Corpus& corpus, const ConfidenceConfig& cfg,
                                 const SelectorModel& selector, Split split, std::size_t workers) {
  if (!selector.class_models.empty() && selector.class_models != corpus.manifest.models) {
    throw ValidationError("selector was trained for models that differ from the corpus manifest");
  }
  if (selector.num_classes != corpus.manifest.models.size()) {
    throw ValidationError("selector class count does not match the corpus models");
  }
  if (selector.confidence && !(*selector.confidence == cfg)) {
    throw ValidationError("feature layout mismatch: selector was trained with confidence '" +
                          selector.confidence->describe() + "', evaluation requested '" +
                          cfg.describe() + "'");
  }
  const auto records = corpus.split_records(split);
  if (records.empty()) {
    throw ValidationError("split '" + std::string(to_string(split)) + "' is empty");
  }
  const auto features =
      selector_features(corpus, records, cfg, selector.layout, selector.duration_s, workers);
  Predictions predictions;
  for (const auto& fv : features) predictions[fv.utterance_id] = predict(selector, fv).index;
  return evaluate_predictions(corpus, split, predictions);
}

nlohmann::json to_json(const TuningResult& result) {
  nlohmann::json board = nlohmann::json::array();
  for (std::size_t i = 0; i < result.leaderboard.size(); ++i) {
    const auto& e = result.leaderboard[i];
    board.push_back({{"rank", i + 1},
                     {"canonical_index", e.canonical_index},
                     {"config", to_json(e.config)},
                     {"a_avg", e.a_avg},
                     {"lr", to_json(e.lr)},
                     {"per_dataset_accuracy", e.per_dataset_accuracy}});
  }
  return {{"best_config", to_json(result.best_config)},
          {"best_selector", to_json(result.best_selector)},
          {"validation_a_avg", result.validation_a_avg},
          {"leaderboard", std::move(board)}};
}

std::string leaderboard_to_csv(const TuningResult& result) {
  std::ostringstream out;
  out << "rank,measure,normalization,aggregation,exclude_blanks,temperature,alpha,a_avg,l2_lambda,"
         "class_weights\n";
  for (std::size_t i = 0; i < result.leaderboard.size(); ++i) {
    const auto& e = result.leaderboard[i];
    const auto& c = e.config;
    out << i + 1 << ',' << to_string(c.measure) << ',' << to_string(c.normalization) << ','
        << to_string(c.aggregation) << ',' << (c.exclude_blanks ? "true" : "false") << ','
        << nlohmann::json(c.temperature).dump() << ',' << nlohmann::json(c.alpha).dump() << ','
        << nlohmann::json(e.a_avg).dump() << ',' << nlohmann::json(e.lr.l2_lambda).dump() << ','
        << e.lr.class_weights.describe() << '\n';
  }
  return out.str();
}

}  // namespace confens
