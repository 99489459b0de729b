// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

// confens: simulate -> confidence -> train-selector -> gridsearch -> evaluate -> report.
//
// Exit codes: 0 success, 2 invalid input, 3 internal error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "confens/confens.hpp"
#include "run_dir.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace confens::cli {
namespace {

constexpr int kExitValidation = 2;
constexpr int kExitInternal = 3;

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
  }
}

fs::path manifest_path(const std::string& corpus) {
  const fs::path p(corpus);
  return fs::is_directory(p) ? p / "manifest.json" : p;
}

std::optional<double> opt(double value, bool given) {
  return given ? std::optional<double>(value) : std::nullopt;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

struct Common {
  std::string corpus;
  std::string config_path;
  std::string preset;
  int layer = 0;
  double duration_s = 0.0;
  std::uint64_t seed = 42;
  std::size_t workers = 1;
  std::string out;
  CLI::Option* duration_opt = nullptr;
  CLI::Option* layer_opt = nullptr;
  CLI::Option* config_opt = nullptr;
  CLI::Option* preset_opt = nullptr;

  std::optional<double> duration() const { return opt(duration_s, duration_opt && *duration_opt); }

  ConfidenceConfig confidence() const {
    if (config_opt && *config_opt) return confidence_config_from_json(read_json_file(config_path));
    return confidence_preset(preset.empty() ? "default" : preset);
  }
};

void add_corpus(CLI::App* app, Common& c) {
  app->add_option("--corpus", c.corpus, "Corpus manifest file or directory containing manifest.json")
      ->required();
}
void add_confidence(CLI::App* app, Common& c) {
  c.config_opt = app->add_option("--config", c.config_path, "Confidence config JSON (flat object or preset name)");
  c.preset_opt = app->add_option("--preset", c.preset, "Confidence preset: default | untuned-max-prob");
  c.config_opt->excludes(c.preset_opt);
}
void add_stream_opts(CLI::App* app, Common& c) {
  c.layer_opt = app->add_option("--layer", c.layer, "Stream layer id (0 = final)");
  c.duration_opt = app->add_option("--duration-s", c.duration_s, "Truncate streams to this many seconds")
                       ->check(CLI::PositiveNumber);
}
void add_out(CLI::App* app, Common& c) { app->add_option("--out", c.out, "Output directory")->required(); }
void add_workers(CLI::App* app, Common& c) {
  app->add_option("--workers", c.workers, "Worker threads (0 = hardware concurrency)");
}

// "lid" or "lid:log"; dimension taken from the corpus.
std::vector<AuxSource> parse_aux(const std::vector<std::string>& specs, const Corpus& corpus) {
  std::vector<AuxSource> out;
  for (const auto& s : specs) {
    AuxSource a;
    const auto colon = s.find(':');
    a.source_id = s.substr(0, colon);
    if (colon != std::string::npos) {
      const auto mode = s.substr(colon + 1);
      if (mode != "log" && mode != "raw") throw ValidationError("aux mode must be 'raw' or 'log', got '" + mode + "'");
      a.log_scores = mode == "log";
    }
    bool found = false;
    for (const auto& group : corpus.records) {
      for (const auto& r : group) {
        if (auto it = r.aux_scores.find(a.source_id); it != r.aux_scores.end()) {
          a.dim = it->second.size();
          found = true;
          break;
        }
      }
      if (found) break;
    }
    if (!found) throw ValidationError("no record carries aux scores '" + a.source_id + "'");
    out.push_back(a);
  }
  return out;
}

json layout_args(const Common& c) {
  return {{"corpus", c.corpus}, {"layer_id", c.layer}, {"duration_s", opt_json(c.duration())},
          {"workers", c.workers}};
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const Common& c, const std::string& spec_path, const std::string& preset,
                 bool seed_given) {
  SimSpec spec = !spec_path.empty() ? sim_spec_from_json(read_json_file(spec_path)) : stress_preset(preset);
  if (seed_given) spec.seed = c.seed;
  spec.validate();
  const Corpus corpus = simulate(spec, c.workers);
  RunDir run(c.out, "simulate");
  write_corpus(corpus, run.path());
  run.add_artifact("manifest.json");
  for (const auto& entry : corpus.manifest.datasets) run.add_artifact(entry.records);
  run.write_json("sim_spec.json", to_json(spec));
  std::cout << "simulated " << corpus.num_records() << " utterances into " << run.path().string() << "\n";
  run.finish({{"spec", to_json(spec)}, {"preset", preset}, {"spec_path", spec_path}, {"workers", c.workers}});
  return 0;
}

// -------------------------------------------------------------- confidence

int cmd_confidence(const Common& c, const std::string& split_name) {
  const Corpus corpus = load_corpus(manifest_path(c.corpus));
  const ConfidenceConfig cfg = c.confidence();
  std::vector<const UtteranceRecord*> records;
  if (split_name == "all") {
    for (const auto& group : corpus.records) {
      for (const auto& r : group) records.push_back(&r);
    }
  } else {
    records = corpus.split_records(parse_split(split_name));
  }
  const ConfidenceMatrix m =
      confidence_matrix(records, corpus.manifest, cfg, {c.layer, c.duration(), c.workers});

  RunDir run(c.out, "confidence");
  std::ostringstream csv;
  csv << "utterance_id,dataset_id";
  for (const auto& model : m.models) csv << ',' << model;
  csv << '\n';
  json rows = json::object();
  for (const auto* r : records) {
    const auto& row = m.rows.at(r->utterance_id);
    csv << r->utterance_id << ',' << r->dataset_id;
    for (double v : row) csv << ',' << json(v).dump();
    csv << '\n';
    rows[r->utterance_id] = row;
  }
  run.write_text("confidences.csv", csv.str());
  run.write_json("confidences.json", {{"config", to_json(cfg)},
                                      {"layer_id", c.layer},
                                      {"duration_s", opt_json(c.duration())},
                                      {"models", m.models},
                                      {"rows", std::move(rows)}});
  std::cout << "wrote confidences for " << records.size() << " utterances x " << m.models.size()
            << " models\n";
  json cfg_json = layout_args(c);
  cfg_json["confidence"] = to_json(cfg);
  cfg_json["split"] = split_name;
  run.finish(cfg_json);
  return 0;
}

// ---------------------------------------------------------- train-selector

struct SelectorArgs {
  std::size_t train_size = 100;
  double l2 = 0.0;
  CLI::Option* l2_opt = nullptr;
  std::string class_weights = "uniform";
  std::vector<std::string> aux;
  bool no_confidence = false;
};

void add_selector_args(CLI::App* app, SelectorArgs& s) {
  app->add_option("--train-size", s.train_size, "Training utterances sampled per dataset");
  s.l2_opt = app->add_option("--l2", s.l2, "Fixed L2 strength (default: tune over the LR grid)");
  app->add_option("--class-weights", s.class_weights, "uniform | balanced (with --l2)")
      ->check(CLI::IsMember({"uniform", "balanced"}));
  app->add_option("--aux", s.aux, "Aux score source to fuse, e.g. lid or lid:log (repeatable)");
  app->add_flag("--no-confidence", s.no_confidence, "Aux-only features");
}

GridSearchOptions grid_options(const Common& c, const SelectorArgs& s, const Corpus& corpus) {
  GridSearchOptions o;
  o.train_size = s.train_size;
  o.seed = c.seed;
  o.workers = c.workers;
  o.layer_id = c.layer;
  o.duration_s = c.duration();
  o.aux = parse_aux(s.aux, corpus);
  o.use_confidences = !s.no_confidence;
  if (*s.l2_opt) {
    o.lr_grid = {{s.l2, s.class_weights == "balanced" ? ClassWeightSpec::balanced() : ClassWeightSpec::uniform()}};
  }
  return o;
}

json grid_options_json(const GridSearchOptions& o) {
  json lr = json::array();
  for (const auto& s : o.lr_grid) lr.push_back(to_json(s));
  json aux = json::array();
  for (const auto& a : o.aux) aux.push_back({{"source_id", a.source_id}, {"dim", a.dim}, {"log_scores", a.log_scores}});
  return {{"train_size", o.train_size}, {"seed", o.seed},         {"workers", o.workers},
          {"layer_id", o.layer_id},     {"duration_s", opt_json(o.duration_s)},
          {"lr_grid", std::move(lr)},   {"aux", std::move(aux)}, {"use_confidences", o.use_confidences}};
}

json entry_json(const LeaderboardEntry& e) {
  return {{"config", to_json(e.config)},
          {"a_avg", e.a_avg},
          {"lr", to_json(e.lr)},
          {"per_dataset_accuracy", e.per_dataset_accuracy}};
}

int cmd_train_selector(const Common& c, const SelectorArgs& s) {
  const Corpus corpus = load_corpus(manifest_path(c.corpus));
  const ConfidenceConfig cfg = c.confidence();
  const GridSearchOptions o = grid_options(c, s, corpus);
  SelectorModel selector;
  const LeaderboardEntry e = fit_config(corpus, cfg, o, &selector);
  RunDir run(c.out, "train-selector");
  run.write_json("selector.json", to_json(selector));
  run.write_json("training.json", entry_json(e));
  std::cout << "validation A_avg " << e.a_avg << " (" << cfg.describe() << ", l2=" << e.lr.l2_lambda << ", "
            << e.lr.class_weights.describe() << ")\n";
  json cfg_json = grid_options_json(o);
  cfg_json["corpus"] = c.corpus;
  cfg_json["confidence"] = to_json(cfg);
  run.finish(cfg_json);
  return 0;
}

// -------------------------------------------------------------- gridsearch

int cmd_gridsearch(const Common& c, const SelectorArgs& s, const std::string& space_arg,
                   const std::string& mode) {
  const Corpus corpus = load_corpus(manifest_path(c.corpus));
  SearchSpace space;
  if (space_arg == "full") {
    space = SearchSpace::full();
  } else if (space_arg == "max-prob") {
    space = SearchSpace::max_prob_only();
  } else {
    space = search_space_from_json(read_json_file(space_arg));
  }
  const GridSearchOptions o = grid_options(c, s, corpus);
  const TuningResult result = grid_search(corpus, space, o);

  json out = to_json(result);
  out["mode"] = mode;
  if (mode == "per-dataset") {
    // Best config for each dataset on its own validation accuracy; ties keep leaderboard order.
    json per = json::object();
    for (const auto& ds : corpus.manifest.dataset_ids()) {
      const LeaderboardEntry* best = nullptr;
      for (const auto& e : result.leaderboard) {
        const auto it = e.per_dataset_accuracy.find(ds);
        if (it == e.per_dataset_accuracy.end()) continue;
        if (!best || it->second > best->per_dataset_accuracy.at(ds)) best = &e;
      }
      if (best) {
        per[ds] = {{"config", to_json(best->config)},
                   {"accuracy", best->per_dataset_accuracy.at(ds)},
                   {"lr", to_json(best->lr)}};
      }
    }
    out["per_dataset_best"] = std::move(per);
  }

  RunDir run(c.out, "gridsearch");
  run.write_json("tuning_result.json", out);
  run.write_text("leaderboard.csv", leaderboard_to_csv(result));
  run.write_json("selector.json", to_json(result.best_selector));
  std::cout << "searched " << result.leaderboard.size() << " configs; best " << result.best_config.describe()
            << " validation A_avg " << result.validation_a_avg << "\n";
  json cfg_json = grid_options_json(o);
  cfg_json["corpus"] = c.corpus;
  cfg_json["space"] = to_json(space);
  cfg_json["mode"] = mode;
  run.finish(cfg_json);
  return 0;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const Common& c, const std::string& selector_path, const std::string& split_name,
                 const std::string& objective_name) {
  const Corpus corpus = load_corpus(manifest_path(c.corpus));
  SelectorModel selector = selector_from_json(read_json_file(selector_path));

  // Features must be rebuilt exactly as in training; any override that
  // disagrees with the selector's recorded layout is rejected.
  const bool cfg_given = (c.config_opt && *c.config_opt) || (c.preset_opt && *c.preset_opt);
  if (!selector.confidence && !selector.layout.confidence_models.empty() && !cfg_given) {
    throw ValidationError("selector does not record its confidence config; pass --config or --preset");
  }
  const ConfidenceConfig cfg = cfg_given ? c.confidence() : selector.confidence.value_or(presets::default_confidence());
  if (*c.layer_opt && c.layer != selector.layout.layer_id) {
    throw ValidationError("feature layout mismatch: selector uses layer " + std::to_string(selector.layout.layer_id) +
                          ", --layer requested " + std::to_string(c.layer));
  }
  if (*c.duration_opt && selector.duration_s != c.duration()) {
    throw ValidationError("feature layout mismatch: --duration-s differs from the selector's training truncation");
  }

  std::optional<OperatingPoint> point;
  if (!objective_name.empty()) {
    const ThresholdObjective objective = parse_threshold_objective(objective_name);
    if (!selector.is_binary()) throw ValidationError("threshold objectives apply to two-model selectors only");
    const auto validation = canonical_split(corpus, Split::validation);
    if (validation.empty()) throw ValidationError("threshold tuning needs validation utterances");
    const auto features =
        selector_features(corpus, validation, cfg, selector.layout, selector.duration_s, c.workers);
    std::vector<std::string> ids;
    for (const auto* r : validation) ids.push_back(r->dataset_id);
    selector = tune_threshold(selector, features, objective, ids);
    point = operating_point(selector, features, selector.threshold, ids);
  }

  const Split split = parse_split(split_name);
  const EvaluationReport report = evaluate_config(corpus, cfg, selector, split, c.workers);

  RunDir run(c.out, "evaluate");
  json j = to_json(report);
  j["threshold"] = selector.threshold;
  if (point) {
    j["validation_operating_point"] = {{"threshold", point->threshold},
                                       {"base_accuracy", point->base_accuracy},
                                       {"target_accuracy", point->target_accuracy}};
  }
  run.write_json("evaluation.json", j);
  run.write_text("evaluation.csv", report_to_csv(report));
  if (point) run.write_json("selector.json", to_json(selector));
  std::cout << report_to_table(report);
  json cfg_json = layout_args(c);
  cfg_json["selector"] = selector_path;
  cfg_json["confidence"] = to_json(cfg);
  cfg_json["split"] = split_name;
  cfg_json["threshold_objective"] = objective_name.empty() ? json(nullptr) : json(objective_name);
  cfg_json["layer_id"] = selector.layout.layer_id;
  cfg_json["duration_s"] = opt_json(selector.duration_s);
  run.finish(cfg_json);
  return 0;
}

// ------------------------------------------------------------------ report

int cmd_report(const std::vector<std::string>& inputs, const std::string& format, const std::string& out) {
  std::ostringstream text;
  for (const auto& path : inputs) {
    const EvaluationReport report = report_from_json(read_json_file(path));
    if (inputs.size() > 1) text << "# " << path << "\n";
    text << (format == "csv" ? report_to_csv(report) : report_to_table(report));
  }
  std::cout << text.str();
  if (!out.empty()) {
    RunDir run(out, "report");
    run.write_text(format == "csv" ? "report.csv" : "report.txt", text.str());
    run.finish({{"inputs", inputs}, {"format", format}});
  }
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Confidence-based ensembles of sequence recognizers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "confens 0.1.0");

  Common common;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic multi-model corpus");
  std::string spec_path;
  std::string sim_preset;
  auto* spec_opt = sim->add_option("--spec", spec_path, "Simulation spec JSON");
  auto* sim_preset_opt = sim->add_option("--preset", sim_preset, "Stress preset")
                             ->check(CLI::IsMember(stress_preset_names()));
  spec_opt->excludes(sim_preset_opt);
  auto* seed_opt = sim->add_option("--seed", common.seed, "Override the spec seed");
  add_workers(sim, common);
  add_out(sim, common);

  auto* conf = app.add_subcommand("confidence", "Per-utterance confidence table");
  std::string conf_split = "all";
  add_corpus(conf, common);
  add_confidence(conf, common);
  add_stream_opts(conf, common);
  conf->add_option("--split", conf_split, "train | validation | test | all")
      ->check(CLI::IsMember({"train", "validation", "test", "all"}));
  add_workers(conf, common);
  add_out(conf, common);

  SelectorArgs sel_args;
  auto* train = app.add_subcommand("train-selector", "Fit the model-selection policy for one confidence config");
  add_corpus(train, common);
  add_confidence(train, common);
  add_stream_opts(train, common);
  add_selector_args(train, sel_args);
  train->add_option("--seed", common.seed, "Training-sample seed");
  add_workers(train, common);
  add_out(train, common);

  auto* grid = app.add_subcommand("gridsearch", "Exhaustive confidence hyperparameter search");
  std::string space_arg = "full";
  std::string mode = "shared";
  add_corpus(grid, common);
  add_stream_opts(grid, common);
  add_selector_args(grid, sel_args);
  grid->add_option("--space", space_arg, "full | max-prob | path to a search-space JSON");
  grid->add_option("--mode", mode, "shared | per-dataset")->check(CLI::IsMember({"shared", "per-dataset"}));
  grid->add_option("--seed", common.seed, "Training-sample seed");
  add_workers(grid, common);
  add_out(grid, common);

  auto* eval = app.add_subcommand("evaluate", "Score a trained selector on a split");
  std::string selector_path;
  std::string eval_split = "test";
  std::string objective;
  add_corpus(eval, common);
  add_confidence(eval, common);
  add_stream_opts(eval, common);
  eval->add_option("--selector", selector_path, "selector.json from train-selector or gridsearch")->required();
  eval->add_option("--split", eval_split, "train | validation | test")
      ->check(CLI::IsMember({"train", "validation", "test"}));
  eval->add_option("--threshold-objective", objective, "favor-base | favor-target | balanced")
      ->check(CLI::IsMember({"favor-base", "favor-target", "balanced"}));
  add_workers(eval, common);
  add_out(eval, common);

  auto* rep = app.add_subcommand("report", "Render evaluation results as tables");
  std::vector<std::string> inputs;
  std::string format = "table";
  std::string rep_out;
  rep->add_option("--input", inputs, "evaluation.json (repeatable)")->required();
  rep->add_option("--format", format, "table | csv")->check(CLI::IsMember({"table", "csv"}));
  rep->add_option("--out", rep_out, "Also write the report into this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  if (*sim) {
    if (spec_path.empty() && sim_preset.empty()) throw ValidationError("simulate needs --spec or --preset");
    return cmd_simulate(common, spec_path, sim_preset, static_cast<bool>(*seed_opt));
  }
  if (*conf) return cmd_confidence(common, conf_split);
  if (*train) return cmd_train_selector(common, sel_args);
  if (*grid) return cmd_gridsearch(common, sel_args, space_arg, mode);
  if (*eval) return cmd_evaluate(common, selector_path, eval_split, objective);
  return cmd_report(inputs, format, rep_out);
}

}  // namespace
}  // namespace confens::cli

int main(int argc, char** argv) {
  try {
    return confens::cli::run(argc, argv);
  } catch (const confens::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return confens::cli::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return confens::cli::kExitInternal;
  }
}
