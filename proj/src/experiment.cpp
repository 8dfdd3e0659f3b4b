#include "sdoh/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <memory>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "sdoh/errors.hpp"
#include "sdoh/svg_plot.hpp"
#include "sdoh/util.hpp"

namespace sdoh {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw Error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(4);
  ss << v;
  return ss.str();
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

Corpus load_inputs(const std::vector<CorpusInput>& inputs) {
  Corpus merged = load_corpus(inputs[0].path, inputs[0].source);
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    merged = merge_corpora(merged, load_corpus(inputs[i].path, inputs[i].source));
  }
  return merged;
}

// Binary-task predictions are scored on set emptiness only, so any single
// label stands in for "positive".
LabelSet binary_positive_set() { return LabelSet{kAllLabels[0]}; }

std::vector<LabelSet> gold_for_ids(const Corpus& corpus,
                                   const std::unordered_map<std::string, std::size_t>& index,
                                   const std::vector<std::string>& ids) {
  std::vector<LabelSet> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw ValidationError("unknown record id in split: " + id);
    out.push_back(corpus.records[it->second].gold);
  }
  return out;
}

std::vector<LabelSet> predict_ids(const Predictor& predictor, const Corpus& corpus,
                                  const std::unordered_map<std::string, std::size_t>& index,
                                  const std::vector<std::string>& ids) {
  std::vector<LabelSet> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto& rec = corpus.records[index.at(id)];
    if (predictor.model().config.variant == Task::multilabel) {
      out.push_back(predictor.classify(rec.id, rec.text));
    } else {
      out.push_back(predictor.classify_binary(rec.id, rec.text) ? binary_positive_set()
                                                                : LabelSet{});
    }
  }
  return out;
}

std::string predictions_to_jsonl(const Corpus& corpus,
                                 const std::unordered_map<std::string, std::size_t>& index,
                                 const std::vector<std::string>& ids,
                                 const std::vector<LabelSet>& predicted, Task task) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& rec = corpus.records[index.at(ids[i])];
    json line;
    line["id"] = rec.id;
    if (task == Task::multilabel) {
      line["predicted"] = predicted[i].names();
      line["gold"] = rec.gold.names();
    } else {
      line["predicted_positive"] = predicted[i].any();
      line["gold_positive"] = rec.gold.any();
    }
    out += line.dump();
    out += "\n";
  }
  return out;
}

std::string latency_to_json(const CascadeLatencySummary& lat) {
  json obj;
  obj["n_sentences"] = lat.n_sentences;
  obj["n_backend_calls"] = lat.n_backend_calls;
  obj["gate_mean_seconds"] = lat.gate_mean_seconds;
  obj["multilabel_mean_seconds"] = lat.multilabel_mean_seconds;
  obj["total_seconds"] = lat.total_seconds;
  obj["sentences_per_second"] = lat.sentences_per_second;
  return obj.dump(2) + "\n";
}

TrainConfig resolve_gate_training(const ExperimentConfig& cfg) {
  if (cfg.gate_training) return *cfg.gate_training;
  TrainConfig t = cfg.training;
  t.learning_rate = default_train_config(Task::binary).learning_rate;
  return t;
}

}  // namespace

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  json obj;
  obj["name"] = cfg.name;
  json corpora = json::array();
  for (const auto& in : cfg.corpora) {
    json entry;
    entry["path"] = in.path;
    entry["source"] = to_string(in.source);
    corpora.push_back(entry);
  }
  obj["corpora"] = corpora;
  json split;
  split["seed"] = cfg.split_seed;
  split["fractions"] = cfg.fractions;
  obj["split"] = split;
  obj["model"] = json::parse(model_config_to_json(cfg.model));
  obj["training"] = json::parse(train_config_to_json(cfg.training));
  obj["with_cascade"] = cfg.with_cascade;
  if (cfg.gate_training) {
    obj["gate_training"] = json::parse(train_config_to_json(*cfg.gate_training));
  }
  if (cfg.foldplan) {
    json fp;
    fp["k"] = cfg.foldplan->k;
    fp["repeats"] = cfg.foldplan->repeats;
    fp["seed"] = cfg.foldplan->seed;
    obj["foldplan"] = fp;
  }
  obj["output_dir"] = cfg.output_dir;
  return obj.dump(2) + "\n";
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("experiment config: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg.name = obj.at("name").get<std::string>();
    for (const auto& entry : obj.at("corpora")) {
      CorpusInput in;
      in.path = entry.at("path").get<std::string>();
      in.source = source_from_string(entry.at("source").get<std::string>());
      cfg.corpora.push_back(in);
    }
    const auto& split = obj.at("split");
    cfg.split_seed = split.at("seed").get<std::uint64_t>();
    auto fr = split.at("fractions").get<std::vector<double>>();
    if (fr.size() != 3) throw ParseError("experiment config: expected three split fractions");
    cfg.fractions = {fr[0], fr[1], fr[2]};
    cfg.model = model_config_from_json(obj.at("model").dump());
    cfg.training = train_config_from_json(obj.at("training").dump());
    cfg.with_cascade = obj.value("with_cascade", false);
    if (obj.contains("gate_training")) {
      cfg.gate_training = train_config_from_json(obj.at("gate_training").dump());
    }
    if (obj.contains("foldplan")) {
      const auto& fp = obj.at("foldplan");
      FoldPlanSpec plan;
      plan.k = fp.at("k").get<int>();
      plan.repeats = fp.at("repeats").get<int>();
      plan.seed = fp.at("seed").get<std::uint64_t>();
      cfg.foldplan = plan;
    }
    cfg.output_dir = obj.at("output_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("experiment config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  return experiment_config_from_json(read_text(path));
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.corpora.empty()) throw ValidationError("experiment needs at least one corpus");
  if (cfg.output_dir.empty()) throw ValidationError("experiment needs an output directory");
  validate_model_config(cfg.model);

  fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  // staged status marker: a crash leaves "incomplete" behind
  write_text(dir / "status.json", json{{"status", "incomplete"}}.dump(2) + "\n");
  write_text(dir / "experiment.json", experiment_config_to_json(cfg));

  Corpus corpus = load_inputs(cfg.corpora);
  write_text(dir / "stats.json", stats_to_json(corpus_stats(corpus)));

  SplitSpec split = stratified_split(corpus, cfg.fractions, cfg.split_seed);
  save_split(split, dir / "split.json");

  auto annotator = std::make_shared<StubAnnotator>();
  std::shared_ptr<SentenceEmbedder> embedder =
      make_embedder(cfg.model.features.embedder_id, cfg.model.features.cui_dim);
  auto index = corpus.id_index();
  Task task = cfg.model.variant;

  TrainedModel model = train(corpus, split, cfg.model, cfg.training, *annotator, *embedder);
  export_model(model, dir / "model");

  ExperimentResult result;
  result.dir = dir;

  Predictor predictor(model, annotator, embedder);
  std::vector<LabelSet> gold = gold_for_ids(corpus, index, split.test);
  std::vector<LabelSet> pred = predict_ids(predictor, corpus, index, split.test);
  if (task == Task::binary) {
    // gold sets carry full label detail; binary scoring only looks at emptiness
    for (auto& g : gold) g = g.any() ? binary_positive_set() : LabelSet{};
  }
  result.test_report = score(gold, pred, task);
  write_text(dir / "predictions.jsonl", predictions_to_jsonl(corpus, index, split.test, pred, task));
  write_text(dir / "test_metrics.json", report_to_json(result.test_report));
  write_text(dir / "test_metrics.csv", report_to_csv(result.test_report));

  if (cfg.foldplan) {
    FoldPlan plan = make_fold_plan(corpus, cfg.foldplan->k, cfg.foldplan->repeats,
                                   cfg.foldplan->seed);
    save_foldplan(plan, dir / "foldplan.json");
    result.crossval_summary = run_crossval(corpus, plan, cfg.model, cfg.training);
    write_text(dir / "crossval.json", crossval_to_json(*result.crossval_summary));
  }

  if (cfg.with_cascade) {
    if (task != Task::multilabel) {
      throw ValidationError("cascade experiments need a multilabel model");
    }
    ModelConfig gate_cfg = cfg.model;
    gate_cfg.variant = Task::binary;
    gate_cfg.thresholds.clear();
    TrainedModel gate_model =
        train(corpus, split, gate_cfg, resolve_gate_training(cfg), *annotator, *embedder);
    export_model(gate_model, dir / "gate");
    auto gate = std::make_shared<Predictor>(std::move(gate_model), annotator, embedder);
    auto backend = std::make_shared<TraditionalBackend>(
        std::make_shared<Predictor>(model, annotator, embedder));
    CascadeClassifier cascade(gate, backend);
    CascadeEvaluation eval = evaluate_cascade(cascade, corpus, split);
    result.cascade_report = eval.report;
    write_text(dir / "cascade_metrics.json", report_to_json(eval.report));
    // wall-clock data lives in its own files so the metric reports above
    // stay byte-stable across reruns
    write_text(dir / "cascade_latency.json", latency_to_json(eval.latency));
    std::string routed;
    for (const auto& p : eval.predictions) {
      routed += routed_to_json_line(p);
      routed += "\n";
    }
    write_text(dir / "cascade_predictions.jsonl", routed);
  }

  std::string summary;
  summary += "key,value\n";
  summary += "experiment," + csv_quote(cfg.name) + "\n";
  summary += "records," + std::to_string(corpus.size()) + "\n";
  summary += "train," + std::to_string(split.train.size()) + "\n";
  summary += "validation," + std::to_string(split.validation.size()) + "\n";
  summary += "test," + std::to_string(split.test.size()) + "\n";
  summary += "selected_epoch," + std::to_string(model.selected_epoch) + "\n";
  summary += "micro_f1," + fmt(result.test_report.micro_avg.f1) + "\n";
  summary += "macro_f1," + fmt(result.test_report.macro_avg.f1) + "\n";
  summary += "weighted_f1," + fmt(result.test_report.weighted_avg.f1) + "\n";
  for (const char* name : {"experiment.json", "split.json", "test_metrics.json"}) {
    summary += std::string(name) + "_fnv64," + hex64(fnv1a64(read_text(dir / name))) + "\n";
  }
  write_text(dir / "summary.csv", summary);

  write_text(dir / "status.json", json{{"status", "complete"}}.dump(2) + "\n");
  return result;
}

CrossvalSummary run_crossval(const Corpus& corpus, const FoldPlan& plan, const ModelConfig& mcfg,
                             const TrainConfig& tcfg) {
  validate_model_config(mcfg);
  auto annotator = std::make_shared<StubAnnotator>();
  std::shared_ptr<SentenceEmbedder> embedder =
      make_embedder(mcfg.features.embedder_id, mcfg.features.cui_dim);
  auto index = corpus.id_index();
  Task task = mcfg.variant;
  FoldRunner runner = [&](int repeat, int fold) -> MetricsReport {
    const auto& folds = plan.held_out[static_cast<std::size_t>(repeat)];
    int val_fold = (fold + 1) % plan.k;
    SplitSpec cv;
    cv.seed = plan.seed;
    for (int i = 0; i < plan.k; ++i) {
      if (i == fold) continue;
      auto& target = (i == val_fold) ? cv.validation : cv.train;
      const auto& ids = folds[static_cast<std::size_t>(i)];
      target.insert(target.end(), ids.begin(), ids.end());
    }
    cv.test = folds[static_cast<std::size_t>(fold)];
    TrainedModel fold_model = train(corpus, cv, mcfg, tcfg, *annotator, *embedder);
    Predictor fold_predictor(std::move(fold_model), annotator, embedder);
    std::vector<LabelSet> fg = gold_for_ids(corpus, index, cv.test);
    std::vector<LabelSet> fp = predict_ids(fold_predictor, corpus, index, cv.test);
    if (task == Task::binary) {
      for (auto& g : fg) g = g.any() ? binary_positive_set() : LabelSet{};
    }
    return score(fg, fp, task);
  };
  return crossval(runner, plan);
}

AblationResult run_ablation(const ExperimentConfig& cfg,
                            const std::vector<std::string>& feature_sets) {
  if (cfg.corpora.empty()) throw ValidationError("ablation needs at least one corpus");
  if (cfg.output_dir.empty()) throw ValidationError("ablation needs an output directory");
  if (feature_sets.empty()) throw ValidationError("ablation needs at least one feature set");

  fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  {
    json obj;
    obj["experiment"] = json::parse(experiment_config_to_json(cfg));
    obj["feature_sets"] = feature_sets;
    write_text(dir / "ablation.json", obj.dump(2) + "\n");
  }

  Corpus corpus = load_inputs(cfg.corpora);
  SplitSpec split = stratified_split(corpus, cfg.fractions, cfg.split_seed);
  save_split(split, dir / "split.json");

  auto annotator = std::make_shared<StubAnnotator>();
  std::shared_ptr<SentenceEmbedder> embedder =
      make_embedder(cfg.model.features.embedder_id, cfg.model.features.cui_dim);
  auto index = corpus.id_index();
  Task task = cfg.model.variant;

  AblationResult result;
  result.dir = dir;
  for (const auto& set_name : feature_sets) {
    AblationCell cell;
    cell.feature_set = set_name;
    try {
      ModelConfig mcfg = cfg.model;
      mcfg.features.enabled = parse_feature_set(set_name);
      TrainedModel m = train(corpus, split, mcfg, cfg.training, *annotator, *embedder);
      cell.curve = m.curve;
      cell.selected_epoch = m.selected_epoch;
      Predictor predictor(std::move(m), annotator, embedder);
      std::vector<LabelSet> gold = gold_for_ids(corpus, index, split.test);
      std::vector<LabelSet> pred = predict_ids(predictor, corpus, index, split.test);
      if (task == Task::binary) {
        for (auto& g : gold) g = g.any() ? binary_positive_set() : LabelSet{};
      }
      cell.test_macro_f1 = score(gold, pred, task).macro_avg.f1;
    } catch (const std::exception& e) {
      // record the failure and keep sweeping the remaining sets
      cell.error = e.what();
      cell.curve.clear();
      cell.selected_epoch = 0;
      cell.test_macro_f1 = 0.0;
    }
    result.cells.push_back(std::move(cell));
  }

  std::string long_csv = "feature_set,epoch,val_macro_f1\n";
  for (const auto& cell : result.cells) {
    if (!cell.error.empty()) continue;
    for (const auto& e : cell.curve) {
      long_csv += csv_quote(cell.feature_set) + "," + std::to_string(e.epoch) + "," +
                  fmt(e.val_macro_f1) + "\n";
    }
  }
  write_text(dir / "ablation.csv", long_csv);

  std::string test_csv = "feature_set,selected_epoch,test_macro_f1,error\n";
  for (const auto& cell : result.cells) {
    if (cell.error.empty()) {
      test_csv += csv_quote(cell.feature_set) + "," + std::to_string(cell.selected_epoch) + "," +
                  fmt(cell.test_macro_f1) + ",\n";
    } else {
      test_csv += csv_quote(cell.feature_set) + ",,," + csv_quote(cell.error) + "\n";
    }
  }
  write_text(dir / "ablation_test.csv", test_csv);

  std::vector<SvgSeries> series;
  for (const auto& cell : result.cells) {
    if (!cell.error.empty()) continue;
    SvgSeries s;
    s.label = cell.feature_set;
    for (const auto& e : cell.curve) {
      s.points.emplace_back(static_cast<double>(e.epoch), e.val_macro_f1);
    }
    s.marker = std::make_pair(static_cast<double>(cell.selected_epoch), cell.test_macro_f1);
    series.push_back(std::move(s));
  }
  write_text(dir / "ablation.svg",
             render_line_chart_svg(cfg.name + " feature ablation", "epoch", "val macro F1",
                                   series));
  return result;
}

}  // namespace sdoh
