// sdoh: command line front end for the classification toolkit.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdoh/bench.hpp"
#include "sdoh/dataset.hpp"
#include "sdoh/errors.hpp"
#include "sdoh/experiment.hpp"
#include "sdoh/features.hpp"
#include "sdoh/llm.hpp"
#include "sdoh/metrics.hpp"
#include "sdoh/model.hpp"
#include "sdoh/stratify.hpp"
#include "sdoh/twostep.hpp"
#include "sdoh/util.hpp"

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sdoh::Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw sdoh::Error("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw sdoh::Error("write failed: " + path.string());
}

void emit(const std::optional<std::string>& out_path, const std::string& text) {
  if (out_path) {
    write_text(*out_path, text);
  } else {
    std::cout << text;
  }
}

// "path" or "path:base" or "path:synthetic"
sdoh::CorpusInput parse_input_spec(const std::string& spec) {
  sdoh::CorpusInput in;
  auto pos = spec.rfind(':');
  if (pos != std::string::npos) {
    std::string suffix = spec.substr(pos + 1);
    if (suffix == "base" || suffix == "synthetic") {
      in.path = spec.substr(0, pos);
      in.source = sdoh::source_from_string(suffix);
      return in;
    }
  }
  in.path = spec;
  return in;
}

std::vector<sdoh::CorpusInput> parse_inputs(const std::vector<std::string>& specs) {
  std::vector<sdoh::CorpusInput> inputs;
  inputs.reserve(specs.size());
  for (const auto& s : specs) inputs.push_back(parse_input_spec(s));
  return inputs;
}

sdoh::Corpus load_inputs(const std::vector<std::string>& specs) {
  auto inputs = parse_inputs(specs);
  sdoh::Corpus merged = sdoh::load_corpus(inputs[0].path, inputs[0].source);
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    merged = sdoh::merge_corpora(merged, sdoh::load_corpus(inputs[i].path, inputs[i].source));
  }
  return merged;
}

std::shared_ptr<sdoh::Annotator> make_annotator(const std::optional<std::string>& sidecar,
                                                bool sidecar_optional) {
  if (sidecar) return std::make_shared<sdoh::SidecarAnnotator>(*sidecar, sidecar_optional);
  return std::make_shared<sdoh::StubAnnotator>();
}

struct LoadedPredictor {
  std::shared_ptr<sdoh::Predictor> predictor;
};

LoadedPredictor load_predictor(const std::string& dir, const std::optional<std::string>& sidecar,
                               bool sidecar_optional) {
  sdoh::TrainedModel m = sdoh::import_model(dir);
  auto annotator = make_annotator(sidecar, sidecar_optional);
  std::shared_ptr<sdoh::SentenceEmbedder> embedder =
      sdoh::make_embedder(m.config.features.embedder_id, m.config.features.cui_dim);
  return {std::make_shared<sdoh::Predictor>(std::move(m), annotator, embedder)};
}

std::string stats_table(const sdoh::CorpusStats& st) {
  std::ostringstream out;
  auto row = [&](const std::string& key, long value) {
    out << std::left << std::setw(30) << key << std::right << std::setw(8) << value << "\n";
  };
  row("records", st.total);
  row("  base", st.source_counts[0]);
  row("  synthetic", st.source_counts[1]);
  row("with labels", st.with_labels);
  row("no label", st.empty_gold);
  row("cross-source duplicate texts", st.cross_source_duplicate_texts);
  out << "\n"
      << std::left << std::setw(16) << "label" << std::right << std::setw(7) << "total"
      << std::setw(7) << "base" << std::setw(11) << "synthetic" << "\n";
  for (int i = 0; i < sdoh::kNumLabels; ++i) {
    auto idx = static_cast<std::size_t>(i);
    out << std::left << std::setw(16) << sdoh::to_string(sdoh::kAllLabels[idx]) << std::right
        << std::setw(7) << st.label_counts[idx] << std::setw(7) << st.label_counts_by_source[0][idx]
        << std::setw(11) << st.label_counts_by_source[1][idx] << "\n";
  }
  return out.str();
}

std::string stats_csv(const sdoh::CorpusStats& st) {
  std::ostringstream out;
  out << "key,value\n";
  out << "records," << st.total << "\n";
  out << "base," << st.source_counts[0] << "\n";
  out << "synthetic," << st.source_counts[1] << "\n";
  out << "with_labels," << st.with_labels << "\n";
  out << "empty_gold," << st.empty_gold << "\n";
  out << "cross_source_duplicate_texts," << st.cross_source_duplicate_texts << "\n";
  for (int i = 0; i < sdoh::kNumLabels; ++i) {
    auto idx = static_cast<std::size_t>(i);
    const std::string& name = sdoh::to_string(sdoh::kAllLabels[idx]);
    out << "label_" << name << "," << st.label_counts[idx] << "\n";
    out << "label_" << name << "_base," << st.label_counts_by_source[0][idx] << "\n";
    out << "label_" << name << "_synthetic," << st.label_counts_by_source[1][idx] << "\n";
  }
  return out.str();
}

// Prediction lines carry "predicted" (label array), "labels" (same), or
// "predicted_positive" (bool). Order in the file is preserved.
struct PredictionFile {
  std::vector<std::string> ids;
  std::unordered_map<std::string, sdoh::LabelSet> by_id;
};

PredictionFile load_prediction_file(const fs::path& path) {
  PredictionFile out;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sdoh::Error("cannot open " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (sdoh::trim(line).empty()) continue;
    std::string where = path.string() + ":" + std::to_string(lineno);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw sdoh::ParseError(where + ": " + e.what());
    }
    if (!obj.contains("id") || !obj["id"].is_string()) {
      throw sdoh::ParseError(where + ": missing string 'id'");
    }
    std::string id = obj["id"].get<std::string>();
    sdoh::LabelSet labels;
    const char* key = obj.contains("predicted") ? "predicted"
                      : obj.contains("labels")  ? "labels"
                                                : nullptr;
    if (key != nullptr) {
      if (!obj[key].is_array()) throw sdoh::ParseError(where + ": '" + key + "' must be an array");
      for (const auto& item : obj[key]) {
        if (!item.is_string()) throw sdoh::ParseError(where + ": labels must be strings");
        auto label = sdoh::label_from_string(item.get<std::string>());
        if (!label) {
          throw sdoh::ParseError(where + ": unknown label '" + item.get<std::string>() + "'");
        }
        labels.insert(*label);
      }
    } else if (obj.contains("predicted_positive")) {
      if (!obj["predicted_positive"].is_boolean()) {
        throw sdoh::ParseError(where + ": 'predicted_positive' must be a boolean");
      }
      if (obj["predicted_positive"].get<bool>()) labels.insert(sdoh::kAllLabels[0]);
    } else {
      throw sdoh::ParseError(where + ": need 'predicted', 'labels' or 'predicted_positive'");
    }
    if (!out.by_id.emplace(id, labels).second) {
      throw sdoh::ValidationError(where + ": duplicate prediction for id '" + id + "'");
    }
    out.ids.push_back(std::move(id));
  }
  return out;
}

std::string format_report(const sdoh::MetricsReport& report, const std::string& format) {
  if (format == "json") return sdoh::report_to_json(report);
  if (format == "csv") return sdoh::report_to_csv(report);
  if (format == "table") return sdoh::report_to_table(report);
  throw sdoh::ValidationError("unknown format: " + format);
}

struct BenchSetup {
  std::string id;
  sdoh::BenchClassifier fn;
};

// sleep:<ms> | model:<dir> | cascade:<gate dir>,<backend dir> | llm[:<endpoint>]
BenchSetup make_bench_classifier(const std::string& spec, const std::optional<std::string>& sidecar,
                                 bool sidecar_optional) {
  if (spec.rfind("sleep:", 0) == 0) {
    double ms = std::stod(spec.substr(6));
    if (ms < 0) throw sdoh::ValidationError("sleep classifier needs a non-negative delay");
    return {spec, [ms](const sdoh::BenchSentence&) {
              std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
            }};
  }
  if (spec.rfind("model:", 0) == 0) {
    auto loaded = load_predictor(spec.substr(6), sidecar, sidecar_optional);
    auto predictor = loaded.predictor;
    bool binary = predictor->model().config.variant == sdoh::Task::binary;
    return {spec, [predictor, binary](const sdoh::BenchSentence& s) {
              if (binary) {
                (void)predictor->classify_binary(s.id, s.text);
              } else {
                (void)predictor->classify(s.id, s.text);
              }
            }};
  }
  if (spec.rfind("cascade:", 0) == 0) {
    std::string rest = spec.substr(8);
    auto comma = rest.find(',');
    if (comma == std::string::npos) {
      throw sdoh::ValidationError("cascade classifier spec is cascade:<gate dir>,<backend dir>");
    }
    auto gate = load_predictor(rest.substr(0, comma), sidecar, sidecar_optional).predictor;
    auto backend_predictor = load_predictor(rest.substr(comma + 1), sidecar, sidecar_optional).predictor;
    auto backend = std::make_shared<sdoh::TraditionalBackend>(backend_predictor);
    auto cascade = std::make_shared<sdoh::CascadeClassifier>(gate, backend);
    return {spec,
            [cascade](const sdoh::BenchSentence& s) { (void)cascade->route(s.id, s.text); }};
  }
  if (spec == "llm" || spec.rfind("llm:", 0) == 0) {
    std::string endpoint = spec == "llm" ? "" : spec.substr(4);
    auto client = std::make_shared<sdoh::HttpGenerationClient>(endpoint);
    auto classifier = std::make_shared<sdoh::LlmClassifier>(
        client, sdoh::builtin_template(sdoh::PromptKind::few_shot));
    return {spec, [classifier](const sdoh::BenchSentence& s) { (void)classifier->classify(s.text); }};
  }
  throw sdoh::ValidationError("unknown classifier spec: " + spec +
                              " (expected sleep:<ms>, model:<dir>, cascade:<gate>,<backend>, "
                              "or llm[:<endpoint>])");
}

std::vector<sdoh::BenchSentence> to_bench_sentences(const sdoh::Corpus& corpus) {
  std::vector<sdoh::BenchSentence> out;
  out.reserve(corpus.size());
  for (const auto& rec : corpus.records) out.push_back({rec.id, rec.text});
  return out;
}

std::vector<sdoh::GatePrediction> load_gate_predictions(const fs::path& path) {
  std::vector<sdoh::GatePrediction> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sdoh::Error("cannot open " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (sdoh::trim(line).empty()) continue;
    std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      json obj = json::parse(line);
      sdoh::GatePrediction p;
      p.id = obj.at("id").get<std::string>();
      p.positive = obj.at("positive").get<bool>();
      p.seconds = obj.value("seconds", 0.0);
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw sdoh::ParseError(where + ": " + e.what());
    }
  }
  return out;
}

std::vector<sdoh::BackendPrediction> load_backend_predictions(const fs::path& path) {
  std::vector<sdoh::BackendPrediction> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sdoh::Error("cannot open " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (sdoh::trim(line).empty()) continue;
    std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      json obj = json::parse(line);
      sdoh::BackendPrediction p;
      p.id = obj.at("id").get<std::string>();
      for (const auto& item : obj.at("labels")) {
        auto label = sdoh::label_from_string(item.get<std::string>());
        if (!label) {
          throw sdoh::ParseError(where + ": unknown label '" + item.get<std::string>() + "'");
        }
        p.labels.insert(*label);
      }
      p.seconds = obj.value("seconds", 0.0);
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw sdoh::ParseError(where + ": " + e.what());
    }
  }
  return out;
}

std::string cascade_latency_json(const sdoh::CascadeLatencySummary& lat) {
  json obj;
  obj["n_sentences"] = lat.n_sentences;
  obj["n_backend_calls"] = lat.n_backend_calls;
  obj["gate_mean_seconds"] = lat.gate_mean_seconds;
  obj["multilabel_mean_seconds"] = lat.multilabel_mean_seconds;
  obj["total_seconds"] = lat.total_seconds;
  obj["sentences_per_second"] = lat.sentences_per_second;
  return obj.dump(2) + "\n";
}

void write_cascade_outputs(const fs::path& dir, const sdoh::CascadeEvaluation& eval) {
  fs::create_directories(dir);
  write_text(dir / "cascade_metrics.json", sdoh::report_to_json(eval.report));
  write_text(dir / "cascade_latency.json", cascade_latency_json(eval.latency));
  std::string lines;
  for (const auto& p : eval.predictions) {
    lines += sdoh::routed_to_json_line(p);
    lines += "\n";
  }
  write_text(dir / "cascade_predictions.jsonl", lines);
}

struct TrainArgs {
  std::vector<std::string> inputs;
  std::string split_path;
  std::optional<std::string> model_config_path;
  std::optional<std::string> feature_set;
  std::string variant = "multilabel";
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<int> batch_size;
  std::optional<std::string> optimizer;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::string> sidecar;
  bool sidecar_optional = false;
  bool tune = false;
  std::string out_dir;
};

void add_train_model_options(CLI::App* cmd, TrainArgs& args) {
  cmd->add_option("--model-config", args.model_config_path, "model config JSON file");
  cmd->add_option("--features", args.feature_set,
                  "feature groups: all, none, or comma-separated subset");
  cmd->add_option("--variant", args.variant, "multilabel or binary")
      ->check(CLI::IsMember({"multilabel", "binary"}))
      ->capture_default_str();
  cmd->add_option("--epochs", args.epochs, "training epochs (default 40)");
  cmd->add_option("--learning-rate", args.learning_rate,
                  "step size (default 1e-5 multilabel, 6.5e-6 binary)");
  cmd->add_option("--batch-size", args.batch_size, "mini-batch size (default 16)");
  cmd->add_option("--optimizer", args.optimizer, "adam or sgd (default adam)");
  cmd->add_option("--train-seed", args.train_seed, "training RNG seed (default 7)");
  cmd->add_option("--annotations", args.sidecar, "annotation sidecar JSONL");
  cmd->add_flag("--annotations-optional", args.sidecar_optional,
                "tolerate records missing from the sidecar");
}

sdoh::ModelConfig resolve_model_config(const TrainArgs& args) {
  sdoh::ModelConfig mcfg;
  if (args.model_config_path) {
    mcfg = sdoh::model_config_from_json(read_text(*args.model_config_path));
  }
  mcfg.variant = sdoh::task_from_string(args.variant);
  if (args.feature_set) mcfg.features.enabled = sdoh::parse_feature_set(*args.feature_set);
  if (mcfg.variant == sdoh::Task::binary &&
      mcfg.thresholds.size() == static_cast<std::size_t>(sdoh::kNumLabels)) {
    mcfg.thresholds.clear();
  }
  return mcfg;
}

sdoh::TrainConfig resolve_train_config(const TrainArgs& args, sdoh::Task variant) {
  sdoh::TrainConfig tcfg = sdoh::default_train_config(variant);
  if (args.epochs) tcfg.epochs = *args.epochs;
  if (args.learning_rate) tcfg.learning_rate = *args.learning_rate;
  if (args.batch_size) tcfg.batch_size = *args.batch_size;
  if (args.optimizer) tcfg.optimizer = *args.optimizer;
  if (args.train_seed) tcfg.seed = *args.train_seed;
  return tcfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sentence-level SDoH classification toolkit"};
  app.require_subcommand(1);

  // ingest
  struct {
    std::vector<std::string> inputs;
    std::string out;
  } ingest_args;
  auto* ingest = app.add_subcommand("ingest", "load, validate and merge corpora into one JSONL");
  ingest->add_option("--input", ingest_args.inputs, "corpus JSONL, path[:base|synthetic]")
      ->required();
  ingest->add_option("--out", ingest_args.out, "normalized corpus JSONL")->required();
  ingest->callback([&] {
    sdoh::Corpus corpus = load_inputs(ingest_args.inputs);
    sdoh::save_corpus(corpus, ingest_args.out);
    std::cout << "wrote " << corpus.size() << " records to " << ingest_args.out << "\n";
  });

  // stats
  struct {
    std::vector<std::string> inputs;
    std::string format = "table";
    std::optional<std::string> out;
  } stats_args;
  auto* stats = app.add_subcommand("stats", "label and source distribution of a corpus");
  stats->add_option("--input", stats_args.inputs, "corpus JSONL, path[:base|synthetic]")
      ->required();
  stats->add_option("--format", stats_args.format, "table, csv or json")
      ->check(CLI::IsMember({"table", "csv", "json"}))
      ->capture_default_str();
  stats->add_option("--out", stats_args.out, "write to file instead of stdout");
  stats->callback([&] {
    sdoh::CorpusStats st = sdoh::corpus_stats(load_inputs(stats_args.inputs));
    std::string text = stats_args.format == "json"  ? sdoh::stats_to_json(st)
                       : stats_args.format == "csv" ? stats_csv(st)
                                                    : stats_table(st);
    emit(stats_args.out, text);
  });

  // split
  struct {
    std::vector<std::string> inputs;
    std::uint64_t seed = 13;
    std::vector<double> fractions;
    std::string out;
  } split_args;
  auto* split_cmd = app.add_subcommand("split", "stratified train/validation/test split");
  split_cmd->add_option("--input", split_args.inputs, "corpus JSONL, path[:base|synthetic]")
      ->required();
  split_cmd->add_option("--seed", split_args.seed, "split seed")->capture_default_str();
  split_cmd->add_option("--fractions", split_args.fractions,
                        "train validation test fractions (default 0.6 0.2 0.2)")
      ->expected(3);
  split_cmd->add_option("--out", split_args.out, "split manifest JSON")->required();
  split_cmd->callback([&] {
    sdoh::Corpus corpus = load_inputs(split_args.inputs);
    std::array<double, 3> fr{0.6, 0.2, 0.2};
    if (!split_args.fractions.empty()) {
      fr = {split_args.fractions[0], split_args.fractions[1], split_args.fractions[2]};
    }
    sdoh::SplitSpec split = sdoh::stratified_split(corpus, fr, split_args.seed);
    sdoh::save_split(split, split_args.out);
    std::cout << "train " << split.train.size() << ", validation " << split.validation.size()
              << ", test " << split.test.size() << " -> " << split_args.out << "\n";
  });

  // foldplan
  struct {
    std::vector<std::string> inputs;
    int k = 10;
    int repeats = 5;
    std::uint64_t seed = 29;
    std::string out;
  } foldplan_args;
  auto* foldplan_cmd = app.add_subcommand("foldplan", "repeated stratified k-fold plan");
  foldplan_cmd->add_option("--input", foldplan_args.inputs, "corpus JSONL, path[:base|synthetic]")
      ->required();
  foldplan_cmd->add_option("--k", foldplan_args.k, "folds per repeat")->capture_default_str();
  foldplan_cmd->add_option("--repeats", foldplan_args.repeats, "independent repeats")
      ->capture_default_str();
  foldplan_cmd->add_option("--seed", foldplan_args.seed, "plan seed")->capture_default_str();
  foldplan_cmd->add_option("--out", foldplan_args.out, "fold plan JSON")->required();
  foldplan_cmd->callback([&] {
    sdoh::Corpus corpus = load_inputs(foldplan_args.inputs);
    sdoh::FoldPlan plan =
        sdoh::make_fold_plan(corpus, foldplan_args.k, foldplan_args.repeats, foldplan_args.seed);
    sdoh::save_foldplan(plan, foldplan_args.out);
    std::cout << plan.repeats << " repeats x " << plan.k << " folds -> " << foldplan_args.out
              << "\n";
  });

  // train
  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a CNN classifier and export the bundle");
  train_cmd->add_option("--input", train_args.inputs, "corpus JSONL, path[:base|synthetic]")
      ->required();
  train_cmd->add_option("--split", train_args.split_path, "split manifest JSON")->required();
  add_train_model_options(train_cmd, train_args);
  train_cmd->add_flag("--tune-thresholds", train_args.tune,
                      "sweep decision thresholds on the validation split after training");
  train_cmd->add_option("--out", train_args.out_dir, "model bundle directory")->required();
  train_cmd->callback([&] {
    sdoh::Corpus corpus = load_inputs(train_args.inputs);
    sdoh::SplitSpec split = sdoh::load_split(train_args.split_path);
    sdoh::ModelConfig mcfg = resolve_model_config(train_args);
    sdoh::TrainConfig tcfg = resolve_train_config(train_args, mcfg.variant);
    auto annotator = make_annotator(train_args.sidecar, train_args.sidecar_optional);
    std::shared_ptr<sdoh::SentenceEmbedder> embedder =
        sdoh::make_embedder(mcfg.features.embedder_id, mcfg.features.cui_dim);
    sdoh::TrainedModel model = sdoh::train(corpus, split, mcfg, tcfg, *annotator, *embedder);
    if (train_args.tune) {
      model.config.thresholds =
          sdoh::tune_thresholds(model, corpus, split, *annotator, *embedder);
    }
    sdoh::export_model(model, train_args.out_dir);
    const auto& best = model.curve[static_cast<std::size_t>(model.selected_epoch - 1)];
    std::cout << "selected epoch " << model.selected_epoch << " (val loss " << best.val_loss
              << ", val macro F1 " << best.val_macro_f1 << ") -> " << train_args.out_dir << "\n";
  });

  // predict
  struct {
    std::string model_dir;
    std::vector<std::string> inputs;
    std::optional<std::string> sidecar;
    bool sidecar_optional = false;
    std::optional<std::string> out;
  } predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "classify sentences with a model bundle");
  predict_cmd->add_option("--model", predict_args.model_dir, "model bundle directory")->required();
  predict_cmd->add_option("--input", predict_args.inputs, "corpus JSONL, path[:base|synthetic]")
      ->required();
  predict_cmd->add_option("--annotations", predict_args.sidecar, "annotation sidecar JSONL");
  predict_cmd->add_flag("--annotations-optional", predict_args.sidecar_optional,
                        "tolerate records missing from the sidecar");
  predict_cmd->add_option("--out", predict_args.out, "predictions JSONL (default stdout)");
  predict_cmd->callback([&] {
    sdoh::Corpus corpus = load_inputs(predict_args.inputs);
    auto loaded =
        load_predictor(predict_args.model_dir, predict_args.sidecar, predict_args.sidecar_optional);
    bool binary = loaded.predictor->model().config.variant == sdoh::Task::binary;
    std::string lines;
    for (const auto& rec : corpus.records) {
      json obj;
      obj["id"] = rec.id;
      if (binary) {
        obj["predicted_positive"] = loaded.predictor->classify_binary(rec.id, rec.text);
      } else {
        obj["predicted"] = loaded.predictor->classify(rec.id, rec.text).names();
      }
      lines += obj.dump();
      lines += "\n";
    }
    emit(predict_args.out, lines);
  });

  // eval
  struct {
    std::string gold_path;
    std::string pred_path;
    std::string task = "multilabel";
    std::string format = "table";
    std::optional<std::string> out;
  } eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "score predictions against gold labels");
  eval_cmd->add_option("--gold", eval_args.gold_path, "gold corpus JSONL")->required();
  eval_cmd->add_option("--pred", eval_args.pred_path, "predictions JSONL")->required();
  eval_cmd->add_option("--task", eval_args.task, "multilabel or binary")
      ->check(CLI::IsMember({"multilabel", "binary"}))
      ->capture_default_str();
  eval_cmd->add_option("--format", eval_args.format, "json, csv or table")
      ->check(CLI::IsMember({"json", "csv", "table"}))
      ->capture_default_str();
  eval_cmd->add_option("--out", eval_args.out, "write to file instead of stdout");
  eval_cmd->callback([&] {
    sdoh::Corpus gold_corpus = sdoh::load_corpus(eval_args.gold_path);
    PredictionFile preds = load_prediction_file(eval_args.pred_path);
    std::vector<sdoh::LabelSet> gold;
    std::vector<sdoh::LabelSet> pred;
    gold.reserve(gold_corpus.size());
    pred.reserve(gold_corpus.size());
    for (const auto& rec : gold_corpus.records) {
      auto it = preds.by_id.find(rec.id);
      if (it == preds.by_id.end()) {
        throw sdoh::ValidationError("no prediction for id '" + rec.id + "'");
      }
      gold.push_back(rec.gold);
      pred.push_back(it->second);
    }
    if (preds.by_id.size() != gold_corpus.size()) {
      throw sdoh::ValidationError("prediction file has rows for ids outside the gold corpus");
    }
    sdoh::MetricsReport report =
        sdoh::score(gold, pred, sdoh::task_from_string(eval_args.task));
    emit(eval_args.out, format_report(report, eval_args.format));
  });

  // predict-cascade
  struct {
    std::vector<std::string> inputs;
    std::optional<std::string> split_path;
    std::optional<std::string> gate_dir;
    std::optional<std::string> backend_spec;
    std::string fallback = "error";
    std::optional<std::string> fallback_model;
    std::optional<std::string> gate_pred;
    std::optional<std::string> backend_pred;
    std::string backend_kind = "traditional_multilabel";
    std::optional<std::string> sidecar;
    bool sidecar_optional = false;
    std::string out_dir;
  } cascade_args;
  auto* cascade_cmd = app.add_subcommand(
      "predict-cascade", "binary gate + multilabel backend, live or joined from prediction files");
  cascade_cmd->add_option("--input", cascade_args.inputs, "corpus JSONL, path[:base|synthetic]")
      ->required();
  cascade_cmd->add_option("--split", cascade_args.split_path,
                          "split manifest; only its test ids are routed (default: all records)");
  cascade_cmd->add_option("--gate", cascade_args.gate_dir, "binary gate model bundle (live mode)");
  cascade_cmd->add_option("--backend", cascade_args.backend_spec,
                          "traditional:<model dir> or llm[:<endpoint>] (live mode)");
  cascade_cmd->add_option("--fallback", cascade_args.fallback,
                          "backend failure policy: error, empty_labels or traditional_fallback")
      ->check(CLI::IsMember({"error", "empty_labels", "traditional_fallback"}))
      ->capture_default_str();
  cascade_cmd->add_option("--fallback-model", cascade_args.fallback_model,
                          "model bundle used under traditional_fallback");
  cascade_cmd->add_option("--gate-pred", cascade_args.gate_pred,
                          "gate predictions JSONL {id, positive, seconds} (joined mode)");
  cascade_cmd->add_option("--backend-pred", cascade_args.backend_pred,
                          "backend predictions JSONL {id, labels, seconds} (joined mode)");
  cascade_cmd->add_option("--backend-kind", cascade_args.backend_kind,
                          "backend label for joined mode")
      ->check(CLI::IsMember({"traditional_multilabel", "llm"}))
      ->capture_default_str();
  cascade_cmd->add_option("--annotations", cascade_args.sidecar, "annotation sidecar JSONL");
  cascade_cmd->add_flag("--annotations-optional", cascade_args.sidecar_optional,
                        "tolerate records missing from the sidecar");
  cascade_cmd->add_option("--out", cascade_args.out_dir, "output directory")->required();
  cascade_cmd->callback([&] {
    sdoh::Corpus corpus = load_inputs(cascade_args.inputs);
    bool joined = cascade_args.gate_pred.has_value() || cascade_args.backend_pred.has_value();
    bool live = cascade_args.gate_dir.has_value() || cascade_args.backend_spec.has_value();
    if (joined == live) {
      throw sdoh::ValidationError(
          "pick one mode: --gate/--backend (live) or --gate-pred/--backend-pred (joined)");
    }
    sdoh::CascadeEvaluation eval;
    if (live) {
      if (!cascade_args.gate_dir || !cascade_args.backend_spec) {
        throw sdoh::ValidationError("live mode needs both --gate and --backend");
      }
      auto gate =
          load_predictor(*cascade_args.gate_dir, cascade_args.sidecar, cascade_args.sidecar_optional)
              .predictor;
      std::shared_ptr<sdoh::MultilabelBackend> backend;
      const std::string& spec = *cascade_args.backend_spec;
      if (spec.rfind("traditional:", 0) == 0) {
        backend = std::make_shared<sdoh::TraditionalBackend>(
            load_predictor(spec.substr(12), cascade_args.sidecar, cascade_args.sidecar_optional)
                .predictor);
      } else if (spec == "llm" || spec.rfind("llm:", 0) == 0) {
        std::string endpoint = spec == "llm" ? "" : spec.substr(4);
        auto client = std::make_shared<sdoh::HttpGenerationClient>(endpoint);
        backend = std::make_shared<sdoh::LlmBackend>(std::make_shared<sdoh::LlmClassifier>(
            client, sdoh::builtin_template(sdoh::PromptKind::few_shot)));
      } else {
        throw sdoh::ValidationError("unknown backend spec: " + spec);
      }
      sdoh::CascadeOptions opts;
      opts.fallback = sdoh::fallback_policy_from_string(cascade_args.fallback);
      std::shared_ptr<sdoh::MultilabelBackend> fallback;
      if (cascade_args.fallback_model) {
        fallback = std::make_shared<sdoh::TraditionalBackend>(
            load_predictor(*cascade_args.fallback_model, cascade_args.sidecar,
                           cascade_args.sidecar_optional)
                .predictor);
      }
      sdoh::CascadeClassifier cascade(gate, backend, opts, fallback);
      sdoh::SplitSpec split;
      if (cascade_args.split_path) {
        split = sdoh::load_split(*cascade_args.split_path);
      } else {
        for (const auto& rec : corpus.records) split.test.push_back(rec.id);
      }
      eval = sdoh::evaluate_cascade(cascade, corpus, split);
    } else {
      if (!cascade_args.gate_pred || !cascade_args.backend_pred) {
        throw sdoh::ValidationError("joined mode needs both --gate-pred and --backend-pred");
      }
      auto routed = sdoh::join_predictions(
          load_gate_predictions(*cascade_args.gate_pred),
          load_backend_predictions(*cascade_args.backend_pred),
          sdoh::backend_kind_from_string(cascade_args.backend_kind));
      eval = sdoh::evaluate_routed(corpus, std::move(routed));
    }
    write_cascade_outputs(cascade_args.out_dir, eval);
    std::cout << eval.latency.n_sentences << " sentences, " << eval.latency.n_backend_calls
              << " backend calls, macro F1 " << eval.report.macro_avg.f1 << " -> "
              << cascade_args.out_dir << "\n";
  });

  // crossval
  TrainArgs crossval_train_args;
  struct {
    std::optional<std::string> foldplan_path;
    int k = 10;
    int repeats = 5;
    std::uint64_t seed = 29;
    std::string out;
  } crossval_args;
  auto* crossval_cmd =
      app.add_subcommand("crossval", "repeated k-fold cross-validation of the CNN classifier");
  crossval_cmd
      ->add_option("--input", crossval_train_args.inputs, "corpus JSONL, path[:base|synthetic]")
      ->required();
  crossval_cmd->add_option("--foldplan", crossval_args.foldplan_path,
                           "existing fold plan JSON (otherwise built from --k/--repeats/--seed)");
  crossval_cmd->add_option("--k", crossval_args.k, "folds per repeat")->capture_default_str();
  crossval_cmd->add_option("--repeats", crossval_args.repeats, "independent repeats")
      ->capture_default_str();
  crossval_cmd->add_option("--seed", crossval_args.seed, "plan seed")->capture_default_str();
  add_train_model_options(crossval_cmd, crossval_train_args);
  crossval_cmd->add_option("--out", crossval_args.out, "cross-validation summary JSON")
      ->required();
  crossval_cmd->callback([&] {
    sdoh::Corpus corpus = load_inputs(crossval_train_args.inputs);
    sdoh::FoldPlan plan;
    if (crossval_args.foldplan_path) {
      plan = sdoh::load_foldplan(*crossval_args.foldplan_path);
    } else {
      plan = sdoh::make_fold_plan(corpus, crossval_args.k, crossval_args.repeats,
                                  crossval_args.seed);
    }
    sdoh::ModelConfig mcfg = resolve_model_config(crossval_train_args);
    sdoh::TrainConfig tcfg = resolve_train_config(crossval_train_args, mcfg.variant);
    sdoh::CrossvalSummary summary = sdoh::run_crossval(corpus, plan, mcfg, tcfg);
    write_text(crossval_args.out, sdoh::crossval_to_json(summary));
    std::cout << summary.reports.size() << " evaluations, macro F1 " << summary.macro.f1.mean
              << " +/- " << summary.macro.f1.stddev << " -> " << crossval_args.out << "\n";
  });

  // bench
  struct {
    std::string classifier;
    std::vector<std::string> inputs;
    int warmup = 3;
    int repeats = 5;
    std::optional<std::string> sidecar;
    bool sidecar_optional = false;
    std::string out;
  } bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "sentences/second for a classifier");
  bench_cmd
      ->add_option("--classifier", bench_args.classifier,
                   "sleep:<ms>, model:<dir>, cascade:<gate dir>,<backend dir> or llm[:<endpoint>]")
      ->required();
  bench_cmd->add_option("--input", bench_args.inputs, "sentences JSONL, path[:base|synthetic]")
      ->required();
  bench_cmd->add_option("--warmup", bench_args.warmup, "unmeasured passes")->capture_default_str();
  bench_cmd->add_option("--repeats", bench_args.repeats, "measured passes")->capture_default_str();
  bench_cmd->add_option("--annotations", bench_args.sidecar, "annotation sidecar JSONL");
  bench_cmd->add_flag("--annotations-optional", bench_args.sidecar_optional,
                      "tolerate records missing from the sidecar");
  bench_cmd->add_option("--out", bench_args.out, "latency report JSON")->required();
  bench_cmd->callback([&] {
    auto sentences = to_bench_sentences(load_inputs(bench_args.inputs));
    BenchSetup setup = make_bench_classifier(bench_args.classifier, bench_args.sidecar,
                                             bench_args.sidecar_optional);
    sdoh::LatencyReport report =
        sdoh::bench(setup.id, setup.fn, sentences, bench_args.warmup, bench_args.repeats);
    sdoh::save_latency_report(report, bench_args.out);
    std::cout << report.sentences_per_second << " sentences/second (p50 " << report.p50_seconds
              << " s, p99 " << report.p99_seconds << " s) -> " << bench_args.out << "\n";
  });

  // speedup
  struct {
    std::string a;
    std::string b;
  } speedup_args;
  auto* speedup_cmd = app.add_subcommand("speedup", "throughput ratio of two latency reports");
  speedup_cmd->add_option("--a", speedup_args.a, "numerator latency report JSON")->required();
  speedup_cmd->add_option("--b", speedup_args.b, "denominator latency report JSON")->required();
  speedup_cmd->callback([&] {
    sdoh::LatencyReport a = sdoh::load_latency_report(speedup_args.a);
    sdoh::LatencyReport b = sdoh::load_latency_report(speedup_args.b);
    double ratio = sdoh::speedup(a, b);
    std::cout << a.classifier_id << ": " << a.sentences_per_second << " s/s\n"
              << b.classifier_id << ": " << b.sentences_per_second << " s/s\n"
              << "speedup: " << ratio << "\n";
  });

  // ablate
  struct {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::string> out_dir;
  } ablate_args;
  auto* ablate_cmd =
      app.add_subcommand("ablate", "train one model per feature set on an identical split");
  ablate_cmd->add_option("--config", ablate_args.config_path, "experiment config JSON")
      ->required();
  ablate_cmd
      ->add_option("--set", ablate_args.sets,
                   "feature set (all, none, or comma-separated groups); repeatable")
      ->required();
  ablate_cmd->add_option("--out", ablate_args.out_dir, "override the config's output directory");
  ablate_cmd->callback([&] {
    sdoh::ExperimentConfig cfg = sdoh::load_experiment_config(ablate_args.config_path);
    if (ablate_args.out_dir) cfg.output_dir = *ablate_args.out_dir;
    sdoh::AblationResult result = sdoh::run_ablation(cfg, ablate_args.sets);
    for (const auto& cell : result.cells) {
      if (cell.error.empty()) {
        std::cout << cell.feature_set << ": test macro F1 " << cell.test_macro_f1 << " (epoch "
                  << cell.selected_epoch << ")\n";
      } else {
        std::cout << cell.feature_set << ": FAILED (" << cell.error << ")\n";
      }
    }
    std::cout << "-> " << result.dir.string() << "\n";
  });

  // export-finetune
  struct {
    std::vector<std::string> inputs;
    std::string split_path;
    std::optional<std::string> template_path;
    int rank = 64;
    double learning_rate = 5e-5;
    double dropout = 0.10;
    int epochs = 3;
    bool include_negative_label = true;
    std::string out_dir;
  } finetune_args;
  auto* finetune_cmd = app.add_subcommand(
      "export-finetune", "render training prompts and an adapter manifest for fine-tuning");
  finetune_cmd->add_option("--input", finetune_args.inputs, "corpus JSONL, path[:base|synthetic]")
      ->required();
  finetune_cmd->add_option("--split", finetune_args.split_path, "split manifest JSON")->required();
  finetune_cmd->add_option("--template", finetune_args.template_path,
                           "training prompt template file (default: built-in)");
  finetune_cmd->add_option("--lora-rank", finetune_args.rank, "adapter rank")
      ->capture_default_str();
  finetune_cmd->add_option("--lora-learning-rate", finetune_args.learning_rate, "adapter LR")
      ->capture_default_str();
  finetune_cmd->add_option("--lora-dropout", finetune_args.dropout, "adapter dropout")
      ->capture_default_str();
  finetune_cmd->add_option("--lora-epochs", finetune_args.epochs, "adapter epochs")
      ->capture_default_str();
  finetune_cmd
      ->add_option("--include-negative-label", finetune_args.include_negative_label,
                   "keep empty-gold sentences with the '-' target")
      ->capture_default_str();
  finetune_cmd->add_option("--out", finetune_args.out_dir, "export directory")->required();
  finetune_cmd->callback([&] {
    sdoh::Corpus corpus = load_inputs(finetune_args.inputs);
    sdoh::SplitSpec split = sdoh::load_split(finetune_args.split_path);
    sdoh::PromptTemplate t =
        finetune_args.template_path
            ? sdoh::load_prompt_template(*finetune_args.template_path, sdoh::PromptKind::train)
            : sdoh::builtin_template(sdoh::PromptKind::train);
    sdoh::LoraConfig lcfg;
    lcfg.rank = finetune_args.rank;
    lcfg.learning_rate = finetune_args.learning_rate;
    lcfg.dropout = finetune_args.dropout;
    lcfg.epochs = finetune_args.epochs;
    sdoh::FinetuneExportOptions opts;
    opts.include_negative_label = finetune_args.include_negative_label;
    sdoh::FinetuneManifest manifest =
        sdoh::export_finetune_data(corpus, split, t, lcfg, finetune_args.out_dir, opts);
    std::cout << manifest.n_prompts << " prompts (template " << manifest.template_hash
              << ", split " << manifest.split_hash << ") -> " << finetune_args.out_dir << "\n";
  });

  // init-config
  struct {
    std::vector<std::string> inputs;
    std::string output_dir = "experiment_out";
    std::string name = "experiment";
    std::string out;
  } init_args;
  auto* init_cmd =
      app.add_subcommand("init-config", "write a default experiment config for hand editing");
  init_cmd->add_option("--input", init_args.inputs, "corpus JSONL, path[:base|synthetic]");
  init_cmd->add_option("--output-dir", init_args.output_dir, "experiment output directory")
      ->capture_default_str();
  init_cmd->add_option("--name", init_args.name, "experiment name")->capture_default_str();
  init_cmd->add_option("--out", init_args.out, "config JSON path")->required();
  init_cmd->callback([&] {
    sdoh::ExperimentConfig cfg;
    cfg.name = init_args.name;
    cfg.corpora = parse_inputs(init_args.inputs);
    cfg.output_dir = init_args.output_dir;
    write_text(init_args.out, sdoh::experiment_config_to_json(cfg));
    std::cout << "wrote " << init_args.out << "\n";
  });

  // experiment
  struct {
    std::string config_path;
    std::optional<std::string> out_dir;
  } experiment_args;
  auto* experiment_cmd =
      app.add_subcommand("experiment", "run a full split/train/eval experiment from a config");
  experiment_cmd->add_option("--config", experiment_args.config_path, "experiment config JSON")
      ->required();
  experiment_cmd->add_option("--out", experiment_args.out_dir,
                             "override the config's output directory");
  experiment_cmd->callback([&] {
    sdoh::ExperimentConfig cfg = sdoh::load_experiment_config(experiment_args.config_path);
    if (experiment_args.out_dir) cfg.output_dir = *experiment_args.out_dir;
    sdoh::ExperimentResult result = sdoh::run_experiment(cfg);
    std::cout << "test micro F1 " << result.test_report.micro_avg.f1 << ", macro F1 "
              << result.test_report.macro_avg.f1 << ", weighted F1 "
              << result.test_report.weighted_avg.f1 << "\n";
    if (result.crossval_summary) {
      std::cout << "crossval macro F1 " << result.crossval_summary->macro.f1.mean << " +/- "
                << result.crossval_summary->macro.f1.stddev << "\n";
    }
    if (result.cascade_report) {
      std::cout << "cascade macro F1 " << result.cascade_report->macro_avg.f1 << "\n";
    }
    std::cout << "-> " << result.dir.string() << "\n";
  });

  // tune-thresholds
  struct {
    std::string model_dir;
    std::vector<std::string> inputs;
    std::string split_path;
    std::optional<std::string> sidecar;
    bool sidecar_optional = false;
    std::optional<std::string> out_dir;
  } tune_args;
  auto* tune_cmd = app.add_subcommand(
      "tune-thresholds", "sweep per-output decision thresholds on the validation split");
  tune_cmd->add_option("--model", tune_args.model_dir, "model bundle directory")->required();
  tune_cmd->add_option("--input", tune_args.inputs, "corpus JSONL, path[:base|synthetic]")
      ->required();
  tune_cmd->add_option("--split", tune_args.split_path, "split manifest JSON")->required();
  tune_cmd->add_option("--annotations", tune_args.sidecar, "annotation sidecar JSONL");
  tune_cmd->add_flag("--annotations-optional", tune_args.sidecar_optional,
                     "tolerate records missing from the sidecar");
  tune_cmd->add_option("--out", tune_args.out_dir,
                       "bundle directory to write (default: update --model in place)");
  tune_cmd->callback([&] {
    sdoh::Corpus corpus = load_inputs(tune_args.inputs);
    sdoh::SplitSpec split = sdoh::load_split(tune_args.split_path);
    sdoh::TrainedModel model = sdoh::import_model(tune_args.model_dir);
    auto annotator = make_annotator(tune_args.sidecar, tune_args.sidecar_optional);
    std::shared_ptr<sdoh::SentenceEmbedder> embedder =
        sdoh::make_embedder(model.config.features.embedder_id, model.config.features.cui_dim);
    model.config.thresholds = sdoh::tune_thresholds(model, corpus, split, *annotator, *embedder);
    sdoh::export_model(model, tune_args.out_dir ? *tune_args.out_dir : tune_args.model_dir);
    std::cout << "thresholds:";
    for (double t : model.config.thresholds) std::cout << " " << t;
    std::cout << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
