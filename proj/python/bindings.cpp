// _sdohkit: thin pybind11 layer. Structured results cross the boundary as
// JSON strings; the sdohkit package decodes them into dicts.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "sdoh/dataset.hpp"
#include "sdoh/errors.hpp"
#include "sdoh/experiment.hpp"
#include "sdoh/features.hpp"
#include "sdoh/labels.hpp"
#include "sdoh/llm.hpp"
#include "sdoh/metrics.hpp"
#include "sdoh/model.hpp"
#include "sdoh/stratify.hpp"

namespace py = pybind11;
using json = nlohmann::ordered_json;

namespace {

sdoh::LabelSet to_label_set(const std::vector<std::string>& names) {
  sdoh::LabelSet out;
  for (const auto& name : names) {
    auto label = sdoh::label_from_string(name);
    if (!label) throw sdoh::ValidationError("unknown label: '" + name + "'");
    out.insert(*label);
  }
  return out;
}

std::vector<sdoh::LabelSet> to_label_sets(const std::vector<std::vector<std::string>>& rows) {
  std::vector<sdoh::LabelSet> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(to_label_set(row));
  return out;
}

std::string score_json(const std::vector<std::vector<std::string>>& gold,
                       const std::vector<std::vector<std::string>>& pred,
                       const std::string& task) {
  return sdoh::report_to_json(
      sdoh::score(to_label_sets(gold), to_label_sets(pred), sdoh::task_from_string(task)));
}

std::string parse_llm_output_json(const std::string& raw) {
  sdoh::ParsedLLMOutput parsed = sdoh::parse_output(raw);
  json obj;
  obj["labels"] = parsed.labels.names();
  obj["parse_mode"] = sdoh::to_string(parsed.parse_mode);
  obj["hallucinated_tokens"] = parsed.hallucinated_tokens;
  obj["raw"] = parsed.raw;
  return obj.dump();
}

std::string render_prompt(const std::string& kind, const std::string& text,
                          const std::optional<std::vector<std::string>>& labels) {
  sdoh::PromptKind pk;
  if (kind == "few_shot") {
    pk = sdoh::PromptKind::few_shot;
  } else if (kind == "train") {
    pk = sdoh::PromptKind::train;
  } else {
    throw sdoh::ValidationError("unknown prompt kind: '" + kind + "'");
  }
  std::optional<sdoh::LabelSet> ls;
  if (labels) ls = to_label_set(*labels);
  return sdoh::render_prompt(sdoh::builtin_template(pk), text, ls);
}

std::string split_corpus_json(const std::string& corpus_path, const std::vector<double>& fractions,
                              std::uint64_t seed) {
  if (fractions.size() != 3) {
    throw sdoh::ValidationError("expected three fractions (train, validation, test)");
  }
  sdoh::Corpus corpus = sdoh::load_corpus(corpus_path);
  return sdoh::split_to_json(
      sdoh::stratified_split(corpus, {fractions[0], fractions[1], fractions[2]}, seed));
}

std::string corpus_stats_json(const std::string& corpus_path) {
  return sdoh::stats_to_json(sdoh::corpus_stats(sdoh::load_corpus(corpus_path)));
}

std::string default_experiment_config_json() {
  return sdoh::experiment_config_to_json(sdoh::ExperimentConfig{});
}

std::string run_experiment_json(const std::string& config_json) {
  sdoh::ExperimentConfig cfg = sdoh::experiment_config_from_json(config_json);
  sdoh::ExperimentResult result = sdoh::run_experiment(cfg);
  json obj;
  obj["dir"] = result.dir.string();
  obj["micro_f1"] = result.test_report.micro_avg.f1;
  obj["macro_f1"] = result.test_report.macro_avg.f1;
  obj["weighted_f1"] = result.test_report.weighted_avg.f1;
  if (result.crossval_summary) {
    obj["crossval_macro_f1_mean"] = result.crossval_summary->macro.f1.mean;
    obj["crossval_macro_f1_stddev"] = result.crossval_summary->macro.f1.stddev;
  }
  if (result.cascade_report) {
    obj["cascade_macro_f1"] = result.cascade_report->macro_avg.f1;
  }
  return obj.dump();
}

std::string predict_json(const std::string& model_dir,
                         const std::vector<std::pair<std::string, std::string>>& sentences) {
  sdoh::TrainedModel model = sdoh::import_model(model_dir);
  auto annotator = std::make_shared<sdoh::StubAnnotator>();
  std::shared_ptr<sdoh::SentenceEmbedder> embedder =
      sdoh::make_embedder(model.config.features.embedder_id, model.config.features.cui_dim);
  bool binary = model.config.variant == sdoh::Task::binary;
  sdoh::Predictor predictor(std::move(model), annotator, embedder);
  json rows = json::array();
  for (const auto& [id, text] : sentences) {
    json row;
    row["id"] = id;
    if (binary) {
      row["predicted_positive"] = predictor.classify_binary(id, text);
    } else {
      row["predicted"] = predictor.classify(id, text).names();
    }
    rows.push_back(row);
  }
  return rows.dump();
}

std::vector<std::string> label_names() {
  std::vector<std::string> out;
  out.reserve(sdoh::kNumLabels);
  for (sdoh::SdohLabel l : sdoh::kAllLabels) out.push_back(sdoh::to_string(l));
  return out;
}

}  // namespace

PYBIND11_MODULE(_sdohkit, m) {
  m.doc() = "native core of the SDoH sentence classification toolkit";
  m.attr("__version__") = "0.1.0";

  py::register_exception<sdoh::Error>(m, "SdohError", PyExc_RuntimeError);

  m.def("label_names", &label_names, "the six label names in canonical order");
  m.def("score_json", &score_json, py::arg("gold"), py::arg("pred"),
        py::arg("task") = "multilabel",
        "precision/recall/F1 report (JSON) for gold vs predicted label lists");
  m.def("parse_llm_output_json", &parse_llm_output_json, py::arg("raw"),
        "labels, parse mode and hallucinated tokens recovered from raw generation text (JSON)");
  m.def("render_prompt", &render_prompt, py::arg("kind"), py::arg("text"),
        py::arg("labels") = std::nullopt,
        "render the built-in few_shot or train prompt for one sentence");
  m.def("split_corpus_json", &split_corpus_json, py::arg("corpus_path"), py::arg("fractions"),
        py::arg("seed"), "stratified train/validation/test id split of a corpus file (JSON)");
  m.def("corpus_stats_json", &corpus_stats_json, py::arg("corpus_path"),
        "label and source distribution of a corpus file (JSON)");
  m.def("default_experiment_config_json", &default_experiment_config_json,
        "a complete experiment config with default settings (JSON), ready to edit");
  m.def("run_experiment_json", &run_experiment_json, py::arg("config_json"),
        "run a full experiment from a config document; returns headline scores (JSON)");
  m.def("predict_json", &predict_json, py::arg("model_dir"), py::arg("sentences"),
        "classify (id, text) pairs with an exported model bundle (JSON)");
}
