#include "sdoh/twostep.hpp"

#include <chrono>
#include <map>
#include <set>

#include <json.hpp>

#include "sdoh/errors.hpp"

namespace sdoh {

using json = nlohmann::ordered_json;

std::string to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::none: return "none";
    case BackendKind::traditional_multilabel: return "traditional_multilabel";
    case BackendKind::llm: return "llm";
  }
  return "none";
}

BackendKind backend_kind_from_string(const std::string& s) {
  if (s == "none") return BackendKind::none;
  if (s == "traditional_multilabel") return BackendKind::traditional_multilabel;
  if (s == "llm") return BackendKind::llm;
  throw ValidationError("unknown backend kind '" + s + "'");
}

std::string to_string(FallbackPolicy policy) {
  switch (policy) {
    case FallbackPolicy::error: return "error";
    case FallbackPolicy::empty_labels: return "empty_labels";
    case FallbackPolicy::traditional_fallback: return "traditional_fallback";
  }
  return "error";
}

FallbackPolicy fallback_policy_from_string(const std::string& s) {
  if (s == "error") return FallbackPolicy::error;
  if (s == "empty_labels") return FallbackPolicy::empty_labels;
  if (s == "traditional_fallback") return FallbackPolicy::traditional_fallback;
  throw ValidationError("unknown fallback policy '" + s + "'");
}

TraditionalBackend::TraditionalBackend(std::shared_ptr<Predictor> predictor)
    : predictor_(std::move(predictor)) {
  if (!predictor_) throw ValidationError("backend needs a predictor");
  if (predictor_->model().config.variant != Task::multilabel) {
    throw ValidationError("traditional backend needs a multilabel model");
  }
}

LabelSet TraditionalBackend::classify(const std::string& record_id, const std::string& text) {
  return predictor_->classify(record_id, text);
}

LlmBackend::LlmBackend(std::shared_ptr<LlmClassifier> classifier)
    : classifier_(std::move(classifier)) {
  if (!classifier_) throw ValidationError("backend needs a classifier");
}

LabelSet LlmBackend::classify(const std::string& record_id, const std::string& text) {
  (void)record_id;
  return classifier_->classify(text).labels;
}

PredictorGate::PredictorGate(std::shared_ptr<Predictor> predictor)
    : predictor_(std::move(predictor)) {
  if (!predictor_) throw ValidationError("gate needs a predictor");
  if (predictor_->model().config.variant != Task::binary) {
    throw ValidationError("cascade gate must be a binary-variant model");
  }
}

bool PredictorGate::positive(const std::string& record_id, const std::string& text) {
  return predictor_->classify_binary(record_id, text);
}

CascadeClassifier::CascadeClassifier(std::shared_ptr<BinaryGate> gate,
                                     std::shared_ptr<MultilabelBackend> backend,
                                     CascadeOptions opts,
                                     std::shared_ptr<MultilabelBackend> fallback)
    : gate_(std::move(gate)), backend_(std::move(backend)), fallback_(std::move(fallback)),
      opts_(opts) {
  if (!gate_ || !backend_) throw ValidationError("cascade needs a gate and a backend");
  if (opts_.fallback == FallbackPolicy::traditional_fallback && !fallback_) {
    throw ValidationError("traditional_fallback policy needs a fallback backend");
  }
}

CascadeClassifier::CascadeClassifier(std::shared_ptr<Predictor> gate,
                                     std::shared_ptr<MultilabelBackend> backend,
                                     CascadeOptions opts,
                                     std::shared_ptr<MultilabelBackend> fallback)
    : CascadeClassifier(std::make_shared<PredictorGate>(std::move(gate)), std::move(backend),
                        opts, std::move(fallback)) {}

RoutedPrediction CascadeClassifier::route(const std::string& record_id, const std::string& text) {
  using clock = std::chrono::steady_clock;
  RoutedPrediction out;
  out.id = record_id;

  auto gate_start = clock::now();
  out.gate_positive = gate_->positive(record_id, text);
  out.stage_latencies.gate_seconds = std::chrono::duration<double>(clock::now() - gate_start).count();

  if (!out.gate_positive) {
    out.backend_used = BackendKind::none;
    return out;
  }

  auto backend_start = clock::now();
  try {
    ++backend_calls_;
    out.labels = backend_->classify(record_id, text);
    out.backend_used = backend_->kind();
  } catch (const std::exception& e) {
    switch (opts_.fallback) {
      case FallbackPolicy::error:
        throw RoutedError("backend failed for gated-positive record '" + record_id +
                          "': " + e.what(),
                          true);
      case FallbackPolicy::empty_labels:
        out.labels = LabelSet{};
        out.backend_used = backend_->kind();
        break;
      case FallbackPolicy::traditional_fallback:
        out.labels = fallback_->classify(record_id, text);
        out.backend_used = fallback_->kind();
        break;
    }
  }
  out.stage_latencies.multilabel_seconds =
      std::chrono::duration<double>(clock::now() - backend_start).count();
  return out;
}

CascadeLatencySummary summarize_latency(const std::vector<RoutedPrediction>& predictions) {
  CascadeLatencySummary s;
  s.n_sentences = predictions.size();
  double gate_sum = 0, backend_sum = 0;
  for (const auto& p : predictions) {
    gate_sum += p.stage_latencies.gate_seconds;
    if (p.stage_latencies.multilabel_seconds.has_value()) {
      ++s.n_backend_calls;
      backend_sum += *p.stage_latencies.multilabel_seconds;
    }
  }
  s.total_seconds = gate_sum + backend_sum;
  if (s.n_sentences > 0) s.gate_mean_seconds = gate_sum / static_cast<double>(s.n_sentences);
  if (s.n_backend_calls > 0) {
    s.multilabel_mean_seconds = backend_sum / static_cast<double>(s.n_backend_calls);
  }
  if (s.total_seconds > 0) {
    s.sentences_per_second = static_cast<double>(s.n_sentences) / s.total_seconds;
  }
  return s;
}

CascadeEvaluation evaluate_cascade(CascadeClassifier& cascade, const Corpus& corpus,
                                   const SplitSpec& split) {
  if (split.test.empty()) throw ValidationError("cascade evaluation needs a non-empty test split");
  auto index = corpus.id_index();

  std::vector<RoutedPrediction> routed;
  routed.reserve(split.test.size());
  for (const auto& id : split.test) {
    auto it = index.find(id);
    if (it == index.end()) throw ValidationError("split id '" + id + "' is not in the corpus");
    const SentenceRecord& rec = corpus.records[it->second];
    routed.push_back(cascade.route(rec.id, rec.text));
  }
  return evaluate_routed(corpus, std::move(routed));
}

CascadeEvaluation evaluate_routed(const Corpus& corpus,
                                  std::vector<RoutedPrediction> predictions) {
  auto index = corpus.id_index();
  std::vector<LabelSet> gold, pred;
  for (const auto& p : predictions) {
    auto it = index.find(p.id);
    if (it == index.end()) {
      throw ValidationError("routed prediction id '" + p.id + "' is not in the corpus");
    }
    gold.push_back(corpus.records[it->second].gold);
    pred.push_back(p.labels);
  }
  CascadeEvaluation eval;
  eval.report = score(gold, pred, Task::multilabel);
  eval.latency = summarize_latency(predictions);
  eval.predictions = std::move(predictions);
  return eval;
}

std::vector<RoutedPrediction> join_predictions(const std::vector<GatePrediction>& gate,
                                               const std::vector<BackendPrediction>& backend,
                                               BackendKind kind) {
  if (kind == BackendKind::none) {
    throw ValidationError("joined cascade needs a real backend kind");
  }
  std::map<std::string, const BackendPrediction*> by_id;
  for (const auto& b : backend) {
    if (!by_id.emplace(b.id, &b).second) {
      throw ValidationError("duplicate backend prediction for id '" + b.id + "'");
    }
  }
  std::set<std::string> seen;
  std::vector<RoutedPrediction> out;
  out.reserve(gate.size());
  for (const auto& g : gate) {
    if (!seen.insert(g.id).second) {
      throw ValidationError("duplicate gate prediction for id '" + g.id + "'");
    }
    RoutedPrediction p;
    p.id = g.id;
    p.gate_positive = g.positive;
    p.stage_latencies.gate_seconds = g.seconds;
    if (g.positive) {
      auto it = by_id.find(g.id);
      if (it == by_id.end()) {
        throw ValidationError("gate-positive id '" + g.id + "' has no backend prediction");
      }
      p.labels = it->second->labels;
      p.stage_latencies.multilabel_seconds = it->second->seconds;
      p.backend_used = kind;
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::string routed_to_json_line(const RoutedPrediction& p) {
  json obj;
  obj["id"] = p.id;
  obj["gate_positive"] = p.gate_positive;
  obj["labels"] = p.labels.names();
  json lat;
  lat["gate"] = p.stage_latencies.gate_seconds;
  if (p.stage_latencies.multilabel_seconds.has_value()) {
    lat["multilabel"] = *p.stage_latencies.multilabel_seconds;
  }
  obj["stage_latencies"] = std::move(lat);
  obj["backend_used"] = to_string(p.backend_used);
  return obj.dump();
}

RoutedPrediction routed_from_json_line(const std::string& line) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string("routed prediction: ") + e.what());
  }
  RoutedPrediction p;
  try {
    p.id = obj.at("id").get<std::string>();
    p.gate_positive = obj.at("gate_positive").get<bool>();
    for (const auto& name : obj.at("labels")) {
      auto label = label_from_string(name.get<std::string>());
      if (!label) throw ParseError("unknown label '" + name.get<std::string>() + "'");
      p.labels.insert(*label);
    }
    const auto& lat = obj.at("stage_latencies");
    p.stage_latencies.gate_seconds = lat.at("gate").get<double>();
    if (lat.contains("multilabel")) {
      p.stage_latencies.multilabel_seconds = lat.at("multilabel").get<double>();
    }
    p.backend_used = backend_kind_from_string(obj.at("backend_used").get<std::string>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("routed prediction: ") + e.what());
  }
  // the shape a gate-negative row must take
  if (!p.gate_positive && (p.labels.any() || p.stage_latencies.multilabel_seconds.has_value() ||
                           p.backend_used != BackendKind::none)) {
    throw ValidationError("gate-negative prediction '" + p.id + "' carries backend output");
  }
  if (p.gate_positive && p.backend_used == BackendKind::none) {
    throw ValidationError("gate-positive prediction '" + p.id + "' names no backend");
  }
  return p;
}

}  // namespace sdoh
