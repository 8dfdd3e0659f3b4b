#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sdoh/dataset.hpp"
#include "sdoh/llm.hpp"
#include "sdoh/metrics.hpp"
#include "sdoh/model.hpp"

namespace sdoh {

enum class BackendKind { none, traditional_multilabel, llm };

std::string to_string(BackendKind kind);
BackendKind backend_kind_from_string(const std::string& s);

struct StageLatencies {
  double gate_seconds = 0.0;
  std::optional<double> multilabel_seconds;  // absent when the backend never ran
};

struct RoutedPrediction {
  std::string id;
  bool gate_positive = false;
  LabelSet labels;
  StageLatencies stage_latencies;
  BackendKind backend_used = BackendKind::none;
};

// The cheap first stage: anything that can decide SDoH presence.
class BinaryGate {
 public:
  virtual ~BinaryGate() = default;
  virtual bool positive(const std::string& record_id, const std::string& text) = 0;
};

// A binary-variant model bundle acting as the gate.
class PredictorGate : public BinaryGate {
 public:
  explicit PredictorGate(std::shared_ptr<Predictor> predictor);
  bool positive(const std::string& record_id, const std::string& text) override;

 private:
  std::shared_ptr<Predictor> predictor_;
};

// The expensive second stage: anything that can assign a LabelSet.
class MultilabelBackend {
 public:
  virtual ~MultilabelBackend() = default;
  virtual BackendKind kind() const = 0;
  virtual LabelSet classify(const std::string& record_id, const std::string& text) = 0;
};

class TraditionalBackend : public MultilabelBackend {
 public:
  explicit TraditionalBackend(std::shared_ptr<Predictor> predictor);
  BackendKind kind() const override { return BackendKind::traditional_multilabel; }
  LabelSet classify(const std::string& record_id, const std::string& text) override;

 private:
  std::shared_ptr<Predictor> predictor_;
};

// A failed parse yields an empty LabelSet and counts against recall; only
// transport failures surface as errors.
class LlmBackend : public MultilabelBackend {
 public:
  explicit LlmBackend(std::shared_ptr<LlmClassifier> classifier);
  BackendKind kind() const override { return BackendKind::llm; }
  LabelSet classify(const std::string& record_id, const std::string& text) override;

 private:
  std::shared_ptr<LlmClassifier> classifier_;
};

enum class FallbackPolicy { error, empty_labels, traditional_fallback };

std::string to_string(FallbackPolicy policy);
FallbackPolicy fallback_policy_from_string(const std::string& s);

struct CascadeOptions {
  FallbackPolicy fallback = FallbackPolicy::error;
};

// Live routed mode: binary gate first, backend only on gate-positive
// sentences, wall clock per stage.
class CascadeClassifier {
 public:
  // fallback is only consulted under FallbackPolicy::traditional_fallback
  CascadeClassifier(std::shared_ptr<BinaryGate> gate, std::shared_ptr<MultilabelBackend> backend,
                    CascadeOptions opts = {},
                    std::shared_ptr<MultilabelBackend> fallback = nullptr);
  // convenience: wraps a binary-variant predictor in a PredictorGate
  CascadeClassifier(std::shared_ptr<Predictor> gate, std::shared_ptr<MultilabelBackend> backend,
                    CascadeOptions opts = {},
                    std::shared_ptr<MultilabelBackend> fallback = nullptr);

  RoutedPrediction route(const std::string& record_id, const std::string& text);
  std::size_t backend_calls() const { return backend_calls_; }

 private:
  std::shared_ptr<BinaryGate> gate_;
  std::shared_ptr<MultilabelBackend> backend_;
  std::shared_ptr<MultilabelBackend> fallback_;
  CascadeOptions opts_;
  std::size_t backend_calls_ = 0;
};

struct CascadeLatencySummary {
  std::size_t n_sentences = 0;
  std::size_t n_backend_calls = 0;
  double gate_mean_seconds = 0.0;        // over all sentences
  double multilabel_mean_seconds = 0.0;  // over backend invocations
  double total_seconds = 0.0;
  double sentences_per_second = 0.0;
};

struct CascadeEvaluation {
  MetricsReport report;  // multilabel scoring against gold
  CascadeLatencySummary latency;
  std::vector<RoutedPrediction> predictions;
};

CascadeLatencySummary summarize_latency(const std::vector<RoutedPrediction>& predictions);

// Routes every test-split sentence and scores the outcome.
CascadeEvaluation evaluate_cascade(CascadeClassifier& cascade, const Corpus& corpus,
                                   const SplitSpec& split);

// Joined-offline mode: gate and backend predictions produced separately and
// joined by record id to simulate the cascade.
struct GatePrediction {
  std::string id;
  bool positive = false;
  double seconds = 0.0;
};

struct BackendPrediction {
  std::string id;
  LabelSet labels;
  double seconds = 0.0;
};

// Every gate-positive id needs a backend row; backend rows for gate-negative
// ids are ignored. Duplicate ids are rejected.
std::vector<RoutedPrediction> join_predictions(const std::vector<GatePrediction>& gate,
                                               const std::vector<BackendPrediction>& backend,
                                               BackendKind kind);

// Scores already-routed predictions against corpus gold.
CascadeEvaluation evaluate_routed(const Corpus& corpus,
                                  std::vector<RoutedPrediction> predictions);

std::string routed_to_json_line(const RoutedPrediction& p);
RoutedPrediction routed_from_json_line(const std::string& line);

}  // namespace sdoh
