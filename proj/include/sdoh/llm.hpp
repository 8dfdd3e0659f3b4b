#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "sdoh/dataset.hpp"
#include "sdoh/labels.hpp"
#include "sdoh/stratify.hpp"

namespace sdoh {

enum class PromptKind { few_shot, train };

std::string to_string(PromptKind kind);

struct PromptTemplate {
  std::string body;
  PromptKind kind = PromptKind::few_shot;
};

// Validates the placeholder invariants: few_shot carries {{ text }} and no
// {{ labels }}; train carries both. Throws ValidationError otherwise.
PromptTemplate make_prompt_template(std::string body, PromptKind kind);
PromptTemplate load_prompt_template(const std::filesystem::path& path, PromptKind kind);
PromptTemplate builtin_template(PromptKind kind);

// Comma-separated lowercase label names in declaration order; empty set
// serializes as "-".
std::string labels_to_prompt(const LabelSet& labels);

// Substitutes {{ text }} (always), {{ labels }} (train only) and the reserved
// {{ features }} slot when the body carries one. Labels must be supplied for
// train templates and must not be supplied otherwise.
std::string render_prompt(const PromptTemplate& t, const std::string& text,
                          const std::optional<LabelSet>& labels = std::nullopt,
                          const std::string& features = "");

enum class ParseMode { backtick, fallback_scan, failed };

std::string to_string(ParseMode mode);

struct ParsedLLMOutput {
  LabelSet labels;
  std::string raw;
  std::vector<std::string> hallucinated_tokens;
  ParseMode parse_mode = ParseMode::failed;
};

// Total over arbitrary text: takes the last complete triple-backtick group,
// else scans the final non-empty line for whole-word label names, else
// reports parse_mode=failed. Never throws.
ParsedLLMOutput parse_output(const std::string& raw) noexcept;

struct LoraConfig {
  int rank = 64;
  double learning_rate = 5e-5;
  double dropout = 0.10;
  int epochs = 3;
};

struct FinetuneExportOptions {
  // when false, empty-gold sentences are left out of the export instead of
  // being rendered with the "-" target
  bool include_negative_label = true;
};

struct FinetuneManifest {
  LoraConfig lora;
  std::string template_hash;
  std::string split_hash;
  std::size_t n_prompts = 0;
  bool include_negative_label = true;
};

// Writes <dir>/prompts.jsonl (one {"prompt": ...} object per exported train
// record, in split order) and <dir>/manifest.json. Returns the manifest.
FinetuneManifest export_finetune_data(const Corpus& corpus, const SplitSpec& split,
                                      const PromptTemplate& t, const LoraConfig& lcfg,
                                      const std::filesystem::path& dir,
                                      const FinetuneExportOptions& opts = {});

// Request/response text generation backend. generate() throws TransportError
// on delivery failure; what the model said is never an error.
class GenerationClient {
 public:
  virtual ~GenerationClient() = default;
  virtual std::string generate(const std::string& prompt) = 0;
  // bound on concurrent in-flight requests the backend tolerates
  virtual int max_in_flight() const { return 1; }
};

// Test backend: replays a fixed list of responses and records every prompt.
// The first `failures` calls throw TransportError before any response is
// consumed.
class ScriptedClient : public GenerationClient {
 public:
  explicit ScriptedClient(std::vector<std::string> responses, int failures = 0,
                          int max_in_flight = 4);
  std::string generate(const std::string& prompt) override;
  int max_in_flight() const override { return max_in_flight_; }
  const std::vector<std::string>& prompts_seen() const { return prompts_; }
  int failures_remaining() const { return failures_; }

 private:
  std::mutex mu_;
  std::deque<std::string> responses_;
  std::vector<std::string> prompts_;
  int failures_ = 0;
  int max_in_flight_ = 4;
};

// POSTs {"prompt": ...} to an HTTP endpoint and expects {"text": ...} back.
// Endpoint/token fall back to SDOH_LLM_ENDPOINT / SDOH_LLM_TOKEN.
class HttpGenerationClient : public GenerationClient {
 public:
  explicit HttpGenerationClient(std::string endpoint = "", std::string token = "",
                                int timeout_seconds = 60, int max_in_flight = 2);
  std::string generate(const std::string& prompt) override;
  int max_in_flight() const override { return max_in_flight_; }
  const std::string& endpoint() const { return endpoint_; }

 private:
  std::string endpoint_;
  std::string token_;
  int timeout_seconds_;
  int max_in_flight_;
};

struct LlmClassifierConfig {
  int max_retries = 2;  // retries after the first attempt, TransportError only
};

class LlmClassifier {
 public:
  LlmClassifier(std::shared_ptr<GenerationClient> client, PromptTemplate t,
                LlmClassifierConfig cfg = {});

  // render, send (with bounded retries), parse; raw text kept for audit
  ParsedLLMOutput classify(const std::string& text);

  // classify many sentences with up to client->max_in_flight() concurrent
  // requests; results are positioned by input index, not arrival order
  std::vector<ParsedLLMOutput> classify_batch(const std::vector<std::string>& texts);

 private:
  std::shared_ptr<GenerationClient> client_;
  PromptTemplate template_;
  LlmClassifierConfig cfg_;
};

}  // namespace sdoh
