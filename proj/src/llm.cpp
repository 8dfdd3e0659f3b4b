#include "sdoh/llm.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#define CPPHTTPLIB_NO_EXCEPTIONS
#include <httplib.h>

#include "sdoh/errors.hpp"
#include "sdoh/prompt_templates.hpp"
#include "sdoh/util.hpp"

namespace sdoh {

using json = nlohmann::ordered_json;

std::string to_string(PromptKind kind) {
  return kind == PromptKind::few_shot ? "few_shot" : "train";
}

namespace {

constexpr std::string_view kTextSlot = "{{ text }}";
constexpr std::string_view kLabelsSlot = "{{ labels }}";
constexpr std::string_view kFeaturesSlot = "{{ features }}";

bool contains(std::string_view hay, std::string_view needle) {
  return hay.find(needle) != std::string_view::npos;
}

void replace_all(std::string& s, std::string_view slot, const std::string& value) {
  std::size_t pos = 0;
  while ((pos = s.find(slot, pos)) != std::string::npos) {
    s.replace(pos, slot.size(), value);
    pos += value.size();
  }
}

}  // namespace

PromptTemplate make_prompt_template(std::string body, PromptKind kind) {
  if (!contains(body, kTextSlot)) {
    throw ValidationError("prompt template is missing the " + std::string(kTextSlot) + " slot");
  }
  bool has_labels = contains(body, kLabelsSlot);
  if (kind == PromptKind::train && !has_labels) {
    throw ValidationError("train template needs a " + std::string(kLabelsSlot) + " slot");
  }
  if (kind == PromptKind::few_shot && has_labels) {
    throw ValidationError("few_shot template must not carry a " + std::string(kLabelsSlot) +
                          " slot");
  }
  return PromptTemplate{std::move(body), kind};
}

PromptTemplate load_prompt_template(const std::filesystem::path& path, PromptKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open prompt template: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return make_prompt_template(buf.str(), kind);
}

PromptTemplate builtin_template(PromptKind kind) {
  std::string_view body =
      kind == PromptKind::few_shot ? builtin_few_shot_prompt() : builtin_train_prompt();
  return make_prompt_template(std::string(body), kind);
}

std::string labels_to_prompt(const LabelSet& labels) {
  if (labels.empty()) return "-";
  std::string out;
  for (SdohLabel l : labels.labels()) {
    if (!out.empty()) out += ", ";
    out += to_string(l);
  }
  return out;
}

std::string render_prompt(const PromptTemplate& t, const std::string& text,
                          const std::optional<LabelSet>& labels, const std::string& features) {
  if (t.kind == PromptKind::train && !labels.has_value()) {
    throw ValidationError("train template render needs a label set");
  }
  if (t.kind != PromptKind::train && labels.has_value()) {
    throw ValidationError("labels were supplied for a non-train template");
  }
  std::string out = t.body;
  replace_all(out, kTextSlot, text);
  if (labels.has_value()) replace_all(out, kLabelsSlot, labels_to_prompt(*labels));
  if (contains(out, kFeaturesSlot)) replace_all(out, kFeaturesSlot, features);
  return out;
}

std::string to_string(ParseMode mode) {
  switch (mode) {
    case ParseMode::backtick: return "backtick";
    case ParseMode::fallback_scan: return "fallback_scan";
    case ParseMode::failed: return "failed";
  }
  return "failed";
}

namespace {

// sequential non-overlapping ``` pairing; returns the content between the
// last complete pair, if any
std::optional<std::string> last_backtick_group(const std::string& raw) {
  std::optional<std::string> group;
  std::size_t pos = 0;
  while (true) {
    std::size_t open = raw.find("```", pos);
    if (open == std::string::npos) break;
    std::size_t close = raw.find("```", open + 3);
    if (close == std::string::npos) break;
    group = raw.substr(open + 3, close - open - 3);
    pos = close + 3;
  }
  return group;
}

bool word_at(const std::string& line, std::size_t pos, std::size_t len) {
  auto is_word = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
  };
  if (pos > 0 && is_word(line[pos - 1])) return false;
  if (pos + len < line.size() && is_word(line[pos + len])) return false;
  return true;
}

}  // namespace

ParsedLLMOutput parse_output(const std::string& raw) noexcept {
  ParsedLLMOutput out;
  try {
    out.raw = raw;
    out.parse_mode = ParseMode::failed;

    if (auto group = last_backtick_group(raw)) {
      out.parse_mode = ParseMode::backtick;
      std::vector<std::string> tokens;
      for (const auto& piece : split(*group, ',')) {
        std::string tok = to_lower(trim(piece));
        if (!tok.empty()) tokens.push_back(std::move(tok));
      }
      for (const auto& tok : tokens) {
        if (tok == "-") {
          // "-" only means "no labels" when it stands alone; mixed in with
          // real labels it is noise worth surfacing
          if (tokens.size() > 1) out.hallucinated_tokens.push_back(tok);
          continue;
        }
        if (auto label = label_from_string(tok)) {
          out.labels.insert(*label);
        } else {
          out.hallucinated_tokens.push_back(tok);
        }
      }
      return out;
    }

    // no backtick group: scan the final non-empty line for label words
    std::string last_line;
    for (const auto& line : split(raw, '\n')) {
      if (!trim(line).empty()) last_line = trim(line);
    }
    if (!last_line.empty()) {
      if (last_line == "-") {
        out.parse_mode = ParseMode::fallback_scan;
        return out;
      }
      std::string lowered = to_lower(last_line);
      bool found = false;
      for (SdohLabel l : kAllLabels) {
        std::string name = to_string(l);
        std::size_t pos = 0;
        while ((pos = lowered.find(name, pos)) != std::string::npos) {
          if (word_at(lowered, pos, name.size())) {
            out.labels.insert(l);
            found = true;
            break;
          }
          pos += 1;
        }
      }
      if (found) {
        out.parse_mode = ParseMode::fallback_scan;
        return out;
      }
    }

    out.labels = LabelSet{};
    out.parse_mode = ParseMode::failed;
  } catch (...) {
    out = ParsedLLMOutput{};
    out.parse_mode = ParseMode::failed;
  }
  return out;
}

FinetuneManifest export_finetune_data(const Corpus& corpus, const SplitSpec& split,
                                      const PromptTemplate& t, const LoraConfig& lcfg,
                                      const std::filesystem::path& dir,
                                      const FinetuneExportOptions& opts) {
  if (t.kind != PromptKind::train) {
    throw ValidationError("fine-tune export needs a train template");
  }
  std::filesystem::create_directories(dir);

  auto index = corpus.id_index();
  std::ofstream prompts(dir / "prompts.jsonl", std::ios::binary);
  if (!prompts) throw Error("cannot write " + (dir / "prompts.jsonl").string());

  std::string id_blob;
  std::size_t n = 0;
  for (const auto& id : split.train) {
    auto it = index.find(id);
    if (it == index.end()) {
      throw ValidationError("split id '" + id + "' is not in the corpus");
    }
    const SentenceRecord& rec = corpus.records[it->second];
    if (!opts.include_negative_label && rec.gold.empty()) continue;
    json line;
    line["prompt"] = render_prompt(t, rec.text, rec.gold);
    prompts << line.dump() << '\n';
    id_blob += id;
    id_blob += '\n';
    ++n;
  }
  prompts.close();
  if (!prompts) throw Error("failed writing " + (dir / "prompts.jsonl").string());

  FinetuneManifest manifest;
  manifest.lora = lcfg;
  manifest.template_hash = hex64(fnv1a64(t.body));
  manifest.split_hash = hex64(fnv1a64(id_blob));
  manifest.n_prompts = n;
  manifest.include_negative_label = opts.include_negative_label;

  json mj;
  mj["lora"] = {{"rank", lcfg.rank},
                {"learning_rate", lcfg.learning_rate},
                {"dropout", lcfg.dropout},
                {"epochs", lcfg.epochs}};
  mj["template_hash"] = manifest.template_hash;
  mj["split_hash"] = manifest.split_hash;
  mj["n_prompts"] = manifest.n_prompts;
  mj["include_negative_label"] = manifest.include_negative_label;
  std::ofstream mout(dir / "manifest.json", std::ios::binary);
  if (!mout) throw Error("cannot write " + (dir / "manifest.json").string());
  mout << mj.dump(2) << '\n';
  mout.close();
  if (!mout) throw Error("failed writing " + (dir / "manifest.json").string());
  return manifest;
}

ScriptedClient::ScriptedClient(std::vector<std::string> responses, int failures, int max_in_flight)
    : responses_(responses.begin(), responses.end()),
      failures_(failures),
      max_in_flight_(max_in_flight) {}

std::string ScriptedClient::generate(const std::string& prompt) {
  std::lock_guard<std::mutex> lock(mu_);
  prompts_.push_back(prompt);
  if (failures_ > 0) {
    --failures_;
    throw TransportError("scripted transport failure");
  }
  if (responses_.empty()) throw TransportError("scripted client ran out of responses");
  std::string r = std::move(responses_.front());
  responses_.pop_front();
  return r;
}

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v != nullptr ? std::string(v) : fallback;
}

// splits "http://host:port/path" into (scheme://host:port, /path)
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  std::size_t scheme = endpoint.find("://");
  std::size_t path_start =
      endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

}  // namespace

HttpGenerationClient::HttpGenerationClient(std::string endpoint, std::string token,
                                           int timeout_seconds, int max_in_flight)
    : endpoint_(endpoint.empty() ? env_or("SDOH_LLM_ENDPOINT", "") : std::move(endpoint)),
      token_(token.empty() ? env_or("SDOH_LLM_TOKEN", "") : std::move(token)),
      timeout_seconds_(timeout_seconds),
      max_in_flight_(max_in_flight) {
  if (endpoint_.empty()) {
    throw AdapterUnavailableError(
        "no generation endpoint configured (set SDOH_LLM_ENDPOINT or pass one)");
  }
}

std::string HttpGenerationClient::generate(const std::string& prompt) {
  auto [base, path] = split_endpoint(endpoint_);
  httplib::Client client(base);
  client.set_connection_timeout(timeout_seconds_, 0);
  client.set_read_timeout(timeout_seconds_, 0);
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

  json body;
  body["prompt"] = prompt;
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    throw TransportError("generation endpoint unreachable: " + endpoint_ + " (" +
                         httplib::to_string(res.error()) + ")");
  }
  if (res->status != 200) {
    throw TransportError("generation endpoint returned HTTP " + std::to_string(res->status));
  }
  json reply;
  try {
    reply = json::parse(res->body);
  } catch (const json::exception& e) {
    throw TransportError(std::string("generation response is not JSON: ") + e.what());
  }
  if (!reply.contains("text") || !reply["text"].is_string()) {
    throw TransportError("generation response has no \"text\" field");
  }
  return reply["text"].get<std::string>();
}

LlmClassifier::LlmClassifier(std::shared_ptr<GenerationClient> client, PromptTemplate t,
                             LlmClassifierConfig cfg)
    : client_(std::move(client)), template_(std::move(t)), cfg_(cfg) {
  if (!client_) throw ValidationError("LlmClassifier needs a client");
}

ParsedLLMOutput LlmClassifier::classify(const std::string& text) {
  std::string prompt = template_.kind == PromptKind::train
                           ? render_prompt(template_, text, LabelSet{})
                           : render_prompt(template_, text);
  int attempts = cfg_.max_retries + 1;
  for (int i = 0; i < attempts; ++i) {
    try {
      return parse_output(client_->generate(prompt));
    } catch (const TransportError&) {
      if (i + 1 == attempts) throw;
    }
  }
  throw TransportError("unreachable");
}

std::vector<ParsedLLMOutput> LlmClassifier::classify_batch(const std::vector<std::string>& texts) {
  std::vector<ParsedLLMOutput> results(texts.size());
  if (texts.empty()) return results;

  int workers = std::max(1, std::min<int>(client_->max_in_flight(),
                                          static_cast<int>(texts.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < texts.size(); ++i) results[i] = classify(texts[i]);
    return results;
  }

  // correlation by input index: worker writes results[i], arrival order is
  // irrelevant
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  std::size_t first_error_index = texts.size();

  auto worker = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= texts.size()) break;
      try {
        results[i] = classify(texts[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (i < first_error_index) {
          first_error_index = i;
          first_error = std::current_exception();
        }
      }
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
  for (auto& th : threads) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

}  // namespace sdoh
