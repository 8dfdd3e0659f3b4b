#include <atomic>
#include <cctype>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sdoh/errors.hpp"
#include "sdoh/features.hpp"

namespace sdoh {

using json = nlohmann::ordered_json;

std::vector<std::string> stub_wordpieces(const std::string& word) {
  std::string w = to_lower(word);
  std::vector<std::string> pieces;
  if (w.size() <= 6) {
    pieces.push_back(w);
    return pieces;
  }
  for (std::size_t i = 0; i < w.size(); i += 4) {
    pieces.push_back(w.substr(i, 4));
  }
  return pieces;
}

namespace {

std::string strip_punct(const std::string& word) {
  std::size_t b = 0, e = word.size();
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  while (b < e && !is_word(word[b])) ++b;
  while (e > b && !is_word(word[e - 1])) --e;
  return to_lower(word.substr(b, e - b));
}

struct LexiconEntry {
  std::vector<std::string> words;
  std::string cui;
  std::string name;
  std::string definition;
};

// tiny fixed concept lexicon for the stub linker; the "ran away" entry is
// the only one with a real-world identity
const std::vector<LexiconEntry>& concept_lexicon() {
  static const std::vector<LexiconEntry> lex = {
      {{"ran", "away"}, "C0019863", "Ran away, life event", ""},
      {{"lives", "alone"}, "C1000001", "Lives alone", "Person living without companions."},
      {{"homeless"}, "C1000002", "Homelessness", "Lacking a fixed nighttime residence."},
      {{"unemployed"}, "C1000003", "Unemployment", ""},
      {{"divorced"}, "C1000004", "Divorce", ""},
      {{"husband"}, "C1000005", "Husband", ""},
      {{"wife"}, "C1000006", "Wife", ""},
      {{"retired"}, "C1000007", "Retirement", ""},
  };
  return lex;
}

const std::vector<std::pair<std::string, std::string>>& tok_sdoh_lexicon() {
  static const std::vector<std::pair<std::string, std::string>> lex = {
      {"homeless", "housing"},      {"housing", "housing"},      {"evicted", "housing"},
      {"shelter", "housing"},       {"bus", "transportation"},   {"ride", "transportation"},
      {"transportation", "transportation"},                      {"drive", "transportation"},
      {"husband", "relationship"},  {"wife", "relationship"},    {"married", "relationship"},
      {"divorced", "relationship"}, {"widowed", "relationship"}, {"single", "relationship"},
      {"son", "parent"},            {"daughter", "parent"},      {"children", "parent"},
      {"kids", "parent"},           {"job", "employment"},       {"works", "employment"},
      {"unemployed", "employment"}, {"retired", "employment"},   {"employed", "employment"},
      {"supportive", "support"},    {"caregiver", "support"},    {"helps", "support"},
  };
  return lex;
}

const std::vector<std::string>& stub_pos_vocab() {
  static const std::vector<std::string> v = default_feature_config().pos_vocab;
  return v;
}
const std::vector<std::string>& stub_ent_vocab() {
  static const std::vector<std::string> v = default_feature_config().ent_vocab;
  return v;
}
const std::vector<std::string>& stub_med_ent_vocab() {
  static const std::vector<std::string> v = default_feature_config().med_ent_vocab;
  return v;
}

}  // namespace

SentenceAnnotation StubAnnotator::annotate(const std::string& record_id, const std::string& text) {
  (void)record_id;
  if (trim(text).empty()) throw ValidationError("cannot annotate an empty sentence");

  std::vector<std::string> words;
  {
    std::istringstream in(text);
    std::string w;
    while (in >> w) words.push_back(w);
  }

  SentenceAnnotation ann;
  std::vector<int> word_start;  // first wordpiece of each word
  std::vector<std::string> keys;
  for (const auto& word : words) {
    word_start.push_back(static_cast<int>(ann.wordpieces.size()));
    keys.push_back(strip_punct(word));
    for (auto& piece : stub_wordpieces(word)) ann.wordpieces.push_back(std::move(piece));
  }
  word_start.push_back(static_cast<int>(ann.wordpieces.size()));

  // word-level tags, repeated across the word's wordpieces
  for (std::size_t w = 0; w < words.size(); ++w) {
    const std::string& key = keys[w];
    std::uint64_t hp = fnv1a64("pos:" + key);
    std::uint64_t hd = fnv1a64("dep:" + key);
    std::uint64_t he = fnv1a64("ent:" + key);
    std::uint64_t hm = fnv1a64("med:" + key);
    TokenAnnotation base;
    base.pos = key.empty() ? std::string("PUNCT")
                           : stub_pos_vocab()[hp % stub_pos_vocab().size()];
    base.dep_depth = static_cast<int>(hd % 17);
    if (he % 5 == 0) base.ent = stub_ent_vocab()[(he / 5) % stub_ent_vocab().size()];
    if (hm % 7 == 0) base.med_ent = stub_med_ent_vocab()[(hm / 7) % stub_med_ent_vocab().size()];
    for (const auto& [trigger, label] : tok_sdoh_lexicon()) {
      if (key == trigger) {
        base.tok_sdoh = label;
        break;
      }
    }
    for (int i = word_start[w]; i < word_start[w + 1]; ++i) {
      TokenAnnotation tok = base;
      tok.wordpiece_index = i;
      ann.tokens.push_back(std::move(tok));
    }
  }

  // longest-phrase-first greedy concept matching over words
  std::size_t w = 0;
  while (w < words.size()) {
    const LexiconEntry* hit = nullptr;
    for (const auto& entry : concept_lexicon()) {
      if (entry.words.size() > words.size() - w) continue;
      bool match = true;
      for (std::size_t k = 0; k < entry.words.size(); ++k) {
        if (keys[w + k] != entry.words[k]) {
          match = false;
          break;
        }
      }
      if (match && (hit == nullptr || entry.words.size() > hit->words.size())) hit = &entry;
    }
    if (hit != nullptr) {
      CuiAnnotation c;
      c.cui = hit->cui;
      c.preferred_name = hit->name;
      c.definition = hit->definition;
      c.span_begin = word_start[w];
      c.span_end = word_start[w + hit->words.size()];
      ann.cuis.push_back(std::move(c));
      w += hit->words.size();
    } else {
      ++w;
    }
  }

  return ann;
}

namespace {

json token_to_json(const TokenAnnotation& t) {
  json obj;
  obj["i"] = t.wordpiece_index;
  obj["pos"] = t.pos;
  obj["dep"] = t.dep_depth;
  obj["ent"] = t.ent;
  obj["med_ent"] = t.med_ent;
  obj["tok_sdoh"] = t.tok_sdoh;
  return obj;
}

TokenAnnotation token_from_json(const json& obj) {
  TokenAnnotation t;
  t.wordpiece_index = obj.at("i").get<int>();
  t.pos = obj.at("pos").get<std::string>();
  t.dep_depth = obj.at("dep").get<int>();
  t.ent = obj.at("ent").get<std::string>();
  t.med_ent = obj.at("med_ent").get<std::string>();
  t.tok_sdoh = obj.at("tok_sdoh").get<std::string>();
  return t;
}

json cui_to_json(const CuiAnnotation& c) {
  json obj;
  obj["cui"] = c.cui;
  obj["name"] = c.preferred_name;
  obj["def"] = c.definition;
  obj["begin"] = c.span_begin;
  obj["end"] = c.span_end;
  return obj;
}

CuiAnnotation cui_from_json(const json& obj) {
  CuiAnnotation c;
  c.cui = obj.at("cui").get<std::string>();
  c.preferred_name = obj.at("name").get<std::string>();
  c.definition = obj.at("def").get<std::string>();
  c.span_begin = obj.at("begin").get<int>();
  c.span_end = obj.at("end").get<int>();
  return c;
}

}  // namespace

SidecarAnnotator::SidecarAnnotator(const std::filesystem::path& path, bool optional)
    : optional_(optional) {
  std::ifstream in(path);
  if (!in) throw AdapterUnavailableError("cannot open annotation sidecar: " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      std::string id = obj.at("id").get<std::string>();
      SentenceAnnotation ann;
      ann.wordpieces = obj.at("wordpieces").get<std::vector<std::string>>();
      for (const auto& t : obj.at("tokens")) ann.tokens.push_back(token_from_json(t));
      for (const auto& c : obj.at("cuis")) ann.cuis.push_back(cui_from_json(c));
      if (!by_id_.emplace(std::move(id), std::move(ann)).second) {
        throw ValidationError("duplicate id");
      }
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ValidationError&) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": duplicate record id");
    }
  }
}

SentenceAnnotation SidecarAnnotator::annotate(const std::string& record_id,
                                              const std::string& text) {
  auto it = by_id_.find(record_id);
  if (it != by_id_.end()) return it->second;
  if (!optional_) {
    throw AdapterUnavailableError("sidecar has no annotation for record '" + record_id + "'");
  }
  // optional: degrade to bare wordpieces, all groups zero
  SentenceAnnotation ann;
  std::istringstream in(text);
  std::string w;
  while (in >> w) {
    for (auto& piece : stub_wordpieces(w)) ann.wordpieces.push_back(std::move(piece));
  }
  return ann;
}

void save_sidecar(const std::map<std::string, SentenceAnnotation>& annotations,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write annotation sidecar: " + path.string());
  for (const auto& [id, ann] : annotations) {
    json obj;
    obj["id"] = id;
    obj["wordpieces"] = ann.wordpieces;
    json tokens = json::array();
    for (const auto& t : ann.tokens) tokens.push_back(token_to_json(t));
    obj["tokens"] = std::move(tokens);
    json cuis = json::array();
    for (const auto& c : ann.cuis) cuis.push_back(cui_to_json(c));
    obj["cuis"] = std::move(cuis);
    out << obj.dump() << '\n';
  }
  out.close();
  if (!out) throw Error("failed writing annotation sidecar: " + path.string());
}

std::vector<SentenceAnnotation> annotate_corpus(Annotator& annotator, const Corpus& corpus,
                                                int threads) {
  std::vector<SentenceAnnotation> out(corpus.size());
  if (threads <= 1 || !annotator.thread_safe() || corpus.size() < 2) {
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      out[i] = annotator.annotate(corpus.records[i].id, corpus.records[i].text);
    }
    return out;
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  std::size_t first_error_index = corpus.size();
  auto worker = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= corpus.size()) break;
      try {
        out[i] = annotator.annotate(corpus.records[i].id, corpus.records[i].text);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (i < first_error_index) {
          first_error_index = i;
          first_error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  int n_threads = std::min<int>(threads, static_cast<int>(corpus.size()));
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

}  // namespace sdoh
