#include "sdoh/dataset.hpp"

#include <fstream>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "sdoh/errors.hpp"
#include "sdoh/util.hpp"

namespace sdoh {

using json = nlohmann::ordered_json;

namespace {
const std::array<std::string, 2> kSourceNames = {"base", "synthetic"};
}

const std::string& to_string(SourceTag tag) {
  return kSourceNames[static_cast<std::size_t>(tag)];
}

SourceTag source_from_string(std::string_view name) {
  if (name == "base") return SourceTag::base;
  if (name == "synthetic") return SourceTag::synthetic;
  throw ValidationError("unknown source tag: '" + std::string(name) +
                        "' (expected 'base' or 'synthetic')");
}

std::unordered_map<std::string, std::size_t> Corpus::id_index() const {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = index.emplace(records[i].id, i);
    if (!inserted) {
      throw ValidationError("duplicate record id '" + records[i].id + "' in corpus " + name);
    }
  }
  return index;
}

namespace {

SentenceRecord parse_record(const json& obj, SourceTag default_source,
                            const std::string& where) {
  SentenceRecord rec;
  if (!obj.is_object()) throw ParseError(where + ": expected a JSON object");
  if (!obj.contains("id") || !obj["id"].is_string()) {
    throw ParseError(where + ": missing or non-string 'id'");
  }
  if (!obj.contains("text") || !obj["text"].is_string()) {
    throw ParseError(where + ": missing or non-string 'text'");
  }
  rec.id = obj["id"].get<std::string>();
  rec.text = obj["text"].get<std::string>();
  if (rec.id.empty()) throw ValidationError(where + ": empty record id");
  if (trim(rec.text).empty()) {
    throw ValidationError(where + ": record '" + rec.id + "' has empty text");
  }
  if (obj.contains("labels")) {
    if (!obj["labels"].is_array()) throw ParseError(where + ": 'labels' must be an array");
    for (const auto& item : obj["labels"]) {
      if (!item.is_string()) throw ParseError(where + ": labels must be strings");
      const auto name = item.get<std::string>();
      auto label = label_from_string(name);
      if (!label) {
        throw ValidationError(where + ": unknown label '" + name + "' on record '" +
                              rec.id + "'");
      }
      rec.gold.insert(*label);
    }
  }
  rec.source = default_source;
  if (obj.contains("source")) {
    if (!obj["source"].is_string()) throw ParseError(where + ": 'source' must be a string");
    rec.source = source_from_string(obj["source"].get<std::string>());
  }
  return rec;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path, SourceTag default_source) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file: " + path.string());

  Corpus corpus;
  corpus.name = path.stem().string();

  std::unordered_set<std::string> seen_ids;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    SentenceRecord rec = parse_record(obj, default_source, where);
    if (!seen_ids.insert(rec.id).second) {
      throw ValidationError(where + ": duplicate record id '" + rec.id + "'");
    }
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus file: " + path.string());
  for (const auto& rec : corpus.records) {
    json obj;
    obj["id"] = rec.id;
    obj["text"] = rec.text;
    obj["labels"] = rec.gold.names();
    obj["source"] = to_string(rec.source);
    out << obj.dump() << '\n';
  }
  if (!out) throw Error("failed writing corpus file: " + path.string());
}

Corpus merge_corpora(const Corpus& a, const Corpus& b) {
  Corpus merged;
  merged.name = a.name.empty() || b.name.empty() ? a.name + b.name : a.name + "+" + b.name;
  merged.records.reserve(a.size() + b.size());
  merged.records.insert(merged.records.end(), a.records.begin(), a.records.end());
  merged.records.insert(merged.records.end(), b.records.begin(), b.records.end());

  std::unordered_set<std::string> ids;
  bool collision = false;
  for (const auto& rec : merged.records) {
    if (!ids.insert(rec.id).second) {
      collision = true;
      break;
    }
  }
  if (collision) {
    ids.clear();
    for (auto& rec : merged.records) {
      rec.id = to_string(rec.source) + "/" + rec.id;
      if (!ids.insert(rec.id).second) {
        throw ValidationError("id collision survives source namespacing: '" + rec.id + "'");
      }
    }
  }
  return merged;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats stats;
  stats.total = static_cast<long>(corpus.size());

  std::array<std::set<std::string>, 2> texts_by_source;
  for (const auto& rec : corpus.records) {
    auto src = static_cast<std::size_t>(rec.source);
    ++stats.source_counts[src];
    texts_by_source[src].insert(rec.text);
    if (rec.gold.empty()) {
      ++stats.empty_gold;
    } else {
      ++stats.with_labels;
    }
    for (SdohLabel l : rec.gold.labels()) {
      ++stats.label_counts[static_cast<std::size_t>(l)];
      ++stats.label_counts_by_source[src][static_cast<std::size_t>(l)];
    }
  }
  for (const auto& text : texts_by_source[0]) {
    if (texts_by_source[1].count(text) > 0) ++stats.cross_source_duplicate_texts;
  }
  return stats;
}

std::string stats_to_json(const CorpusStats& st) {
  json obj;
  obj["total"] = st.total;
  obj["with_labels"] = st.with_labels;
  obj["empty_gold"] = st.empty_gold;
  json by_label = json::object();
  for (int i = 0; i < kNumLabels; ++i) {
    by_label[to_string(kAllLabels[static_cast<std::size_t>(i)])] =
        st.label_counts[static_cast<std::size_t>(i)];
  }
  obj["label_counts"] = by_label;
  json by_source = json::object();
  for (int s = 0; s < 2; ++s) {
    json entry;
    entry["records"] = st.source_counts[static_cast<std::size_t>(s)];
    json lc = json::object();
    for (int i = 0; i < kNumLabels; ++i) {
      lc[to_string(kAllLabels[static_cast<std::size_t>(i)])] =
          st.label_counts_by_source[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)];
    }
    entry["label_counts"] = lc;
    by_source[to_string(static_cast<SourceTag>(s))] = entry;
  }
  obj["by_source"] = by_source;
  obj["cross_source_duplicate_texts"] = st.cross_source_duplicate_texts;
  return obj.dump(2) + "\n";
}

}  // namespace sdoh
