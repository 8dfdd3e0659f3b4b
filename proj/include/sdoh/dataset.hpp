#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "sdoh/labels.hpp"

namespace sdoh {

enum class SourceTag : std::uint8_t { base = 0, synthetic = 1 };

const std::string& to_string(SourceTag tag);
SourceTag source_from_string(std::string_view name);  // throws ValidationError

// One clinical sentence with its gold label set (possibly empty).
struct SentenceRecord {
  std::string id;
  std::string text;
  LabelSet gold;
  SourceTag source = SourceTag::base;

  friend bool operator==(const SentenceRecord&, const SentenceRecord&) = default;
};

struct Corpus {
  std::string name;
  std::vector<SentenceRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  // id -> record index; throws ValidationError on a duplicate id
  std::unordered_map<std::string, std::size_t> id_index() const;
};

// JSONL, one record per line: {"id":..,"text":..,"labels":[..],"source":..}.
// `source` is optional per line; `default_source` fills it in.
Corpus load_corpus(const std::filesystem::path& path,
                   SourceTag default_source = SourceTag::base);

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

// Concatenates two corpora. Colliding ids are namespaced as
// "<source>/<id>"; a collision that survives namespacing is an error.
Corpus merge_corpora(const Corpus& a, const Corpus& b);

struct CorpusStats {
  std::array<long, kNumLabels> label_counts{};   // records containing each label
  std::array<long, 2> source_counts{};           // by SourceTag
  std::array<std::array<long, kNumLabels>, 2> label_counts_by_source{};
  long empty_gold = 0;
  long with_labels = 0;
  long total = 0;
  // distinct sentence texts that occur in both sources (base+synthetic
  // merges are not deduplicated; the overlap is reported instead)
  long cross_source_duplicate_texts = 0;
};

CorpusStats corpus_stats(const Corpus& corpus);

std::string stats_to_json(const CorpusStats& st);

}  // namespace sdoh
