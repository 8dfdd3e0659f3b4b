#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sdoh/dataset.hpp"
#include "sdoh/util.hpp"

namespace sdoh {

// Word-level tags repeated over the word's wordpieces. Empty categorical
// strings mean "no annotation" and one-hot encode as an all-zero group.
struct TokenAnnotation {
  int wordpiece_index = 0;
  std::string pos;
  int dep_depth = 0;
  std::string ent;
  std::string med_ent;
  std::string tok_sdoh;

  bool operator==(const TokenAnnotation&) const = default;
};

struct CuiAnnotation {
  std::string cui;
  std::string preferred_name;
  std::string definition;
  int span_begin = 0;  // wordpiece range [begin, end)
  int span_end = 0;

  bool operator==(const CuiAnnotation&) const = default;
};

struct SentenceAnnotation {
  std::vector<std::string> wordpieces;
  std::vector<TokenAnnotation> tokens;
  std::vector<CuiAnnotation> cuis;

  bool operator==(const SentenceAnnotation&) const = default;
};

// Adapter boundary for taggers / entity linker / token-SDoH model. Real
// annotators are external; the shipped implementations are a deterministic
// stub and a sidecar reader for precomputed annotations.
class Annotator {
 public:
  virtual ~Annotator() = default;
  virtual std::string id() const = 0;
  virtual bool thread_safe() const { return false; }
  // record_id exists for sidecar lookup; live annotators ignore it
  virtual SentenceAnnotation annotate(const std::string& record_id, const std::string& text) = 0;
};

// Deterministic hash-driven tagger with a tiny built-in concept lexicon.
// Splits on whitespace, lowercases, and breaks words longer than 6 chars
// into wordpieces of at most 4 chars.
class StubAnnotator : public Annotator {
 public:
  std::string id() const override { return "stub"; }
  bool thread_safe() const override { return true; }
  SentenceAnnotation annotate(const std::string& record_id, const std::string& text) override;
};

std::vector<std::string> stub_wordpieces(const std::string& word);

// Reads precomputed annotations from a JSONL sidecar keyed by record id.
// A missing id throws AdapterUnavailableError unless constructed optional,
// in which case it degrades to bare wordpieces with no tags.
class SidecarAnnotator : public Annotator {
 public:
  SidecarAnnotator(const std::filesystem::path& path, bool optional = false);
  std::string id() const override { return "sidecar"; }
  bool thread_safe() const override { return true; }
  SentenceAnnotation annotate(const std::string& record_id, const std::string& text) override;
  std::size_t size() const { return by_id_.size(); }

 private:
  std::map<std::string, SentenceAnnotation> by_id_;
  bool optional_ = false;
};

void save_sidecar(const std::map<std::string, SentenceAnnotation>& annotations,
                  const std::filesystem::path& path);

// Frozen sentence embedder boundary; parameters never see gradients.
class SentenceEmbedder {
 public:
  virtual ~SentenceEmbedder() = default;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  virtual std::vector<double> embed(const std::string& text) = 0;
};

// Character trigram hashing into dim buckets, L2-normalized. Deterministic
// stand-in for a real sentence encoder.
class HashEmbedder : public SentenceEmbedder {
 public:
  explicit HashEmbedder(int dim = 64);
  std::string id() const override;
  int dim() const override { return dim_; }
  std::vector<double> embed(const std::string& text) override;

 private:
  int dim_;
};

std::unique_ptr<SentenceEmbedder> make_embedder(const std::string& embedder_id, int dim);

// Embeds "<preferred name>:<definition>"; the colon is always present, the
// definition may be empty. Throws ValidationError on empty preferred name.
std::vector<double> embed_cui(SentenceEmbedder& embedder, const CuiAnnotation& ann);

// Feature group names: pos, dep, ent, med_ent, tok_sdoh, cui.
extern const std::vector<std::string> kFeatureNames;

struct FeatureConfig {
  std::set<std::string> enabled;  // defaults to every group
  std::vector<std::string> pos_vocab;
  std::vector<std::string> ent_vocab;
  std::vector<std::string> med_ent_vocab;
  std::vector<std::string> tok_sdoh_vocab;
  int dep_cap = 16;  // depths above this clamp to the cap
  std::string embedder_id = "hash";
  int cui_dim = 64;

  bool has(const std::string& feature) const { return enabled.count(feature) > 0; }
  int onehot_width() const;
};

FeatureConfig default_feature_config();
// "all", "none", or a comma-separated subset of the group names
std::set<std::string> parse_feature_set(const std::string& spec);
std::string feature_config_to_json(const FeatureConfig& cfg);
FeatureConfig feature_config_from_json(const std::string& text);
void save_feature_config(const FeatureConfig& cfg, const std::filesystem::path& path);
FeatureConfig load_feature_config(const std::filesystem::path& path);

struct Block {
  std::string name;
  int offset = 0;
  int width = 0;

  bool operator==(const Block&) const = default;
};

struct BlockLayout {
  std::vector<Block> blocks;
  int total_width() const;
  std::optional<Block> find(const std::string& name) const;
};

BlockLayout make_block_layout(int encoder_dim, const FeatureConfig& cfg);

struct FeatureMatrix {
  int n_wordpieces = 0;
  Matrix encoder_block;  // n x D_enc
  Matrix cui_block;      // n x D_cui (width 0 when the group is disabled)
  Matrix onehot_block;   // n x D_oh, entries in {0,1}
  BlockLayout layout;

  // row-wise [encoder | cui | onehot] concatenation per the layout
  Matrix concat() const;
};

// encoder_out rows must match the wordpiece count. Overlapping concept spans
// are resolved longest-span-first, then earlier-start, then lexicographic
// cui; losers are dropped. Out-of-range indices raise AlignmentError.
FeatureMatrix assemble_features(const SentenceAnnotation& ann, const Matrix& encoder_out,
                                const FeatureConfig& cfg, SentenceEmbedder& embedder);

// Serializes adapter calls unless the annotator declares itself thread-safe.
std::vector<SentenceAnnotation> annotate_corpus(Annotator& annotator, const Corpus& corpus,
                                                int threads = 1);

}  // namespace sdoh
