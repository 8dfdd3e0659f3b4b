#include "sdoh/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sdoh/errors.hpp"

namespace sdoh {

using json = nlohmann::ordered_json;

const std::vector<std::string> kFeatureNames = {"pos", "dep", "ent", "med_ent", "tok_sdoh", "cui"};

HashEmbedder::HashEmbedder(int dim) : dim_(dim) {
  if (dim < 1) throw ValidationError("embedder dimension must be positive");
}

std::string HashEmbedder::id() const { return "hash-" + std::to_string(dim_); }

std::vector<double> HashEmbedder::embed(const std::string& text) {
  std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
  std::string padded = " " + text + " ";
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    std::uint64_t h = fnv1a64(std::string_view(padded).substr(i, 3));
    v[h % static_cast<std::uint64_t>(dim_)] += 1.0;
  }
  double norm = 0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

std::unique_ptr<SentenceEmbedder> make_embedder(const std::string& embedder_id, int dim) {
  if (embedder_id == "hash" || embedder_id.rfind("hash-", 0) == 0) {
    return std::make_unique<HashEmbedder>(dim);
  }
  throw AdapterUnavailableError("unknown sentence embedder '" + embedder_id + "'");
}

std::vector<double> embed_cui(SentenceEmbedder& embedder, const CuiAnnotation& ann) {
  if (ann.preferred_name.empty()) {
    throw ValidationError("concept " + ann.cui + " has no preferred name");
  }
  return embedder.embed(ann.preferred_name + ":" + ann.definition);
}

namespace {

const std::vector<std::string> kDefaultPos = {"ADJ",  "ADP",   "ADV",  "AUX",   "CCONJ", "DET",
                                              "INTJ", "NOUN",  "NUM",  "PART",  "PRON",  "PROPN",
                                              "PUNCT", "SCONJ", "SYM",  "VERB",  "X"};
const std::vector<std::string> kDefaultEnt = {"PERSON", "ORG",   "GPE",      "LOC",
                                              "DATE",   "MONEY", "CARDINAL", "EVENT"};
const std::vector<std::string> kDefaultMedEnt = {"DISEASE", "CHEMICAL", "PROCEDURE", "ANATOMY"};

}  // namespace

FeatureConfig default_feature_config() {
  FeatureConfig cfg;
  cfg.enabled.insert(kFeatureNames.begin(), kFeatureNames.end());
  cfg.pos_vocab = kDefaultPos;
  cfg.ent_vocab = kDefaultEnt;
  cfg.med_ent_vocab = kDefaultMedEnt;
  for (SdohLabel l : kAllLabels) cfg.tok_sdoh_vocab.push_back(to_string(l));
  return cfg;
}

int FeatureConfig::onehot_width() const {
  int w = 0;
  if (has("pos")) w += static_cast<int>(pos_vocab.size());
  if (has("dep")) w += dep_cap + 1;
  if (has("ent")) w += static_cast<int>(ent_vocab.size());
  if (has("med_ent")) w += static_cast<int>(med_ent_vocab.size());
  if (has("tok_sdoh")) w += static_cast<int>(tok_sdoh_vocab.size());
  return w;
}

std::set<std::string> parse_feature_set(const std::string& spec) {
  std::string s = trim(spec);
  if (s == "all") return {kFeatureNames.begin(), kFeatureNames.end()};
  if (s == "none" || s.empty()) return {};
  std::set<std::string> out;
  for (const auto& piece : split(s, ',')) {
    std::string name = trim(piece);
    if (name.empty()) continue;
    if (std::find(kFeatureNames.begin(), kFeatureNames.end(), name) == kFeatureNames.end()) {
      throw ValidationError("unknown feature group '" + name + "'");
    }
    out.insert(name);
  }
  return out;
}

std::string feature_config_to_json(const FeatureConfig& cfg) {
  json obj;
  // keep declaration order, not set order
  json enabled = json::array();
  for (const auto& name : kFeatureNames) {
    if (cfg.has(name)) enabled.push_back(name);
  }
  obj["enabled"] = std::move(enabled);
  obj["pos_vocab"] = cfg.pos_vocab;
  obj["ent_vocab"] = cfg.ent_vocab;
  obj["med_ent_vocab"] = cfg.med_ent_vocab;
  obj["tok_sdoh_vocab"] = cfg.tok_sdoh_vocab;
  obj["dep_cap"] = cfg.dep_cap;
  obj["embedder_id"] = cfg.embedder_id;
  obj["cui_dim"] = cfg.cui_dim;
  return obj.dump(2) + "\n";
}

FeatureConfig feature_config_from_json(const std::string& text) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("feature config: ") + e.what());
  }
  FeatureConfig cfg;
  try {
    for (const auto& name : obj.at("enabled")) {
      std::string n = name.get<std::string>();
      if (std::find(kFeatureNames.begin(), kFeatureNames.end(), n) == kFeatureNames.end()) {
        throw ValidationError("feature config enables unknown group '" + n + "'");
      }
      cfg.enabled.insert(n);
    }
    cfg.pos_vocab = obj.at("pos_vocab").get<std::vector<std::string>>();
    cfg.ent_vocab = obj.at("ent_vocab").get<std::vector<std::string>>();
    cfg.med_ent_vocab = obj.at("med_ent_vocab").get<std::vector<std::string>>();
    cfg.tok_sdoh_vocab = obj.at("tok_sdoh_vocab").get<std::vector<std::string>>();
    cfg.dep_cap = obj.at("dep_cap").get<int>();
    cfg.embedder_id = obj.at("embedder_id").get<std::string>();
    cfg.cui_dim = obj.at("cui_dim").get<int>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("feature config: ") + e.what());
  }
  if (cfg.dep_cap < 0) throw ValidationError("dep_cap must be non-negative");
  if (cfg.cui_dim < 1) throw ValidationError("cui_dim must be positive");
  return cfg;
}

void save_feature_config(const FeatureConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write feature config: " + path.string());
  out << feature_config_to_json(cfg);
}

FeatureConfig load_feature_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open feature config: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return feature_config_from_json(buf.str());
}

int BlockLayout::total_width() const {
  int w = 0;
  for (const auto& b : blocks) w += b.width;
  return w;
}

std::optional<Block> BlockLayout::find(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b;
  }
  return std::nullopt;
}

BlockLayout make_block_layout(int encoder_dim, const FeatureConfig& cfg) {
  BlockLayout layout;
  int offset = 0;
  auto add = [&](const std::string& name, int width) {
    layout.blocks.push_back({name, offset, width});
    offset += width;
  };
  add("encoder", encoder_dim);
  if (cfg.has("cui")) add("cui", cfg.cui_dim);
  if (cfg.has("pos")) add("pos", static_cast<int>(cfg.pos_vocab.size()));
  if (cfg.has("dep")) add("dep", cfg.dep_cap + 1);
  if (cfg.has("ent")) add("ent", static_cast<int>(cfg.ent_vocab.size()));
  if (cfg.has("med_ent")) add("med_ent", static_cast<int>(cfg.med_ent_vocab.size()));
  if (cfg.has("tok_sdoh")) add("tok_sdoh", static_cast<int>(cfg.tok_sdoh_vocab.size()));
  return layout;
}

Matrix FeatureMatrix::concat() const {
  Matrix out(n_wordpieces, layout.total_width());
  for (int r = 0; r < n_wordpieces; ++r) {
    int c = 0;
    for (int j = 0; j < encoder_block.cols; ++j) out.at(r, c++) = encoder_block.at(r, j);
    for (int j = 0; j < cui_block.cols; ++j) out.at(r, c++) = cui_block.at(r, j);
    for (int j = 0; j < onehot_block.cols; ++j) out.at(r, c++) = onehot_block.at(r, j);
  }
  return out;
}

namespace {

int vocab_index(const std::vector<std::string>& vocab, const std::string& tag,
                const std::string& group) {
  auto it = std::find(vocab.begin(), vocab.end(), tag);
  if (it == vocab.end()) {
    throw ValidationError(group + " tag '" + tag + "' is not in the configured vocabulary");
  }
  return static_cast<int>(it - vocab.begin());
}

}  // namespace

FeatureMatrix assemble_features(const SentenceAnnotation& ann, const Matrix& encoder_out,
                                const FeatureConfig& cfg, SentenceEmbedder& embedder) {
  const int n = static_cast<int>(ann.wordpieces.size());
  if (encoder_out.rows != n) {
    throw ShapeError("encoder output has " + std::to_string(encoder_out.rows) +
                     " rows for " + std::to_string(n) + " wordpieces");
  }

  FeatureMatrix fm;
  fm.n_wordpieces = n;
  fm.layout = make_block_layout(encoder_out.cols, cfg);
  fm.encoder_block = encoder_out;
  fm.cui_block = Matrix(n, cfg.has("cui") ? cfg.cui_dim : 0);
  fm.onehot_block = Matrix(n, cfg.onehot_width());

  // concept spans: longest first, then earlier start, then cui id;
  // overlapping losers are dropped
  std::vector<const CuiAnnotation*> order;
  for (const auto& c : ann.cuis) order.push_back(&c);
  std::sort(order.begin(), order.end(), [](const CuiAnnotation* a, const CuiAnnotation* b) {
    int la = a->span_end - a->span_begin, lb = b->span_end - b->span_begin;
    if (la != lb) return la > lb;
    if (a->span_begin != b->span_begin) return a->span_begin < b->span_begin;
    if (a->cui != b->cui) return a->cui < b->cui;
    if (a->preferred_name != b->preferred_name) return a->preferred_name < b->preferred_name;
    return a->definition < b->definition;
  });
  std::vector<char> covered(static_cast<std::size_t>(n), 0);
  for (const CuiAnnotation* c : order) {
    if (c->span_begin < 0 || c->span_end > n || c->span_begin >= c->span_end) {
      throw AlignmentError("concept " + c->cui + " span [" + std::to_string(c->span_begin) +
                           ", " + std::to_string(c->span_end) + ") is outside the sentence");
    }
    bool overlaps = false;
    for (int i = c->span_begin; i < c->span_end; ++i) {
      if (covered[static_cast<std::size_t>(i)]) overlaps = true;
    }
    if (overlaps) continue;
    for (int i = c->span_begin; i < c->span_end; ++i) covered[static_cast<std::size_t>(i)] = 1;
    if (!cfg.has("cui")) continue;
    std::vector<double> vec = embed_cui(embedder, *c);
    if (static_cast<int>(vec.size()) != cfg.cui_dim) {
      throw ShapeError("embedder returned " + std::to_string(vec.size()) +
                       " dims, config expects " + std::to_string(cfg.cui_dim));
    }
    for (int i = c->span_begin; i < c->span_end; ++i) {
      for (int j = 0; j < cfg.cui_dim; ++j) fm.cui_block.at(i, j) = vec[static_cast<std::size_t>(j)];
    }
  }

  // onehot offsets are relative to the onehot block itself
  int base = fm.layout.blocks[0].width + (cfg.has("cui") ? cfg.cui_dim : 0);
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (const auto& tok : ann.tokens) {
    if (tok.wordpiece_index < 0 || tok.wordpiece_index >= n) {
      throw AlignmentError("token annotation index " + std::to_string(tok.wordpiece_index) +
                           " is outside the sentence");
    }
    if (seen[static_cast<std::size_t>(tok.wordpiece_index)]) {
      throw AlignmentError("wordpiece " + std::to_string(tok.wordpiece_index) +
                           " has more than one token annotation");
    }
    seen[static_cast<std::size_t>(tok.wordpiece_index)] = 1;
    if (tok.dep_depth < 0) {
      throw ValidationError("negative dependency depth on wordpiece " +
                            std::to_string(tok.wordpiece_index));
    }
    const int r = tok.wordpiece_index;
    auto set_onehot = [&](const std::string& group, int index) {
      auto block = fm.layout.find(group);
      fm.onehot_block.at(r, block->offset - base + index) = 1.0;
    };
    if (cfg.has("pos") && !tok.pos.empty()) {
      set_onehot("pos", vocab_index(cfg.pos_vocab, tok.pos, "pos"));
    }
    if (cfg.has("dep")) {
      set_onehot("dep", std::min(tok.dep_depth, cfg.dep_cap));
    }
    if (cfg.has("ent") && !tok.ent.empty()) {
      set_onehot("ent", vocab_index(cfg.ent_vocab, tok.ent, "ent"));
    }
    if (cfg.has("med_ent") && !tok.med_ent.empty()) {
      set_onehot("med_ent", vocab_index(cfg.med_ent_vocab, tok.med_ent, "med_ent"));
    }
    if (cfg.has("tok_sdoh") && !tok.tok_sdoh.empty()) {
      set_onehot("tok_sdoh", vocab_index(cfg.tok_sdoh_vocab, tok.tok_sdoh, "tok_sdoh"));
    }
  }

  return fm;
}

}  // namespace sdoh
