#include "sdoh/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "sdoh/errors.hpp"

namespace sdoh {

using json = nlohmann::ordered_json;

HashEncoder::HashEncoder(int dim) : dim_(dim) {
  if (dim < 1) throw ValidationError("encoder dimension must be positive");
}

Matrix HashEncoder::encode(const std::vector<std::string>& wordpieces) const {
  Matrix out(static_cast<int>(wordpieces.size()), dim_);
  for (std::size_t t = 0; t < wordpieces.size(); ++t) {
    const std::string padded = " " + wordpieces[t] + " ";
    double norm = 0;
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
      std::uint64_t h = fnv1a64(std::string_view(padded).substr(i, 3));
      out.at(static_cast<int>(t), static_cast<int>(h % static_cast<std::uint64_t>(dim_))) += 1.0;
    }
    for (int j = 0; j < dim_; ++j) norm += out.at(static_cast<int>(t), j) * out.at(static_cast<int>(t), j);
    norm = std::sqrt(norm);
    if (norm > 0) {
      for (int j = 0; j < dim_; ++j) out.at(static_cast<int>(t), j) /= norm;
    }
  }
  return out;
}

TrainableEncoder::TrainableEncoder(const Matrix* table) : table_(table) {
  if (table_ == nullptr || table_->rows < 1 || table_->cols < 1) {
    throw ValidationError("trainable encoder needs a non-empty embedding table");
  }
}

int TrainableEncoder::dim() const { return table_->cols; }

int TrainableEncoder::bucket(const std::string& wordpiece, int n_buckets) {
  return static_cast<int>(fnv1a64(wordpiece) % static_cast<std::uint64_t>(n_buckets));
}

Matrix TrainableEncoder::encode(const std::vector<std::string>& wordpieces) const {
  Matrix out(static_cast<int>(wordpieces.size()), table_->cols);
  for (std::size_t t = 0; t < wordpieces.size(); ++t) {
    int b = bucket(wordpieces[t], table_->rows);
    for (int j = 0; j < table_->cols; ++j) {
      out.at(static_cast<int>(t), j) = table_->at(b, j);
    }
  }
  return out;
}

int ModelConfig::input_width() const {
  int w = encoder_dim + features.onehot_width();
  if (features.has("cui")) w += features.cui_dim;
  return w;
}

void validate_model_config(const ModelConfig& cfg) {
  if (cfg.conv_channels[0] < 1 || cfg.conv_channels[1] < 1) {
    throw ValidationError("convolution channel counts must be positive");
  }
  if (cfg.kernel_size < 1 || cfg.kernel_size % 2 == 0) {
    throw ValidationError("kernel size must be a positive odd integer");
  }
  if (!cfg.thresholds.empty()) {
    if (static_cast<int>(cfg.thresholds.size()) != cfg.n_outputs()) {
      throw ValidationError("expected " + std::to_string(cfg.n_outputs()) + " thresholds, got " +
                            std::to_string(cfg.thresholds.size()));
    }
    for (double t : cfg.thresholds) {
      if (!(t > 0.0 && t < 1.0)) throw ValidationError("thresholds must lie in (0,1)");
    }
  }
  if (cfg.encoder_id != "trainable" && cfg.encoder_id != "hash") {
    throw ValidationError("unknown encoder '" + cfg.encoder_id + "'");
  }
  if (cfg.encoder_dim < 1) throw ValidationError("encoder dimension must be positive");
  if (cfg.encoder_id == "trainable" && cfg.encoder_buckets < 1) {
    throw ValidationError("encoder bucket count must be positive");
  }
}

std::string model_config_to_json(const ModelConfig& cfg) {
  json obj;
  obj["variant"] = to_string(cfg.variant);
  obj["conv_channels"] = cfg.conv_channels;
  obj["kernel_size"] = cfg.kernel_size;
  obj["thresholds"] = cfg.thresholds;
  obj["encoder_id"] = cfg.encoder_id;
  obj["encoder_dim"] = cfg.encoder_dim;
  obj["encoder_buckets"] = cfg.encoder_buckets;
  obj["features"] = json::parse(feature_config_to_json(cfg.features));
  return obj.dump(2) + "\n";
}

ModelConfig model_config_from_json(const std::string& text) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  ModelConfig cfg;
  try {
    cfg.variant = task_from_string(obj.at("variant").get<std::string>());
    auto ch = obj.at("conv_channels").get<std::vector<int>>();
    if (ch.size() != 2) throw ParseError("model config: expected two conv channel counts");
    cfg.conv_channels = {ch[0], ch[1]};
    cfg.kernel_size = obj.at("kernel_size").get<int>();
    cfg.thresholds = obj.at("thresholds").get<std::vector<double>>();
    cfg.encoder_id = obj.at("encoder_id").get<std::string>();
    cfg.encoder_dim = obj.at("encoder_dim").get<int>();
    cfg.encoder_buckets = obj.at("encoder_buckets").get<int>();
    cfg.features = feature_config_from_json(obj.at("features").dump());
  } catch (const json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  validate_model_config(cfg);
  return cfg;
}

TrainConfig default_train_config(Task variant) {
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.learning_rate = variant == Task::multilabel ? 1e-5 : 6.5e-6;
  return cfg;
}

std::string train_config_to_json(const TrainConfig& cfg) {
  json obj;
  obj["epochs"] = cfg.epochs;
  obj["learning_rate"] = cfg.learning_rate;
  obj["batch_size"] = cfg.batch_size;
  obj["seed"] = cfg.seed;
  obj["optimizer"] = cfg.optimizer;
  return obj.dump(2) + "\n";
}

TrainConfig train_config_from_json(const std::string& text) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("train config: ") + e.what());
  }
  TrainConfig cfg;
  try {
    cfg.epochs = obj.at("epochs").get<int>();
    cfg.learning_rate = obj.at("learning_rate").get<double>();
    cfg.batch_size = obj.at("batch_size").get<int>();
    cfg.seed = obj.at("seed").get<std::uint64_t>();
    cfg.optimizer = obj.at("optimizer").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("train config: ") + e.what());
  }
  if (cfg.optimizer != "adam" && cfg.optimizer != "sgd") {
    throw ValidationError("unknown optimizer: " + cfg.optimizer);
  }
  return cfg;
}

std::size_t select_best_epoch(const std::vector<EpochStats>& curve) {
  if (curve.empty()) throw ValidationError("empty training curve");
  std::size_t best = 0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].val_loss < curve[best].val_loss) best = i;
  }
  return best;
}

TrainedModel init_model(const ModelConfig& cfg, std::uint64_t seed) {
  validate_model_config(cfg);
  TrainedModel m;
  m.config = cfg;
  if (m.config.thresholds.empty()) {
    m.config.thresholds.assign(static_cast<std::size_t>(cfg.n_outputs()), 0.5);
  }

  const int d_in = cfg.input_width();
  const int k = cfg.kernel_size;
  const int c1 = cfg.conv_channels[0];
  const int c2 = cfg.conv_channels[1];
  const int n_out = cfg.n_outputs();

  Rng rng(seed);
  Rng init = rng.fork("init");
  auto fill = [&](Matrix& w, int rows, int cols, double stddev) {
    w = Matrix(rows, cols);
    for (double& v : w.v) v = init.next_normal() * stddev;
  };
  fill(m.w1, c1, k * d_in, std::sqrt(2.0 / (k * d_in)));
  m.b1.assign(static_cast<std::size_t>(c1), 0.0);
  fill(m.w2, c2, k * c1, std::sqrt(2.0 / (k * c1)));
  m.b2.assign(static_cast<std::size_t>(c2), 0.0);
  fill(m.w_head, n_out, c2, std::sqrt(1.0 / c2));
  m.b_head.assign(static_cast<std::size_t>(n_out), 0.0);
  if (cfg.encoder_id == "trainable") {
    fill(m.encoder_table, cfg.encoder_buckets, cfg.encoder_dim, 1.0 / std::sqrt(cfg.encoder_dim));
  }
  return m;
}

std::unique_ptr<Encoder> make_encoder(const TrainedModel& m) {
  if (m.config.encoder_id == "trainable") {
    return std::make_unique<TrainableEncoder>(&m.encoder_table);
  }
  return std::make_unique<HashEncoder>(m.config.encoder_dim);
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

struct ForwardState {
  Matrix y1, a1, y2, a2;
  std::vector<double> pooled;
  std::vector<int> argmax;
  std::vector<double> logits;
  std::vector<double> probs;
};

void conv_forward(const Matrix& x, const Matrix& w, const std::vector<double>& b, int k,
                  Matrix& y) {
  const int n = x.rows, d = x.cols, c_out = w.rows, pad = (k - 1) / 2;
  y = Matrix(n, c_out);
  for (int t = 0; t < n; ++t) {
    for (int c = 0; c < c_out; ++c) {
      double acc = b[static_cast<std::size_t>(c)];
      for (int j = 0; j < k; ++j) {
        int tt = t + j - pad;
        if (tt < 0 || tt >= n) continue;
        const double* xr = x.row(tt);
        const double* wr = w.row(c) + j * d;
        for (int dd = 0; dd < d; ++dd) acc += wr[dd] * xr[dd];
      }
      y.at(t, c) = acc;
    }
  }
}

void run_forward(const TrainedModel& m, const Matrix& x, ForwardState& st) {
  if (x.cols != m.config.input_width()) {
    throw ShapeError("input width " + std::to_string(x.cols) + " does not match model width " +
                     std::to_string(m.config.input_width()));
  }
  if (x.rows < 1) throw ShapeError("input has no wordpiece rows");
  const int k = m.config.kernel_size;

  conv_forward(x, m.w1, m.b1, k, st.y1);
  st.a1 = st.y1;
  for (double& v : st.a1.v) v = std::max(0.0, v);

  conv_forward(st.a1, m.w2, m.b2, k, st.y2);
  st.a2 = st.y2;
  for (double& v : st.a2.v) v = std::max(0.0, v);

  const int c2 = st.a2.cols, n = st.a2.rows;
  st.pooled.assign(static_cast<std::size_t>(c2), 0.0);
  st.argmax.assign(static_cast<std::size_t>(c2), 0);
  for (int c = 0; c < c2; ++c) {
    double best = st.a2.at(0, c);
    int best_t = 0;
    for (int t = 1; t < n; ++t) {
      if (st.a2.at(t, c) > best) {  // first occurrence wins ties
        best = st.a2.at(t, c);
        best_t = t;
      }
    }
    st.pooled[static_cast<std::size_t>(c)] = best;
    st.argmax[static_cast<std::size_t>(c)] = best_t;
  }

  const int n_out = m.w_head.rows;
  st.logits.assign(static_cast<std::size_t>(n_out), 0.0);
  st.probs.assign(static_cast<std::size_t>(n_out), 0.0);
  for (int o = 0; o < n_out; ++o) {
    double z = m.b_head[static_cast<std::size_t>(o)];
    for (int c = 0; c < c2; ++c) z += m.w_head.at(o, c) * st.pooled[static_cast<std::size_t>(c)];
    st.logits[static_cast<std::size_t>(o)] = z;
    st.probs[static_cast<std::size_t>(o)] = sigmoid(z);
  }
}

void conv_backward(const Matrix& x, const Matrix& w, int k, const Matrix& dy, Matrix& dw,
                   std::vector<double>& db, Matrix& dx) {
  const int n = x.rows, d = x.cols, c_out = w.rows, pad = (k - 1) / 2;
  for (int t = 0; t < n; ++t) {
    for (int c = 0; c < c_out; ++c) {
      double g = dy.at(t, c);
      if (g == 0.0) continue;
      db[static_cast<std::size_t>(c)] += g;
      for (int j = 0; j < k; ++j) {
        int tt = t + j - pad;
        if (tt < 0 || tt >= n) continue;
        const double* xr = x.row(tt);
        double* dxr = dx.row(tt);
        const double* wr = w.row(c) + j * d;
        double* dwr = dw.row(c) + j * d;
        for (int dd = 0; dd < d; ++dd) {
          dwr[dd] += g * xr[dd];
          dxr[dd] += g * wr[dd];
        }
      }
    }
  }
}

void zero_gradients(const TrainedModel& m, ModelGradients& g, int input_rows) {
  g.w1 = Matrix(m.w1.rows, m.w1.cols);
  g.b1.assign(m.b1.size(), 0.0);
  g.w2 = Matrix(m.w2.rows, m.w2.cols);
  g.b2.assign(m.b2.size(), 0.0);
  g.w_head = Matrix(m.w_head.rows, m.w_head.cols);
  g.b_head.assign(m.b_head.size(), 0.0);
  g.d_input = Matrix(input_rows, m.config.input_width());
}

}  // namespace

std::vector<double> forward_probs(const TrainedModel& m, const Matrix& x) {
  ForwardState st;
  run_forward(m, x, st);
  return st.probs;
}

std::vector<double> forward(const TrainedModel& m, const FeatureMatrix& fm) {
  BlockLayout expected = make_block_layout(m.config.encoder_dim, m.config.features);
  if (fm.layout.blocks != expected.blocks) {
    throw ShapeError("feature matrix layout does not match the model's feature configuration");
  }
  return forward_probs(m, fm.concat());
}

double loss_and_gradients(const TrainedModel& m, const Matrix& x, const std::vector<double>& y,
                          ModelGradients* grads) {
  const int n_out = m.config.n_outputs();
  if (static_cast<int>(y.size()) != n_out) {
    throw ShapeError("expected " + std::to_string(n_out) + " targets, got " +
                     std::to_string(y.size()));
  }
  ForwardState st;
  run_forward(m, x, st);

  // numerically stable BCE from logits, mean over outputs
  double loss = 0;
  for (int o = 0; o < n_out; ++o) {
    double z = st.logits[static_cast<std::size_t>(o)];
    double yo = y[static_cast<std::size_t>(o)];
    loss += std::max(z, 0.0) - z * yo + std::log1p(std::exp(-std::abs(z)));
  }
  loss /= n_out;
  if (grads == nullptr) return loss;

  zero_gradients(m, *grads, x.rows);

  const int c2 = m.w2.rows;
  std::vector<double> dz(static_cast<std::size_t>(n_out));
  for (int o = 0; o < n_out; ++o) {
    dz[static_cast<std::size_t>(o)] =
        (st.probs[static_cast<std::size_t>(o)] - y[static_cast<std::size_t>(o)]) / n_out;
  }

  std::vector<double> d_pooled(static_cast<std::size_t>(c2), 0.0);
  for (int o = 0; o < n_out; ++o) {
    double g = dz[static_cast<std::size_t>(o)];
    grads->b_head[static_cast<std::size_t>(o)] += g;
    for (int c = 0; c < c2; ++c) {
      grads->w_head.at(o, c) += g * st.pooled[static_cast<std::size_t>(c)];
      d_pooled[static_cast<std::size_t>(c)] += g * m.w_head.at(o, c);
    }
  }

  // max-pool routes each channel's gradient to its argmax row
  Matrix da2(st.a2.rows, st.a2.cols);
  for (int c = 0; c < c2; ++c) {
    da2.at(st.argmax[static_cast<std::size_t>(c)], c) = d_pooled[static_cast<std::size_t>(c)];
  }
  Matrix dy2 = da2;
  for (int i = 0; i < dy2.rows * dy2.cols; ++i) {
    if (st.y2.v[static_cast<std::size_t>(i)] <= 0) dy2.v[static_cast<std::size_t>(i)] = 0;
  }

  Matrix da1(st.a1.rows, st.a1.cols);
  conv_backward(st.a1, m.w2, m.config.kernel_size, dy2, grads->w2, grads->b2, da1);

  Matrix dy1 = da1;
  for (int i = 0; i < dy1.rows * dy1.cols; ++i) {
    if (st.y1.v[static_cast<std::size_t>(i)] <= 0) dy1.v[static_cast<std::size_t>(i)] = 0;
  }
  conv_backward(x, m.w1, m.config.kernel_size, dy1, grads->w1, grads->b1, grads->d_input);

  return loss;
}

LabelSet decide(const std::vector<double>& probabilities, const std::vector<double>& thresholds) {
  if (probabilities.size() != thresholds.size()) {
    throw ShapeError("probability and threshold counts differ");
  }
  if (probabilities.size() != static_cast<std::size_t>(kNumLabels)) {
    throw ShapeError("multilabel decision needs " + std::to_string(kNumLabels) +
                     " probabilities");
  }
  LabelSet out;
  for (int i = 0; i < kNumLabels; ++i) {
    if (probabilities[static_cast<std::size_t>(i)] >= thresholds[static_cast<std::size_t>(i)]) {
      out.insert(kAllLabels[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

bool decide_binary(double probability, double threshold) { return probability >= threshold; }

namespace {

// per-record pieces that stay fixed across epochs
struct PreparedRecord {
  std::vector<std::string> wordpieces;
  Matrix cui_block;
  Matrix onehot_block;
  std::vector<double> targets;
  LabelSet gold;
};

PreparedRecord prepare_record(const SentenceRecord& rec, const ModelConfig& cfg,
                              Annotator& annotator, SentenceEmbedder& embedder) {
  SentenceAnnotation ann = annotator.annotate(rec.id, rec.text);
  Matrix zeros(static_cast<int>(ann.wordpieces.size()), cfg.encoder_dim);
  FeatureMatrix fm = assemble_features(ann, zeros, cfg.features, embedder);
  PreparedRecord out;
  out.wordpieces = std::move(ann.wordpieces);
  out.cui_block = std::move(fm.cui_block);
  out.onehot_block = std::move(fm.onehot_block);
  out.gold = rec.gold;
  if (cfg.variant == Task::multilabel) {
    for (SdohLabel l : kAllLabels) out.targets.push_back(rec.gold.contains(l) ? 1.0 : 0.0);
  } else {
    out.targets.push_back(rec.gold.any() ? 1.0 : 0.0);
  }
  return out;
}

Matrix build_input(const PreparedRecord& rec, const TrainedModel& m, const Encoder& encoder) {
  Matrix enc = encoder.encode(rec.wordpieces);
  const int n = enc.rows;
  Matrix x(n, m.config.input_width());
  for (int t = 0; t < n; ++t) {
    int c = 0;
    for (int j = 0; j < enc.cols; ++j) x.at(t, c++) = enc.at(t, j);
    for (int j = 0; j < rec.cui_block.cols; ++j) x.at(t, c++) = rec.cui_block.at(t, j);
    for (int j = 0; j < rec.onehot_block.cols; ++j) x.at(t, c++) = rec.onehot_block.at(t, j);
  }
  return x;
}

// Adam with per-tensor moment state, keyed by tensor name; sgd when disabled
class Optimizer {
 public:
  Optimizer(const std::string& kind, double lr) : adam_(kind == "adam"), lr_(lr) {
    if (kind != "adam" && kind != "sgd") {
      throw ValidationError("unknown optimizer '" + kind + "'");
    }
  }

  void begin_step() { ++t_; }

  void apply(const std::string& key, std::vector<double>& param,
             const std::vector<double>& grad) {
    if (!adam_) {
      for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr_ * grad[i];
      return;
    }
    auto& [mo, ve] = moments_[key];
    if (mo.size() != param.size()) {
      mo.assign(param.size(), 0.0);
      ve.assign(param.size(), 0.0);
    }
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < param.size(); ++i) {
      mo[i] = b1 * mo[i] + (1 - b1) * grad[i];
      ve[i] = b2 * ve[i] + (1 - b2) * grad[i] * grad[i];
      param[i] -= lr_ * (mo[i] / bc1) / (std::sqrt(ve[i] / bc2) + eps);
    }
  }

 private:
  bool adam_;
  double lr_;
  long t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

struct ParamSnapshot {
  Matrix w1, w2, w_head, encoder_table;
  std::vector<double> b1, b2, b_head;
};

ParamSnapshot snapshot(const TrainedModel& m) {
  return {m.w1, m.w2, m.w_head, m.encoder_table, m.b1, m.b2, m.b_head};
}

void restore(TrainedModel& m, const ParamSnapshot& s) {
  m.w1 = s.w1;
  m.w2 = s.w2;
  m.w_head = s.w_head;
  m.encoder_table = s.encoder_table;
  m.b1 = s.b1;
  m.b2 = s.b2;
  m.b_head = s.b_head;
}

double macro_f1_of(const std::vector<LabelSet>& gold, const std::vector<LabelSet>& pred,
                   Task task) {
  return macro(count(gold, pred, task)).f1;
}

}  // namespace

TrainedModel train(const Corpus& corpus, const SplitSpec& split, const ModelConfig& mcfg,
                   const TrainConfig& tcfg, Annotator& annotator, SentenceEmbedder& embedder) {
  if (tcfg.epochs < 1) throw ValidationError("epoch count must be at least 1");
  if (tcfg.batch_size < 1) throw ValidationError("batch size must be at least 1");
  if (!(tcfg.learning_rate > 0)) throw ValidationError("learning rate must be positive");
  if (split.train.empty()) throw ValidationError("training split is empty");
  if (split.validation.empty()) {
    throw ValidationError("validation split is empty; checkpoint selection needs one");
  }

  TrainedModel m = init_model(mcfg, tcfg.seed);
  auto index = corpus.id_index();
  auto lookup = [&](const std::string& id) -> const SentenceRecord& {
    auto it = index.find(id);
    if (it == index.end()) throw ValidationError("split id '" + id + "' is not in the corpus");
    return corpus.records[it->second];
  };

  std::vector<PreparedRecord> train_set, val_set;
  for (const auto& id : split.train) {
    train_set.push_back(prepare_record(lookup(id), m.config, annotator, embedder));
  }
  for (const auto& id : split.validation) {
    val_set.push_back(prepare_record(lookup(id), m.config, annotator, embedder));
  }

  std::unique_ptr<Encoder> encoder = make_encoder(m);
  const bool joint_encoder = encoder->trainable();
  Optimizer opt(tcfg.optimizer, tcfg.learning_rate);
  Rng root(tcfg.seed);

  // batch gradient accumulators
  ModelGradients batch;
  Matrix table_grad;
  ModelGradients sample;

  double best_val = 0;
  bool have_best = false;
  ParamSnapshot best_params;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    Rng shuffle_rng = root.fork("epoch-" + std::to_string(epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(tcfg.batch_size)) {
      std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(tcfg.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(stop - start);

      zero_gradients(m, batch, 1);
      if (joint_encoder) table_grad = Matrix(m.encoder_table.rows, m.encoder_table.cols);

      for (std::size_t bi = start; bi < stop; ++bi) {
        const PreparedRecord& rec = train_set[order[bi]];
        Matrix x = build_input(rec, m, *encoder);
        double loss = loss_and_gradients(m, x, rec.targets, &sample);
        if (!std::isfinite(loss)) {
          throw TrainingDivergedError("non-finite training loss at epoch " +
                                      std::to_string(epoch));
        }
        loss_sum += loss;

        for (std::size_t i = 0; i < batch.w1.v.size(); ++i) batch.w1.v[i] += sample.w1.v[i];
        for (std::size_t i = 0; i < batch.b1.size(); ++i) batch.b1[i] += sample.b1[i];
        for (std::size_t i = 0; i < batch.w2.v.size(); ++i) batch.w2.v[i] += sample.w2.v[i];
        for (std::size_t i = 0; i < batch.b2.size(); ++i) batch.b2[i] += sample.b2[i];
        for (std::size_t i = 0; i < batch.w_head.v.size(); ++i)
          batch.w_head.v[i] += sample.w_head.v[i];
        for (std::size_t i = 0; i < batch.b_head.size(); ++i) batch.b_head[i] += sample.b_head[i];

        if (joint_encoder) {
          // encoder block occupies the first encoder_dim input columns
          for (int t = 0; t < x.rows; ++t) {
            int b = TrainableEncoder::bucket(rec.wordpieces[static_cast<std::size_t>(t)],
                                             m.encoder_table.rows);
            for (int j = 0; j < m.config.encoder_dim; ++j) {
              table_grad.at(b, j) += sample.d_input.at(t, j);
            }
          }
        }
      }

      for (double& v : batch.w1.v) v *= inv_batch;
      for (double& v : batch.b1) v *= inv_batch;
      for (double& v : batch.w2.v) v *= inv_batch;
      for (double& v : batch.b2) v *= inv_batch;
      for (double& v : batch.w_head.v) v *= inv_batch;
      for (double& v : batch.b_head) v *= inv_batch;
      if (joint_encoder) {
        for (double& v : table_grad.v) v *= inv_batch;
      }

      opt.begin_step();
      opt.apply("w1", m.w1.v, batch.w1.v);
      opt.apply("b1", m.b1, batch.b1);
      opt.apply("w2", m.w2.v, batch.w2.v);
      opt.apply("b2", m.b2, batch.b2);
      opt.apply("w_head", m.w_head.v, batch.w_head.v);
      opt.apply("b_head", m.b_head, batch.b_head);
      if (joint_encoder) opt.apply("encoder_table", m.encoder_table.v, table_grad.v);
    }

    // validation pass with the epoch's final parameters
    double val_loss_sum = 0;
    std::vector<LabelSet> val_gold, val_pred;
    for (const auto& rec : val_set) {
      Matrix x = build_input(rec, m, *encoder);
      double loss = loss_and_gradients(m, x, rec.targets, nullptr);
      val_loss_sum += loss;
      std::vector<double> probs = forward_probs(m, x);
      val_gold.push_back(rec.gold);
      if (m.config.variant == Task::multilabel) {
        val_pred.push_back(decide(probs, m.config.thresholds));
      } else {
        bool pos = decide_binary(probs[0], m.config.thresholds[0]);
        LabelSet p;
        if (pos) p.insert(kAllLabels[0]);  // binary scoring only checks emptiness
        val_pred.push_back(p);
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    stats.val_loss = val_loss_sum / static_cast<double>(val_set.size());
    stats.val_macro_f1 = macro_f1_of(val_gold, val_pred,
                                     m.config.variant == Task::multilabel ? Task::multilabel
                                                                          : Task::binary);
    if (!std::isfinite(stats.train_loss) || !std::isfinite(stats.val_loss)) {
      throw TrainingDivergedError("non-finite loss at epoch " + std::to_string(epoch));
    }
    m.curve.push_back(stats);

    if (!have_best || stats.val_loss < best_val) {
      best_val = stats.val_loss;
      best_params = snapshot(m);
      have_best = true;
    }
  }

  restore(m, best_params);
  m.selected_epoch = static_cast<int>(select_best_epoch(m.curve)) + 1;
  return m;
}

namespace {

constexpr char kWeightsMagic[9] = "SDOHWTS1";

void append_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t read_u32(const std::string& buf, std::size_t& pos) {
  if (pos + 4 > buf.size()) throw ModelIoError("weights file is truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(i)]))
         << (8 * i);
  }
  pos += 4;
  return v;
}

void append_tensor(std::string& buf, const std::string& name, const Matrix& m) {
  buf.push_back(static_cast<char>(name.size()));
  buf += name;
  append_u32(buf, static_cast<std::uint32_t>(m.rows));
  append_u32(buf, static_cast<std::uint32_t>(m.cols));
  std::size_t old = buf.size();
  buf.resize(old + m.v.size() * sizeof(double));
  std::memcpy(buf.data() + old, m.v.data(), m.v.size() * sizeof(double));
}

Matrix vec_as_matrix(const std::vector<double>& v) {
  Matrix m(1, static_cast<int>(v.size()));
  m.v = v;
  return m;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void export_model(const TrainedModel& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  json cfg = json::parse(model_config_to_json(m.config));
  json obj;
  obj["format_version"] = 1;
  obj["selected_epoch"] = m.selected_epoch;
  obj["model"] = std::move(cfg);
  std::ofstream cf(dir / "config.json", std::ios::binary);
  if (!cf) throw ModelIoError("cannot write " + (dir / "config.json").string());
  cf << obj.dump(2) << '\n';
  cf.close();
  if (!cf) throw ModelIoError("failed writing " + (dir / "config.json").string());

  std::string buf(kWeightsMagic, 8);
  append_u32(buf, 7);
  append_tensor(buf, "w1", m.w1);
  append_tensor(buf, "b1", vec_as_matrix(m.b1));
  append_tensor(buf, "w2", m.w2);
  append_tensor(buf, "b2", vec_as_matrix(m.b2));
  append_tensor(buf, "w_head", m.w_head);
  append_tensor(buf, "b_head", vec_as_matrix(m.b_head));
  append_tensor(buf, "encoder_table", m.encoder_table);
  std::uint64_t sum = fnv1a64(buf.data(), buf.size());
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((sum >> (8 * i)) & 0xff));
  std::ofstream wf(dir / "weights.bin", std::ios::binary);
  if (!wf) throw ModelIoError("cannot write " + (dir / "weights.bin").string());
  wf.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  wf.close();
  if (!wf) throw ModelIoError("failed writing " + (dir / "weights.bin").string());

  std::ofstream cv(dir / "curve.csv", std::ios::binary);
  if (!cv) throw ModelIoError("cannot write " + (dir / "curve.csv").string());
  cv << "epoch,train_loss,val_loss,val_macro_f1\n";
  for (const auto& e : m.curve) {
    cv << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << ','
       << format_double(e.val_macro_f1) << '\n';
  }
  cv.close();
  if (!cv) throw ModelIoError("failed writing " + (dir / "curve.csv").string());
}

TrainedModel import_model(const std::filesystem::path& dir) {
  std::ifstream cf(dir / "config.json", std::ios::binary);
  if (!cf) throw ModelIoError("cannot open " + (dir / "config.json").string());
  std::stringstream cbuf;
  cbuf << cf.rdbuf();
  json obj;
  try {
    obj = json::parse(cbuf.str());
  } catch (const json::exception& e) {
    throw ModelIoError(std::string("bad model config: ") + e.what());
  }
  if (!obj.contains("format_version") || obj["format_version"].get<int>() != 1) {
    throw ModelIoError("unsupported model bundle format version");
  }

  TrainedModel m;
  try {
    m.config = model_config_from_json(obj.at("model").dump());
    m.selected_epoch = obj.at("selected_epoch").get<int>();
  } catch (const json::exception& e) {
    throw ModelIoError(std::string("bad model config: ") + e.what());
  }

  std::ifstream wf(dir / "weights.bin", std::ios::binary);
  if (!wf) throw ModelIoError("cannot open " + (dir / "weights.bin").string());
  std::stringstream wbuf;
  wbuf << wf.rdbuf();
  std::string buf = wbuf.str();
  if (buf.size() < 20 || buf.compare(0, 8, kWeightsMagic, 8) != 0) {
    throw ModelIoError("not a compatible model weights file");
  }
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) {
    stored |= static_cast<std::uint64_t>(
                  static_cast<unsigned char>(buf[buf.size() - 8 + static_cast<std::size_t>(i)]))
              << (8 * i);
  }
  if (fnv1a64(buf.data(), buf.size() - 8) != stored) {
    throw ModelIoError("model weights file is corrupted (checksum mismatch)");
  }
  buf.resize(buf.size() - 8);

  std::size_t pos = 8;
  std::uint32_t n_tensors = read_u32(buf, pos);
  std::map<std::string, Matrix> tensors;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    if (pos >= buf.size()) throw ModelIoError("weights file is truncated");
    std::size_t name_len = static_cast<unsigned char>(buf[pos++]);
    if (pos + name_len > buf.size()) throw ModelIoError("weights file is truncated");
    std::string name = buf.substr(pos, name_len);
    pos += name_len;
    std::uint32_t rows = read_u32(buf, pos);
    std::uint32_t cols = read_u32(buf, pos);
    std::size_t count = static_cast<std::size_t>(rows) * cols;
    if (pos + count * sizeof(double) > buf.size()) {
      throw ModelIoError("weights file is truncated");
    }
    Matrix t(static_cast<int>(rows), static_cast<int>(cols));
    std::memcpy(t.v.data(), buf.data() + pos, count * sizeof(double));
    pos += count * sizeof(double);
    tensors.emplace(std::move(name), std::move(t));
  }

  auto take = [&](const std::string& name) -> Matrix {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ModelIoError("weights file is missing tensor '" + name + "'");
    return std::move(it->second);
  };
  m.w1 = take("w1");
  m.b1 = take("b1").v;
  m.w2 = take("w2");
  m.b2 = take("b2").v;
  m.w_head = take("w_head");
  m.b_head = take("b_head").v;
  m.encoder_table = take("encoder_table");

  // reject weights that do not fit the declared config
  const int d_in = m.config.input_width();
  const int k = m.config.kernel_size;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) throw ModelIoError("weights do not match the declared config: " + what);
  };
  expect(m.w1.rows == m.config.conv_channels[0] && m.w1.cols == k * d_in, "w1 shape");
  expect(static_cast<int>(m.b1.size()) == m.config.conv_channels[0], "b1 shape");
  expect(m.w2.rows == m.config.conv_channels[1] &&
             m.w2.cols == k * m.config.conv_channels[0],
         "w2 shape");
  expect(static_cast<int>(m.b2.size()) == m.config.conv_channels[1], "b2 shape");
  expect(m.w_head.rows == m.config.n_outputs() && m.w_head.cols == m.config.conv_channels[1],
         "head shape");
  expect(static_cast<int>(m.b_head.size()) == m.config.n_outputs(), "head bias shape");
  if (m.config.encoder_id == "trainable") {
    expect(m.encoder_table.rows == m.config.encoder_buckets &&
               m.encoder_table.cols == m.config.encoder_dim,
           "encoder table shape");
  }

  std::ifstream cv(dir / "curve.csv");
  if (!cv) throw ModelIoError("cannot open " + (dir / "curve.csv").string());
  std::string line;
  bool header = true;
  while (std::getline(cv, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (trim(line).empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != 4) throw ModelIoError("bad curve.csv row: " + line);
    EpochStats e;
    try {
      e.epoch = std::stoi(cells[0]);
      e.train_loss = std::stod(cells[1]);
      e.val_loss = std::stod(cells[2]);
      e.val_macro_f1 = std::stod(cells[3]);
    } catch (const std::exception&) {
      throw ModelIoError("bad curve.csv row: " + line);
    }
    m.curve.push_back(e);
  }
  if (!m.curve.empty() &&
      (m.selected_epoch < 1 || m.selected_epoch > static_cast<int>(m.curve.size()))) {
    throw ModelIoError("selected epoch is outside the recorded curve");
  }
  return m;
}

Predictor::Predictor(TrainedModel model, std::shared_ptr<Annotator> annotator,
                     std::shared_ptr<SentenceEmbedder> embedder)
    : model_(std::move(model)), annotator_(std::move(annotator)), embedder_(std::move(embedder)) {
  if (!annotator_ || !embedder_) throw ValidationError("predictor needs annotator and embedder");
  encoder_ = make_encoder(model_);
}

std::vector<double> Predictor::probabilities(const std::string& record_id,
                                             const std::string& text) const {
  SentenceAnnotation ann = annotator_->annotate(record_id, text);
  Matrix enc = encoder_->encode(ann.wordpieces);
  FeatureMatrix fm = assemble_features(ann, enc, model_.config.features, *embedder_);
  return forward(model_, fm);
}

LabelSet Predictor::classify(const std::string& record_id, const std::string& text) const {
  if (model_.config.variant != Task::multilabel) {
    throw ValidationError("classify needs a multilabel model");
  }
  return decide(probabilities(record_id, text), model_.config.thresholds);
}

bool Predictor::classify_binary(const std::string& record_id, const std::string& text) const {
  if (model_.config.variant != Task::binary) {
    throw ValidationError("classify_binary needs a binary model");
  }
  return decide_binary(probabilities(record_id, text)[0], model_.config.thresholds[0]);
}

std::vector<double> tune_thresholds(const TrainedModel& m, const Corpus& corpus,
                                    const SplitSpec& split, Annotator& annotator,
                                    SentenceEmbedder& embedder) {
  if (split.validation.empty()) throw ValidationError("threshold tuning needs a validation split");
  auto index = corpus.id_index();
  std::unique_ptr<Encoder> encoder = make_encoder(m);

  std::vector<std::vector<double>> probs;
  std::vector<LabelSet> gold;
  for (const auto& id : split.validation) {
    auto it = index.find(id);
    if (it == index.end()) throw ValidationError("split id '" + id + "' is not in the corpus");
    const SentenceRecord& rec = corpus.records[it->second];
    SentenceAnnotation ann = annotator.annotate(rec.id, rec.text);
    Matrix enc = encoder->encode(ann.wordpieces);
    FeatureMatrix fm = assemble_features(ann, enc, m.config.features, embedder);
    probs.push_back(forward(m, fm));
    gold.push_back(rec.gold);
  }

  const int n_out = m.config.n_outputs();
  std::vector<double> tuned(static_cast<std::size_t>(n_out), 0.5);
  for (int o = 0; o < n_out; ++o) {
    double best_f1 = -1.0, best_t = 0.5;
    for (int step = 1; step <= 19; ++step) {
      double t = step * 0.05;
      long tp = 0, fp = 0, fn = 0;
      for (std::size_t s = 0; s < probs.size(); ++s) {
        bool g = m.config.variant == Task::multilabel
                     ? gold[s].contains(kAllLabels[static_cast<std::size_t>(o)])
                     : gold[s].any();
        bool p = probs[s][static_cast<std::size_t>(o)] >= t;
        if (g && p) ++tp;
        else if (p) ++fp;
        else if (g) ++fn;
      }
      double denom = static_cast<double>(2 * tp + fp + fn);
      double f1 = denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
      if (f1 > best_f1) {
        best_f1 = f1;
        best_t = t;
      }
    }
    tuned[static_cast<std::size_t>(o)] = best_t;
  }
  return tuned;
}

}  // namespace sdoh
