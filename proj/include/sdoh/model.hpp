#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "sdoh/features.hpp"
#include "sdoh/metrics.hpp"
#include "sdoh/stratify.hpp"
#include "sdoh/util.hpp"

namespace sdoh {

// Wordpiece encoder boundary. The trainable variant is updated jointly with
// the classifier; the hash variant is frozen.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  virtual Matrix encode(const std::vector<std::string>& wordpieces) const = 0;
  virtual bool trainable() const { return false; }
};

// Frozen: embeds each wordpiece from character trigram hashes.
class HashEncoder : public Encoder {
 public:
  explicit HashEncoder(int dim);
  std::string id() const override { return "hash"; }
  int dim() const override { return dim_; }
  Matrix encode(const std::vector<std::string>& wordpieces) const override;

 private:
  int dim_;
};

// Hash-bucketed embedding table owned by the model; rows receive gradients
// during training.
class TrainableEncoder : public Encoder {
 public:
  explicit TrainableEncoder(const Matrix* table);
  std::string id() const override { return "trainable"; }
  int dim() const override;
  Matrix encode(const std::vector<std::string>& wordpieces) const override;
  bool trainable() const override { return true; }
  static int bucket(const std::string& wordpiece, int n_buckets);

 private:
  const Matrix* table_;
};

struct ModelConfig {
  Task variant = Task::multilabel;
  FeatureConfig features = default_feature_config();
  std::array<int, 2> conv_channels{32, 32};
  int kernel_size = 3;  // odd; sentences shorter than the kernel are zero-padded
  std::vector<double> thresholds;  // per output, defaults to 0.5 when empty
  std::string encoder_id = "trainable";
  int encoder_dim = 32;
  int encoder_buckets = 512;

  int n_outputs() const { return variant == Task::multilabel ? kNumLabels : 1; }
  int input_width() const;  // encoder_dim + enabled feature widths
};

void validate_model_config(const ModelConfig& cfg);
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

struct TrainConfig {
  int epochs = 40;
  double learning_rate = 1e-5;
  int batch_size = 16;
  std::uint64_t seed = 7;
  std::string optimizer = "adam";  // adam | sgd
  static constexpr std::string_view checkpoint_rule = "lowest validation loss";
};

// defaults per variant: multilabel lr 1e-5, binary lr 6.5e-6
TrainConfig default_train_config(Task variant);

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_macro_f1 = 0.0;
};

// argmin of validation loss, earliest epoch on ties; returns 0-based index
std::size_t select_best_epoch(const std::vector<EpochStats>& curve);

struct TrainedModel {
  ModelConfig config;
  Matrix w1;  // C1 x (k * D_in)
  std::vector<double> b1;
  Matrix w2;  // C2 x (k * C1)
  std::vector<double> b2;
  Matrix w_head;  // n_out x C2
  std::vector<double> b_head;
  Matrix encoder_table;  // buckets x encoder_dim for the trainable encoder, else 0x0
  std::vector<EpochStats> curve;
  int selected_epoch = 0;  // 1-based
};

// deterministic parameter initialization (no training)
TrainedModel init_model(const ModelConfig& cfg, std::uint64_t seed);

std::unique_ptr<Encoder> make_encoder(const TrainedModel& m);

// Low-level pass on an already-concatenated input (n_wordpieces x input
// width). Throws ShapeError on width mismatch.
std::vector<double> forward_probs(const TrainedModel& m, const Matrix& x);

// Checks the feature matrix layout against the model's expected layout.
std::vector<double> forward(const TrainedModel& m, const FeatureMatrix& fm);

struct ModelGradients {
  Matrix w1;
  std::vector<double> b1;
  Matrix w2;
  std::vector<double> b2;
  Matrix w_head;
  std::vector<double> b_head;
  Matrix d_input;  // gradient w.r.t. x, for encoder updates
};

// Per-sentence binary cross-entropy (mean over outputs), computed from
// logits. Fills gradients when given a sink.
double loss_and_gradients(const TrainedModel& m, const Matrix& x, const std::vector<double>& y,
                          ModelGradients* grads);

LabelSet decide(const std::vector<double>& probabilities, const std::vector<double>& thresholds);
bool decide_binary(double probability, double threshold);

// Full training loop: mini-batch descent on per-output BCE, per-epoch curve,
// parameters restored from the lowest-validation-loss epoch. Deterministic
// for a fixed seed. Throws TrainingDivergedError on non-finite loss.
TrainedModel train(const Corpus& corpus, const SplitSpec& split, const ModelConfig& mcfg,
                   const TrainConfig& tcfg, Annotator& annotator, SentenceEmbedder& embedder);

// Model bundle directory: config.json, weights.bin, curve.csv.
void export_model(const TrainedModel& m, const std::filesystem::path& dir);
TrainedModel import_model(const std::filesystem::path& dir);

// Ready-to-use classifier: annotation, encoding, feature assembly, forward.
class Predictor {
 public:
  Predictor(TrainedModel model, std::shared_ptr<Annotator> annotator,
            std::shared_ptr<SentenceEmbedder> embedder);

  const TrainedModel& model() const { return model_; }
  std::vector<double> probabilities(const std::string& record_id, const std::string& text) const;
  LabelSet classify(const std::string& record_id, const std::string& text) const;
  bool classify_binary(const std::string& record_id, const std::string& text) const;

 private:
  TrainedModel model_;
  std::shared_ptr<Annotator> annotator_;
  std::shared_ptr<SentenceEmbedder> embedder_;
  std::unique_ptr<Encoder> encoder_;
};

// Per-output threshold sweep maximizing per-class F1 on the validation
// split; returns the tuned thresholds.
std::vector<double> tune_thresholds(const TrainedModel& m, const Corpus& corpus,
                                    const SplitSpec& split, Annotator& annotator,
                                    SentenceEmbedder& embedder);

}  // namespace sdoh
