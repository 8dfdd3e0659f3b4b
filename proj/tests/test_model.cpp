#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sdoh/errors.hpp"
#include "sdoh/model.hpp"
#include "test_support.hpp"

using namespace sdoh;

namespace {

// small model with the feature pipeline on, for end-to-end training tests
ModelConfig tiny_config(Task variant) {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.features = default_feature_config();
  cfg.features.enabled = parse_feature_set("pos,tok_sdoh");
  cfg.conv_channels = {8, 8};
  cfg.kernel_size = 3;
  cfg.encoder_id = "trainable";
  cfg.encoder_dim = 16;
  cfg.encoder_buckets = 128;
  return cfg;
}

// bare numeric model for gradient checks: no features, direct input matrix
ModelConfig probe_config() {
  ModelConfig cfg;
  cfg.variant = Task::multilabel;
  cfg.features = default_feature_config();
  cfg.features.enabled = {};
  cfg.conv_channels = {4, 4};
  cfg.kernel_size = 3;
  cfg.encoder_id = "hash";
  cfg.encoder_dim = 8;
  return cfg;
}

// sentences whose gold labels follow one keyword each; trivially separable
Corpus separable_corpus(int n, std::uint64_t seed) {
  static const std::vector<std::pair<std::string, SdohLabel>> keywords = {
      {"evicted", SdohLabel::housing},     {"bus", SdohLabel::transportation},
      {"married", SdohLabel::relationship}, {"daughter", SdohLabel::parent},
      {"job", SdohLabel::employment},       {"caregiver", SdohLabel::support},
  };
  static const std::vector<std::string> filler = {"the",   "visit", "notes", "clinic",
                                                  "today", "plan",  "stable", "review"};
  sdoh::Rng rng(seed);
  Corpus corpus;
  corpus.name = "separable";
  for (int i = 0; i < n; ++i) {
    SentenceRecord rec;
    rec.id = "s" + std::to_string(i);
    std::string text = filler[rng.next_below(filler.size())];
    if (i % 4 != 3) {  // every fourth sentence carries no label
      const auto& [word, label] = keywords[static_cast<std::size_t>(i) % keywords.size()];
      text += " " + word;
      rec.gold.insert(label);
      if (i % 5 == 0) {
        const auto& [w2, l2] = keywords[static_cast<std::size_t>(i + 2) % keywords.size()];
        text += " " + w2;
        rec.gold.insert(l2);
      }
    }
    text += " " + filler[rng.next_below(filler.size())];
    rec.text = text;
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

SplitSpec head_split(const Corpus& corpus, std::size_t n_train, std::size_t n_val) {
  SplitSpec split;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& id = corpus.records[i].id;
    if (i < n_train) split.train.push_back(id);
    else if (i < n_train + n_val) split.validation.push_back(id);
    else split.test.push_back(id);
  }
  return split;
}

Matrix random_input(int rows, int cols, std::uint64_t seed) {
  Matrix x(rows, cols);
  sdoh::Rng rng(seed);
  for (double& v : x.v) v = rng.next_normal();
  return x;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("encoders produce deterministic row embeddings") {
  HashEncoder hash(16);
  Matrix a = hash.encode({"he", "ran", "away"});
  Matrix b = hash.encode({"he", "ran", "away"});
  CHECK(a.rows == 3);
  CHECK(a.cols == 16);
  CHECK(a.v == b.v);
  for (int t = 0; t < a.rows; ++t) {
    double norm = 0;
    for (int j = 0; j < a.cols; ++j) norm += a.at(t, j) * a.at(t, j);
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-9));
  }

  Matrix table(32, 8);
  sdoh::Rng rng(3);
  for (double& v : table.v) v = rng.next_normal();
  TrainableEncoder enc(&table);
  CHECK(enc.dim() == 8);
  Matrix e = enc.encode({"one", "two", "one"});
  CHECK(e.rows == 3);
  // identical wordpieces share a table row
  for (int j = 0; j < 8; ++j) CHECK(e.at(0, j) == e.at(2, j));
  int b0 = TrainableEncoder::bucket("one", 32);
  CHECK(b0 >= 0);
  CHECK(b0 < 32);
  for (int j = 0; j < 8; ++j) CHECK(e.at(0, j) == table.at(b0, j));

  CHECK_THROWS_AS(TrainableEncoder(nullptr), ValidationError);
  CHECK_THROWS_AS(HashEncoder(0), ValidationError);
}

TEST_CASE("model config validation and serialization") {
  ModelConfig cfg = tiny_config(Task::multilabel);
  CHECK(cfg.n_outputs() == 6);
  CHECK(tiny_config(Task::binary).n_outputs() == 1);
  CHECK(cfg.input_width() ==
        cfg.encoder_dim + static_cast<int>(cfg.features.pos_vocab.size()) +
            static_cast<int>(cfg.features.tok_sdoh_vocab.size()));

  std::string text = model_config_to_json(cfg);
  ModelConfig back = model_config_from_json(text);
  CHECK(model_config_to_json(back) == text);

  ModelConfig bad = cfg;
  bad.kernel_size = 4;
  CHECK_THROWS_AS(validate_model_config(bad), ValidationError);
  bad = cfg;
  bad.conv_channels = {0, 8};
  CHECK_THROWS_AS(validate_model_config(bad), ValidationError);
  bad = cfg;
  bad.thresholds = {0.5, 0.5};  // needs 6 for multilabel
  CHECK_THROWS_AS(validate_model_config(bad), ValidationError);
  bad = cfg;
  bad.thresholds = {0.5, 0.5, 0.5, 0.5, 0.5, 1.5};
  CHECK_THROWS_AS(validate_model_config(bad), ValidationError);
  bad = cfg;
  bad.encoder_id = "mystery";
  CHECK_THROWS_AS(validate_model_config(bad), ValidationError);
  CHECK_THROWS_AS(model_config_from_json("{"), ParseError);
  CHECK_THROWS_AS(model_config_from_json(R"({"variant":"multilabel"})"), ParseError);
}

TEST_CASE("train config defaults per variant") {
  TrainConfig ml = default_train_config(Task::multilabel);
  CHECK(ml.epochs == 40);
  CHECK(ml.learning_rate == 1e-5);
  CHECK(ml.batch_size == 16);
  TrainConfig bin = default_train_config(Task::binary);
  CHECK(bin.learning_rate == 6.5e-6);
  CHECK(bin.epochs == 40);

  std::string text = train_config_to_json(ml);
  TrainConfig back = train_config_from_json(text);
  CHECK(back.epochs == ml.epochs);
  CHECK(back.learning_rate == ml.learning_rate);
  CHECK(back.optimizer == ml.optimizer);
  CHECK_THROWS_AS(train_config_from_json(R"({"epochs":1})"), ParseError);
  CHECK_THROWS_AS(
      train_config_from_json(
          R"({"epochs":1,"learning_rate":0.1,"batch_size":4,"seed":1,"optimizer":"lion"})"),
      ValidationError);
}

TEST_CASE("initialization is seed-deterministic") {
  ModelConfig cfg = probe_config();
  TrainedModel a = init_model(cfg, 11);
  TrainedModel b = init_model(cfg, 11);
  TrainedModel c = init_model(cfg, 12);
  CHECK(a.w1.v == b.w1.v);
  CHECK(a.w2.v == b.w2.v);
  CHECK(a.w_head.v == b.w_head.v);
  CHECK(a.w1.v != c.w1.v);

  CHECK(a.w1.rows == 4);
  CHECK(a.w1.cols == 3 * cfg.input_width());
  CHECK(a.w2.cols == 3 * 4);
  CHECK(a.w_head.rows == 6);
  CHECK(a.config.thresholds == std::vector<double>(6, 0.5));
  CHECK(a.encoder_table.rows == 0);  // hash encoder owns no table

  TrainedModel t = init_model(tiny_config(Task::binary), 5);
  CHECK(t.encoder_table.rows == 128);
  CHECK(t.encoder_table.cols == 16);
  CHECK(t.config.thresholds == std::vector<double>(1, 0.5));
}

TEST_CASE("forward outputs squashed probabilities") {
  TrainedModel m = init_model(probe_config(), 4);
  Matrix x = random_input(5, m.config.input_width(), 9);
  std::vector<double> p = forward_probs(m, x);
  REQUIRE(p.size() == 6);
  for (double v : p) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(forward_probs(m, x) == p);  // inference is pure

  // one-wordpiece input is padded, not rejected
  Matrix one = random_input(1, m.config.input_width(), 10);
  std::vector<double> q = forward_probs(m, one);
  CHECK(q.size() == 6);

  ModelConfig bcfg = probe_config();
  bcfg.variant = Task::binary;
  TrainedModel bm = init_model(bcfg, 4);
  CHECK(forward_probs(bm, x).size() == 1);

  CHECK_THROWS_AS(forward_probs(m, Matrix(3, m.config.input_width() + 1)), ShapeError);
  CHECK_THROWS_AS(forward_probs(m, Matrix(0, m.config.input_width())), ShapeError);
}

TEST_CASE("decide applies per-output thresholds inclusively") {
  std::vector<double> p{0.9, 0.1, 0.1, 0.1, 0.1, 0.7};
  std::vector<double> t(6, 0.5);
  LabelSet s = decide(p, t);
  CHECK(s == LabelSet{SdohLabel::housing, SdohLabel::support});

  CHECK(decide({0.1, 0.1, 0.1, 0.1, 0.1, 0.1}, t).empty());

  // boundary: probability equal to the threshold is included
  CHECK(decide({0.5, 0.1, 0.1, 0.1, 0.1, 0.1}, t).contains(SdohLabel::housing));
  CHECK(decide_binary(0.5, 0.5));
  CHECK_FALSE(decide_binary(0.4999, 0.5));

  // raising the shared threshold never adds labels
  std::vector<double> probs{0.91, 0.13, 0.55, 0.47, 0.62, 0.08};
  int prev = 7;
  for (int step = 1; step <= 19; ++step) {
    double th = step * 0.05;
    int n = decide(probs, std::vector<double>(6, th)).size();
    CHECK(n <= prev);
    prev = n;
  }

  CHECK_THROWS_AS(decide({0.5}, {0.5}), ShapeError);
  CHECK_THROWS_AS(decide(p, {0.5}), ShapeError);
}

TEST_CASE("checkpoint selection takes the earliest argmin") {
  std::vector<EpochStats> curve(5);
  for (int i = 0; i < 5; ++i) curve[static_cast<std::size_t>(i)].epoch = i + 1;
  curve[0].val_loss = 0.9;
  curve[1].val_loss = 0.4;
  curve[2].val_loss = 0.6;
  curve[3].val_loss = 0.4;  // tie with epoch 2
  curve[4].val_loss = 0.5;
  CHECK(select_best_epoch(curve) == 1);

  CHECK(select_best_epoch({EpochStats{1, 0.5, 0.5, 0.0}}) == 0);
  CHECK_THROWS_AS(select_best_epoch({}), ValidationError);
}

TEST_CASE("loss matches naive binary cross-entropy") {
  TrainedModel m = init_model(probe_config(), 21);
  Matrix x = random_input(4, m.config.input_width(), 22);
  std::vector<double> y{1, 0, 0, 1, 0, 1};
  double loss = loss_and_gradients(m, x, y, nullptr);

  std::vector<double> p = forward_probs(m, x);
  double naive = 0;
  for (std::size_t o = 0; o < y.size(); ++o) {
    naive += -(y[o] * std::log(p[o]) + (1 - y[o]) * std::log(1 - p[o]));
  }
  naive /= static_cast<double>(y.size());
  CHECK(loss == doctest::Approx(naive).epsilon(1e-9));

  CHECK_THROWS_AS(loss_and_gradients(m, x, {1, 0}, nullptr), ShapeError);
}

TEST_CASE("analytic gradients match central finite differences") {
  TrainedModel m = init_model(probe_config(), 31);
  Matrix x = random_input(5, m.config.input_width(), 32);
  std::vector<double> y{1, 0, 1, 0, 0, 1};

  ModelGradients g;
  loss_and_gradients(m, x, y, &g);

  const double h = 1e-4;
  auto rel_err = [](double a, double n) {
    double denom = std::max({1e-8, std::abs(a), std::abs(n)});
    return std::abs(a - n) / denom;
  };

  struct ProbeTarget {
    std::vector<double>* param;
    const std::vector<double>* grad;
  };
  TrainedModel probe = m;
  std::vector<ProbeTarget> targets = {
      {&probe.w1.v, &g.w1.v},         {&probe.b1, &g.b1},   {&probe.w2.v, &g.w2.v},
      {&probe.b2, &g.b2},             {&probe.w_head.v, &g.w_head.v},
      {&probe.b_head, &g.b_head},
  };

  sdoh::Rng rng(33);
  int checked = 0;
  for (auto& target : targets) {
    for (int probe_i = 0; probe_i < 5; ++probe_i) {
      std::size_t idx = rng.next_below(target.param->size());
      double saved = (*target.param)[idx];
      (*target.param)[idx] = saved + h;
      double lp = loss_and_gradients(probe, x, y, nullptr);
      (*target.param)[idx] = saved - h;
      double lm = loss_and_gradients(probe, x, y, nullptr);
      (*target.param)[idx] = saved;
      double numeric = (lp - lm) / (2 * h);
      double analytic = (*target.grad)[idx];
      if (std::abs(numeric) < 1e-10 && std::abs(analytic) < 1e-10) continue;
      CHECK(rel_err(analytic, numeric) < 1e-3);
      ++checked;
    }
  }
  CHECK(checked >= 20);

  // input gradient, used for the joint encoder update
  for (int probe_i = 0; probe_i < 8; ++probe_i) {
    std::size_t idx = rng.next_below(x.v.size());
    double saved = x.v[idx];
    x.v[idx] = saved + h;
    double lp = loss_and_gradients(m, x, y, nullptr);
    x.v[idx] = saved - h;
    double lm = loss_and_gradients(m, x, y, nullptr);
    x.v[idx] = saved;
    double numeric = (lp - lm) / (2 * h);
    double analytic = g.d_input.v[idx];
    if (std::abs(numeric) < 1e-10 && std::abs(analytic) < 1e-10) continue;
    CHECK(rel_err(analytic, numeric) < 1e-3);
  }
}

TEST_CASE("training is deterministic and learns a separable corpus") {
  // validation covers every label with in-distribution contexts, so the
  // min-val-loss checkpoint is a converged model rather than an early epoch
  Corpus corpus = separable_corpus(30, 2);
  static const std::vector<std::pair<std::string, SdohLabel>> val_keywords = {
      {"evicted", SdohLabel::housing},      {"bus", SdohLabel::transportation},
      {"married", SdohLabel::relationship}, {"daughter", SdohLabel::parent},
      {"job", SdohLabel::employment},       {"caregiver", SdohLabel::support},
  };
  for (std::size_t i = 0; i < val_keywords.size(); ++i) {
    SentenceRecord rec;
    rec.id = "v" + std::to_string(i);
    rec.text = "plan " + val_keywords[i].first + " review";
    rec.gold.insert(val_keywords[i].second);
    corpus.records.push_back(std::move(rec));
  }
  SplitSpec split = head_split(corpus, 30, 6);
  ModelConfig mcfg = tiny_config(Task::multilabel);
  TrainConfig tcfg;
  tcfg.epochs = 30;
  tcfg.learning_rate = 0.05;
  tcfg.batch_size = 8;
  tcfg.seed = 7;
  StubAnnotator annotator;
  HashEmbedder embedder(mcfg.features.cui_dim);

  TrainedModel m1 = train(corpus, split, mcfg, tcfg, annotator, embedder);
  TrainedModel m2 = train(corpus, split, mcfg, tcfg, annotator, embedder);
  CHECK(m1.w1.v == m2.w1.v);
  CHECK(m1.encoder_table.v == m2.encoder_table.v);
  REQUIRE(m1.curve.size() == 30);
  CHECK(m1.selected_epoch >= 1);
  CHECK(m1.selected_epoch <= 30);

  // the checkpoint rule holds on the recorded curve
  std::size_t best = select_best_epoch(m1.curve);
  CHECK(m1.selected_epoch == static_cast<int>(best) + 1);
  for (const auto& e : m1.curve) {
    CHECK(m1.curve[best].val_loss <= e.val_loss);
  }

  // learning happened
  CHECK(m1.curve.back().train_loss < m1.curve.front().train_loss);

  // and the training set is essentially memorized
  auto annot = std::make_shared<StubAnnotator>();
  auto embed = std::make_shared<HashEmbedder>(mcfg.features.cui_dim);
  Predictor predictor(m1, annot, embed);
  std::vector<LabelSet> gold, pred;
  auto index = corpus.id_index();
  for (const auto& id : split.train) {
    const auto& rec = corpus.records[index.at(id)];
    gold.push_back(rec.gold);
    pred.push_back(predictor.classify(rec.id, rec.text));
  }
  double f1 = score(gold, pred).macro_avg.f1;
  CHECK(f1 >= 0.8);

  // a different seed trains different weights
  TrainConfig other = tcfg;
  other.seed = 8;
  TrainedModel m3 = train(corpus, split, mcfg, other, annotator, embedder);
  CHECK(m1.w1.v != m3.w1.v);
}

TEST_CASE("training rejects bad inputs and diverges loudly") {
  Corpus corpus = separable_corpus(16, 3);
  SplitSpec split = head_split(corpus, 12, 2);
  ModelConfig mcfg = tiny_config(Task::multilabel);
  StubAnnotator annotator;
  HashEmbedder embedder(mcfg.features.cui_dim);

  TrainConfig bad;
  bad.epochs = 0;
  CHECK_THROWS_AS(train(corpus, split, mcfg, bad, annotator, embedder), ValidationError);

  SplitSpec no_val = split;
  no_val.validation.clear();
  TrainConfig ok;
  ok.epochs = 1;
  CHECK_THROWS_AS(train(corpus, no_val, mcfg, ok, annotator, embedder), ValidationError);

  SplitSpec foreign = split;
  foreign.train[0] = "ghost";
  CHECK_THROWS_AS(train(corpus, foreign, mcfg, ok, annotator, embedder), ValidationError);

  TrainConfig explode;
  explode.epochs = 3;
  explode.learning_rate = 1e18;
  explode.optimizer = "sgd";
  explode.batch_size = 4;
  CHECK_THROWS_AS(train(corpus, split, mcfg, explode, annotator, embedder),
                  TrainingDivergedError);
}

TEST_CASE("binary variant trains with one output neuron") {
  Corpus corpus = separable_corpus(24, 4);
  SplitSpec split = head_split(corpus, 18, 3);
  ModelConfig mcfg = tiny_config(Task::binary);
  TrainConfig tcfg;
  tcfg.epochs = 10;
  tcfg.learning_rate = 0.05;
  tcfg.batch_size = 8;
  StubAnnotator annotator;
  HashEmbedder embedder(mcfg.features.cui_dim);
  TrainedModel m = train(corpus, split, mcfg, tcfg, annotator, embedder);
  CHECK(m.w_head.rows == 1);
  CHECK(m.config.thresholds.size() == 1);

  auto annot = std::make_shared<StubAnnotator>();
  auto embed = std::make_shared<HashEmbedder>(mcfg.features.cui_dim);
  Predictor predictor(m, annot, embed);
  bool b = predictor.classify_binary("q", "lost the job");
  (void)b;
  CHECK_THROWS_AS(predictor.classify("q", "lost the job"), ValidationError);
}

TEST_CASE("model bundle round trip") {
  testsup::TempDir tmp("bundle");
  Corpus corpus = separable_corpus(20, 5);
  SplitSpec split = head_split(corpus, 14, 3);
  ModelConfig mcfg = tiny_config(Task::multilabel);
  TrainConfig tcfg;
  tcfg.epochs = 4;
  tcfg.learning_rate = 0.02;
  tcfg.batch_size = 8;
  StubAnnotator annotator;
  HashEmbedder embedder(mcfg.features.cui_dim);
  TrainedModel m = train(corpus, split, mcfg, tcfg, annotator, embedder);

  export_model(m, tmp / "model");
  TrainedModel back = import_model(tmp / "model");
  CHECK(model_config_to_json(back.config) == model_config_to_json(m.config));
  CHECK(back.w1.v == m.w1.v);
  CHECK(back.w2.v == m.w2.v);
  CHECK(back.w_head.v == m.w_head.v);
  CHECK(back.b_head == m.b_head);
  CHECK(back.encoder_table.v == m.encoder_table.v);
  CHECK(back.selected_epoch == m.selected_epoch);
  REQUIRE(back.curve.size() == m.curve.size());
  for (std::size_t i = 0; i < m.curve.size(); ++i) {
    CHECK(back.curve[i].val_loss == doctest::Approx(m.curve[i].val_loss).epsilon(1e-15));
  }

  // identical outputs after reload
  StubAnnotator stub;
  SentenceAnnotation ann = stub.annotate("t", "daughter lost the job");
  auto enc = make_encoder(m);
  Matrix e = enc->encode(ann.wordpieces);
  FeatureMatrix fm = assemble_features(ann, e, m.config.features, embedder);
  std::vector<double> before = forward(m, fm);
  std::vector<double> after = forward(back, fm);
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(after[i] == doctest::Approx(before[i]).epsilon(1e-6));
  }
}

TEST_CASE("model bundle rejects corruption and config drift") {
  testsup::TempDir tmp("corrupt");
  TrainedModel m = init_model(probe_config(), 6);
  m.curve.push_back({1, 0.5, 0.4, 0.2});
  m.selected_epoch = 1;
  export_model(m, tmp / "model");

  CHECK_THROWS_AS(import_model(tmp / "nowhere"), ModelIoError);

  // flip one payload byte: checksum must catch it
  {
    std::string blob = testsup::read_file(tmp / "model" / "weights.bin");
    blob[40] = static_cast<char>(blob[40] ^ 0x40);
    testsup::write_file(tmp / "model" / "weights.bin", blob);
    CHECK_THROWS_AS(import_model(tmp / "model"), ModelIoError);
  }

  export_model(m, tmp / "model");
  {
    std::string blob = testsup::read_file(tmp / "model" / "weights.bin");
    testsup::write_file(tmp / "model" / "weights.bin", blob.substr(0, blob.size() / 2));
    CHECK_THROWS_AS(import_model(tmp / "model"), ModelIoError);
  }

  // config drift: declared shape no longer matches stored tensors
  export_model(m, tmp / "model");
  {
    std::string cfg = testsup::read_file(tmp / "model" / "config.json");
    auto pos = cfg.find("\"encoder_dim\": 8");
    REQUIRE(pos != std::string::npos);
    cfg.replace(pos, 16, "\"encoder_dim\": 12");
    testsup::write_file(tmp / "model" / "config.json", cfg);
    CHECK_THROWS_AS(import_model(tmp / "model"), ModelIoError);
  }

  // version bump is an explicit incompatibility
  export_model(m, tmp / "model");
  {
    std::string cfg = testsup::read_file(tmp / "model" / "config.json");
    auto pos = cfg.find("\"format_version\": 1");
    REQUIRE(pos != std::string::npos);
    cfg.replace(pos, 19, "\"format_version\": 9");
    testsup::write_file(tmp / "model" / "config.json", cfg);
    CHECK_THROWS_AS(import_model(tmp / "model"), ModelIoError);
  }
}

TEST_CASE("tuned thresholds never lose to the defaults on validation") {
  Corpus corpus = separable_corpus(40, 6);
  SplitSpec split = head_split(corpus, 28, 8);
  ModelConfig mcfg = tiny_config(Task::multilabel);
  TrainConfig tcfg;
  tcfg.epochs = 12;
  tcfg.learning_rate = 0.05;
  tcfg.batch_size = 8;
  StubAnnotator annotator;
  HashEmbedder embedder(mcfg.features.cui_dim);
  TrainedModel m = train(corpus, split, mcfg, tcfg, annotator, embedder);

  std::vector<double> tuned = tune_thresholds(m, corpus, split, annotator, embedder);
  REQUIRE(tuned.size() == 6);
  for (double t : tuned) {
    CHECK(t > 0.0);
    CHECK(t < 1.0);
  }

  auto eval_with = [&](const std::vector<double>& thresholds) {
    auto annot = std::make_shared<StubAnnotator>();
    auto embed = std::make_shared<HashEmbedder>(mcfg.features.cui_dim);
    TrainedModel tm = m;
    tm.config.thresholds = thresholds;
    Predictor p(tm, annot, embed);
    std::vector<LabelSet> gold, pred;
    auto index = corpus.id_index();
    for (const auto& id : split.validation) {
      const auto& rec = corpus.records[index.at(id)];
      gold.push_back(rec.gold);
      pred.push_back(p.classify(rec.id, rec.text));
    }
    return score(gold, pred);
  };

  MetricsReport with_default = eval_with(std::vector<double>(6, 0.5));
  MetricsReport with_tuned = eval_with(tuned);
  // 0.5 is in the sweep grid, so per-class F1 can only improve
  for (int i = 0; i < 6; ++i) {
    auto idx = static_cast<std::size_t>(i);
    CHECK(with_tuned.per_label[idx].f1 >= with_default.per_label[idx].f1 - 1e-12);
  }
  CHECK(with_tuned.macro_avg.f1 >= with_default.macro_avg.f1 - 1e-12);

  SplitSpec no_val = split;
  no_val.validation.clear();
  CHECK_THROWS_AS(tune_thresholds(m, corpus, no_val, annotator, embedder), ValidationError);
}

}  // TEST_SUITE
