#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sdoh/dataset.hpp"
#include "sdoh/metrics.hpp"
#include "sdoh/model.hpp"
#include "sdoh/twostep.hpp"

namespace sdoh {

struct CorpusInput {
  std::string path;
  SourceTag source = SourceTag::base;
};

struct FoldPlanSpec {
  int k = 10;
  int repeats = 5;
  std::uint64_t seed = 29;
};

// Everything needed to re-run an experiment byte-identically lives in here
// and is embedded into the output directory.
struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<CorpusInput> corpora;
  std::uint64_t split_seed = 13;
  std::array<double, 3> fractions{0.6, 0.2, 0.2};
  ModelConfig model;
  TrainConfig training;
  bool with_cascade = false;
  std::optional<TrainConfig> gate_training;  // defaults to `training` with the binary lr
  std::optional<FoldPlanSpec> foldplan;
  std::string output_dir;
};

std::string experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct ExperimentResult {
  std::filesystem::path dir;
  MetricsReport test_report;
  std::optional<CrossvalSummary> crossval_summary;
  std::optional<MetricsReport> cascade_report;
};

// split -> train -> eval (-> optional CV, optional cascade eval); writes
// manifests, a model bundle, metric reports, and a provenance table into
// cfg.output_dir. Timing data goes to separate latency files so the metrics
// reports are byte-stable across reruns.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Trains one model per (repeat, fold): the held-out fold is scored, fold
// (fold+1) mod k serves as the validation split, the rest train.
CrossvalSummary run_crossval(const Corpus& corpus, const FoldPlan& plan, const ModelConfig& mcfg,
                             const TrainConfig& tcfg);

struct AblationCell {
  std::string feature_set;
  std::vector<EpochStats> curve;
  int selected_epoch = 0;
  double test_macro_f1 = 0.0;
  std::string error;  // non-empty when this cell failed; sweep continues
};

struct AblationResult {
  std::filesystem::path dir;
  std::vector<AblationCell> cells;
};

// One model per feature set on identical split/seed; emits a long-format
// CSV (feature_set, epoch, val_macro_f1), per-set test scores, and an SVG
// of the curves with test markers.
AblationResult run_ablation(const ExperimentConfig& cfg,
                            const std::vector<std::string>& feature_sets);

}  // namespace sdoh
