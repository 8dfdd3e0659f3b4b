#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sdoh/labels.hpp"
#include "sdoh/stratify.hpp"

namespace sdoh {

// Which scoring view to take of a LabelSet pair. The binary task treats
// membership as "gold/pred set is non-empty" and scores one class.
enum class Task { multilabel, binary };

std::string to_string(Task task);
Task task_from_string(const std::string& s);

struct LabelCounts {
  int n_classes = 0;
  std::vector<long> tp, fp, fn;
  std::vector<long> support;  // tp[i] + fn[i]
  std::vector<std::string> class_names;

  long tp_total() const;
  long fp_total() const;
  long fn_total() const;
  long support_total() const;
};

// Per-index comparison of gold vs predicted label sets.
// Throws AlignmentError on length mismatch.
LabelCounts count(const std::vector<LabelSet>& gold, const std::vector<LabelSet>& pred,
                  Task task = Task::multilabel);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // true when any contributing denominator was zero and the value was
  // pinned to 0 by convention
  bool degenerate = false;
};

Prf per_class(const LabelCounts& c, int i);
Prf micro(const LabelCounts& c);
Prf macro(const LabelCounts& c);
Prf weighted(const LabelCounts& c);

struct MetricsReport {
  Task task = Task::multilabel;
  int n_classes = 0;
  std::vector<std::string> class_names;
  std::vector<long> support;
  std::vector<double> weights;  // support_i / total support, 0 if no support anywhere
  std::vector<Prf> per_label;
  Prf micro_avg, macro_avg, weighted_avg;
};

MetricsReport score_counts(const LabelCounts& c, Task task);
MetricsReport score(const std::vector<LabelSet>& gold, const std::vector<LabelSet>& pred,
                    Task task = Task::multilabel);

std::string report_to_json(const MetricsReport& r);
MetricsReport report_from_json(const std::string& text);
std::string report_to_csv(const MetricsReport& r);
std::string report_to_table(const MetricsReport& r);

// Cross-validation statistics over a fold plan. The runner trains on all
// folds but (repeat, fold) and evaluates on the held-out fold.
using FoldRunner = std::function<MetricsReport(int repeat, int fold)>;

struct MetricMoments {
  double mean = 0.0;
  double stddev = 0.0;  // sample estimator, n-1 denominator; 0 when n < 2
};

struct AggregateMoments {
  MetricMoments precision, recall, f1;
};

struct CrossvalSummary {
  int k = 0;
  int repeats = 0;
  std::vector<MetricsReport> reports;  // repeat-major, fold-minor
  AggregateMoments micro, macro, weighted;
};

// Runs the runner once per (repeat, fold); a throwing runner aborts the whole
// run with the fold coordinates in the message. With reentrant=true the folds
// of each repeat may run concurrently; results and failure order stay
// deterministic.
CrossvalSummary crossval(const FoldRunner& runner, const FoldPlan& plan, bool reentrant = false);

std::string crossval_to_json(const CrossvalSummary& s);

}  // namespace sdoh
