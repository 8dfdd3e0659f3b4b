#include "sdoh/metrics.hpp"

#include <cmath>
#include <future>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "sdoh/errors.hpp"

namespace sdoh {

using json = nlohmann::ordered_json;

std::string to_string(Task task) {
  return task == Task::multilabel ? "multilabel" : "binary";
}

Task task_from_string(const std::string& s) {
  if (s == "multilabel") return Task::multilabel;
  if (s == "binary") return Task::binary;
  throw ValidationError("unknown task '" + s + "' (expected multilabel or binary)");
}

long LabelCounts::tp_total() const {
  long t = 0;
  for (long v : tp) t += v;
  return t;
}

long LabelCounts::fp_total() const {
  long t = 0;
  for (long v : fp) t += v;
  return t;
}

long LabelCounts::fn_total() const {
  long t = 0;
  for (long v : fn) t += v;
  return t;
}

long LabelCounts::support_total() const {
  long t = 0;
  for (long v : support) t += v;
  return t;
}

LabelCounts count(const std::vector<LabelSet>& gold, const std::vector<LabelSet>& pred,
                  Task task) {
  if (gold.size() != pred.size()) {
    throw AlignmentError("gold has " + std::to_string(gold.size()) + " sentences but pred has " +
                         std::to_string(pred.size()));
  }
  LabelCounts c;
  if (task == Task::multilabel) {
    c.n_classes = kNumLabels;
    for (SdohLabel l : kAllLabels) c.class_names.push_back(to_string(l));
  } else {
    c.n_classes = 1;
    c.class_names = {"sdoh"};
  }
  c.tp.assign(static_cast<std::size_t>(c.n_classes), 0);
  c.fp.assign(static_cast<std::size_t>(c.n_classes), 0);
  c.fn.assign(static_cast<std::size_t>(c.n_classes), 0);

  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (task == Task::multilabel) {
      for (int i = 0; i < kNumLabels; ++i) {
        SdohLabel l = kAllLabels[static_cast<std::size_t>(i)];
        bool g = gold[s].contains(l);
        bool p = pred[s].contains(l);
        if (g && p) ++c.tp[static_cast<std::size_t>(i)];
        else if (p) ++c.fp[static_cast<std::size_t>(i)];
        else if (g) ++c.fn[static_cast<std::size_t>(i)];
      }
    } else {
      bool g = gold[s].any();
      bool p = pred[s].any();
      if (g && p) ++c.tp[0];
      else if (p) ++c.fp[0];
      else if (g) ++c.fn[0];
    }
  }

  c.support.resize(static_cast<std::size_t>(c.n_classes));
  for (int i = 0; i < c.n_classes; ++i) {
    c.support[static_cast<std::size_t>(i)] =
        c.tp[static_cast<std::size_t>(i)] + c.fn[static_cast<std::size_t>(i)];
  }
  return c;
}

namespace {

double ratio(long num, long den, bool& degenerate) {
  if (den == 0) {
    degenerate = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Prf per_class(const LabelCounts& c, int i) {
  auto idx = static_cast<std::size_t>(i);
  Prf r;
  r.precision = ratio(c.tp[idx], c.tp[idx] + c.fp[idx], r.degenerate);
  r.recall = ratio(c.tp[idx], c.tp[idx] + c.fn[idx], r.degenerate);
  r.f1 = ratio(2 * c.tp[idx], 2 * c.tp[idx] + c.fp[idx] + c.fn[idx], r.degenerate);
  return r;
}

Prf micro(const LabelCounts& c) {
  Prf r;
  long tp = c.tp_total(), fp = c.fp_total(), fn = c.fn_total();
  r.precision = ratio(tp, tp + fp, r.degenerate);
  r.recall = ratio(tp, tp + fn, r.degenerate);
  r.f1 = ratio(2 * tp, 2 * tp + fp + fn, r.degenerate);
  return r;
}

Prf macro(const LabelCounts& c) {
  Prf r;
  if (c.n_classes < 1) {
    r.degenerate = true;
    return r;
  }
  for (int i = 0; i < c.n_classes; ++i) {
    Prf pc = per_class(c, i);
    r.precision += pc.precision;
    r.recall += pc.recall;
    r.f1 += pc.f1;  // mean of per-class harmonic F1, not harmonic of means
    if (pc.degenerate) r.degenerate = true;
  }
  double n = static_cast<double>(c.n_classes);
  r.precision /= n;
  r.recall /= n;
  r.f1 /= n;
  return r;
}

Prf weighted(const LabelCounts& c) {
  Prf r;
  long total = c.support_total();
  if (total == 0) {
    r.degenerate = true;
    return r;
  }
  for (int i = 0; i < c.n_classes; ++i) {
    long sup = c.support[static_cast<std::size_t>(i)];
    if (sup == 0) continue;  // zero-support classes excluded
    double w = static_cast<double>(sup) / static_cast<double>(total);
    Prf pc = per_class(c, i);
    r.precision += w * pc.precision;
    r.recall += w * pc.recall;
    r.f1 += w * pc.f1;
    if (pc.degenerate) r.degenerate = true;
  }
  return r;
}

MetricsReport score_counts(const LabelCounts& c, Task task) {
  MetricsReport rep;
  rep.task = task;
  rep.n_classes = c.n_classes;
  rep.class_names = c.class_names;
  rep.support = c.support;
  long total = c.support_total();
  rep.weights.resize(static_cast<std::size_t>(c.n_classes), 0.0);
  for (int i = 0; i < c.n_classes; ++i) {
    if (total > 0) {
      rep.weights[static_cast<std::size_t>(i)] =
          static_cast<double>(c.support[static_cast<std::size_t>(i)]) / static_cast<double>(total);
    }
  }
  for (int i = 0; i < c.n_classes; ++i) rep.per_label.push_back(per_class(c, i));
  rep.micro_avg = micro(c);
  rep.macro_avg = macro(c);
  rep.weighted_avg = weighted(c);
  return rep;
}

MetricsReport score(const std::vector<LabelSet>& gold, const std::vector<LabelSet>& pred,
                    Task task) {
  return score_counts(count(gold, pred, task), task);
}

namespace {

json prf_to_json(const Prf& p) {
  json obj;
  obj["precision"] = p.precision;
  obj["recall"] = p.recall;
  obj["f1"] = p.f1;
  obj["degenerate"] = p.degenerate;
  return obj;
}

Prf prf_from_json(const json& obj) {
  Prf p;
  p.precision = obj.at("precision").get<double>();
  p.recall = obj.at("recall").get<double>();
  p.f1 = obj.at("f1").get<double>();
  p.degenerate = obj.at("degenerate").get<bool>();
  return p;
}

}  // namespace

std::string report_to_json(const MetricsReport& r) {
  json obj;
  obj["task"] = to_string(r.task);
  obj["n_classes"] = r.n_classes;
  json per_label = json::object();
  for (int i = 0; i < r.n_classes; ++i) {
    auto idx = static_cast<std::size_t>(i);
    json cls = prf_to_json(r.per_label[idx]);
    cls["support"] = r.support[idx];
    cls["weight"] = r.weights[idx];
    per_label[r.class_names[idx]] = std::move(cls);
  }
  obj["per_label"] = std::move(per_label);
  obj["micro"] = prf_to_json(r.micro_avg);
  obj["macro"] = prf_to_json(r.macro_avg);
  obj["weighted"] = prf_to_json(r.weighted_avg);
  return obj.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("metrics report: ") + e.what());
  }
  MetricsReport r;
  try {
    r.task = task_from_string(obj.at("task").get<std::string>());
    r.n_classes = obj.at("n_classes").get<int>();
    for (const auto& [name, cls] : obj.at("per_label").items()) {
      r.class_names.push_back(name);
      r.per_label.push_back(prf_from_json(cls));
      r.support.push_back(cls.at("support").get<long>());
      r.weights.push_back(cls.at("weight").get<double>());
    }
    r.micro_avg = prf_from_json(obj.at("micro"));
    r.macro_avg = prf_from_json(obj.at("macro"));
    r.weighted_avg = prf_from_json(obj.at("weighted"));
  } catch (const json::exception& e) {
    throw ParseError(std::string("metrics report: ") + e.what());
  }
  return r;
}

namespace {

std::string fmt(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << v;
  return out.str();
}

}  // namespace

std::string report_to_csv(const MetricsReport& r) {
  std::ostringstream out;
  out << "class,precision,recall,f1,support\n";
  for (int i = 0; i < r.n_classes; ++i) {
    auto idx = static_cast<std::size_t>(i);
    const Prf& p = r.per_label[idx];
    out << r.class_names[idx] << ',' << fmt(p.precision) << ',' << fmt(p.recall) << ','
        << fmt(p.f1) << ',' << r.support[idx] << '\n';
  }
  long total = 0;
  for (long s : r.support) total += s;
  out << "micro," << fmt(r.micro_avg.precision) << ',' << fmt(r.micro_avg.recall) << ','
      << fmt(r.micro_avg.f1) << ',' << total << '\n';
  out << "macro," << fmt(r.macro_avg.precision) << ',' << fmt(r.macro_avg.recall) << ','
      << fmt(r.macro_avg.f1) << ',' << total << '\n';
  out << "weighted," << fmt(r.weighted_avg.precision) << ',' << fmt(r.weighted_avg.recall) << ','
      << fmt(r.weighted_avg.f1) << ',' << total << '\n';
  return out.str();
}

std::string report_to_table(const MetricsReport& r) {
  std::size_t name_w = 8;  // fits "weighted"
  for (const auto& n : r.class_names) name_w = std::max(name_w, n.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_w + 2)) << "class" << std::right
      << std::setw(10) << "precision" << std::setw(10) << "recall" << std::setw(10) << "f1"
      << std::setw(10) << "support" << '\n';
  auto row = [&](const std::string& name, const Prf& p, long support) {
    out << std::left << std::setw(static_cast<int>(name_w + 2)) << name << std::right
        << std::setw(10) << fmt(p.precision) << std::setw(10) << fmt(p.recall) << std::setw(10)
        << fmt(p.f1) << std::setw(10) << support << '\n';
  };
  long total = 0;
  for (long s : r.support) total += s;
  for (int i = 0; i < r.n_classes; ++i) {
    auto idx = static_cast<std::size_t>(i);
    row(r.class_names[idx], r.per_label[idx], r.support[idx]);
  }
  row("micro", r.micro_avg, total);
  row("macro", r.macro_avg, total);
  row("weighted", r.weighted_avg, total);
  return out.str();
}

namespace {

MetricMoments moments(const std::vector<double>& xs) {
  MetricMoments m;
  if (xs.empty()) return m;
  double sum = 0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return m;
  double ss = 0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return m;
}

AggregateMoments aggregate_moments(const std::vector<MetricsReport>& reports,
                                   const Prf MetricsReport::* member) {
  std::vector<double> p, r, f;
  p.reserve(reports.size());
  r.reserve(reports.size());
  f.reserve(reports.size());
  for (const auto& rep : reports) {
    p.push_back((rep.*member).precision);
    r.push_back((rep.*member).recall);
    f.push_back((rep.*member).f1);
  }
  AggregateMoments a;
  a.precision = moments(p);
  a.recall = moments(r);
  a.f1 = moments(f);
  return a;
}

}  // namespace

CrossvalSummary crossval(const FoldRunner& runner, const FoldPlan& plan, bool reentrant) {
  CrossvalSummary s;
  s.k = plan.k;
  s.repeats = plan.repeats;
  s.reports.reserve(static_cast<std::size_t>(plan.k) * static_cast<std::size_t>(plan.repeats));

  for (int r = 0; r < plan.repeats; ++r) {
    if (reentrant) {
      std::vector<std::future<MetricsReport>> futures;
      futures.reserve(static_cast<std::size_t>(plan.k));
      for (int f = 0; f < plan.k; ++f) {
        futures.push_back(std::async(std::launch::async, runner, r, f));
      }
      for (int f = 0; f < plan.k; ++f) {
        try {
          s.reports.push_back(futures[static_cast<std::size_t>(f)].get());
        } catch (const std::exception& e) {
          // drain remaining futures so the repeat's threads finish
          for (int g = f + 1; g < plan.k; ++g) {
            try {
              futures[static_cast<std::size_t>(g)].wait();
            } catch (...) {
            }
          }
          throw Error("crossval failed at repeat " + std::to_string(r) + " fold " +
                      std::to_string(f) + ": " + e.what());
        }
      }
    } else {
      for (int f = 0; f < plan.k; ++f) {
        try {
          s.reports.push_back(runner(r, f));
        } catch (const std::exception& e) {
          throw Error("crossval failed at repeat " + std::to_string(r) + " fold " +
                      std::to_string(f) + ": " + e.what());
        }
      }
    }
  }

  s.micro = aggregate_moments(s.reports, &MetricsReport::micro_avg);
  s.macro = aggregate_moments(s.reports, &MetricsReport::macro_avg);
  s.weighted = aggregate_moments(s.reports, &MetricsReport::weighted_avg);
  return s;
}

namespace {

json moments_to_json(const AggregateMoments& a) {
  json obj;
  obj["precision"] = {{"mean", a.precision.mean}, {"stddev", a.precision.stddev}};
  obj["recall"] = {{"mean", a.recall.mean}, {"stddev", a.recall.stddev}};
  obj["f1"] = {{"mean", a.f1.mean}, {"stddev", a.f1.stddev}};
  return obj;
}

}  // namespace

std::string crossval_to_json(const CrossvalSummary& s) {
  json obj;
  obj["k"] = s.k;
  obj["repeats"] = s.repeats;
  obj["runs"] = s.reports.size();
  obj["micro"] = moments_to_json(s.micro);
  obj["macro"] = moments_to_json(s.macro);
  obj["weighted"] = moments_to_json(s.weighted);
  json folds = json::array();
  for (std::size_t i = 0; i < s.reports.size(); ++i) {
    const auto& rep = s.reports[i];
    json cell;
    cell["repeat"] = s.k > 0 ? static_cast<int>(i) / s.k : 0;
    cell["fold"] = s.k > 0 ? static_cast<int>(i) % s.k : 0;
    cell["micro_f1"] = rep.micro_avg.f1;
    cell["macro_f1"] = rep.macro_avg.f1;
    cell["weighted_f1"] = rep.weighted_avg.f1;
    folds.push_back(std::move(cell));
  }
  obj["folds"] = std::move(folds);
  return obj.dump(2) + "\n";
}

}  // namespace sdoh
