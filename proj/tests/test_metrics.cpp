#include <doctest.h>

#include <cmath>
#include <vector>

#include "sdoh/errors.hpp"
#include "sdoh/metrics.hpp"
#include "test_support.hpp"

using namespace sdoh;

namespace {

// naive reference scorer, written from the formulas rather than the counts
// machinery, for oracle comparisons
struct RefPrf {
  double p = 0, r = 0, f1 = 0;
};

struct RefScores {
  std::vector<RefPrf> per_class;
  std::vector<long> support;
  RefPrf micro, macro, weighted;
};

RefScores ref_score(const std::vector<LabelSet>& gold, const std::vector<LabelSet>& pred) {
  RefScores out;
  long tp_all = 0, fp_all = 0, fn_all = 0;
  for (int li = 0; li < kNumLabels; ++li) {
    SdohLabel l = kAllLabels[static_cast<std::size_t>(li)];
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t s = 0; s < gold.size(); ++s) {
      bool g = gold[s].contains(l), p = pred[s].contains(l);
      tp += g && p;
      fp += !g && p;
      fn += g && !p;
    }
    RefPrf pc;
    pc.p = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
    pc.r = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
    pc.f1 = 2 * tp + fp + fn > 0 ? 2.0 * double(tp) / double(2 * tp + fp + fn) : 0.0;
    out.per_class.push_back(pc);
    out.support.push_back(tp + fn);
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
  }
  out.micro.p = tp_all + fp_all > 0 ? double(tp_all) / double(tp_all + fp_all) : 0.0;
  out.micro.r = tp_all + fn_all > 0 ? double(tp_all) / double(tp_all + fn_all) : 0.0;
  out.micro.f1 = 2 * tp_all + fp_all + fn_all > 0
                     ? 2.0 * double(tp_all) / double(2 * tp_all + fp_all + fn_all)
                     : 0.0;
  for (const RefPrf& pc : out.per_class) {
    out.macro.p += pc.p / kNumLabels;
    out.macro.r += pc.r / kNumLabels;
    out.macro.f1 += pc.f1 / kNumLabels;
  }
  long total = 0;
  for (long s : out.support) total += s;
  if (total > 0) {
    for (int li = 0; li < kNumLabels; ++li) {
      auto i = static_cast<std::size_t>(li);
      double w = double(out.support[i]) / double(total);
      out.weighted.p += w * out.per_class[i].p;
      out.weighted.r += w * out.per_class[i].r;
      out.weighted.f1 += w * out.per_class[i].f1;
    }
  }
  return out;
}

LabelCounts make_counts(const std::vector<std::array<long, 3>>& tpfpfn) {
  LabelCounts c;
  c.n_classes = static_cast<int>(tpfpfn.size());
  for (std::size_t i = 0; i < tpfpfn.size(); ++i) {
    c.class_names.push_back("c" + std::to_string(i));
    c.tp.push_back(tpfpfn[i][0]);
    c.fp.push_back(tpfpfn[i][1]);
    c.fn.push_back(tpfpfn[i][2]);
    c.support.push_back(tpfpfn[i][0] + tpfpfn[i][2]);
  }
  return c;
}

std::vector<LabelSet> random_sets(int n, sdoh::Rng& rng) {
  std::vector<LabelSet> sets;
  sets.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    sets.push_back(LabelSet::from_mask(static_cast<std::uint8_t>(rng.next_u64() & 0x3f)));
  }
  return sets;
}

MetricsReport fixed_report(double f1) {
  MetricsReport rep;
  rep.micro_avg.f1 = rep.macro_avg.f1 = rep.weighted_avg.f1 = f1;
  rep.micro_avg.precision = rep.macro_avg.precision = rep.weighted_avg.precision = f1;
  rep.micro_avg.recall = rep.macro_avg.recall = rep.weighted_avg.recall = f1;
  return rep;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("counting basics") {
  std::vector<LabelSet> gold{LabelSet{SdohLabel::housing}};
  std::vector<LabelSet> pred{LabelSet{SdohLabel::housing}};
  LabelCounts c = count(gold, pred);
  CHECK(c.n_classes == kNumLabels);
  CHECK(c.tp[0] == 1);
  for (int i = 1; i < kNumLabels; ++i) {
    auto idx = static_cast<std::size_t>(i);
    CHECK(c.tp[idx] == 0);
    CHECK(c.fp[idx] == 0);
    CHECK(c.fn[idx] == 0);
  }

  LabelCounts miss = count(gold, {LabelSet{}});
  CHECK(miss.tp[0] == 0);
  CHECK(miss.fn[0] == 1);

  // support identity
  for (int i = 0; i < c.n_classes; ++i) {
    auto idx = static_cast<std::size_t>(i);
    CHECK(c.support[idx] == c.tp[idx] + c.fn[idx]);
  }

  CHECK_THROWS_AS(count(gold, {}), AlignmentError);
}

TEST_CASE("counts match a nested-loop oracle on random pairs") {
  sdoh::Rng rng(404);
  auto gold = random_sets(100, rng);
  auto pred = random_sets(100, rng);
  LabelCounts c = count(gold, pred);
  for (int li = 0; li < kNumLabels; ++li) {
    SdohLabel l = kAllLabels[static_cast<std::size_t>(li)];
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t s = 0; s < gold.size(); ++s) {
      bool g = gold[s].contains(l), p = pred[s].contains(l);
      if (g && p) ++tp;
      if (!g && p) ++fp;
      if (g && !p) ++fn;
    }
    auto idx = static_cast<std::size_t>(li);
    CHECK(c.tp[idx] == tp);
    CHECK(c.fp[idx] == fp);
    CHECK(c.fn[idx] == fn);
  }
}

TEST_CASE("micro on a hand-countable case") {
  // pooled TP=4, FP=1, FN=2 over two active classes
  LabelCounts c = make_counts({{3, 1, 0}, {1, 0, 2}});
  Prf m = micro(c);
  CHECK(m.precision == doctest::Approx(4.0 / 5.0).epsilon(1e-12));
  CHECK(m.recall == doctest::Approx(4.0 / 6.0).epsilon(1e-12));
  CHECK(m.f1 == doctest::Approx(8.0 / 11.0).epsilon(1e-12));
  CHECK_FALSE(m.degenerate);

  // the same totals reached through real label sets
  using L = SdohLabel;
  std::vector<LabelSet> gold{
      LabelSet{L::housing, L::employment}, LabelSet{L::housing}, LabelSet{L::housing},
      LabelSet{},                          LabelSet{L::employment}, LabelSet{L::employment}};
  std::vector<LabelSet> pred{
      LabelSet{L::housing, L::employment}, LabelSet{L::housing}, LabelSet{L::housing},
      LabelSet{L::housing},                LabelSet{},            LabelSet{}};
  MetricsReport rep = score(gold, pred);
  CHECK(rep.micro_avg.f1 == doctest::Approx(8.0 / 11.0).epsilon(1e-12));
}

TEST_CASE("micro degenerate and perfect cases") {
  LabelCounts zeros = make_counts({{0, 0, 0}, {0, 0, 0}});
  Prf m = micro(zeros);
  CHECK(m.precision == 0.0);
  CHECK(m.recall == 0.0);
  CHECK(m.f1 == 0.0);
  CHECK(m.degenerate);

  LabelCounts perfect = make_counts({{5, 0, 0}, {2, 0, 0}});
  Prf p = micro(perfect);
  CHECK(p.precision == 1.0);
  CHECK(p.recall == 1.0);
  CHECK(p.f1 == 1.0);
  CHECK_FALSE(p.degenerate);
}

TEST_CASE("macro is the mean over all classes") {
  // class 0: perfect; class 1: all wrong
  LabelCounts c = make_counts({{4, 0, 0}, {0, 3, 2}});
  Prf m = macro(c);
  CHECK(m.f1 == doctest::Approx(0.5).epsilon(1e-12));

  // zero-denominator class still divides the mean
  LabelCounts with_empty = make_counts({{4, 0, 0}, {0, 0, 0}});
  Prf e = macro(with_empty);
  CHECK(e.f1 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(e.degenerate);
}

TEST_CASE("weighted average semantics") {
  // supports (9,1), per-class F1 (1.0, 0.0)
  LabelCounts c = make_counts({{9, 0, 0}, {0, 0, 1}});
  Prf w = weighted(c);
  CHECK(w.f1 == doctest::Approx(0.9).epsilon(1e-12));

  // single class collapses weighted = macro = per-class
  LabelCounts single = make_counts({{3, 1, 2}});
  Prf pc = per_class(single, 0);
  CHECK(weighted(single).f1 == doctest::Approx(pc.f1).epsilon(1e-12));
  CHECK(macro(single).f1 == doctest::Approx(pc.f1).epsilon(1e-12));

  // zero total support
  LabelCounts none = make_counts({{0, 2, 0}, {0, 0, 0}});
  Prf z = weighted(none);
  CHECK(z.f1 == 0.0);
  CHECK(z.degenerate);
}

TEST_CASE("weighted equals macro under uniform support") {
  sdoh::Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::array<long, 3>> rows;
    for (int i = 0; i < 4; ++i) {
      long tp = static_cast<long>(rng.next_below(6));
      long fn = 5 - tp;  // support fixed at 5
      long fp = static_cast<long>(rng.next_below(4));
      rows.push_back({tp, fp, fn});
    }
    LabelCounts c = make_counts(rows);
    CHECK(weighted(c).precision == doctest::Approx(macro(c).precision).epsilon(1e-12));
    CHECK(weighted(c).recall == doctest::Approx(macro(c).recall).epsilon(1e-12));
    CHECK(weighted(c).f1 == doctest::Approx(macro(c).f1).epsilon(1e-12));
  }
}

TEST_CASE("micro F1 sits between the active per-class extremes") {
  sdoh::Rng rng(88);
  for (int trial = 0; trial < 25; ++trial) {
    auto gold = random_sets(60, rng);
    auto pred = random_sets(60, rng);
    MetricsReport rep = score(gold, pred);
    double lo = 1.0, hi = 0.0;
    bool active = false;
    LabelCounts c = count(gold, pred);
    for (int i = 0; i < c.n_classes; ++i) {
      auto idx = static_cast<std::size_t>(i);
      if (2 * c.tp[idx] + c.fp[idx] + c.fn[idx] == 0) continue;
      active = true;
      lo = std::min(lo, rep.per_label[idx].f1);
      hi = std::max(hi, rep.per_label[idx].f1);
    }
    if (!active) continue;
    CHECK(rep.micro_avg.f1 >= lo - 1e-12);
    CHECK(rep.micro_avg.f1 <= hi + 1e-12);
  }
}

TEST_CASE("full scorer matches the naive reference to 1e-12") {
  sdoh::Rng rng(991);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 20 + static_cast<int>(rng.next_below(180));
    auto gold = random_sets(n, rng);
    auto pred = random_sets(n, rng);
    MetricsReport rep = score(gold, pred);
    RefScores ref = ref_score(gold, pred);

    for (int i = 0; i < kNumLabels; ++i) {
      auto idx = static_cast<std::size_t>(i);
      CHECK(rep.per_label[idx].precision == doctest::Approx(ref.per_class[idx].p).epsilon(1e-12));
      CHECK(rep.per_label[idx].recall == doctest::Approx(ref.per_class[idx].r).epsilon(1e-12));
      CHECK(rep.per_label[idx].f1 == doctest::Approx(ref.per_class[idx].f1).epsilon(1e-12));
      CHECK(rep.support[idx] == ref.support[idx]);
    }
    CHECK(rep.micro_avg.f1 == doctest::Approx(ref.micro.f1).epsilon(1e-12));
    CHECK(rep.micro_avg.precision == doctest::Approx(ref.micro.p).epsilon(1e-12));
    CHECK(rep.micro_avg.recall == doctest::Approx(ref.micro.r).epsilon(1e-12));
    CHECK(rep.macro_avg.f1 == doctest::Approx(ref.macro.f1).epsilon(1e-12));
    CHECK(rep.macro_avg.precision == doctest::Approx(ref.macro.p).epsilon(1e-12));
    CHECK(rep.macro_avg.recall == doctest::Approx(ref.macro.r).epsilon(1e-12));
    CHECK(rep.weighted_avg.f1 == doctest::Approx(ref.weighted.f1).epsilon(1e-12));
    CHECK(rep.weighted_avg.precision == doctest::Approx(ref.weighted.p).epsilon(1e-12));
    CHECK(rep.weighted_avg.recall == doctest::Approx(ref.weighted.r).epsilon(1e-12));
  }
}

TEST_CASE("binary task is the one-class specialization on set emptiness") {
  sdoh::Rng rng(55);
  auto gold = random_sets(80, rng);
  auto pred = random_sets(80, rng);
  MetricsReport rep = score(gold, pred, Task::binary);
  REQUIRE(rep.n_classes == 1);
  CHECK(rep.class_names[0] == "sdoh");

  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    bool g = gold[i].any(), p = pred[i].any();
    tp += g && p;
    fp += !g && p;
    fn += g && !p;
  }
  double f1 = 2 * tp + fp + fn > 0 ? 2.0 * tp / double(2 * tp + fp + fn) : 0.0;
  CHECK(rep.micro_avg.f1 == doctest::Approx(f1).epsilon(1e-12));
  // with one class every average collapses to the per-class value
  CHECK(rep.macro_avg.f1 == doctest::Approx(f1).epsilon(1e-12));
  CHECK(rep.weighted_avg.f1 == doctest::Approx(f1).epsilon(1e-12));
  CHECK(rep.per_label[0].f1 == doctest::Approx(f1).epsilon(1e-12));
}

TEST_CASE("weights sum to 1 when support exists") {
  sdoh::Rng rng(31);
  auto gold = random_sets(50, rng);
  auto pred = random_sets(50, rng);
  MetricsReport rep = score(gold, pred);
  double sum = 0;
  for (double w : rep.weights) sum += w;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  MetricsReport empty = score({LabelSet{}}, {LabelSet{}});
  for (double w : empty.weights) CHECK(w == 0.0);
}

TEST_CASE("report serialization round trip") {
  sdoh::Rng rng(12);
  auto gold = random_sets(40, rng);
  auto pred = random_sets(40, rng);
  MetricsReport rep = score(gold, pred);

  std::string text = report_to_json(rep);
  MetricsReport back = report_from_json(text);
  CHECK(back.n_classes == rep.n_classes);
  CHECK(back.class_names == rep.class_names);
  CHECK(back.support == rep.support);
  for (int i = 0; i < rep.n_classes; ++i) {
    auto idx = static_cast<std::size_t>(i);
    CHECK(back.per_label[idx].f1 == rep.per_label[idx].f1);
    CHECK(back.weights[idx] == rep.weights[idx]);
  }
  CHECK(back.micro_avg.f1 == rep.micro_avg.f1);
  CHECK(back.macro_avg.f1 == rep.macro_avg.f1);
  CHECK(back.weighted_avg.f1 == rep.weighted_avg.f1);
  CHECK(report_to_json(back) == text);

  CHECK_THROWS_AS(report_from_json("{"), ParseError);

  std::string csv = report_to_csv(rep);
  CHECK(csv.rfind("class,precision,recall,f1,support\n", 0) == 0);
  CHECK(csv.find("\nmicro,") != std::string::npos);
  CHECK(csv.find("\nweighted,") != std::string::npos);

  std::string table = report_to_table(rep);
  CHECK(table.find("precision") != std::string::npos);
  CHECK(table.find("macro") != std::string::npos);
}

TEST_CASE("crossval over a constant runner has zero spread") {
  FoldPlan plan;
  plan.k = 10;
  plan.repeats = 5;
  MetricsReport fixed = fixed_report(0.625);
  int calls = 0;
  CrossvalSummary s = crossval(
      [&](int, int) {
        ++calls;
        return fixed;
      },
      plan);
  CHECK(calls == 50);
  CHECK(s.reports.size() == 50);
  CHECK(s.micro.f1.mean == doctest::Approx(0.625).epsilon(1e-12));
  CHECK(s.micro.f1.stddev == 0.0);
  CHECK(s.macro.f1.stddev == 0.0);
  CHECK(s.weighted.f1.stddev == 0.0);
}

TEST_CASE("crossval visits folds repeat-major and summarizes moments exactly") {
  FoldPlan plan;
  plan.k = 3;
  plan.repeats = 2;
  std::vector<std::pair<int, int>> visits;
  std::vector<double> values{0.2, 0.4, 0.6, 0.3, 0.5, 0.7};
  CrossvalSummary s = crossval(
      [&](int r, int f) {
        visits.emplace_back(r, f);
        return fixed_report(values[visits.size() - 1]);
      },
      plan);
  std::vector<std::pair<int, int>> expected{{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1}, {1, 2}};
  CHECK(visits == expected);

  // independent recomputation of the moments
  double mean = 0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  double stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  CHECK(s.micro.f1.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(s.micro.f1.stddev == doctest::Approx(stddev).epsilon(1e-12));

  std::string text = crossval_to_json(s);
  CHECK(text.find("\"runs\": 6") != std::string::npos);
  CHECK(text.find("\"folds\"") != std::string::npos);
}

TEST_CASE("crossval failures carry fold coordinates") {
  FoldPlan plan;
  plan.k = 4;
  plan.repeats = 2;
  auto runner = [](int r, int f) -> MetricsReport {
    if (r == 1 && f == 2) throw std::runtime_error("boom");
    return fixed_report(0.5);
  };
  for (bool reentrant : {false, true}) {
    try {
      crossval(runner, plan, reentrant);
      FAIL("expected crossval to abort");
    } catch (const Error& e) {
      std::string msg = e.what();
      CHECK(msg.find("repeat 1") != std::string::npos);
      CHECK(msg.find("fold 2") != std::string::npos);
      CHECK(msg.find("boom") != std::string::npos);
    }
  }
}

TEST_CASE("reentrant crossval matches serial execution") {
  FoldPlan plan;
  plan.k = 5;
  plan.repeats = 2;
  auto runner = [](int r, int f) {
    return fixed_report(0.1 * static_cast<double>(r) + 0.05 * static_cast<double>(f));
  };
  CrossvalSummary serial = crossval(runner, plan, false);
  CrossvalSummary parallel = crossval(runner, plan, true);
  CHECK(crossval_to_json(serial) == crossval_to_json(parallel));
}

}  // TEST_SUITE
