#include <doctest.h>

#include <chrono>
#include <thread>

#include "sdoh/bench.hpp"
#include "sdoh/errors.hpp"
#include "test_support.hpp"

using namespace sdoh;

namespace {

std::vector<BenchSentence> workload(int n) {
  std::vector<BenchSentence> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({"s" + std::to_string(i), "sentence number " + std::to_string(i)});
  }
  return out;
}

LatencyReport fake_report(const std::string& hash, double sps) {
  LatencyReport r;
  r.classifier_id = "fake";
  r.n_sentences = 10;
  r.repeats = 1;
  r.total_seconds = 10.0 / sps;
  r.sentences_per_second = sps;
  r.workload_hash = hash;
  r.fingerprint = "test";
  return r;
}

}  // namespace

TEST_SUITE("bench") {

TEST_CASE("workload hash pins ids, texts, and order") {
  std::vector<BenchSentence> a = workload(5);
  CHECK(workload_hash(a) == workload_hash(workload(5)));

  std::vector<BenchSentence> reordered = {a[1], a[0], a[2], a[3], a[4]};
  CHECK(workload_hash(a) != workload_hash(reordered));

  std::vector<BenchSentence> retexted = a;
  retexted[2].text += "!";
  CHECK(workload_hash(a) != workload_hash(retexted));

  std::vector<BenchSentence> renamed = a;
  renamed[0].id = "other";
  CHECK(workload_hash(a) != workload_hash(renamed));

  // field boundaries are framed, not concatenated
  std::vector<BenchSentence> ab = {{"ab", ""}};
  std::vector<BenchSentence> a_b = {{"a", "b"}};
  CHECK(workload_hash(ab) != workload_hash(a_b));
}

TEST_CASE("bench drives warmup and measured passes in fixed order") {
  std::vector<BenchSentence> sentences = workload(4);
  std::vector<std::string> visited;
  BenchClassifier classifier = [&](const BenchSentence& s) { visited.push_back(s.id); };

  LatencyReport rep = bench("counting", classifier, sentences, 2, 3);
  CHECK(visited.size() == (2 + 3) * 4);
  for (std::size_t i = 0; i < visited.size(); ++i) {
    CHECK(visited[i] == sentences[i % 4].id);
  }
  CHECK(rep.classifier_id == "counting");
  CHECK(rep.n_sentences == 4);
  CHECK(rep.warmup == 2);
  CHECK(rep.repeats == 3);
  CHECK(rep.batch_size == 1);
  CHECK(rep.total_seconds > 0.0);
  CHECK(rep.sentences_per_second ==
        static_cast<double>(rep.n_sentences) / rep.total_seconds);
  CHECK(rep.workload_hash == workload_hash(sentences));
  CHECK_FALSE(rep.fingerprint.empty());
  CHECK(rep.noise_bound == 0.2);
}

TEST_CASE("throughput of a sleeping classifier lands near the model") {
  // 2ms of mandatory work per sentence caps throughput at 500/s
  BenchClassifier sleeper = [](const BenchSentence&) {
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  };
  LatencyReport rep = bench("sleeper", sleeper, workload(10), 0, 2);
  CHECK(rep.sentences_per_second < 505.0);
  CHECK(rep.sentences_per_second > 250.0);
  CHECK(rep.p50_seconds >= 0.002);
  CHECK(rep.p50_seconds <= rep.p90_seconds);
  CHECK(rep.p90_seconds <= rep.p99_seconds);
}

TEST_CASE("tail percentiles separate a bimodal classifier") {
  // 8 quick sentences and 2 slow ones per pass: p50 stays quick, p90+ catch
  // the slow tail
  std::vector<BenchSentence> sentences = workload(10);
  BenchClassifier bimodal = [](const BenchSentence& s) {
    bool slow = s.id == "s8" || s.id == "s9";
    std::this_thread::sleep_for(std::chrono::microseconds(slow ? 8000 : 200));
  };
  LatencyReport rep = bench("bimodal", bimodal, sentences, 0, 1);
  CHECK(rep.p50_seconds < 0.004);
  CHECK(rep.p90_seconds >= 0.008);
  CHECK(rep.p99_seconds >= rep.p90_seconds);
}

TEST_CASE("bench input validation and abort taxonomy") {
  BenchClassifier noop = [](const BenchSentence&) {};
  CHECK_THROWS_AS(bench("x", noop, {}, 1, 1), SizingError);
  CHECK_THROWS_AS(bench("x", noop, workload(2), -1, 1), SizingError);
  CHECK_THROWS_AS(bench("x", noop, workload(2), 0, 0), SizingError);
  CHECK_THROWS_AS(bench("x", BenchClassifier{}, workload(2), 0, 1), ValidationError);

  BenchClassifier faulty = [](const BenchSentence& s) {
    if (s.id == "s2") throw std::runtime_error("adapter exploded");
  };
  try {
    bench("faulty", faulty, workload(4), 0, 1);
    FAIL("expected BenchAbortedError");
  } catch (const BenchAbortedError& e) {
    CHECK(e.sentence_index() == 2);
    CHECK(std::string(e.what()).find("faulty") != std::string::npos);
    CHECK(std::string(e.what()).find("adapter exploded") != std::string::npos);
  }

  // a warmup-phase failure aborts just the same
  int calls = 0;
  BenchClassifier first_call_fails = [&](const BenchSentence&) {
    if (calls++ == 0) throw std::runtime_error("cold start");
  };
  CHECK_THROWS_AS(bench("cold", first_call_fails, workload(3), 1, 1), BenchAbortedError);
}

TEST_CASE("speedup refuses incomparable reports") {
  LatencyReport fast = fake_report("deadbeef", 100.0);
  LatencyReport slow = fake_report("deadbeef", 25.0);
  CHECK(speedup(fast, slow) == doctest::Approx(4.0));
  CHECK(speedup(slow, fast) == doctest::Approx(0.25));

  LatencyReport other = fake_report("cafef00d", 50.0);
  CHECK_THROWS_AS(speedup(fast, other), ComparabilityError);

  LatencyReport stalled = fake_report("deadbeef", 100.0);
  stalled.sentences_per_second = 0.0;
  CHECK_THROWS_AS(speedup(fast, stalled), ComparabilityError);
}

TEST_CASE("latency report serialization round trips") {
  LatencyReport rep = bench("noop", [](const BenchSentence&) {}, workload(3), 1, 2);
  std::string text = latency_report_to_json(rep);
  LatencyReport back = latency_report_from_json(text);
  CHECK(latency_report_to_json(back) == text);
  CHECK(back.classifier_id == rep.classifier_id);
  CHECK(back.n_sentences == rep.n_sentences);
  CHECK(back.total_seconds == rep.total_seconds);
  CHECK(back.p99_seconds == rep.p99_seconds);
  CHECK(back.workload_hash == rep.workload_hash);
  CHECK(back.noise_bound == rep.noise_bound);
  CHECK(back.fingerprint == rep.fingerprint);

  testsup::TempDir tmp("bench");
  save_latency_report(rep, tmp / "report.json");
  LatencyReport loaded = load_latency_report(tmp / "report.json");
  CHECK(latency_report_to_json(loaded) == text);

  CHECK_THROWS_AS(latency_report_from_json("{"), ParseError);
  CHECK_THROWS_AS(latency_report_from_json(R"({"classifier_id":"x"})"), ParseError);
  CHECK_THROWS_AS(load_latency_report(tmp / "absent.json"), ParseError);
}

}  // TEST_SUITE
