#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace sdoh {

struct BenchSentence {
  std::string id;
  std::string text;
};

// Whatever work the classifier does per sentence (feature extraction, prompt
// render, network round trip) is inside the timed region.
using BenchClassifier = std::function<void(const BenchSentence&)>;

struct LatencyReport {
  std::string classifier_id;
  std::size_t n_sentences = 0;
  int warmup = 0;
  int repeats = 0;
  int batch_size = 1;  // single-stream measurement
  double total_seconds = 0.0;  // mean measured pass duration
  double sentences_per_second = 0.0;  // n_sentences / total_seconds
  double p50_seconds = 0.0;
  double p90_seconds = 0.0;
  double p99_seconds = 0.0;
  std::string workload_hash;  // sentence-list fingerprint for comparability
  double noise_bound = 0.2;   // declared run-to-run throughput tolerance
  std::string fingerprint;    // build/hardware self-description
};

std::string workload_hash(const std::vector<BenchSentence>& sentences);

// Runs `warmup` unmeasured passes then `repeats` measured passes over the
// sentences in fixed order on a monotonic clock. A classifier exception
// aborts with the failing sentence index (BenchAbortedError).
LatencyReport bench(const std::string& classifier_id, const BenchClassifier& classifier,
                    const std::vector<BenchSentence>& sentences, int warmup = 3, int repeats = 5);

// a.sentences_per_second / b.sentences_per_second; refuses reports whose
// workload hashes differ (ComparabilityError).
double speedup(const LatencyReport& a, const LatencyReport& b);

std::string latency_report_to_json(const LatencyReport& r);
LatencyReport latency_report_from_json(const std::string& text);
void save_latency_report(const LatencyReport& r, const std::filesystem::path& path);
LatencyReport load_latency_report(const std::filesystem::path& path);

}  // namespace sdoh
