#include "sdoh/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sdoh/errors.hpp"
#include "sdoh/util.hpp"

namespace sdoh {

using json = nlohmann::ordered_json;

std::string workload_hash(const std::vector<BenchSentence>& sentences) {
  std::uint64_t h = fnv1a64("");
  for (const auto& s : sentences) {
    h = fnv1a64(s.id.data(), s.id.size(), h);
    h = fnv1a64("\x1f", 1, h);
    h = fnv1a64(s.text.data(), s.text.size(), h);
    h = fnv1a64("\n", 1, h);
  }
  return hex64(h);
}

namespace {

std::string build_fingerprint() {
  std::ostringstream out;
#if defined(__linux__)
  out << "linux";
#elif defined(__APPLE__)
  out << "darwin";
#else
  out << "unknown-os";
#endif
#if defined(__x86_64__)
  out << " x86_64";
#elif defined(__aarch64__)
  out << " aarch64";
#else
  out << " unknown-arch";
#endif
  out << " cores=" << std::thread::hardware_concurrency();
#if defined(__VERSION__)
  out << " compiler=" << __VERSION__;
#endif
  return out.str();
}

double quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  // nearest-rank
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(p * static_cast<double>(sorted.size())));
  if (rank < 1) rank = 1;
  if (rank > sorted.size()) rank = sorted.size();
  return sorted[rank - 1];
}

}  // namespace

LatencyReport bench(const std::string& classifier_id, const BenchClassifier& classifier,
                    const std::vector<BenchSentence>& sentences, int warmup, int repeats) {
  if (sentences.empty()) throw SizingError("benchmark needs at least one sentence");
  if (warmup < 0) throw SizingError("warmup pass count must be non-negative");
  if (repeats < 1) throw SizingError("benchmark needs at least one measured pass");
  if (!classifier) throw ValidationError("benchmark needs a classifier");

  using clock = std::chrono::steady_clock;
  auto run_sentence = [&](std::size_t i) -> double {
    auto start = clock::now();
    try {
      classifier(sentences[i]);
    } catch (const std::exception& e) {
      throw BenchAbortedError("classifier '" + classifier_id + "' failed at sentence " +
                              std::to_string(i) + ": " + e.what(),
                              static_cast<int>(i));
    }
    return std::chrono::duration<double>(clock::now() - start).count();
  };

  for (int w = 0; w < warmup; ++w) {
    for (std::size_t i = 0; i < sentences.size(); ++i) run_sentence(i);
  }

  std::vector<double> durations;
  durations.reserve(sentences.size() * static_cast<std::size_t>(repeats));
  double pass_sum = 0;
  for (int r = 0; r < repeats; ++r) {
    double pass = 0;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      double d = run_sentence(i);
      durations.push_back(d);
      pass += d;
    }
    pass_sum += pass;
  }

  LatencyReport rep;
  rep.classifier_id = classifier_id;
  rep.n_sentences = sentences.size();
  rep.warmup = warmup;
  rep.repeats = repeats;
  rep.total_seconds = pass_sum / static_cast<double>(repeats);
  if (rep.total_seconds > 0) {
    rep.sentences_per_second = static_cast<double>(rep.n_sentences) / rep.total_seconds;
  }
  std::sort(durations.begin(), durations.end());
  rep.p50_seconds = quantile(durations, 0.50);
  rep.p90_seconds = quantile(durations, 0.90);
  rep.p99_seconds = quantile(durations, 0.99);
  rep.workload_hash = workload_hash(sentences);
  rep.fingerprint = build_fingerprint();
  return rep;
}

double speedup(const LatencyReport& a, const LatencyReport& b) {
  if (a.workload_hash != b.workload_hash) {
    throw ComparabilityError("latency reports measured different workloads (" + a.workload_hash +
                             " vs " + b.workload_hash + ")");
  }
  if (b.sentences_per_second <= 0) {
    throw ComparabilityError("reference report has zero throughput");
  }
  return a.sentences_per_second / b.sentences_per_second;
}

std::string latency_report_to_json(const LatencyReport& r) {
  json obj;
  obj["classifier_id"] = r.classifier_id;
  obj["n_sentences"] = r.n_sentences;
  obj["warmup"] = r.warmup;
  obj["repeats"] = r.repeats;
  obj["batch_size"] = r.batch_size;
  obj["total_seconds"] = r.total_seconds;
  obj["sentences_per_second"] = r.sentences_per_second;
  obj["p50_seconds"] = r.p50_seconds;
  obj["p90_seconds"] = r.p90_seconds;
  obj["p99_seconds"] = r.p99_seconds;
  obj["workload_hash"] = r.workload_hash;
  obj["noise_bound"] = r.noise_bound;
  obj["fingerprint"] = r.fingerprint;
  return obj.dump(2) + "\n";
}

LatencyReport latency_report_from_json(const std::string& text) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("latency report: ") + e.what());
  }
  LatencyReport r;
  try {
    r.classifier_id = obj.at("classifier_id").get<std::string>();
    r.n_sentences = obj.at("n_sentences").get<std::size_t>();
    r.warmup = obj.at("warmup").get<int>();
    r.repeats = obj.at("repeats").get<int>();
    r.batch_size = obj.at("batch_size").get<int>();
    r.total_seconds = obj.at("total_seconds").get<double>();
    r.sentences_per_second = obj.at("sentences_per_second").get<double>();
    r.p50_seconds = obj.at("p50_seconds").get<double>();
    r.p90_seconds = obj.at("p90_seconds").get<double>();
    r.p99_seconds = obj.at("p99_seconds").get<double>();
    r.workload_hash = obj.at("workload_hash").get<std::string>();
    r.noise_bound = obj.at("noise_bound").get<double>();
    r.fingerprint = obj.at("fingerprint").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("latency report: ") + e.what());
  }
  return r;
}

void save_latency_report(const LatencyReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write latency report: " + path.string());
  out << latency_report_to_json(r);
}

LatencyReport load_latency_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open latency report: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return latency_report_from_json(buf.str());
}

}  // namespace sdoh
