#include "sdoh/stratify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sdoh/errors.hpp"
#include "sdoh/util.hpp"

namespace sdoh {

using json = nlohmann::ordered_json;

namespace {

// labels 0..5 plus a virtual stratum for empty-gold records
constexpr int kStrata = kNumLabels + 1;
constexpr int kEmptyStratum = kNumLabels;

std::vector<int> record_strata(const SentenceRecord& rec) {
  std::vector<int> strata;
  for (SdohLabel l : rec.gold.labels()) strata.push_back(static_cast<int>(l));
  if (strata.empty()) strata.push_back(kEmptyStratum);
  return strata;
}

void check_fractions(const std::vector<double>& fractions, std::size_t n) {
  if (fractions.size() < 2) throw SizingError("need at least two subsets");
  double sum = 0;
  for (double f : fractions) {
    if (f <= 0) throw SizingError("fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw SizingError("fractions must sum to 1 (got " + std::to_string(sum) + ")");
  }
  for (double f : fractions) {
    if (f * static_cast<double>(n) < 1.0) {
      throw SizingError("corpus of " + std::to_string(n) +
                        " records is too small for fraction " + std::to_string(f));
    }
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t s = seed ^ fnv1a64(tag);
  return splitmix64_next(s);
}

}  // namespace

std::vector<std::vector<std::size_t>> iterative_stratification(
    const Corpus& corpus, const std::vector<double>& fractions, std::uint64_t seed) {
  const std::size_t n = corpus.size();
  const int n_subsets = static_cast<int>(fractions.size());
  check_fractions(fractions, n);

  std::vector<std::vector<int>> strata_of(n);
  std::array<long, kStrata> remaining{};
  for (std::size_t i = 0; i < n; ++i) {
    strata_of[i] = record_strata(corpus.records[i]);
    for (int s : strata_of[i]) ++remaining[static_cast<std::size_t>(s)];
  }

  // desired[j][s]: how many stratum-s examples subset j still wants
  std::vector<std::array<double, kStrata>> desired(static_cast<std::size_t>(n_subsets));
  std::vector<double> overall(static_cast<std::size_t>(n_subsets));
  for (int j = 0; j < n_subsets; ++j) {
    overall[static_cast<std::size_t>(j)] = fractions[static_cast<std::size_t>(j)] * static_cast<double>(n);
    for (int s = 0; s < kStrata; ++s) {
      desired[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)] =
          fractions[static_cast<std::size_t>(j)] * static_cast<double>(remaining[static_cast<std::size_t>(s)]);
    }
  }

  Rng rng(derive_seed(seed, "iterative-stratification"));
  std::vector<int> subset_of(n, -1);
  std::size_t unassigned = n;

  while (unassigned > 0) {
    // stratum with the fewest remaining unassigned examples (at least one)
    long best = -1;
    std::vector<int> tied;
    for (int s = 0; s < kStrata; ++s) {
      long r = remaining[static_cast<std::size_t>(s)];
      if (r <= 0) continue;
      if (best < 0 || r < best) {
        best = r;
        tied = {s};
      } else if (r == best) {
        tied.push_back(s);
      }
    }
    const int stratum = tied.size() == 1
                            ? tied[0]
                            : tied[static_cast<std::size_t>(rng.next_below(tied.size()))];

    for (std::size_t i = 0; i < n; ++i) {
      if (subset_of[i] >= 0) continue;
      bool has = std::find(strata_of[i].begin(), strata_of[i].end(), stratum) != strata_of[i].end();
      if (!has) continue;

      // subset wanting this stratum the most, then most room overall
      std::vector<int> cand;
      double best_desired = 0;
      for (int j = 0; j < n_subsets; ++j) {
        double d = desired[static_cast<std::size_t>(j)][static_cast<std::size_t>(stratum)];
        if (cand.empty() || d > best_desired) {
          best_desired = d;
          cand = {j};
        } else if (d == best_desired) {
          cand.push_back(j);
        }
      }
      if (cand.size() > 1) {
        std::vector<int> cand2;
        double best_overall = 0;
        for (int j : cand) {
          double o = overall[static_cast<std::size_t>(j)];
          if (cand2.empty() || o > best_overall) {
            best_overall = o;
            cand2 = {j};
          } else if (o == best_overall) {
            cand2.push_back(j);
          }
        }
        cand = std::move(cand2);
      }
      const int subset = cand.size() == 1
                             ? cand[0]
                             : cand[static_cast<std::size_t>(rng.next_below(cand.size()))];

      subset_of[i] = subset;
      --unassigned;
      overall[static_cast<std::size_t>(subset)] -= 1.0;
      for (int s : strata_of[i]) {
        --remaining[static_cast<std::size_t>(s)];
        desired[static_cast<std::size_t>(subset)][static_cast<std::size_t>(s)] -= 1.0;
      }
    }
  }

  std::vector<std::vector<std::size_t>> subsets(static_cast<std::size_t>(n_subsets));
  for (std::size_t i = 0; i < n; ++i) {
    subsets[static_cast<std::size_t>(subset_of[i])].push_back(i);
  }
  return subsets;
}

SplitSpec stratified_split(const Corpus& corpus, const std::array<double, 3>& fractions,
                           std::uint64_t seed) {
  check_fractions({fractions[0], fractions[1], fractions[2]}, corpus.size());

  const double trainval_frac = fractions[0] + fractions[1];
  auto stage1 = iterative_stratification(corpus, {trainval_frac, fractions[2]},
                                         derive_seed(seed, "split-stage1"));

  Corpus trainval;
  trainval.name = corpus.name;
  trainval.records.reserve(stage1[0].size());
  for (std::size_t idx : stage1[0]) trainval.records.push_back(corpus.records[idx]);

  auto stage2 = iterative_stratification(
      trainval, {fractions[0] / trainval_frac, fractions[1] / trainval_frac},
      derive_seed(seed, "split-stage2"));

  SplitSpec split;
  split.seed = seed;
  split.fractions = fractions;
  for (std::size_t idx : stage2[0]) split.train.push_back(trainval.records[idx].id);
  for (std::size_t idx : stage2[1]) split.validation.push_back(trainval.records[idx].id);
  for (std::size_t idx : stage1[1]) split.test.push_back(corpus.records[idx].id);
  return split;
}

FoldPlan make_fold_plan(const Corpus& corpus, int k, int repeats, std::uint64_t seed) {
  if (k < 2) throw SizingError("fold count must be at least 2");
  if (repeats < 1) throw SizingError("repeat count must be at least 1");
  if (static_cast<std::size_t>(k) > corpus.size()) {
    throw SizingError("fold count " + std::to_string(k) + " exceeds corpus size " +
                      std::to_string(corpus.size()));
  }

  FoldPlan plan;
  plan.k = k;
  plan.repeats = repeats;
  plan.seed = seed;
  std::vector<double> fractions(static_cast<std::size_t>(k), 1.0 / static_cast<double>(k));
  for (int r = 0; r < repeats; ++r) {
    auto subsets = iterative_stratification(
        corpus, fractions, derive_seed(seed, "repeat-" + std::to_string(r)));
    std::vector<std::vector<std::string>> folds;
    folds.reserve(subsets.size());
    for (const auto& subset : subsets) {
      std::vector<std::string> ids;
      ids.reserve(subset.size());
      for (std::size_t idx : subset) ids.push_back(corpus.records[idx].id);
      folds.push_back(std::move(ids));
    }
    plan.held_out.push_back(std::move(folds));
  }
  return plan;
}

namespace {

void check_partition(const Corpus& corpus, const std::vector<const std::vector<std::string>*>& parts,
                     const std::string& what) {
  std::set<std::string> seen;
  std::size_t total = 0;
  for (const auto* part : parts) {
    for (const auto& id : *part) {
      ++total;
      if (!seen.insert(id).second) {
        throw ValidationError(what + ": id '" + id + "' appears in more than one subset");
      }
    }
  }
  if (total != corpus.size()) {
    throw ValidationError(what + ": subsets cover " + std::to_string(total) +
                          " ids but corpus has " + std::to_string(corpus.size()));
  }
  auto index = corpus.id_index();
  for (const auto& id : seen) {
    if (index.find(id) == index.end()) {
      throw ValidationError(what + ": id '" + id + "' is not in the corpus");
    }
  }
}

}  // namespace

void validate_partition(const Corpus& corpus, const SplitSpec& split) {
  check_partition(corpus, {&split.train, &split.validation, &split.test}, "split");
}

void validate_partition(const Corpus& corpus, const FoldPlan& plan) {
  for (std::size_t r = 0; r < plan.held_out.size(); ++r) {
    std::vector<const std::vector<std::string>*> parts;
    for (const auto& fold : plan.held_out[r]) parts.push_back(&fold);
    check_partition(corpus, parts, "fold plan repeat " + std::to_string(r));
  }
}

std::string split_to_json(const SplitSpec& split) {
  json obj;
  obj["seed"] = split.seed;
  obj["fractions"] = split.fractions;
  obj["train"] = split.train;
  obj["validation"] = split.validation;
  obj["test"] = split.test;
  return obj.dump(2) + "\n";
}

SplitSpec split_from_json(const std::string& text) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("split manifest: ") + e.what());
  }
  SplitSpec split;
  try {
    split.seed = obj.at("seed").get<std::uint64_t>();
    auto fr = obj.at("fractions").get<std::vector<double>>();
    if (fr.size() != 3) throw ParseError("split manifest: expected 3 fractions");
    std::copy(fr.begin(), fr.end(), split.fractions.begin());
    split.train = obj.at("train").get<std::vector<std::string>>();
    split.validation = obj.at("validation").get<std::vector<std::string>>();
    split.test = obj.at("test").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("split manifest: ") + e.what());
  }
  return split;
}

void save_split(const SplitSpec& split, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write split manifest: " + path.string());
  out << split_to_json(split);
}

SplitSpec load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open split manifest: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return split_from_json(buf.str());
}

std::string foldplan_to_json(const FoldPlan& plan) {
  json obj;
  obj["seed"] = plan.seed;
  obj["k"] = plan.k;
  obj["repeats"] = plan.repeats;
  json assignments = json::array();
  for (std::size_t r = 0; r < plan.held_out.size(); ++r) {
    for (std::size_t f = 0; f < plan.held_out[r].size(); ++f) {
      json cell;
      cell["repeat"] = r;
      cell["fold"] = f;
      cell["held_out"] = plan.held_out[r][f];
      assignments.push_back(std::move(cell));
    }
  }
  obj["assignments"] = std::move(assignments);
  return obj.dump(2) + "\n";
}

FoldPlan foldplan_from_json(const std::string& text) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("fold plan manifest: ") + e.what());
  }
  FoldPlan plan;
  try {
    plan.seed = obj.at("seed").get<std::uint64_t>();
    plan.k = obj.at("k").get<int>();
    plan.repeats = obj.at("repeats").get<int>();
    plan.held_out.assign(static_cast<std::size_t>(plan.repeats),
                         std::vector<std::vector<std::string>>(static_cast<std::size_t>(plan.k)));
    for (const auto& cell : obj.at("assignments")) {
      auto r = cell.at("repeat").get<std::size_t>();
      auto f = cell.at("fold").get<std::size_t>();
      if (r >= plan.held_out.size() || f >= plan.held_out[r].size()) {
        throw ParseError("fold plan manifest: assignment outside k x repeats grid");
      }
      plan.held_out[r][f] = cell.at("held_out").get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("fold plan manifest: ") + e.what());
  }
  return plan;
}

void save_foldplan(const FoldPlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write fold plan: " + path.string());
  out << foldplan_to_json(plan);
}

FoldPlan load_foldplan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open fold plan: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return foldplan_from_json(buf.str());
}

}  // namespace sdoh
