#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sdoh/dataset.hpp"

namespace sdoh {

struct SplitSpec {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
  std::array<double, 3> fractions{0.6, 0.2, 0.2};
};

struct FoldPlan {
  int k = 10;
  int repeats = 5;
  std::uint64_t seed = 0;
  // held_out[repeat][fold] -> record ids held out for that evaluation
  std::vector<std::vector<std::vector<std::string>>> held_out;
};

// Greedy multilabel iterative stratification into |fractions| subsets:
// repeatedly pick the label with the fewest remaining unassigned examples
// and give each of its examples to the subset with the greatest remaining
// desired count for that label (ties: greatest remaining overall desired
// count, then a seeded draw). Empty-gold records take part through a
// virtual no-label stratum. Returns record indices per subset, each in
// corpus order. Deterministic for a fixed seed.
std::vector<std::vector<std::size_t>> iterative_stratification(
    const Corpus& corpus, const std::vector<double>& fractions, std::uint64_t seed);

// Three-way split as two sequential two-way stratified splits:
// (train+validation) vs test, then train vs validation.
SplitSpec stratified_split(const Corpus& corpus, const std::array<double, 3>& fractions,
                           std::uint64_t seed);

// Each repeat is a k-way stratified split under a repeat-derived seed.
FoldPlan make_fold_plan(const Corpus& corpus, int k, int repeats, std::uint64_t seed);

// ids listed per fold combine to the corpus id set within every repeat
void validate_partition(const Corpus& corpus, const SplitSpec& split);
void validate_partition(const Corpus& corpus, const FoldPlan& plan);

std::string split_to_json(const SplitSpec& split);
SplitSpec split_from_json(const std::string& text);
void save_split(const SplitSpec& split, const std::filesystem::path& path);
SplitSpec load_split(const std::filesystem::path& path);

std::string foldplan_to_json(const FoldPlan& plan);
FoldPlan foldplan_from_json(const std::string& text);
void save_foldplan(const FoldPlan& plan, const std::filesystem::path& path);
FoldPlan load_foldplan(const std::filesystem::path& path);

}  // namespace sdoh
