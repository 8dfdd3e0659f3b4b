#include "sdoh/labels.hpp"

#include <bit>

namespace sdoh {

namespace {
const std::array<std::string, kNumLabels> kLabelNames = {
    "housing", "transportation", "relationship", "parent", "employment", "support",
};
}  // namespace

const std::string& to_string(SdohLabel label) {
  return kLabelNames[static_cast<std::size_t>(label)];
}

std::optional<SdohLabel> label_from_string(std::string_view name) {
  for (int i = 0; i < kNumLabels; ++i) {
    if (kLabelNames[static_cast<std::size_t>(i)] == name) {
      return static_cast<SdohLabel>(i);
    }
  }
  return std::nullopt;
}

int LabelSet::size() const { return std::popcount(mask_); }

std::vector<SdohLabel> LabelSet::labels() const {
  std::vector<SdohLabel> out;
  for (SdohLabel l : kAllLabels) {
    if (contains(l)) out.push_back(l);
  }
  return out;
}

std::vector<std::string> LabelSet::names() const {
  std::vector<std::string> out;
  for (SdohLabel l : labels()) out.push_back(to_string(l));
  return out;
}

}  // namespace sdoh
