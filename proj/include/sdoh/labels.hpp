#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sdoh {

// The six SDoH categories. The enum order fixes one-hot layouts, output
// neuron order and the serialization order of label lists everywhere.
enum class SdohLabel : std::uint8_t {
  housing = 0,
  transportation = 1,
  relationship = 2,
  parent = 3,
  employment = 4,
  support = 5,
};

inline constexpr int kNumLabels = 6;

inline constexpr std::array<SdohLabel, kNumLabels> kAllLabels = {
    SdohLabel::housing,    SdohLabel::transportation, SdohLabel::relationship,
    SdohLabel::parent,     SdohLabel::employment,     SdohLabel::support,
};

const std::string& to_string(SdohLabel label);

// lowercase names only; anything else is not a label
std::optional<SdohLabel> label_from_string(std::string_view name);

// Subset of the six labels. The empty set is the canonical form of
// "no SDoH"; the literal `-` exists only at the prompt/parse boundary.
class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::initializer_list<SdohLabel> labels) {
    for (SdohLabel l : labels) insert(l);
  }

  bool contains(SdohLabel l) const { return (mask_ >> index(l)) & 1u; }
  void insert(SdohLabel l) { mask_ |= static_cast<std::uint8_t>(1u << index(l)); }
  void erase(SdohLabel l) { mask_ &= static_cast<std::uint8_t>(~(1u << index(l))); }

  bool empty() const { return mask_ == 0; }
  bool any() const { return mask_ != 0; }
  int size() const;

  std::vector<SdohLabel> labels() const;       // in enum order
  std::vector<std::string> names() const;      // in enum order

  std::uint8_t mask() const { return mask_; }
  static LabelSet from_mask(std::uint8_t mask) {
    LabelSet s;
    s.mask_ = static_cast<std::uint8_t>(mask & 0x3f);
    return s;
  }

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  static int index(SdohLabel l) { return static_cast<int>(l); }
  std::uint8_t mask_ = 0;
};

}  // namespace sdoh
