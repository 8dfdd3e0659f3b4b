#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sdoh {

std::uint64_t fnv1a64(std::string_view s);
std::uint64_t fnv1a64(const void* data, std::size_t n,
                      std::uint64_t basis = 14695981039346656037ULL);

std::uint64_t splitmix64_next(std::uint64_t& state);

// Deterministic PRNG with a fully specified byte-for-byte sequence.
// std engines are portable but the std distributions are not, so this
// class carries its own uniform/normal draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  // [0,1) with 53 bits of precision
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // unbiased draw from [0,n)
  std::uint64_t next_below(std::uint64_t n);

  // standard normal via Box-Muller on explicit uniforms
  double next_normal();

  // Fisher-Yates
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // independent generator derived from this state and a purpose tag
  Rng fork(std::string_view tag) const {
    std::uint64_t s = state_ ^ fnv1a64(tag);
    splitmix64_next(s);
    return Rng(s);
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char delim);
std::string hex64(std::uint64_t v);

// dense row-major matrix of doubles
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

  double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

}  // namespace sdoh
