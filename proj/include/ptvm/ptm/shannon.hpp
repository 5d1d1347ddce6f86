#pragma once

// Shannon's two-cell encoding: 0 -> 10, 1 -> 11. A cell pair starting with 0
// terminates the string, so blank tape decodes to the empty string.

#include <concepts>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ptvm::ptm {

inline void check_bits(std::string_view x) {
  for (char c : x) {
    if (c != '0' && c != '1') {
      throw std::invalid_argument("input must be a binary string, got '" + std::string(x) + "'");
    }
  }
}

inline std::vector<std::uint8_t> shannon_encode(std::string_view x) {
  check_bits(x);
  std::vector<std::uint8_t> out;
  out.reserve(2 * x.size());
  for (char c : x) {
    out.push_back(1);
    out.push_back(c == '1' ? 1 : 0);
  }
  return out;
}

// `cell(i)` returns the bit at cell i (blank cells read as 0).
template <std::invocable<std::size_t> CellFn>
std::string shannon_decode(CellFn&& cell, std::size_t limit = SIZE_MAX / 4) {
  std::string out;
  for (std::size_t k = 0; k < limit; ++k) {
    if (cell(2 * k) == 0) break;
    out.push_back(cell(2 * k + 1) ? '1' : '0');
  }
  return out;
}

inline std::string shannon_decode(const std::vector<std::uint8_t>& cells) {
  return shannon_decode(
      [&](std::size_t i) -> std::uint8_t { return i < cells.size() ? cells[i] : 0; });
}

}  // namespace ptvm::ptm
