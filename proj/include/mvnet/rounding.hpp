#pragma once

#include <cmath>
#include <cstddef>

namespace mvnet {

/// Nearest multiple of `m`, ties rounding up.
inline long long round_to_multiple(double x, long long m) {
  return static_cast<long long>(std::floor(x / static_cast<double>(m) + 0.5)) * m;
}

/// Nearest integer, ties rounding up.
inline long long round_half_up(double x) { return static_cast<long long>(std::floor(x + 0.5)); }

} // namespace mvnet
