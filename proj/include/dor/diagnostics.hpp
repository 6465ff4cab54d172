#pragma once

#include <cstddef>

namespace dor::diag {

// Non-fatal conditions that are repaired in place (clamped) and counted.
enum class Warning {
  DepthClamped,
  LocateClamped,
};

void count(Warning w, std::size_t n = 1) noexcept;
std::size_t count_of(Warning w) noexcept;
void reset() noexcept;

}  // namespace dor::diag
