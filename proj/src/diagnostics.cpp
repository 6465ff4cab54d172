#include "dor/diagnostics.hpp"

#include <array>
#include <atomic>

namespace dor::diag {
namespace {

std::array<std::atomic<std::size_t>, 2> g_counters{};

std::atomic<std::size_t>& slot(Warning w) noexcept {
  return g_counters[static_cast<std::size_t>(w)];
}

}  // namespace

void count(Warning w, std::size_t n) noexcept {
  slot(w).fetch_add(n, std::memory_order_relaxed);
}

std::size_t count_of(Warning w) noexcept {
  return slot(w).load(std::memory_order_relaxed);
}

void reset() noexcept {
  for (auto& c : g_counters) c.store(0, std::memory_order_relaxed);
}

}  // namespace dor::diag
