#include "spkseq/op_counter.hpp"

namespace spkseq {

namespace {
thread_local OpCounter* g_counter = nullptr;
}

OpCountScope::OpCountScope(OpCounter& counter) : previous_(g_counter) { g_counter = &counter; }
OpCountScope::~OpCountScope() { g_counter = previous_; }

void count_multiplies(std::uint64_t n) {
  if (g_counter) g_counter->multiplies += n;
}

void count_adds(std::uint64_t n) {
  if (g_counter) g_counter->adds += n;
}

bool op_counting_active() { return g_counter != nullptr; }

}  // namespace spkseq
