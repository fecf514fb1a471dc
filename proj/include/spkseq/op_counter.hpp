#pragma once

#include <cstdint>
#include <string>

namespace spkseq {

/// Scalar arithmetic tally for one audited scope.
struct OpCounter {
  std::uint64_t multiplies = 0;
  std::uint64_t adds = 0;
  std::string label;

  OpCounter& operator+=(const OpCounter& other) {
    multiplies += other.multiplies;
    adds += other.adds;
    return *this;
  }
};

/// Installs a per-thread counter that instrumented kernels report into.
/// Scopes nest; the innermost one receives the counts.
class OpCountScope {
 public:
  explicit OpCountScope(OpCounter& counter);
  ~OpCountScope();
  OpCountScope(const OpCountScope&) = delete;
  OpCountScope& operator=(const OpCountScope&) = delete;

 private:
  OpCounter* previous_;
};

void count_multiplies(std::uint64_t n);
void count_adds(std::uint64_t n);
bool op_counting_active();

}  // namespace spkseq
