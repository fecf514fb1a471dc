#pragma once

// Step-at-a-time inference. Each SSM channel runs as a recurrence, so the
// state held between steps does not grow with sequence length.

#include <span>
#include <vector>

#include "spkseq/network.hpp"
#include "spkseq/ssm.hpp"

namespace spkseq::stream {

class StreamingClassifier {
 public:
  /// Throws UnsupportedMode for bidirectional models. The model must outlive this object.
  explicit StreamingClassifier(net::Model& model);

  void reset();
  void push(double pixel);
  std::size_t steps() const { return steps_; }
  /// Logits for the prefix pushed so far (mean pooling over those steps).
  std::vector<double> logits() const;

  /// Doubles held between steps: SSM states plus the pooling accumulator.
  std::size_t state_size() const;

 private:
  net::Model& model_;
  std::vector<std::vector<ssm::ChannelScanner>> scanners_;  // [layer][channel]
  std::vector<double> pool_sum_;
  std::size_t steps_ = 0;
};

/// Streams one sequence and returns its logits.
std::vector<double> infer_iterative(net::Model& model, std::span<const double> sequence);

}  // namespace spkseq::stream
