#pragma once

// Image datasets flattened row-major into one scalar per time step, and a
// synthetic recall task whose label sits only in the first step.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spkseq::data {

struct SequenceDataset {
  std::size_t length = 0;
  std::size_t n_classes = 0;
  std::string split;
  std::vector<double> values;  // size() * length, sample-major
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> sequence(std::size_t i) const { return {values.data() + i * length, length}; }
  /// Throws FormatError if lengths, labels or value range are off.
  void validate() const;
  /// First n samples (all when n is 0 or too large).
  SequenceDataset head(std::size_t n) const;
  /// Samples at the given indices, in order.
  SequenceDataset gather(std::span<const std::size_t> indices) const;
};

SequenceDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);
SequenceDataset load_cifar_gray(const std::vector<std::string>& batch_files);

/// Uniform noise in [0, 1] everywhere except step 0, which holds (label + 0.5) / n_classes.
/// With noise off the other steps are zero.
SequenceDataset synth_first_token_recall(std::size_t length, std::size_t n_classes, std::size_t n_samples,
                                         std::uint64_t seed, bool noise = true);

/// Value of SPKSEQ_DATA, if set and non-empty.
std::optional<std::string> data_root_from_env();

struct Splits {
  SequenceDataset train;
  SequenceDataset test;
};

/// Standard file layout under root: MNIST IDX files (train-images-idx3-ubyte, ...)
/// or CIFAR-10 binary batches (data_batch_1.bin ... test_batch.bin), optionally
/// inside a cifar-10-batches-bin directory. Throws Error when files are missing.
Splits load_mnist_splits(const std::string& root);
Splits load_cifar_splits(const std::string& root);

}  // namespace spkseq::data
