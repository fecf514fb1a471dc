#include "spkseq/data.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "spkseq/error.hpp"

namespace spkseq::data {

namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
  if (b.size() < off + 4) throw FormatError(path + ": truncated header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace

void SequenceDataset::validate() const {
  if (length == 0 || n_classes == 0) throw FormatError("dataset: zero length or class count");
  if (values.size() != labels.size() * length) throw FormatError("dataset: value count mismatch");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= n_classes) throw FormatError("dataset: label out of range");
  }
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw FormatError("dataset: value outside [0, 1]");
  }
}

SequenceDataset SequenceDataset::head(std::size_t n) const {
  if (n == 0 || n >= size()) return *this;
  SequenceDataset out{length, n_classes, split, {}, {}};
  out.values.assign(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n * length));
  out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

SequenceDataset SequenceDataset::gather(std::span<const std::size_t> indices) const {
  SequenceDataset out{length, n_classes, split, {}, {}};
  out.values.reserve(indices.size() * length);
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    auto s = sequence(i);
    out.values.insert(out.values.end(), s.begin(), s.end());
    out.labels.push_back(labels.at(i));
  }
  return out;
}

SequenceDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_all(images_path);
  const auto lab = read_all(labels_path);
  if (be32(img, 0, images_path) != 2051) throw FormatError(images_path + ": bad IDX image magic");
  if (be32(lab, 0, labels_path) != 2049) throw FormatError(labels_path + ": bad IDX label magic");
  const std::size_t n = be32(img, 4, images_path);
  const std::size_t rows = be32(img, 8, images_path);
  const std::size_t cols = be32(img, 12, images_path);
  const std::size_t n_lab = be32(lab, 4, labels_path);
  if (n != n_lab) throw FormatError("image count " + std::to_string(n) + " != label count " + std::to_string(n_lab));
  if (rows != 28 || cols != 28) throw FormatError(images_path + ": expected 28x28 images");
  const std::size_t len = rows * cols;
  if (img.size() < 16 + n * len) throw FormatError(images_path + ": truncated payload");
  if (lab.size() < 8 + n) throw FormatError(labels_path + ": truncated payload");

  SequenceDataset ds{len, 10, "", {}, {}};
  ds.values.resize(n * len);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n * len; ++i) ds.values[i] = img[16 + i] / 255.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (lab[8 + i] > 9) throw FormatError(labels_path + ": label out of range");
    ds.labels[i] = lab[8 + i];
  }
  return ds;
}

SequenceDataset load_cifar_gray(const std::vector<std::string>& batch_files) {
  constexpr std::size_t kPixels = 1024, kRecord = 1 + 3 * kPixels;
  SequenceDataset ds{kPixels, 10, "", {}, {}};
  for (const auto& path : batch_files) {
    const auto b = read_all(path);
    if (b.size() % kRecord != 0) throw FormatError(path + ": truncated record");
    const std::size_t n = b.size() / kRecord;
    for (std::size_t r = 0; r < n; ++r) {
      const unsigned char* rec = b.data() + r * kRecord;
      if (rec[0] > 9) throw FormatError(path + ": label out of range");
      ds.labels.push_back(rec[0]);
      const unsigned char* red = rec + 1;
      const unsigned char* green = red + kPixels;
      const unsigned char* blue = green + kPixels;
      for (std::size_t p = 0; p < kPixels; ++p) {
        ds.values.push_back((0.299 * red[p] + 0.587 * green[p] + 0.114 * blue[p]) / 255.0);
      }
    }
  }
  return ds;
}

SequenceDataset synth_first_token_recall(std::size_t length, std::size_t n_classes, std::size_t n_samples,
                                         std::uint64_t seed, bool noise) {
  if (length < 2) throw ConfigError("synth_first_token_recall: length must be >= 2");
  if (n_classes < 1) throw ConfigError("synth_first_token_recall: need at least one class");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> label(0, static_cast<int>(n_classes) - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SequenceDataset ds{length, n_classes, "synth", {}, {}};
  ds.values.assign(n_samples * length, 0.0);
  ds.labels.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const int l = label(rng);
    ds.labels[i] = l;
    double* row = ds.values.data() + i * length;
    row[0] = (l + 0.5) / static_cast<double>(n_classes);
    if (noise) {
      for (std::size_t t = 1; t < length; ++t) row[t] = u(rng);
    }
  }
  return ds;
}

std::optional<std::string> data_root_from_env() {
  const char* v = std::getenv("SPKSEQ_DATA");
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

Splits load_mnist_splits(const std::string& root) {
  auto find = [&](const std::string& name) {
    for (const auto& cand : {fs::path(root) / name, fs::path(root) / "mnist" / name, fs::path(root) / "MNIST" / "raw" / name}) {
      if (fs::exists(cand)) return cand.string();
    }
    throw Error("MNIST file " + name + " not found under " + root);
  };
  Splits s{load_mnist_idx(find("train-images-idx3-ubyte"), find("train-labels-idx1-ubyte")),
           load_mnist_idx(find("t10k-images-idx3-ubyte"), find("t10k-labels-idx1-ubyte"))};
  s.train.split = "train";
  s.test.split = "test";
  return s;
}

Splits load_cifar_splits(const std::string& root) {
  fs::path dir = root;
  if (!fs::exists(dir / "test_batch.bin") && fs::exists(dir / "cifar-10-batches-bin" / "test_batch.bin")) {
    dir /= "cifar-10-batches-bin";
  }
  std::vector<std::string> train_files;
  for (int i = 1; i <= 5; ++i) {
    const auto p = dir / ("data_batch_" + std::to_string(i) + ".bin");
    if (!fs::exists(p)) throw Error("CIFAR file " + p.string() + " not found");
    train_files.push_back(p.string());
  }
  const auto test_file = dir / "test_batch.bin";
  if (!fs::exists(test_file)) throw Error("CIFAR file " + test_file.string() + " not found");
  Splits s{load_cifar_gray(train_files), load_cifar_gray({test_file.string()})};
  s.train.split = "train";
  s.test.split = "test";
  return s;
}

}  // namespace spkseq::data
