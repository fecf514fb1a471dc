#pragma once

// Binary checkpoint container.
//
//   "SPKSEQ01"                       8-byte magic
//   u64 digest                       FNV-1a of the config text
//   u32 length, bytes                config text (ModelConfig::canonical)
//   u32 tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u64 dims[rank], f64 payload
//
// All integers and floats are little-endian.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "spkseq/network.hpp"

namespace spkseq::ckpt {

std::uint64_t digest(std::string_view text);

struct Record {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::uint64_t digest = 0;
  std::string config_text;
  std::vector<Record> records;
};

/// Parameters followed by buffers.
Checkpoint capture(const net::Model& model);
void write(const std::string& path, const Checkpoint& ckpt);
Checkpoint read(const std::string& path);

void save(const std::string& path, const net::Model& model);

/// Copies values into an existing model. Throws DigestMismatch when the model
/// was built from a different configuration, FormatError on missing or
/// misshapen tensors.
void restore(net::Model& model, const Checkpoint& ckpt);

/// Rebuilds the model described by the checkpoint and restores its values.
net::Model load(const std::string& path);

}  // namespace spkseq::ckpt
